import numpy as np
import pytest
import torch

from headsplat.blockhead import generate_blockhead
from headsplat.morphable import DTYPE, TemplateModel


def make_template(
    vertices,
    faces,
    joint_positions,
    joint_parents,
    skin_weights,
    num_expressions: int = 1,
    region_mask=None,
) -> TemplateModel:
    """Hand-built template with zero bases, for targeted geometry tests."""
    verts = torch.as_tensor(np.asarray(vertices, dtype=np.float64))
    faces_t = torch.as_tensor(np.asarray(faces, dtype=np.int64))
    joints = torch.as_tensor(np.asarray(joint_positions, dtype=np.float64))
    parents = torch.as_tensor(np.asarray(joint_parents, dtype=np.int64))
    weights = torch.as_tensor(np.asarray(skin_weights, dtype=np.float64))
    v, j, f = verts.shape[0], joints.shape[0], faces_t.shape[0]
    mask = torch.ones(f, dtype=torch.bool) if region_mask is None else torch.as_tensor(region_mask)
    model = TemplateModel(
        vertices=verts,
        faces=faces_t,
        joint_positions=joints,
        joint_parents=parents,
        skin_weights=weights,
        expr_basis=torch.zeros(v, 3, num_expressions, dtype=DTYPE),
        pose_basis=torch.zeros(v, 3, 9 * j, dtype=DTYPE),
        corrective_expr_basis=torch.zeros(v, 3, num_expressions, dtype=DTYPE),
        corrective_pose_basis=torch.zeros(v, 3, 9 * j, dtype=DTYPE),
        region_mask=mask,
        name="test",
    )
    model.validate()
    return model


@pytest.fixture(scope="session")
def blockhead() -> TemplateModel:
    return generate_blockhead(seed=0)


@pytest.fixture
def single_joint() -> TemplateModel:
    # tetrahedron, one root joint at the origin, fully rigid
    verts = [[0.2, 0.0, 0.0], [0.0, 0.3, 0.0], [0.0, 0.0, 0.4], [0.1, 0.1, 0.1]]
    faces = [[0, 1, 2], [0, 3, 1], [1, 3, 2], [0, 2, 3]]
    return make_template(verts, faces, [[0.0, 0.0, 0.0]], [-1], [[1.0]] * 4)


@pytest.fixture
def two_joint() -> TemplateModel:
    # both joints at the origin so blending compares pure rotations
    verts = [[0.2, 0.0, 0.0], [0.0, 0.3, 0.0], [0.0, 0.0, 0.4], [0.1, 0.1, 0.1]]
    faces = [[0, 1, 2], [0, 3, 1], [1, 3, 2], [0, 2, 3]]
    weights = [[0.5, 0.5]] * 4
    return make_template(verts, faces, [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]], [-1, 0], weights)


@pytest.fixture
def flat_pair() -> TemplateModel:
    # two disjoint triangles with areas 0.5 and 1.5 (pick ratio 1:3)
    verts = [
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [2.0, 0.0, 0.0],
        [3.0, 0.0, 0.0],
        [2.0, 3.0, 0.0],
    ]
    faces = [[0, 1, 2], [3, 4, 5]]
    return make_template(verts, faces, [[0.0, 0.0, 0.0]], [-1], [[1.0]] * 6)
