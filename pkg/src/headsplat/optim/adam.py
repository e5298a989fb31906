"""Minimal Adam optimizer with explicit state, for reproducible training."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import torch

logger = logging.getLogger(__name__)

BETAS = (0.9, 0.999)
EPS = 1e-8


@dataclass
class AdamState:
    m: torch.Tensor
    v: torch.Tensor
    step: int = 0

    @classmethod
    def like(cls, param: torch.Tensor) -> "AdamState":
        return cls(m=torch.zeros_like(param), v=torch.zeros_like(param))


def adam_step(
    param: torch.Tensor,
    grad: torch.Tensor,
    state: AdamState,
    lr: float,
    betas: tuple[float, float] = BETAS,
    eps: float = EPS,
) -> None:
    """One in-place update of `param` from `grad`, advancing `state`."""
    state.step += 1
    state.m.mul_(betas[0]).add_(grad, alpha=1.0 - betas[0])
    state.v.mul_(betas[1]).addcmul_(grad, grad, value=1.0 - betas[1])
    bias1 = 1.0 - betas[0] ** state.step
    bias2 = 1.0 - betas[1] ** state.step
    denom = (state.v.sqrt() / bias2**0.5).add_(eps)
    param.data.addcdiv_(state.m, denom, value=-lr / bias1)


@dataclass
class ParamGroup:
    name: str
    param: torch.Tensor
    lr: float
    state: AdamState = field(init=False)

    def __post_init__(self) -> None:
        self.state = AdamState.like(self.param)


class Adam:
    """Tracks moment state for a set of named parameter groups."""

    def __init__(self, groups: list[ParamGroup], betas: tuple[float, float] = BETAS, eps: float = EPS):
        names = [g.name for g in groups]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate group names: {names}")
        self.groups = groups
        self.betas = betas
        self.eps = eps

    def step(self) -> None:
        for g in self.groups:
            if g.param.grad is None:
                continue
            adam_step(g.param, g.param.grad, g.state, g.lr, self.betas, self.eps)

    def zero_grad(self) -> None:
        for g in self.groups:
            g.param.grad = None

    def learning_rates(self) -> dict[str, float]:
        return {g.name: g.lr for g in self.groups}
