// Client-side copy of the server's orbit camera so the panel can predict
// framing without a round trip. Conventions: pinhole, x right, y down,
// z forward; azimuth 0 / elevation 0 is frontal, azimuth turns around the
// world y axis, positive elevation raises the camera; fov 40 degrees over
// the image width.

export const DEFAULT_FOV_DEG = 40.0;

export interface OrbitPose {
  azimuth: number; // degrees
  elevation: number; // degrees
  distance: number;
}

export interface CameraMatrix {
  rotation: number[]; // row-major 3x3, world -> camera
  translation: number[]; // length 3
  fx: number;
  fy: number;
  cx: number;
  cy: number;
}

type Vec3 = [number, number, number];

function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

function norm(a: Vec3): number {
  return Math.hypot(a[0], a[1], a[2]);
}

function scale(a: Vec3, s: number): Vec3 {
  return [a[0] * s, a[1] * s, a[2] * s];
}

export function orbitEye(target: Vec3, pose: OrbitPose): Vec3 {
  const az = (pose.azimuth * Math.PI) / 180;
  const el = (pose.elevation * Math.PI) / 180;
  return [
    target[0] + pose.distance * Math.sin(az) * Math.cos(el),
    target[1] + pose.distance * Math.sin(el),
    target[2] + pose.distance * Math.cos(az) * Math.cos(el),
  ];
}

export function lookAt(eye: Vec3, target: Vec3): { rotation: number[]; translation: number[] } {
  const up: Vec3 = [0, 1, 0];
  let forward = sub(target, eye);
  const f = norm(forward);
  if (f < 1e-12) {
    throw new Error("orbit: eye and target coincide");
  }
  forward = scale(forward, 1 / f);
  let right = cross(forward, up);
  const r = norm(right);
  if (r < 1e-9) {
    throw new Error("orbit: view direction parallel to up");
  }
  right = scale(right, 1 / r);
  const down = cross(forward, right);
  const rot = [...right, ...down, ...forward];
  const translation = [
    -(rot[0] * eye[0] + rot[1] * eye[1] + rot[2] * eye[2]),
    -(rot[3] * eye[0] + rot[4] * eye[1] + rot[5] * eye[2]),
    -(rot[6] * eye[0] + rot[7] * eye[1] + rot[8] * eye[2]),
  ];
  return { rotation: rot, translation };
}

export function orbitCamera(
  target: Vec3,
  pose: OrbitPose,
  width: number,
  height: number,
  fovDeg: number = DEFAULT_FOV_DEG,
): CameraMatrix {
  if (Math.abs(pose.elevation) >= 89) {
    throw new Error("orbit: elevation too close to the pole");
  }
  const eye = orbitEye(target, pose);
  const { rotation, translation } = lookAt(eye, target);
  const f = (0.5 * width) / Math.tan((fovDeg * Math.PI) / 360);
  return { rotation, translation, fx: f, fy: f, cx: width / 2, cy: height / 2 };
}
