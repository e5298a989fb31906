// Control panel model: every slider value the operator can touch, clamped to
// its range, plus the partial set_params payloads each change produces.

import type { HelloMsg, SetParams } from "./protocol.js";

export const EXPR_RANGE = 3.0;
export const JOINT_RANGE = 0.6;
export const DISTANCE_MIN = 0.1;
export const DISTANCE_MAX = 3.0;
export const ELEVATION_LIMIT = 85;
export const RESOLUTIONS = [128, 256, 512];

export interface OrbitState {
  azimuth: number;
  elevation: number;
  distance: number;
}

function clamp(v: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, v));
}

export class PanelModel {
  readonly numJoints: number;
  readonly numExpressions: number;
  expression: number[];
  pose: number[][]; // numJoints rows of [x, y, z] axis-angle radians
  orbit: OrbitState = { azimuth: 0, elevation: 0, distance: 0.55 };
  width: number;
  height: number;

  constructor(numJoints: number, numExpressions: number, width: number, height: number) {
    this.numJoints = numJoints;
    this.numExpressions = numExpressions;
    this.expression = new Array(numExpressions).fill(0);
    this.pose = Array.from({ length: numJoints }, () => [0, 0, 0]);
    this.width = width;
    this.height = height;
  }

  static fromHello(hello: HelloMsg): PanelModel {
    return new PanelModel(hello.num_joints, hello.num_expressions, hello.width, hello.height);
  }

  setExpression(k: number, value: number): SetParams {
    this.expression[k] = clamp(value, -EXPR_RANGE, EXPR_RANGE);
    return { expression: [...this.expression] };
  }

  setJoint(joint: number, axis: number, value: number): SetParams {
    this.pose[joint][axis] = clamp(value, -JOINT_RANGE, JOINT_RANGE);
    return { pose: this.pose.map((row) => [...row]) };
  }

  setOrbit(change: Partial<OrbitState>): SetParams {
    if (change.azimuth !== undefined) {
      // wrap so endless dragging never overflows
      this.orbit.azimuth = ((change.azimuth + 180) % 360 + 360) % 360 - 180;
    }
    if (change.elevation !== undefined) {
      this.orbit.elevation = clamp(change.elevation, -ELEVATION_LIMIT, ELEVATION_LIMIT);
    }
    if (change.distance !== undefined) {
      this.orbit.distance = clamp(change.distance, DISTANCE_MIN, DISTANCE_MAX);
    }
    return { camera: { ...this.orbit } };
  }

  setResolution(width: number, height: number): SetParams {
    this.width = width;
    this.height = height;
    return { width, height };
  }

  fullParams(): SetParams {
    return {
      pose: this.pose.map((row) => [...row]),
      expression: [...this.expression],
      camera: { ...this.orbit },
      width: this.width,
      height: this.height,
    };
  }
}
