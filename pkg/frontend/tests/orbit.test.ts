import { describe, expect, it } from "vitest";

import { lookAt, orbitCamera, orbitEye } from "../src/orbit.js";

// Reference cameras computed with the server's own orbit math; the client
// must reproduce rotation, translation, and intrinsics to float64 precision.
const REFERENCE = [
  {
    case: { target: [0.0, 0.15, 0.02] as [number, number, number], radius: 0.55, az: 0.0, el: 0.0, w: 256, h: 256 },
    fx: 351.6771096901917,
    cx: 128.0,
    cy: 128.0,
    rotation: [1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0],
    translation: [0.0, 0.15, 0.5700000000000001],
  },
  {
    case: { target: [0.0, 0.15, 0.02] as [number, number, number], radius: 0.55, az: 35.0, el: 12.0, w: 256, h: 256 },
    fx: 351.6771096901917,
    cx: 128.0,
    cy: 128.0,
    rotation: [
      0.8191520442889918, 0.0, -0.573576436351046,
      0.1192532466949709, -0.9781476007338057, 0.17031128656494834,
      -0.5610424150542221, -0.20791169081775931, -0.8012516067574694,
    ],
    translation: [0.011471528727020897, 0.14331591437877186, 0.5972117857578133],
  },
  {
    case: { target: [0.01, 0.2, -0.03] as [number, number, number], radius: 0.8, az: -120.0, el: -25.0, w: 320, h: 240 },
    fx: 439.5963871127396,
    cx: 160.0,
    cy: 120.0,
    rotation: [
      -0.49999999999999983, 0.0, 0.8660254037844387,
      0.36599815077066683, -0.9063077870366498, 0.21130913087034964,
      0.7848855672213958, 0.42261826174069944, 0.45315389351832475,
    ],
    translation: [0.030980762113533178, 0.18394084982573375, 0.7212221087851958],
  },
  {
    case: { target: [0.0, 0.0, 0.0] as [number, number, number], radius: 1.0, az: 180.0, el: 45.0, w: 64, h: 128 },
    fx: 87.91927742254792,
    cx: 32.0,
    cy: 64.0,
    rotation: [
      -1.0, 0.0, -1.2246467991473532e-16,
      8.659560562354932e-17, -0.7071067811865476, -0.7071067811865475,
      -8.659560562354934e-17, -0.7071067811865475, 0.7071067811865476,
    ],
    translation: [0.0, 0.0, 1.0],
  },
];

describe("orbit camera", () => {
  it("matches the server camera on reference poses", () => {
    for (const ref of REFERENCE) {
      const { target, radius, az, el, w, h } = ref.case;
      const cam = orbitCamera(target, { azimuth: az, elevation: el, distance: radius }, w, h);
      expect(cam.fx).toBeCloseTo(ref.fx, 10);
      expect(cam.fy).toBeCloseTo(ref.fx, 10);
      expect(cam.cx).toBe(ref.cx);
      expect(cam.cy).toBe(ref.cy);
      for (let i = 0; i < 9; i++) {
        expect(cam.rotation[i]).toBeCloseTo(ref.rotation[i], 12);
      }
      for (let i = 0; i < 3; i++) {
        expect(cam.translation[i]).toBeCloseTo(ref.translation[i], 12);
      }
    }
  });

  it("keeps the rotation orthonormal and maps the target onto the axis", () => {
    const target: [number, number, number] = [0.04, 0.18, -0.01];
    const pose = { azimuth: 72.5, elevation: -31.0, distance: 0.9 };
    const cam = orbitCamera(target, pose, 256, 256);
    const r = cam.rotation;
    for (let i = 0; i < 3; i++) {
      for (let j = 0; j < 3; j++) {
        const dot = r[3 * i] * r[3 * j] + r[3 * i + 1] * r[3 * j + 1] + r[3 * i + 2] * r[3 * j + 2];
        expect(dot).toBeCloseTo(i === j ? 1 : 0, 12);
      }
    }
    // target must land on the optical axis at depth = distance
    const camSpace = [0, 1, 2].map(
      (i) => r[3 * i] * target[0] + r[3 * i + 1] * target[1] + r[3 * i + 2] * target[2] + cam.translation[i],
    );
    expect(camSpace[0]).toBeCloseTo(0, 12);
    expect(camSpace[1]).toBeCloseTo(0, 12);
    expect(camSpace[2]).toBeCloseTo(pose.distance, 12);
  });

  it("places the eye on the sphere with azimuth around y", () => {
    const eye = orbitEye([0, 0, 0], { azimuth: 90, elevation: 0, distance: 2 });
    expect(eye[0]).toBeCloseTo(2, 12);
    expect(eye[1]).toBeCloseTo(0, 12);
    expect(eye[2]).toBeCloseTo(0, 12);
  });

  it("refuses degenerate poses like the server does", () => {
    expect(() => orbitCamera([0, 0, 0], { azimuth: 0, elevation: 89.5, distance: 1 }, 64, 64)).toThrow();
    expect(() => lookAt([0, 0, 0], [0, 0, 0])).toThrow();
    expect(() => lookAt([0, 1, 0], [0, 0, 0])).toThrow(/parallel/);
  });
});
