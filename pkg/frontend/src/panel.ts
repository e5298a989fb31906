// DOM control panel: sliders for every expression coefficient and joint
// angle, orbit inputs, resolution picker, status and fps readouts. All
// logic lives in PanelModel / ViewerClient; this file only builds elements
// and forwards events.

import type { ViewerClient } from "./client.js";
import type { HelloMsg } from "./protocol.js";
import { EXPR_RANGE, JOINT_RANGE, DISTANCE_MIN, DISTANCE_MAX, ELEVATION_LIMIT, RESOLUTIONS, type PanelModel } from "./state.js";

const AXIS_NAMES = ["x", "y", "z"];

function sliderRow(
  label: string,
  min: number,
  max: number,
  value: number,
  onInput: (v: number) => void,
): HTMLElement {
  const row = document.createElement("label");
  row.className = "slider-row";
  const name = document.createElement("span");
  name.textContent = label;
  const input = document.createElement("input");
  input.type = "range";
  input.min = String(min);
  input.max = String(max);
  input.step = "0.01";
  input.value = String(value);
  const readout = document.createElement("output");
  readout.textContent = value.toFixed(2);
  input.addEventListener("input", () => {
    const v = Number(input.value);
    readout.textContent = v.toFixed(2);
    onInput(v);
  });
  row.append(name, input, readout);
  return row;
}

export class Panel {
  readonly root: HTMLElement;
  private readonly statusEl: HTMLElement;
  private readonly fpsEl: HTMLElement;
  private readonly bannerEl: HTMLElement;
  private readonly controlsEl: HTMLElement;

  constructor(private readonly client: ViewerClient) {
    this.root = document.createElement("aside");
    this.root.id = "panel";
    this.statusEl = document.createElement("div");
    this.statusEl.className = "status offline";
    this.statusEl.textContent = "connecting";
    this.fpsEl = document.createElement("div");
    this.fpsEl.className = "fps";
    this.bannerEl = document.createElement("div");
    this.bannerEl.className = "banner";
    this.bannerEl.hidden = true;
    this.controlsEl = document.createElement("div");
    this.controlsEl.className = "controls";
    this.root.append(this.statusEl, this.fpsEl, this.bannerEl, this.controlsEl);
  }

  setStatus(connected: boolean): void {
    this.statusEl.textContent = connected ? "connected" : "disconnected, retrying";
    this.statusEl.className = connected ? "status online" : "status offline";
    this.controlsEl.querySelectorAll("input, select").forEach((el) => {
      (el as HTMLInputElement).disabled = !connected;
    });
  }

  setFps(client: number, server: number): void {
    this.fpsEl.textContent = `fps ${client.toFixed(1)} (server ${server.toFixed(1)})`;
  }

  setBanner(text: string | null): void {
    this.bannerEl.hidden = text === null;
    this.bannerEl.textContent = text ?? "";
  }

  build(hello: HelloMsg, model: PanelModel): void {
    this.controlsEl.replaceChildren();

    const exprSection = document.createElement("section");
    exprSection.append(Object.assign(document.createElement("h2"), { textContent: "expression" }));
    for (let k = 0; k < hello.num_expressions; k++) {
      exprSection.append(
        sliderRow(`e${k}`, -EXPR_RANGE, EXPR_RANGE, model.expression[k], (v) => {
          this.client.queue(model.setExpression(k, v));
        }),
      );
    }

    const poseSection = document.createElement("section");
    poseSection.append(Object.assign(document.createElement("h2"), { textContent: "joints (rad)" }));
    for (let j = 0; j < hello.num_joints; j++) {
      for (let a = 0; a < 3; a++) {
        poseSection.append(
          sliderRow(`j${j}.${AXIS_NAMES[a]}`, -JOINT_RANGE, JOINT_RANGE, model.pose[j][a], (v) => {
            this.client.queue(model.setJoint(j, a, v));
          }),
        );
      }
    }

    const camSection = document.createElement("section");
    camSection.append(Object.assign(document.createElement("h2"), { textContent: "camera" }));
    camSection.append(
      sliderRow("azimuth", -180, 180, model.orbit.azimuth, (v) => {
        this.client.queue(model.setOrbit({ azimuth: v }));
      }),
      sliderRow("elevation", -ELEVATION_LIMIT, ELEVATION_LIMIT, model.orbit.elevation, (v) => {
        this.client.queue(model.setOrbit({ elevation: v }));
      }),
      sliderRow("distance", DISTANCE_MIN, DISTANCE_MAX, model.orbit.distance, (v) => {
        this.client.queue(model.setOrbit({ distance: v }));
      }),
    );

    const resSection = document.createElement("section");
    resSection.append(Object.assign(document.createElement("h2"), { textContent: "resolution" }));
    const select = document.createElement("select");
    for (const side of RESOLUTIONS) {
      const opt = document.createElement("option");
      opt.value = String(side);
      opt.textContent = `${side} x ${side}`;
      opt.selected = side === model.width;
      select.append(opt);
    }
    select.addEventListener("change", () => {
      const side = Number(select.value);
      this.client.queue(model.setResolution(side, side));
    });
    resSection.append(select);

    this.controlsEl.append(exprSection, poseSection, camSection, resSection);
  }
}

// drag to orbit, wheel to zoom, mirroring the slider state
export function attachOrbitDrag(canvas: HTMLCanvasElement, client: ViewerClient): void {
  let dragging = false;
  let lastX = 0;
  let lastY = 0;
  canvas.addEventListener("pointerdown", (e) => {
    dragging = true;
    lastX = e.clientX;
    lastY = e.clientY;
    canvas.setPointerCapture(e.pointerId);
  });
  canvas.addEventListener("pointermove", (e) => {
    if (!dragging || client.model === null) {
      return;
    }
    const orbit = client.model.orbit;
    client.queue(
      client.model.setOrbit({
        azimuth: orbit.azimuth - (e.clientX - lastX) * 0.4,
        elevation: orbit.elevation + (e.clientY - lastY) * 0.4,
      }),
    );
    lastX = e.clientX;
    lastY = e.clientY;
  });
  canvas.addEventListener("pointerup", () => {
    dragging = false;
  });
  canvas.addEventListener("wheel", (e) => {
    if (client.model === null) {
      return;
    }
    e.preventDefault();
    const factor = Math.exp(e.deltaY * 0.001);
    client.queue(client.model.setOrbit({ distance: client.model.orbit.distance * factor }));
  });
}
