import { ViewerClient } from "./client.js";
import { attachOrbitDrag, Panel } from "./panel.js";
import type { FrameMessage } from "./protocol.js";

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;

async function drawFrame(frame: FrameMessage): Promise<void> {
  const blob = new Blob([frame.payload.slice()], { type: "image/png" });
  const bitmap = await createImageBitmap(blob);
  if (canvas.width !== frame.width || canvas.height !== frame.height) {
    canvas.width = frame.width;
    canvas.height = frame.height;
  }
  ctx.drawImage(bitmap, 0, 0);
  bitmap.close();
}

const client = new ViewerClient(`ws://${location.host}/session`, {
  onStatus: (connected) => panel.setStatus(connected),
  onHello: (hello, model) => panel.build(hello, model),
  onBanner: (text) => panel.setBanner(text),
  onFrame: drawFrame,
  onFps: (c, s) => panel.setFps(c, s),
});

const panel = new Panel(client);
document.getElementById("app")!.append(panel.root);
attachOrbitDrag(canvas, client);

client.connect();
