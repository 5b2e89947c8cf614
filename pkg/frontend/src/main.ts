// DOM wiring: mouse drag looks around (client-side re-projection of the
// latest panorama), WASD+QE translate via the render service.

import { PanoramaPixels, samplePanorama } from "./geometry.js";
import { Panorama, ViewerState, MoveKey, relativeToPanorama } from "./viewer.js";

const canvas = document.getElementById("view") as HTMLCanvasElement;
const status = document.getElementById("status") as HTMLElement;
const stepInput = document.getElementById("step") as HTMLInputElement;
const ctx = canvas.getContext("2d")!;

let pixels: PanoramaPixels | null = null;
let drawQueued = false;

function setStatus(message: string) {
  status.textContent = message;
}

async function decodePanorama(pano: Panorama): Promise<void> {
  const blob = new Blob([pano.bytes], { type: "image/png" });
  const bitmap = await createImageBitmap(blob);
  const off = document.createElement("canvas");
  off.width = bitmap.width;
  off.height = bitmap.height;
  const octx = off.getContext("2d")!;
  octx.drawImage(bitmap, 0, 0);
  const image = octx.getImageData(0, 0, bitmap.width, bitmap.height);
  pixels = { width: image.width, height: image.height, data: image.data };
  requestDraw();
}

const viewer = new ViewerState({
  baseUrl: "",
  renderWidth: 512,
  onPanorama: (pano) => {
    void decodePanorama(pano);
  },
  onStatus: setStatus,
});

function requestDraw() {
  if (drawQueued) {
    return;
  }
  drawQueued = true;
  requestAnimationFrame(() => {
    drawQueued = false;
    draw();
  });
}

function draw() {
  if (!pixels) {
    return;
  }
  const out = samplePanorama(pixels, relativeToPanorama(viewer), canvas.width, canvas.height, 90);
  ctx.putImageData(new ImageData(out, canvas.width, canvas.height), 0, 0);
}

// --- mouse drag: look around without any server round-trip -----------------

let dragging = false;
let lastX = 0;
let lastY = 0;
const LOOK_GAIN = 0.0045;

canvas.addEventListener("mousedown", (e) => {
  dragging = true;
  lastX = e.clientX;
  lastY = e.clientY;
});
window.addEventListener("mouseup", () => {
  dragging = false;
});
window.addEventListener("mousemove", (e) => {
  if (!dragging) {
    return;
  }
  const dx = e.clientX - lastX;
  const dy = e.clientY - lastY;
  lastX = e.clientX;
  lastY = e.clientY;
  // dragging right pulls the scene left: look toward -x means yaw decreases
  viewer.look(dx * LOOK_GAIN, dy * LOOK_GAIN);
  requestDraw();
});

// --- keyboard: WASD + QE translation ---------------------------------------

const KEYMAP: Record<string, MoveKey> = {
  w: "forward",
  s: "back",
  a: "left",
  d: "right",
  q: "up",
  e: "down",
};

window.addEventListener("keydown", (e) => {
  const key = KEYMAP[e.key.toLowerCase()];
  if (!key) {
    return;
  }
  const step = parseFloat(stepInput.value) || 0;
  setStatus("rendering...");
  void viewer.move(key, step);
});

// --- boot -------------------------------------------------------------------

async function start() {
  setStatus("loading scene metadata...");
  try {
    const meta = await viewer.loadMeta();
    setStatus(`rendering ${meta.splat_count.toLocaleString()} splats...`);
    await viewer.refresh();
  } catch (err) {
    setStatus(`failed to reach the render service: ${String(err)}`);
  }
}

void start();
