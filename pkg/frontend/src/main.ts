/** Browser entry: canvas, HUD, isovalue slider, orbit drag/wheel. */

import { InputController, ViewerClient } from "./client.js";
import { defaultOrbit } from "./orbit.js";
import type { Frame } from "./protocol.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

const canvas = el<HTMLCanvasElement>("view");
const ctx = canvas.getContext("2d")!;
const hudText = el<HTMLSpanElement>("hud");
const banner = el<HTMLDivElement>("banner");
const slider = el<HTMLInputElement>("iso");
const isoLabel = el<HTMLSpanElement>("iso-label");

const url = `ws://${location.host}/ws`;
let input: InputController | null = null;

function blit(frame: Frame): void {
  if (canvas.width !== frame.width || canvas.height !== frame.height) {
    canvas.width = frame.width;
    canvas.height = frame.height;
  }
  const img = new ImageData(new Uint8ClampedArray(frame.rgba), frame.width, frame.height);
  ctx.putImageData(img, 0, 0);
  const hud = client.state.hud!;
  hudText.textContent = hud.complete
    ? `pass ${hud.passIndex} | complete`
    : `pass ${hud.passIndex} | ${(hud.completeness * 100).toFixed(1)}% | ${hud.activeRays} rays active`;
}

const client = new ViewerClient({
  url,
  wsFactory: (u) => new WebSocket(u) as unknown as import("./client.js").WebSocketLike,
  onFrame: blit,
  onInfo: (info) => {
    const [lo, hi] = info.value_range;
    slider.min = String(lo);
    slider.max = String(hi);
    slider.step = String((hi - lo) / 500);
    const iso = lo + 0.5 * (hi - lo);
    slider.value = String(iso);
    isoLabel.textContent = iso.toFixed(3);
    input = new InputController(client, defaultOrbit(info.dims), iso, {
      width: 640,
      height: 480,
    });
    input.sendImmediately();
  },
  onServerError: (code, reason) => {
    banner.textContent = `server error (${code}): ${reason}`;
    banner.style.display = "block";
  },
  onStatus: (status, attempt) => {
    if (status === "open") {
      banner.style.display = "none";
    } else if (status === "retrying") {
      banner.textContent = `connection lost, retrying (attempt ${attempt})...`;
      banner.style.display = "block";
    }
  },
});

let dragging = false;
let lastX = 0;
let lastY = 0;
canvas.addEventListener("pointerdown", (ev) => {
  dragging = true;
  lastX = ev.clientX;
  lastY = ev.clientY;
  canvas.setPointerCapture(ev.pointerId);
});
canvas.addEventListener("pointermove", (ev) => {
  if (!dragging || !input) return;
  input.drag(ev.clientX - lastX, ev.clientY - lastY);
  lastX = ev.clientX;
  lastY = ev.clientY;
});
canvas.addEventListener("pointerup", () => {
  dragging = false;
});
canvas.addEventListener(
  "wheel",
  (ev) => {
    ev.preventDefault();
    input?.wheel(ev.deltaY);
  },
  { passive: false },
);
slider.addEventListener("input", () => {
  const v = Number(slider.value);
  isoLabel.textContent = v.toFixed(3);
  input?.setIso(v);
});

client.connect();
