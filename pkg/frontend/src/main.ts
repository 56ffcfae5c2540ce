import { BridgeSession } from "./connect.js";
import { OverlayRenderer } from "./render.js";
import { ConsoleState } from "./state.js";
import { SteerSampler } from "./steer.js";

const canvas = document.getElementById("view") as HTMLCanvasElement;
const hud = document.getElementById("hud") as HTMLDivElement;
const banner = document.getElementById("banner") as HTMLDivElement;
const eventsEl = document.getElementById("events") as HTMLUListElement;

const renderer = new OverlayRenderer(canvas, canvas.clientWidth || 960,
                                     canvas.clientHeight || 600);

function fmt(v: unknown, digits = 3): string {
  return typeof v === "number" ? v.toFixed(digits) : "-";
}

let latest: ConsoleState | null = null;

function onState(state: ConsoleState): void {
  latest = state;
  const m = state.metrics?.data as Record<string, number> | undefined;
  hud.innerHTML = [
    `link: <b>${state.status}</b>`,
    `ε ${fmt(m?.eps, 4)}  η ${fmt(m?.eta, 3)}  δ ${fmt(m?.degen, 4)}`,
    `L_tot ${fmt(m?.l_tot, 1)} ms (slam ${fmt(m?.l_slam, 1)} / comm ${fmt(m?.l_comm, 1)} / viz ${fmt(m?.l_viz, 1)})`,
    `frames ${state.framesSeen}  re-aligns ${state.realignCount}  decode errors ${state.decodeErrors}`,
  ].join("<br>");
  banner.style.display = state.renderingEnabled ? "none" : "block";
  eventsEl.innerHTML = state.events.slice(-8).reverse()
    .map((e) => `<li>[${e.stamp.toFixed(1)}s] ${e.text}</li>`).join("");
}

const url = `ws://${location.hostname || "127.0.0.1"}:${location.port || 8473}/bridge`;
const session = new BridgeSession({ url, onState });
session.connect();

const sampler = new SteerSampler((bytes) => {
  if (!session.send(bytes)) {
    hud.classList.add("dropped");
    setTimeout(() => hud.classList.remove("dropped"), 300);
  }
});
window.addEventListener("keydown", (e) => sampler.keyDown(e.code));
window.addEventListener("keyup", (e) => sampler.keyUp(e.code));
sampler.start();

function frame(): void {
  if (latest?.overlay) {
    renderer.setOverlay(latest.overlay, latest.renderingEnabled);
    latest = { ...latest, overlay: null } as ConsoleState; // draw once per frame
  }
  renderer.render();
  requestAnimationFrame(frame);
}
requestAnimationFrame(frame);
