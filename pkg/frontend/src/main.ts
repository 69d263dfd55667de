// Browser entry: wire the input rig, session, and canvas together.

import { InputRig } from "./input.js";
import { drawScene } from "./render.js";
import { ControlSeeker, SocketLike } from "./session.js";

function connectSocket(url: string): SocketLike {
  const ws = new WebSocket(url);
  ws.binaryType = "arraybuffer";
  return ws as unknown as SocketLike;
}

function main(): void {
  const canvas = document.getElementById("view") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  const urlInput = document.getElementById("url") as HTMLInputElement;
  const connectBtn = document.getElementById("connect") as HTMLButtonElement;
  const releaseBtn = document.getElementById("release") as HTMLButtonElement;

  const rig = new InputRig();
  rig.attach(canvas);

  // on-screen pedal buttons (hold to press)
  for (let i = 0; i < 4; i++) {
    const btn = document.getElementById(`pedal${i + 1}`) as HTMLButtonElement;
    btn.addEventListener("mousedown", () => rig.setPedal(i, 1));
    btn.addEventListener("mouseup", () => rig.setPedal(i, 0));
    btn.addEventListener("mouseleave", () => rig.setPedal(i, 0));
  }

  let seeker: ControlSeeker | null = null;

  connectBtn.addEventListener("click", () => {
    seeker?.stop();
    seeker = new ControlSeeker(() => connectSocket(urlInput.value), {
      role: "pilot",
      commandProvider: (simTime) => rig.commandInputs(simTime),
    });
    seeker.start();
  });

  releaseBtn.addEventListener("click", () => seeker?.session?.release());

  function frame(): void {
    const sess = seeker?.session;
    if (sess) {
      drawScene(ctx, canvas.width, canvas.height, sess.state, sess.holdBanner());
    }
    requestAnimationFrame(frame);
  }
  requestAnimationFrame(frame);
}

window.addEventListener("DOMContentLoaded", main);
