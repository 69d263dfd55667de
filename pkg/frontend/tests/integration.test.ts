// Live integration against the robot-side service (spawned as a child
// process): grant/deny flow, 30 Hz command stream, doorway drive, gripper
// close, latency display, and control handover after disconnect.

import { ChildProcess, spawn } from "node:child_process";
import WebSocket from "ws";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { InputRig } from "../src/input.js";
import { bannerModel } from "../src/render.js";
import { StatePushPayload } from "../src/protocol.js";
import { GEOMETRY, SLOT } from "../src/robot.js";
import { ControlSeeker, PilotSession, SocketLike } from "../src/session.js";

let server: ChildProcess;
let url = "";

function connect(): SocketLike {
  const ws = new WebSocket(url);
  ws.binaryType = "arraybuffer";
  return ws as unknown as SocketLike;
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

async function waitFor(cond: () => boolean, timeoutMs: number, what: string): Promise<void> {
  const t0 = Date.now();
  while (!cond()) {
    if (Date.now() - t0 > timeoutMs) {
      throw new Error(`timeout waiting for ${what}`);
    }
    await sleep(20);
  }
}

beforeAll(async () => {
  server = spawn("python3", ["-m", "pilotsim.cli", "serve", "--port", "0"],
                 { cwd: new URL("../..", import.meta.url).pathname });
  url = await new Promise<string>((resolve, reject) => {
    let buf = "";
    const timer = setTimeout(() => reject(new Error("server did not start")), 15000);
    server.stdout!.on("data", (chunk: Buffer) => {
      buf += chunk.toString();
      const m = buf.match(/ws:\/\/[\d.]+:(\d+)\/pilot/);
      if (m) {
        clearTimeout(timer);
        resolve(m[0]);
      }
    });
    server.on("exit", () => reject(new Error("server exited early")));
  });
}, 20000);

afterAll(() => {
  server?.kill();
});

describe("pilot console against the live service", () => {
  it("drives the robot through a doorway and closes a gripper", async () => {
    const rig = new InputRig();
    const pushes: StatePushPayload[] = [];
    const sess = new PilotSession(connect(), {
      role: "pilot",
      pingEveryPushes: 15,
      commandProvider: (simTime) => rig.commandInputs(simTime),
      onStatePush: (p) => pushes.push(p),
    });

    await waitFor(() => sess.state.controlling, 5000, "control grant");
    await waitFor(() => sess.state.mode !== null, 5000, "mode event");

    // doorway: posts at x=1.0, y=+-0.45 (0.9 m gap); body is 0.5 m wide
    rig.keyDown("m"); // operation -> walking
    await waitFor(() => sess.state.mode === "walking", 3000, "walking mode");
    rig.keyDown("1"); // forward pedal down
    const t0 = Date.now();
    await waitFor(() => (sess.state.lastPush?.base[0] ?? 0) > 1.5, 15000, "doorway crossing");
    rig.keyUp("1");
    const elapsedS = (Date.now() - t0) / 1000;

    // every recorded crossing sample stays inside the gap
    for (const p of pushes) {
      if (p.base[0] > 0.7 && p.base[0] < 1.3) {
        expect(Math.abs(p.base[1])).toBeLessThan(0.45 - GEOMETRY.bodyWidth / 2);
      }
    }

    // sustained ~30 Hz command stream while driving
    const rate = sess.commandsSent / elapsedS;
    expect(rate).toBeGreaterThan(25);
    expect(rate).toBeLessThan(35);

    // displayed latency equals the ping measurement within one tick
    await waitFor(() => sess.state.latencyMs !== null, 5000, "a pong");
    const banner = bannerModel(sess.state, sess.holdBanner());
    const shown = parseFloat(banner.text.match(/latency (\d+)/)![1]);
    expect(Math.abs(shown - sess.state.latencyMs!)).toBeLessThanOrEqual(33.4);
    expect(sess.state.latencyMs!).toBeLessThan(200);

    // gripper: open over the target zone, then close on it
    rig.keyDown("m");
    await waitFor(() => sess.state.mode === "operation", 3000, "operation mode");
    rig.keyDown("1");
    await waitFor(
      () => (sess.state.lastPush?.state[SLOT.leftGripper] ?? 0) > 0.11, 5000, "gripper open");
    rig.keyUp("1");
    await waitFor(
      () => (sess.state.lastPush?.state[SLOT.leftGripper] ?? 1) < 0.01, 5000, "gripper closed");

    expect(sess.state.errors).toEqual([]);
    sess.close();
    await sleep(200);
  }, 40000);

  it("denies a second pilot, then hands control over on disconnect", async () => {
    const first = new PilotSession(connect(), { role: "pilot", pingEveryPushes: 0 });
    await waitFor(() => first.state.controlling, 5000, "first grant");

    // a plain second pilot is denied, surfaces observer mode, and still
    // renders the state stream
    const second = new PilotSession(connect(), { role: "pilot", pingEveryPushes: 0 });
    await waitFor(() => second.state.role === "observer", 5000, "busy denial");
    expect(second.state.denyReason).toBe("busy");
    expect(bannerModel(second.state, false).alarm).toBe(true);
    await waitFor(() => second.state.lastPush !== null, 5000, "observer state stream");
    second.close();

    // a waiting pilot (retry loop) gains the token once the holder's tab closes
    const denials: string[] = [];
    const seeker = new ControlSeeker(connect, {
      role: "pilot",
      retryMs: 250,
      pingEveryPushes: 0,
      onUpdate: (st) => {
        if (st.denyReason) denials.push(st.denyReason);
      },
    });
    seeker.start();
    await waitFor(() => denials.includes("busy"), 5000, "seeker denied while busy");
    first.close(); // closing the tab releases control server-side
    await waitFor(() => seeker.session?.state.controlling === true, 6000,
                  "handover to the waiting pilot");
    seeker.stop();
    await sleep(200);
  }, 30000);
});
