// Input rig and render-model behavior (pure logic; no DOM needed).

import { describe, expect, it } from "vitest";
import { InputRig, widgetQuaternion } from "../src/input.js";
import { bannerModel } from "../src/render.js";
import { GEOMETRY, SLOT, armSegments, baseFootprint } from "../src/robot.js";
import { UiSessionState } from "../src/session.js";

function freshUi(): UiSessionState {
  return {
    connection: "online",
    role: "pilot",
    controlling: true,
    denyReason: null,
    latencyMs: 42,
    mode: "operation",
    lastPush: null,
    lastPushAtMs: 0,
    errors: [],
  };
}

describe("input rig", () => {
  it("maps pedal keys to held values", () => {
    const rig = new InputRig();
    rig.keyDown("1");
    rig.keyDown("3");
    expect(rig.pedals).toEqual([1, 0, 1, 0]);
    rig.keyUp("1");
    expect(rig.pedals).toEqual([0, 0, 1, 0]);
  });

  it("emits bound key events exactly once", () => {
    const rig = new InputRig();
    rig.keyDown("m");
    rig.keyDown("c");
    const first = rig.commandInputs(0);
    expect(first.keys).toEqual(["mode_toggle", "clutch_left"]);
    const second = rig.commandInputs(0.033);
    expect(second.keys).toEqual([]);
  });

  it("drag moves the handle planar position", () => {
    const rig = new InputRig();
    rig.mouseDown(100, 100, false);
    rig.mouseMove(150, 120);
    rig.mouseUp();
    expect(rig.widget.x).toBeCloseTo(50 * rig.dragScale);
    expect(rig.widget.y).toBeCloseTo(20 * rig.dragScale);
    expect(rig.widget.rotX).toBe(0);
  });

  it("shift-drag rotates instead", () => {
    const rig = new InputRig();
    rig.mouseDown(0, 0, true);
    rig.mouseMove(10, -5);
    expect(rig.widget.rotY).toBeCloseTo(10 * rig.rotScale);
    expect(rig.widget.rotX).toBeCloseTo(-5 * rig.rotScale);
    expect(rig.widget.x).toBe(0);
  });

  it("wheel changes depth and activates the handle", () => {
    const rig = new InputRig();
    expect(rig.commandInputs(0).left).toBeUndefined();
    rig.wheel(120);
    const cmd = rig.commandInputs(0.1);
    expect(cmd.left).toBeDefined();
    expect(cmd.left!.pose[6]).toBeCloseTo(0.5 + rig.wheelScale);
    expect(cmd.left!.ambiguity).toBe(false);
    expect(cmd.left!.rms).toBe(0);
  });

  it("synthesizes a unit quaternion with w >= 0", () => {
    const q = widgetQuaternion({ x: 0, y: 0, z: 0, rotX: 2.9, rotY: -1.2, rotZ: 0.7 });
    const norm = Math.hypot(...q);
    expect(norm).toBeCloseTo(1, 12);
    expect(q[0]).toBeGreaterThanOrEqual(0);
  });

  it("external estimates override the widget surrogate", () => {
    const rig = new InputRig();
    rig.wheel(120); // widget active
    rig.externalLeft = {
      pose: [1, 0, 0, 0, 0.3, 0.1, 0.7], rms: 0.4, n_tags: 7,
      ambiguity: false, converged: true, timestamp: 2.5,
    };
    const cmd = rig.commandInputs(3.0);
    expect(cmd.left!.pose[4]).toBe(0.3);
    expect(cmd.left!.n_tags).toBe(7);
  });
});

describe("render model", () => {
  it("straight arms reach l1+l2 forward of the shoulder", () => {
    const state = new Array(18).fill(0);
    const arm = armSegments(state, "left");
    expect(arm.shoulder).toEqual([0, GEOMETRY.shoulderOffset]);
    expect(arm.ee[0]).toBeCloseTo(GEOMETRY.l1 + GEOMETRY.l2);
    expect(arm.ee[1]).toBeCloseTo(GEOMETRY.shoulderOffset);
  });

  it("right-angle elbow puts the end effector at (l1, l2)", () => {
    const state = new Array(18).fill(0);
    state[SLOT.rightElbow] = Math.PI / 2;
    const arm = armSegments(state, "right");
    expect(arm.ee[0]).toBeCloseTo(GEOMETRY.l1);
    expect(arm.ee[1]).toBeCloseTo(-GEOMETRY.shoulderOffset + GEOMETRY.l2);
  });

  it("base footprint rotates with heading", () => {
    const square = baseFootprint([0, 0, Math.PI / 2]);
    // front-right corner now points along +y
    expect(square[0][0]).toBeCloseTo(-GEOMETRY.bodyWidth / 2);
    expect(square[0][1]).toBeCloseTo(GEOMETRY.bodyLength / 2);
  });

  it("banner shows mode and latency when healthy", () => {
    const m = bannerModel(freshUi(), false);
    expect(m.alarm).toBe(false);
    expect(m.text).toContain("OPERATION");
    expect(m.text).toContain("42");
  });

  it("banner goes red on hold-on-silence", () => {
    const m = bannerModel(freshUi(), true);
    expect(m.alarm).toBe(true);
    expect(m.text).toContain("HOLD");
  });

  it("banner goes red when denied (observer mode)", () => {
    const ui = freshUi();
    ui.role = "observer";
    ui.denyReason = "busy";
    const m = bannerModel(ui, false);
    expect(m.alarm).toBe(true);
    expect(m.text).toContain("OBSERVER");
  });

  it("banner reflects only acknowledged mode events", () => {
    const ui = freshUi();
    ui.mode = null; // nothing acknowledged yet
    const m = bannerModel(ui, false);
    expect(m.text).toContain("?");
  });
});
