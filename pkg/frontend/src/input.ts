// Operator input: keyboard shortcuts, pedal keys, and the mouse 6-DoF widget
// standing in for the physical tracked handle.
//
// Pedals are held keys (1..4) or on-screen buttons; the handle surrogate maps
// drag to planar translation, wheel to depth, and shift-drag to rotation. The
// synthesized hand estimates always report zero reprojection error and no
// ambiguity, exactly like a perfectly tracked handle.

import { CommandPayload, HandEstimate } from "./protocol.js";

export const KEY_BINDINGS: Record<string, string> = {
  m: "mode_toggle",
  q: "lock_left",
  e: "lock_right",
  c: "clutch_left",
  v: "clutch_right",
  x: "arm_reset",
};

export const PEDAL_KEYS = ["1", "2", "3", "4"];

export interface WidgetPose {
  x: number;       // m, planar right (+) in camera frame
  y: number;       // m, planar down (+)
  z: number;       // m, depth
  rotX: number;    // rad
  rotY: number;
  rotZ: number;
}

// z-y-x Euler composition, matching quaternion (w, x, y, z) with w >= 0.
export function widgetQuaternion(p: WidgetPose): [number, number, number, number] {
  const cz = Math.cos(p.rotZ / 2), sz = Math.sin(p.rotZ / 2);
  const cy = Math.cos(p.rotY / 2), sy = Math.sin(p.rotY / 2);
  const cx = Math.cos(p.rotX / 2), sx = Math.sin(p.rotX / 2);
  let w = cz * cy * cx + sz * sy * sx;
  let x = cz * cy * sx - sz * sy * cx;
  let y = cz * sy * cx + sz * cy * sx;
  let z = sz * cy * cx - cz * sy * sx;
  if (w < 0) {
    w = -w; x = -x; y = -y; z = -z;
  }
  return [w, x, y, z];
}

export class InputRig {
  pedals: [number, number, number, number] = [0, 0, 0, 0];
  widget: WidgetPose = { x: 0, y: 0, z: 0.5, rotX: 0, rotY: 0, rotZ: 0 };
  handleActive = false;   // widget streams estimates only after first grab
  // external tracker mode: when set, this estimate is sent instead of the
  // widget surrogate (e.g. a local tag-tracker process feeding the page)
  externalLeft: HandEstimate | null = null;
  private pendingKeys: string[] = [];
  private dragging = false;
  private rotating = false;
  private lastMouse: [number, number] | null = null;

  // m of handle travel per pixel of drag / per wheel notch
  dragScale = 0.0012;
  wheelScale = 0.01;
  rotScale = 0.01;

  keyDown(key: string): void {
    const bound = KEY_BINDINGS[key.toLowerCase()];
    if (bound) {
      this.pendingKeys.push(bound);
      return;
    }
    const pedal = PEDAL_KEYS.indexOf(key);
    if (pedal >= 0) {
      this.pedals[pedal] = 1;
    }
  }

  keyUp(key: string): void {
    const pedal = PEDAL_KEYS.indexOf(key);
    if (pedal >= 0) {
      this.pedals[pedal] = 0;
    }
  }

  setPedal(index: number, value: number): void {
    this.pedals[index] = Math.min(1, Math.max(0, value));
  }

  mouseDown(px: number, py: number, shift: boolean): void {
    this.dragging = true;
    this.rotating = shift;
    this.lastMouse = [px, py];
    this.handleActive = true;
  }

  mouseMove(px: number, py: number): void {
    if (!this.dragging || !this.lastMouse) return;
    const dx = px - this.lastMouse[0];
    const dy = py - this.lastMouse[1];
    this.lastMouse = [px, py];
    if (this.rotating) {
      this.widget.rotY += dx * this.rotScale;
      this.widget.rotX += dy * this.rotScale;
    } else {
      this.widget.x += dx * this.dragScale;
      this.widget.y += dy * this.dragScale;
    }
  }

  mouseUp(): void {
    this.dragging = false;
    this.rotating = false;
    this.lastMouse = null;
  }

  wheel(deltaY: number): void {
    this.widget.z += (deltaY > 0 ? 1 : -1) * this.wheelScale;
    this.widget.z = Math.max(0.1, this.widget.z);
    this.handleActive = true;
  }

  estimate(timestamp: number): HandEstimate {
    return {
      pose: [...widgetQuaternion(this.widget),
             this.widget.x, this.widget.y, this.widget.z],
      rms: 0,
      n_tags: 5,
      ambiguity: false,
      converged: true,
      timestamp,
    };
  }

  // One tick's CommandPush payload: pedals as held, key events drained.
  commandInputs(simTime: number): CommandPayload {
    const keys = this.pendingKeys;
    this.pendingKeys = [];
    const payload: CommandPayload = { pedals: [...this.pedals], keys };
    if (this.externalLeft) {
      payload.left = this.externalLeft;
    } else if (this.handleActive) {
      payload.left = this.estimate(simTime);
    }
    return payload;
  }

  attach(target: HTMLElement): void {
    window.addEventListener("keydown", (e) => {
      if (!e.repeat) this.keyDown(e.key);
    });
    window.addEventListener("keyup", (e) => this.keyUp(e.key));
    target.addEventListener("mousedown", (e) => this.mouseDown(e.clientX, e.clientY, e.shiftKey));
    window.addEventListener("mousemove", (e) => this.mouseMove(e.clientX, e.clientY));
    window.addEventListener("mouseup", () => this.mouseUp());
    target.addEventListener("wheel", (e) => {
      e.preventDefault();
      this.wheel(e.deltaY);
    });
  }
}
