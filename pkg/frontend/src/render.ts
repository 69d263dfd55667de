// Canvas rendering: top-down world view with the base footprint and planar
// arms, a side elevation for the lift, gripper width bars, and the status
// banner. Renders strictly from the last StatePush; no extrapolation.

import { StatePushPayload } from "./protocol.js";
import { GEOMETRY, SLOT, armSegments, baseFootprint, bodyToWorld } from "./robot.js";
import { UiSessionState } from "./session.js";

export interface BannerModel {
  text: string;
  alarm: boolean;  // red banner: holding, denied, or disconnected
}

export function bannerModel(ui: UiSessionState, holding: boolean): BannerModel {
  if (ui.connection === "closed") {
    return { text: "DISCONNECTED", alarm: true };
  }
  if (ui.role === "observer") {
    return { text: `OBSERVER${ui.denyReason ? ` (${ui.denyReason})` : ""}`, alarm: true };
  }
  if (holding) {
    return { text: "HOLD (no state)", alarm: true };
  }
  const mode = ui.mode ? ui.mode.toUpperCase() : "?";
  const lat = ui.latencyMs === null ? "--" : ui.latencyMs.toFixed(0);
  return { text: `${mode} | latency ${lat} ms`, alarm: false };
}

interface Viewport {
  cx: number;
  cy: number;
  scale: number;  // px per meter
}

function worldToCanvas(v: Viewport, p: [number, number]): [number, number] {
  // world x up-screen, y left-screen (top-down, robot-centric)
  return [v.cx - p[1] * v.scale, v.cy - p[0] * v.scale];
}

function drawPoly(ctx: CanvasRenderingContext2D, v: Viewport,
                  pts: Array<[number, number]>, stroke: string, close: boolean): void {
  ctx.beginPath();
  pts.forEach((p, i) => {
    const [x, y] = worldToCanvas(v, p);
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  if (close) ctx.closePath();
  ctx.strokeStyle = stroke;
  ctx.lineWidth = 2;
  ctx.stroke();
}

export function drawScene(ctx: CanvasRenderingContext2D, width: number, height: number,
                          ui: UiSessionState, holding: boolean): void {
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#10151c";
  ctx.fillRect(0, 0, width, height);

  const banner = bannerModel(ui, holding);
  ctx.fillStyle = banner.alarm ? "#b3261e" : "#1d3557";
  ctx.fillRect(0, 0, width, 28);
  ctx.fillStyle = "#ffffff";
  ctx.font = "14px monospace";
  ctx.fillText(banner.text, 10, 19);

  const push = ui.lastPush;
  if (!push) return;

  const topView: Viewport = { cx: width * 0.38, cy: height * 0.55, scale: 120 };
  // keep the robot centered: view translates with the base
  const base = push.base;
  const centered: Viewport = {
    cx: topView.cx + base[1] * topView.scale,
    cy: topView.cy + base[0] * topView.scale,
    scale: topView.scale,
  };

  drawPoly(ctx, centered, baseFootprint(base), "#7fb3ff", true);
  // heading arrow
  const nose = bodyToWorld(base, [GEOMETRY.bodyLength / 2 + 0.1, 0]);
  drawPoly(ctx, centered, [[base[0], base[1]], nose], "#7fb3ff", false);

  for (const side of ["left", "right"] as const) {
    const arm = armSegments(push.state, side);
    const pts = [arm.shoulder, arm.elbow, arm.ee].map((p) => bodyToWorld(base, p));
    drawPoly(ctx, centered, pts, side === "left" ? "#ffd166" : "#06d6a0", false);
  }

  // side elevation: lift column
  const ex = width * 0.78;
  const ey0 = height * 0.85;
  const columnPx = 180;
  ctx.strokeStyle = "#51586a";
  ctx.lineWidth = 4;
  ctx.beginPath();
  ctx.moveTo(ex, ey0);
  ctx.lineTo(ex, ey0 - columnPx);
  ctx.stroke();
  const lift = push.state[SLOT.lift];
  const carriageY = ey0 - (lift / GEOMETRY.liftMax) * columnPx;
  ctx.fillStyle = "#ffd166";
  ctx.fillRect(ex - 14, carriageY - 5, 28, 10);
  ctx.fillStyle = "#9aa4b2";
  ctx.font = "12px monospace";
  ctx.fillText(`lift ${lift.toFixed(3)} m`, ex - 40, ey0 + 18);

  // gripper width bars
  const bars: Array<[string, number, string]> = [
    ["L", push.state[SLOT.leftGripper], "#ffd166"],
    ["R", push.state[SLOT.rightGripper], "#06d6a0"],
  ];
  bars.forEach(([label, val, color], i) => {
    const bx = width * 0.7 + i * 70;
    const by = height * 0.18;
    ctx.fillStyle = "#51586a";
    ctx.fillRect(bx, by, 50, 10);
    ctx.fillStyle = color;
    ctx.fillRect(bx, by, (val / GEOMETRY.gripperMax) * 50, 10);
    ctx.fillStyle = "#9aa4b2";
    ctx.fillText(`${label} ${(val * 1000).toFixed(0)}mm`, bx, by + 24);
  });

  ctx.fillStyle = "#9aa4b2";
  ctx.fillText(`base (${base[0].toFixed(2)}, ${base[1].toFixed(2)}) m  ` +
               `heading ${(base[2] * 180 / Math.PI).toFixed(0)} deg  ` +
               `t=${push.sim_time.toFixed(2)} s`, 10, height - 10);
}
