// 18-slot command/state layout and the robot geometry the renderer needs.
// Both mirror the published schema and the robot's default geometry config.

export const SLOT = {
  lift: 0,
  leftShoulder: 1,
  leftElbow: 2,
  leftWrist1: 3,
  leftWrist2: 4,
  leftWrist3: 5,
  leftGripper: 6,
  rightShoulder: 7,
  rightElbow: 8,
  rightWrist1: 9,
  rightWrist2: 10,
  rightWrist3: 11,
  rightGripper: 12,
  headPan: 13,
  headTilt: 14,
  reserved: 15,
  baseForward: 16,
  baseHeading: 17,
} as const;

export const GEOMETRY = {
  l1: 0.375,              // m
  l2: 0.375,              // m
  shoulderOffset: 0.2,    // m, +left / -right of centerline
  liftMax: 1.25,          // m
  gripperMax: 0.12,       // m
  trackWidth: 0.45,       // m
  bodyLength: 0.55,       // m, footprint for drawing
  bodyWidth: 0.5,         // m
};

export type Side = "left" | "right";

export interface PlanarArm {
  shoulder: [number, number];
  elbow: [number, number];
  ee: [number, number];
  gripper: number;
}

// Planar two-link chain in the body frame (x forward, y left).
export function armSegments(state: number[], side: Side): PlanarArm {
  const sh = state[side === "left" ? SLOT.leftShoulder : SLOT.rightShoulder];
  const el = state[side === "left" ? SLOT.leftElbow : SLOT.rightElbow];
  const grip = state[side === "left" ? SLOT.leftGripper : SLOT.rightGripper];
  const offset = side === "left" ? GEOMETRY.shoulderOffset : -GEOMETRY.shoulderOffset;
  const ex = GEOMETRY.l1 * Math.cos(sh);
  const ey = GEOMETRY.l1 * Math.sin(sh);
  const px = ex + GEOMETRY.l2 * Math.cos(sh + el);
  const py = ey + GEOMETRY.l2 * Math.sin(sh + el);
  return {
    shoulder: [0, offset],
    elbow: [ex, offset + ey],
    ee: [px, offset + py],
    gripper: grip,
  };
}

// Base footprint corners in world frame, counter-clockwise.
export function baseFootprint(base: number[]): Array<[number, number]> {
  const [x, y, h] = base;
  const c = Math.cos(h);
  const s = Math.sin(h);
  const hl = GEOMETRY.bodyLength / 2;
  const hw = GEOMETRY.bodyWidth / 2;
  const local: Array<[number, number]> = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
  return local.map(([lx, ly]) => [x + c * lx - s * ly, y + s * lx + c * ly]);
}

// Arm point lifted into the world frame (for the top-down overlay).
export function bodyToWorld(base: number[], point: [number, number]): [number, number] {
  const [x, y, h] = base;
  const c = Math.cos(h);
  const s = Math.sin(h);
  return [x + c * point[0] - s * point[1], y + s * point[0] + c * point[1]];
}
