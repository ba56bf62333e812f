import { StateMsg } from "./protocol.js";
import { MAX_STEP } from "./session.js";

// World is [-1, 1]^2; the action overlay is a separate small panel showing
// the movement circle with the feasible polytope shaded (Fig-1 style).

export interface Transform {
  scale: number;
  offsetX: number;
  offsetY: number;
}

export function worldTransform(canvasSize: number): Transform {
  // world y points up, canvas y points down
  return { scale: canvasSize / 2, offsetX: canvasSize / 2, offsetY: canvasSize / 2 };
}

export function worldToScreen(
  t: Transform,
  x: number,
  y: number
): [number, number] {
  return [t.offsetX + x * t.scale, t.offsetY - y * t.scale];
}

// The 2-D context subset we use; lets tests record draw calls.
export interface Ctx2D {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  globalAlpha: number;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  rect(x: number, y: number, w: number, h: number): void;
  fill(): void;
  stroke(): void;
  closePath(): void;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
}

const AGENT_RADIUS = 0.025;

export function drawWorld(ctx: Ctx2D, size: number, state: StateMsg) {
  const t = worldTransform(size);
  ctx.clearRect(0, 0, size, size);
  ctx.fillStyle = "#fafafa";
  ctx.fillRect(0, 0, size, size);

  ctx.fillStyle = "#333";
  for (const r of state.obstacles) {
    const [x0, y0] = worldToScreen(t, r.xmin, r.ymax);
    const [x1, y1] = worldToScreen(t, r.xmax, r.ymin);
    ctx.beginPath();
    ctx.rect(x0, y0, x1 - x0, y1 - y0);
    ctx.fill();
  }

  ctx.strokeStyle = "#bbb";
  ctx.lineWidth = 1;
  const [ax, ay] = worldToScreen(t, state.agent[0], state.agent[1]);
  state.beams.forEach((d, k) => {
    const ang = (2 * Math.PI * k) / state.beams.length;
    const [bx, by] = worldToScreen(
      t,
      state.agent[0] + d * Math.cos(ang),
      state.agent[1] + d * Math.sin(ang)
    );
    ctx.beginPath();
    ctx.moveTo(ax, ay);
    ctx.lineTo(bx, by);
    ctx.stroke();
  });

  ctx.fillStyle = "#2a9d2a";
  const [tx, ty] = worldToScreen(t, state.target[0], state.target[1]);
  ctx.beginPath();
  ctx.arc(tx, ty, AGENT_RADIUS * t.scale, 0, 2 * Math.PI);
  ctx.fill();

  ctx.fillStyle = state.flags.failure ? "#d03030" : "#3060d0";
  ctx.beginPath();
  ctx.arc(ax, ay, AGENT_RADIUS * t.scale, 0, 2 * Math.PI);
  ctx.fill();
}

// Action-space overlay: movement circle of radius MAX_STEP; the feasible
// polytope (vertices straight from the server, action units) shaded inside.
// With no vertices the whole circle is rendered feasible.
export function drawActionOverlay(
  ctx: Ctx2D,
  size: number,
  vertices: [number, number][]
) {
  const scale = size / (2 * MAX_STEP * 1.2); // small margin around the circle
  const cx = size / 2;
  const cy = size / 2;
  ctx.clearRect(0, 0, size, size);

  ctx.globalAlpha = 0.35;
  ctx.fillStyle = "#4caf50";
  ctx.beginPath();
  if (vertices.length >= 3) {
    const [vx0, vy0] = vertices[0];
    ctx.moveTo(cx + vx0 * scale, cy - vy0 * scale);
    for (const [vx, vy] of vertices.slice(1)) {
      ctx.lineTo(cx + vx * scale, cy - vy * scale);
    }
    ctx.closePath();
  } else {
    ctx.arc(cx, cy, MAX_STEP * scale, 0, 2 * Math.PI);
  }
  ctx.fill();
  ctx.globalAlpha = 1;

  ctx.strokeStyle = "#555";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  ctx.arc(cx, cy, MAX_STEP * scale, 0, 2 * Math.PI);
  ctx.stroke();
}
