import { describe, expect, it } from "vitest";
import {
  Ctx2D,
  drawActionOverlay,
  drawWorld,
  worldToScreen,
  worldTransform,
} from "../src/render.js";
import { StateMsg } from "../src/protocol.js";

// Recording fake 2-D context: stores every call so tests can assert on the
// geometry actually drawn.
class FakeCtx implements Ctx2D {
  fillStyle: string = "";
  strokeStyle: string = "";
  lineWidth = 0;
  globalAlpha = 1;
  calls: [string, ...number[]][] = [];

  beginPath() { this.calls.push(["beginPath"]); }
  moveTo(x: number, y: number) { this.calls.push(["moveTo", x, y]); }
  lineTo(x: number, y: number) { this.calls.push(["lineTo", x, y]); }
  arc(x: number, y: number, r: number) { this.calls.push(["arc", x, y, r]); }
  rect(x: number, y: number, w: number, h: number) { this.calls.push(["rect", x, y, w, h]); }
  fill() { this.calls.push(["fill"]); }
  stroke() { this.calls.push(["stroke"]); }
  closePath() { this.calls.push(["closePath"]); }
  clearRect() { this.calls.push(["clearRect"]); }
  fillRect() { this.calls.push(["fillRect"]); }

  named(name: string) {
    return this.calls.filter((c) => c[0] === name);
  }
}

const state: StateMsg = {
  type: "state",
  agent: [0, 0],
  target: [0.5, -0.5],
  obstacles: [{ xmin: -0.2, xmax: 0.2, ymin: -0.1, ymax: 0.1 }],
  beams: [1, 1, 1, 1, 1, 1, 1, 1],
  constraint_polytope_vertices: [],
  reward: 0,
  flags: { end: false, success: false, failure: false, recording: true, trajectories: 0 },
};

describe("world transform", () => {
  it("maps world corners to canvas corners with y flipped", () => {
    const t = worldTransform(600);
    expect(worldToScreen(t, -1, 1)).toEqual([0, 0]);
    expect(worldToScreen(t, 1, -1)).toEqual([600, 600]);
    expect(worldToScreen(t, 0, 0)).toEqual([300, 300]);
  });
});

describe("drawWorld", () => {
  it("draws every obstacle, all beams, agent and target", () => {
    const ctx = new FakeCtx();
    drawWorld(ctx, 600, state);
    expect(ctx.named("rect").length).toBe(state.obstacles.length);
    expect(ctx.named("moveTo").length).toBe(8); // one per beam
    expect(ctx.named("arc").length).toBe(2); // agent + target
  });

  it("places the agent at the screen origin mapping", () => {
    const ctx = new FakeCtx();
    drawWorld(ctx, 600, { ...state, agent: [0, 0] });
    const arcs = ctx.named("arc");
    const agentArc = arcs[arcs.length - 1];
    expect(agentArc[1]).toBe(300);
    expect(agentArc[2]).toBe(300);
  });
});

describe("drawActionOverlay", () => {
  it("renders the full circle feasible when no vertices arrive", () => {
    const ctx = new FakeCtx();
    drawActionOverlay(ctx, 160, []);
    // two arcs: the shaded full circle and the circle outline
    expect(ctx.named("arc").length).toBe(2);
    expect(ctx.named("lineTo").length).toBe(0);
  });

  it("traces the polygon when vertices are present", () => {
    const ctx = new FakeCtx();
    const verts: [number, number][] = [
      [0.05, 0], [0, 0.05], [-0.05, 0], [0, -0.05],
    ];
    drawActionOverlay(ctx, 160, verts);
    expect(ctx.named("moveTo").length).toBe(1);
    expect(ctx.named("lineTo").length).toBe(verts.length - 1);
    expect(ctx.named("arc").length).toBe(1); // outline circle only
    // vertices land inside the canvas, centered
    for (const call of ctx.named("lineTo")) {
      expect(call[1]).toBeGreaterThan(0);
      expect(call[1]).toBeLessThan(160);
    }
  });
});
