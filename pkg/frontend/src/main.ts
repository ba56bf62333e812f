import { drawActionOverlay, drawWorld } from "./render.js";
import { Session, SocketLike } from "./session.js";

// Browser bootstrap: connect, wire pointer driving, render on every state.
// Driving model: while the pointer button is held, each animation frame
// sends the (clamped) displacement from the agent toward the pointer.

const WORLD_SIZE = 600;
const OVERLAY_SIZE = 160;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function start(endpoint = `ws://${location.hostname}:8765`) {
  const world = el<HTMLCanvasElement>("world");
  const overlay = el<HTMLCanvasElement>("overlay");
  const banner = el<HTMLDivElement>("banner");
  const status = el<HTMLDivElement>("status");
  world.width = world.height = WORLD_SIZE;
  overlay.width = overlay.height = OVERLAY_SIZE;
  const wctx = world.getContext("2d")!;
  const octx = overlay.getContext("2d")!;

  const ws = new WebSocket(endpoint) as unknown as SocketLike;
  const session = new Session(ws, {
    onState: (state) => {
      drawWorld(wctx, WORLD_SIZE, state);
      drawActionOverlay(octx, OVERLAY_SIZE, state.constraint_polytope_vertices);
      status.textContent =
        `reward ${state.reward.toFixed(3)} | ` +
        `trajectories ${state.flags.trajectories} | ` +
        (state.flags.end
          ? state.flags.success
            ? "success - press R to reset"
            : state.flags.failure
              ? "failed - press R to reset"
              : "timeout - press R to reset"
          : "recording");
    },
    onExport: (result) => {
      banner.textContent =
        `exported ${result.counts.positive}+ / ${result.counts.negative}- to ${result.path}`;
      banner.style.display = "block";
    },
    onError: (message) => {
      banner.textContent = message;
      banner.style.display = "block";
    },
  });

  let pointer: [number, number] | null = null;
  const toWorld = (ev: PointerEvent): [number, number] => {
    const rect = world.getBoundingClientRect();
    return [
      ((ev.clientX - rect.left) / rect.width) * 2 - 1,
      1 - ((ev.clientY - rect.top) / rect.height) * 2,
    ];
  };
  world.addEventListener("pointerdown", (ev) => {
    pointer = toWorld(ev);
    banner.style.display = "none";
  });
  world.addEventListener("pointermove", (ev) => {
    if (pointer) pointer = toWorld(ev);
  });
  window.addEventListener("pointerup", () => {
    pointer = null;
  });
  window.addEventListener("keydown", (ev) => {
    if (ev.key === "r" || ev.key === "R") session.reset();
    if (ev.key === "e" || ev.key === "E") session.exportDataset();
  });

  let waiting = false;
  const frame = () => {
    if (pointer && session.view && session.view.flags.recording && !waiting) {
      session.driveToward(pointer[0], pointer[1]);
    }
    requestAnimationFrame(frame);
  };
  requestAnimationFrame(frame);
  return session;
}

if (typeof document !== "undefined" && document.getElementById("world")) {
  start();
}
