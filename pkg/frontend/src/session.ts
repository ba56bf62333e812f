import { clampDisplacement } from "./clamp.js";
import {
  ClientMsg,
  ErrorMsg,
  ExportResultMsg,
  ServerMsg,
  StateMsg,
  parseServerMsg,
} from "./protocol.js";

// Minimal socket surface so tests can inject a fake instead of a WebSocket.
export interface SocketLike {
  send(data: string): void;
  onmessage: ((ev: { data: string }) => void) | null;
  onerror: ((ev: unknown) => void) | null;
  onclose: (() => void) | null;
}

export const MAX_STEP = 0.1; // movement radius of the position-controlled agent

export interface SessionEvents {
  onState?: (state: StateMsg) => void;
  onExport?: (result: ExportResultMsg) => void;
  onError?: (message: string) => void;
}

// One driving session over one connection. All simulator state lives on the
// server; this class only mirrors the latest "state" message and turns
// pointer positions into clamped "action" messages.
export class Session {
  view: StateMsg | null = null;
  lastError: string | null = null;

  constructor(private socket: SocketLike, private events: SessionEvents = {}) {
    socket.onmessage = (ev) => this.receive(ev.data);
    socket.onerror = () => this.fail("connection error");
    socket.onclose = () => this.fail("connection closed");
  }

  private receive(raw: string) {
    const msg = parseServerMsg(raw);
    if (msg === null) {
      this.fail("malformed message from server");
      return;
    }
    if (msg.type === "state") {
      this.view = msg;
      this.events.onState?.(msg);
    } else if (msg.type === "export_result") {
      this.events.onExport?.(msg);
    } else {
      this.fail((msg as ErrorMsg).message);
    }
  }

  private fail(message: string) {
    this.lastError = message;
    this.events.onError?.(message);
  }

  private send(msg: ClientMsg) {
    this.socket.send(JSON.stringify(msg));
  }

  // Displacement from the agent toward the pointer (world coordinates),
  // clamped to the movement circle.
  driveToward(pointerX: number, pointerY: number) {
    if (!this.view || !this.view.flags.recording) return;
    const { dx, dy } = clampDisplacement(
      pointerX - this.view.agent[0],
      pointerY - this.view.agent[1],
      MAX_STEP
    );
    this.send({ type: "action", payload: { dx, dy } });
  }

  reset() {
    this.send({ type: "reset" });
  }

  exportDataset(path?: string, includeNegatives = true) {
    this.send({
      type: "label_request",
      payload: { path, include_negatives: includeNegatives },
    });
  }

  trajectoryCount(): number {
    return this.view?.flags.trajectories ?? 0;
  }
}
