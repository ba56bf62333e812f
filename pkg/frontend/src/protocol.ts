// Message contract of the websocket serve endpoint. The server is the
// single source of truth; the UI only ever sends action/reset/label_request
// and renders whatever "state" messages come back.

export interface RectMsg {
  xmin: number;
  xmax: number;
  ymin: number;
  ymax: number;
}

export interface StateFlags {
  end: boolean;
  success: boolean;
  failure: boolean;
  recording: boolean;
  trajectories: number;
}

export interface StateMsg {
  type: "state";
  agent: [number, number];
  target: [number, number];
  obstacles: RectMsg[];
  beams: number[];
  constraint_polytope_vertices: [number, number][];
  reward: number;
  flags: StateFlags;
}

export interface ExportResultMsg {
  type: "export_result";
  path: string;
  counts: { positive: number; negative: number };
}

export interface ErrorMsg {
  type: "error";
  message: string;
}

export type ServerMsg = StateMsg | ExportResultMsg | ErrorMsg;

export type ClientMsg =
  | { type: "action"; payload: { dx: number; dy: number } }
  | { type: "reset" }
  | { type: "label_request"; payload: { path?: string; include_negatives?: boolean } };

export function parseServerMsg(raw: string): ServerMsg | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof data !== "object" || data === null) return null;
  const type = (data as { type?: unknown }).type;
  if (type === "state" || type === "export_result" || type === "error") {
    return data as ServerMsg;
  }
  return null;
}
