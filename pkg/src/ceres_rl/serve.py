"""Websocket session endpoint for the browser demo UI.

Protocol (JSON text frames):
  client -> server: {"type": "action", "payload": {"dx": .., "dy": ..}}
                    {"type": "reset"}
                    {"type": "label_request", "payload": {"path": ..,
                        "include_negatives": bool}}
  server -> client: {"type": "state", "agent": [..], "target": [..],
                     "obstacles": [...], "beams": [..],
                     "constraint_polytope_vertices": [[x, y], ...],
                     "reward": .., "flags": {"end", "success", "failure",
                     "recording", "trajectories"}}
                    {"type": "export_result", "path": .., "counts": {..}}
                    {"type": "error", "message": ..}

The server is the single source of truth: it re-clamps actions, records
successful human episodes as positive trajectories, runs the negative-demo
heuristics on request, and writes exports in the shared JSONL format.
"""

import asyncio
import json
import os

import numpy as np

from . import mlp
from .constraint_net import predict_constraints
from .demos import (
    ExpertStep,
    ExpertTrajectory,
    negatives_by_reversal,
    negatives_by_sampling,
    positives_to_records,
    save_demos,
)
from .envs import NavigationEnv
from .geometry import ActionBox, polytope_vertices


class ServeSession:
    """One human-driving session over a single connection."""

    def __init__(self, env_config, seed=0, constraints_path=None, out_dir="."):
        self.config = env_config
        self.env = NavigationEnv(env_config, seed=seed)
        self.box = ActionBox.symmetric(env_config.action_half_range, 2)
        self.out_dir = out_dir
        self.cnet, self.n_in = None, 2
        if constraints_path:
            self.cnet, extra = mlp.load_checkpoint(constraints_path)
            self.n_in = extra["n_in"]
        self.trajectories = []  # successful episodes only
        self.current_steps = []
        self.last_reward = 0.0
        self.last_flags = {"end": False, "success": False, "failure": False}
        self.env.reset()

    def _vertices(self):
        if self.cnet is None:
            return []
        cset = predict_constraints(
            self.cnet, self.env.full_observation(), self.box, self.n_in
        )
        return polytope_vertices(cset, self.box).tolist()

    def state_message(self):
        return {
            "type": "state",
            "agent": self.env.agent.tolist(),
            "target": self.env.target.tolist(),
            "obstacles": [
                {"xmin": r.xmin, "xmax": r.xmax, "ymin": r.ymin, "ymax": r.ymax}
                for r in self.env.obstacles
            ],
            "beams": self.env.beam_distances().tolist(),
            "constraint_polytope_vertices": self._vertices(),
            "reward": self.last_reward,
            "flags": {
                **self.last_flags,
                "recording": not self.env.done,
                "trajectories": len(self.trajectories),
            },
        }

    def handle(self, message):
        """Process one client message; returns the reply message dict."""
        kind = message.get("type")
        if kind == "reset":
            self.current_steps = []
            self.env.reset()
            self.last_reward = 0.0
            self.last_flags = {"end": False, "success": False, "failure": False}
            return self.state_message()
        if kind == "action":
            return self._handle_action(message.get("payload", {}))
        if kind == "label_request":
            return self._handle_export(message.get("payload", {}))
        return {"type": "error", "message": f"unknown message type {kind!r}"}

    def _handle_action(self, payload):
        if self.env.done:
            return {"type": "error", "message": "episode over; send reset"}
        action = np.array([float(payload.get("dx", 0.0)),
                           float(payload.get("dy", 0.0))])
        # authoritative re-clamp of the client-side displacement
        norm = np.linalg.norm(action)
        if norm > self.config.max_step:
            action = action * (self.config.max_step / norm)
        snapshot = self.env.snapshot()
        observation = self.env.full_observation()
        result = self.env.step(action)
        self.current_steps.append(ExpertStep(snapshot, observation, action))
        self.last_reward = result.reward
        self.last_flags = {
            "end": result.end,
            "success": result.info["success"],
            "failure": result.info["failure"],
        }
        if result.end:
            if result.info["success"]:
                traj = ExpertTrajectory(
                    steps=self.current_steps,
                    final_observation=self.env.full_observation(),
                    success=True,
                )
                self.trajectories.append(traj)
            # failed/timed-out episodes are never exported as positives
            self.current_steps = []
        return self.state_message()

    def _handle_export(self, payload):
        if not self.trajectories:
            return {"type": "error", "message": "no successful trajectories recorded"}
        records = positives_to_records(self.trajectories, source="human")
        if payload.get("include_negatives", True):
            live = self.env.snapshot()  # probing restores old states
            records += negatives_by_sampling(self.trajectories, self.env,
                                             source="human")
            records += negatives_by_reversal(self.trajectories, source="human")
            self.env.restore(live)
        path = payload.get("path") or os.path.join(self.out_dir, "ui_demos.jsonl")
        counts = save_demos(records, path, self.config.config_hash(),
                            self.config.n_obs_full, 2)
        return {"type": "export_result", "path": path, "counts": counts}


def run_server(env_config, host="127.0.0.1", port=8765, seed=0,
               constraints_path=None, out_dir="."):
    """Blocking websocket server; one session per connection."""
    import websockets

    async def handler(ws):
        session = ServeSession(env_config, seed, constraints_path, out_dir)
        await ws.send(json.dumps(session.state_message()))
        async for raw in ws:
            try:
                message = json.loads(raw)
            except json.JSONDecodeError:
                await ws.send(json.dumps(
                    {"type": "error", "message": "malformed JSON"}))
                continue
            await ws.send(json.dumps(session.handle(message)))

    async def main():
        async with websockets.serve(handler, host, port):
            print(f"serving on ws://{host}:{port}", flush=True)
            await asyncio.Future()

    asyncio.run(main())
