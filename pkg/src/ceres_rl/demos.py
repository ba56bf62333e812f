"""Demonstration datasets: JSONL persistence, a scripted maze expert, and
the two negative-demo heuristics (circular-range probing and path reversal).

The JSONL contract: one JSON header line declaring the environment config
hash and dimensions, then one record per line. Files are appendable,
diffable, and shared by the supervised pipeline, the online loop, and the
browser UI export.
"""

import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .constraint_net import LabeledDemo
from .envs import WORLD_HALF

FILE_KIND = "ceres_demo_file"
FILE_VERSION = 1

SOURCES = ("human", "scripted", "ceres-direct", "ceres-recovery")


@dataclass
class DemoRecord:
    state: np.ndarray  # full observation
    action: np.ndarray
    indicator: int
    traj_id: int = None
    step: int = None
    source: str = "scripted"

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=float)
        self.action = np.asarray(self.action, dtype=float)
        if self.indicator not in (0, 1):
            raise ValueError("indicator must be 0 or 1")
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")

    def to_labeled(self):
        return LabeledDemo(self.state, self.action, self.indicator)


class DemoFileError(ValueError):
    pass


def save_demos(records, path, config_hash, n_obs, n_act):
    """Write header + records; class counts are reported in the header."""
    counts = {
        "positive": sum(1 for r in records if r.indicator == 1),
        "negative": sum(1 for r in records if r.indicator == 0),
    }
    header = {
        "kind": FILE_KIND,
        "version": FILE_VERSION,
        "config_hash": config_hash,
        "n_obs": n_obs,
        "n_act": n_act,
        "counts": counts,
    }
    with open(path, "w") as f:
        f.write(json.dumps(header) + "\n")
        for r in records:
            f.write(json.dumps({
                "state": r.state.tolist(),
                "action": r.action.tolist(),
                "indicator": r.indicator,
                "traj_id": r.traj_id,
                "step": r.step,
                "source": r.source,
            }) + "\n")
    return counts


def load_demos(path, expect_config_hash=None):
    """Read a demo file back; returns (records, header).

    Rejects dimension mismatches and malformed lines with the line number.
    """
    with open(path) as f:
        lines = f.readlines()
    if not lines:
        raise DemoFileError(f"{path}: empty file, missing header")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise DemoFileError(f"{path}:1: malformed header: {e}") from e
    if header.get("kind") != FILE_KIND or header.get("version") != FILE_VERSION:
        raise DemoFileError(f"{path}:1: not a demo file (kind/version mismatch)")
    if expect_config_hash is not None and header["config_hash"] != expect_config_hash:
        raise DemoFileError(
            f"{path}: config hash {header['config_hash']} does not match environment"
        )
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as e:
            raise DemoFileError(f"{path}:{lineno}: malformed record: {e}") from e
        state = np.array(raw["state"], dtype=float)
        action = np.array(raw["action"], dtype=float)
        if state.shape[0] != header["n_obs"]:
            raise DemoFileError(
                f"{path}:{lineno}: state dim {state.shape[0]} != header n_obs {header['n_obs']}"
            )
        if action.shape[0] != header["n_act"]:
            raise DemoFileError(
                f"{path}:{lineno}: action dim {action.shape[0]} != header n_act {header['n_act']}"
            )
        records.append(DemoRecord(
            state, action, raw["indicator"], raw.get("traj_id"),
            raw.get("step"), raw.get("source", "scripted"),
        ))
    return records, header


# -- scripted expert -------------------------------------------------------

@dataclass
class ExpertStep:
    snapshot: object  # EnvState before acting
    observation: np.ndarray  # full observation before acting
    action: np.ndarray


@dataclass
class ExpertTrajectory:
    steps: list = field(default_factory=list)
    final_observation: np.ndarray = None
    success: bool = False


class GridPlanner:
    """Shortest-path BFS over a coarse grid with safety clearance.

    Returns waypoints (cell centers) spaced one cell apart, so following
    them uses steps well within the movement radius and keeps clearance.
    """

    def __init__(self, env, cell=0.05, clearance=0.04):
        self.env = env
        self.cell = cell
        self.clearance = clearance
        self.n = int(round(2 * WORLD_HALF / cell))

    def _center(self, c):
        return np.array([
            -WORLD_HALF + (c[0] + 0.5) * self.cell,
            -WORLD_HALF + (c[1] + 0.5) * self.cell,
        ])

    def _blocked(self, c):
        p = self._center(c)
        r = self.env.config.agent_radius + self.clearance
        if np.max(np.abs(p)) >= WORLD_HALF - r:
            return True
        return any(rect.distance_to_point(p) < r for rect in self.env.obstacles)

    def _to_cell(self, p):
        return (
            min(self.n - 1, max(0, int((p[0] + WORLD_HALF) / self.cell))),
            min(self.n - 1, max(0, int((p[1] + WORLD_HALF) / self.cell))),
        )

    def plan(self, start, goal):
        """Waypoint list from start to goal, or None when unreachable."""
        s, g = self._to_cell(start), self._to_cell(goal)
        if self._blocked(g):
            return None
        prev = {s: None}
        q = deque([s])
        while q:
            c = q.popleft()
            if c == g:
                path = []
                while c is not None:
                    path.append(self._center(c))
                    c = prev[c]
                return path[::-1]
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                nc = (c[0] + dx, c[1] + dy)
                if (0 <= nc[0] < self.n and 0 <= nc[1] < self.n
                        and nc not in prev and not self._blocked(nc)):
                    prev[nc] = c
                    q.append(nc)
        return None


def run_expert_episode(env, planner):
    """Drive one planner-following episode; returns a trajectory or None."""
    waypoints = planner.plan(env.agent, env.target)
    if waypoints is None:
        return None
    traj = ExpertTrajectory()
    wp_idx = 0
    for _ in range(env.config.horizon):
        if wp_idx < len(waypoints) and np.linalg.norm(env.agent - waypoints[wp_idx]) < 1e-9:
            wp_idx += 1
        goal = waypoints[wp_idx] if wp_idx < len(waypoints) else env.target
        delta = goal - env.agent
        norm = np.linalg.norm(delta)
        step_len = min(norm, env.config.max_step * 0.999)
        action = delta if norm < 1e-12 else delta * (step_len / norm)
        traj.steps.append(ExpertStep(env.snapshot(), env.full_observation(), action))
        result = env.step(action)
        if result.end:
            traj.final_observation = env.full_observation()
            traj.success = result.info["success"]
            return traj
    traj.final_observation = env.full_observation()
    return traj


def generate_scripted_positives(env, planner, count, max_attempts_factor=20):
    """Collect `count` failure-free target-reaching trajectories.

    Episodes that fail (or stall) are discarded and resampled, so every
    recorded step is a positive demonstration by construction.
    """
    trajectories = []
    attempts = 0
    while len(trajectories) < count:
        attempts += 1
        if attempts > count * max_attempts_factor:
            raise RuntimeError("scripted expert kept failing; check planner clearance")
        env.reset()
        traj = run_expert_episode(env, planner)
        if traj is not None and traj.success:
            trajectories.append(traj)
    return trajectories


def positives_to_records(trajectories, source="scripted"):
    records = []
    for tid, traj in enumerate(trajectories):
        for k, step in enumerate(traj.steps):
            records.append(DemoRecord(
                step.observation, step.action, 1, tid, k, source
            ))
    return records


def negatives_by_sampling(trajectories, env, samples_per_state=16, source="scripted"):
    """Probe actions on the movement circle; single-step failures become
    negatives. The environment is restored after every probe."""
    records = []
    radius = env.config.max_step
    angles = 2 * np.pi * np.arange(samples_per_state) / samples_per_state
    probes = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    for tid, traj in enumerate(trajectories):
        for k, step in enumerate(traj.steps):
            for probe in probes:
                env.restore(step.snapshot)
                result = env.step(probe)
                if result.info["failure"]:
                    records.append(DemoRecord(
                        step.observation, probe.copy(), 0, tid, k, source
                    ))
    return records


def negatives_by_reversal(trajectories, source="scripted"):
    """(s_{i+1}, -a_i) for every transition of every positive trajectory."""
    records = []
    for tid, traj in enumerate(trajectories):
        for k, step in enumerate(traj.steps):
            successor = (
                traj.steps[k + 1].observation
                if k + 1 < len(traj.steps) else traj.final_observation
            )
            records.append(DemoRecord(
                successor, -step.action, 0, tid, k, source
            ))
    return records


def build_scripted_dataset(env, count, rng=None, samples_per_state=16,
                           target_ratio=None):
    """Full supervised pipeline: positives + both negative heuristics.

    target_ratio optionally subsamples negatives down to a
    negatives-per-positive ratio (seeded), keeping the class balance in the
    intended ~2:1 regime regardless of layout density.
    """
    planner = GridPlanner(env)
    trajectories = generate_scripted_positives(env, planner, count)
    positives = positives_to_records(trajectories)
    negatives = (
        negatives_by_sampling(trajectories, env, samples_per_state)
        + negatives_by_reversal(trajectories)
    )
    if target_ratio is not None and len(negatives) > target_ratio * len(positives):
        rng = rng or np.random.default_rng(0)
        keep = rng.choice(
            len(negatives), size=int(target_ratio * len(positives)), replace=False
        )
        negatives = [negatives[i] for i in sorted(keep)]
    return positives + negatives
