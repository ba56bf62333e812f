"""2-D navigation simulators: static maze and randomized-obstacle worlds.

The agent (disk of diameter 0.05) must reach a target disk inside the
[-1, 1]^2 world while avoiding rectangular holes and the world border.
Position control moves by the (norm-clipped) action directly; force control
integrates velocity then position. Episodes end on failure (collision),
success (target reached), or horizon.
"""

import hashlib
import json
from collections import deque
from dataclasses import dataclass, field, asdict, replace
from importlib import resources

import numpy as np

WORLD_HALF = 1.0
BEAM_MAX_RANGE = 2.0 * np.sqrt(2.0)


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle (a hole in the floor)."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def distance_to_point(self, p):
        """Distance from p to the rectangle (0 inside)."""
        cx = min(max(p[0], self.xmin), self.xmax)
        cy = min(max(p[1], self.ymin), self.ymax)
        return float(np.hypot(p[0] - cx, p[1] - cy))


@dataclass(frozen=True)
class EnvConfig:
    control_mode: str = "position"  # "position" | "force"
    obstacle_mode: str = "maze"  # "maze" | "random"
    observation_mode: str = "full"  # "full" | "reduced"
    agent_diameter: float = 0.05
    max_step: float = 0.1  # position-mode movement radius
    horizon: int = 100
    n_beams: int = 8
    # force-mode dynamics (declared defaults, not task constants)
    force_limit: float = 0.02
    dt: float = 1.0
    max_speed: float = 0.1
    # random-obstacle generator
    n_obstacles: int = 3
    obstacle_side_range: tuple = (0.2, 0.5)

    def __post_init__(self):
        if self.max_step <= 0:
            raise ValueError("max_step must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.control_mode not in ("position", "force"):
            raise ValueError(f"unknown control mode {self.control_mode!r}")
        if self.obstacle_mode not in ("maze", "random"):
            raise ValueError(f"unknown obstacle mode {self.obstacle_mode!r}")
        if self.observation_mode not in ("full", "reduced"):
            raise ValueError(f"unknown observation mode {self.observation_mode!r}")

    @property
    def agent_radius(self):
        return 0.5 * self.agent_diameter

    @property
    def action_half_range(self):
        return self.max_step if self.control_mode == "position" else self.force_limit

    @property
    def n_obs_full(self):
        base = 4 + (2 if self.control_mode == "force" else 0)
        return base + self.n_beams

    @property
    def n_obs(self):
        base = 4 + (2 if self.control_mode == "force" else 0)
        return base + (self.n_beams if self.observation_mode == "full" else 0)

    def config_hash(self):
        payload = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def to_json(self, path):
        with open(path, "w") as f:
            json.dump(asdict(self), f, indent=2)

    @classmethod
    def from_json(cls, path):
        with open(path) as f:
            raw = json.load(f)
        if "obstacle_side_range" in raw:
            raw["obstacle_side_range"] = tuple(raw["obstacle_side_range"])
        return cls(**raw)


@dataclass
class EnvState:
    """Restorable simulator snapshot."""

    agent: np.ndarray
    velocity: np.ndarray
    target: np.ndarray
    obstacles: list  # list of Rect
    t: int
    done: bool
    config_hash: str


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    end: bool
    info: dict  # keys: success, failure, reward_terms


def load_maze_rects(path=None):
    """Load the shipped static maze layout (or a layout JSON at path)."""
    if path is None:
        text = resources.files("ceres_rl.data").joinpath("maze_layout.json").read_text()
        raw = json.loads(text)
    else:
        with open(path) as f:
            raw = json.load(f)
    return [Rect(r["xmin"], r["xmax"], r["ymin"], r["ymax"]) for r in raw["rects"]]


def save_layout(rects, path, name="layout"):
    payload = {
        "version": 1,
        "name": name,
        "rects": [asdict(r) for r in rects],
    }
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)


def _ray_border_distance(p, d):
    """Distance along unit direction d from p to the [-1,1]^2 boundary."""
    best = np.inf
    for axis in range(2):
        if abs(d[axis]) < 1e-15:
            continue
        for bound in (-WORLD_HALF, WORLD_HALF):
            t = (bound - p[axis]) / d[axis]
            if t >= 0:
                other = p[1 - axis] + t * d[1 - axis]
                if -WORLD_HALF - 1e-12 <= other <= WORLD_HALF + 1e-12:
                    best = min(best, t)
    return best


def _ray_rect_distance(p, d, rect):
    """Distance along unit direction d from p to rect (inf if missed)."""
    tmin, tmax = 0.0, np.inf
    for axis, (lo, hi) in enumerate(((rect.xmin, rect.xmax), (rect.ymin, rect.ymax))):
        if abs(d[axis]) < 1e-15:
            if p[axis] < lo or p[axis] > hi:
                return np.inf
        else:
            t1 = (lo - p[axis]) / d[axis]
            t2 = (hi - p[axis]) / d[axis]
            if t1 > t2:
                t1, t2 = t2, t1
            tmin = max(tmin, t1)
            tmax = min(tmax, t2)
            if tmin > tmax:
                return np.inf
    return tmin


class NavigationEnv:
    """One simulator instance; single-threaded, seeded RNG per instance."""

    def __init__(self, config=None, seed=0, layout_path=None):
        self.config = config or EnvConfig()
        self.rng = np.random.default_rng(seed)
        self._maze_rects = load_maze_rects(layout_path) if self.config.obstacle_mode == "maze" else None
        self.obstacles = []
        self.agent = np.zeros(2)
        self.velocity = np.zeros(2)
        self.target = np.zeros(2)
        self.t = 0
        self.done = True

    # -- placement ---------------------------------------------------------

    def _collides(self, p):
        r = self.config.agent_radius
        if np.max(np.abs(p)) >= WORLD_HALF - r:
            return True
        return any(rect.distance_to_point(p) < r for rect in self.obstacles)

    def _sample_free_point(self):
        for _ in range(10_000):
            p = self.rng.uniform(-WORLD_HALF + 0.06, WORLD_HALF - 0.06, size=2)
            if not self._collides(p):
                return p
        raise RuntimeError("could not sample a free point; layout too dense")

    def _free_path_exists(self, a, b, cell=0.05):
        """Coarse grid BFS connectivity between a and b through free space."""
        n = int(round(2 * WORLD_HALF / cell))
        def to_cell(p):
            return (
                min(n - 1, max(0, int((p[0] + WORLD_HALF) / cell))),
                min(n - 1, max(0, int((p[1] + WORLD_HALF) / cell))),
            )
        def free(c):
            p = np.array([
                -WORLD_HALF + (c[0] + 0.5) * cell,
                -WORLD_HALF + (c[1] + 0.5) * cell,
            ])
            return not self._collides(p)
        start, goal = to_cell(a), to_cell(b)
        seen = {start}
        q = deque([start])
        while q:
            c = q.popleft()
            if c == goal:
                return True
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                nc = (c[0] + dx, c[1] + dy)
                if 0 <= nc[0] < n and 0 <= nc[1] < n and nc not in seen and free(nc):
                    seen.add(nc)
                    q.append(nc)
        return False

    def _sample_obstacles(self):
        lo, hi = self.config.obstacle_side_range
        rects = []
        for _ in range(self.config.n_obstacles):
            w = self.rng.uniform(lo, hi)
            h = self.rng.uniform(lo, hi)
            cx = self.rng.uniform(-WORLD_HALF + w / 2, WORLD_HALF - w / 2)
            cy = self.rng.uniform(-WORLD_HALF + h / 2, WORLD_HALF - h / 2)
            rects.append(Rect(cx - w / 2, cx + w / 2, cy - h / 2, cy + h / 2))
        return rects

    def reset(self, seed=None):
        """Sample a fresh episode; deterministic under a given seed."""
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        for _ in range(100):
            if self.config.obstacle_mode == "maze":
                self.obstacles = list(self._maze_rects)
            else:
                self.obstacles = self._sample_obstacles()
            self.agent = self._sample_free_point()
            self.target = self._sample_free_point()
            if np.linalg.norm(self.agent - self.target) <= self.config.agent_diameter:
                continue
            if self._free_path_exists(self.agent, self.target):
                break
        else:
            raise RuntimeError("failed to sample a solvable episode layout")
        self.velocity = np.zeros(2)
        self.t = 0
        self.done = False
        return self.observe()

    # -- observations ------------------------------------------------------

    def beam_distances(self):
        """Distances to nearest obstacle/border along 8 rays at 45 degrees."""
        dists = np.empty(self.config.n_beams)
        for k in range(self.config.n_beams):
            ang = 2 * np.pi * k / self.config.n_beams
            d = np.array([np.cos(ang), np.sin(ang)])
            best = _ray_border_distance(self.agent, d)
            for rect in self.obstacles:
                best = min(best, _ray_rect_distance(self.agent, d, rect))
            dists[k] = min(best, BEAM_MAX_RANGE)
        return dists

    def full_observation(self):
        parts = [self.agent, self.target]
        if self.config.control_mode == "force":
            parts.append(self.velocity)
        parts.append(self.beam_distances())
        return np.concatenate(parts)

    def observe(self):
        if self.config.observation_mode == "full":
            return self.full_observation()
        parts = [self.agent, self.target]
        if self.config.control_mode == "force":
            parts.append(self.velocity)
        return np.concatenate(parts)

    # -- dynamics ----------------------------------------------------------

    def step(self, action):
        """Advance one timestep; raises if the episode is already over."""
        if self.done:
            raise RuntimeError("step() on a terminated episode")
        action = np.asarray(action, dtype=float)
        if action.shape != (2,):
            raise ValueError("action must be 2-D")
        cfg = self.config
        if cfg.control_mode == "position":
            norm = np.linalg.norm(action)
            disp = action if norm <= cfg.max_step else action * (cfg.max_step / norm)
            self.agent = self.agent + disp
        else:
            force = np.clip(action, -cfg.force_limit, cfg.force_limit)
            self.velocity = np.clip(
                self.velocity + force * cfg.dt, -cfg.max_speed, cfg.max_speed
            )
            self.agent = self.agent + self.velocity * cfg.dt
        self.t += 1

        failure = self._collides(self.agent)
        dist = float(np.linalg.norm(self.target - self.agent))
        success = (not failure) and dist <= cfg.agent_diameter
        r_fail = -10.0 if failure else 0.0
        r_goal = 10.0 if success else 0.0
        r_dist = -0.01 * dist
        r_alive = -0.01
        reward = r_fail + r_goal + r_dist + r_alive
        end = failure or success or self.t >= cfg.horizon
        self.done = end
        info = {
            "success": success,
            "failure": failure,
            "reward_terms": {
                "fail": r_fail, "goal": r_goal, "dist": r_dist, "alive": r_alive,
            },
        }
        return StepResult(self.observe(), reward, end, info)

    # -- snapshot / restore ------------------------------------------------

    def snapshot(self):
        return EnvState(
            agent=self.agent.copy(),
            velocity=self.velocity.copy(),
            target=self.target.copy(),
            obstacles=list(self.obstacles),
            t=self.t,
            done=self.done,
            config_hash=self.config.config_hash(),
        )

    def restore(self, state):
        """Restore an earlier snapshot; subsequent dynamics replay exactly."""
        if state.config_hash != self.config.config_hash():
            raise ValueError("snapshot belongs to a different environment config")
        self.agent = state.agent.copy()
        self.velocity = state.velocity.copy()
        self.target = state.target.copy()
        self.obstacles = list(state.obstacles)
        self.t = state.t
        self.done = state.done
        return self.observe()

    def restore_for_recovery(self, state):
        """Restore a mid-episode state as a fresh episode start (t reset)."""
        self.restore(state)
        self.t = 0
        self.done = False
        return self.observe()
