"""CERES: constrained exploration with recovery-based demonstration sorting.

A direct policy learns the task while its trajectories are mined for
positive/negative demonstrations. Demonstrations that cannot be labeled
from the trajectory alone are handed to a recovery policy, which probes
them by restoring the simulator to the questionable state and trying to
survive; bisection over each uncertain segment keeps probing cheap. The
labeled demos train the constraint network that, with growing confidence,
projects the direct policy's actions into the learned safe set.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import mlp, ppo
from .constraint_net import (
    predict_constraints,
    separation_accuracy,
    update_constraints,
)
from .demos import DemoRecord
from .geometry import ActionBox, project_action


@dataclass
class EvalStep:
    observation: np.ndarray  # full observation before acting
    snapshot: object  # EnvState before acting
    action: np.ndarray  # corrected (executed) action
    info: dict


@dataclass
class TrajectoryForEval:
    steps: list
    terminal_cause: str  # "failure" | "success" | "horizon" | "truncated"
    final_snapshot: object

    def __post_init__(self):
        if not self.steps:
            raise ValueError("trajectory must be non-empty")


POSITIVE, NEGATIVE, UNCERTAIN = 1, 0, -1


def evaluate_demos(traj, n_s):
    """Label each demo from trajectory structure alone.

    A demo is positive when at least n_s subsequent steps passed without
    failure; only the final demo of a failure-terminated trajectory is
    negative; everything else (including the tail of success/horizon
    trajectories) stays uncertain. Returns a label per step.
    """
    n = len(traj.steps)
    labels = np.full(n, UNCERTAIN, dtype=int)
    if traj.terminal_cause == "failure":
        labels[n - 1] = NEGATIVE
        for k in range(n - 1):
            if n - 2 - k >= n_s:
                labels[k] = POSITIVE
    else:
        for k in range(n):
            if n - 1 - k >= n_s:
                labels[k] = POSITIVE
    return labels


def recovery_reward(alive, failed, n_s):
    """+1 per surviving step, -n_s on failure."""
    if alive == failed:
        raise ValueError("alive and failed flags must be mutually exclusive")
    return 1.0 if alive else -float(n_s)


class ReplayBuffer:
    """Append-only store of labeled demonstrations."""

    def __init__(self):
        self.records = []

    def append(self, record):
        self.records.append(record)

    def extend(self, records):
        self.records.extend(records)

    def __len__(self):
        return len(self.records)

    @property
    def n_positive(self):
        return sum(1 for r in self.records if r.indicator == 1)

    @property
    def n_negative(self):
        return sum(1 for r in self.records if r.indicator == 0)

    def recent(self, n):
        return self.records[-n:]


@dataclass
class CeresConfig:
    n_s: int = 10  # recovery horizon (steps)
    n_a: int = 3  # recovery attempts per probe
    n_iter: int = 50
    steps_per_iter: int = 1024
    recovery_steps_per_iter: int = 1024
    constraint_batches: int = 200  # co-training budget per iteration
    min_class_count: int = 64  # buffer threshold before co-training starts
    constraint_lr: float = 1e-3
    n_in: int = 2
    constrain_recovery: bool = False
    queue_max_states: int = 10_000
    activation_slice: int = 2048

    def __post_init__(self):
        if self.n_s < 1 or self.n_a < 1:
            raise ValueError("n_s and n_a must be >= 1")


def activation_probability(cnet, buffer, box, n_in, slice_size=2048, ready=True):
    """Projection probability = separation accuracy on a recent buffer slice."""
    if cnet is None or not ready or len(buffer) == 0:
        return 0.0
    return separation_accuracy(
        cnet, [r.to_labeled() for r in buffer.recent(slice_size)], box, n_in
    )


def _maybe_project(raw, cnet, obs_full, box, n_in, act_prob, rng):
    if act_prob > 0.0 and rng.uniform() < act_prob:
        cset = predict_constraints(cnet, obs_full, box, n_in)
        return project_action(raw, cset, box)
    return raw


def sample(env, policy, value_net, cnet, box, n_in, act_prob, rng, min_steps,
           source="ceres-direct", n_s=10):
    """Collect at least min_steps of on-policy experience on env.

    Raw policy actions go into the PPO batch; corrected (executed) actions
    and env snapshots go into evaluation trajectories. Returns
    (RolloutBatch, positives, negatives, uncertain_trajectories, stats).
    """
    states, actions, logps, rewards, ends = [], [], [], [], []
    positives, negatives, uncertain = [], [], []
    ep_returns, ep_lens, ep_fail, ep_succ = [], [], 0, 0
    cur_steps = []
    cur_return = 0.0
    obs = env.reset()
    truncated_mid_episode = False
    while len(states) < min_steps or not env.done:
        obs_full = env.full_observation()
        raw, logp = ppo.sample_action(policy, obs, rng)
        corrected = _maybe_project(raw, cnet, obs_full, box, n_in, act_prob, rng)
        snap = env.snapshot()
        result = env.step(corrected)
        states.append(obs)
        actions.append(raw)
        logps.append(logp)
        rewards.append(result.reward)
        ends.append(result.end)
        cur_steps.append(EvalStep(obs_full, snap, corrected, result.info))
        cur_return += result.reward
        obs = result.observation
        if result.end:
            cause = (
                "failure" if result.info["failure"]
                else "success" if result.info["success"]
                else "horizon"
            )
            traj = TrajectoryForEval(cur_steps, cause, env.snapshot())
            pos, neg, unc = _sort_trajectory(traj, n_s, source)
            positives.extend(pos)
            negatives.extend(neg)
            if unc is not None:
                uncertain.append(unc)
            ep_returns.append(cur_return)
            ep_lens.append(len(cur_steps))
            ep_fail += int(result.info["failure"])
            ep_succ += int(result.info["success"])
            cur_steps, cur_return = [], 0.0
            if len(states) >= min_steps:
                break
            obs = env.reset()
    batch = ppo.RolloutBatch(
        np.stack(states), np.stack(actions), np.array(logps),
        np.array(rewards), np.zeros(len(states)), np.array(ends, dtype=bool),
    )
    batch.values = ppo.value_estimates(value_net, batch.states)
    batch.last_value = 0.0 if batch.ends[-1] else float(
        ppo.value_estimates(value_net, obs[None, :])[0]
    )
    n_eps = max(1, len(ep_returns))
    stats = {
        "episodes": len(ep_returns),
        "mean_reward": float(np.mean(ep_returns)) if ep_returns else 0.0,
        "mean_ep_len": float(np.mean(ep_lens)) if ep_lens else 0.0,
        "failure_rate": ep_fail / n_eps,
        "success_rate": ep_succ / n_eps,
        "failures": ep_fail,
        "successes": ep_succ,
    }
    return batch, positives, negatives, uncertain, stats


@dataclass
class UncertainSegment:
    """Contiguous run of uncertain demos awaiting recovery probing."""

    traj: TrajectoryForEval
    lo: int
    hi: int
    source: str = "ceres-direct"

    def __len__(self):
        return self.hi - self.lo + 1


def _sort_trajectory(traj, n_s, source):
    labels = evaluate_demos(traj, n_s)
    positives = [
        DemoRecord(s.observation, s.action, 1, source=source)
        for s, lab in zip(traj.steps, labels) if lab == POSITIVE
    ]
    negatives = [
        DemoRecord(s.observation, s.action, 0, source=source)
        for s, lab in zip(traj.steps, labels) if lab == NEGATIVE
    ]
    unc_idx = np.flatnonzero(labels == UNCERTAIN)
    segment = None
    if unc_idx.size:
        segment = UncertainSegment(traj, int(unc_idx[0]), int(unc_idx[-1]), source)
    return positives, negatives, segment


def successor_snapshot(traj, k):
    """State the environment was in right after demo k's action."""
    if k + 1 < len(traj.steps):
        return traj.steps[k + 1].snapshot
    return traj.final_snapshot


class RecoveryProber:
    """Runs recovery episodes from restored states and records PPO data."""

    def __init__(self, env_r, policy_r, cnet, box, n_in, n_s, n_a, rng,
                 act_prob=0.0):
        self.env = env_r
        self.policy = policy_r
        self.cnet = cnet
        self.box = box
        self.n_in = n_in
        self.n_s = n_s
        self.n_a = n_a
        self.rng = rng
        self.act_prob = act_prob
        self.states, self.actions, self.logps = [], [], []
        self.rewards, self.ends = [], []
        self.extra_negatives = []
        self.episodes = 0
        self.failures = 0

    def probe(self, snapshot):
        """Up to n_a survival attempts from a restored state.

        Returns True when any attempt survives n_s steps without failure.
        """
        for _ in range(self.n_a):
            if self._attempt(snapshot):
                return True
        return False

    def _attempt(self, snapshot):
        env = self.env
        env.restore_for_recovery(snapshot)
        self.episodes += 1
        eval_steps = []
        failed = False
        for step_i in range(self.n_s):
            obs_full = env.full_observation()
            raw, logp = ppo.sample_action(self.policy, obs_full, self.rng)
            corrected = _maybe_project(
                raw, self.cnet, obs_full, self.box, self.n_in,
                self.act_prob, self.rng,
            )
            snap = env.snapshot()
            result = env.step(corrected)
            failed = result.info["failure"]
            reward = recovery_reward(not failed, failed, self.n_s)
            last = failed or result.end or step_i == self.n_s - 1
            self.states.append(obs_full)
            self.actions.append(raw)
            self.logps.append(logp)
            self.rewards.append(reward)
            self.ends.append(last)
            eval_steps.append(EvalStep(obs_full, snap, corrected, result.info))
            if last:
                break
        if failed:
            self.failures += 1
            # the failing recovery step itself is a certain negative
            s = eval_steps[-1]
            self.extra_negatives.append(
                DemoRecord(s.observation, s.action, 0, source="ceres-recovery")
            )
        return not failed

    def steps_collected(self):
        return len(self.states)

    def batch(self, value_net):
        if not self.states:
            return None
        batch = ppo.RolloutBatch(
            np.stack(self.states), np.stack(self.actions), np.array(self.logps),
            np.array(self.rewards), np.zeros(len(self.states)),
            np.array(self.ends, dtype=bool),
        )
        batch.values = ppo.value_estimates(value_net, batch.states)
        return batch


def recovery_label(segment, prober):
    """Bisection labeling of one uncertain segment.

    Midpoint first: a surviving probe makes the demo and all predecessors
    positive; a fully failed probe makes the demo and all successors
    negative. At most ceil(log2(L)) + 1 probes label the whole segment.
    Returns (positives, negatives, probe_count).
    """
    traj, source = segment.traj, segment.source
    lo, hi = segment.lo, segment.hi
    labels = {}
    probes = 0
    while lo <= hi:
        mid = (lo + hi) // 2
        probes += 1
        if prober.probe(successor_snapshot(traj, mid)):
            for k in range(lo, mid + 1):
                labels[k] = 1
            lo = mid + 1
        else:
            for k in range(mid, hi + 1):
                labels[k] = 0
            hi = mid - 1
    positives = [
        DemoRecord(traj.steps[k].observation, traj.steps[k].action, 1, source=source)
        for k, v in sorted(labels.items()) if v == 1
    ]
    negatives = [
        DemoRecord(traj.steps[k].observation, traj.steps[k].action, 0, source=source)
        for k, v in sorted(labels.items()) if v == 0
    ]
    return positives, negatives, probes


class UncertainQueue:
    """Bounded FIFO of uncertain segments (bounded by total queued states)."""

    def __init__(self, max_states=10_000):
        self.max_states = max_states
        self.segments = deque()
        self.total = 0

    def push(self, segment):
        self.segments.append(segment)
        self.total += len(segment)
        while self.total > self.max_states and len(self.segments) > 1:
            dropped = self.segments.popleft()
            self.total -= len(dropped)

    def pop(self):
        seg = self.segments.popleft()
        self.total -= len(seg)
        return seg

    def __len__(self):
        return len(self.segments)


METRIC_FIELDS = (
    "iteration", "env_steps", "mean_reward", "success_rate", "failure_rate",
    "mean_ep_len", "activation_prob", "constraint_loss", "constraint_accuracy",
)


def ceres_loop(env_d, env_r, policy_d, policy_r, cnet, value_d, value_r,
               box, config, ppo_config, rng, on_iteration=None):
    """Full co-training loop; returns (policy_d, policy_r, cnet, metrics).

    metrics is a list of dicts with METRIC_FIELDS keys, one per iteration.
    """
    buffer = ReplayBuffer()
    queue = UncertainQueue(config.queue_max_states)
    cnet_adam = mlp.AdamState.for_params(cnet, lr=config.constraint_lr)
    adam_d = mlp.AdamState.for_params(policy_d.net, lr=ppo_config.policy_lr)
    vadam_d = mlp.AdamState.for_params(value_d, lr=ppo_config.value_lr)
    adam_r = mlp.AdamState.for_params(policy_r.net, lr=ppo_config.policy_lr)
    vadam_r = mlp.AdamState.for_params(value_r, lr=ppo_config.value_lr)
    metrics = []
    env_steps = 0
    cnet_trained = False
    for it in range(1, config.n_iter + 1):
        act_prob = activation_probability(
            cnet, buffer, box, config.n_in, config.activation_slice,
            ready=cnet_trained,
        )
        batch, pos, neg, uncertain, stats = sample(
            env_d, policy_d, value_d, cnet, box, config.n_in, act_prob, rng,
            config.steps_per_iter, source="ceres-direct", n_s=config.n_s,
        )
        env_steps += len(batch)
        ppo.update_policy(policy_d, value_d, batch, ppo_config, adam_d, vadam_d, rng)
        buffer.extend(pos)
        buffer.extend(neg)
        for seg in uncertain:
            queue.push(seg)

        prober = RecoveryProber(
            env_r, policy_r, cnet, box, config.n_in, config.n_s, config.n_a,
            rng, act_prob if config.constrain_recovery else 0.0,
        )
        promotions_p, promotions_n = [], []
        while queue and prober.steps_collected() < config.recovery_steps_per_iter:
            seg = queue.pop()
            p, n, _ = recovery_label(seg, prober)
            promotions_p.extend(p)
            promotions_n.extend(n)
        rbatch = prober.batch(value_r)
        if rbatch is not None and len(rbatch) >= ppo_config.minibatch:
            ppo.update_policy(policy_r, value_r, rbatch, ppo_config, adam_r, vadam_r, rng)
        buffer.extend(promotions_p)
        buffer.extend(promotions_n)
        buffer.extend(prober.extra_negatives)

        closs = float("nan")
        if (buffer.n_positive >= config.min_class_count
                and buffer.n_negative >= config.min_class_count):
            closs = update_constraints(
                cnet, buffer.records, cnet_adam, box, config.n_in, rng,
                config.constraint_batches,
            )
            cnet_trained = True
        caccuracy = activation_probability(
            cnet, buffer, box, config.n_in, config.activation_slice,
            ready=cnet_trained,
        )
        row = {
            "iteration": it,
            "env_steps": env_steps,
            "mean_reward": stats["mean_reward"],
            "success_rate": stats["success_rate"],
            "failure_rate": stats["failure_rate"],
            "mean_ep_len": stats["mean_ep_len"],
            "activation_prob": act_prob,
            "constraint_loss": closs,
            "constraint_accuracy": caccuracy,
        }
        metrics.append(row)
        if on_iteration is not None:
            on_iteration(row, buffer)
    return policy_d, policy_r, cnet, metrics, buffer
