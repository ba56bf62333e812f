"""Clipped-surrogate PPO with a diagonal Gaussian policy.

Used for the direct policy, the recovery policy, and the unconstrained
baseline. The policy network predicts the action mean; the log-std is a
state-independent learned vector. Updates consume raw (pre-projection)
actions only: training stays on-policy even when executed actions were
corrected by the safety layer.
"""

from dataclasses import dataclass, field

import numpy as np

from . import mlp


@dataclass
class DiscountConfig:
    gamma: float = 0.99
    lam: float = 0.95

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must be in [0, 1]")


@dataclass
class PpoConfig:
    discounts: DiscountConfig = field(default_factory=DiscountConfig)
    clip: float = 0.2
    epochs: int = 10
    minibatch: int = 64
    horizon: int = 2048  # steps collected per iteration
    policy_lr: float = 3e-4
    value_lr: float = 3e-4
    value_coef: float = 0.5
    normalize_advantages: bool = True


@dataclass
class GaussianPolicy:
    """Mean network + learned state-independent log-std."""

    net: mlp.MlpParams
    log_std: np.ndarray

    @property
    def n_act(self):
        return self.log_std.shape[0]

    def mean(self, state):
        out, _ = mlp.forward(self.net, state)
        return out


def init_policy(rng, n_obs, n_act, hidden=(64, 64), log_std_init=-0.7):
    net = mlp.init_mlp(rng, (n_obs, *hidden, n_act), out_gain=0.01)
    return GaussianPolicy(net, log_std_init * np.ones(n_act))


def init_value_net(rng, n_obs, hidden=(64, 64)):
    return mlp.init_mlp(rng, (n_obs, *hidden, 1))


def sample_action(policy, state, rng):
    """Draw a ~ N(mean(state), diag(std^2)); returns (action, log_prob)."""
    mean = policy.mean(state)
    std = np.exp(policy.log_std)
    action = mean + std * rng.standard_normal(policy.n_act)
    return action, float(log_prob(policy, mean, action))


def log_prob(policy, mean, action):
    """Gaussian log-density; mean may be a batch (then action too)."""
    std = np.exp(policy.log_std)
    z = (action - mean) / std
    return (
        -0.5 * np.sum(z * z, axis=-1)
        - np.sum(policy.log_std)
        - 0.5 * policy.n_act * np.log(2 * np.pi)
    )


@dataclass
class RolloutBatch:
    """Flat per-step arrays; episode boundaries marked by `ends`."""

    states: np.ndarray  # (T, n_obs)
    actions: np.ndarray  # (T, n_act) raw policy samples
    log_probs: np.ndarray  # (T,)
    rewards: np.ndarray  # (T,)
    values: np.ndarray  # (T,)
    ends: np.ndarray  # (T,) bool, True on the last step of an episode
    last_value: float = 0.0  # bootstrap value when the final step is truncated

    def __len__(self):
        return self.states.shape[0]


def value_estimates(value_net, states):
    out, _ = mlp.forward(value_net, states)
    return out[:, 0]


def compute_advantages(batch, discounts):
    """Generalized advantage estimation, reset at episode ends.

    Returns (advantages, value_targets) with targets = advantages + values.
    """
    gamma, lam = discounts.gamma, discounts.lam
    T = len(batch)
    adv = np.zeros(T)
    last = 0.0
    for t in reversed(range(T)):
        if batch.ends[t]:
            next_value = 0.0
            last = 0.0
        elif t == T - 1:
            next_value = batch.last_value
        else:
            next_value = batch.values[t + 1]
        delta = batch.rewards[t] + gamma * next_value - batch.values[t]
        last = delta + gamma * lam * last
        adv[t] = last
    return adv, adv + batch.values


class NonFiniteLossError(RuntimeError):
    """Surrogate loss went non-finite; the update was aborted."""


def update_policy(policy, value_net, batch, config,
                  policy_adam=None, value_adam=None, rng=None):
    """One PPO update from an on-policy batch; returns diagnostics.

    Ascends the clipped surrogate for config.epochs over shuffled
    minibatches; the value net fits the GAE targets with squared error.
    """
    rng = rng or np.random.default_rng(0)
    if policy_adam is None:
        policy_adam = mlp.AdamState.for_params(policy.net, lr=config.policy_lr)
    if value_adam is None:
        value_adam = mlp.AdamState.for_params(value_net, lr=config.value_lr)
    adv, targets = compute_advantages(batch, config.discounts)
    if config.normalize_advantages and len(batch) > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    T = len(batch)
    clip = config.clip
    std = np.exp(policy.log_std)
    kls, clip_fracs = [], []
    for _ in range(config.epochs):
        order = rng.permutation(T)
        for start in range(0, T, config.minibatch):
            idx = order[start:start + config.minibatch]
            states = batch.states[idx]
            actions = batch.actions[idx]
            old_logp = batch.log_probs[idx]
            a_hat = adv[idx]
            mean, tape = mlp.forward(policy.net, states)
            logp = log_prob(policy, mean, actions)
            ratio = np.exp(logp - old_logp)
            surr1 = ratio * a_hat
            surr2 = np.clip(ratio, 1 - clip, 1 + clip) * a_hat
            loss = -np.minimum(surr1, surr2).mean()
            if not np.isfinite(loss):
                raise NonFiniteLossError("non-finite PPO surrogate loss")
            # gradient flows only where the unclipped branch is selected
            active = surr1 <= surr2
            n = len(idx)
            dlogp = np.where(active, -a_hat * ratio, 0.0) / n
            std2 = std * std
            dmean = dlogp[:, None] * (actions - mean) / std2
            w_grads, b_grads, _ = mlp.backward(tape, dmean)
            mlp.adam_step(policy.net, w_grads, b_grads, policy_adam)
            z2 = ((actions - mean) / std) ** 2
            dlogstd = (dlogp[:, None] * (z2 - 1.0)).sum(axis=0)
            policy.log_std -= policy_adam.lr * dlogstd

            v_out, v_tape = mlp.forward(value_net, states)
            v_err = v_out[:, 0] - targets[idx]
            dv = (config.value_coef * 2.0 * v_err / n)[:, None]
            vw, vb, _ = mlp.backward(v_tape, dv)
            mlp.adam_step(value_net, vw, vb, value_adam)

            kls.append(float(np.mean(old_logp - logp)))
            clip_fracs.append(float(np.mean(np.abs(ratio - 1) > clip)))
    return {
        "approx_kl": float(np.mean(kls)),
        "clip_fraction": float(np.mean(clip_fracs)),
        "policy_adam": policy_adam,
        "value_adam": value_adam,
    }
