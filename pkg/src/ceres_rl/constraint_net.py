"""State-conditioned constraint predictor and its margin-based training loss.

The network maps an observation to raw head outputs which assemble() turns
into a guaranteed-feasible constraint set. Training minimizes, per demo,
the maximum violation margin (positives) or the minimum satisfaction margin
(negatives); gradients are computed analytically through the spherical map,
the offset/interior squashing, and the max/min selections.
"""

from dataclasses import dataclass

import numpy as np

from . import mlp
from .geometry import (
    assemble,
    offset_bounds,
    spherical_jacobian,
    spherical_to_cartesian,
    _sigmoid,
)


@dataclass
class LabeledDemo:
    """(state, action) with indicator 1 = positive, 0 = negative."""

    state: np.ndarray
    action: np.ndarray
    indicator: int

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=float)
        self.action = np.asarray(self.action, dtype=float)
        if self.indicator not in (0, 1):
            raise ValueError("indicator must be exactly 0 or 1")


@dataclass
class ConstraintTrainConfig:
    positives_per_batch: int = 32
    negatives_per_batch: int = 32
    epochs: int = 10
    n_in: int = 2

    def __post_init__(self):
        if self.positives_per_batch < 1 or self.negatives_per_batch < 1:
            raise ValueError("both class counts must be >= 1")


class SingleClassBufferError(ValueError):
    """Training needs at least one positive and one negative demo."""


def head_dim(n_in, n_act):
    """Raw outputs per state: angles + offsets + interior point."""
    return n_in * (n_act - 1) + n_in + n_act


def split_head(out, n_in, n_act):
    """Split a raw head vector/batch into (angles, raw_offsets, raw_interior)."""
    n_ang = n_in * (n_act - 1)
    angles = out[..., :n_ang].reshape(out.shape[:-1] + (n_in, n_act - 1))
    raw_off = out[..., n_ang:n_ang + n_in]
    raw_int = out[..., n_ang + n_in:]
    return angles, raw_off, raw_int


def init_constraint_net(rng, n_obs, n_in, n_act, hidden=(64, 64)):
    return mlp.init_mlp(rng, (n_obs, *hidden, head_dim(n_in, n_act)))


def predict_constraints(net, state, box, n_in):
    """Predict the feasible-by-construction constraint set for one state."""
    out, _ = mlp.forward(net, np.asarray(state, dtype=float))
    angles, raw_off, raw_int = split_head(out, n_in, box.n_act)
    return assemble(angles, raw_off, raw_int, box)


def constraint_loss(cset, demo):
    """Per-demo loss: max violation (positive) or min satisfaction (negative)."""
    g = cset.values(demo.action)
    if demo.indicator == 1:
        return float(np.max(np.maximum(0.0, g)))
    return float(np.min(np.maximum(0.0, -g)))


def _batch_geometry(out, actions, box, n_in):
    """Vectorized constraint values g (N, n_in) plus cached intermediates."""
    n_act = box.n_act
    angles, raw_off, raw_int = split_head(out, n_in, n_act)
    rows = spherical_to_cartesian(angles)  # (N, n_in, n_act)
    b_plus_min, b_plus_max = offset_bounds(box)
    sig = _sigmoid(raw_off)
    b_plus = b_plus_min + (b_plus_max - b_plus_min) * sig
    tanh_int = np.tanh(raw_int)
    interior = box.center + box.half_widths * tanh_int
    rel = actions - interior  # (N, n_act)
    g = np.einsum("nia,na->ni", rows, rel) - b_plus
    cache = {
        "angles": angles, "rows": rows, "sig": sig, "tanh_int": tanh_int,
        "rel": rel, "b_span": b_plus_max - b_plus_min,
    }
    return g, cache


def batch_loss_and_grad(net, states, actions, indicators, box, n_in):
    """Mean constraint loss over a batch plus analytic parameter gradients.

    Max/min ties and relu kinks follow the lowest-index / zero-subgradient
    convention so the gradient is deterministic.
    Returns (loss, weight_grads, bias_grads, g_values).
    """
    states = np.asarray(states, dtype=float)
    actions = np.asarray(actions, dtype=float)
    indicators = np.asarray(indicators)
    out, tape = mlp.forward(net, states)
    g, cache = _batch_geometry(out, actions, box, n_in)
    n = states.shape[0]
    viol = np.maximum(0.0, g)
    sat = np.maximum(0.0, -g)
    pos = indicators == 1
    per_demo = np.where(pos, viol.max(axis=1), sat.min(axis=1))
    loss = float(per_demo.mean())

    # dL/dg: one selected constraint per demo, zero subgradient at kinks
    dg = np.zeros_like(g)
    idx_pos = np.argmax(viol, axis=1)  # lowest index on ties
    idx_neg = np.argmin(sat, axis=1)
    rows_i = np.arange(n)
    sel = np.where(pos, idx_pos, idx_neg)
    g_sel = g[rows_i, sel]
    grad_val = np.where(pos, (g_sel > 0).astype(float), -(g_sel < 0).astype(float))
    dg[rows_i, sel] = grad_val / n

    dout = _grad_g_to_head(dg, cache, box, n_in)
    w_grads, b_grads, _ = mlp.backward(tape, dout)
    return loss, w_grads, b_grads, g


def _grad_g_to_head(dg, cache, box, n_in):
    """Chain dL/dg back to the raw head outputs (angles, offsets, interior)."""
    rows, rel = cache["rows"], cache["rel"]
    n_act = box.n_act
    jac = spherical_jacobian(cache["angles"])  # (N, n_in, n_act, n_act-1)
    # g_i = rows_i . rel - b_plus_i
    d_angles = np.einsum("ni,niam,na->nim", dg, jac, rel)
    d_raw_off = dg * (-cache["b_span"] * cache["sig"] * (1.0 - cache["sig"]))
    d_interior = -np.einsum("ni,nia->na", dg, rows)
    d_raw_int = d_interior * box.half_widths * (1.0 - cache["tanh_int"] ** 2)
    n = dg.shape[0]
    return np.concatenate(
        [d_angles.reshape(n, n_in * (n_act - 1)), d_raw_off, d_raw_int], axis=1
    )


def batch_constraint_values(net, states, actions, box, n_in):
    """Constraint values g (N, n_in) without gradient bookkeeping."""
    out, _ = mlp.forward(net, np.asarray(states, dtype=float))
    g, _ = _batch_geometry(out, np.asarray(actions, dtype=float), box, n_in)
    return g


def separation_accuracy(net, demos, box, n_in):
    """Fraction of demos correctly separated by the predicted constraints.

    A positive counts when all g_i <= 0; a negative when some g_i >= 0
    (boundary counted as satisfied and as separated, respectively).
    """
    if len(demos) == 0:
        raise ValueError("separation accuracy of an empty demo set is undefined")
    states = np.stack([d.state for d in demos])
    actions = np.stack([d.action for d in demos])
    indicators = np.array([d.indicator for d in demos])
    g = batch_constraint_values(net, states, actions, box, n_in)
    ok_pos = np.all(g <= 0.0, axis=1)
    ok_neg = np.any(g >= 0.0, axis=1)
    correct = np.where(indicators == 1, ok_pos, ok_neg)
    return float(correct.mean())


def train_constraints(net, demos, config, box, rng, lr=1e-3, validate_every=0):
    """Supervised training over a labeled buffer.

    Each epoch iterates the negatives exactly once (seeded shuffle) in
    chunks of negatives_per_batch, pairing each chunk with positives drawn
    uniformly with replacement. Returns (net, history) where history holds
    per-epoch mean loss and separation accuracy.
    """
    positives = [d for d in demos if d.indicator == 1]
    negatives = [d for d in demos if d.indicator == 0]
    if not positives or not negatives:
        raise SingleClassBufferError(
            f"need both classes, got {len(positives)} positive / {len(negatives)} negative"
        )
    pos_states = np.stack([d.state for d in positives])
    pos_actions = np.stack([d.action for d in positives])
    neg_states = np.stack([d.state for d in negatives])
    neg_actions = np.stack([d.action for d in negatives])
    adam = mlp.AdamState.for_params(net, lr=lr)
    history = {"loss": [], "accuracy": []}
    n_neg = len(negatives)
    npb, ppb = config.negatives_per_batch, config.positives_per_batch
    b_plus_min, b_plus_max = offset_bounds(box)
    for _ in range(config.epochs):
        order = rng.permutation(n_neg)
        losses = []
        for start in range(0, n_neg, npb):
            neg_idx = order[start:start + npb]
            pos_idx = rng.integers(0, len(positives), size=ppb)
            states = np.concatenate([pos_states[pos_idx], neg_states[neg_idx]])
            actions = np.concatenate([pos_actions[pos_idx], neg_actions[neg_idx]])
            indicators = np.concatenate(
                [np.ones(len(pos_idx), dtype=int), np.zeros(len(neg_idx), dtype=int)]
            )
            loss, w_grads, b_grads, _ = batch_loss_and_grad(
                net, states, actions, indicators, box, config.n_in
            )
            mlp.adam_step(net, w_grads, b_grads, adam)
            losses.append(loss)
            if validate_every and adam.step % validate_every == 0:
                for s in states[:4]:
                    predict_constraints(net, s, box, config.n_in).validate(
                        b_plus_min, b_plus_max
                    )
        history["loss"].append(float(np.mean(losses)))
        history["accuracy"].append(separation_accuracy(net, demos, box, config.n_in))
    return net, history


def update_constraints(net, demos, adam, box, n_in, rng, n_batches,
                       positives_per_batch=32, negatives_per_batch=32):
    """Budgeted balanced-minibatch pass used during online co-training.

    Returns the mean minibatch loss (nan when a class is missing and no
    update could be made).
    """
    positives = [d for d in demos if d.indicator == 1]
    negatives = [d for d in demos if d.indicator == 0]
    if not positives or not negatives:
        return float("nan")
    pos_states = np.stack([d.state for d in positives])
    pos_actions = np.stack([d.action for d in positives])
    neg_states = np.stack([d.state for d in negatives])
    neg_actions = np.stack([d.action for d in negatives])
    losses = []
    for _ in range(n_batches):
        pos_idx = rng.integers(0, len(positives), size=positives_per_batch)
        neg_idx = rng.integers(0, len(negatives), size=negatives_per_batch)
        states = np.concatenate([pos_states[pos_idx], neg_states[neg_idx]])
        actions = np.concatenate([pos_actions[pos_idx], neg_actions[neg_idx]])
        indicators = np.concatenate(
            [np.ones(len(pos_idx), dtype=int), np.zeros(len(neg_idx), dtype=int)]
        )
        loss, w_grads, b_grads, _ = batch_loss_and_grad(
            net, states, actions, indicators, box, n_in
        )
        mlp.adam_step(net, w_grads, b_grads, adam)
        losses.append(loss)
    return float(np.mean(losses))
