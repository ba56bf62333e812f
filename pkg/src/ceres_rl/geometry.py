"""Linear action-space constraints and the QP safety layer.

A constraint set is a small polytope {a : A a <= b} over the action space,
kept non-empty by construction: each offset is decomposed as
b_i = row_i . a_hat + b_plus_i with b_plus_i bounded away from zero, so the
interior point a_hat always satisfies every constraint with positive slack.
"""

from dataclasses import dataclass
from itertools import combinations

import numpy as np


class InfeasibleProjectionError(RuntimeError):
    """Raised when no action satisfies the constraints within tolerance.

    This signals a broken constraint set (assembly bug), not a user error:
    sets built through assemble() always contain their interior point.
    """


@dataclass(frozen=True)
class ActionBox:
    """Axis-aligned action bounds, e.g. [-0.1, 0.1]^2."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        if not np.all(self.lower < self.upper):
            raise ValueError("action box requires lower < upper per dimension")

    @classmethod
    def symmetric(cls, half_range, n_act):
        return cls(-half_range * np.ones(n_act), half_range * np.ones(n_act))

    @property
    def n_act(self):
        return self.lower.shape[0]

    @property
    def center(self):
        return 0.5 * (self.lower + self.upper)

    @property
    def half_widths(self):
        return 0.5 * (self.upper - self.lower)

    @property
    def half_range(self):
        """Scalar half range used for offset bounds (max over dimensions)."""
        return float(np.max(self.half_widths))

    def clip(self, a):
        return np.clip(a, self.lower, self.upper)


@dataclass
class LinearConstraintSet:
    """n_in half-planes row_i . a <= b_i with a guaranteed interior point."""

    rows: np.ndarray  # (n_in, n_act), unit rows
    offsets: np.ndarray  # (n_in,)
    interior_point: np.ndarray  # (n_act,)
    positive_offsets: np.ndarray  # (n_in,), slack of interior point

    @property
    def n_in(self):
        return self.rows.shape[0]

    @property
    def n_act(self):
        return self.rows.shape[1]

    def values(self, a):
        """Constraint values g_i = row_i . a - b_i for all i at once."""
        return self.rows @ np.asarray(a, dtype=float) - self.offsets

    def validate(self, b_plus_min, b_plus_max, atol=1e-9):
        """Check every structural invariant; raises AssertionError on failure."""
        norms = np.linalg.norm(self.rows, axis=1)
        assert np.all(np.abs(norms - 1.0) <= atol), "rows must be unit norm"
        recomposed = self.rows @ self.interior_point + self.positive_offsets
        assert np.allclose(recomposed, self.offsets, atol=atol), "offset decomposition broken"
        assert np.all(self.positive_offsets >= b_plus_min - atol)
        assert np.all(self.positive_offsets <= b_plus_max + atol)
        assert np.all(-self.values(self.interior_point) >= b_plus_min - atol)


def spherical_to_cartesian(angles):
    """Map n_act-1 angles to a unit vector in R^n_act.

    Convention: x_0 = cos(phi_1), x_k = sin(phi_1)...sin(phi_k) cos(phi_{k+1}),
    and the last component is the product of all sines. Differentiable
    everywhere, and the output norm is exactly 1 up to rounding.
    """
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    n_act = angles.shape[-1] + 1
    if n_act < 2:
        raise ValueError("need at least one angle (action dimension >= 2)")
    sines = np.sin(angles)
    cosines = np.cos(angles)
    out = np.empty(angles.shape[:-1] + (n_act,))
    sin_prod = np.ones(angles.shape[:-1])
    for k in range(n_act - 1):
        out[..., k] = sin_prod * cosines[..., k]
        sin_prod = sin_prod * sines[..., k]
    out[..., n_act - 1] = sin_prod
    return out


def spherical_jacobian(angles):
    """Jacobian d x / d phi of spherical_to_cartesian, shape (..., n_act, n_act-1)."""
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    n_ang = angles.shape[-1]
    n_act = n_ang + 1
    sines = np.sin(angles)
    cosines = np.cos(angles)
    jac = np.zeros(angles.shape[:-1] + (n_act, n_ang))
    # x_k = prod_{j<k+1} sin(phi_j) * cos(phi_{k+1}) (cos term absent for last k)
    for k in range(n_act):
        factors_sin = range(min(k, n_ang))  # sine indices in x_k
        cos_idx = k if k < n_ang else None
        for m in range(n_ang):
            if m not in factors_sin and m != cos_idx:
                continue
            term = np.ones(angles.shape[:-1])
            for j in factors_sin:
                term = term * (cosines[..., j] if j == m else sines[..., j])
            if cos_idx is not None:
                term = term * (-sines[..., cos_idx] if cos_idx == m else cosines[..., cos_idx])
            jac[..., k, m] = term
    return jac


def constraint_value(cset, i, a):
    """g_i(a) = row_i . a - b_i; <= 0 means constraint i is satisfied."""
    if not 0 <= i < cset.n_in:
        raise IndexError(f"constraint index {i} out of range [0, {cset.n_in})")
    return float(cset.rows[i] @ np.asarray(a, dtype=float) - cset.offsets[i])


def satisfaction_margin(g):
    """relu(-g): positive when the constraint is satisfied with slack."""
    return np.maximum(0.0, -g)


def violation_margin(g):
    """relu(g): positive when the constraint is violated."""
    return np.maximum(0.0, g)


def offset_bounds(box):
    """(b_plus_min, b_plus_max) = (10% of half range, half range)."""
    half = box.half_range
    return 0.1 * half, half


def _sigmoid(x):
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def assemble(raw_angles, raw_offsets, raw_interior, box):
    """Build a LinearConstraintSet from unconstrained network outputs.

    raw_angles: (n_in, n_act-1); raw_offsets: (n_in,); raw_interior: (n_act,).
    Offsets are squashed into [b_plus_min, b_plus_max] with a scaled sigmoid,
    the interior point into the box with tanh, so all invariants hold for any
    raw input and the map stays smooth.
    """
    raw_angles = np.asarray(raw_angles, dtype=float)
    raw_offsets = np.asarray(raw_offsets, dtype=float)
    raw_interior = np.asarray(raw_interior, dtype=float)
    b_plus_min, b_plus_max = offset_bounds(box)
    rows = spherical_to_cartesian(raw_angles)
    b_plus = b_plus_min + (b_plus_max - b_plus_min) * _sigmoid(raw_offsets)
    interior = box.center + box.half_widths * np.tanh(raw_interior)
    offsets = rows @ interior + b_plus
    return LinearConstraintSet(rows, offsets, interior, b_plus)


def _augmented_system(cset, box):
    """Constraint rows plus (optionally) the action-box faces."""
    A, b = cset.rows, cset.offsets
    if box is not None:
        n_act = cset.n_act
        A = np.vstack([A, np.eye(n_act), -np.eye(n_act)])
        b = np.concatenate([b, box.upper, -box.lower])
    return A, b


def project_action(a_tilde, cset, box=None, tol=1e-8):
    """Project a raw action onto {a : A a <= b} (nearest feasible action).

    When a box is given, its faces join the constraint system, so the
    projection never leaves the action domain (the interior point is
    strictly inside the box, keeping the system feasible).

    Exhaustive active-set enumeration: for every subset of constraints of
    size <= n_act, solve the equality-constrained projection and keep the
    candidate that is primal feasible with non-negative multipliers. Exact
    for the small dense sets used here; singular (parallel-row) subsets are
    skipped.
    """
    a_tilde = np.asarray(a_tilde, dtype=float)
    A, b = _augmented_system(cset, box)
    if np.all(A @ a_tilde - b <= tol):
        return a_tilde.copy()
    n_rows, n_act = A.shape
    best = None
    best_dist = np.inf
    for size in range(1, min(n_rows, n_act) + 1):
        for subset in combinations(range(n_rows), size):
            As = A[list(subset)]
            gram = As @ As.T
            if abs(np.linalg.det(gram)) < 1e-12:
                continue  # parallel / duplicate rows
            lam = np.linalg.solve(gram, As @ a_tilde - b[list(subset)])
            if np.any(lam < -tol):
                continue
            a = a_tilde - As.T @ lam
            if np.all(A @ a - b <= tol):
                dist = float(np.dot(a - a_tilde, a - a_tilde))
                if dist < best_dist:
                    best_dist = dist
                    best = a
    if best is None:
        raise InfeasibleProjectionError(
            "no feasible projection found; constraint set looks empty"
        )
    return best


def kkt_residual(a_tilde, a_star, cset, box=None, tol=1e-8):
    """Max KKT residual of a candidate projection (stationarity via lstsq).

    Returns max of: primal infeasibility, negative multipliers,
    complementary slackness, and stationarity residual.
    """
    a_tilde = np.asarray(a_tilde, dtype=float)
    a_star = np.asarray(a_star, dtype=float)
    A, b = _augmented_system(cset, box)
    g = A @ a_star - b
    active = g >= -1e-6
    residual = float(max(0.0, np.max(g, initial=0.0)))
    if not np.any(active):
        return max(residual, float(np.linalg.norm(a_star - a_tilde)))
    A_act = A[active]
    lam, *_ = np.linalg.lstsq(A_act.T, a_tilde - a_star, rcond=None)
    residual = max(residual, float(max(0.0, -np.min(lam, initial=0.0))))
    stat = a_star - a_tilde + A_act.T @ lam
    residual = max(residual, float(np.linalg.norm(stat)))
    comp = np.abs(lam * g[active])
    residual = max(residual, float(np.max(comp, initial=0.0)))
    return residual


def polytope_vertices(cset, box):
    """Vertices of {A a <= b} intersected with the action box, in 2-D only.

    Enumerates pairwise line intersections (constraints + box edges), keeps
    feasible points, and orders them counter-clockwise around the centroid.
    Used by the serve endpoint to ship the feasible polygon to the UI.
    """
    if cset.n_act != 2:
        raise ValueError("vertex enumeration implemented for 2-D actions only")
    A = np.vstack([cset.rows, np.eye(2), -np.eye(2)])
    b = np.concatenate([
        cset.offsets,
        box.upper,
        -box.lower,
    ])
    pts = []
    n = A.shape[0]
    for i, j in combinations(range(n), 2):
        M = A[[i, j]]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        p = np.linalg.solve(M, b[[i, j]])
        if np.all(A @ p - b <= 1e-9):
            pts.append(p)
    if not pts:
        return np.zeros((0, 2))
    pts = np.unique(np.round(np.array(pts), 12), axis=0)
    centroid = pts.mean(axis=0)
    order = np.argsort(np.arctan2(pts[:, 1] - centroid[1], pts[:, 0] - centroid[0]))
    return pts[order]
