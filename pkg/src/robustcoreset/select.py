"""Greedy coreset selection driven by the gap certificate, plus baselines.

Three ways to shrink the training set by n_del instances:

* ``greedy_exact``      re-maximizes the gap over the weight ball for every
                        candidate removal at every step (costly, exact);
* ``greedy_fixed_w``    maximizes once at the full set, then scores
                        candidates by the quadratic at that fixed weight;
* ``greedy_oneshot``    same fixed weight, but ranks all single-removal
                        scores once and removes the n_del smallest.

Baselines (``baseline_select``): random, margin (largest |score| removed
first), k-center-greedy cover and kernel herding, all operating in the
kernel feature space of the trained model.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import bound
from .erm import Model

__all__ = [
    "SelectionTrace",
    "ValidationSet",
    "greedy_exact",
    "greedy_fixed_w",
    "greedy_oneshot",
    "baseline_select",
    "BASELINE_METHODS",
]

BASELINE_METHODS = ("random", "herding", "kcenter", "margin")


class ValidationSet(NamedTuple):
    """Validation-side inputs needed to record per-step bound values."""

    K_cross: np.ndarray
    k_diag: np.ndarray
    y: np.ndarray


@dataclass
class SelectionTrace:
    """Ordered removals with per-step (gap, error-bound) values."""

    method: str
    seed: int
    n: int
    removal_order: list = field(default_factory=list)
    per_step: list = field(default_factory=list)

    @property
    def n_del(self) -> int:
        return len(self.removal_order)

    def kept_mask(self, n_del: int | None = None) -> np.ndarray:
        """Binary mask after the first ``n_del`` removals (all by default)."""
        if n_del is None:
            n_del = self.n_del
        if not 0 <= n_del <= self.n_del:
            raise ValueError("n_del outside the recorded trace")
        v = np.ones(self.n)
        v[self.removal_order[:n_del]] = 0.0
        return v

    def kept_indices(self, n_del: int | None = None) -> np.ndarray:
        return np.flatnonzero(self.kept_mask(n_del) > 0)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "seed": self.seed,
            "n": self.n,
            "removal_order": [int(i) for i in self.removal_order],
            "per_step": [[float(a), float(b)] for a, b in self.per_step],
        }


def _check_budget(n, n_del):
    if not 0 <= n_del < n:
        raise ValueError(f"n_del must be in [0, n), got {n_del} for n={n}")


def _class_guard(y, preserve_classes):
    """Returns removable(i, kept_counts) respecting the preserve flag."""
    y = np.asarray(y)

    def removable(i, counts):
        if not preserve_classes:
            return True
        key = 1 if y[i] > 0 else -1
        return counts[key] > 1

    counts = {1: int(np.sum(y > 0)), -1: int(np.sum(y <= 0))}
    return removable, counts


def _step_ub(model_ref, val, Q, dg, lam_abs):
    if val is None or model_ref is None:
        return math.nan
    R = bound.radius(max(dg, 0.0), lam_abs)
    zeta, _ = bound.certify(model_ref, val.K_cross, val.k_diag, val.y, R)
    return bound.worst_case_error_ub(zeta, Q)


def greedy_exact(form, y, S, Q, n_del, *, model_ref: Model | None = None,
                 val: ValidationSet | None = None,
                 preserve_classes: bool = False, seed: int = 0) -> SelectionTrace:
    """Remove one instance at a time, re-solving the ball maximization for
    every candidate and keeping the removal with the smallest worst-case
    gap (ties to the smallest index)."""
    n = form.n
    _check_budget(n, n_del)
    lam_abs = model_ref.lam_abs if model_ref is not None else 1.0
    removable, counts = _class_guard(y, preserve_classes)
    v = np.ones(n)
    trace = SelectionTrace(method="robust-exact", seed=seed, n=n)
    for _ in range(n_del):
        best_dg, best_i = math.inf, -1
        for i in np.flatnonzero(v > 0):
            if not removable(i, counts):
                continue
            v[i] = 0.0
            dg = bound.maximize_on_ball(form, v, S).dg_max
            v[i] = 1.0
            if dg < best_dg:
                best_dg, best_i = dg, int(i)
        if best_i < 0:
            raise ValueError("no removable candidate left")
        v[best_i] = 0.0
        counts[1 if y[best_i] > 0 else -1] -= 1
        trace.removal_order.append(best_i)
        trace.per_step.append((best_dg, _step_ub(model_ref, val, Q, best_dg, lam_abs)))
    return trace


class _QuadState:
    """Incremental evaluation of the gap quadratic under coordinate zeroing."""

    def __init__(self, form, z):
        self.form = form
        self.z = z.copy()
        self.Az = form.A @ self.z
        self.value = float(self.z @ self.Az + form.b @ self.z + form.c)

    def removal_value(self, i):
        zi = self.z[i]
        return self.value - 2.0 * zi * self.Az[i] + zi * zi * self.form.A[i, i] \
            - self.form.b[i] * zi

    def remove(self, i):
        self.value = self.removal_value(i)
        zi = self.z[i]
        if zi != 0.0:
            self.Az -= self.form.A[:, i] * zi
            self.z[i] = 0.0


def _fixed_w_state(form, S):
    res = bound.maximize_on_ball(form, np.ones(form.n), S)
    return res.w_star, _QuadState(form, res.w_star)


def greedy_fixed_w(form, y, S, Q, n_del, *, model_ref: Model | None = None,
                   val: ValidationSet | None = None,
                   preserve_classes: bool = False, seed: int = 0) -> SelectionTrace:
    """One ball maximization at the full set; then greedy removals scored by
    the quadratic at that fixed worst-case weight, re-evaluated per step."""
    n = form.n
    _check_budget(n, n_del)
    lam_abs = model_ref.lam_abs if model_ref is not None else 1.0
    removable, counts = _class_guard(y, preserve_classes)
    _, state = _fixed_w_state(form, S)
    active = np.ones(n, dtype=bool)
    trace = SelectionTrace(method="robust-fixed-w", seed=seed, n=n)
    for _ in range(n_del):
        best_dg, best_i = math.inf, -1
        for i in np.flatnonzero(active):
            if not removable(i, counts):
                continue
            dg = state.removal_value(i)
            if dg < best_dg:
                best_dg, best_i = dg, int(i)
        if best_i < 0:
            raise ValueError("no removable candidate left")
        state.remove(best_i)
        active[best_i] = False
        counts[1 if y[best_i] > 0 else -1] -= 1
        trace.removal_order.append(best_i)
        trace.per_step.append((best_dg, _step_ub(model_ref, val, Q, best_dg, lam_abs)))
    return trace


def greedy_oneshot(form, y, S, Q, n_del, *, model_ref: Model | None = None,
                   val: ValidationSet | None = None,
                   preserve_classes: bool = False, seed: int = 0) -> SelectionTrace:
    """Rank every instance once by its single-removal gap at the fixed
    worst-case weight and drop the n_del smallest in one pass."""
    n = form.n
    _check_budget(n, n_del)
    lam_abs = model_ref.lam_abs if model_ref is not None else 1.0
    removable, counts = _class_guard(y, preserve_classes)
    _, state = _fixed_w_state(form, S)
    scores = np.array([state.removal_value(i) for i in range(n)])
    ranking = np.argsort(scores, kind="stable")
    trace = SelectionTrace(method="robust-oneshot", seed=seed, n=n)
    for i in ranking:
        if len(trace.removal_order) == n_del:
            break
        if not removable(i, counts):
            continue
        state.remove(int(i))
        counts[1 if y[i] > 0 else -1] -= 1
        trace.removal_order.append(int(i))
        dg = state.value
        trace.per_step.append((dg, _step_ub(model_ref, val, Q, dg, lam_abs)))
    if len(trace.removal_order) < n_del:
        raise ValueError("class preservation exhausted the candidate pool")
    return trace


def _kcenter_order(K):
    n = K.shape[0]
    diag = np.diag(K)
    centrality = diag - 2.0 * K.mean(axis=1)
    order = [int(np.argmin(centrality))]
    d2 = diag + diag[order[0]] - 2.0 * K[:, order[0]]
    d2[order[0]] = -np.inf
    for _ in range(n - 1):
        nxt = int(np.argmax(d2))
        order.append(nxt)
        d2 = np.minimum(d2, diag + diag[nxt] - 2.0 * K[:, nxt])
        d2[nxt] = -np.inf
    return order


def _herding_order(K):
    n = K.shape[0]
    diag = np.diag(K)
    s = K.mean(axis=1)
    order = []
    t = np.zeros(n)
    ss = 0.0
    s_kept = 0.0
    taken = np.zeros(n, dtype=bool)
    for k in range(n):
        # distance of the candidate-augmented kept mean to the full mean,
        # scaled by (k+1)^2 and with the constant ||mean||^2 term dropped
        obj = (ss + 2.0 * t + diag) - 2.0 * (k + 1) * (s_kept + s)
        obj[taken] = np.inf
        pick = int(np.argmin(obj))
        order.append(pick)
        taken[pick] = True
        ss += 2.0 * t[pick] + diag[pick]
        t = t + K[:, pick]
        s_kept += s[pick]
    return order


def _removals_from_keep_order(order, n_del, y, preserve_classes):
    removable, counts = _class_guard(y, preserve_classes)
    removal = []
    for i in reversed(order):
        if len(removal) == n_del:
            break
        if not removable(i, counts):
            continue
        counts[1 if y[i] > 0 else -1] -= 1
        removal.append(int(i))
    if len(removal) < n_del:
        raise ValueError("class preservation exhausted the candidate pool")
    return removal


def baseline_select(method: str, K, y, model_ref: Model | None, n_del: int,
                    seed: int = 0, *, preserve_classes: bool = False) -> SelectionTrace:
    """Reference selectors: random, margin, kcenter, herding.

    margin removes the instances farthest from the decision boundary
    first (largest |score|), so the kept set hugs the margin; kcenter and
    herding build keep-orders in kernel feature space and drop the most
    redundant points first.
    """
    K = np.asarray(K, dtype=float)
    y = np.asarray(y)
    n = K.shape[0]
    _check_budget(n, n_del)
    if method == "random":
        rng = np.random.default_rng(seed)
        candidates = list(rng.permutation(n))
        removable, counts = _class_guard(y, preserve_classes)
        removal = []
        for i in candidates:
            if len(removal) == n_del:
                break
            if not removable(i, counts):
                continue
            counts[1 if y[i] > 0 else -1] -= 1
            removal.append(int(i))
        if len(removal) < n_del:
            raise ValueError("class preservation exhausted the candidate pool")
    elif method == "margin":
        if model_ref is None:
            raise ValueError("margin baseline needs the reference model")
        order = np.argsort(-np.abs(model_ref.train_scores), kind="stable")
        removable, counts = _class_guard(y, preserve_classes)
        removal = []
        for i in order:
            if len(removal) == n_del:
                break
            if not removable(i, counts):
                continue
            counts[1 if y[i] > 0 else -1] -= 1
            removal.append(int(i))
        if len(removal) < n_del:
            raise ValueError("class preservation exhausted the candidate pool")
    elif method == "kcenter":
        removal = _removals_from_keep_order(_kcenter_order(K), n_del, y,
                                            preserve_classes)
    elif method == "herding":
        removal = _removals_from_keep_order(_herding_order(K), n_del, y,
                                            preserve_classes)
    else:
        raise ValueError(f"unknown baseline method {method!r}")
    trace = SelectionTrace(method=method, seed=seed, n=n)
    trace.removal_order = removal
    trace.per_step = [(math.nan, math.nan)] * len(removal)
    return trace
