"""Certified worst-case validation error bounds for coreset candidates.

Pipeline, for a reference model trained on all instances with uniform
weights:

1. The duality gap of the perturbed problem, as a function of the kept
   mask v and training weights w, is the convex quadratic

       q(v*w) = (v*w)' A (v*w) + b' (v*w) + c,
       A = diag(alpha*y) K diag(alpha*y) / (2 lam),
       b_i = loss(y_i, score_i) - alpha_i,
       c = (alpha*y)' K (alpha*y) / (2 lam),

   where lam is the regularization strength of the sum-form objective
   (``Model.lam_abs``); with that pairing q(all-ones) vanishes at the
   reference optimum.  The direct, normalized gap from
   ``erm.evaluate_gap`` is kept alongside as a diagnostic; the two agree
   for the hinge loss and differ for logistic only through the linear
   coefficient, which the acceptance suite logs.
2. ``maximize_on_ball`` maximizes q over the weight ball ||w - 1|| <= S
   (an eigenvalue problem plus a secular-equation root find).
3. The maximal gap gives a parameter-ball radius R = sqrt(2 dg / lam);
   every retrained optimum stays within R of the reference coefficients.
4. Validation points whose score interval stays positive are certified
   correct (zeta); minimizing the certified weight mass over the
   validation ball has a closed form, yielding the error upper bound.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .erm import Model, _conj_vec, _loss_vec, decision_scores

__all__ = [
    "QuadraticGapForm",
    "BallMax",
    "Counts",
    "WeightedIndicatorMin",
    "BoundReport",
    "BallMaximizationError",
    "quadratic_form",
    "maximize_on_ball",
    "radius",
    "score_interval",
    "certify",
    "min_weighted_indicator",
    "worst_case_error_ub",
    "certified_count_error_ub",
    "certificate",
]


class BallMaximizationError(RuntimeError):
    """Eigendecomposition or secular root bracketing failed."""


@dataclass(frozen=True)
class QuadraticGapForm:
    """Quadratic surrogate of the duality gap in the combined vector v*w."""

    A: np.ndarray
    b: np.ndarray
    c: float

    @property
    def n(self) -> int:
        return self.b.shape[0]

    def value(self, vw) -> float:
        vw = np.asarray(vw, dtype=float)
        return float(vw @ (self.A @ vw) + self.b @ vw + self.c)

    def reduced(self, active):
        """Restrict to active coordinates and recenter at w = 1.

        Returns (At, g, const) with q = u' At u + g' u + const for
        u = w_active - 1.
        """
        At = self.A[np.ix_(active, active)]
        bt = self.b[active]
        g = 2.0 * At.sum(axis=1) + bt
        const = float(At.sum() + bt.sum() + self.c)
        return At, g, const


def quadratic_form(model_ref: Model, K, y, lam: float,
                   exact_conjugate: bool = False) -> QuadraticGapForm:
    """Build (A, b, c) from the reference dual solution.

    ``lam`` is the sum-form regularization strength; pass
    ``model_ref.lam_abs`` so that q(1) = 0 at the reference optimum.

    The default linear coefficient is loss_i - alpha_i.  With
    ``exact_conjugate`` it becomes loss_i + loss*(-alpha_i), which makes
    q(v*w) the exact sum-form duality gap for both losses (the two
    coincide for hinge); certificates use the exact variant.
    """
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    s = model_ref.alpha * y
    A = (K * np.outer(s, s)) / (2.0 * lam)
    losses = _loss_vec(model_ref.loss, y, model_ref.train_scores)
    if exact_conjugate:
        b = losses + _conj_vec(model_ref.loss, model_ref.alpha)
    else:
        b = losses - model_ref.alpha
    c = float(s @ (K @ s)) / (2.0 * lam)
    return QuadraticGapForm(A=A, b=b, c=c)


@dataclass(frozen=True)
class BallMax:
    """Result of maximizing the gap quadratic over the training weight ball."""

    w_star: np.ndarray
    dg_max: float
    mu: float
    hard_case: bool
    u_norm: float
    kkt_residual: float


def maximize_on_ball(form: QuadraticGapForm, v, S: float,
                     max_bisect: int = 200) -> BallMax:
    """Maximize q(v*w) over ||w - 1|| <= S with removed coordinates at w=1.

    On the active subspace the problem is max u'Au + g'u over ||u|| <= S
    with A PSD, so the maximum sits on the boundary and the stationarity
    condition (mu I - A) u = g/2 with mu >= lambda_max(A) reduces to a
    monotone secular equation in mu, solved by bisection; when g has no
    component in the leading eigenspace (hard case) the norm constraint
    is met by adding a leading-eigenvector component.
    """
    if S < 0:
        raise ValueError("S must be nonnegative")
    v = np.asarray(v, dtype=float)
    n = form.n
    if v.shape != (n,):
        raise ValueError("mask length mismatch")
    w_star = np.ones(n)
    active = v != 0.0
    if S == 0.0 or not active.any():
        return BallMax(w_star=w_star, dg_max=form.value(v * w_star),
                       mu=0.0, hard_case=False, u_norm=0.0, kkt_residual=0.0)

    At, g, const = form.reduced(active)
    try:
        eigval, V = np.linalg.eigh(At)
    except np.linalg.LinAlgError as exc:
        raise BallMaximizationError(f"eigendecomposition failed: {exc}") from exc
    lam1 = float(eigval[-1])
    gamma = V.T @ (g / 2.0)
    gnorm = float(np.linalg.norm(g))

    def norm_sq_at(mu):
        with np.errstate(divide="ignore", over="ignore"):
            coef = gamma / (mu - eigval)
        return float(np.sum(coef * coef))

    delta = 1e-14 * (1.0 + abs(lam1))
    lo = lam1 + delta
    S2 = S * S
    hard = norm_sq_at(lo) < S2
    if hard:
        # g (nearly) orthogonal to the leading eigenspace: pin mu at the
        # top eigenvalue and fill the norm budget along that eigenvector.
        mu = lam1
        lead = eigval >= lam1 - 1e-12 * (1.0 + abs(lam1))
        coef = np.zeros_like(gamma)
        nl = ~lead
        coef[nl] = gamma[nl] / (lam1 - eigval[nl])
        u = V @ coef
        base = float(u @ u)
        tau = math.sqrt(max(S2 - base, 0.0))
        u = u + tau * V[:, -1]
    else:
        hi = lam1 + gnorm / (2.0 * S) + delta
        if norm_sq_at(hi) > S2:
            raise BallMaximizationError(
                f"secular bracket failed: |u({hi:.6g})| > S={S:.6g}")
        a_lo, a_hi = lo, hi
        for _ in range(max_bisect):
            mu = 0.5 * (a_lo + a_hi)
            if norm_sq_at(mu) >= S2:
                a_lo = mu
            else:
                a_hi = mu
            if a_hi - a_lo <= 4.0 * np.finfo(float).eps * max(1.0, abs(a_hi)):
                break
        mu = 0.5 * (a_lo + a_hi)
        u = V @ (gamma / (mu - eigval))
        unorm = float(np.linalg.norm(u))
        if unorm > S and unorm > 0.0:
            u *= S / unorm

    value = const + float(u @ (At @ u) + g @ u)
    resid = float(np.linalg.norm(2.0 * (At @ u) + g - 2.0 * mu * u))
    w_star[active] = 1.0 + u
    return BallMax(w_star=w_star, dg_max=value, mu=float(mu),
                   hard_case=hard, u_norm=float(np.linalg.norm(u)),
                   kkt_residual=resid)


def radius(dg_max: float, lam: float) -> float:
    """Parameter-ball radius sqrt((2/lam) * dg); tiny negative dg clamps to 0."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    if dg_max < -1e-10:
        raise ValueError(f"negative gap {dg_max} beyond tolerance")
    return math.sqrt(2.0 * max(dg_max, 0.0) / lam)


def score_interval(score_center: float, k_self: float, R: float):
    """Reach of y'*score over the parameter ball: center +/- sqrt(k_self)*R."""
    if k_self < 0:
        raise ValueError("k_self must be nonnegative")
    if R < 0:
        raise ValueError("R must be nonnegative")
    half = math.sqrt(k_self) * R
    return score_center - half, score_center + half


class Counts(NamedTuple):
    surely_correct: int
    surely_incorrect: int
    unknown: int


def certify(model_ref: Model, K_val_cross, k_val_diag, y_val, R: float):
    """Per-validation-instance certificates under a radius-R parameter ball.

    zeta_i = 1 iff the whole ball classifies instance i correctly
    (strict inequality; zero endpoints count as unknown).
    """
    y_val = np.asarray(y_val, dtype=float)
    margins = y_val * decision_scores(model_ref, K_val_cross)
    half = np.sqrt(np.clip(np.asarray(k_val_diag, dtype=float), 0.0, None)) * R
    lo = margins - half
    hi = margins + half
    zeta = (lo > 0.0).astype(int)
    incorrect = int(np.sum(hi < 0.0))
    correct = int(zeta.sum())
    counts = Counts(correct, incorrect, y_val.size - correct - incorrect)
    return zeta, counts


class WeightedIndicatorMin(NamedTuple):
    value: float
    w_prime_star: np.ndarray


def min_weighted_indicator(zeta, Q: float) -> WeightedIndicatorMin:
    """Minimize zeta' w' over ||w' - 1|| <= Q with sum(w') fixed at n'.

    Closed form: total - Q * sqrt(||zeta||^2 - total^2/n'); the minimizer
    tilts weight away from certified instances while keeping the total
    mass constant.  A zero radicand (all-equal zeta) leaves w' = 1.
    """
    if Q < 0:
        raise ValueError("Q must be nonnegative")
    zeta = np.asarray(zeta, dtype=float)
    n_val = zeta.shape[0]
    if n_val < 1:
        raise ValueError("need at least one validation instance")
    total = float(zeta.sum())
    radicand = float(zeta @ zeta) - total * total / n_val
    radicand = max(radicand, 0.0)
    if radicand == 0.0 or Q == 0.0:
        return WeightedIndicatorMin(total, np.ones(n_val))
    rad = math.sqrt(radicand)
    w = 1.0 - (Q / rad) * (zeta - total / n_val)
    return WeightedIndicatorMin(total - Q * rad, w)


def worst_case_error_ub(zeta, Q: float) -> float:
    """Upper bound on the weighted validation error over the validation ball."""
    zeta = np.asarray(zeta, dtype=float)
    value = min_weighted_indicator(zeta, Q).value
    return min(1.0, max(0.0, 1.0 - value / zeta.shape[0]))


def certified_count_error_ub(m: int, n_val: int, Q: float) -> float:
    """Binary-zeta simplification of the bound from the certified count m."""
    if not 0 <= m <= n_val:
        raise ValueError("certified count out of range")
    radicand = max(m - m * m / n_val, 0.0)
    value = m - Q * math.sqrt(radicand)
    return min(1.0, max(0.0, 1.0 - value / n_val))


@dataclass(frozen=True)
class BoundReport:
    """Certificate for one candidate coreset."""

    dg_max: float
    w_star: np.ndarray
    radius: float
    zeta: np.ndarray
    counts: Counts
    ub: float

    def to_dict(self) -> dict:
        return {
            "dg_max": self.dg_max,
            "radius": self.radius,
            "ub": self.ub,
            "counts": {
                "surely_correct": self.counts.surely_correct,
                "surely_incorrect": self.counts.surely_incorrect,
                "unknown": self.counts.unknown,
            },
            "zeta": self.zeta.astype(int).tolist(),
            "w_star": self.w_star.tolist(),
        }


def certificate(model_ref: Model, form: QuadraticGapForm, v, S: float, Q: float,
                K_val_cross, k_val_diag, y_val,
                lam_abs: float | None = None) -> BoundReport:
    """Full bound pipeline for a kept mask v: gap max, radius, zeta, ub."""
    if lam_abs is None:
        lam_abs = model_ref.lam_abs
    res = maximize_on_ball(form, v, S)
    R = radius(res.dg_max, lam_abs)
    zeta, counts = certify(model_ref, K_val_cross, k_val_diag, y_val, R)
    ub = worst_case_error_ub(zeta, Q)
    return BoundReport(dg_max=res.dg_max, w_star=res.w_star, radius=R,
                       zeta=zeta, counts=counts, ub=ub)
