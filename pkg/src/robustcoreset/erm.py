"""Weighted L2-regularized kernel classifiers trained in the dual.

The primal objective for mask v, weights w and E = sum_i v_i w_i is

    P(beta) = (1/E) sum_i v_i w_i loss(y_i, f(x_i; beta)) + (lam/2) ||beta||^2

and the matching dual over alpha in [0, 1]^n is

    D(alpha) = -(1/E) sum_i v_i w_i loss*(-alpha_i)
               - (1/(2 lam E^2)) z' K z,      z = v * w * y * alpha.

The optimum satisfies the representer identity beta = Phi' z / (lam E), so
decision scores are (1/(lam E)) sum_i v_i w_i y_i alpha_i K(x_i, x).
Training is dual coordinate ascent: exact clipped updates for the hinge
loss, safeguarded 1-D Newton for the logistic loss, stopping once the
duality gap falls below ``tol``.
"""

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "LOGISTIC",
    "HINGE",
    "Model",
    "Objectives",
    "TrainingError",
    "loss_eval",
    "conjugate_eval",
    "primal_objective",
    "dual_objective",
    "train",
    "evaluate_gap",
    "decision_scores",
    "predict",
]

LOGISTIC = "logistic"
HINGE = "hinge"
_KINDS = (LOGISTIC, HINGE)


class TrainingError(RuntimeError):
    """Solver failed to certify the requested gap; carries ``best_gap``."""

    def __init__(self, message, best_gap=None):
        super().__init__(message)
        self.best_gap = best_gap


def _check_kind(kind):
    if kind not in _KINDS:
        raise ValueError(f"unknown loss kind {kind!r}")


def loss_eval(kind: str, y: float, score: float) -> float:
    """Pointwise loss; logistic uses the overflow-safe log1p/softplus form."""
    _check_kind(kind)
    m = y * score
    if kind == HINGE:
        return max(0.0, 1.0 - m)
    return float(np.logaddexp(0.0, -m))


def _loss_vec(kind, y, scores):
    m = y * scores
    if kind == HINGE:
        return np.maximum(0.0, 1.0 - m)
    return np.logaddexp(0.0, -m)


def conjugate_eval(kind: str, alpha: float) -> float:
    """Convex conjugate loss*(-alpha); +inf outside the domain [0, 1]."""
    _check_kind(kind)
    if alpha < 0.0 or alpha > 1.0:
        return math.inf
    if kind == HINGE:
        return -alpha
    return _binary_entropy_neg(alpha)


def _binary_entropy_neg(alpha):
    out = 0.0
    if 0.0 < alpha < 1.0:
        out = alpha * math.log(alpha) + (1.0 - alpha) * math.log(1.0 - alpha)
    return out


def _conj_vec(kind, alpha):
    if kind == HINGE:
        return -alpha
    a = np.clip(alpha, 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(a > 0.0, a * np.log(np.where(a > 0.0, a, 1.0)), 0.0)
        val = val + np.where(a < 1.0, (1.0 - a) * np.log(np.where(a < 1.0, 1.0 - a, 1.0)), 0.0)
    return val


@dataclass(frozen=True)
class Objectives:
    primal: float
    dual: float
    gap: float


@dataclass(frozen=True)
class Model:
    """Trained classifier: dual variables plus representer coefficients.

    ``rep_coef`` is v*w*y*alpha/(lam*E); scores of new points are
    K_cross.T @ rep_coef.  ``gram_ref`` keeps the training self-Gram so
    gaps under new (v, w) can be evaluated later.
    """

    alpha: np.ndarray
    lam: float
    loss: str
    v: np.ndarray
    w: np.ndarray
    E: float
    gram_ref: np.ndarray
    certified_gap: float
    y: np.ndarray
    rep_coef: np.ndarray
    train_scores: np.ndarray
    beta_sq: float

    @property
    def n(self) -> int:
        return self.alpha.shape[0]

    @property
    def lam_abs(self) -> float:
        """Regularization strength of the equivalent sum-form objective."""
        return self.lam * self.E


def primal_objective(K, y, v, w, lam, kind, coef) -> float:
    """P(beta) for beta given through representer coefficients (f = K coef)."""
    _check_kind(kind)
    vw = np.asarray(v, dtype=float) * np.asarray(w, dtype=float)
    E = float(vw.sum())
    if E <= 0:
        raise ValueError("sum of effective weights must be positive")
    f = K @ coef
    loss_term = float(vw @ _loss_vec(kind, y, f)) / E
    return loss_term + 0.5 * lam * float(coef @ f)


def dual_objective(K, y, v, w, lam, kind, alpha) -> float:
    """D(alpha); -inf when any active alpha leaves [0, 1]."""
    _check_kind(kind)
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    vw = v * w
    E = float(vw.sum())
    if E <= 0:
        raise ValueError("sum of effective weights must be positive")
    alpha = np.asarray(alpha, dtype=float)
    active = vw != 0.0
    if ((alpha[active] < 0.0) | (alpha[active] > 1.0)).any():
        return -math.inf
    z = vw * y * alpha
    quad = float(z @ (K @ z)) / (2.0 * lam * E * E)
    return -float(vw @ _conj_vec(kind, alpha)) / E - quad


_A_MIN = 1e-15
_A_MAX = 1.0 - 1e-15


def _logistic_coord_root(q0, s, a0):
    """Root of log(a/(1-a)) + q0 + s*(a - a0) on (0, 1), Newton + bisection."""
    lo, hi = 0.0, 1.0
    a = min(max(float(a0), _A_MIN), _A_MAX)
    for _ in range(80):
        h = math.log(a / (1.0 - a)) + q0 + s * (a - a0)
        if abs(h) < 1e-13:
            break
        if h > 0.0:
            hi = a
        else:
            lo = a
        step = h / (1.0 / (a * (1.0 - a)) + s)
        a_new = a - step
        if not lo < a_new < hi:
            a_new = 0.5 * (lo + hi)
        a_new = min(max(a_new, _A_MIN), _A_MAX)
        if abs(a_new - a) < 1e-16:
            a = a_new
            break
        a = a_new
    return a


def train(K, y, v=None, w=None, lam: float = 1.0, kind: str = LOGISTIC,
          tol: float = 1e-8, max_passes: int | None = None) -> Model:
    """Fit the dual of the weighted problem until the duality gap <= tol.

    Cyclic coordinate ascent, deterministic.  Raises TrainingError (with
    the best gap reached) when the pass cap is hit, ValueError for an
    empty active set or nonpositive active weights.
    """
    _check_kind(kind)
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    n = K.shape[0]
    if K.shape != (n, n) or y.shape != (n,):
        raise ValueError("K must be n x n with matching labels")
    v = np.ones(n) if v is None else np.asarray(v, dtype=float)
    w = np.ones(n) if w is None else np.asarray(w, dtype=float)
    if lam <= 0:
        raise ValueError("lam must be positive")
    if tol <= 0:
        raise ValueError("tol must be positive")
    act = np.flatnonzero(v != 0.0)
    if act.size == 0:
        raise ValueError("empty active set")
    wa = w[act]
    if (wa <= 0.0).any():
        raise ValueError("active weights must be positive")
    ya = y[act]
    Ka = K[np.ix_(act, act)]
    E = float(wa.sum())
    lamE = lam * E
    if max_passes is None:
        max_passes = max(1000, int(math.ceil(4_000_000 / act.size)))

    a = np.full(act.size, 0.5 if kind == LOGISTIC else 0.0)
    z = wa * ya * a
    yf = ya * (Ka @ z) / lamE

    def current_gap():
        f = yf * ya
        beta_sq = float(z @ f) / lamE
        loss_term = float(wa @ _loss_vec(kind, ya, f)) / E
        conj_term = float(wa @ _conj_vec(kind, a)) / E
        return loss_term + conj_term + lam * beta_sq

    diag = np.diag(Ka).copy()
    best_gap = math.inf
    for sweep in range(max_passes):
        for j in range(act.size):
            cj = wa[j]
            sj = cj * diag[j] / lamE
            if kind == HINGE:
                if sj > 0.0:
                    a_new = min(1.0, max(0.0, a[j] + (1.0 - yf[j]) / sj))
                else:
                    a_new = 1.0 if yf[j] < 1.0 else 0.0
            else:
                a_new = _logistic_coord_root(yf[j], sj, a[j])
            delta = a_new - a[j]
            if delta != 0.0:
                a[j] = a_new
                dz = cj * ya[j] * delta
                z[j] += dz
                yf += ya * Ka[:, j] * (dz / lamE)
        if (sweep + 1) % 64 == 0:
            yf = ya * (Ka @ z) / lamE
        gap = current_gap()
        best_gap = min(best_gap, gap)
        if gap <= tol:
            break
    else:
        raise TrainingError(
            f"duality gap {best_gap:.3e} above tol {tol:.1e} "
            f"after {max_passes} passes", best_gap=best_gap)

    alpha = np.zeros(n)
    alpha[act] = a
    rep_coef = np.zeros(n)
    rep_coef[act] = z / lamE
    train_scores = K @ rep_coef
    beta_sq = float(rep_coef[act] @ train_scores[act])
    return Model(alpha=alpha, lam=lam, loss=kind, v=v.copy(), w=w.copy(),
                 E=E, gram_ref=K, certified_gap=gap, y=y.astype(float),
                 rep_coef=rep_coef, train_scores=train_scores, beta_sq=beta_sq)


def evaluate_gap(model: Model, v, w) -> Objectives:
    """Primal/dual objectives at the reference solution under new (v, w).

    This is the direct, normalized duality gap; the quadratic surrogate
    used for the worst-case-weight search lives in ``bound``.
    """
    p = primal_objective(model.gram_ref, model.y, v, w, model.lam,
                         model.loss, model.rep_coef)
    d = dual_objective(model.gram_ref, model.y, v, w, model.lam,
                       model.loss, model.alpha)
    return Objectives(primal=p, dual=d, gap=p - d)


def decision_scores(model: Model, K_cross) -> np.ndarray:
    """Scores of query points given the training-to-query Gram (n x m)."""
    K_cross = np.asarray(K_cross, dtype=float)
    if K_cross.ndim != 2 or K_cross.shape[0] != model.n:
        raise ValueError("cross-Gram must have one row per training instance")
    return K_cross.T @ model.rep_coef


def predict(model: Model, K_cross) -> np.ndarray:
    """Labels: -1 for negative score, +1 otherwise."""
    return np.where(decision_scores(model, K_cross) < 0.0, -1, 1)
