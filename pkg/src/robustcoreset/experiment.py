"""Experiment harness: fold-wise selection sweeps with certified bounds.

One sweep, per fold of a k-fold split: train the reference model, build
the gap quadratic, produce coresets for every requested method and
retained size, retrain on each coreset with uniform weights, score the
worst-case weighted validation accuracy over the validation weight ball,
and attach the certified lower bound.  Rows land in ``report.csv`` /
``report.json``.

The regularization strength is quoted in sum-form units (rules "n",
"n*10^-1.5", "n*10^-3", a numeric literal, or "cv-best"); the normalized
trainer is invoked at lam/E so retraining keeps the absolute strength
fixed as instances are removed.
"""

import csv
import json
import math
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bound, select
from .data import Dataset, cv_split, parse_libsvm, shift_radius
from .erm import LOGISTIC, decision_scores, evaluate_gap, train
from .kernel import KernelSpec, bandwidth_heuristic, gram, load_precomputed

__all__ = [
    "ExperimentConfig",
    "FoldContext",
    "RunReport",
    "ROBUST_METHOD",
    "ALL_METHODS",
    "DEFAULT_LAMBDA_EXPONENTS",
    "resolve_lambda_rule",
    "default_lambda_grid",
    "lambda_cv",
    "evaluate_worst_case_accuracy",
    "load_dataset",
    "min_max_scaled",
    "prepare_fold",
    "run_selection",
    "run_experiment",
]

ROBUST_METHOD = "robust"
ALL_METHODS = (ROBUST_METHOD,) + select.BASELINE_METHODS
DEFAULT_LAMBDA_EXPONENTS = (-3.0, -2.0, -1.5, -1.0, 0.0)

CSV_COLUMNS = ("fold", "method", "m", "fraction_removed", "wc_accuracy",
               "certified_lb", "dg_max", "wall_ms", "status")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str
    loss: str = LOGISTIC
    kernel: str = "rbf"
    bandwidth: float | None = None
    kernel_file: str | None = None
    lambda_rule: str = "cv-best"
    a: float = 1.05
    q_factor: float | None = None
    folds: int = 5
    methods: tuple = (ROBUST_METHOD, "random")
    removal_grid: tuple = (0.1, 0.3, 0.5)
    seed: int = 0
    algorithm: int = 0
    preserve_classes: bool = False
    min_max_scale: bool = False
    output_dir: str | None = None
    timing: bool = False
    tol: float = 1e-8

    def __post_init__(self):
        for frac in self.removal_grid:
            if not 0.0 <= frac < 1.0:
                raise ValueError(f"removal fraction {frac} outside [0, 1)")
        for m in self.methods:
            if m not in ALL_METHODS:
                raise ValueError(f"unknown method {m!r}")
        if self.algorithm not in (0, 1, 2, 3):
            raise ValueError("algorithm must be 0 (auto), 1, 2 or 3")
        if self.a <= 0:
            raise ValueError("shift factor a must be positive")

    @property
    def q_shift(self) -> float:
        return self.a if self.q_factor is None else self.q_factor


def min_max_scaled(ds: Dataset) -> Dataset:
    """Scale non-intercept columns to [0, 1]; constant columns collapse to 0."""
    X = ds.features[:, :-1]
    lo = X.min(axis=0)
    span = X.max(axis=0) - lo
    span[span == 0.0] = 1.0
    return Dataset.from_arrays((X - lo) / span, ds.labels)


def load_dataset(path, min_max: bool = False) -> Dataset:
    ds = parse_libsvm(Path(path).read_text())
    return min_max_scaled(ds) if min_max else ds


_RULE_RE = re.compile(r"^n(\*10\^(?P<exp>-?\d+(\.\d+)?))?$")


def resolve_lambda_rule(rule: str, n: int) -> float:
    """Sum-form lambda from a rule string and the training-set size.

    Accepts "n", "n*10^<exp>" (e.g. "n*10^-1.5"), or a positive numeric
    literal.  "cv-best" is resolved by the caller via ``lambda_cv``.
    """
    rule = rule.strip()
    m = _RULE_RE.match(rule)
    if m:
        exp = float(m.group("exp")) if m.group("exp") else 0.0
        return n * 10.0 ** exp
    try:
        value = float(rule)
    except ValueError:
        raise ValueError(f"unrecognized lambda rule {rule!r}") from None
    if value <= 0:
        raise ValueError("explicit lambda must be positive")
    return value


def default_lambda_grid(n: int):
    return tuple(n * 10.0 ** e for e in DEFAULT_LAMBDA_EXPONENTS)


def _fold_kernel(config: ExperimentConfig, X_tr, X_va, tr_idx, va_idx, K_full):
    if config.kernel == "precomputed":
        K = K_full[np.ix_(tr_idx, tr_idx)]
        Kx = K_full[np.ix_(tr_idx, va_idx)]
        kdiag = np.diag(K_full)[va_idx]
        return K, Kx, kdiag
    if config.kernel == "rbf":
        bw = config.bandwidth or bandwidth_heuristic(X_tr)
        spec = KernelSpec("rbf", bw)
        return gram(X_tr, X_tr, spec), gram(X_tr, X_va, spec), np.ones(len(va_idx))
    spec = KernelSpec("linear")
    kdiag = np.einsum("ij,ij->i", X_va, X_va)
    return gram(X_tr, X_tr, spec), gram(X_tr, X_va, spec), kdiag


def lambda_cv(ds: Dataset, grid, folds: int = 5, seed: int = 0, *,
              loss: str = LOGISTIC, config: ExperimentConfig | None = None,
              tol: float = 1e-8) -> float:
    """Grid value maximizing mean unweighted validation accuracy; ties break
    toward the smaller lambda."""
    grid = sorted(grid)
    if not grid:
        raise ValueError("empty lambda grid")
    if config is None:
        config = ExperimentConfig(dataset="<in-memory>", loss=loss)
    plan = cv_split(ds, folds, seed)
    K_full = load_precomputed(config.kernel_file) if config.kernel == "precomputed" else None
    best_lam, best_acc = None, -1.0
    for lam_abs in grid:
        accs = []
        for k in range(folds):
            tr_idx, va_idx = plan.train_indices(k), plan.val_indices(k)
            tr, va = ds.subset(tr_idx), ds.subset(va_idx)
            K, Kx, _ = _fold_kernel(config, tr.features, va.features,
                                    tr_idx, va_idx, K_full)
            model = train(K, tr.labels, lam=lam_abs / tr.n, kind=loss, tol=tol)
            scores = decision_scores(model, Kx)
            accs.append(float(np.mean(va.labels * scores > 0)))
        mean_acc = float(np.mean(accs))
        if mean_acc > best_acc:
            best_lam, best_acc = lam_abs, mean_acc
    return best_lam


def evaluate_worst_case_accuracy(model, K_val_cross, y_val, Q: float) -> float:
    """Weighted validation accuracy minimized over the validation ball.

    Uses the closed-form minimum of the correctness-indicator mass; a
    zero score counts as incorrect.
    """
    y_val = np.asarray(y_val, dtype=float)
    correct = (y_val * decision_scores(model, K_val_cross) > 0).astype(float)
    value = bound.min_weighted_indicator(correct, Q).value
    return min(1.0, max(0.0, value / y_val.size))


@dataclass
class FoldContext:
    """Everything a fold needs: data, kernels, radii, model and quadratic."""

    fold: int
    tr_idx: np.ndarray
    va_idx: np.ndarray
    y_tr: np.ndarray
    y_va: np.ndarray
    K: np.ndarray
    K_cross: np.ndarray
    k_diag: np.ndarray
    S: float
    Q: float
    lam_abs: float
    model: object
    form: bound.QuadraticGapForm
    form_cert: bound.QuadraticGapForm
    valset: select.ValidationSet


def _resolve_lambda(config: ExperimentConfig, ds: Dataset) -> float:
    if config.lambda_rule.strip() == "cv-best":
        n_tr = ds.n - ds.n // config.folds
        return lambda_cv(ds, default_lambda_grid(n_tr), config.folds,
                         config.seed, loss=config.loss, config=config,
                         tol=config.tol)
    n_tr = ds.n - ds.n // config.folds
    return resolve_lambda_rule(config.lambda_rule, n_tr)


def prepare_fold(ds: Dataset, config: ExperimentConfig, fold: int,
                 lam_abs: float | None = None, K_full=None) -> FoldContext:
    plan = cv_split(ds, config.folds, config.seed)
    tr_idx, va_idx = plan.train_indices(fold), plan.val_indices(fold)
    tr, va = ds.subset(tr_idx), ds.subset(va_idx)
    if config.kernel == "precomputed" and K_full is None:
        K_full = load_precomputed(config.kernel_file)
    K, Kx, kdiag = _fold_kernel(config, tr.features, va.features,
                                tr_idx, va_idx, K_full)
    if lam_abs is None:
        lam_abs = _resolve_lambda(config, ds)
    S = shift_radius(tr.n_plus, config.a)
    Q = shift_radius(va.n_plus, config.q_shift)
    model = train(K, tr.labels, lam=lam_abs / tr.n, kind=config.loss,
                  tol=config.tol)
    # the pipeline (selection and certificates) runs on the exact-conjugate
    # quadratic; the published linear coefficient coincides with it for the
    # hinge loss and is kept only as a logged diagnostic
    form = bound.quadratic_form(model, K, tr.labels, lam_abs)
    form_cert = bound.quadratic_form(model, K, tr.labels, lam_abs,
                                     exact_conjugate=True)
    valset = select.ValidationSet(Kx, kdiag, va.labels)
    return FoldContext(fold=fold, tr_idx=tr_idx, va_idx=va_idx,
                       y_tr=tr.labels, y_va=va.labels, K=K, K_cross=Kx,
                       k_diag=kdiag, S=S, Q=Q, lam_abs=lam_abs, model=model,
                       form=form, form_cert=form_cert, valset=valset)


def _method_seed(base_seed: int, fold: int, method_index: int) -> int:
    return int(np.random.SeedSequence([base_seed, fold, method_index])
               .generate_state(1)[0])


def _pick_algorithm(config: ExperimentConfig, n_tr: int) -> int:
    if config.algorithm:
        return config.algorithm
    return 1 if n_tr <= 400 else 2


def run_selection(ctx: FoldContext, config: ExperimentConfig, method: str,
                  n_del: int, seed: int) -> select.SelectionTrace:
    if method == ROBUST_METHOD:
        algorithm = _pick_algorithm(config, len(ctx.y_tr))
        fn = {1: select.greedy_exact, 2: select.greedy_fixed_w,
              3: select.greedy_oneshot}[algorithm]
        return fn(ctx.form_cert, ctx.y_tr, ctx.S, ctx.Q, n_del,
                  model_ref=ctx.model, val=ctx.valset,
                  preserve_classes=config.preserve_classes, seed=seed)
    return select.baseline_select(method, ctx.K, ctx.y_tr, ctx.model, n_del,
                                  seed, preserve_classes=config.preserve_classes)


@dataclass
class RunReport:
    lam_abs: float
    rows: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    gap_diagnostics: list = field(default_factory=list)


def _gap_diagnostics(ctx: FoldContext):
    """Published vs exact-conjugate quadratic vs scaled direct gap, at the
    full set and the worst-case weight; logged per fold."""
    w_star = bound.maximize_on_ball(ctx.form_cert, np.ones(ctx.form.n), ctx.S).w_star
    vw = w_star
    direct = evaluate_gap(ctx.model, np.ones(ctx.form.n), w_star)
    E = float(w_star.sum())
    return {
        "fold": ctx.fold,
        "q_published_full": ctx.form.value(np.ones(ctx.form.n)),
        "q_exact_full": ctx.form_cert.value(np.ones(ctx.form.n)),
        "q_published_worst_w": ctx.form.value(vw),
        "q_exact_worst_w": ctx.form_cert.value(vw),
        "scaled_direct_gap_worst_w": E * direct.gap,
    }


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.10g}"
    return str(x)


def _write_reports(config: ExperimentConfig, report: RunReport):
    if config.output_dir is None:
        return
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in report.rows:
            writer.writerow([_fmt(row[col]) for col in CSV_COLUMNS])
    payload = {
        "config": {k: (list(v) if isinstance(v, tuple) else v)
                   for k, v in vars(config).items()},
        "lambda": report.lam_abs,
        "rows": report.rows,
        "aggregates": report.aggregates,
        "gap_diagnostics": report.gap_diagnostics,
    }
    with open(out / "report.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _aggregate(rows):
    groups = {}
    for row in rows:
        if row["status"] != "ok":
            continue
        groups.setdefault((row["method"], row["fraction_removed"]), []).append(row)
    agg = {}
    for (method, frac), grp in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        wc = np.array([r["wc_accuracy"] for r in grp])
        lb = np.array([r["certified_lb"] for r in grp])
        agg.setdefault(method, {})[f"{frac:.10g}"] = {
            "folds": len(grp),
            "wc_accuracy_mean": float(wc.mean()),
            "wc_accuracy_std": float(wc.std()),
            "certified_lb_mean": float(lb.mean()),
            "certified_lb_std": float(lb.std()),
        }
    return agg


def run_experiment(config: ExperimentConfig, ds: Dataset | None = None) -> RunReport:
    """Full sweep; writes report.csv / report.json when output_dir is set.

    On error, rows computed so far are flushed with a trailing status row
    before the exception propagates.
    """
    if ds is None:
        ds = load_dataset(config.dataset, config.min_max_scale)
    lam_abs = _resolve_lambda(config, ds)
    report = RunReport(lam_abs=lam_abs)
    K_full = load_precomputed(config.kernel_file) if config.kernel == "precomputed" else None
    try:
        for fold in range(config.folds):
            ctx = prepare_fold(ds, config, fold, lam_abs=lam_abs, K_full=K_full)
            report.gap_diagnostics.append(_gap_diagnostics(ctx))
            n_tr = len(ctx.y_tr)
            n_del_grid = [min(int(round(f * n_tr)), n_tr - 1)
                          for f in config.removal_grid]
            n_del_max = max(n_del_grid, default=0)
            for mi, method in enumerate(config.methods):
                seed = _method_seed(config.seed, fold, mi)
                trace = run_selection(ctx, config, method, n_del_max, seed)
                for frac, n_del in zip(config.removal_grid, n_del_grid):
                    t0 = time.perf_counter()
                    v = trace.kept_mask(n_del)
                    kept = np.flatnonzero(v > 0)
                    m = kept.size
                    sub_model = train(ctx.K[np.ix_(kept, kept)], ctx.y_tr[kept],
                                      lam=lam_abs / m, kind=config.loss,
                                      tol=config.tol)
                    wc_acc = evaluate_worst_case_accuracy(
                        sub_model, ctx.K_cross[kept, :], ctx.y_va, ctx.Q)
                    cert = bound.certificate(ctx.model, ctx.form_cert, v,
                                             ctx.S, ctx.Q, ctx.K_cross,
                                             ctx.k_diag, ctx.y_va, lam_abs)
                    wall_ms = (time.perf_counter() - t0) * 1e3 if config.timing else 0.0
                    report.rows.append({
                        "fold": fold,
                        "method": method,
                        "m": m,
                        "fraction_removed": float(frac),
                        "wc_accuracy": wc_acc,
                        "certified_lb": 1.0 - cert.ub,
                        "dg_max": cert.dg_max,
                        "wall_ms": wall_ms,
                        "status": "ok",
                    })
    except Exception as exc:
        report.rows.append({
            "fold": -1, "method": "-", "m": 0, "fraction_removed": math.nan,
            "wc_accuracy": math.nan, "certified_lb": math.nan,
            "dg_max": math.nan, "wall_ms": 0.0,
            "status": f"error: {exc}",
        })
        report.aggregates = _aggregate(report.rows)
        _write_reports(config, report)
        raise
    report.aggregates = _aggregate(report.rows)
    _write_reports(config, report)
    return report
