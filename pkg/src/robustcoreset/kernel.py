"""Gram matrices for the kernelized classifier.

The RBF kernel is exp(-||x - x'||^2 / bandwidth) with the bandwidth picked
by the pooled-variance heuristic d' * Var(X) (d' excludes the intercept
column), i.e. the reciprocal of sklearn's ``gamma='scale'``.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["KernelSpec", "bandwidth_heuristic", "gram", "load_precomputed"]

KINDS = ("rbf", "linear", "precomputed")


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    bandwidth: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "rbf" and self.bandwidth is not None and self.bandwidth <= 0:
            raise ValueError("rbf bandwidth must be positive")


def bandwidth_heuristic(X: np.ndarray) -> float:
    """Pooled-variance RBF bandwidth: d' * Var over non-intercept entries.

    ``X`` is expected to carry the intercept in its last column; it is
    excluded from both the column count and the variance pool.  Raises on
    constant (zero-variance) data.
    """
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        raise ValueError("empty feature matrix")
    body = X[:, :-1]
    if body.shape[1] == 0:
        raise ValueError("no non-intercept columns")
    var = float(body.var())
    if var <= 0.0:
        raise ValueError("zero variance: degenerate feature matrix")
    return body.shape[1] * var


def gram(X1: np.ndarray, X2: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Kernel matrix between the rows of X1 and X2.

    The rbf path uses ||a-b||^2 = ||a||^2 + ||b||^2 - 2 a.b with tiny
    negatives clamped to zero, so a self-Gram has an exact unit diagonal.
    """
    X1 = np.asarray(X1, dtype=float)
    X2 = np.asarray(X2, dtype=float)
    if X1.ndim != 2 or X2.ndim != 2 or X1.shape[1] != X2.shape[1]:
        raise ValueError("feature dimension mismatch")
    if spec.kind == "linear":
        return X1 @ X2.T
    if spec.kind == "rbf":
        if spec.bandwidth is None:
            raise ValueError("rbf kernel needs a bandwidth")
        sq1 = np.einsum("ij,ij->i", X1, X1)
        sq2 = np.einsum("ij,ij->i", X2, X2)
        d2 = sq1[:, None] + sq2[None, :] - 2.0 * (X1 @ X2.T)
        np.maximum(d2, 0.0, out=d2)
        if X1 is X2 or (X1.shape == X2.shape and np.array_equal(X1, X2)):
            np.fill_diagonal(d2, 0.0)
        return np.exp(-d2 / spec.bandwidth)
    raise ValueError("precomputed kernels are loaded, not evaluated")


def load_precomputed(path) -> np.ndarray:
    """Read a square, header-free, row-major CSV kernel matrix."""
    K = np.loadtxt(path, delimiter=",", ndmin=2)
    if K.shape[0] != K.shape[1]:
        raise ValueError(f"precomputed kernel must be square, got {K.shape}")
    return K
