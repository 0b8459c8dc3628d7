import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import robustcoreset as rc


@pytest.fixture(scope="session")
def rbf_task():
    """Small two-class RBF task: (dataset, Gram matrix, lam_abs)."""
    ds = rc.gaussian_task(60, 4, seed=7, separation=2.5)
    spec = rc.KernelSpec("rbf", rc.bandwidth_heuristic(ds.features))
    K = rc.gram(ds.features, ds.features, spec)
    return ds, K, 5.0


@pytest.fixture(scope="session")
def hinge_model(rbf_task):
    ds, K, lam_abs = rbf_task
    return rc.train(K, ds.labels, lam=lam_abs / ds.n, kind=rc.HINGE, tol=1e-10)


@pytest.fixture(scope="session")
def logistic_model(rbf_task):
    ds, K, lam_abs = rbf_task
    return rc.train(K, ds.labels, lam=lam_abs / ds.n, kind=rc.LOGISTIC, tol=1e-10)


def make_validation(ds_train, n_val, seed):
    """Fresh validation set drawn like the training task, with cross-Gram."""
    d = ds_train.d - 1
    va = rc.gaussian_task(n_val, d, seed=seed, separation=2.5)
    spec = rc.KernelSpec("rbf", rc.bandwidth_heuristic(ds_train.features))
    K_cross = rc.gram(ds_train.features, va.features, spec)
    return va, K_cross, np.ones(va.n)
