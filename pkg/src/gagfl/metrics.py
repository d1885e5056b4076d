"""Evaluation metrics: misclassification, Hausdorff break error, RMSE, coverage.

Estimated group labels are arbitrary up to permutation, so every comparison
against a ground truth first aligns labels by the permutation that
minimizes the misclassification frequency.
"""

from typing import NamedTuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import GagflError
from .model import FitResult, GroupAssignment


class MisclassResult(NamedTuple):
    mf: float
    permutation: np.ndarray  # permutation[a-1] = true label matched to estimated label a


def misclassification(gamma_hat: GroupAssignment, gamma_true: GroupAssignment) -> MisclassResult:
    """Share of units whose aligned estimated group differs from the truth.

    The alignment is the label bijection maximizing agreement (solved as an
    assignment problem on the confusion matrix, padded when the two sides
    use different numbers of labels).
    """
    if gamma_hat.n_units != gamma_true.n_units:
        raise GagflError("assignments must cover the same units")
    n = gamma_hat.n_units
    L = max(gamma_hat.n_groups, gamma_true.n_groups)
    conf = np.zeros((L, L))
    np.add.at(conf, (gamma_hat.labels - 1, gamma_true.labels - 1), 1.0)
    rows, cols = linear_sum_assignment(-conf)
    perm = np.empty(L, dtype=np.int64)
    perm[rows] = cols + 1
    matched = conf[rows, cols].sum()
    return MisclassResult(mf=float(1.0 - matched / n), permutation=perm)


def hausdorff(est_dates, true_dates, T: int) -> float:
    """Two-sided Hausdorff distance between break-date sets, scaled by 100/T.

    Conventions: both sets empty -> 0; exactly one empty -> 100 (the
    maximal error, T periods, after scaling); such rows are normally
    filtered by conditioning on a correct break count.
    """
    a = np.asarray(sorted(est_dates), dtype=np.float64)
    b = np.asarray(sorted(true_dates), dtype=np.float64)
    if a.size == 0 and b.size == 0:
        return 0.0
    if a.size == 0 or b.size == 0:
        return 100.0
    d_ab = np.abs(a[:, None] - b[None, :])
    d1 = d_ab.min(axis=0).max()  # sup over b of inf over a
    d2 = d_ab.min(axis=1).max()  # sup over a of inf over b
    return float(100.0 * max(d1, d2) / T)


class PathAccuracy(NamedTuple):
    pooled: float
    per_coefficient: np.ndarray


def rmse_path(beta_hat: np.ndarray, beta_true: np.ndarray) -> PathAccuracy:
    """Root mean squared error of per-(i, t) coefficients.

    Inputs are (N, T, k) arrays with the estimates already mapped through
    the estimated memberships and regimes.  Returns the pooled RMSE over
    all N*T*k entries plus the per-coordinate breakdown.
    """
    beta_hat = np.asarray(beta_hat, dtype=np.float64)
    beta_true = np.asarray(beta_true, dtype=np.float64)
    if beta_hat.shape != beta_true.shape:
        raise GagflError("coefficient arrays must have matching shapes")
    sq = (beta_hat - beta_true) ** 2
    per = np.sqrt(sq.mean(axis=(0, 1)))
    return PathAccuracy(pooled=float(np.sqrt(sq.mean())), per_coefficient=per)


def coverage(beta_hat: np.ndarray, se_hat: np.ndarray, beta_true: np.ndarray) -> PathAccuracy:
    """Fraction of (i, t) cells whose 95% interval covers the truth."""
    beta_hat = np.asarray(beta_hat, dtype=np.float64)
    se_hat = np.asarray(se_hat, dtype=np.float64)
    beta_true = np.asarray(beta_true, dtype=np.float64)
    if not (beta_hat.shape == se_hat.shape == beta_true.shape):
        raise GagflError("coefficient and SE arrays must have matching shapes")
    if (se_hat <= 0).any():
        raise GagflError("standard errors must be strictly positive")
    inside = np.abs(beta_true - beta_hat) <= 1.96 * se_hat
    return PathAccuracy(
        pooled=float(inside.mean()),
        per_coefficient=inside.mean(axis=(0, 1)).astype(np.float64),
    )


def unit_paths_from_fit(fit: FitResult, n_periods: int):
    """Map a fit's regime estimates to per-(i, t) arrays.

    Returns (beta_hat, se_hat), each (N, T, k), using each unit's estimated
    group and that group's estimated regimes.  Coordinates estimated as
    fully time varying (mask-driven fits) are filled from the per-period
    paths stored in the diagnostics.
    """
    labels = fit.assignment.labels
    N = labels.size
    T = n_periods
    k = fit.post_lasso_coefs[0].shape[1]
    beta = np.empty((N, T, k))
    se = np.empty((N, T, k))
    for g in range(1, fit.n_groups + 1):
        bounds = fit.breaks.regime_bounds(g, T)
        path = np.empty((T, k))
        path_se = np.empty((T, k))
        for j, (start, end) in enumerate(bounds):
            path[start - 1 : end] = fit.post_lasso_coefs[g - 1][j]
            path_se[start - 1 : end] = fit.std_errors[g - 1][j]
        vp = fit.diagnostics.get("varying_paths")
        if vp is not None:
            roles = fit.diagnostics["coordinate_roles"]
            vidx = roles["varying"]
            if vidx:
                path[:, vidx] = vp[g - 1]
                path_se[:, vidx] = fit.diagnostics["varying_ses"][g - 1]
        members = fit.assignment.members(g)
        beta[members] = path
        se[members] = path_se
    return beta, se
