"""Adaptive group fused lasso for one group's coefficient path.

Given a fixed set of member units, minimizes

    (1/NT) sum_{i in members} sum_t (y_it - x_it' beta_t)^2
        + lam * sum_{t=2..T} w_t ||beta_t - beta_{t-1}||

by cyclic block coordinate descent in the jump parameterization
theta_1 = beta_1, theta_t = beta_t - beta_{t-1}.  Inactive jump blocks are
exactly zero, which is what turns the solution into a piecewise-constant
regime path.  NT always refers to the full panel, not the group.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DegenerateRegimeError, EstimationError
from .model import BreakStructure, CoefficientPath, GroupAssignment, Panel


@dataclass(frozen=True)
class AdaptiveWeights:
    """Per-(group, jump date) penalty weights, values[g-1, t-2] for t = 2..T."""

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        v.setflags(write=False)
        if v.ndim != 2:
            raise ValueError("weights must be G x (T-1)")
        if not np.isfinite(v).all() or (v <= 0).any():
            raise ValueError("weights must be strictly positive and finite")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class AgflOptions:
    kappa: float = 2.0
    tol_theta: float = 1e-6
    tol_obj: float = 1e-10
    max_sweeps: int = 1000
    weight_floor: float = 1e-10

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be > 0")
        if self.tol_theta <= 0 or self.tol_obj <= 0 or self.weight_floor <= 0:
            raise ValueError("tolerances and weight_floor must be > 0")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")


def compute_weights(prelim: CoefficientPath, kappa: float = 2.0,
                    weight_floor: float = 1e-10) -> AdaptiveWeights:
    """w_{g,t} = max(||beta_{g,t} - beta_{g,t-1}||, floor)^(-kappa).

    The floor keeps the weight finite (though huge) when the preliminary fit
    shows no movement at all, which forces those jumps to zero downstream.
    """
    diffs = np.linalg.norm(prelim.jumps(), axis=2)
    return AdaptiveWeights(np.maximum(diffs, weight_floor) ** (-kappa))


def _group_stats(panel: Panel, members: np.ndarray):
    """Per-period raw moments over the member units."""
    xs = panel.x[members]
    ys = panel.y[members]
    S = np.einsum("itk,itl->tkl", xs, xs)
    v = np.einsum("itk,it->tk", xs, ys)
    yy = float(np.sum(ys * ys))
    return np.ascontiguousarray(S), np.ascontiguousarray(v), yy


def _members_array(panel: Panel, members) -> np.ndarray:
    members = np.asarray(members, dtype=np.int64).ravel()
    if members.size == 0:
        raise EstimationError("member set is empty")
    if members.min() < 0 or members.max() >= panel.n_units:
        raise EstimationError("member indices out of range")
    return members


def _thresholds(weights: np.ndarray, lam: float, nt: float, T: int) -> np.ndarray:
    thr = np.zeros(T)
    thr[1:] = nt * lam * np.asarray(weights, dtype=np.float64) / 2.0
    return thr


@dataclass
class GroupSolveInfo:
    n_sweeps: int
    converged: bool
    objective: float
    n_fallback: int
    trace: np.ndarray = None


def agfl_solve_group(panel: Panel, members, weights, lam: float,
                     opts: AgflOptions = AgflOptions(), init: np.ndarray = None,
                     *, return_info: bool = False, record_trace: bool = False):
    """Solve the fused-path problem for one group of units.

    Parameters
    ----------
    members : 0-based unit indices belonging to the group.
    weights : (T-1,) adaptive weights for the jumps at t = 2..T.
    init : optional (T, k) warm-start path.

    Returns the (T, k) path, plus a GroupSolveInfo when return_info.
    """
    members = _members_array(panel, members)
    T, k = panel.n_periods, panel.n_regressors
    if lam < 0:
        raise EstimationError("lambda must be >= 0")
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (T - 1,):
        raise EstimationError(f"weights must have shape ({T - 1},)")
    S, v, yy = _group_stats(panel, members)
    nt = float(panel.n_units * T)
    thr = _thresholds(weights, lam, nt, T)
    if init is None:
        theta = np.zeros((T, k))
    else:
        init = np.asarray(init, dtype=np.float64)
        if init.shape != (T, k):
            raise EstimationError(f"init path must have shape ({T}, {k})")
        theta = np.empty((T, k))
        theta[0] = init[0]
        theta[1:] = np.diff(init, axis=0)
    trace = np.empty(opts.max_sweeps * T if record_trace else 1)
    n_sweeps, code, obj, n_trace, n_fb = _kernels.bcd_fused_level(
        S, v, yy, nt, thr, theta, opts.tol_theta, opts.tol_obj,
        opts.max_sweeps, trace, record_trace,
    )
    path = np.cumsum(theta, axis=0)
    if not return_info:
        return path
    info = GroupSolveInfo(
        n_sweeps=int(n_sweeps),
        converged=code != 0,
        objective=float(obj),
        n_fallback=int(n_fb),
        trace=trace[:n_trace].copy() if record_trace else None,
    )
    return path, info


def block_update(gram: np.ndarray, score_at_zero: np.ndarray, threshold: float) -> np.ndarray:
    """One exact jump-block minimization: 0.5 t'At - b't + thr*||t||.

    Zero exactly when ||b|| <= thr; otherwise solves the stationarity system
    (A + (thr/||t||) I) t = b by root search on ||t||.
    """
    gram = np.asarray(gram, dtype=np.float64)
    b = np.ascontiguousarray(score_at_zero, dtype=np.float64)
    w, vec = np.linalg.eigh(gram)
    theta, ok = _kernels.group_threshold_update(
        np.ascontiguousarray(w), np.ascontiguousarray(vec), b, float(threshold)
    )
    if not ok:
        raise EstimationError("group-threshold root search failed to bracket")
    return theta


def group_objective(panel: Panel, members, weights, lam: float, path: np.ndarray) -> float:
    """Evaluate the group's penalized objective at an arbitrary path."""
    members = _members_array(panel, members)
    xs = panel.x[members]
    ys = panel.y[members]
    fit = np.einsum("itk,tk->it", xs, path)
    loss = float(np.sum((ys - fit) ** 2))
    jumps = np.linalg.norm(np.diff(path, axis=0), axis=1)
    nt = panel.n_units * panel.n_periods
    return loss / nt + lam * float(np.dot(weights, jumps))


def kkt_residuals(panel: Panel, members, weights, lam: float, path: np.ndarray):
    """KKT certificate at a candidate solution, in objective-gradient units.

    Returns (max zero-block violation, max active-block stationarity
    residual); both should be ~0 at the optimum.
    """
    members = _members_array(panel, members)
    T, _ = path.shape
    S, v, _yy = _group_stats(panel, members)
    nt = float(panel.n_units * T)
    thr = _thresholds(np.asarray(weights, dtype=np.float64), lam, nt, T)
    theta = np.empty_like(path)
    theta[0] = path[0]
    theta[1:] = np.diff(path, axis=0)
    d = v - np.einsum("tkl,tl->tk", S, path)
    zero_viol = 0.0
    active_resid = 0.0
    for s in range(T):
        c = d[s:].sum(axis=0)
        gcum = S[s:].sum(axis=0)
        if s == 0:
            active_resid = max(active_resid, 2.0 / nt * np.linalg.norm(c))
            continue
        b = c + gcum @ theta[s]
        norm_t = np.linalg.norm(theta[s])
        if norm_t == 0.0:
            zero_viol = max(zero_viol, 2.0 / nt * max(0.0, np.linalg.norm(b) - thr[s]))
        else:
            resid = gcum @ theta[s] + thr[s] * theta[s] / norm_t - b
            active_resid = max(active_resid, 2.0 / nt * np.linalg.norm(resid))
    return zero_viol, active_resid


def lambda_max(panel: Panel, members, weights) -> float:
    """Smallest lambda at which the group's path fuses completely.

    At full fusion the path is the pooled-over-time OLS; the KKT zero test
    then requires ||score_t|| <= NT*lam*w_t/2 for every t >= 2.
    """
    members = _members_array(panel, members)
    T = panel.n_periods
    weights = np.asarray(weights, dtype=np.float64)
    S, v, _yy = _group_stats(panel, members)
    pooled = np.linalg.solve(S.sum(axis=0), v.sum(axis=0))
    d = v - S @ pooled
    nt = float(panel.n_units * T)
    lam = 0.0
    for s in range(1, T):
        score = np.linalg.norm(d[s:].sum(axis=0))
        lam = max(lam, 2.0 * score / (nt * weights[s - 1]))
    return lam


def post_lasso(panel: Panel, assignment: GroupAssignment, breaks: BreakStructure):
    """Pooled OLS refit per (group, regime) with cluster-robust errors.

    Pools observations i in group g, t in regime j; the variance estimator
    is the sandwich H^{-1} (sum_i s_i s_i') H^{-1} with per-unit scores
    s_i = sum_{t in regime} x_it e_it, so arbitrary within-unit correlation
    is allowed while units stay independent.

    Returns (coefs, std_errors): tuples over groups of (m_g+1, k) arrays.
    """
    coefs, ses, _sse = post_lasso_full(panel, assignment, breaks)
    return coefs, ses


def post_lasso_full(panel: Panel, assignment: GroupAssignment, breaks: BreakStructure):
    """post_lasso plus the total squared residual of the refit."""
    T = panel.n_periods
    coefs = []
    ses = []
    sse = 0.0
    for g in range(1, assignment.n_groups + 1):
        members = assignment.members(g)
        bounds = breaks.regime_bounds(g, T)
        alpha = np.empty((len(bounds), panel.n_regressors))
        se = np.empty_like(alpha)
        for j, (start, end) in enumerate(bounds):
            xs = panel.x[members, start - 1 : end]
            ys = panel.y[members, start - 1 : end]
            H = np.einsum("ilk,ilm->km", xs, xs)
            rhs = np.einsum("ilk,il->k", xs, ys)
            w = np.linalg.eigvalsh(H)
            if members.size == 0 or w[0] <= 1e-10 * max(1.0, w[-1]):
                raise DegenerateRegimeError(g, j + 1)
            a = np.linalg.solve(H, rhs)
            resid = ys - xs @ a
            sse += float(np.sum(resid * resid))
            scores = np.einsum("ilk,il->ik", xs, resid)
            meat = scores.T @ scores
            hinv = np.linalg.inv(H)
            cov = hinv @ meat @ hinv
            alpha[j] = a
            se[j] = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        coefs.append(alpha)
        ses.append(se)
    return tuple(coefs), tuple(ses), sse
