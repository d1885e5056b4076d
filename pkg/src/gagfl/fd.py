"""First-differencing support for panels with additive unit fixed effects.

Differencing removes a unit-specific intercept:

    dy_it = x_it' beta_{g,t} - x_{i,t-1}' beta_{g,t-1} + de_it,  t = 2..T.

Each differenced observation loads on two adjacent coefficient vectors, so
periods never decouple; all T per-period coefficients remain identified
through the cross section.  In the jump parameterization the regressor of
theta_s at observation (i, t) is dx_it for s <= t-1 and x_it for s = t.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DegenerateRegimeError, EstimationError
from .model import BreakStructure, GroupAssignment, Panel


@dataclass(frozen=True)
class DifferencedPanel:
    """The transformed regression implied by first differencing.

    Arrays are aligned on t = 2..T: column j corresponds to period j+2.
    Coefficients stay those of the level model (all T periods).
    """

    dy: np.ndarray     # (N, T-1)
    x: np.ndarray      # (N, T-1, k): x_it
    x_lag: np.ndarray  # (N, T-1, k): x_{i,t-1}
    n_periods: int     # T of the level model


def first_difference(panel: Panel) -> DifferencedPanel:
    """Difference a panel; requires T >= 3 so jumps remain identifiable."""
    if panel.n_periods < 3:
        raise EstimationError("first differencing requires T >= 3")
    dy = np.diff(panel.y, axis=1)
    return DifferencedPanel(
        dy=dy,
        x=panel.x[:, 1:, :].copy(),
        x_lag=panel.x[:, :-1, :].copy(),
        n_periods=panel.n_periods,
    )


def fd_group_moments(panel: Panel, members: np.ndarray):
    """Per-period moments of the differenced loss for one member set."""
    members = np.ascontiguousarray(members, dtype=np.int64)
    return _kernels.fd_fused_stats(panel.x, panel.y, members)


def solve_fused_fd(panel: Panel, members, weights, lam: float, opts,
                   init: np.ndarray = None, *, return_info: bool = False,
                   record_trace: bool = False):
    """BCD solve of the penalized differenced loss for one group.

    Mirrors agfl_solve_group but on dy_it = x_it'b_t - x_{i,t-1}'b_{t-1}.
    """
    from .agfl import GroupSolveInfo  # local import to avoid a cycle

    members = np.asarray(members, dtype=np.int64).ravel()
    T, k = panel.n_periods, panel.n_regressors
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (T - 1,):
        raise EstimationError(f"weights must have shape ({T - 1},)")
    P, C, pdy, qdy, dy2 = fd_group_moments(panel, members)
    nt = float(panel.n_units * T)
    thr = np.zeros(T)
    thr[1:] = nt * lam * weights / 2.0
    if init is None:
        theta = np.zeros((T, k))
    else:
        init = np.asarray(init, dtype=np.float64)
        theta = np.empty((T, k))
        theta[0] = init[0]
        theta[1:] = np.diff(init, axis=0)
    trace = np.empty(opts.max_sweeps * T if record_trace else 1)
    n_sweeps, code, obj, n_trace, n_fb = _kernels.bcd_fused_fd(
        P, C, pdy, qdy, dy2, nt, thr, theta, opts.tol_theta, opts.tol_obj,
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


def fd_group_loss(panel: Panel, members, path: np.ndarray) -> float:
    """Unnormalized differenced SSR of one group at a given path."""
    members = np.asarray(members, dtype=np.int64).ravel()
    xs = panel.x[members]
    ys = panel.y[members]
    fit = np.einsum("itk,tk->it", xs[:, 1:], path[1:]) - np.einsum(
        "itk,tk->it", xs[:, :-1], path[:-1]
    )
    resid = np.diff(ys, axis=1) - fit
    return float(np.sum(resid * resid))


def _regime_of_period(bounds, t):
    for j, (start, end) in enumerate(bounds):
        if start <= t <= end:
            return j
    raise ValueError(f"period {t} outside regimes")


def post_lasso_fd(panel: Panel, assignment: GroupAssignment, breaks: BreakStructure):
    """Regime refit on the differenced loss, one coupled solve per group.

    Within a regime the observation contributes dx_it on that regime's
    coefficient; at a break date it straddles two regimes (+x_it on the new
    one, -x_{i,t-1} on the old one), so the per-group system couples
    adjacent regimes and is solved jointly.  Standard errors come from the
    same unit-clustered sandwich as the level refit.

    Returns (coefs, std_errors, sse) with per-group (m_g+1, k) arrays.
    """
    T, k = panel.n_periods, panel.n_regressors
    coefs = []
    ses = []
    sse = 0.0
    for g in range(1, assignment.n_groups + 1):
        members = assignment.members(g)
        bounds = breaks.regime_bounds(g, T)
        J = len(bounds)
        dim = J * k
        # z[i, p, :] rows of the stacked regime design, p = 0-based diff obs
        z = np.zeros((members.size, T - 1, dim))
        xs = panel.x[members]
        ys = panel.y[members]
        for t in range(2, T + 1):
            p = t - 2
            j_now = _regime_of_period(bounds, t)
            j_prev = _regime_of_period(bounds, t - 1)
            if j_now == j_prev:
                z[:, p, j_now * k : (j_now + 1) * k] += xs[:, t - 1] - xs[:, t - 2]
            else:
                z[:, p, j_now * k : (j_now + 1) * k] += xs[:, t - 1]
                z[:, p, j_prev * k : (j_prev + 1) * k] -= xs[:, t - 2]
        dy = np.diff(ys, axis=1)
        H = np.einsum("ipa,ipb->ab", z, z)
        rhs = np.einsum("ipa,ip->a", z, dy)
        w = np.linalg.eigvalsh(H)
        if members.size == 0 or w[0] <= 1e-10 * max(1.0, w[-1]):
            raise DegenerateRegimeError(g, -1, f"group {g}: singular differenced regime system")
        a = np.linalg.solve(H, rhs)
        resid = dy - z @ a
        sse += float(np.sum(resid * resid))
        scores = np.einsum("ipa,ip->ia", z, resid)
        meat = scores.T @ scores
        hinv = np.linalg.inv(H)
        cov = hinv @ meat @ hinv
        alpha = a.reshape(J, k)
        se = np.sqrt(np.clip(np.diag(cov), 0.0, None)).reshape(J, k)
        coefs.append(alpha)
        ses.append(se)
    return tuple(coefs), tuple(ses), sse
