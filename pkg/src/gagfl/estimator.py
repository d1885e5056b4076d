"""Joint estimation of group memberships, breaks, and regime coefficients.

The pipeline: a multi-start GFE fit initializes the assignment and supplies
the adaptive weights; then per-group fused-lasso solves (Step 1) alternate
with least-squares reassignment of units (Step 2) until the assignment
stops changing.  Breaks are read off the exact zero pattern of the
penalized path and the regime coefficients are refit by pooled OLS.

Coefficients can be declared, per coordinate, as fused (default), fully
time varying without a fusion penalty, time invariant within each group,
or homogeneous across groups; the last three reproduce the partially
penalized objective variants.
"""

from dataclasses import dataclass, field

import numpy as np

from .agfl import (
    AdaptiveWeights,
    AgflOptions,
    agfl_solve_group,
    block_update,
    compute_weights,
    post_lasso_full,
)
from .errors import EstimationError
from .fd import fd_group_loss, post_lasso_fd, solve_fused_fd
from .gfe import GfeOptions, fit_gfe, unit_ssr_matrix
from .model import (
    BREAK_TOL,
    BreakStructure,
    CoefficientPath,
    FitResult,
    GroupAssignment,
    Panel,
)


@dataclass(frozen=True)
class GagflOptions:
    gfe: GfeOptions = GfeOptions()
    agfl: AgflOptions = AgflOptions()
    max_outer_iters: int = 100
    mode: str = "level"  # "level" or "first_difference"
    penalized_mask: tuple = None       # default: all coordinates fused
    homogeneous_mask: tuple = None     # common to all groups, time invariant
    time_invariant_mask: tuple = None  # per group, time invariant
    break_tol: float = BREAK_TOL

    def __post_init__(self):
        if self.mode not in ("level", "first_difference"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")


@dataclass
class _CoordRoles:
    """Index sets of the four coordinate classes (0-based into x's last axis)."""

    fused: np.ndarray
    varying: np.ndarray
    group_const: np.ndarray
    homogeneous: np.ndarray

    @property
    def plain(self) -> bool:
        """True when every coordinate is fused (the default estimator)."""
        return (
            self.varying.size == 0
            and self.group_const.size == 0
            and self.homogeneous.size == 0
        )


def _resolve_roles(opts: GagflOptions, k: int) -> _CoordRoles:
    def as_mask(m, name):
        if m is None:
            return np.zeros(k, dtype=bool)
        m = np.asarray(m, dtype=bool)
        if m.shape != (k,):
            raise EstimationError(f"{name} must have length k={k}")
        return m

    hom = as_mask(opts.homogeneous_mask, "homogeneous_mask")
    inv = as_mask(opts.time_invariant_mask, "time_invariant_mask")
    if opts.penalized_mask is None:
        pen = ~(hom | inv)
    else:
        pen = as_mask(opts.penalized_mask, "penalized_mask")
    if ((pen & hom) | (pen & inv) | (hom & inv)).any():
        raise EstimationError("coordinate masks must be mutually exclusive")
    var = ~(pen | hom | inv)
    return _CoordRoles(
        fused=np.flatnonzero(pen),
        varying=np.flatnonzero(var),
        group_const=np.flatnonzero(inv),
        homogeneous=np.flatnonzero(hom),
    )


def _check_fd_regressors(panel: Panel):
    """Differencing cannot identify coefficients on unit-invariant regressors."""
    for j in range(panel.n_regressors):
        col = panel.x[:, :, j]
        if np.all(col == col[0:1, :]):
            raise EstimationError(
                f"regressor {j + 1} is identical across units; its coefficient level "
                "is not identified after first differencing (drop it or use level mode)"
            )


def _repair_empty_groups(labels: np.ndarray, ssr: np.ndarray, G: int) -> int:
    """Move the worst-fit unit from a multi-member group into each empty group."""
    sizes = np.bincount(labels, minlength=G)
    n_rep = 0
    for g in range(G):
        if sizes[g] > 0:
            continue
        eligible = np.flatnonzero(sizes[labels] >= 2)
        if eligible.size == 0:
            raise EstimationError("cannot repair empty group: too few units")
        own = ssr[eligible, labels[eligible]]
        pick = eligible[int(np.argmax(own))]
        sizes[labels[pick]] -= 1
        labels[pick] = g
        sizes[g] += 1
        n_rep += 1
    return n_rep


def _penalty_value(paths: np.ndarray, weights: np.ndarray, lam: float,
                   fused_idx: np.ndarray) -> float:
    jumps = np.diff(paths[:, :, fused_idx], axis=1)
    return lam * float(np.sum(weights * np.linalg.norm(jumps, axis=2)))


def _full_objective(panel: Panel, paths: np.ndarray, labels: np.ndarray,
                    weights: np.ndarray, lam: float, mode: str,
                    fused_idx: np.ndarray) -> float:
    ssr = unit_ssr_matrix(panel, paths, "level" if mode == "level" else "fd")
    nt = panel.n_units * panel.n_periods
    loss = float(ssr[np.arange(panel.n_units), labels].sum()) / nt
    return loss + _penalty_value(paths, weights, lam, fused_idx)


# ---------------------------------------------------------------------------
# Generic (mask-aware) per-group solver, level mode.  Pure numpy; used only
# when some coordinate is not fused, so it never sits on the hot path.
# ---------------------------------------------------------------------------


def _solve_groups_masked(panel, members_per_group, weights, lam, roles,
                         opts: AgflOptions, init_paths, beta_h,
                         max_cycles: int = 50):
    """Alternate the global homogeneous block with per-group fused solves.

    Returns (paths (G,T,k), beta_h (k_H,)).
    """
    T, k = panel.n_periods, panel.n_regressors
    G = len(members_per_group)
    nt = float(panel.n_units * T)
    fv = np.concatenate([roles.fused, roles.varying])
    nf = roles.fused.size
    ci = roles.group_const
    hi = roles.homogeneous

    stats = []
    for members in members_per_group:
        xs = panel.x[members]
        ys = panel.y[members]
        S = np.einsum("itk,itl->tkl", xs, xs)
        v = np.einsum("itk,it->tk", xs, ys)
        stats.append((S, v))

    paths = init_paths.copy()

    def _solve_one_group(g):
        S, v = stats[g]
        beta = paths[g].copy()
        if hi.size:
            beta[:, hi] = beta_h
        thr = np.zeros(T)
        thr[1:] = nt * lam * weights[g] / 2.0
        gcum_fv = np.cumsum(S[::-1][:, np.ix_(fv, fv)], axis=0)[::-1]
        if ci.size:
            s_cc = S[:, np.ix_(ci, ci)].sum(axis=0)
        for _sweep in range(opts.max_sweeps):
            max_change = 0.0
            d = v - np.einsum("tkl,tl->tk", S, beta)
            for s in range(T):
                c = d[s:].sum(axis=0)[fv]
                theta_cur = (beta[s, fv] - beta[s - 1, fv]) if s else beta[s, fv]
                b = c + gcum_fv[s] @ theta_cur
                if s == 0 or thr[s] <= 0 or nf == 0:
                    new = np.linalg.solve(gcum_fv[s], b)
                elif roles.varying.size == 0:
                    new = block_update(gcum_fv[s], b, thr[s])
                else:
                    A = gcum_fv[s]
                    aff = A[:nf, :nf]
                    afv = A[:nf, nf:]
                    avv = A[nf:, nf:]
                    avv_inv_bv = np.linalg.solve(avv, b[nf:])
                    avv_inv_avf = np.linalg.solve(avv, afv.T)
                    red_gram = aff - afv @ avv_inv_avf
                    red_score = b[:nf] - afv @ avv_inv_bv
                    tf = block_update(red_gram, red_score, thr[s])
                    tv = avv_inv_bv - avv_inv_avf @ tf
                    new = np.concatenate([tf, tv])
                delta = new - theta_cur
                dmax = np.abs(delta).max() if delta.size else 0.0
                if dmax > 0:
                    beta[s:, fv] = beta[s:, fv] + delta
                    d[s:] -= np.einsum("tkl,l->tk", S[s:][:, :, fv], delta)
                    max_change = max(max_change, dmax)
            if ci.size:
                d = v - np.einsum("tkl,tl->tk", S, beta)
                delta_c = np.linalg.solve(s_cc, d[:, ci].sum(axis=0))
                beta[:, ci] += delta_c
                max_change = max(max_change, np.abs(delta_c).max())
            if max_change < opts.tol_theta:
                break
        return beta

    for _cycle in range(max_cycles):
        for g in range(G):
            paths[g] = _solve_one_group(g)
        if hi.size == 0:
            break
        # global homogeneous coordinates: pooled update over every observation
        H = np.zeros((hi.size, hi.size))
        rhs = np.zeros(hi.size)
        for g in range(G):
            S, v = stats[g]
            d = v - np.einsum("tkl,tl->tk", S, paths[g])
            rhs += d[:, hi].sum(axis=0)
            H += S[:, np.ix_(hi, hi)].sum(axis=0)
        delta_h = np.linalg.solve(H, rhs)
        beta_h = beta_h + delta_h
        for g in range(G):
            paths[g][:, hi] = beta_h
        if np.abs(delta_h).max() < opts.tol_theta:
            break
    return paths, beta_h


# ---------------------------------------------------------------------------
# Mask-aware post-lasso: one global least squares with regime/constancy
# restrictions, cluster-robust by unit.
# ---------------------------------------------------------------------------


def _post_lasso_masked(panel, assignment, breaks, roles):
    T, k = panel.n_periods, panel.n_regressors
    G = assignment.n_groups
    fi, vi, ci, hi = roles.fused, roles.varying, roles.group_const, roles.homogeneous

    slots = {}
    p = 0
    bounds_per_group = []
    for g in range(1, G + 1):
        bounds = breaks.regime_bounds(g, T)
        bounds_per_group.append(bounds)
        for j in range(len(bounds)):
            for a in fi:
                slots[("f", g, j, int(a))] = p
                p += 1
        for t in range(T):
            for a in vi:
                slots[("v", g, t, int(a))] = p
                p += 1
        for a in ci:
            slots[("c", g, 0, int(a))] = p
            p += 1
    for a in hi:
        slots[("h", 0, 0, int(a))] = p
        p += 1

    N = panel.n_units
    Z = np.zeros((N, T, p))
    labels = assignment.labels
    for i in range(N):
        g = int(labels[i])
        bounds = bounds_per_group[g - 1]
        for t in range(T):
            j = next(jj for jj, (s, e) in enumerate(bounds) if s <= t + 1 <= e)
            for a in fi:
                Z[i, t, slots[("f", g, j, int(a))]] = panel.x[i, t, a]
            for a in vi:
                Z[i, t, slots[("v", g, t, int(a))]] = panel.x[i, t, a]
            for a in ci:
                Z[i, t, slots[("c", g, 0, int(a))]] = panel.x[i, t, a]
            for a in hi:
                Z[i, t, slots[("h", 0, 0, int(a))]] = panel.x[i, t, a]

    Zf = Z.reshape(N * T, p)
    yf = panel.y.reshape(N * T)
    Hmat = Zf.T @ Zf
    coef = np.linalg.solve(Hmat, Zf.T @ yf)
    resid = (yf - Zf @ coef).reshape(N, T)
    sse = float(np.sum(resid * resid))
    scores = np.einsum("itp,it->ip", Z, resid)
    hinv = np.linalg.inv(Hmat)
    cov = hinv @ (scores.T @ scores) @ hinv
    se_vec = np.sqrt(np.clip(np.diag(cov), 0.0, None))

    coefs = []
    ses = []
    v_paths = []
    v_ses = []
    for g in range(1, G + 1):
        bounds = bounds_per_group[g - 1]
        alpha = np.full((len(bounds), k), np.nan)
        alpha_se = np.full((len(bounds), k), np.nan)
        for j in range(len(bounds)):
            for a in fi:
                alpha[j, a] = coef[slots[("f", g, j, int(a))]]
                alpha_se[j, a] = se_vec[slots[("f", g, j, int(a))]]
            for a in ci:
                alpha[j, a] = coef[slots[("c", g, 0, int(a))]]
                alpha_se[j, a] = se_vec[slots[("c", g, 0, int(a))]]
            for a in hi:
                alpha[j, a] = coef[slots[("h", 0, 0, int(a))]]
                alpha_se[j, a] = se_vec[slots[("h", 0, 0, int(a))]]
        vp = np.empty((T, vi.size))
        vs = np.empty((T, vi.size))
        for t in range(T):
            for col, a in enumerate(vi):
                vp[t, col] = coef[slots[("v", g, t, int(a))]]
                vs[t, col] = se_vec[slots[("v", g, t, int(a))]]
        coefs.append(alpha)
        ses.append(alpha_se)
        v_paths.append(vp)
        v_ses.append(vs)
    extras = {
        "varying_paths": tuple(v_paths),
        "varying_ses": tuple(v_ses),
        "homogeneous_coef": {int(a): float(coef[slots[("h", 0, 0, int(a))]]) for a in hi},
    }
    return tuple(coefs), tuple(ses), sse, extras


# ---------------------------------------------------------------------------
# The outer alternation
# ---------------------------------------------------------------------------


def fit_gagfl(panel: Panel, G: int, lam: float,
              opts: GagflOptions = GagflOptions(), *,
              prelim=None, init_paths: np.ndarray = None) -> FitResult:
    """Estimate groups, breaks, and coefficients at one (G, lambda).

    Parameters
    ----------
    prelim : optional (CoefficientPath, GroupAssignment) preliminary GFE
        estimate; pass it to share one GFE fit across a lambda grid.
    init_paths : optional (G, T, k) warm start for the first Step 1 (the
        per-group problems are strictly convex, so this changes run time,
        not the solution).

    Returns a FitResult; ``converged`` reports whether the assignment
    stabilized within ``opts.max_outer_iters``.
    """
    if G < 1:
        raise EstimationError("G must be >= 1")
    if lam < 0:
        raise EstimationError("lambda must be >= 0")
    T, k = panel.n_periods, panel.n_regressors
    roles = _resolve_roles(opts, k)
    mode = "level" if opts.mode == "level" else "fd"
    if mode == "fd":
        if not roles.plain:
            raise EstimationError("coordinate masks are not supported in first-difference mode")
        if T < 3:
            raise EstimationError("first-difference mode requires T >= 3")
        _check_fd_regressors(panel)
    if roles.plain and roles.fused.size == 0:
        raise EstimationError("at least one coordinate must be penalized")

    if prelim is None:
        prelim_path, prelim_gamma, _prelim_sse = fit_gfe(panel, G, opts.gfe, mode=mode)
    else:
        prelim_path, prelim_gamma = prelim
        if prelim_path.values.shape != (G, T, k):
            raise EstimationError("prelim path has wrong shape")

    if roles.fused.size:
        fused_prelim = CoefficientPath(prelim_path.values[:, :, roles.fused])
        weights = compute_weights(fused_prelim, opts.agfl.kappa, opts.agfl.weight_floor)
    else:
        weights = AdaptiveWeights(np.ones((G, T - 1)))
    wv = weights.values

    labels = np.ascontiguousarray(prelim_gamma.labels - 1)
    paths = prelim_path.values.copy()
    if init_paths is not None:
        init_paths = np.asarray(init_paths, dtype=np.float64)
        if init_paths.shape != (G, T, k):
            raise EstimationError("init_paths has wrong shape")
        paths = init_paths.copy()
    beta_h = paths[0, 0, roles.homogeneous].copy() if roles.homogeneous.size else np.empty(0)

    seen = {labels.tobytes()}
    outer_objs = []
    n_repairs = 0
    bcd_converged = True
    converged = False
    n_outer = 0
    for _outer in range(opts.max_outer_iters):
        n_outer += 1
        members_per_group = [np.flatnonzero(labels == g) for g in range(G)]
        if roles.plain:
            for g in range(G):
                if mode == "level":
                    paths[g], info = agfl_solve_group(
                        panel, members_per_group[g], wv[g], lam, opts.agfl,
                        init=paths[g], return_info=True,
                    )
                else:
                    paths[g], info = solve_fused_fd(
                        panel, members_per_group[g], wv[g], lam, opts.agfl,
                        init=paths[g], return_info=True,
                    )
                bcd_converged = bcd_converged and info.converged
        else:
            paths, beta_h = _solve_groups_masked(
                panel, members_per_group, wv, lam, roles, opts.agfl, paths, beta_h
            )
        outer_objs.append(
            _full_objective(panel, paths, labels, wv, lam, mode, roles.fused)
        )
        ssr = unit_ssr_matrix(panel, paths, mode)
        new_labels = np.argmin(ssr, axis=1).astype(np.int64)
        n_repairs += _repair_empty_groups(new_labels, ssr, G)
        if np.array_equal(new_labels, labels):
            converged = True
            break
        key = new_labels.tobytes()
        if key in seen:
            break  # assignment cycle: stop, flag as not converged
        seen.add(key)
        labels = new_labels

    assignment = GroupAssignment(labels + 1, G)
    fused_paths = paths[:, :, roles.fused]
    jump_norms = np.linalg.norm(np.diff(fused_paths, axis=1), axis=2)
    break_dates = tuple(
        tuple(int(t) for t in np.flatnonzero(jump_norms[g] > opts.break_tol) + 2)
        for g in range(G)
    )
    regime_coefs = tuple(
        fused_paths[g, [0, *[d - 1 for d in break_dates[g]]]] for g in range(G)
    )
    breaks = BreakStructure(break_dates, regime_coefs)

    diagnostics = {
        "outer_objectives": outer_objs,
        "n_empty_repairs": n_repairs,
        "bcd_converged": bcd_converged,
        "gfe_sse": None if prelim is not None else float(_prelim_sse),
        "mode": opts.mode,
    }
    if roles.plain:
        if mode == "level":
            pl_coefs, pl_ses, pl_sse = post_lasso_full(panel, assignment, breaks)
        else:
            pl_coefs, pl_ses, pl_sse = post_lasso_fd(panel, assignment, breaks)
    else:
        pl_coefs, pl_ses, pl_sse, extras = _post_lasso_masked(
            panel, assignment, breaks, roles
        )
        diagnostics.update(extras)
        diagnostics["coordinate_roles"] = {
            "fused": roles.fused.tolist(),
            "varying": roles.varying.tolist(),
            "group_const": roles.group_const.tolist(),
            "homogeneous": roles.homogeneous.tolist(),
        }

    nt = panel.n_units * panel.n_periods
    return FitResult(
        assignment=assignment,
        breaks=breaks,
        post_lasso_coefs=pl_coefs,
        std_errors=pl_ses,
        lam=float(lam),
        penalized_objective=float(outer_objs[-1]),
        sse=float(pl_sse / nt),
        n_outer_iterations=n_outer,
        converged=converged,
        penalized_path=CoefficientPath(paths),
        diagnostics=diagnostics,
    )


def fit_partial(panel: Panel, G: int, lam: float, opts: GagflOptions) -> FitResult:
    """Estimate with per-coordinate roles (the partially penalized variants).

    Same alternation contract as fit_gagfl; exists as the named entry point
    for mask-driven fits.
    """
    return fit_gagfl(panel, G, lam, opts)
