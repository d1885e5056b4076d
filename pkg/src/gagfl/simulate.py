"""Monte Carlo data generation and the replication study driver.

Four designs share a three-group coefficient layout on a scalar regressor:
group 1 jumps 1 -> 2 -> 3 at floor(T/2) and floor(5T/6), group 2 jumps
3 -> 4 -> 5 at floor(T/3) and floor(5T/6), group 3 stays at 1.5.  The
variants add AR(1) errors, an additive unit fixed effect, or a lagged
outcome with its own breaking coefficient.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .errors import GagflError, SimulationError
from .estimator import GagflOptions, fit_gagfl
from .gfe import GfeOptions
from .agfl import AgflOptions
from .metrics import coverage, hausdorff, misclassification, rmse_path, unit_paths_from_fit
from .model import BreakStructure, CoefficientPath, GroupAssignment, Panel, expand_regimes
from .selection import LambdaGrid, SelectionReport, bic_groups, fit_lambda_grid, ic_lambda

DGP_NAMES = ("dgp1", "dgp2", "dgp3", "dgp4")

_SLOPE_REGIMES = ((1.0, 2.0, 3.0), (3.0, 4.0, 5.0), (1.5,))
_LAG_REGIMES = ((0.2, 0.8, 0.2), (-0.3, -0.6, -0.9), (0.5,))
_AR_RHO = 0.5


@dataclass(frozen=True)
class DgpSpec:
    dgp: str = "dgp1"
    n_units: int = 50
    n_periods: int = 10
    sigma_eps: float = 0.5
    group_shares: tuple = (0.3, 0.3, 0.4)
    break_layout: str = "paper"  # or "close_breaks"
    seed: int = 0
    group_dependent_regressors: bool = False
    heterogeneity_scale: float = 1.0

    def __post_init__(self):
        if self.dgp not in DGP_NAMES:
            raise SimulationError(f"unknown dgp {self.dgp!r}")
        if self.break_layout not in ("paper", "close_breaks"):
            raise SimulationError(f"unknown break_layout {self.break_layout!r}")
        shares = np.asarray(self.group_shares, dtype=np.float64)
        if shares.size != 3 or (shares <= 0).any() or abs(shares.sum() - 1.0) > 1e-9:
            raise SimulationError("group_shares must be 3 positive values summing to 1")
        if self.n_units * shares.min() < 1:
            raise SimulationError("smallest group share leaves no units")
        if self.sigma_eps < 0:
            raise SimulationError("sigma_eps must be >= 0")
        if self.heterogeneity_scale <= 0:
            raise SimulationError("heterogeneity_scale must be > 0")


@dataclass(frozen=True)
class SimTruth:
    assignment: GroupAssignment
    beta_path: CoefficientPath
    break_structure: BreakStructure


def _group_sizes(n: int, shares) -> np.ndarray:
    """Floor each N*share, then hand out the remainder in group order."""
    shares = np.asarray(shares, dtype=np.float64)
    sizes = np.floor(n * shares).astype(np.int64)
    for g in range(sizes.size):
        if sizes.sum() >= n:
            break
        sizes[g] += 1
    return sizes


def _break_dates(T: int, layout: str):
    if layout == "paper":
        dates = ((T // 2, 5 * T // 6), (T // 3, 5 * T // 6), ())
    else:
        dates = ((T // 2, 2 * T // 3), (T // 3, T // 2), ())
    for g, dd in enumerate(dates, start=1):
        if any(d < 2 or d > T for d in dd):
            raise SimulationError(f"group {g}: break dates {dd} fall outside 2..{T}")
        if any(d2 <= d1 for d1, d2 in zip(dd, dd[1:])):
            raise SimulationError(
                f"group {g}: floored break dates collide at {dd}; T={T} is too short"
            )
    return dates


def _shrink(regimes, scale: float):
    """Pull all regime values toward their grand mean (small-break designs)."""
    if scale == 1.0:
        return regimes
    center = float(np.mean([np.mean(r) for r in regimes]))
    return tuple(tuple(center + scale * (v - center) for v in r) for r in regimes)


def truth_for(spec: DgpSpec) -> SimTruth:
    """Group labels, break dates, and the implied coefficient path."""
    T = spec.n_periods
    dates = _break_dates(T, spec.break_layout)
    slope = _shrink(_SLOPE_REGIMES, spec.heterogeneity_scale)
    if spec.dgp == "dgp4":
        lag = _shrink(_LAG_REGIMES, spec.heterogeneity_scale)
        coefs = tuple(
            np.column_stack([lag[g], slope[g]]) for g in range(3)
        )
    else:
        coefs = tuple(np.array(slope[g])[:, None] for g in range(3))
    breaks = BreakStructure(dates, coefs)
    sizes = _group_sizes(spec.n_units, spec.group_shares)
    labels = np.repeat(np.arange(1, 4), sizes)
    assignment = GroupAssignment(labels, 3)
    return SimTruth(
        assignment=assignment,
        beta_path=expand_regimes(breaks, T),
        break_structure=breaks,
    )


def _draw_errors(spec: DgpSpec, rng, shape):
    if spec.dgp == "dgp2":
        n, t = shape
        eps = np.empty(shape)
        # stationary AR(1) with sd(eps) = sigma_eps: u ~ N(0, (1-rho^2) sigma^2)
        sd_u = spec.sigma_eps * math.sqrt(1.0 - _AR_RHO**2)
        prev = rng.standard_normal(n) * spec.sigma_eps
        for j in range(t):
            prev = _AR_RHO * prev + sd_u * rng.standard_normal(n)
            eps[:, j] = prev
        return eps
    return spec.sigma_eps * rng.standard_normal(shape)


def generate(spec: DgpSpec):
    """Draw one panel plus its ground truth; deterministic given spec.seed.

    Regressors are i.i.d. standard normal (optionally mean-shifted by group);
    dgp3 adds the unit's average regressor as a fixed effect; dgp4 includes
    the lagged outcome as the first regressor, initialized by a 100-period
    burn-in under the first regime's parameters.
    """
    truth = truth_for(spec)
    N, T = spec.n_units, spec.n_periods
    rng = np.random.default_rng([spec.seed & 0x7FFFFFFFFFFFFFFF, 0])
    labels0 = truth.assignment.labels - 1
    path = truth.beta_path.values  # (3, T, k)

    xs = rng.standard_normal((N, T))
    if spec.group_dependent_regressors:
        shifts = np.linspace(-0.5, 0.5, 3)
        xs = xs + shifts[labels0][:, None]

    if spec.dgp == "dgp4":
        burn = 100
        xb = rng.standard_normal((N, burn))
        if spec.group_dependent_regressors:
            xb = xb + np.linspace(-0.5, 0.5, 3)[labels0][:, None]
        eb = spec.sigma_eps * rng.standard_normal((N, burn))
        eps = _draw_errors(spec, rng, (N, T))
        tau1 = path[labels0, 0, 0]
        beta1 = path[labels0, 0, 1]
        y_prev = np.zeros(N)
        for j in range(burn):
            y_prev = tau1 * y_prev + beta1 * xb[:, j] + eb[:, j]
        y = np.empty((N, T))
        x = np.empty((N, T, 2))
        for t in range(T):
            tau_t = path[labels0, t, 0]
            beta_t = path[labels0, t, 1]
            x[:, t, 0] = y_prev
            x[:, t, 1] = xs[:, t]
            y[:, t] = tau_t * y_prev + beta_t * xs[:, t] + eps[:, t]
            y_prev = y[:, t]
        if not np.isfinite(y).all():
            raise SimulationError("dynamic panel overflowed; check regime persistence")
        return Panel(y, x), truth

    eps = _draw_errors(spec, rng, (N, T))
    beta_it = path[labels0, :, 0]  # (N, T)
    y = xs * beta_it + eps
    if spec.dgp == "dgp3":
        y = y + xs.mean(axis=1, keepdims=True)
    return Panel(y, xs[:, :, None]), truth


# ---------------------------------------------------------------------------
# Replication studies
# ---------------------------------------------------------------------------

METRIC_COLUMNS = [
    "rep", "mf", "hd_g1", "hd_g2",
    "break_acc_g1", "break_acc_g2", "break_acc_g3",
    "rmse", "coverage", "g_selected",
]


@dataclass(frozen=True)
class StudyConfig:
    """How each replication is estimated and scored."""

    n_groups: int = 3
    select_groups: bool = False
    g_range: tuple = (1, 2, 3, 4, 5)
    lambda_grid: LambdaGrid = field(default_factory=LambdaGrid.simulation_default)
    mode: str = "auto"  # auto: first differences for dgp3, levels otherwise
    kappa: float = 2.0
    ic_c: float = 0.05
    n_starts: int = 100
    max_outer_iters: int = 100
    workers: int = 1


def _mode_for(spec: DgpSpec, config: StudyConfig) -> str:
    if config.mode == "auto":
        return "first_difference" if spec.dgp == "dgp3" else "level"
    if config.mode in ("fd", "first_difference"):
        return "first_difference"
    return "level"


def _derived_seed(seed: int, rep: int, stream: int) -> int:
    return int(np.random.default_rng([seed & 0x7FFFFFFFFFFFFFFF, rep, stream]).integers(2**62))


def _score_fit(fit, truth: SimTruth, panel: Panel, g_selected: int, rep: int) -> dict:
    T = panel.n_periods
    mis = misclassification(fit.assignment, truth.assignment)
    row = {"rep": rep, "mf": mis.mf, "g_selected": g_selected}
    # est label matched to each true group (None when a padded label)
    est_for_true = {}
    for a, g_true in enumerate(mis.permutation, start=1):
        if a <= fit.n_groups and g_true <= truth.assignment.n_groups:
            est_for_true[int(g_true)] = a
    for g in (1, 2, 3):
        a = est_for_true.get(g)
        est_dates = fit.breaks.break_dates[a - 1] if a is not None else ()
        true_dates = truth.break_structure.break_dates[g - 1]
        row[f"break_acc_g{g}"] = float(len(est_dates) == len(true_dates))
        if g <= 2:
            row[f"hd_g{g}"] = hausdorff(est_dates, true_dates, T)
    beta_hat, se_hat = unit_paths_from_fit(fit, T)
    truth_it = truth.beta_path.values[truth.assignment.labels - 1]
    row["rmse"] = rmse_path(beta_hat, truth_it).pooled
    try:
        row["coverage"] = coverage(beta_hat, se_hat, truth_it).pooled
    except GagflError:
        row["coverage"] = math.nan
    return row


def run_replication(spec: DgpSpec, config: StudyConfig, rep: int, seed: int) -> dict:
    """Generate, estimate, and score replication ``rep``."""
    data_spec = replace(spec, seed=_derived_seed(seed, rep, 0))
    panel, truth = generate(data_spec)
    mode = _mode_for(spec, config)
    opts = GagflOptions(
        gfe=GfeOptions(
            n_starts=config.n_starts,
            seed=_derived_seed(seed, rep, 1),
        ),
        agfl=AgflOptions(kappa=config.kappa),
        max_outer_iters=config.max_outer_iters,
        mode=mode,
    )
    N, T, k = panel.n_units, panel.n_periods, panel.n_regressors
    if config.select_groups:
        report = bic_groups(panel, config.g_range, config.lambda_grid, opts, c=config.ic_c)
        fit = report.chosen_fit
        g_selected = report.chosen_g
    else:
        fits = fit_lambda_grid(panel, config.n_groups, config.lambda_grid, opts)
        lam = ic_lambda(fits, N, T, k, config.ic_c)
        fit = next(f for f in fits if f.lam == lam)
        g_selected = config.n_groups
    return _score_fit(fit, truth, panel, g_selected, rep)


def _rep_worker(args):
    spec, config, rep, seed = args
    try:
        return rep, run_replication(spec, config, rep, seed), None
    except GagflError as err:
        return rep, None, f"{type(err).__name__}: {err}"


@dataclass
class StudyResult:
    table: pd.DataFrame
    summary: dict
    failures: dict = field(default_factory=dict)


def run_study(spec: DgpSpec, config: StudyConfig, n_replications: int,
              seed: int = 0) -> StudyResult:
    """Run a replication study and aggregate the scores.

    Replication r derives all of its randomness from (seed, r), so results
    are identical regardless of worker count or execution order.  Failed
    replications are excluded from the averages and reported in
    ``failures``.
    """
    if n_replications < 1:
        raise SimulationError("n_replications must be >= 1")
    tasks = [(spec, config, r, seed) for r in range(n_replications)]
    results = []
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_rep_worker, tasks))
    else:
        results = [_rep_worker(t) for t in tasks]
    results.sort(key=lambda r: r[0])

    rows = [row for _rep, row, err in results if err is None]
    failures = {rep: err for rep, _row, err in results if err is not None}
    table = pd.DataFrame(rows, columns=METRIC_COLUMNS)

    summary = {
        "n_replications": n_replications,
        "n_failed": len(failures),
        "mean_mf": float(table["mf"].mean()),
        "mean_rmse": float(table["rmse"].mean()),
        "mean_coverage": float(table["coverage"].mean()),
        "g_selected_freq": {
            int(g): float(c) / len(table)
            for g, c in table["g_selected"].value_counts().items()
        } if len(table) else {},
    }
    for g in (1, 2, 3):
        acc = table[f"break_acc_g{g}"]
        summary[f"break_acc_g{g}"] = float(acc.mean())
        if g <= 2:
            hd = table[f"hd_g{g}"]
            summary[f"mean_hd_g{g}"] = float(hd.mean())
            cond = hd[acc == 1.0]
            summary[f"mean_hd_g{g}_given_correct"] = (
                float(cond.mean()) if len(cond) else math.nan
            )
    return StudyResult(table=table, summary=summary, failures=failures)
