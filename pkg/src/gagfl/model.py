"""Core data model: panels, group assignments, coefficient paths, breaks.

Conventions used throughout the package:

* periods are 1-based, t = 1..T;
* a break date is the first period of a new regime, so break dates live in
  {2..T} and regime j of group g covers T_{g,j-1} <= t < T_{g,j} with the
  sentinels T_{g,0} = 1 and T_{g,m_g+1} = T+1;
* group labels are 1-based, g = 1..G.

All types are immutable after construction (arrays are marked read-only),
so they can be shared freely across threads or processes.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidStructureError, PanelValidationError

#: Default tolerance for detecting a jump between adjacent periods.  The
#: fused solver produces exact zeros for fused blocks, so this only guards
#: against float dust introduced by refits.
BREAK_TOL = 1e-8


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Panel:
    """A balanced panel: y[i, t] outcomes and x[i, t, :] regressors."""

    y: np.ndarray
    x: np.ndarray
    unit_ids: tuple = None
    period_ids: tuple = None

    def __post_init__(self):
        y = _frozen(self.y)
        x = _frozen(self.x)
        if y.ndim != 2:
            raise PanelValidationError(f"y must be N x T, got shape {y.shape}")
        if x.ndim != 3 or x.shape[:2] != y.shape:
            raise PanelValidationError(
                f"x must be N x T x k matching y, got {x.shape} vs {y.shape}"
            )
        n, t, k = x.shape
        if n < 2 or t < 2 or k < 1:
            raise PanelValidationError(f"need N >= 2, T >= 2, k >= 1, got ({n}, {t}, {k})")
        if not np.isfinite(y).all() or not np.isfinite(x).all():
            raise PanelValidationError("panel contains non-finite entries")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        if self.unit_ids is None:
            object.__setattr__(self, "unit_ids", tuple(range(1, n + 1)))
        elif len(self.unit_ids) != n:
            raise PanelValidationError("unit_ids length does not match N")
        else:
            object.__setattr__(self, "unit_ids", tuple(self.unit_ids))
        if self.period_ids is None:
            object.__setattr__(self, "period_ids", tuple(range(1, t + 1)))
        elif len(self.period_ids) != t:
            raise PanelValidationError("period_ids length does not match T")
        else:
            object.__setattr__(self, "period_ids", tuple(self.period_ids))

    @property
    def n_units(self) -> int:
        return self.y.shape[0]

    @property
    def n_periods(self) -> int:
        return self.y.shape[1]

    @property
    def n_regressors(self) -> int:
        return self.x.shape[2]


@dataclass(frozen=True)
class GroupAssignment:
    """Unit-to-group map: labels[i] in {1..G}."""

    labels: np.ndarray
    n_groups: int

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        labels.setflags(write=False)
        if labels.ndim != 1:
            raise InvalidStructureError("labels must be a 1-d vector")
        if self.n_groups < 1:
            raise InvalidStructureError("n_groups must be >= 1")
        if labels.size and (labels.min() < 1 or labels.max() > self.n_groups):
            raise InvalidStructureError(
                f"labels must lie in 1..{self.n_groups}, got range "
                f"[{labels.min()}, {labels.max()}]"
            )
        object.__setattr__(self, "labels", labels)

    @property
    def n_units(self) -> int:
        return self.labels.size

    def group_sizes(self) -> np.ndarray:
        """Counts N_g for g = 1..G (sums to N)."""
        return np.bincount(self.labels - 1, minlength=self.n_groups)

    def members(self, g: int) -> np.ndarray:
        """Unit indices (0-based) assigned to 1-based group g."""
        return np.flatnonzero(self.labels == g)


@dataclass(frozen=True)
class CoefficientPath:
    """Per-group per-period coefficients, values[g-1, t-1, :]."""

    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 3:
            raise InvalidStructureError(f"values must be G x T x k, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise InvalidStructureError("coefficient path contains non-finite entries")
        object.__setattr__(self, "values", v)

    @property
    def n_groups(self) -> int:
        return self.values.shape[0]

    @property
    def n_periods(self) -> int:
        return self.values.shape[1]

    @property
    def n_regressors(self) -> int:
        return self.values.shape[2]

    def jumps(self) -> np.ndarray:
        """First differences over time: jumps[g, t-2] = beta[g,t] - beta[g,t-1]."""
        return np.diff(self.values, axis=1)


@dataclass(frozen=True)
class BreakStructure:
    """Per-group break dates and regime coefficients.

    ``break_dates[g-1]`` is a strictly increasing tuple of dates in {2..T};
    ``regime_coefs[g-1]`` is an (m_g + 1) x k read-only array.  The
    representation is minimal: adjacent regime coefficients must differ.
    """

    break_dates: tuple
    regime_coefs: tuple

    def __post_init__(self):
        if len(self.break_dates) != len(self.regime_coefs):
            raise InvalidStructureError("break_dates and regime_coefs disagree on G")
        dates_out = []
        coefs_out = []
        for g, (dates, coefs) in enumerate(zip(self.break_dates, self.regime_coefs), start=1):
            dates = tuple(int(d) for d in dates)
            coefs = _frozen(np.atleast_2d(coefs))
            if any(d2 <= d1 for d1, d2 in zip(dates, dates[1:])):
                raise InvalidStructureError(f"group {g}: break dates not strictly increasing")
            if any(d < 2 for d in dates):
                raise InvalidStructureError(f"group {g}: break dates must be >= 2")
            if coefs.shape[0] != len(dates) + 1:
                raise InvalidStructureError(
                    f"group {g}: {coefs.shape[0]} regimes for {len(dates)} breaks "
                    f"(need {len(dates) + 1})"
                )
            adj = np.linalg.norm(np.diff(coefs, axis=0), axis=1)
            if len(dates) and not (adj > 0).all():
                raise InvalidStructureError(
                    f"group {g}: adjacent regime coefficients must differ (minimality)"
                )
            dates_out.append(dates)
            coefs_out.append(coefs)
        object.__setattr__(self, "break_dates", tuple(dates_out))
        object.__setattr__(self, "regime_coefs", tuple(coefs_out))

    @property
    def n_groups(self) -> int:
        return len(self.break_dates)

    @property
    def n_regressors(self) -> int:
        return self.regime_coefs[0].shape[1]

    def n_breaks(self) -> tuple:
        """m_g per group."""
        return tuple(len(d) for d in self.break_dates)

    def regime_bounds(self, g: int, T: int) -> list:
        """[(start, end)] pairs with 1-based inclusive ends for group g."""
        edges = [1, *self.break_dates[g - 1], T + 1]
        return [(edges[j], edges[j + 1] - 1) for j in range(len(edges) - 1)]


@dataclass(frozen=True)
class FitResult:
    """Everything produced by one (G, lambda) estimation."""

    assignment: GroupAssignment
    breaks: BreakStructure
    post_lasso_coefs: tuple
    std_errors: tuple
    lam: float
    penalized_objective: float
    sse: float
    n_outer_iterations: int
    converged: bool
    penalized_path: CoefficientPath = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.penalized_objective) or not np.isfinite(self.sse):
            raise InvalidStructureError("objective and sse must be finite")
        if self.sse < 0:
            raise InvalidStructureError("sse must be nonnegative")

    @property
    def n_groups(self) -> int:
        return self.assignment.n_groups

    def n_breaks(self) -> tuple:
        return self.breaks.n_breaks()

    def total_regimes(self) -> int:
        """Sum over groups of (m_g + 1)."""
        return sum(m + 1 for m in self.n_breaks())


def expand_regimes(breaks: BreakStructure, T: int) -> CoefficientPath:
    """Expand regime coefficients into the per-period path.

    beta[g, t] = alpha[g, j] on T_{g,j-1} <= t < T_{g,j}.  Inverse of
    :func:`infer_breaks` for minimal structures.
    """
    G = breaks.n_groups
    k = breaks.n_regressors
    values = np.empty((G, T, k))
    for g in range(1, G + 1):
        dates = breaks.break_dates[g - 1]
        if any(d > T for d in dates):
            raise InvalidStructureError(
                f"group {g}: break date {max(dates)} outside 2..{T}"
            )
        for j, (start, end) in enumerate(breaks.regime_bounds(g, T)):
            values[g - 1, start - 1 : end] = breaks.regime_coefs[g - 1][j]
    return CoefficientPath(values)


def infer_breaks(path: CoefficientPath, tol: float = BREAK_TOL) -> BreakStructure:
    """Read break dates off a coefficient path.

    t in {2..T} is a break for group g iff ||beta[g,t] - beta[g,t-1]|| > tol;
    each regime's coefficient is the path value at the regime start.
    """
    if tol < 0:
        raise InvalidStructureError("tol must be >= 0")
    all_dates = []
    all_coefs = []
    jump_norms = np.linalg.norm(path.jumps(), axis=2)
    for g in range(path.n_groups):
        dates = tuple(int(t) for t in np.flatnonzero(jump_norms[g] > tol) + 2)
        starts = [1, *dates]
        coefs = path.values[g, [s - 1 for s in starts]]
        all_dates.append(dates)
        all_coefs.append(coefs)
    return BreakStructure(tuple(all_dates), tuple(all_coefs))


def path_from_theta(theta: np.ndarray) -> np.ndarray:
    """Cumulate jumps into levels: beta[t] = sum_{s<=t} theta[s]."""
    return np.cumsum(theta, axis=0)


def theta_from_path(beta: np.ndarray) -> np.ndarray:
    """Jump view of a (T, k) path: theta[0] = beta[0], theta[t] = beta[t] - beta[t-1]."""
    theta = np.empty_like(beta)
    theta[0] = beta[0]
    theta[1:] = np.diff(beta, axis=0)
    return theta
