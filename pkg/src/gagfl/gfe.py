"""Preliminary grouped-fixed-effects estimator.

K-means style alternation: per-(group, period) least squares given an
assignment, then reassignment of each unit to its best-fitting group,
repeated from many random starts.  The winning start (smallest SSE) seeds
the penalized estimator and its adaptive weights.
"""

from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import _kernels
from .errors import EstimationError, SingularGramError
from .model import CoefficientPath, GroupAssignment, Panel


@dataclass(frozen=True)
class GfeOptions:
    n_starts: int = 100
    max_iters: int = 100
    seed: int = 0
    singular_policy: Literal["error", "pseudoinverse"] = "error"

    def __post_init__(self):
        if self.n_starts < 1 or self.max_iters < 1:
            raise ValueError("n_starts and max_iters must be >= 1")
        if self.singular_policy not in ("error", "pseudoinverse"):
            raise ValueError(f"unknown singular_policy {self.singular_policy!r}")


def _rng_for_start(seed: int, start: int) -> np.random.Generator:
    return np.random.default_rng([seed & 0x7FFFFFFFFFFFFFFF, start])


def random_assignment(n_units: int, G: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw over assignments conditioned on every group non-empty."""
    if G > n_units:
        raise EstimationError(f"cannot fill G={G} groups with N={n_units} units")
    while True:
        labels = rng.integers(0, G, size=n_units)
        if np.bincount(labels, minlength=G).min() > 0:
            return labels.astype(np.int64)


def ols_per_cell(panel: Panel, gamma: GroupAssignment,
                 singular_policy: str = "error") -> CoefficientPath:
    """Per-(group, period) OLS given the assignment.

    beta[g, t] = (sum_{i in g} x_it x_it')^{-1} sum_{i in g} x_it y_it.
    """
    labels0 = np.ascontiguousarray(gamma.labels - 1)
    beta, status, bg, bt = _kernels.level_paths_given_labels(
        panel.x, panel.y, labels0, gamma.n_groups, singular_policy == "pseudoinverse"
    )
    if status != _kernels.OK:
        size = int(np.sum(labels0 == bg))
        raise SingularGramError(bg + 1, bt + 1, size)
    return CoefficientPath(beta)


def assign_groups(panel: Panel, path: CoefficientPath) -> GroupAssignment:
    """Map each unit to the group with the smallest time-summed SSR.

    Ties go to the lowest group index.
    """
    ssr = _kernels.level_unit_ssr(panel.x, panel.y, path.values)
    labels = np.argmin(ssr, axis=1) + 1
    return GroupAssignment(labels, path.n_groups)


def unit_ssr_matrix(panel: Panel, beta: np.ndarray, mode: str = "level") -> np.ndarray:
    """ssr[i, g] under the level or differenced regression."""
    if mode == "level":
        return _kernels.level_unit_ssr(panel.x, panel.y, beta)
    return _kernels.fd_unit_ssr(panel.x, panel.y, beta)


def _run_start(panel: Panel, labels0: np.ndarray, G: int, opts: GfeOptions, mode: str):
    use_pinv = opts.singular_policy == "pseudoinverse"
    kernel = _kernels.gfe_level_start if mode == "level" else _kernels.gfe_fd_start
    labels, beta, sse, n_iters, trace, status, bg, bt, bsize = kernel(
        panel.x, panel.y, labels0, G, opts.max_iters, use_pinv
    )
    if status != _kernels.OK:
        raise SingularGramError(bg + 1, bt + 1 if bt >= 0 else -1, bsize)
    return labels, beta, sse, n_iters, trace[:n_iters]


def fit_gfe(panel: Panel, G: int, opts: GfeOptions = GfeOptions(), *,
            mode: str = "level", init_labels: np.ndarray = None):
    """Multi-start GFE estimate.

    Runs the alternation from ``opts.n_starts`` random assignments (each
    start's RNG derived purely from (opts.seed, start index)) plus an
    optional user-supplied warm start, and keeps the smallest-SSE solution;
    ties go to the earliest start.

    Returns (CoefficientPath, GroupAssignment, sse).
    """
    if G < 1:
        raise EstimationError("G must be >= 1")
    if mode not in ("level", "fd"):
        raise ValueError(f"unknown mode {mode!r}")
    n = panel.n_units

    starts = []
    if init_labels is not None:
        init_labels = np.ascontiguousarray(init_labels, dtype=np.int64)
        if init_labels.shape != (n,) or init_labels.min() < 1 or init_labels.max() > G:
            raise EstimationError("init_labels must be a length-N vector in 1..G")
        starts.append(init_labels - 1)
    if G == 1:
        # no clustering freedom: a single deterministic start suffices
        starts.append(np.zeros(n, dtype=np.int64))
    else:
        for s in range(opts.n_starts):
            starts.append(random_assignment(n, G, _rng_for_start(opts.seed, s)))

    best = None
    failures = []
    for labels0 in starts:
        try:
            labels, beta, sse, n_iters, _trace = _run_start(panel, labels0, G, opts, mode)
        except SingularGramError as err:
            failures.append(err)
            continue
        if best is None or sse < best[2]:
            best = (labels, beta, sse)
    if best is None:
        raise EstimationError(
            f"all {len(starts)} GFE starts failed; first failure: {failures[0]}"
        )
    labels, beta, sse = best
    return (
        CoefficientPath(beta),
        GroupAssignment(labels + 1, G),
        float(sse),
    )
