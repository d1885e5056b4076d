"""Exception hierarchy and CLI exit codes."""

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_NUMERICAL = 4
EXIT_IO = 5


class GagflError(Exception):
    """Base class for all package errors."""

    exit_code = EXIT_VALIDATION


class InvalidStructureError(GagflError):
    """A break structure or coefficient path violates its invariants."""

    exit_code = EXIT_VALIDATION


class PanelValidationError(GagflError):
    """Panel data fails balancedness or shape requirements."""

    exit_code = EXIT_VALIDATION


class PanelFormatError(GagflError):
    """Input file cannot be parsed (bad header, non-numeric field, ...)."""

    exit_code = EXIT_PARSE


class SingularGramError(GagflError):
    """A per-cell Gram matrix is singular under policy='error'.

    Carries the offending (group, period) cell (1-based; period -1 means the
    coupled first-difference system for that group) and the group size.
    """

    exit_code = EXIT_NUMERICAL

    def __init__(self, group, period, group_size, message=None):
        self.group = group
        self.period = period
        self.group_size = group_size
        if message is None:
            where = f"group {group}" if period < 0 else f"cell (g={group}, t={period})"
            message = (
                f"singular Gram matrix in {where} (group size {group_size}); "
                "use singular_policy='pseudoinverse' to continue anyway"
            )
        super().__init__(message)


class DegenerateRegimeError(GagflError):
    """A (group, regime) pair has too few observations for a refit."""

    exit_code = EXIT_NUMERICAL

    def __init__(self, group, regime, message=None):
        self.group = group
        self.regime = regime
        if message is None:
            message = f"degenerate regime (g={group}, j={regime}): singular pooled Gram"
        super().__init__(message)


class EstimationError(GagflError):
    """Aggregate numerical failure (e.g. every random start failed)."""

    exit_code = EXIT_NUMERICAL


class SimulationError(GagflError):
    """A simulation design is infeasible (e.g. colliding break dates)."""

    exit_code = EXIT_VALIDATION
