"""Exception hierarchy shared across the simulator.

The CLI maps these onto exit codes: configuration problems exit 2,
numerical divergence exits 3, I/O failures exit 4.
"""


class SimulationError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(SimulationError):
    """Invalid experiment configuration (bad divisibility, ranges, modes)."""


class DataFormatError(SimulationError):
    """Malformed binary input (bad magic number, truncated dimensions)."""


class ConsistencyError(DataFormatError):
    """Structurally valid inputs that disagree with each other."""


class ContractError(SimulationError, ValueError):
    """An operation was called outside its documented precondition."""


class StateError(SimulationError):
    """Internal bookkeeping violated (e.g. a stale unit with no cached gradient)."""


class NumericalError(SimulationError):
    """An iterative numerical routine failed to converge.

    Carries the best estimate reached so far in ``partial``.
    """

    def __init__(self, message: str, partial: float | None = None):
        super().__init__(message)
        self.partial = partial


class DivergenceError(SimulationError):
    """Training loss became NaN/Inf; carries a diagnostic summary dict."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
