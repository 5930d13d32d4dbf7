"""Exception hierarchy shared across the package."""


class TrafficFlowError(Exception):
    """Base class for all package errors."""


class ValidationError(TrafficFlowError):
    """Invalid input data: bad topology, negative length, malformed schedule, ..."""


class ConstraintError(TrafficFlowError):
    """A model assumption is violated (e.g. interaction radius >= shortest edge)."""


class ScenarioFormatError(ValidationError):
    """Scenario file cannot be parsed; message carries file/line context."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(prefix + message)


class CFLError(TrafficFlowError):
    """Requested time step violates the CFL stability bound."""


class SolverError(TrafficFlowError):
    """Numerical failure during time stepping (non-finite values, broken mass balance)."""


class UnsupportedTopologyError(TrafficFlowError):
    """Operation only derived for merge junctions (N incoming, 1 outgoing) with one light."""
