"""Exception types shared across the package."""


class PomdpError(Exception):
    """Base class for every error raised by this package."""


class ZeroProbabilityObservation(PomdpError, ValueError):
    """Raised when updating a belief with an observation of probability zero."""


class ValidationError(PomdpError, ValueError):
    """A model violates a numeric invariant (stochasticity, discount, finiteness)."""


class ParseError(PomdpError, ValueError):
    """Malformed ``.pomdp`` text. Carries 1-based line and column."""

    def __init__(self, message, line=0, column=0):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class TerminalState(PomdpError, RuntimeError):
    """Raised when stepping an environment whose true state is absorbing."""


class ExpandNonFringe(PomdpError, RuntimeError):
    """Raised when ``expand`` is called on an already expanded node."""


class InternalConsistencyError(PomdpError, RuntimeError):
    """Lower bound exceeded upper bound by more than floating point noise."""


class InvalidLayout(PomdpError, ValueError):
    """A rock layout does not fit the grid."""


class ConfigError(PomdpError, ValueError):
    """Invalid planner or experiment configuration."""
