"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration and parse problems
(ConfigError, ModelError, XmileError) exit 2, runtime failures
(EngineError, ActionError, EnvError) exit 1.
"""


class StockflowError(Exception):
    """Base class for all package errors."""


class ModelError(StockflowError):
    """A model violates IR invariants (bad specs, cycles, broken refs)."""


class XmileError(StockflowError):
    """XMILE document could not be parsed into a model.

    Carries the parse diagnostics so callers can render positions.
    """

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        lines = "; ".join(str(d) for d in self.diagnostics[:5])
        super().__init__(lines or "parse failed")


class ExpressionError(StockflowError):
    """Syntax error inside an equation string.

    ``offset`` is the zero-based character position within the equation
    text; ``code`` is a short machine-readable tag.
    """

    def __init__(self, message, offset, code="syntax_error"):
        super().__init__(message)
        self.offset = offset
        self.code = code


class EngineError(StockflowError):
    """Simulation failed at runtime (non-finite value, bad injection...)."""

    def __init__(self, message, variable=None, time=None):
        parts = [message]
        if variable is not None:
            parts.append(f"variable '{variable}'")
        if time is not None:
            parts.append(f"at time {time:g}")
        super().__init__(", ".join(parts))
        self.variable = variable
        self.time = time


class ConfigError(StockflowError):
    """Environment or CLI configuration is invalid."""


class ActionError(StockflowError):
    """An action fell outside its declared space (no silent clipping)."""


class EnvError(StockflowError):
    """Environment misuse: stepping before reset or after the episode ended."""
