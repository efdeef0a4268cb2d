"""stockflow: stock-and-flow models as simulations and RL environments.

Parse an XMILE model, simulate it deterministically, or wrap it as an
episodic environment whose actions inject values into the model's
constant converters.
"""

from .engine import Simulation, eval_builtin, simulate
from .env import (
    ActionSpec,
    BinarizedDelta,
    CustomReward,
    EnvConfig,
    FlatActionSpace,
    ScalarDelta,
    SimEnv,
    Transition,
    infer_action_kind,
    make_env,
)
from .errors import (
    ActionError,
    ConfigError,
    EngineError,
    EnvError,
    ExpressionError,
    ModelError,
    StockflowError,
    XmileError,
)
from .ir import (
    Diagnostic,
    LookupTable,
    ModelIR,
    SimSpecs,
    Variable,
    VarKind,
    constant_converters,
    model_from_json,
    model_to_json,
    normalize_name,
    validate,
    with_specs,
)
from .xmile import ParseDiagnostic, ParseResult, load_model, parse_expression, parse_xmile

__version__ = "0.1.0"

__all__ = [
    "ActionError",
    "ActionSpec",
    "BinarizedDelta",
    "ConfigError",
    "CustomReward",
    "Diagnostic",
    "EngineError",
    "EnvConfig",
    "EnvError",
    "ExpressionError",
    "FlatActionSpace",
    "LookupTable",
    "ModelError",
    "ModelIR",
    "ParseDiagnostic",
    "ParseResult",
    "ScalarDelta",
    "SimEnv",
    "SimSpecs",
    "Simulation",
    "StockflowError",
    "Transition",
    "Variable",
    "VarKind",
    "XmileError",
    "constant_converters",
    "eval_builtin",
    "infer_action_kind",
    "load_model",
    "make_env",
    "model_from_json",
    "model_to_json",
    "normalize_name",
    "parse_expression",
    "parse_xmile",
    "simulate",
    "validate",
    "with_specs",
    "__version__",
]
