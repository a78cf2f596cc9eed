"""Distribution-aware deep search: probe around a query, score the probes by
how well their results match, and hand the best ones to the agent as guidance."""

from .errors import (
    AuthError,
    ConfigError,
    EmptyCorpus,
    JsonExtractError,
    MissingEvaluation,
    ModelError,
    NetworkError,
    SchemaError,
    ScriptMiss,
    WedasError,
)
from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = [
    "AuthError", "ConfigError", "EmptyCorpus", "JsonExtractError", "KERNEL_BACKEND", "MissingEvaluation",
    "ModelError", "NetworkError", "SchemaError", "ScriptMiss", "WedasError", "__version__",
]
