"""Exception hierarchy shared across the package."""


class WedasError(Exception):
    """Base class for all package errors."""


class ConfigError(WedasError):
    """Missing or invalid configuration (credentials, paths, values)."""


class NetworkError(WedasError):
    """Transient transport failure; safe to retry."""


class AuthError(WedasError):
    """Credentials were rejected by a remote service. Not retryable."""


class EmptyCorpus(WedasError):
    """The local search backend has no documents to rank."""


class ScriptMiss(WedasError):
    """The scripted LLM backend has no fixture for a request fingerprint."""

    def __init__(self, fingerprint: str):
        super().__init__(f"no scripted response for fingerprint {fingerprint}")
        self.fingerprint = fingerprint


class JsonExtractError(WedasError):
    """No balanced JSON object could be parsed from a completion."""


class SchemaError(WedasError):
    """A parsed JSON value failed validation against its schema."""


class MissingEvaluation(WedasError):
    """The judge output did not cover every expected query."""


class ModelError(WedasError, ValueError):
    """A toy information model violates its structural assumptions."""
