"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class MaintlabError(Exception):
    """Base class for all toolkit errors."""


class SchemaError(MaintlabError):
    """A record or response violates the expected field schema."""

    def __init__(self, message: str, line_no: int | None = None, field: str | None = None):
        super().__init__(message)
        self.line_no = line_no
        self.field = field


class AssertionParseError(SchemaError):
    """A test string is not a single valid assertion statement."""


class AmbiguityError(MaintlabError):
    """Test assertions do not agree on a single interface function."""


class SourceSyntaxError(MaintlabError):
    """Subject-language source failed to parse."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        super().__init__(message)
        self.line = line
        self.col = col


class DomainError(MaintlabError):
    """An argument is outside the operation's domain."""


class SandboxSpawnError(MaintlabError):
    """The sandbox subprocess could not be started (environment failure)."""


class ProtocolError(MaintlabError):
    """The runner subprocess returned a malformed response record."""


class ProviderError(MaintlabError):
    """The model provider failed after the retry budget was exhausted."""


class TransientProviderError(ProviderError):
    """A retryable provider failure (transport error or rate limit)."""


class ReplayMissError(MaintlabError):
    """Replay-mode lookup found no recorded response for a fingerprint."""

    def __init__(self, fingerprint: str):
        super().__init__(f"no cassette entry for fingerprint {fingerprint}")
        self.fingerprint = fingerprint


class JsonExtractError(MaintlabError):
    """No parseable JSON object could be extracted from a response."""

    def __init__(self, message: str, raw_response: str = ""):
        super().__init__(message)
        self.raw_response = raw_response


class StageError(MaintlabError):
    """A pipeline stage failed beyond its reprompt budget."""

    def __init__(self, stage: str, message: str, transcript=None):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.transcript = transcript
