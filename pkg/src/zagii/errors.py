"""Exception types shared across the engine."""


class ZagiiError(Exception):
    """Base class for all engine errors."""


# --- game definitions ---

class ParseError(ZagiiError):
    """Game-definition document is not parseable."""


class ValidationError(ZagiiError):
    """Game definition parsed but failed validation."""

    def __init__(self, report):
        self.report = report
        super().__init__(f"{len(report.errors)} validation error(s)")


# --- llm gateway ---

class InvalidRequest(ZagiiError):
    pass


class ScriptExhausted(ZagiiError):
    """Ordered script has no entry left for a request."""


class BackendUnavailable(ZagiiError):
    """Backend failed after retries; retryable at the session level."""


class TimeoutExceeded(ZagiiError):
    pass


class UnconfiguredTier(ZagiiError):
    """No backend configured for the requested tier."""


# --- message bus / sessions ---

class UnknownSession(ZagiiError):
    pass


class UnknownGame(ZagiiError):
    pass


class SessionClosed(ZagiiError):
    pass


class BusySession(ZagiiError):
    """A round is already in flight for this session."""


# --- session store ---

class GapDetected(ZagiiError):
    """Event seq is not contiguous with the last applied event."""


class MutationAfterEnd(ZagiiError):
    pass


class InvalidFragment(ZagiiError):
    pass


class UnknownEntity(ZagiiError):
    pass


# --- roleplay ---

class UnknownCharacter(ZagiiError):
    pass


class PreconditionViolation(ZagiiError):
    pass


# --- status manager ---

class TypeMismatch(ZagiiError):
    """Predicate applied to an anchor value of the wrong type."""


# --- copilot ---

class InvalidSeed(ZagiiError):
    pass


class StageFailed(ZagiiError):
    """A copilot stage could not be parsed even after a reprompt."""

    def __init__(self, stage: str, raw_output: str):
        self.stage = stage
        self.raw_output = raw_output
        super().__init__(f"stage '{stage}' failed")


class DecompositionFailed(ZagiiError):
    """Goal decomposition yielded zero valid subgoal rows."""
