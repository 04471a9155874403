"""Exception types shared across the pipeline."""


class TimewarpError(Exception):
    """Base class for all pipeline errors."""


class CorpusError(TimewarpError):
    """Fatal ingestion failure (e.g. zero valid records)."""


class TooFewScenes(TimewarpError):
    """Video has fewer scenes than the trimming policy requires."""


class InvalidOrder(TimewarpError):
    """Scene order references indices outside the record."""


class NotShuffleable(TimewarpError):
    """Clip has too few scenes for a non-reversal shuffle."""


class MediaMissing(TimewarpError):
    """Source media file is absent; plans fall back to dry-run."""


class ToolkitUnavailable(TimewarpError):
    """External media toolkit not found on PATH."""


class StepFailed(TimewarpError):
    """A media command exited nonzero."""

    def __init__(self, message, stderr=""):
        super().__init__(message)
        self.stderr = stderr


class InvalidSpec(TimewarpError):
    """Perturbation spec is malformed or a no-op."""


class MissingPlaceholder(TimewarpError):
    """Prompt template rendered without a required placeholder."""


class ParseFailure(TimewarpError):
    """Generator response did not contain the mandated JSON envelope."""

    def __init__(self, message, raw_text=""):
        super().__init__(message)
        self.raw_text = raw_text


class BackendUnavailable(TimewarpError):
    """All retry attempts against the generation backend failed."""


class RequestRejected(TimewarpError):
    """Backend returned a 4xx response."""

    def __init__(self, message, body=""):
        super().__init__(message)
        self.body = body


class CredentialMissing(TimewarpError):
    """Configured credential environment variable is unset."""


class MixtureUnderflow(TimewarpError):
    """A mixture part is smaller than the requested take."""


class DuplicatePrediction(TimewarpError):
    """Two predictions share one item id."""


class InvalidInput(TimewarpError):
    """Numeric verification input violates its invariants."""


class DivergenceInfinite(TimewarpError):
    """KL divergence is infinite (reference has a zero where policy does not)."""


class StageDependencyMissing(TimewarpError):
    """A pipeline stage ran before the stage that produces its inputs."""


class ConfigError(TimewarpError):
    """Run configuration is invalid."""
