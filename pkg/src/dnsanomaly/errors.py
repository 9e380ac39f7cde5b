"""Exception hierarchy shared across the pipeline."""


class DnsAnomalyError(Exception):
    """Base class for all errors raised by this package."""


class MalformedDocument(DnsAnomalyError):
    """Input line is not a parseable measurement document."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message if offset is None else f"line {offset}: {message}")
        self.offset = offset


class SchemaViolation(DnsAnomalyError):
    """Document parsed but a required field is missing or mistyped."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message if offset is None else f"line {offset}: {message}")
        self.offset = offset


class InvalidIp(DnsAnomalyError):
    pass


class InvalidDomain(DnsAnomalyError):
    pass


class IngestIoError(DnsAnomalyError):
    """A measurement file could not be opened or read."""


class WrongPlatform(DnsAnomalyError):
    pass


class MissingTruthAsn(DnsAnomalyError):
    """Test domain has no entry in the ground-truth ASN table."""


class EmptyCorpus(DnsAnomalyError):
    pass


class SchemaMismatch(DnsAnomalyError):
    """Record platform or vector layout does not match the feature schema."""


class DimensionMismatch(DnsAnomalyError):
    pass


class SingleClassCorpus(DnsAnomalyError):
    """Supervised training needs both classes present."""


class CorpusTooSmall(DnsAnomalyError):
    pass


class LengthMismatch(DnsAnomalyError):
    pass


class SingleClass(DnsAnomalyError):
    """AUC needs at least one positive and one negative."""


class InsufficientMonths(DnsAnomalyError):
    pass


class NoOverlap(DnsAnomalyError):
    """The two agreement inputs share no (domain, interval) pairs."""


class ConfigError(DnsAnomalyError):
    pass


class ArtifactError(DnsAnomalyError):
    """A persisted artifact is unreadable or inconsistent (e.g. schema hash mismatch)."""
