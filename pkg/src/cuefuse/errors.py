"""Exception types shared across the package."""


class CuefuseError(Exception):
    """Base class for all package errors."""


class DegenerateRay(CuefuseError):
    """Ray origin and through-point coincide (or a query point sits on the origin)."""


class NoIntersection(CuefuseError):
    """Ray is parallel to the plane or intersects behind its origin."""


class LengthMismatch(CuefuseError):
    """Vectors that must be aligned to the same object list differ in length."""


class AllZeroEvidence(CuefuseError):
    """Every candidate has zero prior-times-likelihood mass."""


class EmptyCloud(CuefuseError):
    """A point cloud that must be non-empty is empty."""


class ShapeMismatch(CuefuseError):
    """Network input shapes do not match the layer dimensions."""


class NonFiniteActivation(CuefuseError):
    """A forward pass produced NaN or infinity."""


class EmptyDataset(CuefuseError):
    """Training requires at least one labeled pair."""


class DivergedLoss(CuefuseError):
    """Training loss became non-finite."""


class VersionMismatch(CuefuseError):
    """Model file was written by an unsupported format version."""


class CorruptFile(CuefuseError):
    """Model file failed structural or checksum validation."""


class ParseError(CuefuseError):
    """Dataset file could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class UnknownObject(CuefuseError):
    """An object id does not resolve in the object library."""


class MissingJoints(CuefuseError):
    """A hand pose does not carry exactly 21 joints."""


class TooFewRecords(CuefuseError):
    """A subject has too few records to split."""


class TooFewSubjects(CuefuseError):
    """Not enough subjects for a cross-subject split."""


class EmptySample(CuefuseError):
    """A statistical test received an empty sample."""


class EmptyInput(CuefuseError):
    """An aggregate received no input rows."""


class MatrixIncomplete(CuefuseError):
    """Similarity matrix has unobserved cells and imputation is disabled."""


class InsufficientLibrary(CuefuseError):
    """Object library cannot satisfy the requested scene composition."""


class InvalidConfig(CuefuseError):
    """A configuration value violates its contract."""
