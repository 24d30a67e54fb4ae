"""Exception hierarchy shared by all secfpp modules."""


class SecfppError(Exception):
    """Base class for all errors raised by this package."""


# --- finite field / quantization ---

class RangeExceeded(SecfppError):
    """A value to quantize falls outside the admissible scaled range."""


class AmbiguousValue(SecfppError):
    """A field value lies between the positive and negative images
    (computation overflowed the quantization range)."""


class DivisionByZero(SecfppError, ZeroDivisionError):
    """Multiplicative inverse of zero requested."""


# --- coded computation ---

class BadParams(SecfppError):
    """Invalid sharing parameters (colliding points, degree cap violated)."""


class InsufficientShares(SecfppError):
    """Fewer shares supplied than the reconstruction degree requires."""


class DegreeMismatch(SecfppError):
    """Held-out shares are inconsistent with the interpolated polynomial."""


class DecodingFailure(SecfppError):
    """No codeword exists within the error budget."""


# --- dimension reduction ---

class RankExceeded(SecfppError):
    """Requested rank exceeds what the input dimensions admit."""


class ShapeMismatch(SecfppError):
    """Operand shapes are incompatible."""


class ConvergenceFailure(SecfppError):
    """A numerical solver failed its residual bound."""


# --- protocol ---

class OverflowDetected(SecfppError):
    """Dequantization of a protocol value was ambiguous (field too small)."""


class BadConfig(SecfppError):
    """Run configuration violates an invariant."""


# --- information theory ---

class PrecisionLoss(SecfppError):
    """A series evaluation could not reach its target precision."""


class DomainError(SecfppError, ValueError):
    """Argument outside a special function's domain."""


class InsufficientSamples(SecfppError):
    """Too few samples for the estimator to be meaningful."""
