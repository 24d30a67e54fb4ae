"""Prime-field arithmetic and real <-> field quantization.

All secure computation in this package happens over F_q for an odd prime
q.  Real vectors are embedded by scaling with a factor ``lam`` and mapping
negatives to the top of the field:

    Q(x) = floor(lam * x)          if x >= 0
    Q(x) = floor(q + lam * x)      if x <  0

Scaled values are assumed to lie in [-eta, eta); the positive image is
[0, eta) and the negative image (q - eta, q).  A product of two embedded
values lands in an image bounded by eta**2, so the modulus must satisfy
q >= 2 * lam**2 * D, where D bounds the largest squared distance the
protocol computes (see :func:`min_modulus`).
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as kernels
from .errors import AmbiguousValue, BadParams, DivisionByZero, RangeExceeded

# Residues are uint64 with 128-bit (or limbed) products; q must leave
# headroom for a sum of two residues in 64 bits.
MAX_MODULUS = 1 << 62

_MR_WITNESSES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin, exact for n < 3.3e24."""
    if n < 2:
        return False
    for p in _MR_WITNESSES:
        if n % p == 0:
            return n == p
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_WITNESSES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def next_prime(n: int) -> int:
    """Smallest prime strictly greater than n."""
    c = n + 1
    if c <= 2:
        return 2
    if c % 2 == 0:
        c += 1
    while not is_prime(c):
        c += 2
    return c


def min_modulus(lam: int, d_bound: float) -> int:
    """Lower bound 2 * lam**2 * D on an admissible modulus.

    ``d_bound`` must upper-bound the largest squared distance computed
    during a protocol run.  Callers pick a prime above the returned value.
    """
    if lam < 1:
        raise BadParams(f"scaling factor must be >= 1, got {lam}")
    if d_bound <= 0:
        raise BadParams(f"distance bound must be positive, got {d_bound}")
    exact = 2 * lam * lam * d_bound
    return math.ceil(exact)


@dataclass(frozen=True)
class PrimeField:
    """The field F_q for an odd prime q."""

    q: int

    def __post_init__(self):
        if self.q < 3 or self.q % 2 == 0:
            raise BadParams(f"modulus must be an odd prime >= 3, got {self.q}")
        if self.q >= MAX_MODULUS:
            raise BadParams(f"modulus must be below 2**62, got {self.q}")
        if not is_prime(self.q):
            raise BadParams(f"modulus {self.q} is not prime")

    # scalar arithmetic -------------------------------------------------

    def add(self, a: int, b: int) -> int:
        return (a + b) % self.q

    def sub(self, a: int, b: int) -> int:
        return (a - b) % self.q

    def mul(self, a: int, b: int) -> int:
        return a * b % self.q

    def neg(self, a: int) -> int:
        return -a % self.q

    def inv(self, a: int) -> int:
        if a % self.q == 0:
            raise DivisionByZero("inverse of 0 does not exist")
        return pow(a, self.q - 2, self.q)

    def pow(self, a: int, e: int) -> int:
        return pow(a, e, self.q)

    # vector helpers ----------------------------------------------------

    def reduce(self, values) -> np.ndarray:
        """Map arbitrary integers into canonical residues."""
        arr = np.asarray(values)
        if arr.dtype == object or arr.dtype.kind not in "iu":
            return np.array([int(v) % self.q for v in arr.reshape(-1)],
                            dtype=np.uint64).reshape(arr.shape)
        return np.mod(arr, np.array(self.q).astype(arr.dtype)).astype(np.uint64)

    def random_elements(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.integers(0, self.q, size=size, dtype=np.uint64)

    def contains(self, values) -> bool:
        arr = np.asarray(values, dtype=np.uint64)
        return bool(np.all(arr < np.uint64(self.q)))


@dataclass(frozen=True)
class QuantConfig:
    """Scaling factor lam and scaled-range bound eta.

    eta bounds the magnitude of scaled inputs: every |lam * x| must be
    < eta.  It is normally derived from a caller-supplied bound on the raw
    data via :meth:`from_bound`, since the range is a property of the data,
    not a free parameter.
    """

    lam: int
    eta: float

    def __post_init__(self):
        if self.lam < 1:
            raise BadParams(f"lam must be >= 1, got {self.lam}")
        if not (self.eta > 0):
            raise BadParams(f"eta must be positive, got {self.eta}")

    @classmethod
    def from_bound(cls, lam: int, max_abs: float) -> "QuantConfig":
        """Derive eta = lam * (bound on |x|)."""
        if not (max_abs > 0):
            raise BadParams(f"max_abs must be positive, got {max_abs}")
        return cls(lam=lam, eta=lam * max_abs)

    def check_field(self, field: PrimeField, degree: int = 1):
        """Ensure both images of degree-``degree`` values fit without overlap."""
        if 2 * self.eta ** degree >= field.q:
            raise BadParams(
                f"field size {field.q} too small for eta={self.eta} "
                f"at degree {degree}; need q > {2 * self.eta ** degree:.4g}")


def quantize(x, cfg: QuantConfig, field: PrimeField) -> np.ndarray:
    """Embed a real vector into F_q (elementwise floor of lam * x)."""
    cfg.check_field(field)
    x = np.asarray(x, dtype=np.float64)
    scaled = cfg.lam * x
    over = (scaled >= cfg.eta) | (scaled < -cfg.eta)  # admissible: [-eta, eta)
    if np.any(over):
        k = int(np.argmax(over.reshape(-1)))
        raise RangeExceeded(
            f"lam*x = {scaled.reshape(-1)[k]:.6g} outside [-eta, eta) "
            f"with eta = {cfg.eta} at flat index {k}")
    floored = np.floor(scaled).astype(np.int64)
    return np.mod(floored, np.int64(field.q)).astype(np.uint64)


def dequantize(values, cfg: QuantConfig, field: PrimeField,
               degree: int = 1, image_bound: float = None) -> np.ndarray:
    """Invert the quantization map after a degree-``degree`` computation.

    Values below ceil(q/2) decode as positive, the rest as negative; the
    result is divided by lam**degree.  Raises :class:`AmbiguousValue` when
    a value falls outside both images (the computation overflowed) or when
    the images themselves overlap.

    ``image_bound`` overrides the default bound eta**degree; aggregates
    such as squared distances (sums over coordinates and cluster members)
    exceed the product bound while still being decodable, and their caller
    knows the tighter figure.
    """
    if degree < 1:
        raise BadParams(f"degree must be >= 1, got {degree}")
    if image_bound is None:
        image_bound = cfg.eta ** degree
    if 2 * image_bound > field.q:
        raise AmbiguousValue(
            f"images overlap: 2*eta**{degree} = {2 * image_bound:.6g} "
            f"exceeds q = {field.q}")
    v = np.asarray(values, dtype=np.uint64)
    if not field.contains(v):
        raise BadParams("values outside [0, q)")
    signed = v.astype(np.int64)
    half = (field.q + 1) // 2
    signed = np.where(v >= np.uint64(half), signed - np.int64(field.q), signed)
    over = np.abs(signed.astype(np.float64)) > image_bound
    if np.any(over):
        k = int(np.argmax(over.reshape(-1)))
        raise AmbiguousValue(
            f"value {int(v.reshape(-1)[k])} lies between the images "
            f"(bound {image_bound:.6g}); overflow occurred")
    return signed.astype(np.float64) / float(cfg.lam) ** degree


# re-export the kernel namespace so callers can do vectorized field math
# without importing the private package
ops = kernels
