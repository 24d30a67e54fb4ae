"""Lagrange coded computing: multi-secret sharing, homomorphic evaluation,
and robust reconstruction.

A batch of ell secret vectors X_1..X_ell is encoded, per coordinate, into
the degree-(ell+t-1) polynomial u with u(beta_k) = X_k for the first ell
interpolation points and fresh uniform randomness at the remaining t
points.  Holder j receives the evaluation u(alpha_j).  Any t shares are
jointly independent of the secrets; any ell+t shares determine them.

When every holder applies the same coordinate-wise polynomial f of degree
deg_f to its share, the results are evaluations of f(u(.)), a polynomial
of degree deg_f * (ell+t-1); reconstructing it and reading off the values
at beta_1..beta_ell yields f(X_1)..f(X_ell).  Reconstruction tolerates
erasures down to degree+1 shares and, via Gao's Reed-Solomon decoder, e
corrupted shares whenever m >= degree + 1 + 2e shares are available.
"""

from dataclasses import dataclass, field as dc_field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from . import _kernels as kernels
from .errors import (BadParams, DecodingFailure, DegreeMismatch,
                     InsufficientShares)
from .field import PrimeField


def default_ell(n: int, t: int, deg_cap: int = 2) -> int:
    """Largest packing factor that keeps degree-``deg_cap`` results decodable.

    Decoding a degree-deg_cap*(ell+t-1) polynomial needs that many +1
    evaluations, so ell can be at most (n-1)//deg_cap - t + 1.
    """
    return max(1, (n - 1) // deg_cap - t + 1)


def paper_ell(n: int, t: int) -> int:
    """The throughput-oriented choice floor((n-t)/2).

    Only admissible for linear (degree-1) computations; degree-2 pipelines
    such as coded distances generally cannot be decoded with it.
    """
    return max(1, (n - t) // 2)


@dataclass(frozen=True)
class LccParams:
    """Code parameters: n holders, privacy threshold t, packing factor ell.

    ``interp_points`` carries the ell secret positions followed by the t
    randomness positions; ``eval_points`` are the n holder positions.  All
    n + ell + t points must be pairwise distinct field elements.
    """

    field: PrimeField
    n: int
    t: int
    ell: int
    interp_points: tuple
    eval_points: tuple
    deg_cap: int = 2

    @classmethod
    def make(cls, field: PrimeField, n: int, t: int,
             ell: Optional[int] = None, deg_cap: int = 2) -> "LccParams":
        """Standard parameters: points 1..ell+t and ell+t+1..ell+t+n."""
        if ell is None:
            ell = default_ell(n, t, deg_cap)
        k = ell + t
        return cls(field=field, n=n, t=t, ell=ell,
                   interp_points=tuple(range(1, k + 1)),
                   eval_points=tuple(range(k + 1, k + n + 1)),
                   deg_cap=deg_cap)

    def __post_init__(self):
        if self.n < 1 or self.ell < 1 or self.t < 0:
            raise BadParams(
                f"need n >= 1, ell >= 1, t >= 0; got n={self.n}, "
                f"t={self.t}, ell={self.ell}")
        if self.deg_cap < 1:
            raise BadParams(f"deg_cap must be >= 1, got {self.deg_cap}")
        if len(self.interp_points) != self.ell + self.t:
            raise BadParams("need ell + t interpolation points")
        if len(self.eval_points) != self.n:
            raise BadParams("need n evaluation points")
        pts = list(self.interp_points) + list(self.eval_points)
        if any(not (0 <= p < self.field.q) for p in pts):
            raise BadParams("points must be field elements")
        if len(set(pts)) != len(pts):
            raise BadParams("interpolation and evaluation points collide")
        if self.deg_cap * (self.ell + self.t - 1) + 1 > self.n:
            raise BadParams(
                f"degree cap violated: {self.deg_cap}*({self.ell}+{self.t}-1)+1 "
                f"= {self.deg_cap * (self.ell + self.t - 1) + 1} > n = {self.n}")

    @property
    def base_degree(self) -> int:
        """Degree of the sharing polynomial, ell + t - 1."""
        return self.ell + self.t - 1

    def result_degree(self, computation_degree: int) -> int:
        """Reconstruction degree after a degree-d computation on shares."""
        return computation_degree * self.base_degree

    @cached_property
    def encode_matrix(self) -> np.ndarray:
        """(ell+t) x n matrix E with E[k, j] = L_k(alpha_j)."""
        cols = [_lagrange_coeffs(self.interp_points, x, self.field)
                for x in self.eval_points]
        return np.array(cols, dtype=np.uint64).T.copy()


@dataclass(frozen=True)
class ShareBundle:
    """One holder's coded vector: the share polynomial evaluated at its point.

    The ell packed secret slices live in a single evaluation, so the bundle
    carries one vector of the common slice dimension.
    """

    holder: int
    coded: np.ndarray
    params: LccParams = dc_field(repr=False)

    def __post_init__(self):
        if not (0 <= self.holder < self.params.n):
            raise BadParams(f"holder {self.holder} outside [0, {self.params.n})")


def _lagrange_coeffs(points: Sequence[int], x: int, f: PrimeField) -> list:
    """Coefficients c_k with p(x) = sum_k c_k * p(points[k]) for deg p < len."""
    coeffs = []
    for k, pk in enumerate(points):
        num, den = 1, 1
        for j, pj in enumerate(points):
            if j == k:
                continue
            num = num * ((x - pj) % f.q) % f.q
            den = den * ((pk - pj) % f.q) % f.q
        coeffs.append(num * f.inv(den) % f.q)
    return coeffs


def share(secrets: Sequence[np.ndarray], params: LccParams,
          rng: np.random.Generator) -> list:
    """Encode ell equal-dimension secret vectors into n ShareBundles."""
    if len(secrets) != params.ell:
        raise BadParams(
            f"expected {params.ell} secret vectors, got {len(secrets)}")
    mats = [np.asarray(s, dtype=np.uint64).reshape(-1) for s in secrets]
    dim = mats[0].shape[0]
    if any(m.shape[0] != dim for m in mats):
        raise BadParams("secret vectors must share one dimension")
    q = params.field.q
    if any(not params.field.contains(m) for m in mats):
        raise BadParams("secret values outside [0, q)")
    pad = params.field.random_elements(rng, (params.t, dim))
    # rows: ell secrets then t uniform pads; columns: coordinates
    y = np.concatenate([np.stack(mats), pad], axis=0) if params.t else np.stack(mats)
    shares = kernels.matmul_mod(y.T, params.encode_matrix, q)  # (dim, n)
    return [ShareBundle(holder=j, coded=shares[:, j].copy(), params=params)
            for j in range(params.n)]


def _gather(bundles: Sequence[ShareBundle]):
    params = bundles[0].params
    holders = [b.holder for b in bundles]
    if len(set(holders)) != len(holders):
        raise BadParams("duplicate holders in share set")
    order = np.argsort(holders)
    holders = [holders[i] for i in order]
    mat = np.stack([np.asarray(bundles[i].coded, dtype=np.uint64).reshape(-1)
                    for i in order], axis=1)  # (dim, m)
    return params, holders, mat


def recon(bundles: Sequence[ShareBundle], degree: int,
          params: Optional[LccParams] = None,
          check_extra: bool = True) -> list:
    """Erasure-decode: interpolate the degree-``degree`` polynomial and
    return its values at the ell secret positions.

    Uses the first degree+1 shares (by holder index); any extra shares are
    checked against the interpolated polynomial and a mismatch raises
    :class:`DegreeMismatch`.
    """
    p, holders, mat = _gather(bundles)
    params = params or p
    need = degree + 1
    if len(holders) < need:
        raise InsufficientShares(
            f"degree {degree} needs {need} shares, got {len(holders)}")
    f = params.field
    used_pts = [params.eval_points[h] for h in holders[:need]]
    w = np.array(
        [_lagrange_coeffs(used_pts, params.interp_points[k], f)
         for k in range(params.ell)],
        dtype=np.uint64).T  # (need, ell)
    secrets = kernels.matmul_mod(mat[:, :need], w, f.q)
    if check_extra and len(holders) > need:
        extra_pts = [params.eval_points[h] for h in holders[need:]]
        we = np.array([_lagrange_coeffs(used_pts, x, f) for x in extra_pts],
                      dtype=np.uint64).T
        predicted = kernels.matmul_mod(mat[:, :need], we, f.q)
        if not np.array_equal(predicted, mat[:, need:]):
            raise DegreeMismatch(
                "held-out shares disagree with the interpolated polynomial")
    return [secrets[:, k].copy() for k in range(params.ell)]


@dataclass(frozen=True)
class RobustRecon:
    """Result of error-tolerant reconstruction."""

    values: list
    bad_holders: frozenset


def recon_robust(bundles: Sequence[ShareBundle], degree: int,
                 params: Optional[LccParams] = None) -> RobustRecon:
    """Reed-Solomon decode (Gao) tolerating e errors when m >= degree+1+2e."""
    p, holders, mat = _gather(bundles)
    params = params or p
    m = len(holders)
    if m < degree + 1:
        raise InsufficientShares(
            f"degree {degree} needs at least {degree + 1} shares, got {m}")
    f = params.field
    xs = [params.eval_points[h] for h in holders]
    e_budget = (m - degree - 1) // 2
    dim = mat.shape[0]
    betas = params.interp_points[:params.ell]
    out = np.zeros((dim, params.ell), dtype=np.uint64)
    bad = set()
    for c in range(dim):
        ys = [int(v) for v in mat[c]]
        poly = _gao_decode(xs, ys, degree, f)
        if poly is None:
            raise DecodingFailure(
                f"no degree-{degree} codeword within {e_budget} errors "
                f"(coordinate {c})")
        for k, beta in enumerate(betas):
            out[c, k] = _poly_eval(poly, beta, f.q)
        for j, (x, y) in enumerate(zip(xs, ys)):
            if _poly_eval(poly, x, f.q) != y:
                bad.add(holders[j])
    if len(bad) > e_budget:
        raise DecodingFailure(
            f"{len(bad)} corrupted shares exceed budget {e_budget}")
    return RobustRecon(values=[out[:, k].copy() for k in range(params.ell)],
                       bad_holders=frozenset(bad))


def slice_vector(v: np.ndarray, ell: int) -> list:
    """Split v into ell contiguous slices of dim ceil(len/ell), zero-padded."""
    v = np.asarray(v).reshape(-1)
    m = -(-v.shape[0] // ell)
    padded = np.zeros(m * ell, dtype=v.dtype)
    padded[: v.shape[0]] = v
    return [padded[k * m : (k + 1) * m].copy() for k in range(ell)]


def unslice_vector(slices: Sequence[np.ndarray], dim: int) -> np.ndarray:
    """Inverse of :func:`slice_vector`."""
    return np.concatenate([np.asarray(s).reshape(-1) for s in slices])[:dim]


class ShareTable:
    """Shares of many owners' vectors, indexed by owner and holder.

    ``coded[i, :, j]`` is holder j's coded vector for owner i.  This is the
    state after phase 1 of the clustering protocol: every holder has one
    share of every owner's sliced vector.
    """

    def __init__(self, coded: np.ndarray, params: LccParams):
        self.coded = coded  # (owners, slice_dim, n)
        self.params = params

    @property
    def n_owners(self) -> int:
        return self.coded.shape[0]

    @property
    def slice_dim(self) -> int:
        return self.coded.shape[1]

    def holder_view(self, j: int) -> np.ndarray:
        """All shares held by holder j, one row per owner."""
        return self.coded[:, :, j]

    def bundle(self, owner: int, holder: int) -> ShareBundle:
        return ShareBundle(holder=holder, coded=self.coded[owner, :, holder],
                           params=self.params)


def share_all(vectors: Sequence[np.ndarray], params: LccParams,
              rng: np.random.Generator) -> ShareTable:
    """Slice and share one field vector per owner; returns the full table."""
    dims = {np.asarray(v).reshape(-1).shape[0] for v in vectors}
    if len(dims) != 1:
        raise BadParams("owners must share one vector dimension")
    first = slice_vector(np.asarray(vectors[0], dtype=np.uint64), params.ell)
    m = first[0].shape[0]
    coded = np.zeros((len(vectors), m, params.n), dtype=np.uint64)
    for i, v in enumerate(vectors):
        slices = slice_vector(np.asarray(v, dtype=np.uint64), params.ell)
        for b in share(slices, params, rng):
            coded[i, :, b.holder] = b.coded
    return ShareTable(coded, params)


# --- polynomial helpers over F_q (dense coefficient lists, low order first)


def _poly_trim(p):
    while len(p) > 1 and p[-1] == 0:
        p.pop()
    return p


def _poly_deg(p) -> int:
    for i in range(len(p) - 1, -1, -1):
        if p[i] != 0:
            return i
    return -1


def _poly_eval(p, x: int, q: int) -> int:
    acc = 0
    for c in reversed(p):
        acc = (acc * x + c) % q
    return acc


def _poly_mul(a, b, q):
    out = [0] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        if ai == 0:
            continue
        for j, bj in enumerate(b):
            out[i + j] = (out[i + j] + ai * bj) % q
    return _poly_trim(out)


def _poly_sub(a, b, q):
    out = [0] * max(len(a), len(b))
    for i, ai in enumerate(a):
        out[i] = ai
    for i, bi in enumerate(b):
        out[i] = (out[i] - bi) % q
    return _poly_trim(out)


def _poly_divmod(a, b, f: PrimeField):
    q = f.q
    a = list(a)
    db, da = _poly_deg(b), _poly_deg(a)
    if db < 0:
        raise ZeroDivisionError("polynomial division by zero")
    inv_lead = f.inv(b[db])
    quot = [0] * max(1, da - db + 1)
    while da >= db and da >= 0:
        coef = a[da] * inv_lead % q
        quot[da - db] = coef
        for i in range(db + 1):
            a[da - db + i] = (a[da - db + i] - coef * b[i]) % q
        da = _poly_deg(a)
    return _poly_trim(quot), _poly_trim(a)


def _interpolate(xs, ys, f: PrimeField):
    """Newton interpolation through the given points."""
    q = f.q
    n = len(xs)
    coef = [y % q for y in ys]
    for level in range(1, n):
        for i in range(n - 1, level - 1, -1):
            denom = (xs[i] - xs[i - level]) % q
            coef[i] = (coef[i] - coef[i - 1]) * f.inv(denom) % q
    poly = [0]
    for i in range(n - 1, -1, -1):
        poly = _poly_mul(poly, [(-xs[i]) % q, 1], q)
        poly[0] = (poly[0] + coef[i]) % q
        poly = _poly_trim(poly)
    return poly


def _gao_decode(xs, ys, degree: int, f: PrimeField):
    """Return the degree<=degree polynomial through the points, correcting
    up to (m - degree - 1)//2 errors; None if no such codeword exists."""
    q = f.q
    m = len(xs)
    g0 = [1]
    for x in xs:
        g0 = _poly_mul(g0, [(-x) % q, 1], q)
    g1 = _interpolate(xs, ys, f)
    stop = (m + degree + 1) / 2
    r_prev, r_cur = g0, g1
    v_prev, v_cur = [0], [1]
    while _poly_deg(r_cur) >= stop:
        quot, rem = _poly_divmod(r_prev, r_cur, f)
        r_prev, r_cur = r_cur, rem
        v_prev, v_cur = v_cur, _poly_sub(v_prev, _poly_mul(quot, v_cur, q), q)
    if _poly_deg(r_cur) < 0:
        return None
    fpoly, rem = _poly_divmod(r_cur, v_cur, f)
    if _poly_deg(rem) >= 0 or _poly_deg(fpoly) > degree:
        return None
    return fpoly
