"""Dimension reduction for prompt matrices.

Clustering compares reduced prompts *across* users, so every user must
project into one shared basis: per-user truncated SVD would express each
prompt in its own coordinate frame and make inter-user distances
meaningless.  The default shared basis is a seeded random orthonormal
projection (a Johnson-Lindenstrauss map, so squared distances are
preserved in expectation); alternatively the basis can be derived from a
reference matrix's singular vectors (rank-one factor flattenings, which
are orthonormal in the flattened space).

Truncated SVD itself is also exposed for rank-r approximation of a single
prompt matrix.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceFailure, RankExceeded, ShapeMismatch


@dataclass(frozen=True)
class ProjectionBasis:
    """r x d_total matrix with orthonormal rows plus a stable identifier."""

    rows: np.ndarray
    basis_id: str

    @property
    def r(self) -> int:
        return self.rows.shape[0]

    @property
    def d_total(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class ReducedPrompt:
    """Projection coordinates of one prompt in a shared basis."""

    coords: np.ndarray
    basis_id: str


def _basis_digest(rows: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(rows).tobytes())
    return h.hexdigest()[:16]


def make_shared_basis(seed: int, d_total: int, r: int) -> ProjectionBasis:
    """Deterministic orthonormal rows from seeded Gaussian draws.

    Same seed, same shape -> bit-identical basis.
    """
    if r > d_total:
        raise RankExceeded(f"rank {r} exceeds dimension {d_total}")
    if r < 1:
        raise RankExceeded(f"rank must be >= 1, got {r}")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((d_total, r))
    q, rmat = np.linalg.qr(g)
    signs = np.sign(np.diag(rmat))
    signs[signs == 0] = 1.0
    rows = np.ascontiguousarray((q * signs).T)
    return ProjectionBasis(rows=rows, basis_id=_basis_digest(rows))


def basis_from_reference(reference: np.ndarray, r: int) -> ProjectionBasis:
    """Shared basis from a reference matrix's top-r singular triplets.

    Row k is the flattening of u_k v_k^T; distinct rank-one factors are
    orthonormal under the Frobenius inner product, so the rows form an
    orthonormal set in the flattened space.
    """
    reference = np.asarray(reference, dtype=np.float64)
    if r > min(reference.shape):
        raise RankExceeded(
            f"rank {r} exceeds min matrix dimension {min(reference.shape)}")
    u, _, vt = np.linalg.svd(reference, full_matrices=False)
    rows = np.stack([np.outer(u[:, k], vt[k]).reshape(-1) for k in range(r)])
    return ProjectionBasis(rows=np.ascontiguousarray(rows),
                           basis_id=_basis_digest(rows))


def flatten_prompt(p: np.ndarray) -> np.ndarray:
    """Token-major flattening: each token's embedding stays contiguous."""
    return np.asarray(p, dtype=np.float64).reshape(-1)


def reduce_prompt(p: np.ndarray, basis: ProjectionBasis) -> ReducedPrompt:
    """Project one prompt matrix onto the shared basis."""
    flat = flatten_prompt(p)
    if flat.shape[0] != basis.d_total:
        raise ShapeMismatch(
            f"flattened prompt has dim {flat.shape[0]}, "
            f"basis expects {basis.d_total}")
    return ReducedPrompt(coords=basis.rows @ flat, basis_id=basis.basis_id)


def truncated_svd(p: np.ndarray, r: int, residual_tol: float = 1e-8):
    """Top-r singular triplets (s, U_r, Vt_r) of a prompt matrix.

    The rank-r reconstruction U_r diag(s) Vt_r minimizes Frobenius error
    among rank-r matrices; the result is checked against the trailing
    spectrum and :class:`ConvergenceFailure` is raised if the residual
    identity fails ``residual_tol``.
    """
    p = np.asarray(p, dtype=np.float64)
    if r > min(p.shape):
        raise RankExceeded(f"rank {r} exceeds min dimension {min(p.shape)}")
    if r < 1:
        raise RankExceeded(f"rank must be >= 1, got {r}")
    try:
        u, s, vt = np.linalg.svd(p, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"SVD failed to converge: {exc}") from exc
    approx = (u[:, :r] * s[:r]) @ vt[:r]
    residual = np.linalg.norm(p - approx, "fro") ** 2
    expected = float(np.sum(s[r:] ** 2))
    scale = max(1.0, float(np.sum(s**2)))
    if abs(residual - expected) > residual_tol * scale:
        raise ConvergenceFailure(
            f"residual {residual:.3e} deviates from trailing spectrum "
            f"{expected:.3e}")
    return s[:r].copy(), u[:, :r].copy(), vt[:r].copy()
