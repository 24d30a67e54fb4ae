"""Modular arithmetic kernels with backend selection.

Two interchangeable backends implement the same operations:

* ``compiled`` -- Cython extension with 128-bit intermediate products
  (built at install time when a C compiler is available);
* ``python``   -- pure-numpy limb arithmetic (always available).

The compiled backend is preferred.  Set ``SECFPP_KERNEL_BACKEND=python``
(or ``compiled``) to force one; ``benchmarks/backend_bench.py`` compares
them.  All functions take and return ``uint64`` residue arrays and a
Python-int modulus ``q`` (odd, < 2**62).
"""

import os

import numpy as np

from . import pyops

try:
    from . import _fieldops
except ImportError:
    _fieldops = None

_requested = os.environ.get("SECFPP_KERNEL_BACKEND", "auto")
if _requested not in ("auto", "compiled", "python"):
    raise ValueError(f"unknown SECFPP_KERNEL_BACKEND {_requested!r}")
if _requested == "compiled" and _fieldops is None:
    raise ImportError("compiled kernels requested but extension not built")

_use_compiled = _fieldops is not None and _requested in ("auto", "compiled")

BACKEND = "compiled" if _use_compiled else "python"


def available_backends():
    names = ["python"]
    if _fieldops is not None:
        names.insert(0, "compiled")
    return tuple(names)


def _as_u64(a):
    return np.asarray(a, dtype=np.uint64)


if _use_compiled:

    def mulmod(a, b, q):
        a, b = np.broadcast_arrays(_as_u64(a), _as_u64(b))
        flat_a = np.ascontiguousarray(a).reshape(-1)
        flat_b = np.ascontiguousarray(b).reshape(-1)
        out = np.empty(flat_a.shape[0], dtype=np.uint64)
        _fieldops.mulmod_vec(flat_a, flat_b, q, out)
        return out.reshape(a.shape)

    def matmul_mod(a, b, q):
        a = np.ascontiguousarray(_as_u64(a))
        b = np.ascontiguousarray(_as_u64(b))
        out = np.empty((a.shape[0], b.shape[1]), dtype=np.uint64)
        _fieldops.matmul_mod(a, b, q, out)
        return out

    def sq_row_sum(x, q):
        x = np.ascontiguousarray(_as_u64(x))
        out = np.empty(x.shape[0], dtype=np.uint64)
        _fieldops.sq_diff_sum(x, q, out)
        return out

else:

    mulmod = pyops.mulmod
    matmul_mod = pyops.matmul_mod

    def sq_row_sum(x, q):
        x = _as_u64(x)
        return pyops.summod(pyops.mulmod(x, x, q), 1, q)


# addition/subtraction never need 128-bit products; numpy suffices for both
# backends.
addmod = pyops.addmod
submod = pyops.submod
negmod = pyops.negmod
summod = pyops.summod


def get_ops(backend):
    """Return the raw ops namespace for an explicit backend (for benchmarks)."""
    if backend == "python":
        return pyops
    if backend == "compiled":
        if _fieldops is None:
            raise ImportError("compiled kernels not built")
        return _fieldops
    raise ValueError(f"unknown backend {backend!r}")
