"""Phase timings and communication accounting for the clustering protocol.

One benchmark point runs a single coded-clustering round at (n users,
d-dimensional vectors) with a fixed k-cluster assignment and times each
phase separately:

* share          -- every user slices, quantizes and LCC-encodes its vector
* distance       -- every holder forms coded centers and coded distances
* decode         -- the server reconstructs and dequantizes all distances
* aggregate      -- LCC share + holder sums + decode of a d-dim gradient
* server-cluster -- one adaptive update on the decoded table

Byte accounting is exact, not asymptotic: per user and round,

    share payload     (n - 1) * ceil(d / ell) elements
    distance payload  n * k                  elements

with 8 bytes per field element, matching the O(nd/ell + kn) communication
model.  Fits of user compute time against n*d and of server decode time
against k * n^2 * log^2(n) quantify how well the scaling model explains
the measurements.
"""

import math
import time
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from . import cluster as cl
from . import lcc
from .field import PrimeField, QuantConfig, dequantize, min_modulus, \
    next_prime, quantize

PHASES = ("share", "distance", "decode", "aggregate", "server-cluster")
BYTES_PER_ELEMENT = 8


@dataclass(frozen=True)
class BenchRecord:
    n: int
    d: int
    phase: str
    wall_time: float
    bytes_sent: int

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ValueError(f"unknown phase {self.phase!r}")
        if self.wall_time < 0 or self.bytes_sent < 0:
            raise ValueError("negative measurement")


def expected_user_elements(n: int, d: int, ell: int, k: int) -> dict:
    """Exact per-user per-round element counts for the documented payloads."""
    slice_dim = -(-d // ell)
    return {"share": (n - 1) * slice_dim, "distance": n * k}


@dataclass(frozen=True)
class BenchPoint:
    n: int
    d: int
    records: List[BenchRecord]
    user_compute_s: float      # share + distance (per round, all users)
    server_decode_s: float
    per_user_bytes: int


def bench_point(n: int, d: int, alpha: float = 1 / 3, k_clusters: int = 2,
                lam: int = 1000, repeats: int = 5, seed: int = 0,
                ell: Optional[int] = None) -> BenchPoint:
    """Median-of-``repeats`` timings for one (n, d) grid point."""
    t = int(alpha * n)
    rng = np.random.default_rng(seed)
    vectors = [rng.standard_normal(d) for _ in range(n)]
    # standard-normal coords: |x| < 6 with overwhelming margin at this scale
    dist_bound = d * (2 * n * 6.0) ** 2
    q = next_prime(max(10**10, min_modulus(lam, dist_bound)))
    field = PrimeField(q)
    quant = QuantConfig.from_bound(lam, 10.0)
    groups = [list(range(i, n, k_clusters)) for i in range(k_clusters)]
    assignment = cl.ClusterAssignment.from_groups(groups)
    params = lcc.LccParams.make(field, n=n, t=t, ell=ell)

    times = {phase: [] for phase in PHASES}
    for _ in range(repeats):
        coded = [quantize(v, quant, field) for v in vectors]

        t0 = time.perf_counter()
        table = lcc.share_all(coded, params, rng)
        t1 = time.perf_counter()
        dist_shares = [cl._holder_coded_distances(table.holder_view(j),
                                                  assignment, q)[0].reshape(-1)
                       for j in range(n)]
        t2 = time.perf_counter()
        flat, _, _ = cl._decode_degree2(dist_shares, list(range(n)), params,
                                        quant, lam**2 * dist_bound)
        sizes = np.array(assignment.sizes, dtype=np.float64)
        table_real = cl.DistanceTable(
            values=flat.reshape(n, assignment.k) / sizes[None, :] ** 2,
            sizes=assignment.sizes)
        t3 = time.perf_counter()
        _bench_aggregate(vectors, assignment, params, quant, rng)
        t4 = time.perf_counter()
        cl.adaptive_update(table_real, {(a, b): float("inf")
                                        for a in range(assignment.k)
                                        for b in range(a + 1, assignment.k)},
                           assignment, cl.AdaptiveConfig())
        t5 = time.perf_counter()
        for phase, dt in zip(PHASES, (t1 - t0, t2 - t1, t3 - t2,
                                      t4 - t3, t5 - t4)):
            times[phase].append(dt)

    counts = expected_user_elements(n, d, params.ell, assignment.k)
    per_user_bytes = (counts["share"] + counts["distance"]) * BYTES_PER_ELEMENT
    records = []
    for phase in PHASES:
        if phase == "share":
            sent = counts["share"] * BYTES_PER_ELEMENT * n
        elif phase == "distance":
            sent = counts["distance"] * BYTES_PER_ELEMENT * n
        else:
            sent = 0
        records.append(BenchRecord(n=n, d=d, phase=phase,
                                   wall_time=float(np.median(times[phase])),
                                   bytes_sent=sent))
    by_phase = {r.phase: r.wall_time for r in records}
    return BenchPoint(n=n, d=d, records=records,
                      user_compute_s=by_phase["share"] + by_phase["distance"],
                      server_decode_s=by_phase["decode"],
                      per_user_bytes=per_user_bytes)


def _bench_aggregate(vectors, assignment, params, quant, rng):
    field = params.field
    dim = vectors[0].shape[0]
    flat = [quantize(v, quant, field) for v in vectors]
    table = lcc.share_all(flat, params, rng)
    from . import _kernels as kernels
    for s_idx, members in enumerate(assignment.clusters):
        sums = [kernels.summod(table.holder_view(j)[list(members)], 0, field.q)
                for j in range(params.n)]
        bundles = [lcc.ShareBundle(holder=j, coded=sums[j], params=params)
                   for j in range(params.n)]
        slices = lcc.recon(bundles, degree=params.base_degree,
                           check_extra=False)
        summed = lcc.unslice_vector(slices, dim)
        dequantize(summed, quant, field, degree=1,
                   image_bound=quant.eta * len(vectors))


@dataclass(frozen=True)
class ScalingFit:
    """Least-squares fit of y against a scaling model a*x + b."""

    coef: float
    intercept: float
    r_squared: float


def fit_scaling(xs, ys) -> ScalingFit:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    a = np.vstack([x, np.ones_like(x)]).T
    (coef, intercept), *_ = np.linalg.lstsq(a, y, rcond=None)
    pred = coef * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(coef=float(coef), intercept=float(intercept),
                      r_squared=r2)


@dataclass(frozen=True)
class BenchSummary:
    points: List[BenchPoint]
    user_fit_nd: ScalingFit        # user compute vs n*d
    server_fit: ScalingFit         # decode vs k * n^2 * log^2 n

    def records(self) -> List[BenchRecord]:
        return [r for p in self.points for r in p.records]


def run_grid(n_values, d_values, alpha: float = 1 / 3, k_clusters: int = 2,
             repeats: int = 5, seed: int = 0) -> BenchSummary:
    points = []
    for n in n_values:
        if n < 2:
            raise ValueError("benchmark needs n >= 2 (no federation)")
        for d in d_values:
            points.append(bench_point(int(n), int(d), alpha=alpha,
                                      k_clusters=k_clusters, repeats=repeats,
                                      seed=seed))
    user_fit = fit_scaling([p.n * p.d for p in points],
                           [p.user_compute_s for p in points])
    server_fit = fit_scaling(
        [k_clusters * p.n**2 * math.log(p.n) ** 2 for p in points],
        [p.server_decode_s for p in points])
    return BenchSummary(points=points, user_fit_nd=user_fit,
                        server_fit=server_fit)


def records_to_csv(records, path):
    import csv
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["n", "d", "phase",
                                                "wall_time", "bytes_sent"])
        writer.writeheader()
        for r in records:
            writer.writerow({"n": r.n, "d": r.d, "phase": r.phase,
                             "wall_time": f"{r.wall_time:.6g}",
                             "bytes_sent": r.bytes_sent})
