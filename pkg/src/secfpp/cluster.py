"""SecPC: secure adaptive clustering over coded reduced prompts.

One clustering round has three phases:

1. every user has already LCC-shared its sliced, quantized reduced prompt
   (a :class:`~secfpp.lcc.ShareTable`);
2. every holder j locally forms coded cluster centers
   [mu_s]_j = sum_{i in s} [x_i]_j and coded squared distances
   [d_{i,s}]_j = || [mu_s]_j - |s| * [x_i]_j ||^2 for all (i, s), plus
   coded center gaps || |s'| [mu_s]_j - |s| [mu_s']_j ||^2 for cluster
   pairs, and sends these scalars to the server;
3. the server Reed-Solomon-decodes each value at degree 2*(ell+t-1),
   dequantizes, rescales (distances by |s|^2, gaps by (|s||s'|)^2), and
   runs one deterministic adaptive update on the revealed numbers.

The server consequently learns nothing beyond the distance table, the
center gaps, and the assignment itself.  ``plaintext_oracle`` computes the
identical quantities in real arithmetic and drives the same update rule;
the two paths must agree whenever distance margins dominate quantization
noise.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from . import _kernels as kernels
from . import lcc, transcript as tr
from .errors import AmbiguousValue, BadParams, OverflowDetected
from .field import QuantConfig, dequantize


@dataclass(frozen=True)
class ClusterAssignment:
    """Partition of user indices 0..n-1 into non-empty disjoint clusters.

    Canonical form: members sorted ascending, clusters ordered by smallest
    member.
    """

    clusters: Tuple[Tuple[int, ...], ...]

    @classmethod
    def from_groups(cls, groups) -> "ClusterAssignment":
        canon = tuple(sorted((tuple(sorted(g)) for g in groups if len(g)),
                             key=lambda c: c[0]))
        return cls(clusters=canon)

    @classmethod
    def single(cls, n: int) -> "ClusterAssignment":
        return cls(clusters=(tuple(range(n)),))

    def __post_init__(self):
        seen = set()
        for c in self.clusters:
            if not c:
                raise BadParams("empty cluster")
            if seen & set(c):
                raise BadParams("overlapping clusters")
            seen |= set(c)
        if seen != set(range(len(seen))):
            raise BadParams("clusters must partition 0..n-1")

    @property
    def n_users(self) -> int:
        return sum(len(c) for c in self.clusters)

    @property
    def k(self) -> int:
        return len(self.clusters)

    @property
    def sizes(self) -> Tuple[int, ...]:
        return tuple(len(c) for c in self.clusters)

    def cluster_of(self, i: int) -> int:
        for idx, c in enumerate(self.clusters):
            if i in c:
                return idx
        raise KeyError(i)


@dataclass(frozen=True)
class DistanceTable:
    """Real squared distances d[i, s] = ||x_i - center_s||^2, plus sizes."""

    values: np.ndarray  # (n_users, k)
    sizes: Tuple[int, ...]


@dataclass(frozen=True)
class AdaptiveConfig:
    """Spawn/merge thresholds; "auto" scales the mean assigned distance."""

    theta_spawn: object = "auto"
    theta_merge: object = "auto"
    auto_factor_spawn: float = 4.0
    auto_factor_merge: float = 0.5

    def __post_init__(self):
        for name in ("theta_spawn", "theta_merge"):
            v = getattr(self, name)
            if v == "auto":
                continue
            if not isinstance(v, (int, float)) or v <= 0:
                raise BadParams(f"{name} must be positive or 'auto', got {v!r}")
        if self.auto_factor_spawn <= 0 or self.auto_factor_merge <= 0:
            raise BadParams("auto factors must be positive")


@dataclass(frozen=True)
class SecpcResult:
    assignment: ClusterAssignment
    distances: DistanceTable
    gaps: Dict[Tuple[int, int], float]


def _holder_coded_distances(view: np.ndarray, assignment: ClusterAssignment,
                            q: int):
    """Phase-2 work of one holder: coded distances (n, k) and center gaps."""
    n = view.shape[0]
    k = assignment.k
    centers = []
    coded = np.zeros((n, k), dtype=np.uint64)
    for s_idx, members in enumerate(assignment.clusters):
        center = kernels.summod(view[list(members)], 0, q)
        centers.append(center)
        scaled = kernels.mulmod(np.uint64(len(members) % q), view, q)
        diff = kernels.submod(center[None, :], scaled, q)
        coded[:, s_idx] = kernels.sq_row_sum(diff, q)
    gaps = np.zeros(k * (k - 1) // 2, dtype=np.uint64)
    pos = 0
    for a in range(k):
        for b in range(a + 1, k):
            ga = kernels.mulmod(np.uint64(assignment.sizes[b] % q), centers[a], q)
            gb = kernels.mulmod(np.uint64(assignment.sizes[a] % q), centers[b], q)
            diff = kernels.submod(ga, gb, q)
            gaps[pos] = kernels.sq_row_sum(diff[None, :], q)[0]
            pos += 1
    return coded, gaps


def _decode_degree2(column_shares, holders, params, quant, image_bound):
    """Reconstruct degree-2 values from per-holder share vectors and
    dequantize each packing slice, returning the summed real values."""
    bundles = [lcc.ShareBundle(holder=h, coded=vec, params=params)
               for h, vec in zip(holders, column_shares)]
    degree = params.result_degree(2)
    slices = lcc.recon(bundles, degree=degree, check_extra=False)
    total = np.zeros(slices[0].shape[0], dtype=np.float64)
    for sl in slices:
        try:
            part = dequantize(sl, quant, params.field, degree=2,
                              image_bound=image_bound)
        except AmbiguousValue as exc:
            raise OverflowDetected(str(exc)) from exc
        if np.any(part < -0.5 / quant.lam):
            raise OverflowDetected(
                "decoded squared distance is negative; field overflow")
        total += part
    return total, degree, len(holders)


def secpc_round(table: lcc.ShareTable, assignment: ClusterAssignment,
                cfg: AdaptiveConfig, quant: QuantConfig,
                transcript: Optional[tr.Transcript] = None,
                round_no: int = 0, dropout: frozenset = frozenset(),
                dist_bound: Optional[float] = None,
                threads: int = 1) -> SecpcResult:
    """Run one full SecPC round on an existing share table.

    ``dist_bound`` optionally bounds any real squared distance computed in
    this round; decoded values beyond ``lam**2 * dist_bound`` raise
    :class:`OverflowDetected`.  ``dropout`` holders compute nothing this
    round; decoding proceeds from the survivors.
    """
    params = table.params
    q = params.field.q
    n, k = table.n_owners, assignment.k
    if assignment.n_users != n:
        raise BadParams("assignment does not cover the shared vectors")
    survivors = [j for j in range(params.n) if j not in dropout]
    image_bound = (q - 1) // 2 if dist_bound is None \
        else float(quant.lam) ** 2 * dist_bound

    def phase2(j):
        return _holder_coded_distances(table.holder_view(j), assignment, q)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(phase2, survivors))
    else:
        results = [phase2(j) for j in survivors]

    dist_shares, gap_shares = [], []
    for j, (coded, gaps) in zip(survivors, results):
        dist_shares.append(coded.reshape(-1))
        gap_shares.append(gaps)
        if transcript is not None:
            transcript.log(round_no, tr.user(j), tr.SERVER, tr.DISTANCE_SHARE,
                           coded)
            if gaps.size:
                transcript.log(round_no, tr.user(j), tr.SERVER,
                               tr.CENTER_GAP_SHARE, gaps)

    flat, degree, used = _decode_degree2(dist_shares, survivors, params,
                                         quant, image_bound)
    if transcript is not None:
        transcript.log_recon(round_no, "distance", degree, used)
    sizes = np.array(assignment.sizes, dtype=np.float64)
    distances = DistanceTable(
        values=flat.reshape(n, k) / sizes[None, :] ** 2,
        sizes=assignment.sizes)

    gaps: Dict[Tuple[int, int], float] = {}
    if k > 1:
        gflat, degree, used = _decode_degree2(gap_shares, survivors, params,
                                              quant, image_bound)
        if transcript is not None:
            transcript.log_recon(round_no, "center-gap", degree, used)
        pos = 0
        for a in range(k):
            for b in range(a + 1, k):
                scale = (assignment.sizes[a] * assignment.sizes[b]) ** 2
                gaps[(a, b)] = float(gflat[pos]) / scale
                pos += 1

    new_assignment = adaptive_update(distances, gaps, assignment, cfg)
    return SecpcResult(assignment=new_assignment, distances=distances,
                       gaps=gaps)


def coded_center_gap(table: lcc.ShareTable, assignment: ClusterAssignment,
                     s_a: int, s_b: int, quant: QuantConfig,
                     dropout: frozenset = frozenset(),
                     dist_bound: Optional[float] = None) -> float:
    """Securely compute || mean_a - mean_b ||^2 for two clusters.

    Holders evaluate || |s_b| [mu_a] - |s_a| [mu_b] ||^2 on shares; the
    server decodes and divides by (|s_a| |s_b|)^2, so only the rescaled
    gap is revealed.
    """
    if s_a == s_b:
        raise BadParams("cluster indices must differ")
    params = table.params
    q = params.field.q
    survivors = [j for j in range(params.n) if j not in dropout]
    image_bound = (q - 1) // 2 if dist_bound is None \
        else float(quant.lam) ** 2 * dist_bound
    shares = []
    size_a = len(assignment.clusters[s_a])
    size_b = len(assignment.clusters[s_b])
    for j in survivors:
        view = table.holder_view(j)
        mu_a = kernels.summod(view[list(assignment.clusters[s_a])], 0, q)
        mu_b = kernels.summod(view[list(assignment.clusters[s_b])], 0, q)
        diff = kernels.submod(kernels.mulmod(np.uint64(size_b % q), mu_a, q),
                              kernels.mulmod(np.uint64(size_a % q), mu_b, q),
                              q)
        shares.append(kernels.sq_row_sum(diff[None, :], q))
    flat, _, _ = _decode_degree2(shares, survivors, params, quant, image_bound)
    return float(flat[0]) / (size_a * size_b) ** 2


def _resolve_thresholds(distances: DistanceTable,
                        assignment: ClusterAssignment,
                        cfg: AdaptiveConfig) -> Tuple[float, float]:
    if cfg.theta_spawn == "auto" or cfg.theta_merge == "auto":
        assigned = [distances.values[i, s]
                    for s, members in enumerate(assignment.clusters)
                    for i in members]
        mean_assigned = float(np.mean(assigned))
        spawn = cfg.auto_factor_spawn * mean_assigned \
            if cfg.theta_spawn == "auto" else float(cfg.theta_spawn)
        merge = cfg.auto_factor_merge * mean_assigned \
            if cfg.theta_merge == "auto" else float(cfg.theta_merge)
        return spawn, merge
    return float(cfg.theta_spawn), float(cfg.theta_merge)


def adaptive_update(distances: DistanceTable, gaps: Dict[Tuple[int, int], float],
                    assignment: ClusterAssignment,
                    cfg: AdaptiveConfig) -> ClusterAssignment:
    """One deterministic reassign -> spawn -> merge pass.

    * reassign: each user moves to its nearest center (ties break to the
      lowest cluster index); clusters emptied by this step are dropped;
    * spawn: users whose minimum distance exceeds theta_spawn leave their
      cluster and found singletons, in ascending user index;
    * merge: surviving clusters of the incoming assignment whose pairwise
      center gap is below theta_merge merge transitively, pairs visited in
      ascending index order; freshly spawned singletons never merge within
      the same round.
    """
    d = distances.values
    n = d.shape[0]
    theta_spawn, theta_merge = _resolve_thresholds(distances, assignment, cfg)

    nearest = np.argmin(d, axis=1)  # ties -> lowest index
    bins = {s: [] for s in range(assignment.k)}
    for i in range(n):
        bins[int(nearest[i])].append(i)

    spawned = []
    for i in range(n):
        if float(d[i].min()) > theta_spawn:
            bins[int(nearest[i])].remove(i)
            spawned.append((i,))

    alive = [s for s, members in bins.items() if members]

    parent = {s: s for s in alive}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a in sorted(alive):
        for b in sorted(alive):
            if b <= a:
                continue
            if gaps.get((a, b), np.inf) < theta_merge:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)

    merged: Dict[int, list] = {}
    for s in alive:
        merged.setdefault(find(s), []).extend(bins[s])

    groups = list(merged.values()) + [list(g) for g in spawned]
    return ClusterAssignment.from_groups(groups)


def plaintext_oracle(vectors: np.ndarray, assignment: ClusterAssignment,
                     cfg: AdaptiveConfig,
                     compute_gaps: bool = True) -> Tuple[ClusterAssignment,
                                                         DistanceTable,
                                                         Dict]:
    """Clear-text reference: identical quantities and update rule as
    :func:`secpc_round`, computed in real arithmetic.  Test oracle only."""
    x = np.asarray(vectors, dtype=np.float64)
    n = x.shape[0]
    if assignment.n_users != n:
        raise BadParams("assignment does not cover the vectors")
    k = assignment.k
    d = np.zeros((n, k))
    centers = []
    for s_idx, members in enumerate(assignment.clusters):
        center = x[list(members)].mean(axis=0)
        centers.append(center)
        d[:, s_idx] = np.sum((x - center[None, :]) ** 2, axis=1)
    gaps = {}
    if compute_gaps:
        for a in range(k):
            for b in range(a + 1, k):
                gaps[(a, b)] = float(np.sum((centers[a] - centers[b]) ** 2))
    table = DistanceTable(values=d, sizes=assignment.sizes)
    return adaptive_update(table, gaps, assignment, cfg), table, gaps
