"""SecFPP orchestration: simulated users and server running hierarchical
prompt personalization with coded clustering and secure aggregation.

Each round:

1. every user runs local epochs on its private objective, updating its
   local prompt component and keeping the final global-component gradient;
2. users project their personalized prompts (fresh local, stale global)
   into the shared basis, quantize, and LCC-share the reduced vectors;
3. SecPC reveals only distances/gaps to the server, which updates the
   cluster assignment;
4. users LCC-share their quantized global gradients; holders sum within
   each new cluster; the server decodes only the per-cluster sums, never
   an individual gradient;
5. the server updates each cluster's global prompt (new clusters inherit
   the element-wise mean of their members' previous global components) and
   broadcasts; users recompose P_i = P_{G,s} + P_{L,i}.

The local objective is a pluggable quadratic (0.5 * ||P - T||_F^2 against
a per-user synthetic target), so gradients are exact and convergence is
analyzable; swapping in a real training task only requires implementing
the same loss/gradient pair.

A plaintext shadow mode (``secure=False``) executes identical arithmetic
in the clear through the same decision path, which pins down the
quantization error budget of the secure run.
"""

import json
import time
from dataclasses import asdict, dataclass, field as dc_field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import _kernels as kernels
from . import cluster as cl
from . import lcc, transcript as tr
from .errors import BadConfig
from .field import (PrimeField, QuantConfig, dequantize, is_prime,
                    min_modulus, next_prime, quantize)
from .reduce import ProjectionBasis, basis_from_reference, make_shared_basis


@dataclass(frozen=True)
class TaskConfig:
    """Synthetic multi-domain quadratic task."""

    n_domains: int = 2
    separation: float = 4.0     # Frobenius distance between domain prototypes
    local_scale: float = 0.3    # scale of per-user private components
    noise_sigma: float = 0.05   # target observation noise

    def validate(self):
        if self.n_domains < 1:
            raise BadConfig("task.n_domains must be >= 1")
        if self.separation < 0 or self.local_scale < 0 or self.noise_sigma < 0:
            raise BadConfig("task scales must be non-negative")


@dataclass(frozen=True)
class RunConfig:
    seed: int
    n_users: int = 20
    rounds: int = 100
    lr: float = 0.001
    local_epochs: int = 10
    k_tokens: int = 5
    d_embed: int = 8
    r_reduced: int = 8
    lam: int = 1000
    alpha: float = 1 / 3
    ell: Optional[int] = None
    adaptive: cl.AdaptiveConfig = dc_field(default_factory=cl.AdaptiveConfig)
    task: TaskConfig = dc_field(default_factory=TaskConfig)
    dropout_rate: float = 0.0
    basis_mode: str = "random"     # or "global-svd"
    init_scale: float = 0.5
    value_bound: Optional[float] = None
    modulus: Optional[int] = None
    stop_tol: Optional[float] = None
    threads: int = 1

    @property
    def t(self) -> int:
        return int(self.alpha * self.n_users)

    @property
    def d_total(self) -> int:
        return self.k_tokens * self.d_embed

    def validate(self):
        if self.n_users < 2:
            raise BadConfig("n_users must be >= 2 (no federation otherwise)")
        if self.rounds < 1 or self.local_epochs < 1:
            raise BadConfig("rounds and local_epochs must be >= 1")
        if self.lr < 0:
            raise BadConfig("lr must be non-negative")
        if self.k_tokens < 1 or self.d_embed < 1:
            raise BadConfig("prompt dimensions must be >= 1")
        if not (1 <= self.r_reduced <= self.d_total):
            raise BadConfig(
                f"r_reduced must be in [1, {self.d_total}], got {self.r_reduced}")
        if self.lam < 1:
            raise BadConfig("lam must be >= 1")
        if self.alpha * self.n_users < 1:
            raise BadConfig("alpha * n_users must be >= 1")
        if not (0 <= self.dropout_rate < 1):
            raise BadConfig("dropout_rate must be in [0, 1)")
        if self.basis_mode not in ("random", "global-svd"):
            raise BadConfig(f"unknown basis_mode {self.basis_mode!r}")
        if self.threads < 1:
            raise BadConfig("threads must be >= 1")
        if self.task.n_domains > self.n_users:
            raise BadConfig("more domains than users")
        self.task.validate()
        if self.ell is not None:
            needed = 2 * (self.ell + self.t - 1) + 1
            if needed > self.n_users:
                raise BadConfig(
                    f"ell={self.ell} violates the degree-2 decoding bound: "
                    f"2*(ell+t-1)+1 = {needed} > n = {self.n_users}")

    # JSON ----------------------------------------------------------------

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise BadConfig(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise BadConfig("config root must be a JSON object")
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        raw = dict(raw)
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise BadConfig(f"unknown config keys: {sorted(unknown)}")
        if "seed" not in raw:
            raise BadConfig("config must set an explicit seed")
        if "adaptive" in raw:
            sub = dict(raw["adaptive"])
            extra = set(sub) - set(cl.AdaptiveConfig.__dataclass_fields__)
            if extra:
                raise BadConfig(f"unknown adaptive keys: {sorted(extra)}")
            raw["adaptive"] = cl.AdaptiveConfig(**sub)
        if "task" in raw:
            sub = dict(raw["task"])
            extra = set(sub) - set(TaskConfig.__dataclass_fields__)
            if extra:
                raise BadConfig(f"unknown task keys: {sorted(extra)}")
            raw["task"] = TaskConfig(**sub)
        try:
            cfg = cls(**raw)
        except TypeError as exc:
            raise BadConfig(str(exc)) from exc
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SyntheticTask:
    """Per-user targets T_i = G*_{dom(i)} + L*_i + noise."""

    domain_of: Tuple[int, ...]
    targets: Tuple[np.ndarray, ...]
    prototypes: Tuple[np.ndarray, ...]

    def loss(self, i: int, prompt: np.ndarray) -> float:
        return 0.5 * float(np.sum((prompt - self.targets[i]) ** 2))

    def gradient(self, i: int, prompt: np.ndarray) -> np.ndarray:
        return prompt - self.targets[i]

    @property
    def domain_partition(self) -> cl.ClusterAssignment:
        groups: Dict[int, list] = {}
        for i, d in enumerate(self.domain_of):
            groups.setdefault(d, []).append(i)
        return cl.ClusterAssignment.from_groups(groups.values())


def make_task(cfg: RunConfig, rng: np.random.Generator) -> SyntheticTask:
    shape = (cfg.k_tokens, cfg.d_embed)
    unit = np.ones(shape) / np.sqrt(cfg.d_total)
    offsets = (np.arange(cfg.task.n_domains)
               - (cfg.task.n_domains - 1) / 2) * cfg.task.separation
    prototypes = tuple(off * unit for off in offsets)
    domain_of = tuple(i * cfg.task.n_domains // cfg.n_users
                      for i in range(cfg.n_users))
    targets = []
    for i in range(cfg.n_users):
        local = cfg.task.local_scale * rng.standard_normal(shape)
        noise = cfg.task.noise_sigma * rng.standard_normal(shape)
        targets.append(prototypes[domain_of[i]] + local + noise)
    return SyntheticTask(domain_of=domain_of, targets=tuple(targets),
                         prototypes=prototypes)


@dataclass(frozen=True)
class PromptState:
    """Hierarchical prompt state; P_i = global[cluster(i)] + local[i]."""

    globals_: Tuple[np.ndarray, ...]   # aligned with assignment.clusters
    locals_: Tuple[np.ndarray, ...]    # one per user

    def personalized(self, assignment: cl.ClusterAssignment,
                     i: int) -> np.ndarray:
        return self.globals_[assignment.cluster_of(i)] + self.locals_[i]

    def all_personalized(self, assignment: cl.ClusterAssignment) -> list:
        out = [None] * len(self.locals_)
        for s_idx, members in enumerate(assignment.clusters):
            for i in members:
                out[i] = self.globals_[s_idx] + self.locals_[i]
        return out


def seed_streams(seed: int) -> Dict[str, np.random.Generator]:
    """Deterministic per-purpose randomness streams for one run.

    Secure and shadow runs consume the same task/init/dropout streams, so
    their trajectories are comparable; only the share stream differs.
    """
    names = ("task", "init", "share", "dropout", "basis")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.default_rng(child)
            for name, child in zip(names, children)}


def init(cfg: RunConfig, rng: Optional[np.random.Generator] = None
         ) -> Tuple[PromptState, cl.ClusterAssignment]:
    """Round-0 state: one cluster of all users, shared global, zero locals."""
    cfg.validate()
    if rng is None:
        rng = seed_streams(cfg.seed)["init"]
    shape = (cfg.k_tokens, cfg.d_embed)
    p_global = cfg.init_scale * rng.standard_normal(shape)
    locals_ = tuple(np.zeros(shape) for _ in range(cfg.n_users))
    return (PromptState(globals_=(p_global,), locals_=locals_),
            cl.ClusterAssignment.single(cfg.n_users))


def local_step(p_global: np.ndarray, p_local: np.ndarray,
               target: np.ndarray, lr: float,
               epochs: int) -> Tuple[np.ndarray, np.ndarray]:
    """Local epochs with the global component frozen.

    Per epoch the shared gradient of the quadratic loss is (P_i - T_i);
    the local component takes the step.  Returns the updated local prompt
    and the gradient from the last epoch (the user's contribution to the
    global aggregate).
    """
    p_local = np.array(p_local, copy=True)
    grad = np.zeros_like(p_local)
    for _ in range(epochs):
        grad = (p_global + p_local) - target
        p_local -= lr * grad
    return p_local, grad


# --- field sizing -----------------------------------------------------------


@dataclass(frozen=True)
class FieldPlan:
    field: PrimeField
    quant: QuantConfig
    coord_bound: float     # bound on any reduced coordinate / gradient entry
    dist_bound: float      # bound on any real squared distance or gap


def plan_field(cfg: RunConfig) -> FieldPlan:
    """Pick modulus and quantization range from configured task bounds.

    The worst degree-2 value is a center gap || |s'| mu_s - |s| mu_{s'}
    ||^2 with entries up to 2 n^2 B, so the modulus honours
    min_modulus(lam, D) for D = r (2 n^2 B)^2.  Exceeding the declared
    bounds fails loudly (RangeExceeded / OverflowDetected), never silently.
    """
    t = cfg.task
    proto_entry = ((t.n_domains - 1) / 2) * t.separation / np.sqrt(cfg.d_total)
    target_entry = proto_entry + 4 * t.local_scale + 4 * t.noise_sigma
    prompt_entry = cfg.init_scale + 2 * target_entry + 0.5
    if cfg.value_bound is not None:
        coord_bound = float(cfg.value_bound)
    else:
        flat_norm = np.sqrt(cfg.d_total) * prompt_entry
        coord_bound = max(flat_norm, prompt_entry + target_entry) * 2.0
    n = cfg.n_users
    dist_bound = cfg.r_reduced * (2 * n * n * coord_bound) ** 2
    if cfg.modulus is not None:
        q = cfg.modulus
        if not is_prime(q) or q % 2 == 0:
            raise BadConfig(f"configured modulus {q} is not an odd prime")
    else:
        q = next_prime(max(10**10, min_modulus(cfg.lam, dist_bound)))
    field = PrimeField(q)
    quant = QuantConfig.from_bound(cfg.lam, coord_bound)
    quant.check_field(field)
    return FieldPlan(field=field, quant=quant, coord_bound=coord_bound,
                     dist_bound=dist_bound)


# --- secure aggregation -----------------------------------------------------


def secure_aggregate(gradients: List[np.ndarray],
                     assignment: cl.ClusterAssignment,
                     params: lcc.LccParams, quant: QuantConfig,
                     rng: np.random.Generator,
                     transcript: Optional[tr.Transcript] = None,
                     round_no: int = 0,
                     dropout: frozenset = frozenset()) -> List[np.ndarray]:
    """Cluster-wise mean of LCC-shared gradients.

    Every user shares its flattened quantized gradient; holders sum shares
    within each cluster; the server reconstructs the linear result at
    degree ell+t-1 and divides by the cluster size.  Individual gradients
    are never reconstructed.
    """
    field = params.field
    shape = gradients[0].shape
    dim = int(np.prod(shape))
    flat = [quantize(np.asarray(g).reshape(-1), quant, field)
            for g in gradients]
    table = lcc.share_all(flat, params, rng)
    if transcript is not None:
        for i in range(len(gradients)):
            for j in range(params.n):
                if j != i:
                    transcript.log(round_no, tr.user(i), tr.user(j),
                                   tr.GRADIENT_SHARE, table.coded[i, :, j])
    survivors = [j for j in range(params.n) if j not in dropout]
    out = []
    n_users = len(gradients)
    sums_by_holder = {}
    for j in survivors:
        view = table.holder_view(j)
        sums = [kernels.summod(view[list(members)], 0, field.q)
                for members in assignment.clusters]
        sums_by_holder[j] = sums
        if transcript is not None:
            transcript.log(round_no, tr.user(j), tr.SERVER, tr.AGGREGATE_SHARE,
                           np.concatenate(sums))
    degree = params.base_degree
    for s_idx, members in enumerate(assignment.clusters):
        bundles = [lcc.ShareBundle(holder=j, coded=sums_by_holder[j][s_idx],
                                   params=params) for j in survivors]
        slices = lcc.recon(bundles, degree=degree, check_extra=False)
        summed = lcc.unslice_vector(slices, -(-dim // params.ell) * params.ell)
        image_bound = quant.eta * n_users
        total = dequantize(summed[:dim], quant, field, degree=1,
                           image_bound=image_bound)
        out.append((total / len(members)).reshape(shape))
        if transcript is not None:
            transcript.log_recon(round_no, "aggregate", degree, len(survivors))
    return out


# --- the runner -------------------------------------------------------------


@dataclass
class RoundMetrics:
    round: int
    losses: List[float]
    mean_loss: float
    n_clusters: int
    assignment: List[List[int]]
    phase_seconds: Dict[str, float]

    def to_json(self) -> dict:
        return {"round": self.round, "mean_loss": self.mean_loss,
                "n_clusters": self.n_clusters, "losses": self.losses,
                "assignment": self.assignment,
                "phase_seconds": self.phase_seconds}


@dataclass
class RunResult:
    config: RunConfig
    state: PromptState
    assignment: cl.ClusterAssignment
    task: SyntheticTask
    metrics: List[RoundMetrics]
    transcript: tr.Transcript
    rounds_run: int

    @property
    def final_mean_loss(self) -> float:
        return self.metrics[-1].mean_loss if self.metrics else float("nan")


class Runner:
    """Drives a full SecFPP run (or its plaintext shadow)."""

    def __init__(self, cfg: RunConfig, secure: bool = True):
        cfg.validate()
        self.cfg = cfg
        self.secure = secure
        streams = seed_streams(cfg.seed)
        self.task = make_task(cfg, streams["task"])
        self.state, self.assignment = init(cfg, streams["init"])
        self.share_rng = streams["share"]
        self.drop_rng = streams["dropout"]
        self.plan = plan_field(cfg)
        self.params = lcc.LccParams.make(
            self.plan.field, n=cfg.n_users, t=cfg.t, ell=cfg.ell)
        if cfg.basis_mode == "global-svd":
            self.basis = basis_from_reference(self.state.globals_[0],
                                              cfg.r_reduced)
        else:
            seed_int = int(streams["basis"].integers(2**31))
            self.basis = make_shared_basis(seed_int, cfg.d_total, cfg.r_reduced)
        self.transcript = tr.Transcript()
        base = self.params.base_degree
        self.transcript.set_policy({"distance": 2 * base,
                                    "center-gap": 2 * base,
                                    "aggregate": base})
        self.metrics: List[RoundMetrics] = []
        self.round_no = 0

    # ------------------------------------------------------------------

    def _sample_dropout(self) -> frozenset:
        # the dropout stream advances in lock-step for secure and shadow runs
        mask = self.drop_rng.random(self.cfg.n_users) < self.cfg.dropout_rate
        dropped = [int(i) for i in np.flatnonzero(mask)]
        min_needed = 2 * self.params.base_degree + 1
        max_drop = self.cfg.n_users - min_needed
        return frozenset(dropped[:max(0, max_drop)])

    def run_round(self) -> RoundMetrics:
        cfg = self.cfg
        t0 = time.perf_counter()
        old_global_of = [self.state.globals_[self.assignment.cluster_of(i)]
                         for i in range(cfg.n_users)]
        new_locals, grads, reduced = [], [], []
        for i in range(cfg.n_users):
            p_local, grad = local_step(old_global_of[i], self.state.locals_[i],
                                       self.task.targets[i], cfg.lr,
                                       cfg.local_epochs)
            new_locals.append(p_local)
            grads.append(grad)
            personalized = old_global_of[i] + p_local
            coords = self.basis.rows @ personalized.reshape(-1)
            reduced.append(coords)
            if self.secure:
                self.transcript.register_private(f"prompt:{i}:{self.round_no}",
                                                 personalized)
                self.transcript.register_private(f"local:{i}:{self.round_no}",
                                                 p_local)
                self.transcript.register_private(f"grad:{i}:{self.round_no}",
                                                 grad)
                self.transcript.register_private(f"reduced:{i}:{self.round_no}",
                                                 coords)
        t1 = time.perf_counter()

        dropout = self._sample_dropout()
        if self.secure:
            coded = [quantize(x, self.plan.quant, self.plan.field)
                     for x in reduced]
            table = lcc.share_all(coded, self.params, self.share_rng)
            for i in range(cfg.n_users):
                for j in range(self.params.n):
                    if j != i:
                        self.transcript.log(self.round_no, tr.user(i),
                                            tr.user(j), tr.PROMPT_SHARE,
                                            table.coded[i, :, j])
            t2 = time.perf_counter()
            res = cl.secpc_round(table, self.assignment, cfg.adaptive,
                                 self.plan.quant, transcript=self.transcript,
                                 round_no=self.round_no, dropout=dropout,
                                 dist_bound=self.plan.dist_bound,
                                 threads=cfg.threads)
            new_assignment = res.assignment
        else:
            t2 = time.perf_counter()
            new_assignment, _, _ = cl.plaintext_oracle(
                np.array(reduced), self.assignment, cfg.adaptive)
        t3 = time.perf_counter()

        self.transcript.log(self.round_no, tr.SERVER, "users",
                            tr.ASSIGNMENT_BROADCAST,
                            json.dumps([list(c) for c in new_assignment.clusters]
                                       ).encode())
        for i in range(cfg.n_users):
            self.transcript.log(self.round_no, tr.user(i), tr.SERVER,
                                tr.ASSIGNMENT_ACK, b"ack")

        if self.secure:
            mean_grads = secure_aggregate(grads, new_assignment, self.params,
                                          self.plan.quant, self.share_rng,
                                          transcript=self.transcript,
                                          round_no=self.round_no,
                                          dropout=dropout)
        else:
            mean_grads = [np.mean([grads[i] for i in members], axis=0)
                          for members in new_assignment.clusters]
        t4 = time.perf_counter()

        new_globals = []
        for members in new_assignment.clusters:
            inherited = np.mean([old_global_of[i] for i in members], axis=0)
            new_globals.append(inherited)
        new_globals = [g - cfg.lr * mg for g, mg in zip(new_globals, mean_grads)]
        for g in new_globals:
            self.transcript.log(self.round_no, tr.SERVER, "users",
                                tr.GLOBAL_BROADCAST, g)

        self.state = PromptState(globals_=tuple(new_globals),
                                 locals_=tuple(new_locals))
        self.assignment = new_assignment
        t5 = time.perf_counter()

        losses = [self.task.loss(i, self.state.personalized(new_assignment, i))
                  for i in range(cfg.n_users)]
        metrics = RoundMetrics(
            round=self.round_no, losses=losses,
            mean_loss=float(np.mean(losses)),
            n_clusters=new_assignment.k,
            assignment=[list(c) for c in new_assignment.clusters],
            phase_seconds={"local": t1 - t0, "share": t2 - t1,
                           "secpc": t3 - t2, "aggregate": t4 - t3,
                           "update": t5 - t4})
        self.metrics.append(metrics)
        self.round_no += 1
        return metrics

    def run(self) -> RunResult:
        for _ in range(self.cfg.rounds):
            m = self.run_round()
            if self.cfg.stop_tol is not None and m.mean_loss < self.cfg.stop_tol:
                break
        return RunResult(config=self.cfg, state=self.state,
                         assignment=self.assignment, task=self.task,
                         metrics=self.metrics, transcript=self.transcript,
                         rounds_run=self.round_no)


def run(cfg: RunConfig, secure: bool = True) -> RunResult:
    return Runner(cfg, secure=secure).run()


# --- audit -------------------------------------------------------------------


@dataclass
class AuditReport:
    passed: bool
    violations: List[dict]
    checked_records: int
    recon_events: int

    def to_json(self) -> dict:
        return {"passed": self.passed, "violations": self.violations,
                "checked_records": self.checked_records,
                "recon_events": self.recon_events}


def audit_transcript(transcript: tr.Transcript) -> AuditReport:
    """Mechanically verify the honest-but-curious disclosure set.

    (a) the server only ever receives coded distance/gap/aggregate shares
        and assignment acks;
    (b) no message payload matches a registered private value, and
        user-to-user traffic carries only coded shares;
    (c) every server reconstruction stayed within the declared degree
        policy with enough shares.
    """
    violations = []
    private = transcript.private_digests
    policy = (transcript.policy or {}).get("max_degree_by_purpose", {})
    recon_events = 0
    for idx, rec in enumerate(transcript.records):
        if rec.kind == tr.RECON_EVENT:
            recon_events += 1
            meta = rec.meta or {}
            purpose = meta.get("purpose")
            degree = meta.get("degree", -1)
            shares = meta.get("shares", -1)
            if purpose not in tr.RECON_PURPOSES:
                violations.append({"index": idx,
                                   "reason": f"unknown recon purpose {purpose!r}"})
                continue
            if policy and degree > policy.get(purpose, -1):
                violations.append({"index": idx, "reason":
                                   f"recon degree {degree} exceeds policy "
                                   f"{policy.get(purpose)} for {purpose}"})
            if shares < degree + 1:
                violations.append({"index": idx, "reason":
                                   f"recon used {shares} shares for degree "
                                   f"{degree}"})
            continue
        if rec.digest and rec.digest in private:
            violations.append({"index": idx, "reason":
                               f"private payload {private[rec.digest]!r} "
                               f"sent from {rec.sender} to {rec.receiver}"})
        if rec.receiver == tr.SERVER and rec.sender != tr.SERVER:
            if rec.kind not in tr.ALLOWED_SERVER_RECEIVE:
                violations.append({"index": idx, "reason":
                                   f"server received disallowed kind "
                                   f"{rec.kind!r} from {rec.sender}"})
        elif rec.sender.startswith("user:") and rec.receiver.startswith("user:"):
            if rec.kind not in tr.ALLOWED_USER_TO_USER:
                violations.append({"index": idx, "reason":
                                   f"user-to-user kind {rec.kind!r} "
                                   f"is not a coded share"})
    return AuditReport(passed=not violations, violations=violations,
                       checked_records=len(transcript.records),
                       recon_events=recon_events)
