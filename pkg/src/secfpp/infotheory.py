"""Information-leakage analysis: what a squared distance reveals about a
reduced prompt.

For standardized Gaussian prompt vectors, the squared distance between a
prompt and its cluster center is (a scaled) chi-square, and conditioned
on the prompt it is noncentral chi-square.  The leakage
MI(prompt; distance^2) = h(D^2) - h(D^2 | prompt) therefore needs

* the closed-form chi-square differential entropy,
* the expected logarithm of a noncentral chi-square, which is
  ln 2 + g_{d/2}(tau/2) for even dimension and ln 2 + h_d(tau/2) for odd
  dimension, where g/h are alternating special-function families built
  from the exponential integral, erfi, and 2F2(1,1;3/2,2;-xi),
* the actual differential entropy of the noncentral chi-square (numeric
  quadrature) -- the expected-log and entropy readings are both computed
  and reported, since they differ and each is meaningful,
* the KSG k-nearest-neighbour MI estimator for empirical cross-checks.

Everything is in nats.  The g/h families are evaluated from their
alternating closed forms; when those forms would lose precision (small
xi, or xi far below the index), evaluation falls back to the exact
Poisson-mixture identity

    E[ln ncx2(d, 2 xi)] = ln 2 + E_{K ~ Poisson(xi)}[psi(d/2 + K)],

which is stable everywhere.
"""

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Tuple

import numpy as np
from scipy import integrate, spatial, special, stats

from .errors import (DomainError, InsufficientSamples, PrecisionLoss)

EULER_GAMMA = float(np.euler_gamma)
LN2 = math.log(2.0)

_MAX_SERIES_TERMS = 10_000
# relative cancellation beyond which float64 cannot reach 1e-10
_AMPLIFICATION_LIMIT = 1e5


# --- special functions -------------------------------------------------------


def digamma(x):
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0) and np.any(x == np.floor(x)):
        raise DomainError("digamma undefined at non-positive integers")
    return special.digamma(x) if x.shape else float(special.digamma(x))


def log_gamma(x):
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0):
        raise DomainError("log_gamma requires positive arguments")
    return special.gammaln(x) if x.shape else float(special.gammaln(x))


def exp_integral_ei(x: float) -> float:
    """Ei(x); for x < 0 this equals -E1(-x)."""
    if x == 0:
        raise DomainError("Ei has a logarithmic singularity at 0")
    return float(special.expi(x))


def erfi(x: float) -> float:
    """Imaginary error function erf(ix)/i."""
    return float(special.erfi(x))


def _hyp2f2_terms_float(a1, a2, b1, b2, x):
    """Ascending series terms; returns (terms, converged)."""
    terms = [1.0]
    t = 1.0
    for k in range(_MAX_SERIES_TERMS):
        t *= (a1 + k) * (a2 + k) * x / ((b1 + k) * (b2 + k) * (k + 1))
        terms.append(t)
        if not math.isfinite(t):
            return terms, False
        if abs(t) < 1e-18 * max(1.0, abs(math.fsum(terms))) and k > abs(x):
            return terms, True
    return terms, False


def _hyp2f2_fraction(a1, a2, b1, b2, x) -> float:
    """Exact-rational ascending series; every operand is a rational, so
    the only error is the (tracked) truncation tail."""
    fa1, fa2 = Fraction(a1), Fraction(a2)
    fb1, fb2 = Fraction(b1), Fraction(b2)
    fx = Fraction(x)
    t = Fraction(1)
    total = Fraction(1)
    for k in range(_MAX_SERIES_TERMS):
        t *= (fa1 + k) * (fa2 + k) * fx
        t /= (fb1 + k) * (fb2 + k) * (k + 1)
        total += t
        if abs(t) < Fraction(1, 10**25) * max(Fraction(1), abs(total)) \
                and k > abs(x):
            return float(total)
    raise PrecisionLoss("2F2 rational series did not converge in budget")


def hyp2f2(a1: float, a2: float, b1: float, b2: float, x: float,
           rtol: float = 1e-10) -> float:
    """Generalized hypergeometric 2F2 by ascending series.

    Compensated float summation first; if alternating cancellation would
    exceed ``rtol``, the series is re-summed in exact rational arithmetic
    (|x| <= 40), else :class:`PrecisionLoss` is raised.
    """
    for b in (b1, b2):
        if b <= 0 and b == math.floor(b):
            raise DomainError(f"2F2 pole at denominator parameter {b}")
    terms, converged = _hyp2f2_terms_float(a1, a2, b1, b2, x)
    if converged:
        total = math.fsum(terms)
        worst = max(abs(t) for t in terms)
        if worst * 1.1e-16 <= rtol * max(abs(total), 1e-300):
            return total
    if abs(x) <= 40:
        return _hyp2f2_fraction(a1, a2, b1, b2, x)
    raise PrecisionLoss(
        f"2F2 series loses precision at x={x}; no exact path beyond |x|=40")


def _hyp2f2_11_32_2(xi: float) -> float:
    """2F2(1, 1; 3/2, 2; -xi) for xi >= 0.

    Ascending series up to xi = 30; beyond that the series cancellation
    is hopeless in any practical precision, so the value comes from the
    exact Poisson-mixture identity for E[ln ncx2(1, 2 xi)]:
    2 xi 2F2(...; -xi) = E_K[psi(1/2 + K)] + gamma + 2 ln 2.
    """
    if xi < 0:
        raise DomainError("xi must be non-negative")
    if xi == 0:
        return 1.0
    if xi <= 30:
        return hyp2f2(1.0, 1.0, 1.5, 2.0, -xi)
    mix = _digamma_poisson_mixture(0.5, xi)
    return (mix + EULER_GAMMA + 2 * LN2) / (2 * xi)


def _digamma_poisson_mixture(a: float, xi: float) -> float:
    """E_{K ~ Poisson(xi)}[psi(a + K)], the stable identity path."""
    if xi == 0:
        return float(special.digamma(a))
    sd = math.sqrt(xi)
    lo = max(0, int(math.floor(xi - 12 * sd)) - 5)
    hi = int(math.ceil(xi + 12 * sd)) + 25
    k = np.arange(lo, hi + 1)
    logw = k * math.log(xi) - xi - special.gammaln(k + 1)
    w = np.exp(logw)
    return float(np.sum(w * special.digamma(a + k)))


def _g_direct(m: int, xi: float) -> Tuple[float, float]:
    """Alternating closed form for g_m; returns (value, worst_term)."""
    terms = [math.log(xi) - float(special.expi(-xi))]
    a = math.exp(-xi) / xi          # e^{-xi} (j-1)! xi^{-j} at j=1
    p = (m - 1) / xi                # (m-1)!/(m-1-j)! xi^{-j} at j=1
    worst = abs(terms[0])
    sign = -1.0
    for j in range(1, m):
        term = sign * (a - p / j)
        terms.append(term)
        worst = max(worst, abs(a), abs(p / j))
        if not (math.isfinite(a) and math.isfinite(p)):
            return math.nan, math.inf
        a *= j / xi
        p *= (m - 1 - j) / xi
        sign = -sign
    return math.fsum(terms), worst


def _plausible_magnitude(a: float, xi: float) -> float:
    # the families are E_K[psi(a + K)], K ~ Poisson(xi): monotone in xi and
    # sandwiched between psi(a) and roughly psi(a) + log(1 + xi/a)
    return abs(float(special.digamma(a))) + math.log1p(xi) + 5.0


def g_family(m: int, xi: float) -> float:
    """g_m(xi): psi(m) at xi=0, else the exponential-integral form.

    Equals E[ln ncx2(2m, 2 xi)] - ln 2.  Falls back to the Poisson
    mixture when the alternating form cannot hold 1e-10.
    """
    if m < 1 or m != int(m):
        raise DomainError(f"m must be a positive integer, got {m}")
    if xi < 0:
        raise DomainError(f"xi must be non-negative, got {xi}")
    m = int(m)
    if xi == 0:
        return float(special.digamma(m))
    value, worst = _g_direct(m, xi)
    if math.isfinite(value) \
            and worst * 1.1e-16 <= 3e-12 * _plausible_magnitude(m, xi):
        return value
    return _digamma_poisson_mixture(m, xi)


def _h_direct(n: int, xi: float) -> Tuple[float, float]:
    """Alternating closed form for h_n; returns (value, worst_term)."""
    try:
        return _h_direct_unguarded(n, xi)
    except OverflowError:
        return math.nan, math.inf


def _h_direct_unguarded(n: int, xi: float) -> Tuple[float, float]:
    sq = math.sqrt(xi)
    base = sq * math.exp(-xi) * float(special.erfi(sq))
    terms = [-EULER_GAMMA - 2 * LN2 + 2 * xi * _hyp2f2_11_32_2(xi)]
    worst = abs(terms[0])
    inner = base
    inner_worst = abs(base)         # cancellation inside the erfi series
    xi_pow = 1.0 / xi               # xi^{-j} at j=1
    inner_pow = 1.0                 # xi^{i} at i=0
    sign_outer = 1.0
    for j in range(1, (n - 1) // 2 + 1):
        gamma_j = math.gamma(j - 0.5)
        term = sign_outer * gamma_j * inner * xi_pow
        terms.append(term)
        worst = max(worst, gamma_j * inner_worst * xi_pow)
        if not math.isfinite(term):
            return math.nan, math.inf
        # extend the inner sum for the next j: add i = j term
        inner_pow *= xi
        delta = inner_pow / math.gamma(j + 0.5)
        inner += ((-1.0) ** j) * delta
        inner_worst = max(inner_worst, delta)
        xi_pow /= xi
        sign_outer = -sign_outer
    return math.fsum(terms), worst


def h_family(n: int, xi: float) -> float:
    """h_n(xi) for odd n: psi(n/2) at xi=0, else the erfi/2F2 form.

    Equals E[ln ncx2(n, 2 xi)] - ln 2.  Falls back to the Poisson
    mixture when the alternating form cannot hold 1e-10.
    """
    if n < 1 or n % 2 == 0:
        raise DomainError(f"n must be a positive odd integer, got {n}")
    if xi < 0:
        raise DomainError(f"xi must be non-negative, got {xi}")
    if xi == 0:
        return float(special.digamma(n / 2))
    value, worst = _h_direct(n, xi)
    if math.isfinite(value) \
            and worst * 1.1e-16 <= 3e-12 * _plausible_magnitude(n / 2, xi):
        return value
    return _digamma_poisson_mixture(n / 2, xi)


def expected_log_ncx2(d: int, tau: float) -> float:
    """E[ln X] for X ~ noncentral chi-square(d, tau)."""
    if d < 1 or d != int(d):
        raise DomainError(f"d must be a positive integer, got {d}")
    if tau < 0:
        raise DomainError(f"tau must be non-negative, got {tau}")
    d = int(d)
    if d % 2 == 0:
        return LN2 + g_family(d // 2, tau / 2)
    return LN2 + h_family(d, tau / 2)


def chi2_entropy(d: int) -> float:
    """Differential entropy (nats) of a central chi-square with d dof:
    ln(2 Gamma(d/2)) + (1 - d/2) psi(d/2) + d/2."""
    if d < 1 or d != int(d):
        raise DomainError(f"d must be a positive integer, got {d}")
    half = d / 2
    return (LN2 + float(special.gammaln(half))
            + (1 - half) * float(special.digamma(half)) + half)


def ncx2_entropy(d: int, nc: float, tol: float = 1e-10) -> float:
    """Differential entropy of a noncentral chi-square by quadrature."""
    if nc < 0:
        raise DomainError(f"noncentrality must be non-negative, got {nc}")
    if nc < 1e-8:
        # scipy's ncx2 log-density degenerates for vanishing noncentrality;
        # the entropy is continuous there
        return chi2_entropy(d)
    dist = stats.ncx2(d, nc)

    def integrand(x):
        logf = dist.logpdf(x)
        ok = np.isfinite(logf) & (logf > -700)
        return np.where(ok, -np.exp(np.where(ok, logf, 0.0))
                        * np.where(ok, logf, 0.0), 0.0)

    lo = float(dist.ppf(1e-14))
    hi = float(dist.isf(1e-14))
    mid = float(dist.median())
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        left, _ = integrate.quad(integrand, 0.0 if d <= 2 else lo, mid,
                                 limit=300, epsabs=tol, epsrel=1e-9)
        right, _ = integrate.quad(integrand, mid, hi, limit=300,
                                  epsabs=tol, epsrel=1e-9)
    return left + right


# --- Theorem-style MI between a prompt and its squared distance --------------


@dataclass(frozen=True)
class MiExperimentConfig:
    """Setup for the leakage analysis of one (d, n) point.

    Cluster prompts are standardized i.i.d. N(0,1)^d vectors; the probed
    prompt is N(mu, sigma^2)^d, inside the cluster (one of its n members)
    or outside it.
    """

    d: int
    n: int
    sample_count: int = 10_000
    k_neighbors: int = 4
    mu: float = 0.0
    sigma: float = 1.0
    inside_cluster: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.d < 1 or self.n < 2:
            raise DomainError("need d >= 1 and n >= 2")
        if self.sample_count < 1000:
            raise InsufficientSamples(
                f"sample_count must be >= 1000, got {self.sample_count}")
        if self.k_neighbors < 1:
            raise DomainError("k_neighbors must be >= 1")
        if self.sigma <= 0:
            raise DomainError("sigma must be positive")
        if self.inside_cluster and (self.mu != 0.0 or self.sigma != 1.0):
            raise DomainError(
                "inside-cluster analysis assumes standardized prompts")


@dataclass(frozen=True)
class Theorem1Result:
    """Both readings of MI(prompt; D^2), in nats.

    ``mi_expected_log`` treats the per-condition expected log of the
    noncentral chi-square as the conditional entropy term (the closed-form
    reading); ``mi_entropy`` uses true differential entropies with exact
    variance bookkeeping and is the estimator-comparable value.
    """

    mi_expected_log: float
    mi_entropy: float
    marginal_expected_log: float
    marginal_entropy: float
    conditional_expected_log: float
    conditional_entropy: float
    stderr_expected_log: float
    stderr_entropy: float


def _entropy_interpolator(d: int, nc_values: np.ndarray):
    """ncx2 entropy as a smooth function of noncentrality, via quadrature
    on quantile nodes + monotone cubic interpolation."""
    from scipy.interpolate import PchipInterpolator
    nc_max = float(np.max(nc_values))
    nc_min = float(np.min(nc_values))
    nodes = np.unique(np.concatenate([
        np.linspace(nc_min, nc_max, 40),
        np.geomspace(max(nc_min, 1e-3), max(nc_max, 1e-2), 24),
    ]))
    vals = np.array([ncx2_entropy(d, float(nc)) for nc in nodes])
    interp = PchipInterpolator(nodes, vals)
    return lambda nc: interp(np.clip(nc, nodes[0], nodes[-1]))


def theorem1_mi(cfg: MiExperimentConfig) -> Theorem1Result:
    """Leakage MI(prompt; D^2) for Gaussian prompts, both readings.

    The conditional term is a Monte-Carlo expectation over the prompt of
    the per-condition value: noncentrality tau = ||p||^2 (scaled by the
    conditional variance in the entropy reading).  The inside-cluster case
    carries the isolation constant c = 2 ln((n-1)/n); as n grows, c -> 0
    and the conditional term approaches the unconditioned noncentral
    expression.
    """
    rng = np.random.default_rng(cfg.seed)
    d, n = cfg.d, cfg.n
    fam = (lambda tau: g_family(d // 2, tau / 2)) if d % 2 == 0 \
        else (lambda tau: h_family(d, tau / 2))
    p = cfg.mu + cfg.sigma * rng.standard_normal((cfg.sample_count, d))
    norm2 = np.sum(p * p, axis=1)

    if cfg.inside_cluster:
        c = 2 * math.log((n - 1) / n)
        marginal_el = chi2_entropy(d)
        cond_samples_el = np.array([LN2 + fam(t) for t in norm2]) + c
        # exact: D^2 | p = ((n-1)/n^2) ncx2(d, (n-1)||p||^2)
        marginal_h = chi2_entropy(d) + math.log((n - 1) / n)
        nc = (n - 1) * norm2
        h_of = _entropy_interpolator(d, nc)
        cond_samples_h = h_of(nc) + math.log((n - 1) / (n * n))
    else:
        var = cfg.sigma**2 + 1.0 / n
        tau_m = d * cfg.mu**2
        marginal_el = LN2 + fam(tau_m)
        cond_samples_el = np.array([LN2 + fam(t) for t in norm2])
        marginal_h = ncx2_entropy(d, tau_m / var) + math.log(var)
        nc = n * norm2
        h_of = _entropy_interpolator(d, nc)
        cond_samples_h = h_of(nc) - math.log(n)

    cond_el = float(np.mean(cond_samples_el))
    cond_h = float(np.mean(cond_samples_h))
    se_el = float(np.std(cond_samples_el) / math.sqrt(cfg.sample_count))
    se_h = float(np.std(cond_samples_h) / math.sqrt(cfg.sample_count))
    return Theorem1Result(
        mi_expected_log=marginal_el - cond_el,
        mi_entropy=marginal_h - cond_h,
        marginal_expected_log=marginal_el,
        marginal_entropy=marginal_h,
        conditional_expected_log=cond_el,
        conditional_entropy=cond_h,
        stderr_expected_log=se_el,
        stderr_entropy=se_h)


# --- KSG estimator ------------------------------------------------------------


class EstimateSaturationWarning(UserWarning):
    """The estimate is pinned near its k-NN ceiling (degenerate inputs)."""


def ksg_mi(samples_x: np.ndarray, samples_y: np.ndarray,
           k_neighbors: int = 4,
           rng: Optional[np.random.Generator] = None) -> float:
    """KSG mutual-information estimator (variant 1), in nats.

    psi(k) + psi(N) - mean[psi(n_x + 1) + psi(n_y + 1)] with max-norm
    neighborhoods; n_x / n_y count points strictly inside the k-th
    joint-neighbor distance.  Duplicate points are jittered at 1e-10
    relative scale.
    """
    x = np.atleast_2d(np.asarray(samples_x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(samples_y, dtype=np.float64))
    if x.shape[0] == 1:
        x = x.T
    if y.shape[0] == 1:
        y = y.T
    n = x.shape[0]
    if y.shape[0] != n:
        raise InsufficientSamples("x and y must have equal sample counts")
    if n < 100:
        raise InsufficientSamples(f"need >= 100 samples, got {n}")
    if k_neighbors >= n:
        raise InsufficientSamples("k_neighbors must be < sample count")

    joint = np.concatenate([x, y], axis=1)
    if np.unique(joint, axis=0).shape[0] < n:
        if rng is None:
            rng = np.random.default_rng(0)
        scale = 1e-10 * max(1.0, float(np.max(np.abs(joint))))
        x = x + scale * rng.standard_normal(x.shape)
        y = y + scale * rng.standard_normal(y.shape)
        joint = np.concatenate([x, y], axis=1)

    tree_joint = spatial.cKDTree(joint)
    dist, _ = tree_joint.query(joint, k=k_neighbors + 1, p=np.inf, workers=-1)
    eps = dist[:, -1]
    tree_x = spatial.cKDTree(x)
    tree_y = spatial.cKDTree(y)
    # strictly-inside counts exclude the point itself
    shrunk = np.nextafter(eps, 0.0)
    n_x = np.array(tree_x.query_ball_point(x, shrunk, p=np.inf,
                                           workers=-1, return_length=True)) - 1
    n_y = np.array(tree_y.query_ball_point(y, shrunk, p=np.inf,
                                           workers=-1, return_length=True)) - 1
    psi = special.digamma
    est = float(psi(k_neighbors) + psi(n)
                - np.mean(psi(n_x + 1) + psi(n_y + 1)))
    ceiling = float(psi(n) - psi(k_neighbors))
    if ceiling > 0 and est > 0.9 * ceiling:
        warnings.warn(
            "KSG estimate is near its ceiling psi(N) - psi(k); inputs look "
            "deterministic copies (true MI unbounded)",
            EstimateSaturationWarning)
    return est


def gaussian_entropy(d: int, sigma: float = 1.0) -> float:
    """Differential entropy of N(mu, sigma^2 I_d), in nats."""
    return 0.5 * d * math.log(2 * math.pi * math.e * sigma**2)


# --- figure-style experiment grid ---------------------------------------------


def _standardize_columns(a: np.ndarray) -> np.ndarray:
    sd = np.std(a, axis=0)
    sd[sd == 0] = 1.0
    return (a - np.mean(a, axis=0)) / sd


def _ksg_with_stderr(x, y, k, folds: int = 4):
    full = ksg_mi(x, y, k)
    if folds < 2:
        return full, 0.0
    n = x.shape[0]
    idx = np.arange(n)
    vals = []
    for f in range(folds):
        part = idx[f::folds]
        if part.shape[0] >= 100:
            vals.append(ksg_mi(x[part], y[part], k))
    stderr = float(np.std(vals) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return full, stderr


def figure3_experiment(n_values, d_values, sample_count: int = 1000,
                       k_neighbors: int = 4, seed: int = 0,
                       include_closed_forms: bool = True,
                       stderr_folds: int = 4) -> list:
    """Leakage comparison grid: for every (n, d), estimate the prompt's
    self-entropy, MI with the cluster center (inside and outside), and MI
    with the replicated squared distance.  Returns long-format rows
    (n, d, quantity, estimate, stderr)."""
    rows = []
    for n in n_values:
        for d in d_values:
            rng = np.random.default_rng(
                np.random.SeedSequence((seed, int(n), int(d))))
            x = rng.standard_normal((sample_count, d))
            others = rng.standard_normal((sample_count, d)) * math.sqrt(n - 1)
            avg_in = (x + others) / n
            avg_out = rng.standard_normal((sample_count, d)) / math.sqrt(n)
            d2 = np.sum((x - avg_in) ** 2, axis=1)
            d2_vec = np.repeat(d2[:, None], d, axis=1)

            def emit(quantity, estimate, stderr):
                rows.append({"n": int(n), "d": int(d), "quantity": quantity,
                             "estimate": float(estimate),
                             "stderr": float(stderr)})

            emit("self_entropy", gaussian_entropy(d), 0.0)
            mi_in, se_in = _ksg_with_stderr(
                _standardize_columns(x), _standardize_columns(avg_in),
                k_neighbors, stderr_folds)
            emit("mi_center_inside", mi_in, se_in)
            mi_out, se_out = _ksg_with_stderr(
                _standardize_columns(x), _standardize_columns(avg_out),
                k_neighbors, stderr_folds)
            emit("mi_center_outside", mi_out, se_out)
            mi_d2, se_d2 = _ksg_with_stderr(
                _standardize_columns(x), _standardize_columns(d2_vec),
                k_neighbors, stderr_folds)
            emit("mi_distance", mi_d2, se_d2)
            if include_closed_forms:
                res = theorem1_mi(MiExperimentConfig(
                    d=int(d), n=int(n), sample_count=4000,
                    seed=int(rng.integers(2**31))))
                emit("mi_distance_expected_log_form", res.mi_expected_log,
                     res.stderr_expected_log)
                emit("mi_distance_entropy_form", res.mi_entropy,
                     res.stderr_entropy)
    return rows


def rows_to_csv(rows, path):
    import csv
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["n", "d", "quantity",
                                                "estimate", "stderr"])
        writer.writeheader()
        for row in rows:
            writer.writerow({**row,
                             "estimate": f"{row['estimate']:.10g}",
                             "stderr": f"{row['stderr']:.10g}"})
