"""Reduced self-check suites for `secfpp selftest`.

Each suite re-runs the core oracle-equivalence and special-function checks
at small sizes with fixed seeds, printing one pass/fail line per suite.
Deterministic: identical runs produce identical report bytes.
"""

import io
import math

import numpy as np

from . import cluster as cl
from . import infotheory as it
from . import lcc, protocol
from .field import PrimeField, QuantConfig, dequantize, next_prime, quantize


def _suite_field():
    f = PrimeField(4000037)
    cfg = QuantConfig(lam=100, eta=501.0)
    assert quantize([0.5], cfg, f).tolist() == [50]
    assert dequantize([f.mul(500, 500)], cfg, f, degree=2).tolist() == [25.0]
    rng = np.random.default_rng(0)
    big = PrimeField(next_prime(10**10))
    qc = QuantConfig.from_bound(1000, 10.0)
    x = rng.uniform(-9, 9, 200)
    back = dequantize(quantize(x, qc, big), qc, big)
    assert np.max(np.abs(back - x)) <= 1e-3 + 1e-12


def _suite_lcc():
    f = PrimeField(next_prime(10**10))
    p = lcc.LccParams.make(f, n=9, t=2, ell=2)
    rng = np.random.default_rng(1)
    for _ in range(20):
        secrets = [f.random_elements(rng, 4) for _ in range(p.ell)]
        bundles = lcc.share(secrets, p, rng)
        got = lcc.recon(bundles[: p.base_degree + 1], degree=p.base_degree)
        assert all(np.array_equal(s, g) for s, g in zip(secrets, got))
        # one corrupted share, decoded robustly
        bad = lcc.ShareBundle(bundles[0].holder,
                              (bundles[0].coded + np.uint64(5)) % np.uint64(f.q),
                              p)
        res = lcc.recon_robust([bad] + bundles[1:], degree=p.base_degree)
        assert res.bad_holders == frozenset({bundles[0].holder})
        assert all(np.array_equal(s, g) for s, g in zip(secrets, res.values))


def _suite_secpc():
    f = PrimeField(next_prime(2 * 10**12))
    quant = QuantConfig.from_bound(1000, 100.0)
    rng = np.random.default_rng(2)
    for trial in range(20):
        n = int(rng.integers(4, 10))
        dim = int(rng.integers(2, 6))
        vectors = rng.uniform(-4, 4, (n, dim))
        groups = [list(range(0, n, 2)), list(range(1, n, 2))]
        assignment = cl.ClusterAssignment.from_groups(groups)
        cfg = cl.AdaptiveConfig(theta_spawn=50.0, theta_merge=0.01)
        params = lcc.LccParams.make(f, n=max(9, n), t=1)
        table = lcc.share_all([quantize(v, quant, f) for v in vectors],
                              params, rng)
        secure = cl.secpc_round(table, assignment, cfg, quant)
        oracle_s, oracle_d, _ = cl.plaintext_oracle(vectors, assignment, cfg)
        assert secure.assignment == oracle_s
        assert np.allclose(secure.distances.values, oracle_d.values,
                           rtol=1e-2, atol=1e-3)


def _suite_special_functions():
    assert abs(it.digamma(1.0) + it.EULER_GAMMA) < 1e-12
    assert abs(it.g_family(1, 0.0) + it.EULER_GAMMA) < 1e-9
    assert abs(it.h_family(1, 0.0) + it.EULER_GAMMA + 2 * math.log(2)) < 1e-9
    assert abs(it.chi2_entropy(2) - (1 + math.log(2))) < 1e-9
    assert abs(it.exp_integral_ei(-1.0) + 0.21938393439552026) < 1e-8
    assert abs(it.erfi(1.0) - 1.6504257587975428) < 1e-8
    # closed form vs Poisson-mixture identity on a small grid
    for d in (2, 3, 4, 5):
        for tau in (0.5, 2.0, 10.0):
            closed = it.expected_log_ncx2(d, tau)
            mix = math.log(2) + it._digamma_poisson_mixture(d / 2, tau / 2)
            assert abs(closed - mix) < 1e-8


def _suite_ksg():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((1000, 1))
    y = rng.standard_normal((1000, 1))
    assert abs(it.ksg_mi(x, y, 4)) < 0.05
    rho = 0.9
    xy = rng.multivariate_normal([0, 0], [[1, rho], [rho, 1]], size=1000)
    est = it.ksg_mi(xy[:, :1], xy[:, 1:], 4)
    assert abs(est + 0.5 * math.log(1 - rho**2)) < 0.1


def _suite_protocol():
    cfg = protocol.RunConfig(
        seed=99, n_users=8, rounds=4, lr=0.05, local_epochs=10,
        k_tokens=3, d_embed=4, r_reduced=12,
        task=protocol.TaskConfig(n_domains=2, separation=6.0,
                                 local_scale=0.1, noise_sigma=0.02),
        adaptive=cl.AdaptiveConfig(theta_spawn=3.0, theta_merge=2.0))
    result = protocol.run(cfg)
    assert result.assignment == result.task.domain_partition
    report = protocol.audit_transcript(result.transcript)
    assert report.passed


SUITES = (
    ("field-quantization", _suite_field),
    ("lcc-roundtrip-robust", _suite_lcc),
    ("secpc-oracle-equivalence", _suite_secpc),
    ("special-functions", _suite_special_functions),
    ("ksg-calibration", _suite_ksg),
    ("protocol-end-to-end", _suite_protocol),
)


def run_selftest(out=None) -> int:
    """Run every suite; returns 0 if all pass, 1 otherwise."""
    buffer = io.StringIO()
    failures = 0
    for name, fn in SUITES:
        try:
            fn()
        except Exception as exc:
            failures += 1
            buffer.write(f"FAIL {name}: {exc}\n")
        else:
            buffer.write(f"PASS {name}\n")
    buffer.write(f"{len(SUITES) - failures}/{len(SUITES)} suites passed\n")
    text = buffer.getvalue()
    if out is None:
        print(text, end="")
    else:
        out.write(text)
    return 1 if failures else 0
