import numpy as np
import pytest
from scipy import stats

from secfpp import lcc
from secfpp.errors import (BadParams, DecodingFailure, DegreeMismatch,
                           InsufficientShares)
from secfpp.field import PrimeField

F97 = PrimeField(97)
F_BIG = PrimeField(10_000_000_019)


def _params(field, n, t, ell, deg_cap=2):
    return lcc.LccParams.make(field, n=n, t=t, ell=ell, deg_cap=deg_cap)


def test_t_zero_shares_equal_secret():
    # degenerate no-privacy case: constant polynomial
    p = lcc.LccParams.make(F97, n=3, t=0, ell=1, deg_cap=1)
    rng = np.random.default_rng(0)
    bundles = lcc.share([np.array([5], dtype=np.uint64)], p, rng)
    assert all(b.coded.tolist() == [5] for b in bundles)


def test_two_of_three_reconstruct():
    p = _params(F97, n=3, t=1, ell=1, deg_cap=1)
    rng = np.random.default_rng(42)
    bundles = lcc.share([np.array([5], dtype=np.uint64)], p, rng)
    for pair in ([0, 1], [0, 2], [1, 2]):
        got = lcc.recon([bundles[i] for i in pair], degree=p.base_degree)
        assert got[0].tolist() == [5]


def test_roundtrip_random_secrets():
    rng = np.random.default_rng(1)
    p = _params(F_BIG, n=9, t=2, ell=2)
    for _ in range(100):
        secrets = [F_BIG.random_elements(rng, 5) for _ in range(p.ell)]
        bundles = lcc.share(secrets, p, rng)
        got = lcc.recon(bundles, degree=p.base_degree)
        for s, g in zip(secrets, got):
            assert np.array_equal(s, g)


def test_share_squaring_decodes_plaintext_square():
    # each holder squares its share of secret 3; recon at degree
    # 2*(ell+t-1) = 2 gives 9
    p = _params(F97, n=5, t=1, ell=1)
    rng = np.random.default_rng(3)
    bundles = lcc.share([np.array([3], dtype=np.uint64)], p, rng)
    squared = [
        lcc.ShareBundle(b.holder, np.array([F97.mul(int(b.coded[0]),
                                                     int(b.coded[0]))],
                                           dtype=np.uint64), p)
        for b in bundles
    ]
    got = lcc.recon(squared, degree=p.result_degree(2))
    assert got[0].tolist() == [9]


def test_erasure_tolerance():
    rng = np.random.default_rng(4)
    p = _params(F_BIG, n=11, t=2, ell=2)
    secrets = [F_BIG.random_elements(rng, 4) for _ in range(p.ell)]
    bundles = lcc.share(secrets, p, rng)
    d = p.base_degree
    keep = bundles[: d + 1]  # n - (d+1) holders dropped
    got = lcc.recon(keep, degree=d)
    for s, g in zip(secrets, got):
        assert np.array_equal(s, g)


def test_insufficient_shares():
    rng = np.random.default_rng(5)
    p = _params(F97, n=7, t=1, ell=2)
    bundles = lcc.share([np.array([1]), np.array([2])], p, rng)
    with pytest.raises(InsufficientShares):
        lcc.recon(bundles[: p.base_degree], degree=p.base_degree)


def test_degree_mismatch_on_corrupt_extra():
    rng = np.random.default_rng(6)
    p = _params(F97, n=7, t=1, ell=2)
    bundles = lcc.share([np.array([1]), np.array([2])], p, rng)
    bad = lcc.ShareBundle(6, (bundles[6].coded + 1) % 97, p)
    with pytest.raises(DegreeMismatch):
        lcc.recon(bundles[:6] + [bad], degree=p.base_degree)


def test_linearity_of_sharewise_sums():
    rng = np.random.default_rng(7)
    p = _params(F_BIG, n=9, t=2, ell=2)
    all_secrets, all_bundles = [], []
    for _ in range(4):
        secrets = [F_BIG.random_elements(rng, 3) for _ in range(p.ell)]
        all_secrets.append(secrets)
        all_bundles.append(lcc.share(secrets, p, rng))
    q = np.uint64(F_BIG.q)
    summed = [
        lcc.ShareBundle(j, sum(b[j].coded % q for b in all_bundles) % q, p)
        for j in range(p.n)
    ]
    got = lcc.recon(summed, degree=p.base_degree)
    for k in range(p.ell):
        want = sum(s[k] % q for s in all_secrets) % q
        assert np.array_equal(got[k], want)


def test_robust_equals_plain_when_clean():
    rng = np.random.default_rng(8)
    p = _params(F97, n=9, t=1, ell=2)
    secrets = [F97.random_elements(rng, 3) for _ in range(p.ell)]
    bundles = lcc.share(secrets, p, rng)
    d = p.base_degree
    plain = lcc.recon(bundles, degree=d)
    robust = lcc.recon_robust(bundles, degree=d)
    assert robust.bad_holders == frozenset()
    for a, b in zip(plain, robust.values):
        assert np.array_equal(a, b)


def test_robust_corrects_one_error_and_identifies_holder():
    rng = np.random.default_rng(9)
    p = _params(F_BIG, n=9, t=2, ell=2)
    secrets = [F_BIG.random_elements(rng, 3) for _ in range(p.ell)]
    bundles = lcc.share(secrets, p, rng)
    d = p.base_degree  # use m = d+3 shares -> budget e=1
    subset = bundles[: d + 3]
    corrupted = lcc.ShareBundle(
        subset[2].holder, (subset[2].coded + np.uint64(1)) % np.uint64(F_BIG.q), p)
    shares = [corrupted if i == 2 else b for i, b in enumerate(subset)]
    clean = lcc.recon(bundles, degree=d)
    res = lcc.recon_robust(shares, degree=d)
    assert res.bad_holders == frozenset({subset[2].holder})
    for a, b in zip(clean, res.values):
        assert np.array_equal(a, b)


def test_robust_fails_beyond_error_budget():
    rng = np.random.default_rng(10)
    p = _params(F97, n=9, t=1, ell=2)
    secrets = [F97.random_elements(rng, 2) for _ in range(p.ell)]
    bundles = lcc.share(secrets, p, rng)
    d = p.base_degree
    subset = bundles[: d + 2]  # budget 0: any error must fail
    bad = lcc.ShareBundle(subset[0].holder,
                          (subset[0].coded + np.uint64(3)) % np.uint64(97), p)
    shares = [bad] + subset[1:]
    with pytest.raises((DecodingFailure, DegreeMismatch)):
        res = lcc.recon_robust(shares, degree=d)
        # decoding may "succeed" onto a wrong codeword only if it matches
        # all shares; make sure it did not silently return garbage
        for s, g in zip(secrets, res.values):
            if not np.array_equal(s, g):
                raise DecodingFailure("wrong codeword")


def test_slice_and_unslice():
    v6 = np.arange(6, dtype=np.uint64)
    s = lcc.slice_vector(v6, 2)
    assert [x.tolist() for x in s] == [[0, 1, 2], [3, 4, 5]]
    v5 = np.arange(5, dtype=np.uint64)
    s = lcc.slice_vector(v5, 2)
    assert [x.tolist() for x in s] == [[0, 1, 2], [3, 4, 0]]
    rng = np.random.default_rng(11)
    for _ in range(20):
        dim = int(rng.integers(1, 40))
        ell = int(rng.integers(1, 6))
        v = rng.integers(0, 1000, dim).astype(np.uint64)
        assert np.array_equal(lcc.unslice_vector(lcc.slice_vector(v, ell), dim), v)


def test_bad_params_rejected():
    with pytest.raises(BadParams):
        lcc.LccParams(field=F97, n=3, t=1, ell=1,
                      interp_points=(1, 2), eval_points=(2, 3, 4))  # collision
    with pytest.raises(BadParams):
        _params(F97, n=4, t=2, ell=2)  # 2*(2+2-1)+1 = 7 > 4


def test_default_ell_respects_degree_cap():
    assert lcc.default_ell(31, 5, 2) == 11
    assert lcc.default_ell(30, 5, 2) == 10
    assert lcc.default_ell(4, 2, 2) == 1
    p = _params(F97, n=31, t=5, ell=lcc.default_ell(31, 5))
    assert 2 * (p.ell + p.t - 1) + 1 <= p.n
    # the throughput-oriented value is larger and only degree-1 safe
    assert lcc.paper_ell(31, 5) == 13
    lcc.LccParams.make(F97, n=31, t=5, ell=lcc.paper_ell(31, 5), deg_cap=1)


def test_t_collusion_uniformity():
    # fixed secrets; the joint distribution of any t shares is uniform.
    # chi-square over the t-dimensional value histogram at significance 0.01.
    q = 17
    f = PrimeField(q)
    p = lcc.LccParams.make(f, n=5, t=2, ell=1, deg_cap=1)
    rng = np.random.default_rng(12)
    trials = 40_000
    secret = np.full(trials, 9, dtype=np.uint64)  # batch trials as coordinates
    bundles = lcc.share([secret], p, rng)
    colluders = (1, 3)
    joint = bundles[colluders[0]].coded.astype(np.int64) * q \
        + bundles[colluders[1]].coded.astype(np.int64)
    counts = np.bincount(joint, minlength=q * q)
    chi2 = stats.chisquare(counts)
    assert chi2.pvalue > 0.01
    # resampling the secret leaves the observed-share distribution unchanged
    secret2 = np.full(trials, 3, dtype=np.uint64)
    bundles2 = lcc.share([secret2], p, rng)
    joint2 = bundles2[colluders[0]].coded.astype(np.int64) * q \
        + bundles2[colluders[1]].coded.astype(np.int64)
    counts2 = np.bincount(joint2, minlength=q * q)
    two_sample = stats.chisquare(counts2, f_exp=counts.sum() / (q * q))
    assert two_sample.pvalue > 0.01


def test_share_table_roundtrip():
    rng = np.random.default_rng(13)
    p = _params(F_BIG, n=9, t=2, ell=2)
    vecs = [F_BIG.random_elements(rng, 7) for _ in range(4)]
    table = lcc.share_all(vecs, p, rng)
    assert table.n_owners == 4
    for i, v in enumerate(vecs):
        bundles = [table.bundle(i, j) for j in range(p.n)]
        slices = lcc.recon(bundles, degree=p.base_degree)
        assert np.array_equal(lcc.unslice_vector(slices, 7), v)
