import numpy as np
import pytest

from secfpp import bench, lcc


def test_bench_record_validation():
    with pytest.raises(ValueError):
        bench.BenchRecord(n=4, d=8, phase="warmup", wall_time=0.1,
                          bytes_sent=0)
    with pytest.raises(ValueError):
        bench.BenchRecord(n=4, d=8, phase="share", wall_time=-1.0,
                          bytes_sent=0)


def test_expected_user_elements():
    # n=9, d=64, ell=3 -> share (9-1)*ceil(64/3)=176, distance 9*2=18
    got = bench.expected_user_elements(n=9, d=64, ell=3, k=2)
    assert got == {"share": 176, "distance": 18}


def test_bench_point_accounting_matches_transcribed_payloads():
    point = bench.bench_point(n=7, d=20, repeats=1, seed=0)
    ell = lcc.default_ell(7, int(7 / 3))
    share_elems = (7 - 1) * (-(-20 // ell))
    dist_elems = 7 * 2
    assert point.per_user_bytes == (share_elems + dist_elems) * 8
    by_phase = {r.phase: r for r in point.records}
    assert by_phase["share"].bytes_sent == share_elems * 8 * 7
    assert by_phase["distance"].bytes_sent == dist_elems * 8 * 7
    assert all(r.wall_time >= 0 for r in point.records)


def test_fit_scaling_recovers_linear_model():
    rng = np.random.default_rng(0)
    x = np.linspace(10, 1000, 30)
    y = 3.5 * x + 2.0 + rng.normal(0, 1.0, 30)
    fit = bench.fit_scaling(x, y)
    assert fit.coef == pytest.approx(3.5, rel=0.05)
    assert fit.r_squared > 0.99


def test_run_grid_produces_all_phases():
    summary = bench.run_grid([5, 7], [12], repeats=1, seed=2)
    phases = {r.phase for r in summary.records()}
    assert phases == set(bench.PHASES)
    assert len(summary.records()) == 2 * len(bench.PHASES)
    assert 0.0 <= summary.user_fit_nd.r_squared <= 1.0
