import json

import numpy as np
import pytest

from secfpp import lcc, protocol, transcript as tr
from secfpp.cluster import AdaptiveConfig, ClusterAssignment
from secfpp.errors import BadConfig
from secfpp.protocol import (RunConfig, Runner, TaskConfig, audit_transcript,
                             init, local_step, make_task, plan_field,
                             secure_aggregate)


def small_config(**kw):
    base = dict(seed=1234, n_users=8, rounds=3, lr=0.05, local_epochs=5,
                k_tokens=3, d_embed=4, r_reduced=4,
                adaptive=AdaptiveConfig(theta_spawn=2.0, theta_merge=0.5),
                task=TaskConfig(n_domains=2, separation=4.0,
                                local_scale=0.2, noise_sigma=0.02))
    base.update(kw)
    return RunConfig(**base)


def test_init_single_cluster_and_zero_locals():
    cfg = small_config(n_users=20)
    state, assignment = init(cfg)
    assert assignment.clusters == (tuple(range(20)),)
    for i in range(20):
        assert np.array_equal(state.personalized(assignment, i),
                              state.globals_[0])


def test_init_deterministic():
    cfg = small_config()
    s1, a1 = init(cfg)
    s2, a2 = init(cfg)
    assert a1 == a2
    assert np.array_equal(s1.globals_[0], s2.globals_[0])


def test_local_step_zero_gradient_at_optimum():
    target = np.full((2, 2), 1.5)
    p_local, grad = local_step(target, np.zeros((2, 2)), target, 0.1, 3)
    assert np.allclose(grad, 0)
    assert np.allclose(p_local, 0)


def test_local_step_scalar_hand_arithmetic():
    # P=0, T=2, lr=0.1, one epoch: local becomes 0.2, returned grad is -2
    p_local, grad = local_step(np.zeros((1, 1)), np.zeros((1, 1)),
                               np.full((1, 1), 2.0), 0.1, 1)
    assert p_local[0, 0] == pytest.approx(0.2)
    assert grad[0, 0] == pytest.approx(-2.0)


def test_local_step_matches_finite_differences():
    rng = np.random.default_rng(0)
    shape = (3, 4)
    p_g = rng.standard_normal(shape)
    p_l = rng.standard_normal(shape)
    target = rng.standard_normal(shape)
    _, grad = local_step(p_g, p_l, target, lr=0.0, epochs=1)
    eps = 1e-6
    loss = lambda p: 0.5 * np.sum((p - target) ** 2)
    for idx in np.ndindex(shape):
        bump = np.zeros(shape)
        bump[idx] = eps
        fd = (loss(p_g + p_l + bump) - loss(p_g + p_l - bump)) / (2 * eps)
        assert grad[idx] == pytest.approx(fd, rel=1e-6)


def _agg_fixture(n_users=7, dim_shape=(2, 3), seed=5):
    cfg = small_config(n_users=n_users)
    plan = plan_field(cfg)
    params = lcc.LccParams.make(plan.field, n=n_users, t=cfg.t)
    rng = np.random.default_rng(seed)
    return cfg, plan, params, rng, dim_shape


def test_secure_aggregate_singleton_matches_gradient():
    cfg, plan, params, rng, shape = _agg_fixture()
    grads = [np.random.default_rng(i).uniform(-2, 2, shape) for i in range(7)]
    groups = [[0], list(range(1, 7))]
    out = secure_aggregate(grads, ClusterAssignment.from_groups(groups),
                           params, plan.quant, rng)
    assert np.max(np.abs(out[0] - grads[0])) <= 1.0 / cfg.lam


def test_secure_aggregate_cancellation():
    cfg, plan, params, rng, shape = _agg_fixture()
    g = np.random.default_rng(9).uniform(-2, 2, shape)
    grads = [g, -g] + [np.zeros(shape)] * 5
    out = secure_aggregate(grads, ClusterAssignment.from_groups(
        [[0, 1], [2, 3, 4, 5, 6]]), params, plan.quant, rng)
    assert np.max(np.abs(out[0])) <= 1.0 / cfg.lam


def test_secure_aggregate_matches_plaintext_mean():
    cfg, plan, params, rng, shape = _agg_fixture()
    rng2 = np.random.default_rng(11)
    grads = [3.0 + rng2.uniform(-2, 2, shape) for _ in range(7)]
    out = secure_aggregate(grads, ClusterAssignment.single(7), params,
                           plan.quant, rng)
    want = np.mean(grads, axis=0)
    # floor quantization error is at most 1/lam per entry, never more
    assert np.max(np.abs(out[0] - want)) <= 1.0 / cfg.lam
    assert np.max(np.abs(out[0] - want)) / np.max(np.abs(want)) < 1e-3


def test_decomposition_identity_every_round():
    runner = Runner(small_config())
    for _ in range(3):
        runner.run_round()
        for i in range(runner.cfg.n_users):
            s = runner.assignment.cluster_of(i)
            p = runner.state.personalized(runner.assignment, i)
            assert np.array_equal(
                p, runner.state.globals_[s] + runner.state.locals_[i])


def test_zero_lr_freezes_dynamics():
    cfg = small_config(lr=0.0, rounds=2)
    runner = Runner(cfg)
    g0 = runner.state.globals_[0].copy()
    runner.run_round()
    assert runner.assignment == ClusterAssignment.single(cfg.n_users)
    assert np.allclose(runner.state.globals_[0], g0, atol=2e-3)
    for l in runner.state.locals_:
        assert np.allclose(l, 0)


def test_single_domain_loss_decreases_to_zero():
    cfg = small_config(
        n_users=6, rounds=60, lr=0.2, local_epochs=2, stop_tol=1e-6,
        task=TaskConfig(n_domains=1, separation=0.0, local_scale=0.3,
                        noise_sigma=0.0),
        adaptive=AdaptiveConfig(theta_spawn=1e6, theta_merge=1e-9))
    result = protocol.run(cfg)
    assert result.assignment.k == 1
    losses = [m.mean_loss for m in result.metrics]
    assert all(b < a for a, b in zip(losses, losses[1:]))
    assert losses[-1] < 1e-6


def test_two_domain_partition_recovery():
    # scales chosen so the trajectory is: single cluster (round 1) ->
    # mass spawn once local components reveal the domains (round ~2) ->
    # within-domain merges collapse to the exact 2-domain partition.
    # r_reduced = d_total keeps distances undistorted by projection.
    cfg = small_config(n_users=10, rounds=20, lr=0.05, local_epochs=10,
                       k_tokens=3, d_embed=4, r_reduced=12,
                       task=TaskConfig(n_domains=2, separation=6.0,
                                       local_scale=0.1, noise_sigma=0.02),
                       adaptive=AdaptiveConfig(theta_spawn=3.0,
                                               theta_merge=2.0))
    result = protocol.run(cfg)
    assert result.assignment == result.task.domain_partition


def test_shadow_run_matches_secure_within_quantization():
    cfg = small_config(rounds=4)
    secure = protocol.run(cfg, secure=True)
    shadow = protocol.run(cfg, secure=False)
    assert secure.assignment == shadow.assignment
    budget = cfg.rounds * cfg.d_total * 2.0 / cfg.lam
    for g_s, g_p in zip(secure.state.globals_, shadow.state.globals_):
        assert np.max(np.abs(g_s - g_p)) <= budget
    for l_s, l_p in zip(secure.state.locals_, shadow.state.locals_):
        assert np.max(np.abs(l_s - l_p)) <= budget


def test_single_cluster_run_is_federated_averaging():
    # with spawning disabled the run degenerates to plain federated
    # averaging of the global prompt; compare against a direct 12-line
    # reference implementation
    cfg = small_config(
        rounds=3, local_epochs=1, lr=0.1,
        task=TaskConfig(n_domains=1, separation=0.0, local_scale=0.0,
                        noise_sigma=0.1),
        adaptive=AdaptiveConfig(theta_spawn=1e6, theta_merge=1e-9))
    result = protocol.run(cfg)
    assert result.assignment.k == 1
    state, _ = init(cfg)
    g = state.globals_[0].copy()
    locals_ = [np.zeros_like(g) for _ in range(cfg.n_users)]
    for _ in range(cfg.rounds):
        grads = []
        for i in range(cfg.n_users):
            locals_[i], grad = local_step(g, locals_[i],
                                          result.task.targets[i],
                                          cfg.lr, cfg.local_epochs)
            grads.append(grad)
        g = g - cfg.lr * np.mean(grads, axis=0)
    assert np.max(np.abs(result.state.globals_[0] - g)) < 0.01


def test_dropout_run_completes_and_audits():
    cfg = small_config(n_users=10, rounds=3, dropout_rate=0.15)
    result = protocol.run(cfg)
    report = audit_transcript(result.transcript)
    assert report.passed, report.violations


def test_audit_nominal_run_passes():
    result = protocol.run(small_config())
    report = audit_transcript(result.transcript)
    assert report.passed, report.violations
    assert report.recon_events > 0


def test_audit_flags_injected_plaintext():
    result = protocol.run(small_config(rounds=1))
    # a user leaks its plaintext personalized prompt to the server
    leaked = result.state.personalized(result.assignment, 0)
    result.transcript.register_private("prompt:leak-check", leaked)
    result.transcript.log(99, tr.user(0), tr.SERVER, tr.DISTANCE_SHARE, leaked)
    report = audit_transcript(result.transcript)
    assert not report.passed
    assert any("private payload" in v["reason"] for v in report.violations)
    idx = [v["index"] for v in report.violations]
    assert idx[0] == len(result.transcript.records) - 1


def test_audit_flags_disallowed_kind():
    result = protocol.run(small_config(rounds=1))
    result.transcript.log(99, tr.user(2), tr.SERVER, "plaintext-prompt",
                          b"oops")
    report = audit_transcript(result.transcript)
    assert not report.passed
    assert any("disallowed kind" in v["reason"] for v in report.violations)


def test_audit_flags_over_degree_recon():
    result = protocol.run(small_config(rounds=1))
    base = lcc.LccParams.make(plan_field(small_config()).field,
                              n=8, t=2).base_degree
    result.transcript.log_recon(99, "distance", degree=10 * base, shares=8)
    report = audit_transcript(result.transcript)
    assert not report.passed


def test_transcript_roundtrip_jsonl(tmp_path):
    result = protocol.run(small_config(rounds=2))
    path = tmp_path / "transcript.jsonl"
    result.transcript.to_jsonl(path)
    loaded = tr.Transcript.from_jsonl(path)
    assert len(loaded.records) == len(result.transcript.records)
    assert loaded.policy is not None
    report = audit_transcript(loaded)
    assert report.passed
    # determinism: same config, same transcript bytes
    result2 = protocol.run(small_config(rounds=2))
    path2 = tmp_path / "transcript2.jsonl"
    result2.transcript.to_jsonl(path2)
    assert path.read_bytes() == path2.read_bytes()


def test_config_validation():
    with pytest.raises(BadConfig):
        RunConfig.from_dict({"seed": 1, "n_users": 1})
    with pytest.raises(BadConfig):
        RunConfig.from_dict({"n_users": 4})  # missing seed
    with pytest.raises(BadConfig):
        RunConfig.from_dict({"seed": 1, "bogus_key": 3})
    with pytest.raises(BadConfig):
        RunConfig.from_dict({"seed": 1, "n_users": 8, "alpha": 0.25,
                             "ell": 20})  # degree-2 bound violated
    cfg = RunConfig.from_json(json.dumps({"seed": 7, "n_users": 8}))
    assert cfg.t == 2
