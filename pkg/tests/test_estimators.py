from __future__ import annotations

import numpy as np
import pytest

from dpfda.basis import SobolevParams, l2_distance
from dpfda.estimators import (
    GdConfig,
    ServerSpec,
    SingularGramError,
    compute_clipped_mean_gradient,
    compute_clipped_vcm_gradient,
    dp_mean_cdp,
    dp_mean_fdp,
    dp_vcm_cdp,
    dp_vcm_fdp,
    nonprivate_gd,
    nonprivate_ls,
    nonprivate_vcm_ls,
)
from dpfda.privacy import PrivacyBudget, mean_truncation_radii
from dpfda.sobolev import EllipsoidSpec, blockwise_feasible, in_ellipsoid
from dpfda.synth import (
    DEFAULT_C_ALPHA,
    MU1_COEFFS,
    MaternSpec,
    MeanDataset,
    VcmDataset,
    gen_mean_dataset,
    gen_vcm_dataset,
    vcm_builtin_blocks,
)

SPEC3 = EllipsoidSpec(SobolevParams(3.0, DEFAULT_C_ALPHA), 3)
NOISELESS = MaternSpec(sigma2=0.0)
HUGE = 1e12


def noiseless(n=200, m=20, seed=1):
    return gen_mean_dataset(MU1_COEFFS, n, m, noise_sd=0, matern=NOISELESS, rng=np.random.default_rng(seed))


def rademacher(rng, size):
    return rng.choice(np.array([-1.0, 1.0]), size=size)


def test_config_validation(caplog):
    with pytest.raises(ValueError):
        GdConfig(r=0)
    with pytest.raises(ValueError):
        GdConfig(r=3, eta=1.0)
    with pytest.raises(ValueError):
        GdConfig(r=3, rho=0)
    GdConfig(r=3, rho=1.5)
    assert "exceeds" in caplog.text


def test_gradient_examples():
    data = noiseless(5, 4)
    g = compute_clipped_mean_gradient(data, MU1_COEFFS, np.full(3, HUGE))
    assert np.max(np.abs(g)) < 1e-12
    one = MeanDataset.from_arrays([[0.3]], [[2.5]])
    assert compute_clipped_mean_gradient(one, [1.0], [HUGE]) == pytest.approx([1.0 - 2.5])
    assert compute_clipped_mean_gradient(one, [1.0], [0.5]) == pytest.approx([-0.5])
    R = np.array([0.1, 0.05, 0.01])
    g = compute_clipped_mean_gradient(gen_mean_dataset(MU1_COEFFS, 10, 5, rng=np.random.default_rng(0)), np.zeros(3), R)
    assert np.all(np.abs(g) <= R)
    with pytest.raises(ValueError):
        compute_clipped_mean_gradient(data.subset([]), MU1_COEFFS, np.ones(3))


def test_ragged_gradient_matches_rectangular(rng):
    data = gen_mean_dataset(MU1_COEFFS, 6, 4, rng=rng)
    ragged = MeanDataset(data.x[:5] + (data.x[5][:2],), data.y[:5] + (data.y[5][:2],))
    a, R = rng.normal(size=3), np.ones(3)
    manual = []
    from dpfda.basis import basis_matrix

    for x, y in zip(ragged.x, ragged.y):
        phi = basis_matrix(x, 3)
        manual.append(np.clip(phi.T @ (phi @ a - y) / len(x), -R, R))
    assert compute_clipped_mean_gradient(ragged, a, R) == pytest.approx(np.mean(manual, axis=0), abs=1e-14)


def test_vcm_gradient_reduces_to_mean(rng):
    data = gen_mean_dataset(MU1_COEFFS, 8, 6, rng=rng)
    vdata = VcmDataset(data.x, data.y, np.ones((8, 1)))
    a, R = rng.normal(size=3), np.full(3, 0.4)
    assert np.array_equal(
        compute_clipped_vcm_gradient(vdata, a, R, 3, 0), compute_clipped_mean_gradient(data, a, R)
    )
    v = gen_vcm_dataset(vcm_builtin_blocks(2), 2, 6, 5, noise_sd=0, rng=rng)
    truth = np.concatenate(vcm_builtin_blocks(2))
    assert np.max(np.abs(compute_clipped_vcm_gradient(v, truth, np.full(9, HUGE), 3, 2))) < 1e-12
    R9 = np.linspace(0.01, 0.1, 9)
    assert np.all(np.abs(compute_clipped_vcm_gradient(v, np.zeros(9), R9, 3, 2)) <= R9)
    with pytest.raises(ValueError):
        compute_clipped_vcm_gradient(v, np.zeros(8), np.ones(8), 3, 2)


def test_nonprivate_ls():
    data = noiseless()
    assert l2_distance(nonprivate_ls(data, 3), MU1_COEFFS) < 1e-10
    noisy = gen_mean_dataset(MU1_COEFFS, 30, 5, rng=np.random.default_rng(4))
    assert nonprivate_ls(noisy, 1) == pytest.approx([noisy.all_y().mean()], abs=1e-13)
    doubled = MeanDataset(noisy.x * 2, noisy.y * 2)
    assert nonprivate_ls(doubled, 4) == pytest.approx(nonprivate_ls(noisy, 4), abs=1e-12)
    perm = np.random.default_rng(1).permutation(30)
    assert nonprivate_ls(noisy.subset(perm), 4) == pytest.approx(nonprivate_ls(noisy, 4), abs=1e-12)
    degenerate = MeanDataset.from_arrays([[0.0, 0.5]], [[1.0, 2.0]])
    with pytest.raises(SingularGramError):
        nonprivate_ls(degenerate, 3)


def test_noise_off_matches_least_squares():
    data = noiseless()
    cfg = GdConfig(r=3, rho=0.1, T=200, c_r_const=HUGE, noise_enabled=False)
    rep = dp_mean_cdp(data, cfg, PrivacyBudget(1.0), SPEC3)
    assert l2_distance(rep.coeffs, nonprivate_ls(data, 3)) < 1e-6
    assert not rep.private


def test_noise_off_error_contracts_monotonically():
    # every batch shares the pooled minimiser, so each round is a contraction towards it
    data = noiseless(400, 20, seed=11)
    cfg = GdConfig(r=3, rho=0.1, T=40, c_r_const=HUGE, noise_enabled=False)
    rep = dp_mean_cdp(data, cfg, PrivacyBudget(1.0), SPEC3)
    ls = nonprivate_ls(data, 3)
    errs = [np.linalg.norm(a - ls) for a in rep.iterates]
    assert all(e2 < e1 for e1, e2 in zip(errs, errs[1:]))


def test_report_bookkeeping():
    data = gen_mean_dataset(MU1_COEFFS, 103, 5, rng=np.random.default_rng(2))
    cfg = GdConfig(r=3, T=10, seed=3)
    rep = dp_mean_cdp(data, cfg, PrivacyBudget(0.8), SPEC3, truth=MU1_COEFFS)
    assert len(rep.diagnostics) == 10 and len(rep.iterates) == 11
    assert rep.unused_subjects == [3]
    seen = set()
    for b in rep.batches:
        idx = set(b.indices)
        assert len(idx) == 10 and not idx & seen
        seen |= idx
    assert all(d.feasible for d in rep.diagnostics)
    assert all(in_ellipsoid(a, SPEC3) for a in rep.iterates)
    assert rep.l2_error == pytest.approx(l2_distance(rep.coeffs, MU1_COEFFS))
    assert rep.tuning["b"] == [10] and rep.tuning["T"] == 10 and rep.private
    assert rep.budget_condition_ok


def test_determinism_and_preconditions():
    data = gen_mean_dataset(MU1_COEFFS, 50, 4, rng=np.random.default_rng(5))
    cfg = GdConfig(r=3, T=8, seed=21)
    a = dp_mean_cdp(data, cfg, PrivacyBudget(1.0), SPEC3)
    b = dp_mean_cdp(data, cfg, PrivacyBudget(1.0), SPEC3)
    assert np.array_equal(a.coeffs, b.coeffs)
    c = dp_mean_cdp(data, GdConfig(r=3, T=8, seed=22), PrivacyBudget(1.0), SPEC3)
    assert not np.array_equal(a.coeffs, c.coeffs)
    with pytest.raises(ValueError):
        dp_mean_cdp(data.subset(range(5)), GdConfig(r=3, T=10), PrivacyBudget(1.0), SPEC3)
    with pytest.raises(ValueError):
        dp_mean_cdp(data, GdConfig(r=4, T=8), PrivacyBudget(1.0), SPEC3)


def test_fdp_single_server_equals_cdp_roundwise():
    data = gen_mean_dataset(MU1_COEFFS, 120, 6, rng=np.random.default_rng(8))
    cfg = GdConfig(r=3, T=12, seed=77)
    cdp = dp_mean_cdp(data, cfg, PrivacyBudget(0.6), SPEC3)
    fdp = dp_mean_fdp([ServerSpec(data, PrivacyBudget(0.6))], cfg, SPEC3)
    assert len(cdp.iterates) == len(fdp.iterates)
    assert all(np.array_equal(x, y) for x, y in zip(cdp.iterates, fdp.iterates))
    assert len(fdp.protocol.transcripts) == 12


def test_fdp_heterogeneous_servers():
    rng = np.random.default_rng(3)
    servers = [
        ServerSpec(gen_mean_dataset(MU1_COEFFS, n, 5, rng=rng), PrivacyBudget(eps))
        for n, eps in ((60, 0.5), (90, 2.0), (40, 1.0))
    ]
    rep = dp_mean_fdp(servers, GdConfig(r=3, T=10, seed=1), SPEC3)
    assert len(rep.protocol.transcripts) == 30
    assert sum(rep.weights) == pytest.approx(1.0, abs=1e-12)
    assert rep.tuning["b"] == [6, 9, 4]
    # radii use the pooled subject count
    assert rep.tuning["radii"] == pytest.approx(mean_truncation_radii(3, 5, 190, 0.05, 0.75, 3.0).tolist())
    small = [ServerSpec(gen_mean_dataset(MU1_COEFFS, 5, 5, rng=rng), PrivacyBudget(1.0))]
    with pytest.raises(ValueError):
        dp_mean_fdp(servers + small, GdConfig(r=3, T=10), SPEC3)


def test_vcm_noise_off_matches_block_least_squares():
    v = gen_vcm_dataset(vcm_builtin_blocks(1), 1, 200, 20, noise_sd=0, g_dist=rademacher, rng=np.random.default_rng(2))
    cfg = GdConfig(r=3, rho=0.1, T=200, c_r_const=HUGE, noise_enabled=False)
    rep = dp_vcm_cdp(v, cfg, PrivacyBudget(1.0), SPEC3)
    ls = nonprivate_vcm_ls(v, 3)
    assert np.linalg.norm(rep.coeffs - ls) < 1e-6
    assert np.linalg.norm(ls - np.concatenate(vcm_builtin_blocks(1))) < 1e-10
    assert rep.blocks.shape == (2, 3)


def test_vcm_d0_path_equals_mean_path_without_noise():
    data = gen_mean_dataset(MU1_COEFFS, 100, 6, matern=NOISELESS, rng=np.random.default_rng(6))
    cfg = GdConfig(r=3, T=15, c_r_const=HUGE, noise_enabled=False)
    mean = dp_mean_cdp(data, cfg, PrivacyBudget(1.0), SPEC3)
    vcm = dp_vcm_cdp(VcmDataset(data.x, data.y, np.ones((100, 1))), cfg, PrivacyBudget(1.0), SPEC3)
    assert all(np.array_equal(a, b) for a, b in zip(mean.iterates, vcm.iterates))


def test_vcm_fdp_reduction_and_counts():
    rng = np.random.default_rng(12)
    v = gen_vcm_dataset(vcm_builtin_blocks(2), 2, 80, 5, rng=rng)
    cfg = GdConfig(r=3, T=8, seed=4)
    cdp = dp_vcm_cdp(v, cfg, PrivacyBudget(2.0), SPEC3)
    fdp = dp_vcm_fdp([ServerSpec(v, PrivacyBudget(2.0))], cfg, SPEC3)
    assert all(np.array_equal(a, b) for a, b in zip(cdp.iterates, fdp.iterates))
    assert all(blockwise_feasible(a, SPEC3, 2) for a in cdp.iterates)
    servers = [ServerSpec(gen_vcm_dataset(vcm_builtin_blocks(2), 2, 40, 5, rng=rng), PrivacyBudget(1.0)) for _ in range(3)]
    rep = dp_vcm_fdp(servers, cfg, SPEC3)
    assert len(rep.protocol.transcripts) == 24
    mixed = servers[:1] + [ServerSpec(gen_vcm_dataset(vcm_builtin_blocks(1), 1, 40, 5, rng=rng), PrivacyBudget(1.0))]
    with pytest.raises(ValueError):
        dp_vcm_fdp(mixed, cfg, SPEC3)


def test_vcm_degenerate_covariate():
    # G = (1, 0): the second block never enters the likelihood
    rng = np.random.default_rng(9)
    data = gen_vcm_dataset(
        vcm_builtin_blocks(1), 1, 300, 10, g_dist=lambda r, size: np.zeros(size), rng=rng
    )
    cfg = GdConfig(r=3, T=20, seed=2)
    rep = dp_vcm_fdp([ServerSpec(data, PrivacyBudget(5.0))], cfg, SPEC3)
    noise_only = dp_vcm_fdp(
        [ServerSpec(data, PrivacyBudget(5.0))], GdConfig(r=3, T=20, seed=2, noise_enabled=False), SPEC3
    )
    assert np.array_equal(noise_only.blocks[1], np.zeros(3))
    assert np.any(rep.blocks[1] != 0)
    mean_view = MeanDataset(data.x, data.y)
    mean_rep = dp_mean_cdp(mean_view, GdConfig(r=3, T=20, noise_enabled=False), PrivacyBudget(5.0), SPEC3)
    assert l2_distance(noise_only.blocks[0], mean_rep.coeffs) < 0.05


def test_nonprivate_gd_converges_to_ls():
    data = gen_mean_dataset(MU1_COEFFS, 60, 8, rng=np.random.default_rng(0))
    assert nonprivate_gd(data, 3, 0.5, 400) == pytest.approx(nonprivate_ls(data, 3), abs=1e-8)
