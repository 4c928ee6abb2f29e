"""Path simulation: scheme algebra, determinism, accounting, and the
conditional second-moment estimator against the deterministic oracle."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_params
from fracheat import bounds
from fracheat.sde import (
    Discretization,
    NoiseIncrement,
    SigmaSpec,
    estimate_second_moment,
    estimate_second_moment_pair,
    run_coupled_refinement,
    run_ensemble,
    sample_noise,
    sigma_eval,
    step,
    tent_profile,
)


def small_disc(grid, dt=1.0 / 128.0, t_end=0.125):
    return Discretization(grid=grid, dt=dt, t_end=t_end, snapshot_times=(t_end,))


def test_step_matches_manual_formula(desk_grid, desk_op, desk_params):
    rng = np.random.default_rng(11)
    u0 = tent_profile(desk_grid)
    dt = 0.01
    noise = sample_noise(rng, desk_grid, dt)
    out = step(u0, desk_op, desk_params, dt, noise)
    forced = u0 + desk_params.lam * desk_params.sigma.L_sigma * u0 * noise.values / desk_grid.dx
    ref = np.linalg.solve(np.eye(desk_grid.n) - dt * desk_op.matrix, forced)
    assert np.allclose(out, ref, rtol=1e-10, atol=1e-13)


def test_noise_increment_variance(desk_grid):
    rng = np.random.default_rng(12)
    draws = np.array([sample_noise(rng, desk_grid, 0.02).values for _ in range(4000)])
    var = draws.var()
    assert var == pytest.approx(0.02 * desk_grid.dx, rel=0.05)


def test_worker_count_never_changes_results(desk_grid, desk_op, desk_params):
    disc = small_disc(desk_grid)
    ref = None
    for workers in (1, 2, 5):
        ens = run_ensemble(
            desk_params, disc, desk_op, n_paths=30, master_seed=77, worker_count=workers
        )
        if ref is None:
            ref = ens.snapshots
        assert np.array_equal(ens.snapshots, ref)


def test_same_seed_same_paths_different_seed_differs(desk_grid, desk_op, desk_params):
    disc = small_disc(desk_grid)
    a = run_ensemble(desk_params, disc, desk_op, n_paths=8, master_seed=5)
    b = run_ensemble(desk_params, disc, desk_op, n_paths=8, master_seed=5)
    c = run_ensemble(desk_params, disc, desk_op, n_paths=8, master_seed=6)
    assert np.array_equal(a.snapshots, b.snapshots)
    assert not np.array_equal(a.snapshots, c.snapshots)


def test_path_count_extension_is_stable(desk_grid, desk_op, desk_params):
    # path k depends on (master_seed, k) only: growing the ensemble keeps old paths
    disc = small_disc(desk_grid)
    small = run_ensemble(desk_params, disc, desk_op, n_paths=6, master_seed=9)
    big = run_ensemble(desk_params, disc, desk_op, n_paths=12, master_seed=9)
    assert np.array_equal(big.snapshots[:, :6, :], small.snapshots)


def test_linear_scheme_homogeneity_is_bitexact(desk_grid, desk_op):
    disc = small_disc(desk_grid)
    base = run_ensemble(
        make_params(desk_grid), disc, desk_op, n_paths=10, master_seed=21
    )
    scaled = run_ensemble(
        make_params(desk_grid, u0=4.0 * tent_profile(desk_grid)),
        disc, desk_op, n_paths=10, master_seed=21,
    )
    assert np.array_equal(scaled.snapshots, 4.0 * base.snapshots)


def test_antithetic_pairs_share_magnitude_of_noise(desk_grid, desk_op, desk_params):
    disc = small_disc(desk_grid)
    ens = run_ensemble(
        desk_params, disc, desk_op, n_paths=8, master_seed=31, antithetic=True
    )
    plain = run_ensemble(
        desk_params, disc, desk_op, n_paths=4, master_seed=31, antithetic=False
    )
    # pair j draws one sheet: even member 2j replays independent path j,
    # odd member 2j+1 integrates the sign-flipped sheet and must differ
    assert np.array_equal(ens.snapshots[:, 0::2, :], plain.snapshots)
    assert not np.array_equal(ens.snapshots[:, 1::2, :], plain.snapshots)
    with pytest.raises(ValueError):
        run_ensemble(desk_params, disc, desk_op, n_paths=7, master_seed=31, antithetic=True)


def test_flagged_paths_are_counted_and_quarantined(desk_grid, desk_op):
    # start near the top of double range so multiplicative growth overflows
    params = make_params(desk_grid, lam=8.0, u0=1e300 * tent_profile(desk_grid))
    disc = Discretization(
        grid=desk_grid, dt=1.0 / 64.0, t_end=0.5, snapshot_times=(0.25, 0.5)
    )
    ens = run_ensemble(params, disc, desk_op, n_paths=24, master_seed=13)
    assert 0 < ens.flagged_count <= 24
    assert ens.flagged_fraction == ens.flagged_count / 24
    surviving = ens.snapshots[:, ~ens.flagged, :]
    assert np.all(np.isfinite(surviving))


def test_coupled_refinement_shares_noise(desk_grid, desk_op, desk_params):
    disc = small_disc(desk_grid, dt=1.0 / 64.0)
    coarse, fine = run_coupled_refinement(
        desk_params, disc, desk_op, n_paths=12, master_seed=41
    )
    assert fine.disc.dt == pytest.approx(0.5 * coarse.disc.dt)
    assert coarse.snapshot_times == fine.snapshot_times
    # same driving sheet: resolutions are strongly correlated path by path,
    # far above anything two independent ensembles of this size produce
    a = coarse.snapshots[-1].ravel()
    b = fine.snapshots[-1].ravel()
    corr = np.corrcoef(a, b)[0, 1]
    assert corr > 0.95


def test_conditional_estimator_tracks_oracle(desk_grid, desk_op, desk_params):
    disc = Discretization(
        grid=desk_grid, dt=1.0 / 1024.0, t_end=0.5, snapshot_times=(0.5,)
    )
    oracle = bounds.second_moment_volterra(
        desk_params, desk_op, desk_grid, T=0.5, steps=1024
    ).m[-1]
    est = estimate_second_moment(
        desk_params, disc, desk_op, n_paths=400, master_seed=2024
    )
    assert est.flagged_count == 0
    assert np.all(est.values > 0.0)
    assert np.all(est.stderr >= 0.0)
    assert est.conditioning_time == pytest.approx(64.0 / 1024.0)
    rel = np.max(np.abs(est.values - oracle) / oracle)
    assert rel <= 0.04  # dt bias ~2% plus a few-tenths-percent sampling band


def test_pair_estimator_layout(desk_grid, desk_op, desk_params):
    disc = Discretization(
        grid=desk_grid, dt=1.0 / 256.0, t_end=0.125, snapshot_times=(0.125,)
    )
    coarse, fine = estimate_second_moment_pair(
        desk_params, disc, desk_op, n_paths=64, master_seed=3
    )
    assert coarse.t == fine.t == pytest.approx(0.125)
    assert fine.dt == pytest.approx(0.5 * coarse.dt)
    assert coarse.conditioning_time == pytest.approx(fine.conditioning_time)
    assert coarse.values.shape == fine.values.shape == (desk_grid.n,)


def test_conditional_estimator_rejects_nonlinear_sigma(desk_grid, desk_op):
    params = make_params(
        desk_grid, sigma=SigmaSpec(kind="bounded-linear", l_sigma=0.5, L_sigma=1.0)
    )
    disc = small_disc(desk_grid)
    with pytest.raises(ValueError):
        estimate_second_moment(params, disc, desk_op, n_paths=4, master_seed=1)


def test_discretization_snapshot_snapping(desk_grid):
    disc = Discretization(
        grid=desk_grid, dt=0.03, t_end=0.3, snapshot_times=(0.1, 0.3)
    )
    for t in disc.snapshot_times:
        assert (t / disc.dt) == pytest.approx(round(t / disc.dt))


def test_step_dimension_mismatch(desk_grid, desk_op, desk_params):
    with pytest.raises(ValueError):
        step(
            np.zeros(desk_grid.n - 1), desk_op, desk_params, 0.01,
            NoiseIncrement(values=np.zeros(desk_grid.n - 1)),
        )
    with pytest.raises(ValueError):
        sample_noise(np.random.default_rng(0), desk_grid, 0.0)


@settings(max_examples=40, deadline=None)
@given(
    kind=st.sampled_from(["linear", "bounded-linear"]),
    u=st.lists(
        st.floats(min_value=-50.0, max_value=50.0, allow_nan=False), min_size=1, max_size=8
    ),
)
def test_sigma_growth_sandwich(kind, u):
    l_sig = 0.5 if kind == "bounded-linear" else 1.3
    spec = SigmaSpec(kind=kind, l_sigma=l_sig, L_sigma=1.3)
    arr = np.array(u)
    out = np.asarray(sigma_eval(spec, arr))
    assert np.all(np.abs(out) <= spec.L_sigma * np.abs(arr) + 1e-12)
    assert np.all(np.abs(out) >= spec.l_sigma * np.abs(arr) - 1e-12)
    assert sigma_eval(spec, 0.0) == 0.0
