import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from hybrid6dma.channel import UserPathState, channel_hybrid, stack_users
from hybrid6dma.geometry import SurfacePose
from hybrid6dma.scenario import (
    ScenarioConfig,
    channel_nmse,
    fibonacci_directions,
    place_candidate_poses,
    sample_users,
    sparsity_map,
    sum_capacity,
)


# --- pose placement -----------------------------------------------------------

def test_single_direction_is_pole():
    np.testing.assert_array_equal(fibonacci_directions(1), [[0.0, 0.0, 1.0]])


@pytest.mark.parametrize("n", [2, 8, 32, 64])
def test_fibonacci_directions_are_unit(n):
    d = fibonacci_directions(n)
    assert d.shape == (n, 3)
    np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-12)


def test_fibonacci_rejects_zero():
    with pytest.raises(ValueError):
        fibonacci_directions(0)


def test_candidate_poses_on_inscribed_sphere():
    poses = place_candidate_poses(32, 0.5, center=(1.0, 2.0, 3.0))
    for p in poses:
        offset = p.position - np.array([1.0, 2.0, 3.0])
        assert abs(np.linalg.norm(offset) - 0.25) <= 1e-12
        np.testing.assert_allclose(p.normal, offset / 0.25, atol=1e-12)


def test_candidate_poses_spread_evenly():
    # ideal spacing of n points on a sphere of radius r: sqrt(4 pi r^2 / n) up to
    # the hexagonal packing factor; the minimum gap must stay close to it
    n, r = 64, 0.25
    pos = np.array([p.position for p in place_candidate_poses(n, 2 * r)])
    gaps = np.linalg.norm(pos[:, None] - pos[None], axis=-1) + np.eye(n) * 10
    ideal = np.sqrt(8 * np.pi / (np.sqrt(3) * n)) * r
    assert gaps.min() >= 0.8 * ideal


def test_offset_changes_positions():
    a = place_candidate_poses(10, 0.5)
    b = place_candidate_poses(10, 0.5, azimuth_offset=1.0)
    assert not np.allclose(a[3].position, b[3].position)


# --- users ----------------------------------------------------------------------

def test_sample_users_range_and_hemisphere():
    users = sample_users(2000, (20.0, 800.0), seed=1)
    d = np.array([u.distance for u in users])
    el = np.array([u.elevation for u in users])
    assert d.min() >= 20.0 and d.max() <= 800.0
    assert el.min() >= 0.0


def test_sample_users_deterministic():
    a = sample_users(5, seed=4)
    b = sample_users(5, seed=4)
    assert a == b


def test_sample_users_uniform_in_volume():
    lo, hi = 20.0, 800.0
    d = np.array([u.distance for u in sample_users(10_000, (lo, hi), seed=2)])
    u = (d ** 3 - lo ** 3) / (hi ** 3 - lo ** 3)
    assert stats.kstest(u, "uniform").pvalue > 0.01


def test_free_space_gain_of_users():
    u = sample_users(1, (100.0, 100.0), seed=0)[0]
    assert u.distance == pytest.approx(100.0)
    assert abs(u.gain) == pytest.approx(2.99792458e-3 / (4 * np.pi * 100.0), rel=1e-12)


# --- sparsity -------------------------------------------------------------------

def test_sparsity_boresight_pose_is_strongest(model):
    poses = place_candidate_poses(32, 0.5)
    u = UserPathState.free_space(300.0, *_angles(poses[5].normal), model.carrier)
    smap = sparsity_map([u], poses, model)
    assert np.argmax(smap.power[0]) == 5


def _angles(v):
    return np.arctan2(v[1], v[0]), np.arcsin(v[2])


def test_pose_facing_away_is_zero(model):
    u = UserPathState.free_space(300.0, 0.0, 0.0, model.carrier)
    away = SurfacePose.facing([-0.25, 0, 0], [-1, 0, 0])
    toward = SurfacePose.facing([0.25, 0, 0], [1, 0, 0])
    smap = sparsity_map([u], [away, toward], model)
    assert smap.power[0, 0] == 0.0 and smap.power[0, 1] > 0
    np.testing.assert_array_equal(smap.visibility(0), [1])


def test_support_strictly_below_candidate_count(model):
    poses = place_candidate_poses(32, 0.5)
    smap = sparsity_map(sample_users(25, seed=3), poses, model)
    assert smap.power.shape == (25, 32)
    assert np.all(smap.support_sizes >= 1) and np.all(smap.support_sizes < 32)


# --- capacity -------------------------------------------------------------------

def test_zero_channel_zero_capacity():
    assert sum_capacity(np.zeros((16, 3), complex), 1.0, 100.0) == 0.0


def test_single_user_capacity():
    h = np.arange(1, 5) + 1j
    expected = np.log2(1 + 2.0 * np.vdot(h, h).real)
    assert sum_capacity(h, 0.5, 1.0) == pytest.approx(expected, rel=1e-12)


def test_capacity_matches_singular_values():
    # independent route: log2 prod(1 + rho s_i^2)
    rng = np.random.default_rng(0)
    H = rng.standard_normal((8, 5)) + 1j * rng.standard_normal((8, 5))
    s = np.linalg.svd(H, compute_uv=False)
    expected = np.sum(np.log2(1 + 3.0 * s ** 2))
    assert sum_capacity(H, 2.0, 6.0) == pytest.approx(expected, rel=1e-12)


@given(st.integers(0, 2 ** 31), st.floats(0.01, 10.0), st.floats(1.01, 10.0))
def test_capacity_monotone_in_power(seed, p, factor):
    rng = np.random.default_rng(seed)
    H = rng.standard_normal((6, 3)) + 1j * rng.standard_normal((6, 3))
    assert sum_capacity(H, 1.0, p * factor) > sum_capacity(H, 1.0, p)


def test_capacity_models_agree_for_a_distant_user(model):
    # parallax across the site vanishes far away, so the hybrid and the
    # pure far model give the same capacity
    poses = place_candidate_poses(8, 0.5)
    users = sample_users(4, (5e4, 5e4), seed=0, carrier=model.carrier)
    far = stack_users("far", poses, model.layout, users, model.carrier, model.pattern)
    hyb = stack_users("hybrid", poses, model.layout, users, model.carrier, model.pattern)
    tx = 10.0 / abs(users[0].gain) ** 2
    assert sum_capacity(hyb, 1.0, tx) == pytest.approx(sum_capacity(far, 1.0, tx), rel=1e-3)


# --- NMSE -----------------------------------------------------------------------

def test_nmse_examples():
    h = np.array([1 + 1j, 2, -1j])
    assert channel_nmse(h, h) == 0.0
    assert channel_nmse(np.zeros(3), h) == 1.0
    assert channel_nmse(2 * h, h) == pytest.approx(1.0)
    assert channel_nmse(h, np.zeros(3)) == float("inf")


def test_nmse_accepts_channel_vectors(model):
    poses = place_candidate_poses(4, 0.5)
    u = UserPathState.free_space(100.0, 0.2, 0.3, model.carrier)
    h = channel_hybrid(poses, model.layout, u, model.carrier, model.pattern)
    assert channel_nmse(h, h) == 0.0
    with pytest.raises(ValueError):
        channel_nmse(np.zeros(2), h)


# --- config ---------------------------------------------------------------------

def test_config_defaults():
    cfg = ScenarioConfig()
    assert (cfg.n_surfaces, cfg.n_antennas, cfg.n_users, cfg.n_slots) == (8, 16, 25, 10)
    assert cfg.rayleigh_distance == pytest.approx(500.35, abs=0.01)
    assert cfg.layout().n_antennas == 16


@pytest.mark.parametrize("kw", [
    {"n_surfaces": 0}, {"n_antennas": 0}, {"n_surfaces": 40}, {"d_min": 900.0}, {"d_min": 0.0},
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ScenarioConfig(**kw)
