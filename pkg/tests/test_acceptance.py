"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the report lines
next to the test names.
"""

import time

import numpy as np
import pytest

from conftest import acceptance_report, oracle_hybrid
from hybrid6dma.channel import (
    CarrierConfig,
    SystemModel,
    UserPathState,
    channel_far,
    channel_hybrid,
    channel_near,
)
from hybrid6dma.cli import parse_config, run_experiment
from hybrid6dma.estimator import (
    GridSpec,
    cluster_estimates,
    coarse_search,
    desk_preset,
    refine_joint,
    reconstruct_channel,
    select_largest_cluster,
)
from hybrid6dma.experiments import capacity_vs_distance, mse_vs_snr, sparsity_experiment
from hybrid6dma.geometry import AntennaPattern, ArrayLayout, SurfacePose, doa_unit_vector
from hybrid6dma.pilot import MeasurementBatch, combined_noise, make_combiner, measure_poses, whiten
from hybrid6dma.scenario import ScenarioConfig, channel_nmse, place_candidate_poses, rayleigh_distance

SNRS = (0.0, 5.0, 10.0, 15.0, 20.0)


def _random_user(rng, carrier, unit_gain=False):
    d = rng.uniform(20.0, 800.0)
    az, el = rng.uniform(-np.pi, np.pi), rng.uniform(-np.pi / 2, np.pi / 2)
    phase = rng.uniform(0, 2 * np.pi)
    if unit_gain:
        return UserPathState(d, az, el, np.exp(1j * phase))
    return UserPathState.free_space(d, az, el, carrier, phase)


# --- 1 ------------------------------------------------------------------------

def test_criterion_01_rayleigh_distance(capsys):
    carrier = CarrierConfig(0.1e12)
    rd = rayleigh_distance(0.5 * np.sqrt(3.0), carrier)
    rel = abs(rd - 500.0) / 500.0
    acceptance_report(capsys, 1, "Rayleigh distance", rel <= 0.005,
                      f"RD = {rd:.3f} m, {100 * rel:.3f}% from 500 m (limit 0.5%)")


# --- 2 ------------------------------------------------------------------------

def test_criterion_02_reductions(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    carrier, pattern = CarrierConfig(), AntennaPattern()
    upa = ArrayLayout.square(16, carrier.wavelength / 2)
    single = ArrayLayout.square(1, carrier.wavelength / 2)
    far_abs = far_rel = near_abs = near_rel = 0.0
    for _ in range(100):
        pose = SurfacePose(np.zeros(3), rng.uniform(0, 2 * np.pi, 3))
        for unit in (False, True):
            user = _random_user(rng, carrier, unit_gain=unit)
            a = channel_hybrid([pose], upa, user, carrier, pattern).coefficients
            b = channel_far([pose], upa, user, carrier, pattern).coefficients
            diff = float(np.max(np.abs(a - b)))
            if unit:
                far_rel = max(far_rel, diff)
            else:
                far_abs = max(far_abs, diff)
    for _ in range(100):
        poses = [SurfacePose(rng.uniform(-0.25, 0.25, 3), rng.uniform(0, 2 * np.pi, 3)) for _ in range(8)]
        for unit in (False, True):
            user = _random_user(rng, carrier, unit_gain=unit)
            a = channel_hybrid(poses, single, user, carrier, pattern).coefficients
            b = channel_near(poses, single, user, carrier, pattern, amplitude="common").coefficients
            diff = float(np.max(np.abs(a - b)))
            if unit:
                near_rel = max(near_rel, diff)
            else:
                near_abs = max(near_abs, diff)
    elapsed = time.perf_counter() - t0
    ok = far_abs <= 1e-12 and near_abs <= 1e-12 and far_rel <= 1e-9 and near_rel <= 1e-9 and elapsed < 5
    acceptance_report(capsys, 2, "reductions to far (B=1 at origin) and near (N=1)", ok,
                      f"max |diff| far {far_abs:.1e}, near {near_abs:.1e} (limit 1e-12); "
                      f"unit-gain far {far_rel:.1e}, near {near_rel:.1e}; {elapsed:.2f} s")


# --- 3 ------------------------------------------------------------------------

def test_criterion_03_model_convergence(capsys):
    t0 = time.perf_counter()
    cfg = ScenarioConfig()
    res = capacity_vs_distance(cfg, [600.0, 800.0, 50.0], n_draws=100, seed=0)
    elapsed = time.perf_counter() - t0
    spreads = {}
    for d in (600.0, 800.0):
        means = [res[d][k].mean() for k in ("far", "near", "hybrid")]
        spreads[d] = (max(means) - min(means)) / min(means)
    near50 = res[50.0]
    closer = np.abs(near50["hybrid"] - near50["near"]) < np.abs(near50["far"] - near50["near"])
    frac = float(closer.mean())
    ok = all(s <= 0.05 for s in spreads.values()) and frac >= 0.9 and elapsed < 120
    acceptance_report(capsys, 3, "far/near/hybrid capacity convergence", ok,
                      f"relative spread {spreads[600.0]:.2e} at 600 m, {spreads[800.0]:.2e} at 800 m "
                      f"(limit 5%); hybrid closer to near at 50 m in {100 * frac:.0f}% of draws "
                      f"(limit 90%); {elapsed:.1f} s")


# --- 4 ------------------------------------------------------------------------

def test_criterion_04_noiseless_exactness(capsys, model):
    t0 = time.perf_counter()
    poses = place_candidate_poses(32, 0.5)
    held = place_candidate_poses(10, 0.5, azimuth_offset=1.0)
    spec = desk_preset().fine
    rng = np.random.default_rng(4)
    worst_nu = worst_nmse = 0.0
    exact = True
    min_lit = 32
    for case in range(5):
        center = (410.0, rng.uniform(-np.pi, np.pi), rng.uniform(0.0, 1.2))
        grid = GridSpec.fine(center, spec)
        # a node away from the center so the answer is not the lattice midpoint
        i, j, k = (rng.integers(0, n) for n in grid.shape)
        d, az, el = grid.distances[i], grid.azimuths[j], grid.elevations[k]
        user = UserPathState.free_space(d, az, el, model.carrier, rng.uniform(0, 2 * np.pi))
        meas = measure_poses(poses, model, user, 10, 0.0, seed=case)
        lit = [whiten(m) for m in meas if np.any(m.received != 0)]
        min_lit = min(min_lit, len(lit))
        est = refine_joint(lit, model, grid)
        exact &= (est.distance, est.azimuth, est.elevation) == (d, az, el)
        worst_nu = max(worst_nu, abs(est.gain - user.gain) / abs(user.gain))
        truth = channel_hybrid(held, model.layout, user, model.carrier, model.pattern)
        worst_nmse = max(worst_nmse, channel_nmse(reconstruct_channel(est, held, model), truth))
    elapsed = time.perf_counter() - t0
    ok = exact and min_lit >= 3 and worst_nu <= 1e-8 and worst_nmse < 1e-6 and elapsed < 60
    acceptance_report(capsys, 4, "noiseless estimator exactness", ok,
                      f"5 on-grid users, >= {min_lit} lit poses, exact triples {exact}, "
                      f"gain rel err {worst_nu:.1e} (limit 1e-8), held-out NMSE {worst_nmse:.1e} "
                      f"(limit 1e-6); {elapsed:.1f} s")


# --- 5 ------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_05_mse_vs_snr(capsys):
    t0 = time.perf_counter()
    cfg = ScenarioConfig(n_candidates=32, n_slots=10)
    preset = desk_preset(cfg.d_min, cfg.d_max)
    main = mse_vs_snr(cfg, preset, SNRS, n_trials=100, seed=0)
    m16 = mse_vs_snr(cfg, preset, (10.0,), n_trials=100, n_candidates=16, seed=0, include_ls=False)
    m64 = mse_vs_snr(cfg, preset, (10.0,), n_trials=100, n_candidates=64, seed=0, include_ls=False)
    elapsed = time.perf_counter() - t0
    alg, ls = np.array(main["clustered"].y), np.array(main["ls"].y)
    monotone = bool(np.all(np.diff(alg) <= 0))
    below_ls = alg < ls
    more_poses = m64["clustered"].y[0] < m16["clustered"].y[0]
    ok = monotone and bool(below_ls.all()) and more_poses and elapsed < 600
    fmt = lambda v: "[" + ", ".join(f"{x:.3g}" for x in v) + "]"
    acceptance_report(capsys, 5, "MSE-vs-SNR trend", ok,
                      f"(a) monotone {monotone}: clustered-estimator NMSE {fmt(alg)} at {list(SNRS)} dB; "
                      f"(b) below LS {fmt(ls)} at {int(below_ls.sum())}/5 points; "
                      f"(c) M=16 {m16['clustered'].y[0]:.3g} > M=64 {m64['clustered'].y[0]:.3g}: "
                      f"{more_poses}; {elapsed:.0f} s")


# --- 6 ------------------------------------------------------------------------

def test_criterion_06_directional_sparsity(capsys):
    t0 = time.perf_counter()
    cfg = ScenarioConfig(n_candidates=32, n_users=25)
    sizes = np.concatenate([sparsity_experiment(cfg, seed=s)[0].support_sizes for s in range(10)])
    elapsed = time.perf_counter() - t0
    ok = sizes.min() >= 1 and sizes.max() <= 32 // 2 + 2 and elapsed < 10
    acceptance_report(capsys, 6, "directional sparsity", ok,
                      f"|W| in [{sizes.min()}, {sizes.max()}] over 10 seeds x 25 users "
                      f"(allowed [1, 18]); {elapsed:.1f} s")


# --- 7 ------------------------------------------------------------------------

def test_criterion_07_whitening(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    T, sigma2, n = 10, 0.7, 100_000
    # uneven row norms make the whitening factor non-trivial
    W = make_combiner(16, T, rng) * rng.uniform(0.5, 2.0, size=(T, 1))
    D = whiten(MeasurementBatch(0, SurfacePose(np.zeros(3)), np.zeros(T, complex), W, sigma2)).cholesky
    acc = np.zeros((T, T), dtype=complex)
    for _ in range(0, n, 10_000):
        Z = np.stack([combined_noise(W, rng, sigma2) for _ in range(10_000)], axis=1)
        Zw = np.linalg.solve(D, Z)
        acc += Zw @ Zw.conj().T
    C = acc / n
    err = float(np.max(np.abs(C - sigma2 * np.eye(T))) / sigma2)
    elapsed = time.perf_counter() - t0
    acceptance_report(capsys, 7, "whitened noise covariance", err <= 0.05 and elapsed < 30,
                      f"max entrywise deviation {100 * err:.2f}% of sigma^2 over {n} draws "
                      f"(limit 5%); {elapsed:.1f} s")


# --- 8 ------------------------------------------------------------------------

def test_criterion_08_clustering_fixtures(capsys):
    eps = 1.0
    checks = {}
    same = cluster_estimates(np.tile([3.0, 4.0, 5.0], (6, 1)), eps)
    checks["identical points -> one cluster"] = same.count == 1 and same.members[0] == list(range(6))

    rng = np.random.default_rng(8)
    a = np.array([0.0, 0.0, 0.0]) + rng.uniform(-0.2, 0.2, (5, 3))
    b = np.array([100.0, 0.0, 0.0]) + rng.uniform(-0.2, 0.2, (4, 3))
    labels = np.array([0, 1, 0, 1, 1, 0, 0, 1, 0])
    pts = np.empty((9, 3))
    pts[labels == 0], pts[labels == 1] = a, b
    two = cluster_estimates(pts, eps)
    checks["two groups at 100 eps"] = (two.count == 2 and two.members[0] == list(np.flatnonzero(labels == 0))
                                       and two.members[1] == list(np.flatnonzero(labels == 1)))

    spread = rng.uniform(-50, 50, (12, 3))
    checks["eps -> inf gives one cluster"] = cluster_estimates(spread, 1e9).count == 1
    checks["eps -> 0+ gives M clusters"] = cluster_estimates(spread, 1e-9).count == 12

    state = cluster_estimates(rng.uniform(-3, 3, (40, 3)), 1.5)
    flat = sorted(i for m in state.members for i in m)
    checks["partition"] = flat == list(range(40))
    pts40 = rng.uniform(-3, 3, (40, 3))
    state = cluster_estimates(pts40, 1.5)
    checks["center is member mean"] = all(
        np.max(np.abs(state.centers[i] - pts40[m].mean(axis=0))) <= 1e-12 for i, m in enumerate(state.members))

    def grouped(sizes):
        return np.concatenate([np.full((s, 3), 10.0 * i) for i, s in enumerate(sizes)])

    checks["sizes {5,2,1} -> size 5"] = select_largest_cluster(cluster_estimates(grouped([5, 2, 1]), eps))[0] == [0, 1, 2, 3, 4]
    checks["sizes {2,5,1} -> size 5"] = select_largest_cluster(cluster_estimates(grouped([2, 5, 1]), eps))[0] == [2, 3, 4, 5, 6]
    members, center = select_largest_cluster(cluster_estimates(grouped([3, 3]), eps))
    checks["tie {3,3} -> first created"] = members == [0, 1, 2] and np.allclose(center, 0.0)
    checks["single cluster -> itself"] = select_largest_cluster(cluster_estimates(grouped([4]), eps))[0] == [0, 1, 2, 3]

    failed = [k for k, v in checks.items() if not v]
    acceptance_report(capsys, 8, "clustering fixtures", not failed,
                      f"{len(checks) - len(failed)}/{len(checks)} fixtures pass"
                      + (f"; failing: {', '.join(failed)}" if failed else ""))


# --- 9 ------------------------------------------------------------------------

def test_criterion_09_determinism(capsys):
    docs = [
        {"experiment": "sparsity-map", "seed": 11},
        {"experiment": "capacity-vs-distance", "seed": 11, "trials": 4, "distances": [50.0, 600.0]},
        {"experiment": "mse-vs-snr", "seed": 11, "trials": 4, "scenario": {"M": 8}},
        {"experiment": "single-run", "seed": 11, "scenario": {"M": 8}},
    ]
    same = []
    for doc in docs:
        cfg = parse_config(doc)
        tables = [run_experiment(cfg, threads=t)[1].encode() for t in (1, 2, 5)]
        same.append(all(t == tables[0] for t in tables))
    acceptance_report(capsys, 9, "thread-count determinism", all(same),
                      f"byte-identical CSV at 1, 2 and 5 threads for {sum(same)}/{len(docs)} experiments")


# --- 10 -----------------------------------------------------------------------

def _brute_force_winner(y, W, sigma2, pose, layout, triples, k):
    """Full quadratic residual per candidate with the closed-form gain."""
    # independent whitening: per-slot noise is independent, so the
    # covariance is diagonal with the combiner row energies
    scale = np.sqrt(np.sum(np.abs(W) ** 2, axis=1))
    yb, Gb = y / scale, W / scale[:, None]
    best, best_i = np.inf, -1
    for i, (d, az, el) in enumerate(triples):
        h = oracle_hybrid([pose], layout, doa_unit_vector(az, el) * d, 1.0, k)
        atom = Gb @ h
        energy = np.vdot(atom, atom).real
        if energy == 0.0:
            resid = np.vdot(yb, yb).real
        else:
            nu = np.vdot(atom, yb) / energy
            r = yb - nu * atom
            resid = np.vdot(r, r).real
        if best_i < 0 or resid < best:
            best, best_i = resid, i
    return best_i


def test_criterion_10_oracle_equivalence(capsys):
    t0 = time.perf_counter()
    carrier = CarrierConfig()
    model = SystemModel(ArrayLayout.square(4, carrier.wavelength / 2), carrier, AntennaPattern())
    rng = np.random.default_rng(10)
    agree = 0
    sizes = set()
    for trial in range(50):
        pose = SurfacePose(rng.uniform(-0.25, 0.25, 3), rng.uniform(0, 2 * np.pi, 3))
        n = pose.normal
        az0, el0 = np.arctan2(n[1], n[0]), np.arcsin(np.clip(n[2], -1, 1))
        d0 = rng.uniform(50.0, 700.0)
        step = np.radians(rng.uniform(2.0, 6.0))
        grid = GridSpec(d0 + 15.0 * np.arange(-4, 6), az0 + step * np.arange(-5, 5),
                        np.clip(el0 + step * np.arange(-5, 5), -np.pi / 2, np.pi / 2))
        sizes.add(grid.size)
        off = rng.uniform(-4, 4, 3) * np.array([15.0, step, step])
        user = UserPathState.free_space(d0 + off[0], az0 + off[1], el0 + off[2], carrier, rng.uniform(0, 6.3))
        sigma2 = rng.uniform(0.01, 1.0) * abs(user.gain) ** 2
        W = make_combiner(4, 4, rng) * rng.uniform(0.5, 2.0, size=(4, 1))
        h = channel_hybrid([pose], model.layout, user, carrier, model.pattern).coefficients
        y = W @ h + combined_noise(W, rng, sigma2)
        est = coarse_search(whiten(MeasurementBatch(0, pose, y, W, sigma2)), model, grid)
        win = _brute_force_winner(y, W, sigma2, pose, model.layout, grid.triples(), carrier.wavenumber)
        agree += (est.distance, est.azimuth, est.elevation) == grid.triple(win)
    elapsed = time.perf_counter() - t0
    ok = agree == 50 and max(sizes) <= 1000 and elapsed < 60
    acceptance_report(capsys, 10, "coarse search vs brute-force residual oracle", ok,
                      f"winner agrees in {agree}/50 trials, |grid| <= {max(sizes)}; {elapsed:.1f} s")
