"""Seeded experiment drivers: sparsity map, capacity sweep and MSE-vs-SNR.

Every trial draws its randomness from generators keyed on ``(seed, trial,
...)`` so results do not depend on how trials are scheduled across threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import SystemModel, UserPathState, channel_hybrid, stack_users
from .estimator import (
    DarkCandidateError,
    GridPreset,
    RefinedEstimate,
    ls_baseline_columns,
    reconstruct_channel,
    run_estimator_columns,
)
from .pilot import MeasurementBatch, complex_normal, make_combiner, pose_channel
from .scenario import (
    ScenarioConfig,
    channel_nmse,
    place_candidate_poses,
    sample_users,
    sparsity_map,
    sum_capacity,
)

# held-out poses are a Fibonacci set rotated away from the measured one
HELD_OUT_OFFSET = 1.0
N_HELD_OUT = 10


def trial_rng(seed: int, trial: int, *stream: int) -> np.random.Generator:
    # the stream length is part of the key because SeedSequence ignores
    # trailing zeros, which would make (s, t) and (s, t, 0) collide
    return np.random.default_rng([int(seed), int(trial), len(stream), *map(int, stream)])


def map_trials(fn, n_trials: int, threads: int | None = None) -> list:
    """``[fn(0), ..., fn(n - 1)]`` evaluated on a thread pool, in trial order."""
    threads = threads or os.cpu_count() or 1
    if threads <= 1:
        return [fn(t) for t in range(n_trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n_trials)))


@dataclass
class Series:
    """One curve: x values, mean y, standard error."""

    name: str
    x: list
    y: list
    stderr: list
    extra: dict = field(default_factory=dict)


def _summary(values: np.ndarray) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))


# ---------------------------------------------------------------------------
# Sparsity map
# ---------------------------------------------------------------------------

def sparsity_experiment(cfg: ScenarioConfig, seed: int = 0):
    """Received power of each of ``K`` users at each of ``M`` candidate poses."""
    model = cfg.system()
    poses = place_candidate_poses(cfg.n_candidates, cfg.site_side)
    users = sample_users(cfg.n_users, (cfg.d_min, cfg.d_max), trial_rng(seed, 0), cfg.carrier)
    return sparsity_map(users, poses, model), users, poses


# ---------------------------------------------------------------------------
# Capacity versus distance
# ---------------------------------------------------------------------------

def capacity_draw(cfg: ScenarioConfig, distance: float, seed: int, trial: int,
                  snr_db: float = 10.0, amplitude: str = "common") -> dict:
    """Sum capacity of the three channel models for one random draw.

    ``B`` surfaces are a random subset of the ``M`` candidates and the ``K``
    users sit at ``distance`` in random upper-half-space directions. The
    transmit power is set so that a user at ``distance`` has mean per-antenna
    SNR ``snr_db`` toward a boresight-facing surface. ``amplitude`` selects
    the near-field gain mode; ``"common"`` matches the single path gain the
    far and hybrid models carry, so only the wavefront models differ.
    """
    rng = trial_rng(seed, trial)
    model = cfg.system()
    candidates = place_candidate_poses(cfg.n_candidates, cfg.site_side)
    chosen = np.sort(rng.choice(cfg.n_candidates, size=cfg.n_surfaces, replace=False))
    poses = [candidates[i] for i in chosen]
    users = sample_users(cfg.n_users, (distance, distance), rng, cfg.carrier)
    g0 = model.pattern.linear(0.0, 0.0)
    ref_power = float(g0 * abs(users[0].gain) ** 2)
    noise = 1.0
    tx = noise * 10 ** (snr_db / 10) / ref_power
    out = {}
    for kind in ("far", "near", "hybrid"):
        kw = {"amplitude": amplitude} if kind == "near" else {}
        H = stack_users(kind, poses, model.layout, users, model.carrier, model.pattern, **kw)
        out[kind] = sum_capacity(H, noise, tx)
    return out


def capacity_vs_distance(cfg: ScenarioConfig, distances, n_draws: int = 100, seed: int = 0,
                         snr_db: float = 10.0, threads: int | None = None,
                         amplitude: str = "common") -> dict:
    """Per-distance capacity draws for the far, near and hybrid models."""
    result = {}
    for i, d in enumerate(distances):
        draws = map_trials(lambda t: capacity_draw(cfg, d, seed + 7919 * i, t, snr_db, amplitude),
                           n_draws, threads)
        result[float(d)] = {k: np.array([r[k] for r in draws]) for k in ("far", "near", "hybrid")}
    return result


# ---------------------------------------------------------------------------
# MSE versus SNR
# ---------------------------------------------------------------------------

def noise_variance_for_snr(channels, n_antennas: int, snr_db: float) -> float:
    """``sigma^2`` giving mean per-antenna SNR ``snr_db`` over the lit poses."""
    power = np.array([np.vdot(h, h).real for h in channels])
    lit = power[power > 0]
    if lit.size == 0:
        raise ValueError("user is dark at every measured pose")
    return float(lit.mean() / (n_antennas * 10 ** (snr_db / 10)))


def measure_snr_sweep(poses, model: SystemModel, user: UserPathState, n_slots: int, snrs_db,
                      seed: int, trial: int) -> list[MeasurementBatch]:
    """Measurements whose columns are the same noise draw scaled to each SNR.

    Combiners and unit-variance noise are drawn once per pose, so all SNR
    points see common random numbers.
    """
    channels = [pose_channel(p, model, user) for p in poses]
    scales = np.sqrt([noise_variance_for_snr(channels, model.n_antennas, s) for s in snrs_db])
    out = []
    for m, (pose, h) in enumerate(zip(poses, channels)):
        rng = trial_rng(seed, trial, 1, m)
        W = make_combiner(model.n_antennas, n_slots, rng)
        z = np.sum(W * complex_normal(rng, W.shape), axis=1)
        Y = (W @ h)[:, None] + z[:, None] * scales[None, :]
        out.append(MeasurementBatch(m, pose, Y, W, float(scales[0] ** 2)))
    return out


def _nmse(estimate: RefinedEstimate | None, held, model: SystemModel, truth) -> float:
    if estimate is None:
        return 1.0
    return channel_nmse(reconstruct_channel(estimate, held, model), truth)


def mse_trial(cfg: ScenarioConfig, preset: GridPreset, snrs_db, n_candidates: int, seed: int,
              trial: int, include_ls: bool = True, threshold: float | None = None) -> dict:
    """NMSE at held-out poses for one user, for every SNR point."""
    model = cfg.system()
    poses = place_candidate_poses(n_candidates, cfg.site_side)
    held = place_candidate_poses(N_HELD_OUT, cfg.site_side, azimuth_offset=HELD_OUT_OFFSET)
    user = sample_users(1, (cfg.d_min, cfg.d_max), trial_rng(seed, trial, 0), cfg.carrier)[0]
    truth = channel_hybrid(held, model.layout, user, model.carrier, model.pattern)
    meas = measure_snr_sweep(poses, model, user, cfg.n_slots, snrs_db, seed, trial)
    grid = preset.coarse_grid()
    eps = preset.default_threshold() if threshold is None else threshold
    try:
        runs = run_estimator_columns(meas, model, grid, preset.fine, eps)
        alg = [_nmse(r, held, model, truth) for r, _ in runs]
        sizes = [len(d.members) for _, d in runs]
    except DarkCandidateError:
        alg, sizes = [1.0] * len(snrs_db), [0] * len(snrs_db)
    out = {"clustered": alg, "cluster_size": sizes}
    if include_ls:
        out["ls"] = [_nmse(r, held, model, truth)
                     for r in ls_baseline_columns(meas, model, grid, preset.fine)]
    return out


def mse_vs_snr(cfg: ScenarioConfig, preset: GridPreset, snrs_db=(0, 5, 10, 15, 20),
               n_trials: int = 100, n_candidates: int | None = None, seed: int = 0,
               include_ls: bool = True, threads: int | None = None,
               threshold: float | None = None) -> dict:
    """Mean NMSE per SNR point for the clustered estimator and, optionally, the LS baseline.

    Returns ``{"snr_db": [...], "clustered": Series, "ls": Series, "raw": {...}}``.
    """
    M = cfg.n_candidates if n_candidates is None else n_candidates
    trials = map_trials(lambda t: mse_trial(cfg, preset, snrs_db, M, seed, t, include_ls, threshold),
                        n_trials, threads)
    out = {"snr_db": list(snrs_db), "raw": {}}
    names = ("clustered", "ls") if include_ls else ("clustered",)
    for name in names:
        values = np.array([t[name] for t in trials])    # (n_trials, n_snr)
        stats = [_summary(values[:, i]) for i in range(len(snrs_db))]
        out[name] = Series(name, list(snrs_db), [s[0] for s in stats], [s[1] for s in stats])
        out["raw"][name] = values
    out["raw"]["cluster_size"] = np.array([t["cluster_size"] for t in trials])
    return out
