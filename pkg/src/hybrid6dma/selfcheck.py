"""Fast invariant checks backing ``hybrid6dma selftest``."""

from __future__ import annotations

import numpy as np

from .channel import CarrierConfig, SystemModel, UserPathState, channel_far, channel_hybrid, channel_near
from .estimator import FineGridSpec, GridSpec, refine_joint, reconstruct_channel
from .geometry import AntennaPattern, ArrayLayout, SurfacePose, is_rotation_matrix
from .pilot import make_combiner, measure_poses, whiten, MeasurementBatch, combined_noise
from .scenario import channel_nmse, place_candidate_poses


def check_rotations(inject_fault: bool = False):
    poses = place_candidate_poses(32, 0.5)
    mats = [p.matrix for p in poses]
    if inject_fault:
        mats[0] = mats[0].copy()
        mats[0][0, 0] += 1e-3
    bad = [i for i, R in enumerate(mats) if not is_rotation_matrix(R, tol=1e-12)]
    return not bad, f"{len(mats) - len(bad)}/{len(mats)} candidate rotations orthonormal"


def _random_user(rng, carrier):
    d = rng.uniform(20.0, 800.0)
    return UserPathState.free_space(d, rng.uniform(-np.pi, np.pi), rng.uniform(-np.pi / 2, np.pi / 2),
                                    carrier, rng.uniform(0, 2 * np.pi))


def check_reduction_far(n_cases: int = 20, seed: int = 0):
    rng = np.random.default_rng(seed)
    carrier, pattern = CarrierConfig(), AntennaPattern()
    layout = ArrayLayout.square(16, carrier.wavelength / 2)
    worst = 0.0
    for _ in range(n_cases):
        pose = SurfacePose(np.zeros(3), rng.uniform(0, 2 * np.pi, 3))
        user = _random_user(rng, carrier)
        a = channel_hybrid([pose], layout, user, carrier, pattern).coefficients
        b = channel_far([pose], layout, user, carrier, pattern).coefficients
        worst = max(worst, float(np.max(np.abs(a - b))))
    return worst <= 1e-12, f"single surface at the origin: hybrid vs far max |diff| {worst:.2e}"


def check_reduction_near(n_cases: int = 20, seed: int = 1):
    rng = np.random.default_rng(seed)
    carrier, pattern = CarrierConfig(), AntennaPattern()
    layout = ArrayLayout.square(1, carrier.wavelength / 2)
    worst = 0.0
    for _ in range(n_cases):
        poses = [SurfacePose(rng.uniform(-0.25, 0.25, 3), rng.uniform(0, 2 * np.pi, 3)) for _ in range(8)]
        user = _random_user(rng, carrier)
        a = channel_hybrid(poses, layout, user, carrier, pattern).coefficients
        b = channel_near(poses, layout, user, carrier, pattern, amplitude="common").coefficients
        worst = max(worst, float(np.max(np.abs(a - b))))
    return worst <= 1e-12, f"one antenna per surface: hybrid vs near max |diff| {worst:.2e}"


def check_whitening(n_draws: int = 20000, seed: int = 2):
    rng = np.random.default_rng(seed)
    W = make_combiner(16, 10, rng)
    sigma2 = 0.7
    Z = np.empty((n_draws, W.shape[0]), dtype=complex)
    D = None
    for i in range(n_draws):
        z = combined_noise(W, rng, sigma2)
        if D is None:
            D = whiten(MeasurementBatch(0, SurfacePose(np.zeros(3)), z, W, sigma2)).cholesky
        Z[i] = np.linalg.solve(D, z)
    C = Z.T @ Z.conj() / n_draws
    err = float(np.max(np.abs(C - sigma2 * np.eye(W.shape[0]))) / sigma2)
    return err <= 0.05, f"whitened noise covariance max relative deviation {err:.3f} ({n_draws} draws)"


def check_noiseless_exactness(seed: int = 3):
    carrier = CarrierConfig()
    model = SystemModel(ArrayLayout.square(16, carrier.wavelength / 2), carrier, AntennaPattern())
    poses = place_candidate_poses(32, 0.5)
    spec = FineGridSpec(20.0, np.radians(2.0), np.radians(2.0), 1.0, np.radians(0.1), np.radians(0.1))
    grid = GridSpec.fine((300.0, 0.7, 0.4), spec)
    d, az, el = grid.triple(grid.size // 2 + 37)
    user = UserPathState.free_space(d, az, el, carrier, 0.3)
    meas = measure_poses(poses, model, user, 10, 0.0, seed)
    lit = [whiten(m) for m in meas if np.any(m.received != 0)]
    est = refine_joint(lit, model, grid)
    held = place_candidate_poses(10, 0.5, azimuth_offset=1.0)
    truth = channel_hybrid(held, model.layout, user, carrier, model.pattern)
    nmse = channel_nmse(reconstruct_channel(est, held, model), truth)
    exact = (est.distance, est.azimuth, est.elevation) == (d, az, el)
    rel = abs(est.gain - user.gain) / abs(user.gain)
    ok = exact and rel <= 1e-8 and nmse < 1e-6 and len(lit) >= 3
    return ok, f"{len(lit)} lit poses, grid point exact={exact}, gain rel err {rel:.1e}, NMSE {nmse:.1e}"


def run_checks(inject_fault: bool = False):
    checks = [
        ("rotation-orthonormality", lambda: check_rotations(inject_fault)),
        ("reduction-far", check_reduction_far),
        ("reduction-near", check_reduction_near),
        ("whitening-covariance", check_whitening),
        ("noiseless-exactness", check_noiseless_exactness),
    ]
    for name, fn in checks:
        try:
            passed, detail = fn()
        except Exception as exc:  # noqa: BLE001 - a crash is a failed check
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        yield name, bool(passed), detail
