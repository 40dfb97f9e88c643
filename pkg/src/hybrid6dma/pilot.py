"""Uplink pilot synthesis through analog combiners, and pre-whitening.

Row ``t`` of a combiner matrix ``W`` is ``w_t^H``, so one time slot reads
``y_t = w_t^H (h + n_t)`` with ``n_t ~ CN(0, sigma^2 I_N)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .channel import SystemModel, UserPathState, hybrid_blocks
from .geometry import SurfacePose


def pose_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for pose ``index`` under master ``seed``."""
    return np.random.default_rng([int(seed), int(index)])


def make_combiner(n_antennas: int, n_slots: int, seed=None) -> np.ndarray:
    """Random-phase constant-modulus combiner, shape ``(T, N)``, entries ``1/sqrt(N)``."""
    if n_antennas < 1 or n_slots < 1:
        raise ValueError("need N >= 1 and T >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    psi = rng.uniform(0.0, 2.0 * np.pi, size=(n_slots, n_antennas))
    return np.exp(1j * psi) / np.sqrt(n_antennas)


def complex_normal(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def combined_noise(combiner: np.ndarray, rng: np.random.Generator, variance: float = 1.0) -> np.ndarray:
    """Noise after combining: entry ``t`` is ``w_t^H n_t``."""
    n = complex_normal(rng, combiner.shape, variance)
    return np.sum(combiner * n, axis=1)


@dataclass(frozen=True)
class MeasurementBatch:
    index: int
    pose: SurfacePose
    received: np.ndarray
    combiner: np.ndarray
    noise_variance: float

    def __post_init__(self):
        # several observation columns may share one combiner: (T,) or (T, C)
        if self.received.ndim not in (1, 2) or self.received.shape[0] != self.combiner.shape[0]:
            raise ValueError("received vector length must equal the number of slots")

    @property
    def n_columns(self) -> int:
        return 1 if self.received.ndim == 1 else self.received.shape[1]

    def column(self, c: int) -> "MeasurementBatch":
        if self.received.ndim == 1:
            if c != 0:
                raise IndexError("single-column measurement")
            return self
        return MeasurementBatch(self.index, self.pose, self.received[:, c], self.combiner,
                                self.noise_variance)


@dataclass(frozen=True)
class WhitenedMeasurement:
    index: int
    pose: SurfacePose
    received: np.ndarray     # D^-1 y, (T,) or (T, C)
    effective: np.ndarray    # Gamma = D^-1 W
    cholesky: np.ndarray     # lower-triangular D with C = sigma^2 D D^H

    def column(self, c: int) -> "WhitenedMeasurement":
        if self.received.ndim == 1:
            if c != 0:
                raise IndexError("single-column measurement")
            return self
        return WhitenedMeasurement(self.index, self.pose, self.received[:, c], self.effective,
                                   self.cholesky)


def pose_channel(pose: SurfacePose, model: SystemModel, path: UserPathState) -> np.ndarray:
    """Single-pose hybrid-field channel ``h_m`` (length N)."""
    block, _, _ = hybrid_blocks(path.position[None, :], pose, model)
    return path.gain * block[0]


def simulate_measurement(pose: SurfacePose, model: SystemModel, path: UserPathState,
                         combiner: np.ndarray, noise_variance: float, seed=None,
                         index: int = 0) -> MeasurementBatch:
    if noise_variance < 0:
        raise ValueError("noise variance must be non-negative")
    h = pose_channel(pose, model, path)
    y = combiner @ h
    if noise_variance > 0:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        y = y + combined_noise(combiner, rng, noise_variance)
    return MeasurementBatch(index, pose, y, combiner, float(noise_variance))


def noise_shape(combiner: np.ndarray) -> np.ndarray:
    """Noise covariance divided by sigma^2 for independent per-slot noise."""
    return np.diag(np.sum(np.abs(combiner) ** 2, axis=1)).astype(complex)


def whiten(batch: MeasurementBatch) -> WhitenedMeasurement:
    shape = noise_shape(batch.combiner)
    if np.any(np.real(np.diag(shape)) <= 0):
        raise np.linalg.LinAlgError("combiner has a zero row; noise covariance is singular")
    D = np.linalg.cholesky(shape)
    y_bar = solve_triangular(D, batch.received, lower=True)
    gamma = solve_triangular(D, batch.combiner, lower=True)
    return WhitenedMeasurement(batch.index, batch.pose, y_bar, gamma, D)


def measure_poses(poses, model: SystemModel, path: UserPathState, n_slots: int,
                  noise_variance: float, seed: int = 0) -> list[MeasurementBatch]:
    """One measurement per pose; combiner and noise use per-pose generators."""
    out = []
    for m, pose in enumerate(poses):
        rng = pose_rng(seed, m)
        W = make_combiner(model.n_antennas, n_slots, rng)
        out.append(simulate_measurement(pose, model, path, W, noise_variance, rng, index=m))
    return out
