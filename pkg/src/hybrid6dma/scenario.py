"""Experiment worlds: pose placement, user populations and metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import CarrierConfig, SystemModel, UserPathState, channel_hybrid, rayleigh_distance
from .geometry import AntennaPattern, ArrayLayout, SurfacePose

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


@dataclass(frozen=True)
class ScenarioConfig:
    n_surfaces: int = 8          # B
    n_antennas: int = 16         # N
    n_users: int = 25            # K
    n_candidates: int = 32       # M
    n_slots: int = 10            # T
    site_side: float = 0.5       # A (m)
    carrier: CarrierConfig = field(default_factory=CarrierConfig)
    spacing_wavelengths: float = 0.5
    d_min: float = 20.0
    d_max: float = 800.0
    seed: int = 0

    def __post_init__(self):
        for name in ("n_surfaces", "n_antennas", "n_users", "n_candidates", "n_slots"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.n_surfaces > self.n_candidates:
            raise ValueError("n_surfaces must not exceed n_candidates")
        if not 0 < self.d_min < self.d_max:
            raise ValueError("need 0 < d_min < d_max")

    @property
    def aperture(self) -> float:
        return self.site_side * np.sqrt(3.0)

    @property
    def rayleigh_distance(self) -> float:
        return rayleigh_distance(self.aperture, self.carrier)

    def layout(self) -> ArrayLayout:
        return ArrayLayout.square(self.n_antennas, self.spacing_wavelengths * self.carrier.wavelength)

    def system(self, pattern: AntennaPattern | None = None) -> SystemModel:
        return SystemModel(self.layout(), self.carrier, pattern or AntennaPattern())


def fibonacci_directions(n: int, azimuth_offset: float = 0.0) -> np.ndarray:
    """``n`` near-uniform unit vectors; ``n = 1`` gives the north pole."""
    if n < 1:
        raise ValueError("need at least one point")
    if n == 1:
        return np.array([[0.0, 0.0, 1.0]])
    i = np.arange(n)
    z = 1.0 - (2.0 * i + 1.0) / n
    r = np.sqrt(1.0 - z ** 2)
    az = azimuth_offset + GOLDEN_ANGLE * i
    return np.column_stack([r * np.cos(az), r * np.sin(az), z])


def place_candidate_poses(n_poses: int, side: float, center=(0.0, 0.0, 0.0),
                          azimuth_offset: float = 0.0) -> list[SurfacePose]:
    """Outward-facing poses on the largest sphere inside the cubic site."""
    c = np.asarray(center, dtype=float)
    dirs = fibonacci_directions(n_poses, azimuth_offset)
    return [SurfacePose.facing(c + 0.5 * side * n, n) for n in dirs]


def sample_users(n_users: int, d_range=(20.0, 800.0), seed=0, carrier: CarrierConfig | None = None,
                 upper_half: bool = True, random_phase: bool = False) -> list[UserPathState]:
    """Users uniform in volume over a spherical annulus around the BS center."""
    if n_users < 1:
        raise ValueError("need at least one user")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    carrier = carrier or CarrierConfig()
    lo, hi = d_range
    d = np.cbrt(lo ** 3 + rng.uniform(size=n_users) * (hi ** 3 - lo ** 3))
    az = rng.uniform(-np.pi, np.pi, size=n_users)
    sin_el = rng.uniform(0.0 if upper_half else -1.0, 1.0, size=n_users)
    el = np.arcsin(sin_el)
    phase = rng.uniform(0, 2 * np.pi, size=n_users) if random_phase else np.zeros(n_users)
    return [UserPathState.free_space(d[k], az[k], el[k], carrier, phase[k]) for k in range(n_users)]


@dataclass(frozen=True)
class SparsityMap:
    power: np.ndarray   # (K, M)

    def visibility(self, user: int) -> np.ndarray:
        return np.flatnonzero(self.power[user] > 0)

    @property
    def support_sizes(self) -> np.ndarray:
        return np.count_nonzero(self.power > 0, axis=1)


def sparsity_map(users, poses, model: SystemModel) -> SparsityMap:
    power = np.empty((len(users), len(poses)))
    for k, u in enumerate(users):
        h = channel_hybrid(poses, model.layout, u, model.carrier, model.pattern).blocks()
        power[k] = np.sum(np.abs(h) ** 2, axis=1)
    return SparsityMap(power)


def sum_capacity(channels: np.ndarray, noise_power: float, tx_power: float) -> float:
    """Uplink sum capacity ``log2 det(I_K + (P/sigma^2) H^H H)`` in bits/s/Hz."""
    H = np.asarray(channels, dtype=complex)
    if H.ndim == 1:
        H = H[:, None]
    rho = tx_power / noise_power
    gram = np.eye(H.shape[1]) + rho * (H.conj().T @ H)
    _, logdet = np.linalg.slogdet(gram)
    return float(logdet / np.log(2.0))


def channel_nmse(estimated, truth) -> float:
    """``|h_est - h|^2 / |h|^2``; ``inf`` when the true channel is zero."""
    e = np.asarray(getattr(estimated, "coefficients", estimated), dtype=complex).ravel()
    t = np.asarray(getattr(truth, "coefficients", truth), dtype=complex).ravel()
    if e.shape != t.shape:
        raise ValueError("channel lengths differ")
    ref = float(np.vdot(t, t).real)
    if ref == 0.0:
        return float("inf")
    return float(np.vdot(e - t, e - t).real / ref)
