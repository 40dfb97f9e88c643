"""Far-field, near-field and hybrid-field LoS channels for 6DMA surfaces.

Phase convention: a user at ``p`` reaches an antenna at ``r`` with phase
``exp(-j k |p - r|)``. The plane-wave steering vectors therefore use
``exp(+j k f.r)`` with ``f`` pointing toward the user, which keeps all three
models consistent with the exact spherical-wave distances.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import (
    AntennaPattern,
    ArrayLayout,
    SurfacePose,
    doa_unit_vector,
    global_antenna_positions,
    user_position,
)

from ._kernels import grid_blocks

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class CarrierConfig:
    frequency: float = 100e9
    speed_of_light: float = SPEED_OF_LIGHT

    @property
    def wavelength(self) -> float:
        return self.speed_of_light / self.frequency

    @property
    def wavenumber(self) -> float:
        return 2.0 * np.pi / self.wavelength


@dataclass(frozen=True)
class SystemModel:
    """Everything the channel needs besides poses and the user."""

    layout: ArrayLayout
    carrier: CarrierConfig = field(default_factory=CarrierConfig)
    pattern: AntennaPattern = field(default_factory=AntennaPattern)

    @property
    def n_antennas(self) -> int:
        return self.layout.n_antennas


def free_space_gain(distance, carrier: CarrierConfig, phase: float = 0.0):
    """``lambda / (4 pi d) * exp(j phase)``."""
    return carrier.wavelength / (4.0 * np.pi * np.asarray(distance, dtype=float)) * np.exp(1j * phase)


@dataclass(frozen=True)
class UserPathState:
    """LoS path of one user relative to the BS reference point."""

    distance: float
    azimuth: float
    elevation: float
    gain: complex = 1.0

    def __post_init__(self):
        if not self.distance > 0:
            raise ValueError("distance must be positive")

    @classmethod
    def free_space(cls, distance, azimuth, elevation, carrier: CarrierConfig, phase: float = 0.0):
        return cls(float(distance), float(azimuth), float(elevation),
                   complex(free_space_gain(distance, carrier, phase)))

    @property
    def position(self) -> np.ndarray:
        return user_position(self.distance, self.azimuth, self.elevation)

    @property
    def direction(self) -> np.ndarray:
        return doa_unit_vector(self.azimuth, self.elevation)

    def with_gain(self, gain: complex) -> "UserPathState":
        return UserPathState(self.distance, self.azimuth, self.elevation, complex(gain))


@dataclass(frozen=True)
class ChannelVector:
    coefficients: np.ndarray
    model: str
    poses: tuple

    def __post_init__(self):
        object.__setattr__(self, "coefficients", np.asarray(self.coefficients, dtype=complex))
        object.__setattr__(self, "poses", tuple(self.poses))
        if not np.all(np.isfinite(self.coefficients)):
            raise ValueError("channel contains non-finite entries")

    def __len__(self):
        return self.coefficients.size

    def blocks(self) -> np.ndarray:
        """Coefficients reshaped to ``(n_poses, N)``."""
        return self.coefficients.reshape(len(self.poses), -1)


def _as_poses(poses) -> list[SurfacePose]:
    if isinstance(poses, SurfacePose):
        return [poses]
    return list(poses)


def steering_vector_far(pose: SurfacePose, layout: ArrayLayout, direction,
                        carrier: CarrierConfig) -> np.ndarray:
    """Plane-wave response over the surface antennas at their global positions.

    ``direction`` is a unit vector or an ``(azimuth, elevation)`` pair.
    """
    f = np.asarray(direction, dtype=float)
    if f.shape == (2,):
        f = doa_unit_vector(*f)
    r = global_antenna_positions(pose, layout)
    return np.exp(1j * carrier.wavenumber * (r @ f))


def steering_vector_hybrid(pose: SurfacePose, layout: ArrayLayout, path: UserPathState,
                           carrier: CarrierConfig) -> np.ndarray:
    """Plane-wave response using the surface-relative DOA.

    Antenna offsets are taken from the surface center; the center-to-user
    distance phase is applied separately in :func:`channel_hybrid`.
    """
    delta = path.position - pose.position
    d_b = np.linalg.norm(delta)
    if d_b == 0.0:
        raise ValueError("user coincides with the surface center")
    offsets = layout.positions @ pose.matrix.T
    return np.exp(1j * carrier.wavenumber * (offsets @ (delta / d_b)))


def phasor(phase) -> np.ndarray:
    """``exp(j phase)`` for real ``phase``; cheaper than a complex ``np.exp``."""
    phase = np.asarray(phase, dtype=float)
    out = np.empty(phase.shape, dtype=complex)
    out.real = np.cos(phase)
    out.imag = np.sin(phase)
    return out


def hybrid_blocks_reference(points: np.ndarray, pose: SurfacePose, model: SystemModel):
    """Vectorized numpy version of :func:`hybrid_blocks` for any layout."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    R = pose.matrix
    delta = pts - pose.position
    d_b = np.linalg.norm(delta, axis=1)
    if np.any(d_b == 0.0):
        raise ValueError("user coincides with the surface center")
    local = (delta / d_b[:, None]) @ R
    gain = model.pattern.linear_from_local(local)
    k = model.carrier.wavenumber
    scale = np.sqrt(gain) * phasor(-k * d_b)
    factors = model.layout.factors()
    if factors is None:
        return scale[:, None] * phasor(k * (local @ model.layout.positions.T)), gain, d_b
    y, z, iy, iz = factors
    ey = scale[:, None] * phasor(k * local[:, 1:2] * y)
    ez = phasor(k * local[:, 2:3] * z)
    return ey[:, iy] * ez[:, iz], gain, d_b


def hybrid_blocks(points: np.ndarray, pose: SurfacePose, model: SystemModel):
    """Unit-gain hybrid-field responses of one surface for many user positions.

    Returns ``(blocks, gain, distance)`` where ``blocks`` has shape ``(G, N)``
    and holds ``sqrt(g) exp(-j k d_b) a`` for each point (path gain excluded).
    Uniform planar layouts go through a compiled kernel.
    """
    axes = model.layout.grid_axes()
    if axes is None:
        return hybrid_blocks_reference(points, pose, model)
    pts = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
    n = pts.shape[0]
    blocks = np.empty((n, model.n_antennas), dtype=complex)
    gain = np.empty(n)
    d_b = np.empty(n)
    y0, dy, ny, z0, dz, nz = axes
    grid_blocks(pts, pose.position, np.ascontiguousarray(pose.matrix), model.carrier.wavenumber,
                y0, dy, ny, z0, dz, nz, model.pattern.kernel_params(), blocks, gain, d_b)
    if np.any(d_b == 0.0):
        raise ValueError("user coincides with the surface center")
    return blocks, gain, d_b


def channel_far(poses, layout: ArrayLayout, path: UserPathState, carrier: CarrierConfig,
                pattern: AntennaPattern) -> ChannelVector:
    poses = _as_poses(poses)
    f = path.direction
    parts = []
    for pose in poses:
        g = pattern.linear_from_local(f @ pose.matrix)
        parts.append(np.sqrt(g) * steering_vector_far(pose, layout, f, carrier))
    h = path.gain * np.exp(-1j * carrier.wavenumber * path.distance) * np.concatenate(parts)
    return ChannelVector(h, "far", poses)


def channel_near(poses, layout: ArrayLayout, path: UserPathState, carrier: CarrierConfig,
                 pattern: AntennaPattern, amplitude: str = "taper") -> ChannelVector:
    """Exact spherical-wave channel.

    ``amplitude="taper"`` scales the path gain per antenna by ``d / d_bn``
    (free-space amplitude to each antenna); ``"common"`` keeps one gain.
    """
    if amplitude not in ("taper", "common"):
        raise ValueError(f"unknown amplitude mode {amplitude!r}")
    poses = _as_poses(poses)
    p = path.position
    k = carrier.wavenumber
    parts = []
    for pose in poses:
        delta = p - global_antenna_positions(pose, layout)
        d_bn = np.linalg.norm(delta, axis=1)
        if np.any(d_bn == 0.0):
            raise ValueError("user coincides with an antenna")
        g = pattern.linear_from_local((delta / d_bn[:, None]) @ pose.matrix)
        nu = path.gain * (path.distance / d_bn if amplitude == "taper" else 1.0)
        parts.append(nu * np.sqrt(g) * np.exp(-1j * k * d_bn))
    return ChannelVector(np.concatenate(parts), "near", poses)


def channel_hybrid(poses, layout: ArrayLayout, path: UserPathState, carrier: CarrierConfig,
                   pattern: AntennaPattern) -> ChannelVector:
    poses = _as_poses(poses)
    model = SystemModel(layout, carrier, pattern)
    p = path.position[None, :]
    parts = [hybrid_blocks(p, pose, model)[0][0] for pose in poses]
    return ChannelVector(path.gain * np.concatenate(parts), "hybrid", poses)


def channel(kind: str, poses, layout, path, carrier, pattern, **kwargs) -> ChannelVector:
    builders = {"far": channel_far, "near": channel_near, "hybrid": channel_hybrid}
    try:
        build = builders[kind]
    except KeyError:
        raise ValueError(f"unknown channel model {kind!r}") from None
    return build(poses, layout, path, carrier, pattern, **kwargs)


def rayleigh_distance(aperture: float, carrier: CarrierConfig) -> float:
    if aperture < 0:
        raise ValueError("aperture must be non-negative")
    return 2.0 * aperture ** 2 / carrier.wavelength


def stack_users(kind: str, poses: Sequence[SurfacePose], layout, users, carrier, pattern,
                **kwargs) -> np.ndarray:
    """Channel matrix with one column per user, shape ``(N*B, K)``."""
    return np.column_stack([
        channel(kind, poses, layout, u, carrier, pattern, **kwargs).coefficients for u in users
    ])
