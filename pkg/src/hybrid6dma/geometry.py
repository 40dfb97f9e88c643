"""Coordinate machinery for 6DMA surfaces.

Conventions
-----------
* Angles are always passed as ``(azimuth, elevation)`` in radians.
* Direction vectors point from the array (BS center or surface center) toward
  the user.
* Each surface has a local frame whose x'-axis is the surface normal
  (boresight); antennas sit in the local y'-z' plane.
* ``rotation_matrix(u)`` maps local coordinates into the global frame, so
  ``R.T`` maps global directions into the local frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi
POLE_TOL = 1e-12


def wrap_to_pi(angle):
    """Wrap angle(s) to [-pi, pi)."""
    return (np.asarray(angle) + np.pi) % TWO_PI - np.pi


def wrap_to_2pi(angle):
    return np.mod(np.asarray(angle, dtype=float), TWO_PI)


def rotation_matrix(u) -> np.ndarray:
    """Rotation matrix for rotation angles ``u = (alpha, beta, gamma)``.

    Accepts a single 3-vector or a stack of shape ``(..., 3)`` and returns
    ``(..., 3, 3)``.
    """
    u = np.asarray(u, dtype=float)
    a, b, g = wrap_to_2pi(u[..., 0]), wrap_to_2pi(u[..., 1]), wrap_to_2pi(u[..., 2])
    ca, sa = np.cos(a), np.sin(a)
    cb, sb = np.cos(b), np.sin(b)
    cg, sg = np.cos(g), np.sin(g)
    R = np.empty(u.shape[:-1] + (3, 3))
    R[..., 0, 0] = cb * cg
    R[..., 0, 1] = cb * sg
    R[..., 0, 2] = -sb
    R[..., 1, 0] = sb * sa * cg - ca * sg
    R[..., 1, 1] = sb * sa * sg + ca * cg
    R[..., 1, 2] = cb * sa
    R[..., 2, 0] = ca * sb * cg + sa * sg
    R[..., 2, 1] = ca * sb * sg - sa * cg
    R[..., 2, 2] = ca * cb
    return R


def rotation_angles(R: np.ndarray) -> np.ndarray:
    """Inverse of :func:`rotation_matrix`; returns ``u`` wrapped to [0, 2pi).

    At gimbal lock (``cos(beta) = 0``) alpha is set to 0.
    """
    R = np.asarray(R, dtype=float)
    beta = -np.arcsin(np.clip(R[0, 2], -1.0, 1.0))
    if np.hypot(R[0, 0], R[0, 1]) < 1e-12:
        alpha = 0.0
        gamma = np.arctan2(-R[1, 0], R[1, 1])
    else:
        alpha = np.arctan2(R[1, 2], R[2, 2])
        gamma = np.arctan2(R[0, 1], R[0, 0])
    return wrap_to_2pi([alpha, beta, gamma])


def is_rotation_matrix(R: np.ndarray, tol: float = 1e-12) -> bool:
    R = np.asarray(R, dtype=float)
    return bool(
        np.allclose(R.T @ R, np.eye(3), rtol=0.0, atol=tol)
        and abs(np.linalg.det(R) - 1.0) <= tol
    )


@dataclass(frozen=True)
class SurfacePose:
    """Position ``q`` (m) and rotation ``u = (alpha, beta, gamma)`` (rad)."""

    position: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = np.asarray(self.position, dtype=float).reshape(3)
        u = wrap_to_2pi(np.asarray(self.rotation, dtype=float).reshape(3))
        object.__setattr__(self, "position", q)
        object.__setattr__(self, "rotation", u)

    @property
    def matrix(self) -> np.ndarray:
        return rotation_matrix(self.rotation)

    @property
    def normal(self) -> np.ndarray:
        """Global direction of the local x'-axis (boresight)."""
        return self.matrix[:, 0]

    def inside_site(self, side_length: float, center=(0.0, 0.0, 0.0), tol: float = 1e-12) -> bool:
        """Axis-aligned cube test for the site space."""
        offset = np.abs(self.position - np.asarray(center, dtype=float))
        return bool(np.all(offset <= side_length / 2 + tol))

    @classmethod
    def facing(cls, position, direction) -> "SurfacePose":
        """Pose at ``position`` whose boresight points along ``direction``.

        Roll about the normal is fixed so that the local y'-axis is horizontal.
        """
        n = np.asarray(direction, dtype=float)
        n = n / np.linalg.norm(n)
        az, el = angles_from_unit_vector(n)
        y_axis = np.array([-np.sin(az), np.cos(az), 0.0])
        z_axis = np.cross(n, y_axis)
        R = np.column_stack([n, y_axis, z_axis])
        return cls(position, rotation_angles(R))


@dataclass(frozen=True)
class ArrayLayout:
    """Antenna positions in the local frame, shape ``(N, 3)``."""

    positions: np.ndarray
    spacing: float

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.shape[1] != 3:
            raise ValueError("antenna positions must have shape (N, 3)")
        object.__setattr__(self, "positions", pos)

    @property
    def n_antennas(self) -> int:
        return self.positions.shape[0]

    def factors(self):
        """Planar factorization ``(y_values, z_values, y_index, z_index)`` or None.

        For a layout in the y'-z' plane every antenna phase splits into a
        y' term and a z' term, so only the distinct coordinates need
        complex exponentials. Returns None when some antenna leaves the plane.
        """
        pos = self.positions
        if np.any(pos[:, 0] != 0.0):
            return None
        y, iy = np.unique(pos[:, 1], return_inverse=True)
        z, iz = np.unique(pos[:, 2], return_inverse=True)
        return y, z, iy.ravel(), iz.ravel()

    def grid_axes(self):
        """``(y0, dy, ny, z0, dz, nz)`` when antenna ``n`` sits at
        ``(0, y0 + (n % ny) dy, z0 + (n // ny) dz)``, else None."""
        f = self.factors()
        if f is None:
            return None
        y, z, iy, iz = f
        if iy.size != y.size * z.size or not np.array_equal(iz * y.size + iy, np.arange(iy.size)):
            return None
        dy = float(y[1] - y[0]) if y.size > 1 else 0.0
        dz = float(z[1] - z[0]) if z.size > 1 else 0.0
        if not (np.allclose(np.diff(y), dy, rtol=0, atol=1e-15)
                and np.allclose(np.diff(z), dz, rtol=0, atol=1e-15)):
            return None
        return float(y[0]), dy, int(y.size), float(z[0]), dz, int(z.size)

    @classmethod
    def upa(cls, n_rows: int, n_cols: int, spacing: float) -> "ArrayLayout":
        """Uniform planar array in the y'-z' plane, centered at the origin."""
        if n_rows < 1 or n_cols < 1:
            raise ValueError("UPA needs at least one row and one column")
        y = (np.arange(n_cols) - (n_cols - 1) / 2) * spacing
        z = (np.arange(n_rows) - (n_rows - 1) / 2) * spacing
        zz, yy = np.meshgrid(z, y, indexing="ij")
        pos = np.column_stack([np.zeros(zz.size), yy.ravel(), zz.ravel()])
        return cls(pos, spacing)

    @classmethod
    def square(cls, n_antennas: int, spacing: float) -> "ArrayLayout":
        """Most-square UPA with exactly ``n_antennas`` elements."""
        rows = int(np.floor(np.sqrt(n_antennas)))
        while n_antennas % rows:
            rows -= 1
        return cls.upa(rows, n_antennas // rows, spacing)


def global_antenna_positions(pose: SurfacePose, layout: ArrayLayout) -> np.ndarray:
    """All antenna positions ``q + R r_n`` in the global frame, ``(N, 3)``."""
    return pose.position + layout.positions @ pose.matrix.T


def global_antenna_position(pose: SurfacePose, layout: ArrayLayout, n: int) -> np.ndarray:
    """Global position of antenna ``n`` (1-based, as in the model)."""
    if not 1 <= n <= layout.n_antennas:
        raise IndexError(f"antenna index {n} outside 1..{layout.n_antennas}")
    return pose.position + pose.matrix @ layout.positions[n - 1]


def doa_unit_vector(azimuth, elevation) -> np.ndarray:
    """``[cos(el)cos(az), cos(el)sin(az), sin(el)]``, broadcast to ``(..., 3)``."""
    az = np.asarray(azimuth, dtype=float)
    el = np.asarray(elevation, dtype=float)
    ce = np.cos(el)
    return np.stack(np.broadcast_arrays(ce * np.cos(az), ce * np.sin(az), np.sin(el)), axis=-1)


def angles_from_unit_vector(v, tol: float = 1e-9):
    """Return ``(azimuth, elevation)`` of unit vector(s) ``v``.

    Azimuth is 0 at the poles. Raises ``ValueError`` for non-unit input.
    """
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v, axis=-1)
    if np.any(np.abs(norm - 1.0) > tol):
        raise ValueError("expected unit-norm direction vector(s)")
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    horiz = np.hypot(x, y)
    elevation = np.arctan2(z, horiz)
    azimuth = np.where(horiz < POLE_TOL, 0.0, np.arctan2(y, x))
    if azimuth.ndim == 0:
        return float(azimuth), float(elevation)
    return azimuth, elevation


def _angles_unchecked(v):
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    horiz = np.hypot(x, y)
    return np.where(horiz < POLE_TOL, 0.0, np.arctan2(y, x)), np.arctan2(z, horiz)


def project_to_local_frame(direction, rotation) -> np.ndarray:
    """Express global direction(s) in the local frame of a surface.

    ``rotation`` is either ``u`` (3-vector) or a 3x3 rotation matrix.
    """
    R = np.asarray(rotation, dtype=float)
    if R.shape != (3, 3):
        R = rotation_matrix(R)
    return np.asarray(direction, dtype=float) @ R


def local_angles(direction, rotation):
    """Local ``(azimuth, elevation)`` of global unit direction(s)."""
    return angles_from_unit_vector(project_to_local_frame(direction, rotation))


def user_position(distance, azimuth, elevation) -> np.ndarray:
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    return d[..., None] * doa_unit_vector(azimuth, elevation)


@dataclass(frozen=True)
class RelativeGeometry:
    distance: float
    local_azimuth: float
    local_elevation: float
    azimuth: float
    elevation: float
    direction: np.ndarray


def surface_relative_params(user_pos, pose: SurfacePose) -> RelativeGeometry:
    """Distance and directions of a user seen from a surface center."""
    delta = np.asarray(user_pos, dtype=float) - pose.position
    d_b = float(np.linalg.norm(delta))
    if d_b == 0.0:
        raise ValueError("user coincides with the surface center")
    f = delta / d_b
    az, el = angles_from_unit_vector(f)
    laz, lel = _angles_unchecked(project_to_local_frame(f, pose.matrix))
    return RelativeGeometry(d_b, float(laz), float(lel), az, el, f)


@dataclass(frozen=True)
class AntennaPattern:
    """Single-element directive pattern (3GPP TR 38.901 style).

    Gain is forced to exactly zero for directions in the back half-space of
    the surface (local x' <= 0) and, when ``floor_dbi`` is set, for any
    direction whose gain is at or below that floor.
    """

    max_gain_dbi: float = 8.0
    hpbw_vertical: float = np.deg2rad(65.0)
    hpbw_horizontal: float = np.deg2rad(65.0)
    max_attenuation_db: float = 30.0
    side_lobe_db: float = 30.0
    floor_dbi: float | None = None
    isotropic: bool = False

    @classmethod
    def omni(cls) -> "AntennaPattern":
        """Isotropic 0 dBi element with no back-side clamp."""
        return cls(max_gain_dbi=0.0, isotropic=True)

    def kernel_params(self) -> np.ndarray:
        """Pattern constants packed for the compiled kernels."""
        return np.array([
            self.max_gain_dbi, self.hpbw_vertical, self.hpbw_horizontal,
            self.max_attenuation_db, self.side_lobe_db,
            0.0 if self.floor_dbi is None else self.floor_dbi,
            float(self.floor_dbi is not None), float(self.isotropic),
        ])

    def gain_dbi(self, azimuth, elevation):
        """Pattern in dBi for local angles (no half-space clamp)."""
        az = wrap_to_pi(azimuth)
        el = np.asarray(elevation, dtype=float)
        if self.isotropic:
            return np.full(np.broadcast(az, el).shape, self.max_gain_dbi)
        att_v = np.minimum(12.0 * (el / self.hpbw_vertical) ** 2, self.side_lobe_db)
        att_h = np.minimum(12.0 * (az / self.hpbw_horizontal) ** 2, self.max_attenuation_db)
        return self.max_gain_dbi - np.minimum(att_v + att_h, self.max_attenuation_db)

    def linear_from_local(self, local_dir) -> np.ndarray:
        """Linear gain for local-frame unit direction(s), shape ``(...)``."""
        v = np.asarray(local_dir, dtype=float)
        az, el = _angles_unchecked(v)
        a_db = self.gain_dbi(az, el)
        gain = 10.0 ** (a_db / 10.0)
        if self.isotropic:
            return gain
        dark = v[..., 0] <= 0.0
        if self.floor_dbi is not None:
            dark = dark | (a_db <= self.floor_dbi)
        return np.where(dark, 0.0, gain)

    def linear(self, azimuth, elevation) -> np.ndarray:
        """Linear gain for local angles."""
        return self.linear_from_local(doa_unit_vector(azimuth, elevation))


def effective_gain_linear(pattern: AntennaPattern, azimuth, elevation):
    g = pattern.linear(azimuth, elevation)
    return float(g) if np.ndim(g) == 0 else g
