"""Compiled inner loops for hybrid-field responses on planar grid layouts.

The numpy implementation in :mod:`hybrid6dma.channel` is the reference;
these kernels compute the same quantities point by point so the searches
avoid large temporaries.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _pattern_gain(lx, ly, lz, gmax, hpbw_v, hpbw_h, att_max, sla, floor, use_floor, iso):
    if iso:
        return 10.0 ** (gmax / 10.0)
    if lx <= 0.0:
        return 0.0
    horiz = math.hypot(lx, ly)
    el = math.atan2(lz, horiz)
    az = 0.0 if horiz < 1e-12 else math.atan2(ly, lx)
    att_v = min(12.0 * (el / hpbw_v) ** 2, sla)
    att_h = min(12.0 * (az / hpbw_h) ** 2, att_max)
    a_db = gmax - min(att_v + att_h, att_max)
    if use_floor and a_db <= floor:
        return 0.0
    return 10.0 ** (a_db / 10.0)


@njit(cache=True)
def grid_blocks(pts, q, R, k, y0, dy, ny, z0, dz, nz, params, out, gain, dist):
    """Fill ``out[g, iz * ny + iy] = sqrt(g) e^{-jkd} e^{jk(l_y y + l_z z)}``.

    ``params`` packs the pattern as ``(gmax, hpbw_v, hpbw_h, att_max, sla,
    floor, use_floor, isotropic)``. Antenna coordinates are ``y0 + iy dy``
    and ``z0 + iz dz``.
    """
    gmax, hv, hh, am, sla, floor = params[0], params[1], params[2], params[3], params[4], params[5]
    use_floor = params[6] != 0.0
    iso = params[7] != 0.0
    ey = np.empty(ny, dtype=np.complex128)
    for g in range(pts.shape[0]):
        dx0 = pts[g, 0] - q[0]
        dx1 = pts[g, 1] - q[1]
        dx2 = pts[g, 2] - q[2]
        d = math.sqrt(dx0 * dx0 + dx1 * dx1 + dx2 * dx2)
        f0, f1, f2 = dx0 / d, dx1 / d, dx2 / d
        lx = f0 * R[0, 0] + f1 * R[1, 0] + f2 * R[2, 0]
        ly = f0 * R[0, 1] + f1 * R[1, 1] + f2 * R[2, 1]
        lz = f0 * R[0, 2] + f1 * R[1, 2] + f2 * R[2, 2]
        gn = _pattern_gain(lx, ly, lz, gmax, hv, hh, am, sla, floor, use_floor, iso)
        gain[g] = gn
        dist[g] = d
        if gn == 0.0:
            for n in range(ny * nz):
                out[g, n] = 0.0
            continue
        amp = math.sqrt(gn)
        ph = k * (ly * y0 - d)
        cur = complex(amp * math.cos(ph), amp * math.sin(ph))
        step = complex(math.cos(k * ly * dy), math.sin(k * ly * dy))
        for i in range(ny):
            ey[i] = cur
            cur *= step
        ph = k * lz * z0
        cz = complex(math.cos(ph), math.sin(ph))
        sz = complex(math.cos(k * lz * dz), math.sin(k * lz * dz))
        for j in range(nz):
            base = j * ny
            for i in range(ny):
                out[g, base + i] = cz * ey[i]
            cz *= sz


@njit(cache=True, nogil=True)
def accumulate_scores(pts, q, R, k, y0, dy, ny, z0, dz, nz, params, B, lattice, mode, corr, energy):
    """Add one surface's contribution to per-point correlation and energy.

    For each point the response ``a = sqrt(g) e^{-jkd} e^{jk(l_y y + l_z z)}``
    is formed on the fly; ``corr[p, c] += a^H B[:, c]``. With ``mode == 0``
    ``energy[p] += a^H Q a`` where ``lattice`` holds ``Q`` summed along each
    antenna-offset difference (shape ``(2nz-1, 2ny-1)``); with ``mode == 1``
    ``energy[p] += |a|^2``.
    """
    gmax, hv, hh, am, sla, floor = params[0], params[1], params[2], params[3], params[4], params[5]
    use_floor = params[6] != 0.0
    iso = params[7] != 0.0
    n_ant = ny * nz
    n_col = B.shape[1]
    a = np.empty(n_ant, dtype=np.complex128)
    py = np.empty(2 * ny - 1, dtype=np.complex128)
    pz = np.empty(2 * nz - 1, dtype=np.complex128)
    for p in range(pts.shape[0]):
        dx0 = pts[p, 0] - q[0]
        dx1 = pts[p, 1] - q[1]
        dx2 = pts[p, 2] - q[2]
        d = math.sqrt(dx0 * dx0 + dx1 * dx1 + dx2 * dx2)
        f0, f1, f2 = dx0 / d, dx1 / d, dx2 / d
        lx = f0 * R[0, 0] + f1 * R[1, 0] + f2 * R[2, 0]
        ly = f0 * R[0, 1] + f1 * R[1, 1] + f2 * R[2, 1]
        lz = f0 * R[0, 2] + f1 * R[1, 2] + f2 * R[2, 2]
        gn = _pattern_gain(lx, ly, lz, gmax, hv, hh, am, sla, floor, use_floor, iso)
        if gn == 0.0:
            continue
        amp = math.sqrt(gn)
        sy = complex(math.cos(k * ly * dy), math.sin(k * ly * dy))
        sz = complex(math.cos(k * lz * dz), math.sin(k * lz * dz))
        ph = k * (ly * y0 + lz * z0 - d)
        cz = complex(amp * math.cos(ph), amp * math.sin(ph))
        for j in range(nz):
            cy = cz
            base = j * ny
            for i in range(ny):
                a[base + i] = cy
                cy *= sy
            cz *= sz
        for c in range(n_col):
            acc = 0j
            for n in range(n_ant):
                acc += a[n].conjugate() * B[n, c]
            corr[p, c] += acc
        if mode == 1:
            energy[p] += gn * n_ant
            continue
        # phasor powers for offsets -(n-1)..(n-1) along each axis
        py[ny - 1] = 1.0
        for i in range(1, ny):
            py[ny - 1 + i] = py[ny - 2 + i] * sy
            py[ny - 1 - i] = py[ny - 1 + i].conjugate()
        pz[nz - 1] = 1.0
        for j in range(1, nz):
            pz[nz - 1 + j] = pz[nz - 2 + j] * sz
            pz[nz - 1 - j] = pz[nz - 1 + j].conjugate()
        e = 0.0
        for j in range(2 * nz - 1):
            row = 0j
            for i in range(2 * ny - 1):
                row += lattice[j, i] * py[i]
            e += (row * pz[j]).real
        energy[p] += gn * e


def difference_lattice(Q: np.ndarray, ny: int, nz: int) -> np.ndarray:
    """Sum ``Q[n, n']`` over antenna pairs sharing the offset ``n' - n``.

    Antenna ``n`` sits at grid cell ``(n // ny, n % ny)``; the result is
    indexed by ``(dz + nz - 1, dy + ny - 1)``.
    """
    out = np.zeros((2 * nz - 1, 2 * ny - 1), dtype=complex)
    iz, iy = np.divmod(np.arange(ny * nz), ny)
    dz = iz[None, :] - iz[:, None] + nz - 1
    dyy = iy[None, :] - iy[:, None] + ny - 1
    np.add.at(out, (dz, dyy), Q)
    return out
