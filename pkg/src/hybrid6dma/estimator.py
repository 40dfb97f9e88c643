"""Two-stage directional-sparsity-driven channel estimation.

Stage 1 runs a grid ML search per measured pose. Stage 2 clusters the
per-pose position estimates, keeps the largest cluster, and runs a joint
fine-grid ML search over its members. An LS-then-grid-search baseline is
provided for comparison.

Grid order is lexicographic in ``(distance, azimuth, elevation)`` and every
argmax keeps the first maximum, so ties resolve to the earliest grid point.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .channel import ChannelVector, SystemModel, UserPathState, channel_hybrid, hybrid_blocks
from .geometry import angles_from_unit_vector, doa_unit_vector, wrap_to_pi
from ._kernels import accumulate_scores, difference_lattice
from .pilot import MeasurementBatch, WhitenedMeasurement, whiten

CHUNK_POINTS = 32768


class DarkCandidateError(ValueError):
    """Every requested candidate has zero antenna gain at the given pose(s)."""


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------

def _axis(start: float, stop: float, step: float) -> np.ndarray:
    if step <= 0:
        raise ValueError("grid steps must be positive")
    n = int(np.floor((stop - start) / step + 1e-9))
    return start + step * np.arange(n + 1)


def _centered_axis(center: float, span: float, step: float) -> np.ndarray:
    if step <= 0:
        raise ValueError("grid steps must be positive")
    n = int(np.floor(span / 2 / step + 1e-9))
    return center + step * np.arange(-n, n + 1)


@dataclass(frozen=True)
class FineGridSpec:
    """Spans and steps of the refinement lattice around a coarse estimate."""

    distance_span: float
    azimuth_span: float
    elevation_span: float
    distance_step: float
    azimuth_step: float
    elevation_step: float


@dataclass(frozen=True)
class GridSpec:
    """Product lattice over ``(distance, azimuth, elevation)``."""

    distances: np.ndarray
    azimuths: np.ndarray
    elevations: np.ndarray
    steps: tuple = (np.nan, np.nan, np.nan)

    def __post_init__(self):
        for name in ("distances", "azimuths", "elevations"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if self.size == 0:
            raise ValueError("empty search grid")
        if np.any(self.distances <= 0):
            raise ValueError("grid distances must be positive")

    @classmethod
    def coarse(cls, d_min: float, d_max: float, d_step: float, az_step: float, el_step: float,
               az_range=(-np.pi, np.pi), el_range=(-np.pi / 2, np.pi / 2)) -> "GridSpec":
        d = _axis(d_min, d_max, d_step)
        az = _axis(az_range[0], az_range[1], az_step)
        # -pi and +pi are the same direction; keep the first
        if az.size > 1 and np.isclose(az[-1] - az[0], 2 * np.pi, atol=1e-12):
            az = az[:-1]
        el = _axis(el_range[0], el_range[1], el_step)
        return cls(d, az, el, (d_step, az_step, el_step))

    @classmethod
    def fine(cls, center, spec: FineGridSpec) -> "GridSpec":
        d0, az0, el0 = center
        d = _centered_axis(d0, spec.distance_span, spec.distance_step)
        az = wrap_to_pi(_centered_axis(az0, spec.azimuth_span, spec.azimuth_step))
        el = _centered_axis(el0, spec.elevation_span, spec.elevation_step)
        el = el[np.abs(el) <= np.pi / 2 + 1e-12]
        return cls(d[d > 0], az, el, (spec.distance_step, spec.azimuth_step, spec.elevation_step))

    @property
    def shape(self) -> tuple:
        return (self.distances.size, self.azimuths.size, self.elevations.size)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def triple(self, index: int) -> tuple:
        i, j, k = np.unravel_index(int(index), self.shape)
        return float(self.distances[i]), float(self.azimuths[j]), float(self.elevations[k])

    def triples(self) -> np.ndarray:
        d, az, el = np.meshgrid(self.distances, self.azimuths, self.elevations, indexing="ij")
        return np.column_stack([d.ravel(), az.ravel(), el.ravel()])

    def chunks(self, max_points: int = CHUNK_POINTS) -> Iterator[tuple[int, np.ndarray]]:
        """Yield ``(offset, positions)`` with Cartesian candidate positions."""
        dirs = doa_unit_vector(self.azimuths[:, None], self.elevations[None, :]).reshape(-1, 3)
        per_d = dirs.shape[0]
        if per_d > max_points:
            for i, d in enumerate(self.distances):
                for s in range(0, per_d, max_points):
                    yield i * per_d + s, d * dirs[s:s + max_points]
            return
        n_d = max(1, max_points // per_d)
        for i in range(0, self.distances.size, n_d):
            d = self.distances[i:i + n_d]
            yield i * per_d, (d[:, None, None] * dirs[None]).reshape(-1, 3)


@dataclass(frozen=True)
class GridPreset:
    """Coarse grid parameters, refinement spec and clustering threshold rule."""

    name: str
    d_min: float
    d_max: float
    d_step: float
    az_step: float
    el_step: float
    fine: FineGridSpec
    el_range: tuple = (-np.pi / 2, np.pi / 2)
    az_range: tuple = (-np.pi, np.pi)

    def __post_init__(self):
        f = self.fine
        if not (f.distance_step < self.d_step and f.azimuth_step < self.az_step
                and f.elevation_step < self.el_step):
            raise ValueError("fine steps must be strictly smaller than coarse steps")

    def coarse_grid(self) -> GridSpec:
        return GridSpec.coarse(self.d_min, self.d_max, self.d_step, self.az_step, self.el_step,
                               az_range=self.az_range, el_range=self.el_range)

    def _n_distances(self) -> int:
        return int(np.floor((self.d_max - self.d_min) / self.d_step + 1e-9)) + 1

    def coarse_size(self) -> int:
        n_az = int(np.floor((self.az_range[1] - self.az_range[0]) / self.az_step + 1e-9)) + 1
        if np.isclose((n_az - 1) * self.az_step, 2 * np.pi):
            n_az -= 1
        n_el = int(np.floor((self.el_range[1] - self.el_range[0]) / self.el_step + 1e-9)) + 1
        return self._n_distances() * n_az * n_el

    def default_threshold(self) -> float:
        """Twice the Cartesian diagonal of a coarse cell at the largest grid distance.

        A grid with a single distance has no radial extent, so only the
        angular sides of the cell count.
        """
        n_d = self._n_distances()
        radial = self.d_step if n_d > 1 else 0.0
        r = self.d_min + (n_d - 1) * self.d_step
        cell = np.sqrt(radial ** 2 + (r * self.az_step) ** 2 + (r * self.el_step) ** 2)
        return 2.0 * float(cell)


def full_preset(wavelength: float) -> GridPreset:
    """Full-resolution grid: one wavelength in distance, pi/1000 in angle (~5e11 points)."""
    coarse = np.pi / 1000
    fine = FineGridSpec(2 * wavelength, 2 * coarse, 2 * coarse,
                        0.025 * wavelength, np.pi / 5000, np.pi / 5000)
    return GridPreset("full", 20.0, 800.0, wavelength, coarse, coarse, fine)


def desk_preset(d_min: float = 20.0, d_max: float = 800.0) -> GridPreset:
    """One-degree coarse lattice for runs that finish in seconds.

    A single surface barely observes distance, so the coarse lattice lives on
    one sphere halfway through ``[d_min, d_max]`` and only resolves direction.
    The joint refinement window spans the whole distance range around it.
    """
    step = np.pi / 180
    mid = 0.5 * (d_min + d_max)
    span = d_max - d_min
    fine = FineGridSpec(span, 4 * step, 4 * step, 30.0, np.pi / 1800, np.pi / 1800)
    return GridPreset("desk", mid, mid, span, step, step, fine)


def get_preset(name: str, wavelength: float) -> GridPreset:
    if name == "full":
        return full_preset(wavelength)
    if name == "desk":
        return desk_preset()
    raise ValueError(f"unknown grid preset {name!r}")


# ---------------------------------------------------------------------------
# Single-pose objective
# ---------------------------------------------------------------------------

def _whitened(m) -> WhitenedMeasurement:
    return whiten(m) if isinstance(m, MeasurementBatch) else m


def _atoms(points: np.ndarray, w: WhitenedMeasurement, model: SystemModel):
    """Whitened atoms ``Gamma sqrt(g) e^{-jkd} a`` for each point, ``(G, T)``."""
    blocks, gain, _ = hybrid_blocks(points, w.pose, model)
    return blocks @ w.effective.T, gain


def _ratio(corr: np.ndarray, energy: np.ndarray) -> np.ndarray:
    """``|corr|^2 / energy`` with zero where the atom vanishes."""
    safe = np.where(energy > 0, energy, 1.0)
    if corr.ndim == 2:
        safe = safe[:, None]
        live = (energy > 0)[:, None]
    else:
        live = energy > 0
    return np.where(live, np.abs(corr) ** 2 / safe, 0.0)


def pose_scores(points: np.ndarray, pose, model: SystemModel, vectors: np.ndarray,
                gram: np.ndarray | None):
    """Correlation and energy of one surface's responses at many points.

    Returns ``corr[p, c] = a_p^H vectors[:, c]`` and ``energy[p] = a_p^H gram a_p``
    (``|a_p|^2`` when ``gram`` is None) where ``a_p`` is the unit-gain
    hybrid-field response of the surface to a user at ``points[p]``.
    """
    pts = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
    V = np.ascontiguousarray(np.asarray(vectors, dtype=complex).reshape(model.n_antennas, -1))
    axes = model.layout.grid_axes()
    if axes is None:
        blocks, gain, _ = hybrid_blocks(pts, pose, model)
        corr = blocks.conj() @ V
        if gram is None:
            energy = np.sum(blocks.real ** 2 + blocks.imag ** 2, axis=1)
        else:
            energy = np.einsum("gn,gn->g", blocks.conj(), blocks @ gram.T).real
        return corr, energy
    if np.any(np.all(pts == pose.position, axis=1)):
        raise ValueError("user coincides with the surface center")
    corr = np.zeros((pts.shape[0], V.shape[1]), dtype=complex)
    energy = np.zeros(pts.shape[0])
    y0, dy, ny, z0, dz, nz = axes
    if gram is None:
        lattice, mode = np.zeros((1, 1), dtype=complex), 1
    else:
        lattice, mode = difference_lattice(np.asarray(gram, dtype=complex), ny, nz), 0
    accumulate_scores(pts, pose.position, np.ascontiguousarray(pose.matrix), model.carrier.wavenumber,
                      y0, dy, ny, z0, dz, nz, model.pattern.kernel_params(), V, lattice, mode,
                      corr, energy)
    return corr, energy


def coarse_objective(whitened: WhitenedMeasurement, model: SystemModel, candidate) -> float:
    """Concentrated ML objective at one ``(d, az, el)`` candidate (0 if dark)."""
    w = _whitened(whitened)
    p = doa_unit_vector(candidate[1], candidate[2]) * candidate[0]
    atom, gain = _atoms(p[None, :], w, model)
    if gain[0] == 0.0:
        return 0.0
    corr = np.vdot(atom[0], w.received)
    return float(np.abs(corr) ** 2 / np.vdot(atom[0], atom[0]).real)


def estimate_path_gain(whitened: WhitenedMeasurement, model: SystemModel, candidate) -> complex:
    """Closed-form least-squares path gain at one candidate."""
    w = _whitened(whitened)
    p = doa_unit_vector(candidate[1], candidate[2]) * candidate[0]
    atom, gain = _atoms(p[None, :], w, model)
    if gain[0] == 0.0:
        raise DarkCandidateError("pose is dark at this candidate")
    return complex(np.vdot(atom[0], w.received) / np.vdot(atom[0], atom[0]).real)


@dataclass(frozen=True)
class CoarseEstimate:
    index: int
    distance: float
    azimuth: float
    elevation: float
    gain: complex
    objective: float
    position: np.ndarray = field(repr=False)

    @property
    def dark(self) -> bool:
        return self.objective == 0.0


def _argmax_update(best_val, best_idx, vals, offset):
    """Fold a chunk of objective values into running (value, index) per column."""
    idx = np.argmax(vals, axis=0)
    top = np.take_along_axis(vals, idx[None], axis=0)[0]
    better = top > best_val
    best_val = np.where(better, top, best_val)
    best_idx = np.where(better, idx + offset, best_idx)
    return best_val, best_idx


def coarse_search_batch(received: np.ndarray, effective: np.ndarray, pose, model: SystemModel,
                        grid: GridSpec, chunk: int = CHUNK_POINTS):
    """Grid ML search for one pose and many whitened observation columns.

    ``received`` has shape ``(T, C)``. Returns ``(index, objective, gain)``
    arrays of length ``C``; columns with an all-zero objective get index 0
    and gain 0. Each column is scored independently, so batching does not
    change any result.
    """
    Y = np.asarray(received, dtype=complex)
    if Y.ndim == 1:
        Y = Y[:, None]
    gamma = np.asarray(effective, dtype=complex)
    V = gamma.conj().T @ Y
    gram = gamma.conj().T @ gamma
    n_col = Y.shape[1]
    best_val = np.full(n_col, -1.0)
    best_idx = np.zeros(n_col, dtype=np.int64)
    for offset, pts in grid.chunks(chunk):
        corr, energy = pose_scores(pts, pose, model, V, gram)
        best_val, best_idx = _argmax_update(best_val, best_idx, _ratio(corr, energy), offset)
    best_idx = np.where(best_val > 0, best_idx, 0)
    best_val = np.maximum(best_val, 0.0)
    trip = np.array([grid.triple(i) for i in best_idx])
    pts = doa_unit_vector(trip[:, 1], trip[:, 2]) * trip[:, :1]
    nu = np.zeros(n_col, dtype=complex)
    for c in range(n_col):
        corr, energy = pose_scores(pts[c:c + 1], pose, model, V[:, c], gram)
        if best_val[c] > 0 and energy[0] > 0:
            nu[c] = corr[0, 0] / energy[0]
    return best_idx, best_val, nu


def coarse_search(whitened, model: SystemModel, grid: GridSpec, index: int | None = None,
                  chunk: int = CHUNK_POINTS) -> CoarseEstimate:
    """Surface-wise ML estimate of ``(d, az, el)`` and path gain on ``grid``."""
    w = _whitened(whitened)
    idx, val, nu = coarse_search_batch(w.received, w.effective, w.pose, model, grid, chunk)
    d, az, el = grid.triple(idx[0])
    return CoarseEstimate(w.index if index is None else index, d, az, el, complex(nu[0]),
                          float(val[0]), doa_unit_vector(az, el) * d)


# ---------------------------------------------------------------------------
# Clustering
# ---------------------------------------------------------------------------

@dataclass
class ClusterState:
    members: list          # list of lists of estimate positions (0-based)
    centers: np.ndarray    # (N_c, 3)
    threshold: float

    @property
    def count(self) -> int:
        return len(self.members)

    @property
    def sizes(self) -> list:
        return [len(m) for m in self.members]


def cluster_estimates(estimates, threshold: float) -> ClusterState:
    """Sequential single-pass distance clustering of Cartesian estimates.

    ``estimates`` is a sequence of :class:`CoarseEstimate` or an ``(M, 3)``
    array. The first estimate seeds cluster 0; each later one joins its
    nearest center if within ``threshold`` (center becomes the member mean)
    or else opens a new cluster.
    """
    if threshold <= 0:
        raise ValueError("clustering threshold must be positive")
    pts = np.array([e.position for e in estimates] if not isinstance(estimates, np.ndarray)
                   else estimates, dtype=float).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise ValueError("need at least one estimate")
    members = [[0]]
    centers = [pts[0].copy()]
    for m in range(1, pts.shape[0]):
        dist = np.linalg.norm(np.asarray(centers) - pts[m], axis=1)
        i = int(np.argmin(dist))
        if dist[i] <= threshold:
            members[i].append(m)
            centers[i] = pts[members[i]].mean(axis=0)
        else:
            members.append([m])
            centers.append(pts[m].copy())
    return ClusterState(members, np.asarray(centers), float(threshold))


def select_largest_cluster(state: ClusterState):
    """Members and center of the largest cluster (earliest wins ties)."""
    if state.count == 0:
        raise ValueError("no clusters")
    i = int(np.argmax(state.sizes))
    return list(state.members[i]), state.centers[i].copy()


def polar(position) -> tuple:
    """Cartesian position to ``(d, az, el)``."""
    p = np.asarray(position, dtype=float)
    d = float(np.linalg.norm(p))
    if d == 0:
        raise ValueError("cannot express the origin in polar form")
    az, el = angles_from_unit_vector(p / d)
    return d, az, el


# ---------------------------------------------------------------------------
# Joint refinement and reconstruction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RefinedEstimate:
    distance: float
    azimuth: float
    elevation: float
    gain: complex
    members: tuple = ()
    objective: float = 0.0

    def as_path(self) -> UserPathState:
        return UserPathState(self.distance, self.azimuth, self.elevation, self.gain)

    @property
    def position(self) -> np.ndarray:
        return doa_unit_vector(self.azimuth, self.elevation) * self.distance


def joint_search(whitened: Sequence[WhitenedMeasurement], model: SystemModel, grid: GridSpec,
                 chunk: int = CHUNK_POINTS):
    """Maximize the stacked-atom ratio over ``grid``; returns (index, objective, gain)."""
    ws = [_whitened(w) for w in whitened]
    if not ws:
        raise ValueError("need at least one measurement")
    terms = [(w.pose, w.effective.conj().T @ w.received, w.effective.conj().T @ w.effective) for w in ws]
    best_val, best_idx = np.array([-1.0]), np.array([0])
    for offset, pts in grid.chunks(chunk):
        corr, energy = _stacked_scores(pts, terms, model)
        best_val, best_idx = _argmax_update(best_val, best_idx, _ratio(corr, energy), offset)
    if best_val[0] <= 0:
        raise DarkCandidateError("all candidates are dark for every member pose")
    i = int(best_idx[0])
    d, az, el = grid.triple(i)
    corr, energy = _stacked_scores(doa_unit_vector(az, el)[None, :] * d, terms, model)
    return i, float(best_val[0]), complex(corr[0, 0] / energy[0])


def _stacked_scores(pts, terms, model):
    """Sum of :func:`pose_scores` over ``(pose, vectors, gram)`` terms."""
    corr = energy = None
    for pose, vec, gram in terms:
        c, e = pose_scores(pts, pose, model, vec, gram)
        corr = c if corr is None else corr + c
        energy = e if energy is None else energy + e
    return corr, energy


def refine_joint(whitened: Sequence[WhitenedMeasurement], model: SystemModel, fine_grid: GridSpec,
                 chunk: int = CHUNK_POINTS) -> RefinedEstimate:
    ws = [_whitened(w) for w in whitened]
    i, val, nu = joint_search(ws, model, fine_grid, chunk)
    d, az, el = fine_grid.triple(i)
    return RefinedEstimate(d, az, el, nu, tuple(w.index for w in ws), val)


def reconstruct_channel(refined: RefinedEstimate, poses, model: SystemModel) -> ChannelVector:
    """Hybrid-field channel at arbitrary pose(s) from the estimated parameters."""
    return channel_hybrid(poses, model.layout, refined.as_path(), model.carrier, model.pattern)


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------

@dataclass
class Diagnostics:
    objectives: list
    coarse: list
    cluster_sizes: list
    n_clusters: int
    members: list          # positions in the measurement list
    center: np.ndarray
    threshold: float
    timings: dict
    coarse_grid_size: int
    fine_grid_size: int
    flagged: list = field(default_factory=list)   # dark estimates left out of clustering


def run_estimator(measurements: Sequence, model: SystemModel, coarse_grid: GridSpec,
                   fine_spec: FineGridSpec, threshold: float, chunk: int = CHUNK_POINTS):
    """Whiten, search each pose, cluster, refine jointly on the largest cluster.

    Returns ``(refined, diagnostics)`` for single-column measurements.
    """
    return run_estimator_columns(measurements, model, coarse_grid, fine_spec, threshold, chunk)[0]


def run_estimator_columns(measurements: Sequence, model: SystemModel, coarse_grid: GridSpec,
                           fine_spec: FineGridSpec, threshold: float, chunk: int = CHUNK_POINTS):
    """:func:`run_estimator` for measurements carrying ``C`` observation columns.

    The columns share combiners and candidate grids, so the coarse searches
    score all of them in one sweep; each column is otherwise processed on
    its own and gets its own ``(refined, diagnostics)`` pair.
    """
    if len(measurements) == 0:
        raise ValueError("need at least one measurement")
    t0 = time.perf_counter()
    ws = [_whitened(m) for m in measurements]
    t_whiten = time.perf_counter() - t0
    n_col = 1 if ws[0].received.ndim == 1 else ws[0].received.shape[1]

    t0 = time.perf_counter()
    found = [coarse_search_batch(w.received, w.effective, w.pose, model, coarse_grid, chunk) for w in ws]
    t_stage1 = (time.perf_counter() - t0) / n_col

    out = []
    for c in range(n_col):
        timings = {"whiten": t_whiten / n_col, "stage1": t_stage1}
        coarse = []
        for m, (idx, val, nu) in enumerate(found):
            d, az, el = coarse_grid.triple(idx[c])
            coarse.append(CoarseEstimate(m, d, az, el, complex(nu[c]), float(val[c]),
                                         doa_unit_vector(az, el) * d))
        t0 = time.perf_counter()
        # flagged estimates (objective exactly 0: no lit candidate saw any
        # signal) carry no position information and are discarded here
        live = [e for e in coarse if not e.dark]
        if not live:
            raise DarkCandidateError("every pose's coarse estimate is flagged dark")
        state = cluster_estimates(live, threshold)
        chosen, center = select_largest_cluster(state)
        members = [live[i].index for i in chosen]
        timings["cluster"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        fine_grid = GridSpec.fine(polar(center), fine_spec)
        refined = refine_joint([ws[j].column(c) for j in members], model, fine_grid, chunk)
        timings["stage2"] = time.perf_counter() - t0
        diag = Diagnostics(
            objectives=[e.objective for e in coarse],
            coarse=coarse,
            cluster_sizes=state.sizes,
            n_clusters=state.count,
            members=members,
            flagged=[e.index for e in coarse if e.dark],
            center=center,
            threshold=threshold,
            timings=timings,
            coarse_grid_size=coarse_grid.size,
            fine_grid_size=fine_grid.size,
        )
        out.append((refined, diag))
    return out


# ---------------------------------------------------------------------------
# LS baseline
# ---------------------------------------------------------------------------

def ls_channel_estimates(measurements: Sequence[MeasurementBatch]) -> list:
    """Minimum-norm least-squares channel per pose from ``y = W h``."""
    out = []
    for m in measurements:
        W = m.combiner
        if np.linalg.matrix_rank(W) < min(W.shape):
            raise np.linalg.LinAlgError(f"combiner of pose {m.index} is rank deficient")
        out.append(np.linalg.pinv(W) @ m.received)
    return out


def ls_search_batch(channels: Sequence[np.ndarray], poses, model: SystemModel, grid: GridSpec,
                    chunk: int = CHUNK_POINTS):
    """Grid search of ``sum_m |h_m - nu b_m(c)|^2`` with closed-form ``nu``.

    ``channels[m]`` is ``(N,)`` or ``(N, C)``. Returns (index, objective, gain)
    arrays over the ``C`` columns.
    """
    terms = [(pose, np.asarray(h, dtype=complex).reshape(model.n_antennas, -1), None)
             for h, pose in zip(channels, poses)]
    if not terms:
        raise ValueError("need at least one measurement")
    n_col = terms[0][1].shape[1]
    best_val = np.full(n_col, -1.0)
    best_idx = np.zeros(n_col, dtype=np.int64)
    for offset, pts in grid.chunks(chunk):
        corr, energy = _stacked_scores(pts, terms, model)
        best_val, best_idx = _argmax_update(best_val, best_idx, _ratio(corr, energy), offset)
    best_idx = np.where(best_val > 0, best_idx, 0)
    best_val = np.maximum(best_val, 0.0)
    nu = np.zeros(n_col, dtype=complex)
    for c in range(n_col):
        d, az, el = grid.triple(best_idx[c])
        col = [(pose, vec[:, c], None) for pose, vec, _ in terms]
        corr, energy = _stacked_scores(doa_unit_vector(az, el)[None, :] * d, col, model)
        if best_val[c] > 0 and energy[0] > 0:
            nu[c] = corr[0, 0] / energy[0]
    return best_idx, best_val, nu


def ls_baseline(measurements: Sequence[MeasurementBatch], model: SystemModel, coarse_grid: GridSpec,
                fine_spec: FineGridSpec, chunk: int = CHUNK_POINTS) -> RefinedEstimate:
    """LS channel per pose, then joint coarse and fine grid search over all poses."""
    return ls_baseline_columns(measurements, model, coarse_grid, fine_spec, chunk)[0]


def ls_baseline_columns(measurements: Sequence[MeasurementBatch], model: SystemModel,
                        coarse_grid: GridSpec, fine_spec: FineGridSpec,
                        chunk: int = CHUNK_POINTS) -> list:
    """:func:`ls_baseline` for each observation column of ``measurements``."""
    if len(measurements) == 0:
        raise ValueError("need at least one measurement")
    h_ls = ls_channel_estimates(measurements)
    poses = [m.pose for m in measurements]
    idx, _, _ = ls_search_batch(h_ls, poses, model, coarse_grid, chunk)
    out = []
    for c in range(idx.size):
        fine_grid = GridSpec.fine(coarse_grid.triple(idx[c]), fine_spec)
        col = [h.reshape(model.n_antennas, -1)[:, c] for h in h_ls]
        fi, val, nu = ls_search_batch(col, poses, model, fine_grid, chunk)
        d, az, el = fine_grid.triple(fi[0])
        out.append(RefinedEstimate(d, az, el, complex(nu[0]), tuple(m.index for m in measurements),
                                   float(val[0])))
    return out
