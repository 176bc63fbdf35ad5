"""
Virtual ESR experiment on a single nanocrystal.

A :class:`VirtualSample` holds the ground truth (crystal orientation, spin
constants, strain, line shape and noise).  Every measurement synthesizes the
full spectrum of the four NV orientations for one lab-frame field vector,
adds seeded noise, and fits the lowest-frequency dip.  Below B_zfs that dip
is the |0> -> |-1> transition of the NV axis closest to the field, since the
transition frequency grows monotonically with the misalignment angle.

Noise streams are keyed by ``(sample.seed, stream, point index)`` so results
do not depend on evaluation order or on the number of worker processes.
"""

from __future__ import annotations

import logging
import warnings
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .errors import FitError, InaccessibleAxisError, InaccessibleFieldError, PhysicsDomainError
from .fitting import QuadraticFit, detect_dips, fit_dips, fit_quadratic
from .geometry import (
    TWO_PI,
    CrystalOrientation,
    FieldRegion,
    NvAxisSet,
    SphericalDirection,
    accessible_phi_range,
    angle_between,
    is_accessible,
    make_sweep_grid,
    nv_axes,
)
from .odmr import LineShape, add_noise, dip_set, synthesize
from .perturbation import SINGULAR_MARGIN, analytic_omegas
from .spin_model import (
    Constants,
    FieldVector,
    build_hamiltonian_nv,
    eigendecompose,
    nv_frame,
    planar_eigensystem,
)

log = logging.getLogger(__name__)

FLAG_OK = 0
FLAG_FIT = 1  # fit did not converge or gave unphysical parameters
FLAG_NO_DIP = 2  # no dip above the detection threshold

# noise stream ids
STREAM_SWEEP = 0
STREAM_REFINE = 100
STREAM_SENSITIVITY = 200
STREAM_RAMP = 300

FIT_TOL = 1e-8  # relative parameter change for sweep-point fits


@dataclass(frozen=True)
class VirtualSample:
    orientation: CrystalOrientation = field(default_factory=CrystalOrientation.identity)
    constants: Constants = Constants()
    strain_e: float = 0.0
    line: LineShape = LineShape()
    noise_sigma: float = 0.005
    seed: int = 0
    region: FieldRegion = FieldRegion()
    freq_step: float = 0.0005  # GHz
    min_prominence: float = 0.03

    def __post_init__(self):
        if self.strain_e < 0:
            raise PhysicsDomainError("strain_e must be >= 0")
        if self.noise_sigma < 0:
            raise PhysicsDomainError("noise_sigma must be >= 0")
        if not self.freq_step > 0:
            raise PhysicsDomainError("freq_step must be positive")

    @cached_property
    def axes(self) -> NvAxisSet:
        return nv_axes(self.orientation)

    @cached_property
    def frames(self) -> np.ndarray:
        return np.array([nv_frame(a) for a in self.axes.axes])

    def scan_window(self, b_mag: float) -> tuple[float, float]:
        """Microwave frequency range scanned at field magnitude ``b_mag``."""
        om, _, op = analytic_omegas(self.constants, b_mag)
        margin = max(0.05, 20 * self.line.width) + self.strain_e
        lo = max(0.01, min(om, self.constants.delta) - margin)
        return lo, op + margin


class PointMeasurement(NamedTuple):
    location: float
    depth: float
    flag: int


def _check_below_zfs(c: Constants, b_mag: float):
    if not b_mag > 0:
        raise PhysicsDomainError(f"field magnitude must be positive, got {b_mag}")
    if b_mag > c.b_zfs - SINGULAR_MARGIN:
        raise PhysicsDomainError(
            f"B = {b_mag} mT is not below B_zfs = {c.b_zfs:.4f} mT; the monitored dip is undefined"
        )


def monitored_dips(vs: VirtualSample, field_vec) -> list:
    """Dips of all four NV orientations for one lab-frame field."""
    b = np.asarray(field_vec, dtype=float)
    dips = []
    for frame in vs.frames:
        b_nv = frame @ b
        # B -> -B leaves the spectrum unchanged; keep the field on the +z' side
        if b_nv[2] < 0:
            b_nv = -b_nv
        es = eigendecompose(build_hamiltonian_nv(vs.constants, vs.strain_e, b_nv))
        dips.extend(dip_set(es, vs.line))
    return dips


def measure_field(vs: VirtualSample, field_vec, key: Sequence[int]) -> PointMeasurement:
    """Synthesize, add noise and fit the lowest-frequency dip for one field vector."""
    b = np.asarray(field_vec, dtype=float)
    f_lo, f_hi = vs.scan_window(float(np.linalg.norm(b)))
    n = int(round((f_hi - f_lo) / vs.freq_step)) + 1
    spec = synthesize(monitored_dips(vs, b), vs.line, f_lo, f_hi, n)
    spec = add_noise(spec, vs.noise_sigma, [vs.seed, *key])
    guesses = detect_dips(spec, vs.min_prominence)
    if not guesses:
        return PointMeasurement(np.nan, np.nan, FLAG_NO_DIP)
    try:
        fits = fit_dips(spec, guesses, tol=FIT_TOL, max_groups=1)
    except FitError:
        return PointMeasurement(np.nan, np.nan, FLAG_FIT)
    low = min(fits, key=lambda f: f.center)
    return PointMeasurement(low.center, low.depth, FLAG_OK if low.converged else FLAG_FIT)


def _measure_chunk(args):
    vs, fields, keys = args
    return [measure_field(vs, f, k) for f, k in zip(fields, keys)]


def measure_many(vs: VirtualSample, fields, stream: int, threads: int = 1) -> list[PointMeasurement]:
    """Measure a list of field vectors; output order and values are independent of ``threads``."""
    fields = np.asarray(fields, dtype=float).reshape(-1, 3)
    keys = [(stream, i) for i in range(len(fields))]
    if threads <= 1 or len(fields) < 2 * threads:
        return _measure_chunk((vs, fields, keys))
    chunks = np.array_split(np.arange(len(fields)), threads * 4)
    jobs = [(vs, fields[c], [keys[i] for i in c]) for c in chunks if c.size]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(_measure_chunk, jobs))
    return [m for part in parts for m in part]


# --------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepResult:
    """Dip maps over a (phi, big_theta) grid at fixed field magnitude.

    ``indices`` holds the integer ``(i_theta, i_phi)`` grid position of each
    point; ``periodic`` says whether the azimuth index wraps around.
    """

    b_mag: float
    grid: tuple[SphericalDirection, ...]
    indices: np.ndarray
    depth_map: np.ndarray
    location_map: np.ndarray
    fit_flags: np.ndarray
    periodic: bool
    resolution: float
    constants: Constants = Constants()
    freq_window: tuple[float, float] = (0.0, 0.0)
    phi_step: float = 0.0
    theta_step: float = 0.0

    def __len__(self):
        return len(self.grid)

    @property
    def valid(self) -> np.ndarray:
        return self.fit_flags == FLAG_OK

    @cached_property
    def phi(self) -> np.ndarray:
        return np.array([d.phi for d in self.grid])

    @cached_property
    def big_theta(self) -> np.ndarray:
        return np.array([d.big_theta for d in self.grid])

    @cached_property
    def pole_aliases(self) -> np.ndarray:
        """Mask of duplicate pole points (all but the first point at phi = 0)."""
        pole = np.flatnonzero(self.phi < 1e-12)
        mask = np.zeros(len(self), dtype=bool)
        mask[pole[1:]] = True
        return mask

    @cached_property
    def neighbors(self) -> list[np.ndarray]:
        lookup = {(int(a), int(b)): k for k, (a, b) in enumerate(self.indices)}
        n_t = int(self.indices[:, 0].max()) + 1 if len(self) else 0
        pole = np.flatnonzero(self.phi < 1e-12)
        canon = int(pole[0]) if pole.size else -1
        out = []
        for k, (it, ip) in enumerate(self.indices):
            nb = set()
            for dt in (-1, 0, 1):
                for dp in (-1, 0, 1):
                    if dt == dp == 0:
                        continue
                    jt = it + dt
                    if self.periodic:
                        jt %= n_t
                    j = lookup.get((int(jt), int(ip + dp)))
                    if j is not None:
                        nb.add(j)
            out.append(nb)
        # collapse duplicate pole points onto a single node
        if pole.size:
            ring = set()
            for p in pole:
                ring |= out[p]
            ring -= set(pole.tolist())
            out[canon] = ring
            for j in ring:
                out[j] = (out[j] - set(pole.tolist())) | {canon}
            for p in pole[1:]:
                out[p] = set()
        return [np.array(sorted(s), dtype=int) for s in out]

    def records(self):
        for d, dep, loc, flag in zip(self.grid, self.depth_map, self.location_map, self.fit_flags):
            yield d.phi, d.big_theta, float(dep), float(loc), int(flag)


def _sweep_points(vs, b_mag, dirs, idx, periodic, steps, stream, threads) -> SweepResult:
    phi_step, theta_step = steps
    # largest arc length of one grid cell
    sin_max = max((np.sin(d.phi) for d in dirs), default=0.0)
    fields = np.array([b_mag * d.to_vector() for d in dirs]).reshape(-1, 3)
    meas = measure_many(vs, fields, stream, threads)
    return SweepResult(
        b_mag=float(b_mag),
        grid=tuple(dirs),
        indices=np.array(idx, dtype=int).reshape(-1, 2),
        depth_map=np.array([m.depth for m in meas], dtype=float),
        location_map=np.array([m.location for m in meas], dtype=float),
        fit_flags=np.array([m.flag for m in meas], dtype=int),
        periodic=periodic,
        resolution=float(max(phi_step, theta_step * sin_max)),
        constants=vs.constants,
        freq_window=vs.scan_window(b_mag),
        phi_step=float(phi_step),
        theta_step=float(theta_step),
    )


def run_angle_sweep(
    vs: VirtualSample, b_mag: float, n_phi: int, n_theta: int, threads: int = 1, stream: int = STREAM_SWEEP
) -> SweepResult:
    """Dip depth and location maps over the accessible upper hemisphere."""
    if b_mag > vs.region.max_magnitude:
        raise InaccessibleFieldError(
            f"|B| = {b_mag} mT exceeds the accessible region diagonal {vs.region.max_magnitude:.3f} mT"
        )
    _check_below_zfs(vs.constants, b_mag)
    grid = make_sweep_grid(b_mag, vs.region, n_phi, n_theta)
    dirs = [d for d, _ in grid]
    step_t = TWO_PI / n_theta
    idx = []
    col, last_theta, i_phi = -1, None, 0
    for d in dirs:
        if d.big_theta != last_theta:
            last_theta, i_phi = d.big_theta, 0
            col = int(round(d.big_theta / step_t))
        idx.append((col, i_phi))
        i_phi += 1
    dphi = max(
        (b.phi - a.phi for a, b in zip(dirs, dirs[1:]) if b.big_theta == a.big_theta), default=0.0
    )
    return _sweep_points(vs, b_mag, dirs, idx, True, (dphi, step_t), stream, threads)


@dataclass(frozen=True)
class CandidateRegion:
    direction: SphericalDirection
    location: float
    depth: float
    members: tuple[int, ...]
    phi_spread: float
    theta_spread: float
    angular_radius: float
    resolution: float

    @property
    def phi_range(self) -> tuple[float, float]:
        return self.direction.phi - 0.5 * self.phi_spread, self.direction.phi + 0.5 * self.phi_spread


def _circular_extent(angles: np.ndarray) -> float:
    """Length of the shortest arc covering all ``angles``."""
    a = np.sort(np.mod(angles, TWO_PI))
    if a.size < 2:
        return 0.0
    gaps = np.diff(np.concatenate([a, [a[0] + TWO_PI]]))
    return float(TWO_PI - gaps.max())


def grow_region(sr: SweepResult, seed_index: int, tol: float) -> CandidateRegion:
    """Connected set of valid grid points within ``tol`` GHz of the seed location."""
    valid = sr.valid & ~sr.pole_aliases
    limit = sr.location_map[seed_index] + tol
    seen = {seed_index}
    todo = deque([seed_index])
    while todo:
        k = todo.popleft()
        for j in sr.neighbors[k]:
            if j not in seen and valid[j] and sr.location_map[j] <= limit:
                seen.add(int(j))
                todo.append(int(j))
    members = np.array(sorted(seen))
    phi = sr.phi[members]
    center = sr.grid[seed_index]
    c_vec = center.to_vector()
    vecs = np.array([sr.grid[m].to_vector() for m in members])
    radius = float(np.arccos(np.clip(vecs @ c_vec, -1, 1)).max())
    # a region is at least one grid cell wide in each angle
    if np.any(phi < 1e-12):
        theta_spread = TWO_PI
    else:
        theta_spread = min(TWO_PI, _circular_extent(sr.big_theta[members]) + sr.theta_step)
    return CandidateRegion(
        direction=center,
        location=float(sr.location_map[seed_index]),
        depth=float(sr.depth_map[seed_index]),
        members=tuple(int(m) for m in members),
        phi_spread=float(phi.max() - phi.min() + sr.phi_step),
        theta_spread=theta_spread,
        angular_radius=radius,
        resolution=sr.resolution,
    )


def locate_candidate_axes(
    sr: SweepResult,
    k_max: int = 4,
    depth_fraction: float = 0.5,
    max_misalignment: float = np.radians(10.0),
    region_tol: float = 0.003,
    min_separation: float = np.radians(30.0),
) -> list[CandidateRegion]:
    """Local minima of the location map that look like NV axes.

    A grid point qualifies when its location is no larger than that of any
    valid neighbour, lies below the dip frequency expected for a
    ``max_misalignment`` angle, and its depth is at least ``depth_fraction``
    of the deepest such minimum.  Candidates are ranked by location and
    thinned so that no two are closer than ``min_separation``.
    """
    valid = sr.valid & ~sr.pole_aliases
    if not valid.any():
        return []
    loc, dep = sr.location_map, sr.depth_map
    es = planar_eigensystem(sr.constants, sr.b_mag, max_misalignment)
    loc_limit = es.value(-1) - es.value(0)
    minima = []
    for k in np.flatnonzero(valid):
        if loc[k] > loc_limit:
            continue
        nb = sr.neighbors[k]
        nb = nb[valid[nb]]
        if nb.size and np.all(loc[k] <= loc[nb]) and np.any(loc[k] < loc[nb]):
            minima.append(int(k))
    if not minima:
        return []
    # compare against the deepest minimum, not the whole map: coinciding
    # dips of several axes elsewhere can be deeper than any single axis
    dep_limit = depth_fraction * max(dep[k] for k in minima)
    minima = sorted((k for k in minima if dep[k] >= dep_limit), key=lambda k: loc[k])
    chosen: list[int] = []
    for k in minima:
        v = sr.grid[k].to_vector()
        if all(angle_between(v, sr.grid[j].to_vector()) >= min_separation for j in chosen):
            chosen.append(k)
        if len(chosen) == k_max:
            break
    return [grow_region(sr, k, region_tol) for k in chosen]


def select_refinable(cands: Sequence[CandidateRegion], region: FieldRegion, b_final: float) -> CandidateRegion:
    """Candidate closest to the pole that the refinement can follow up to ``b_final``.

    A sweep cell may straddle the edge of the accessible cap, so a candidate
    counts as inside when it is within one grid cell of the cap.
    """
    inside = []
    for c in cands:
        lo, hi = accessible_phi_range(b_final, region, c.direction.big_theta)
        if lo - c.resolution <= c.direction.phi <= hi + c.resolution:
            inside.append(c)
    if not inside:
        raise InaccessibleAxisError(f"no candidate axis lies inside the accessible cap at {b_final} mT")
    return min(inside, key=lambda c: c.direction.phi)


# --------------------------------------------------------------------------
# refinement


@dataclass(frozen=True)
class RefinementStage:
    b_mag: float
    center: SphericalDirection
    half_width: float
    region: CandidateRegion
    sweep: SweepResult = field(repr=False)


@dataclass(frozen=True)
class OrientationEstimate:
    direction: np.ndarray
    phi: float
    big_theta: float
    angular_error_bound: float
    refinement_fields: tuple[float, ...] = ()
    stages: tuple[RefinementStage, ...] = field(default=(), repr=False)

    @classmethod
    def from_direction(cls, d: SphericalDirection, bound: float = 0.0, **kw) -> "OrientationEstimate":
        return cls(d.to_vector(), d.phi, d.big_theta, bound, **kw)

    @property
    def phi_spread(self) -> float:
        return self.stages[-1].region.phi_spread if self.stages else float("nan")

    @property
    def theta_spread(self) -> float:
        return self.stages[-1].region.theta_spread if self.stages else float("nan")


def window_grid(b_mag: float, r: FieldRegion, center: SphericalDirection, half_width: float, n: int):
    """``n x n`` (phi, big_theta) grid spanning ~``half_width`` radians around ``center``.

    Returns ``(directions, indices, periodic, (phi_step, theta_step))``.  Columns are clipped to the
    accessible cap; columns with nothing accessible are dropped.
    """
    if center.phi <= half_width:
        lo, hi = 0.0, center.phi + half_width
        thetas = TWO_PI * np.arange(n) / n
        periodic = True
        t_step = TWO_PI / n
    else:
        lo, hi = center.phi - half_width, center.phi + half_width
        h_theta = min(np.pi, half_width / np.sin(center.phi))
        periodic = h_theta >= np.pi
        if periodic:
            thetas = TWO_PI * np.arange(n) / n
            t_step = TWO_PI / n
        else:
            thetas = center.big_theta + np.linspace(-h_theta, h_theta, n)
            t_step = 2 * h_theta / (n - 1)
    dirs, idx = [], []
    for it, t in enumerate(thetas):
        a_lo, a_hi = accessible_phi_range(b_mag, r, t)
        p_lo, p_hi = max(lo, a_lo), min(hi, a_hi, np.pi / 2)
        if p_lo > p_hi:
            continue
        for ip, p in enumerate(np.linspace(p_lo, p_hi, n)):
            dirs.append(SphericalDirection(float(p), float(t)))
            idx.append((it, ip))
    return dirs, idx, periodic, ((hi - lo) / (n - 1), t_step)


def refine_axis(
    vs: VirtualSample,
    seed_region: CandidateRegion,
    schedule: Sequence[float],
    n_grid: int = 11,
    shrink: float = 0.4,
    region_tol: float = 0.003,
    threads: int = 1,
) -> OrientationEstimate:
    """Re-sweep shrinking windows around a candidate at increasing fields.

    The first window covers the seed region plus one seed-grid cell.  Each
    later window has half-width ``max(shrink * previous, previous region
    radius)`` (never larger than the previous one), so it still contains the
    sharper region seen at the higher field.  The error bound is half the
    diagonal of a grid cell of the last window.
    """
    schedule = [float(b) for b in schedule]
    if not schedule:
        raise PhysicsDomainError("refinement schedule is empty")
    if any(b2 <= b1 for b1, b2 in zip(schedule, schedule[1:])):
        raise PhysicsDomainError("refinement schedule must be strictly increasing")
    if n_grid < 5:
        raise PhysicsDomainError("refinement grid must be at least 5 x 5")
    for b in schedule:
        _check_below_zfs(vs.constants, b)

    center = seed_region.direction
    half = max(seed_region.angular_radius, seed_region.resolution) + seed_region.resolution
    stages = []
    for k, b in enumerate(schedule):
        a_lo, a_hi = accessible_phi_range(b, vs.region, center.big_theta)
        if not (a_lo - 1e-12 <= center.phi <= a_hi + 1e-12):
            raise InaccessibleAxisError(
                f"candidate at phi={np.degrees(center.phi):.2f} deg, "
                f"Theta={np.degrees(center.big_theta):.2f} deg lies outside the accessible cap "
                f"at {b} mT (phi <= {np.degrees(a_hi):.2f} deg)"
            )
        dirs, idx, periodic, steps = window_grid(b, vs.region, center, half, n_grid)
        sr = _sweep_points(vs, b, dirs, idx, periodic, steps, STREAM_REFINE + k, threads)
        valid = sr.valid & ~sr.pole_aliases
        if not valid.any():
            raise FitError(f"no usable dip in the refinement window at {b} mT")
        best = int(np.flatnonzero(valid)[np.argmin(sr.location_map[valid])])
        center = sr.grid[best]
        region = grow_region(sr, best, region_tol)
        stages.append(RefinementStage(b, center, half, region, sr))
        log.debug("refine %.1f mT: phi=%.3f deg Theta=%.3f deg half-width=%.3f deg",
                  b, np.degrees(center.phi), np.degrees(center.big_theta), np.degrees(half))
        if k + 1 < len(schedule):
            half = min(half, max(shrink * half, region.angular_radius))
    bound = stages[-1].half_width * np.sqrt(2.0) / (n_grid - 1)
    return OrientationEstimate.from_direction(
        center, bound, refinement_fields=tuple(schedule), stages=tuple(stages)
    )


# --------------------------------------------------------------------------
# sensitivity and field ramps


@dataclass(frozen=True)
class SensitivityScan:
    b_mag: float
    theta_span: float
    offset: float
    angles: np.ndarray
    locations: np.ndarray
    flags: np.ndarray
    fit: QuadraticFit

    @property
    def c2(self) -> float:
        return self.fit.c2


def polar_arc(phi0: float, big_theta: float, offsets) -> np.ndarray:
    """Unit vectors on the meridian at azimuth ``big_theta``, polar angle ``phi0 + offsets``.

    Negative polar angles continue over the pole.
    """
    p = phi0 + np.asarray(offsets, dtype=float)
    horiz = np.array([np.cos(big_theta), np.sin(big_theta), 0.0])
    return np.cos(p)[:, None] * np.array([0.0, 0.0, 1.0]) + np.sin(p)[:, None] * horiz


def _accessible_fields(vs: VirtualSample, fields: np.ndarray):
    for f in fields:
        if not is_accessible(FieldVector.from_array(f), vs.region):
            raise InaccessibleFieldError(
                f"field ({f[0]:.3f}, {f[1]:.3f}, {f[2]:.3f}) mT is outside the accessible region"
            )


def default_theta_span(c: Constants, b_mag: float, theta_span: float, expansion_fraction: float) -> float:
    """Polar half-span used at ``b_mag``.

    The small-angle expansion holds while the transverse Zeeman coupling is
    small against the |0>,|-1> detuning, i.e. for
    ``theta << sqrt(2) * (B_zfs - B) / B``; the span is that scale times
    ``expansion_fraction``, capped at ``theta_span``.
    """
    natural = np.sqrt(2.0) * (c.b_zfs - b_mag) / b_mag
    return float(min(theta_span, expansion_fraction * natural))


def measure_sensitivity(
    vs: VirtualSample,
    axis: OrientationEstimate,
    fields: Sequence[float],
    theta_span: float = 0.15,
    n_theta: int = 31,
    expansion_fraction: float = 0.1,
    recenter: bool = True,
    threads: int = 1,
) -> list[SensitivityScan]:
    """theta**2 coefficient of the monitored dip frequency at each field.

    The polar angle is swept through the estimated axis at fixed azimuth.
    With ``recenter`` a second sweep is centred on the vertex of the first
    parabola.  Fields with fewer than 5 usable points are skipped with a
    warning.
    """
    if not 0 < theta_span <= 0.3:
        raise PhysicsDomainError("theta_span must be in (0, 0.3] rad")
    if n_theta < 5:
        raise PhysicsDomainError("need at least 5 angles per field")
    out = []
    for i, b in enumerate(fields):
        b = float(b)
        _check_below_zfs(vs.constants, b)
        span = default_theta_span(vs.constants, b, theta_span, expansion_fraction)
        base = np.linspace(-span, span, n_theta)
        offset = 0.0
        scan = None
        for npass in range(2 if recenter else 1):
            t = offset + base
            field_vecs = b * polar_arc(axis.phi, axis.big_theta, t)
            _accessible_fields(vs, field_vecs)
            meas = measure_many(vs, field_vecs, STREAM_SENSITIVITY + 10 * i + npass, threads)
            loc = np.array([m.location for m in meas])
            flags = np.array([m.flag for m in meas])
            ok = flags == FLAG_OK
            if ok.sum() < 5:
                warnings.warn(f"skipping {b} mT: only {ok.sum()} usable points", RuntimeWarning)
                scan = None
                break
            fit = fit_quadratic(t[ok], loc[ok])
            scan = SensitivityScan(b, span, offset, t, loc, flags, fit)
            if fit.c2 > 0 and abs(fit.vertex - offset) < span:
                offset = fit.vertex
            else:
                break
        if scan is not None:
            out.append(scan)
    return out


def run_field_ramp(
    vs: VirtualSample, direction, fields: Sequence[float], threads: int = 1
) -> list[PointMeasurement]:
    """Monitored dip at fixed field direction for each magnitude in ``fields``."""
    if isinstance(direction, SphericalDirection):
        u = direction.to_vector()
    else:
        u = np.asarray(direction, dtype=float)
        u = u / np.linalg.norm(u)
    for b in fields:
        _check_below_zfs(vs.constants, float(b))
    field_vecs = np.array([float(b) * u for b in fields])
    _accessible_fields(vs, field_vecs)
    return measure_many(vs, field_vecs, STREAM_RAMP, threads)


def ground_truth_error(est: OrientationEstimate, vs: VirtualSample) -> float:
    return min(angle_between(est.direction, d) for d in vs.axes.signed_directions)


def axis_in_cap(vs: VirtualSample, b_mag: float, margin: float = 0.0):
    """Upper signed NV direction lying inside the accessible cap at ``b_mag`` (or None)."""
    for d in vs.axes.upper_directions():
        sd = SphericalDirection.from_vector(d)
        lo, hi = accessible_phi_range(b_mag, vs.region, sd.big_theta)
        if lo + margin <= sd.phi <= hi - margin:
            return d
    return None
