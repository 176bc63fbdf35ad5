"""
Crystal geometry: tetrahedral NV axes, spherical directions and the
coil-limited region of accessible field vectors.

Spherical angles follow the polar-plot convention used for the sweep maps:
``phi`` is the polar angle from lab +z and ``big_theta`` the azimuth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import InaccessibleFieldError, PhysicsDomainError
from .spin_model import FieldVector

TWO_PI = 2.0 * np.pi

CANONICAL_AXES = np.array(
    [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float
) / np.sqrt(3.0)

_ACCESS_SLACK = 1e-9  # mT, absorbs rounding of grid points placed on the boundary


@dataclass(frozen=True)
class SphericalDirection:
    phi: float
    big_theta: float

    def __post_init__(self):
        if not (-1e-12 <= self.phi <= np.pi + 1e-12):
            raise PhysicsDomainError(f"phi out of [0, pi]: {self.phi}")
        object.__setattr__(self, "big_theta", float(self.big_theta) % TWO_PI)

    def to_vector(self) -> np.ndarray:
        s = np.sin(self.phi)
        return np.array([s * np.cos(self.big_theta), s * np.sin(self.big_theta), np.cos(self.phi)])

    @classmethod
    def from_vector(cls, v) -> "SphericalDirection":
        v = np.asarray(v, dtype=float)
        n = np.linalg.norm(v)
        if n == 0:
            raise PhysicsDomainError("zero vector has no direction")
        x, y, z = v / n
        phi = float(np.arctan2(np.hypot(x, y), z))
        big_theta = float(np.arctan2(y, x)) % TWO_PI if np.hypot(x, y) > 0 else 0.0
        return cls(phi, big_theta)


@dataclass(frozen=True)
class CrystalOrientation:
    """Proper rotation taking crystal-frame vectors to the lab frame."""

    rotation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float)
        if r.shape != (3, 3) or not np.all(np.isfinite(r)):
            raise PhysicsDomainError("rotation must be a finite 3x3 matrix")
        if np.abs(r @ r.T - np.eye(3)).max() > 1e-10:
            raise PhysicsDomainError("rotation matrix is not orthogonal")
        if abs(np.linalg.det(r) - 1.0) > 1e-10:
            raise PhysicsDomainError("rotation matrix must have det = +1")
        r.setflags(write=False)
        object.__setattr__(self, "rotation", r)

    @classmethod
    def identity(cls) -> "CrystalOrientation":
        return cls(np.eye(3))

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "CrystalOrientation":
        axis = np.asarray(axis, dtype=float)
        n = np.linalg.norm(axis)
        if n == 0:
            if angle == 0:
                return cls.identity()
            raise PhysicsDomainError("rotation axis has zero length")
        return cls(Rotation.from_rotvec(axis / n * angle).as_matrix())

    @classmethod
    def random(cls, rng: np.random.Generator) -> "CrystalOrientation":
        return cls(Rotation.random(random_state=rng).as_matrix())

    @classmethod
    def aligning(cls, target, twist: float = 0.0, axis_index: int = 0) -> "CrystalOrientation":
        """Orientation that places canonical axis ``axis_index`` along ``target``.

        ``twist`` rotates the crystal about ``target`` afterwards.
        """
        a = CANONICAL_AXES[axis_index]
        t = np.asarray(target, dtype=float)
        t = t / np.linalg.norm(t)
        align, _ = Rotation.align_vectors([t], [a])
        r = Rotation.from_rotvec(t * twist) * align
        return cls(r.as_matrix())


@dataclass(frozen=True)
class NvAxisSet:
    axes: np.ndarray  # (4, 3)
    signed_directions: np.ndarray  # (8, 3), axes followed by their negations

    def upper_directions(self) -> np.ndarray:
        """Signed directions in the closed upper hemisphere."""
        return self.signed_directions[self.signed_directions[:, 2] >= 0]


@dataclass(frozen=True)
class FieldRegion:
    """Cuboid of reachable field vectors: ``|bx|, |by| <= max_xy``, ``|bz| <= max_z`` (mT)."""

    max_xy: float = 25.0
    max_z: float = 100.0

    def __post_init__(self):
        if not (self.max_xy > 0 and self.max_z > 0):
            raise PhysicsDomainError("field region bounds must be positive")

    @property
    def max_magnitude(self) -> float:
        return float(np.sqrt(2 * self.max_xy**2 + self.max_z**2))


def nv_axes(o: CrystalOrientation) -> NvAxisSet:
    axes = CANONICAL_AXES @ o.rotation.T
    axes.setflags(write=False)
    signed = np.vstack([axes, -axes])
    signed.setflags(write=False)
    return NvAxisSet(axes, signed)


def angle_between(v, w) -> float:
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    nv, nw = np.linalg.norm(v), np.linalg.norm(w)
    if nv == 0 or nw == 0:
        raise PhysicsDomainError("angle with a zero vector is undefined")
    return float(np.arccos(np.clip(np.dot(v, w) / (nv * nw), -1.0, 1.0)))


def is_accessible(f: FieldVector, r: FieldRegion = FieldRegion()) -> bool:
    lim = _ACCESS_SLACK
    return bool(
        abs(f.bx) <= r.max_xy + lim and abs(f.by) <= r.max_xy + lim and abs(f.bz) <= r.max_z + lim
    )


def accessible_phi_range(b_mag: float, r: FieldRegion, big_theta: float) -> tuple[float, float]:
    """Polar-angle interval reachable at magnitude ``b_mag`` and azimuth ``big_theta``.

    The lower bound is non-zero only when ``b_mag > max_z``.  Returns an
    empty interval (lo > hi) when nothing is reachable at this azimuth.
    """
    if not (b_mag > 0):
        raise PhysicsDomainError(f"field magnitude must be positive, got {b_mag}")
    if b_mag > r.max_magnitude * (1 + 1e-12):
        raise InaccessibleFieldError(
            f"|B| = {b_mag} mT exceeds the accessible region diagonal {r.max_magnitude:.3f} mT"
        )
    m = max(abs(np.cos(big_theta)), abs(np.sin(big_theta)))
    s = r.max_xy / (b_mag * m)
    hi = np.pi / 2 if s >= 1 else float(np.arcsin(s))
    lo = 0.0 if b_mag <= r.max_z else float(np.arccos(r.max_z / b_mag))
    return lo, hi


def accessible_cap(b_mag: float, r: FieldRegion, big_theta: float) -> float:
    """Largest reachable polar angle (capped at pi/2) at the given azimuth."""
    return accessible_phi_range(b_mag, r, big_theta)[1]


def make_sweep_grid(
    b_mag: float, r: FieldRegion, n_phi: int, n_theta: int
) -> list[tuple[SphericalDirection, FieldVector]]:
    """Theta-major grid over the accessible part of the upper hemisphere."""
    if n_phi < 2 or n_theta < 2:
        raise PhysicsDomainError("grid needs at least 2 points per angle")
    out = []
    for big_theta in TWO_PI * np.arange(n_theta) / n_theta:
        lo, hi = accessible_phi_range(b_mag, r, big_theta)
        if lo > hi:
            continue
        for phi in np.linspace(lo, hi, n_phi):
            d = SphericalDirection(float(phi), float(big_theta))
            out.append((d, FieldVector.from_array(b_mag * d.to_vector())))
    return out
