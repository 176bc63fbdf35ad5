"""
Ground-state spin Hamiltonian of the negatively charged NV center.

All energies are frequencies E/h in GHz and fields are in mT.  The spin-1
basis order is ``(|+1>, |0>, |-1>)`` throughout, so ``sz = diag(1, 0, -1)``.

The Hamiltonian is

    H = delta * Sz^2 + strain_e * (Sx^2 - Sy^2) + gyromagnetic * (S . B)

with the spin operators expressed in the NV frame (z along the NV axis).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy.constants import physical_constants

from .errors import PhysicsDomainError

#: Bohr magneton over Planck constant, Hz/T (CODATA).
BOHR_HZ_PER_TESLA = physical_constants["Bohr magneton in Hz/T"][0]

DEGENERACY_TOL = 1e-6  # GHz

LABELS = (1, 0, -1)  # basis order


def _frozen(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Constants:
    """Zero-field splitting and electron g-factor.

    ``gyromagnetic`` is g * mu_B / h in GHz/mT and ``b_zfs`` is the field
    magnitude whose Zeeman shift equals ``delta``.
    """

    delta: float = 2.87
    g_factor: float = 2.0

    def __post_init__(self):
        if not (np.isfinite(self.delta) and self.delta > 0):
            raise PhysicsDomainError(f"delta must be positive, got {self.delta}")
        if not (np.isfinite(self.g_factor) and self.g_factor > 0):
            raise PhysicsDomainError(f"g_factor must be positive, got {self.g_factor}")

    @classmethod
    def from_b_zfs(cls, b_zfs: float, delta: float = 2.87) -> "Constants":
        """Constants whose zero-field-splitting field is exactly ``b_zfs`` mT."""
        if not b_zfs > 0:
            raise PhysicsDomainError(f"b_zfs must be positive, got {b_zfs}")
        gyro = delta / b_zfs  # GHz/mT
        return cls(delta=delta, g_factor=gyro * 1e12 / BOHR_HZ_PER_TESLA)

    @property
    def gyromagnetic(self) -> float:
        return self.g_factor * BOHR_HZ_PER_TESLA * 1e-12

    @property
    def b_zfs(self) -> float:
        return self.delta / self.gyromagnetic


@dataclass(frozen=True)
class Spin1Operators:
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray

    def __iter__(self):
        return iter((self.sx, self.sy, self.sz))


_R2 = 1.0 / np.sqrt(2.0)
_SPIN1 = Spin1Operators(
    sx=_frozen(np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex) * _R2),
    sy=_frozen(np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]], dtype=complex) * _R2),
    sz=_frozen(np.diag([1.0, 0.0, -1.0]).astype(complex)),
)


def spin_operators() -> Spin1Operators:
    """Spin-1 matrices in the ``(|+1>, |0>, |-1>)`` basis."""
    return _SPIN1


@dataclass(frozen=True)
class FieldVector:
    """Laboratory-frame magnetic field in mT."""

    bx: float
    by: float
    bz: float

    @classmethod
    def from_array(cls, v) -> "FieldVector":
        x, y, z = (float(c) for c in v)
        return cls(x, y, z)

    def as_array(self) -> np.ndarray:
        return np.array([self.bx, self.by, self.bz], dtype=float)

    @property
    def magnitude(self) -> float:
        return float(np.sqrt(self.bx**2 + self.by**2 + self.bz**2))


@dataclass(frozen=True)
class HamiltonianMatrix:
    """A built Hamiltonian together with the parameters that produced it.

    ``theta`` is set for the planar form; ``field`` and ``nv_axis`` for the
    vector form.  ``b_mag`` and ``theta`` are always available (the latter is
    derived for the vector form) so that eigenvalue labels can be referenced
    to the aligned Hamiltonian at the same field magnitude.
    """

    matrix: np.ndarray
    constants: Constants
    strain_e: float
    b_mag: float
    theta: float
    field: FieldVector | None = None
    nv_axis: tuple[float, float, float] | None = None


class Transitions(NamedTuple):
    f_minus: float
    f_plus: float
    degenerate: bool


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues (ascending), eigenvectors (columns) and spin labels."""

    values: np.ndarray
    vectors: np.ndarray
    labels: tuple[int, int, int]
    degenerate: bool = False
    hamiltonian: HamiltonianMatrix | None = field(default=None, repr=False, compare=False)

    def index(self, label: int) -> int:
        return self.labels.index(label)

    def value(self, label: int) -> float:
        return float(self.values[self.index(label)])

    def vector(self, label: int) -> np.ndarray:
        return self.vectors[:, self.index(label)]

    @cached_property
    def by_label(self) -> dict[int, float]:
        return {lab: float(v) for lab, v in zip(self.labels, self.values)}


def _check_finite(**kw):
    for name, v in kw.items():
        if not np.all(np.isfinite(v)):
            raise PhysicsDomainError(f"{name} must be finite, got {v!r}")


_SZ2 = _frozen(_SPIN1.sz @ _SPIN1.sz)
_STRAIN_OP = _frozen(_SPIN1.sx @ _SPIN1.sx - _SPIN1.sy @ _SPIN1.sy)


def _assemble(c: Constants, strain_e: float, field_nv) -> np.ndarray:
    sx, sy, sz = _SPIN1
    bx, by, bz = field_nv
    h = c.delta * _SZ2 + c.gyromagnetic * (bx * sx + by * sy + bz * sz)
    if strain_e:
        h = h + strain_e * _STRAIN_OP
    # enforce exact hermiticity against rounding in the sums above
    return _frozen(0.5 * (h + h.conj().T))


def build_hamiltonian_nv(c: Constants, strain_e: float, field_nv) -> HamiltonianMatrix:
    """Hamiltonian for a field already expressed in the NV frame ``(x', y', z')``."""
    b = np.asarray(field_nv, dtype=float)
    b_mag = float(np.sqrt(b @ b))
    theta = float(np.arctan2(np.hypot(b[0], b[1]), b[2])) if b_mag else 0.0
    return HamiltonianMatrix(_assemble(c, strain_e, b), c, float(strain_e), b_mag, theta)


def build_hamiltonian_planar(
    c: Constants, strain_e: float, b_mag: float, theta: float
) -> HamiltonianMatrix:
    """Hamiltonian with the field in the NV y-z plane at angle ``theta`` to the axis."""
    _check_finite(strain_e=strain_e, b_mag=b_mag, theta=theta)
    if b_mag < 0:
        raise PhysicsDomainError(f"b_mag must be >= 0, got {b_mag}")
    if strain_e < 0:
        raise PhysicsDomainError(f"strain_e must be >= 0, got {strain_e}")
    field_nv = (0.0, b_mag * np.sin(theta), b_mag * np.cos(theta))
    return HamiltonianMatrix(
        matrix=_assemble(c, strain_e, field_nv),
        constants=c,
        strain_e=float(strain_e),
        b_mag=float(b_mag),
        theta=float(theta),
    )


def nv_frame(nv_axis) -> np.ndarray:
    """Orthonormal NV frame as rows ``(x', y', z')`` with ``z'`` along ``nv_axis``.

    ``x'`` is ``z_lab x z'`` normalized, or ``x_lab x z'`` when the axis is
    within ~8 degrees of lab z.  The choice only matters for the strain term.
    """
    z = np.asarray(nv_axis, dtype=float)
    ref = np.array([0.0, 0.0, 1.0]) if abs(z[2]) < 0.99 else np.array([1.0, 0.0, 0.0])
    x = np.cross(ref, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.array([x, y, z])


def build_hamiltonian_vector(
    c: Constants, strain_e: float, field: FieldVector, nv_axis
) -> HamiltonianMatrix:
    """Hamiltonian for a lab-frame field and an NV axis given as a unit vector."""
    axis = np.asarray(nv_axis, dtype=float)
    b = field.as_array()
    _check_finite(strain_e=strain_e, field=b, nv_axis=axis)
    n = np.linalg.norm(axis)
    if n == 0:
        raise PhysicsDomainError("nv_axis has zero length")
    if abs(n - 1.0) > 1e-9:
        raise PhysicsDomainError(f"nv_axis must be a unit vector, |nv_axis| = {n}")
    if strain_e < 0:
        raise PhysicsDomainError(f"strain_e must be >= 0, got {strain_e}")
    frame = nv_frame(axis)
    field_nv = frame @ b
    b_mag = float(np.linalg.norm(b))
    theta = float(np.arctan2(np.hypot(field_nv[0], field_nv[1]), field_nv[2])) if b_mag else 0.0
    return HamiltonianMatrix(
        matrix=_assemble(c, strain_e, field_nv),
        constants=c,
        strain_e=float(strain_e),
        b_mag=b_mag,
        theta=theta,
        field=field,
        nv_axis=tuple(float(v) for v in axis),
    )


def _reference_labels(c: Constants, strain_e: float, b_mag: float) -> tuple[int, int, int]:
    """Spin labels in ascending energy order for the aligned Hamiltonian.

    At theta = 0 the ``|0>`` level sits at zero and the ``|+-1>`` block has
    eigenvalues ``delta +- sqrt((gyro*B)^2 + strain_e^2)``; the upper one
    continues ``|+1>``.  Ties are broken towards ``0 < -1 < +1`` which is the
    small-field limit.
    """
    split = np.hypot(c.gyromagnetic * b_mag, strain_e)
    energies = {0: 0.0, -1: c.delta - split, 1: c.delta + split}
    order = {0: 0, -1: 1, 1: 2}
    return tuple(sorted(energies, key=lambda lab: (energies[lab], order[lab])))


def eigendecompose(h: HamiltonianMatrix, degeneracy_tol: float = DEGENERACY_TOL) -> EigenSystem:
    """Exact eigensystem with adiabatic spin labels.

    Levels of the aligned Hamiltonian at the same field magnitude are
    labelled by their spin projection; for theta != 0 the levels cannot cross
    (avoided crossings only), so each eigenvalue inherits the label of the
    aligned level with the same energy rank.  Near the axis this is the same
    as assigning by maximal eigenvector overlap.  When two eigenvalues lie
    within ``degeneracy_tol`` the system is flagged degenerate and the labels
    are those of the ascending order.
    """
    m = np.asarray(h.matrix)
    if np.abs(m - m.conj().T).max() > 1e-12 * max(1.0, np.abs(m).max()):
        raise PhysicsDomainError("Hamiltonian matrix is not Hermitian")
    values, vectors = np.linalg.eigh(m)
    degenerate = bool(np.any(np.diff(values) < degeneracy_tol))
    labels = _reference_labels(h.constants, h.strain_e, h.b_mag)
    return EigenSystem(
        values=_frozen(values),
        vectors=_frozen(vectors),
        labels=labels,
        degenerate=degenerate,
        hamiltonian=h,
    )


def transition_frequencies(es: EigenSystem) -> Transitions:
    """Signed transition frequencies ``lambda_-1 - lambda_0`` and ``lambda_+1 - lambda_0``."""
    e0 = es.value(0)
    return Transitions(es.value(-1) - e0, es.value(1) - e0, es.degenerate)


def planar_eigensystem(c: Constants, b_mag: float, theta: float, strain_e: float = 0.0) -> EigenSystem:
    return eigendecompose(build_hamiltonian_planar(c, strain_e, b_mag, theta))
