"""
Small-angle expansion of the NV eigenvalues.

For a field of magnitude B at angle theta to the NV axis the labelled
eigenvalues behave as ``lambda_i(theta) = omega_i + kappa_i * theta**2 + O(theta**4)``.
The closed forms below come from second-order perturbation theory in
``theta`` and are checked against Richardson-extrapolated curvature of the
exact eigenvalues.

Gap curvatures use the convention ``gap_-+ = lambda_-+1 - lambda_0`` so that
the monitored |0> -> |-1> dip frequency rises with theta**2 below B_zfs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import PhysicsDomainError, SingularFieldError
from .spin_model import Constants, planar_eigensystem

SINGULAR_MARGIN = 0.1  # mT


@dataclass(frozen=True)
class SmallAngleExpansion:
    b_mag: float
    omega: dict[int, float]
    kappa: dict[int, float]


@dataclass(frozen=True)
class GapExpansion:
    b_mag: float
    f0_minus: float
    f0_plus: float
    curv_minus: float
    curv_plus: float


def _check_field(c: Constants, b_mag: float, *, below_zfs: bool):
    if not np.isfinite(b_mag) or b_mag < 0:
        raise PhysicsDomainError(f"field magnitude must be finite and >= 0, got {b_mag}")
    if abs(b_mag - c.b_zfs) < SINGULAR_MARGIN:
        raise SingularFieldError(
            f"B = {b_mag} mT is within {SINGULAR_MARGIN} mT of B_zfs = {c.b_zfs:.4f} mT"
        )
    if below_zfs and b_mag > c.b_zfs:
        raise PhysicsDomainError(f"B = {b_mag} mT exceeds B_zfs = {c.b_zfs:.4f} mT")


def analytic_omegas(c: Constants, b_mag: float) -> tuple[float, float, float]:
    """Aligned-field levels ``(omega_-1, omega_0, omega_+1)`` in GHz."""
    if b_mag < 0:
        raise PhysicsDomainError(f"b_mag must be >= 0, got {b_mag}")
    r = b_mag / c.b_zfs
    return c.delta * (1 - r), 0.0, c.delta * (1 + r)


def analytic_kappas(c: Constants, b_mag: float) -> tuple[float, float, float]:
    """theta**2 coefficients ``(kappa_-1, kappa_0, kappa_+1)`` in GHz/rad^2."""
    _check_field(c, b_mag, below_zfs=False)
    b, bz, d = b_mag, c.b_zfs, c.delta
    k_minus = -d * b / (2 * (b - bz))
    k_plus = -d * b / (2 * (b + bz))
    k_zero = d * b**2 / (b**2 - bz**2)
    return k_minus, k_zero, k_plus


def small_angle_expansion(c: Constants, b_mag: float) -> SmallAngleExpansion:
    om, ok, op = analytic_omegas(c, b_mag)
    km, k0, kp = analytic_kappas(c, b_mag)
    return SmallAngleExpansion(b_mag, {-1: om, 0: ok, 1: op}, {-1: km, 0: k0, 1: kp})


def analytic_gap_curvatures(c: Constants, b_mag: float) -> GapExpansion:
    """theta = 0 gaps and their theta**2 coefficients below B_zfs."""
    _check_field(c, b_mag, below_zfs=True)
    b, bz, d = b_mag, c.b_zfs, c.delta
    denom = 2 * (bz**2 - b**2)
    return GapExpansion(
        b_mag=b,
        f0_minus=d * (1 - b / bz),
        f0_plus=d * (1 + b / bz),
        curv_minus=d * b * (3 * b + bz) / denom,
        curv_plus=d * b * (3 * b - bz) / denom,
    )


def numerical_curvature(
    f: Callable[[float], float], theta0: float = 0.0, step: float = 1e-3, levels: int = 3
) -> float:
    """theta**2 coefficient of ``f`` at ``theta0`` (half the second derivative).

    Central second differences at steps ``step * 2**k``, k < levels, are
    combined by Richardson extrapolation in h**2.  The truncation error is
    O(step**(2*levels)); the default samples ``f`` on ``theta0 +- 4*step``.
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    if levels < 1:
        raise ValueError("levels must be >= 1")
    f0 = float(f(theta0))
    table = []
    for k in range(levels):
        h = step * 2**k
        fp, fm = float(f(theta0 + h)), float(f(theta0 - h))
        if not np.all(np.isfinite([f0, fp, fm])):
            raise ValueError(f"non-finite sample near theta = {theta0} (h = {h})")
        table.append((fp - 2 * f0 + fm) / (2 * h * h))
    # column j removes the h**(2j) error term; ratio between successive steps is 2
    for j in range(1, levels):
        fac = 4.0**j
        table = [(fac * table[k] - table[k + 1]) / (fac - 1) for k in range(len(table) - 1)]
    return table[0]


def eigenvalue_curve(c: Constants, b_mag: float, label: int, strain_e: float = 0.0):
    """``theta -> lambda_label(theta)`` from exact diagonalization."""
    return lambda theta: planar_eigensystem(c, b_mag, theta, strain_e).value(label)


def gap_curve(c: Constants, b_mag: float, label: int = -1, strain_e: float = 0.0):
    """``theta -> lambda_label(theta) - lambda_0(theta)``."""

    def gap(theta):
        es = planar_eigensystem(c, b_mag, theta, strain_e)
        return es.value(label) - es.value(0)

    return gap


def theta2_sensitivity(c: Constants, b_mag: float) -> float:
    """|theta**2 coefficient| of the monitored |0> -> |-1> transition, GHz/rad^2."""
    return abs(analytic_gap_curvatures(c, b_mag).curv_minus)


def naive_bz_sensitivity(c: Constants, b_mag: float) -> float:
    """theta**2 coefficient of a sensor reading only the field component along its axis."""
    if b_mag < 0:
        raise PhysicsDomainError(f"b_mag must be >= 0, got {b_mag}")
    return c.delta * b_mag / (2 * c.b_zfs)
