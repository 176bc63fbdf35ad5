"""
Synthetic optically detected ESR spectra.

Each |0> -> |+-1> transition produces a Lorentzian fluorescence dip.  The dip
depth follows a phenomenological contrast model:

    depth = base_contrast * |<e_0|0>|^2 * p_drive
    p_drive = min(1, |<e_t|Sx|e_0>|^2 + |<e_t|Sy|e_0>|^2)

i.e. the bright-state population of the lower level times the transition
strength for a transverse drive averaged over its azimuth in the NV frame.
For pure spin states both factors are 1, so on-axis dips have the full
``base_contrast``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from .errors import PhysicsDomainError
from .spin_model import DEGENERACY_TOL, EigenSystem, spin_operators


@dataclass(frozen=True)
class LineShape:
    width: float = 0.010  # GHz FWHM
    base_contrast: float = 0.15
    baseline: float = 1.0

    def __post_init__(self):
        if not self.width > 0:
            raise PhysicsDomainError(f"width must be positive, got {self.width}")
        if not 0 < self.base_contrast < 1:
            raise PhysicsDomainError(f"base_contrast must be in (0, 1), got {self.base_contrast}")
        if not self.baseline > 0:
            raise PhysicsDomainError(f"baseline must be positive, got {self.baseline}")


@dataclass(frozen=True)
class Dip:
    center: float
    depth: float
    label: str


DipSet = tuple[Dip, ...]


@dataclass(frozen=True)
class Spectrum:
    frequencies: np.ndarray
    fluorescence: np.ndarray
    metadata: Mapping = field(default_factory=dict)

    def __post_init__(self):
        f = np.array(self.frequencies, dtype=float)
        y = np.array(self.fluorescence, dtype=float)
        if f.ndim != 1 or f.shape != y.shape or f.size < 2:
            raise PhysicsDomainError("spectrum needs equal-length 1-d arrays with >= 2 samples")
        if np.any(np.diff(f) <= 0):
            raise PhysicsDomainError("frequencies must be strictly increasing")
        f.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "fluorescence", y)
        object.__setattr__(self, "metadata", MappingProxyType(dict(self.metadata)))

    @property
    def baseline(self) -> float:
        return float(self.metadata.get("baseline", 1.0))


def _transition_weight(es: EigenSystem, target: int) -> float:
    ops = spin_operators()
    e0, et = es.vector(0), es.vector(target)
    return float(abs(et.conj() @ ops.sx @ e0) ** 2 + abs(et.conj() @ ops.sy @ e0) ** 2)


def dip_set(es: EigenSystem, ls: LineShape = LineShape(), merge_tol: float = DEGENERACY_TOL) -> DipSet:
    """Dips of the two ground-state transitions of one NV orientation.

    If the two transitions coincide within ``merge_tol`` (zero field without
    strain) a single dip is returned; its drive weight is the sum over the
    degenerate pair, which does not depend on how the solver split the
    degenerate subspace.
    """
    bright = float(abs(es.vector(0)[1]) ** 2)
    e0 = es.value(0)
    f_minus = abs(es.value(-1) - e0)
    f_plus = abs(es.value(1) - e0)
    w_minus = _transition_weight(es, -1)
    w_plus = _transition_weight(es, 1)
    scale = ls.base_contrast * bright
    if abs(f_plus - f_minus) < merge_tol:
        return (Dip(0.5 * (f_minus + f_plus), scale * min(1.0, w_minus + w_plus), "0->+-1"),)
    return (
        Dip(f_minus, scale * min(1.0, w_minus), "0->-1"),
        Dip(f_plus, scale * min(1.0, w_plus), "0->+1"),
    )


def lorentzian_profile(f, center, width):
    """Unit-height Lorentzian with FWHM ``width``."""
    hw2 = (0.5 * width) ** 2
    return hw2 / ((np.asarray(f) - center) ** 2 + hw2)


def render(freqs: np.ndarray, dips: Sequence[Dip], ls: LineShape) -> np.ndarray:
    absorbed = np.zeros_like(freqs, dtype=float)
    for d in dips:
        absorbed += d.depth * lorentzian_profile(freqs, d.center, ls.width)
    return ls.baseline * (1.0 - absorbed)


def synthesize(
    ds: Sequence[Dip],
    ls: LineShape,
    f_start: float,
    f_stop: float,
    n: int,
    metadata: Mapping | None = None,
) -> Spectrum:
    """Noiseless spectrum sampled on ``n`` evenly spaced frequencies."""
    if not f_start < f_stop:
        raise PhysicsDomainError("f_start must be below f_stop")
    if n < 2:
        raise PhysicsDomainError("need at least two samples")
    freqs = np.linspace(f_start, f_stop, int(n))
    meta = {"baseline": ls.baseline, "width": ls.width}
    meta.update(metadata or {})
    return Spectrum(freqs, render(freqs, ds, ls), meta)


def add_noise(s: Spectrum, sigma: float, seed) -> Spectrum:
    """Gaussian noise of standard deviation ``sigma * baseline``.

    ``seed`` is anything accepted by :func:`numpy.random.default_rng`; a
    sequence of ints gives independent streams for sweep points.
    """
    if sigma < 0:
        raise PhysicsDomainError(f"sigma must be >= 0, got {sigma}")
    meta = dict(s.metadata)
    meta["seed"] = seed
    meta["noise_sigma"] = sigma
    if sigma == 0:
        return replace(s, metadata=meta)
    rng = np.random.default_rng(seed)
    noisy = s.fluorescence + rng.normal(0.0, sigma * s.baseline, s.fluorescence.size)
    return Spectrum(s.frequencies, noisy, meta)
