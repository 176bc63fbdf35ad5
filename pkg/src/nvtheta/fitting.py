"""
Dip detection, Lorentzian least squares and polynomial fits.

The Lorentzian fitter is a Levenberg-Marquardt loop with the analytic
Jacobian of the multi-dip model

    y(f) = baseline * (1 - sum_j depth_j * L(f; center_j, width_j)),
    L(f; c, w) = (w/2)^2 / ((f - c)^2 + (w/2)^2).

Marquardt scaling of the damping term is used; the damping factor starts
at 1e-3 and is divided by 10 after an accepted step and multiplied by 10
after a rejected one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.signal import find_peaks, peak_widths

from .errors import FitError, PhysicsDomainError
from .odmr import Spectrum
from .perturbation import naive_bz_sensitivity, theta2_sensitivity

FIT_WINDOW = 10.0  # half-window in estimated widths
JOINT_SEPARATION = 3.0  # dips closer than this many widths are fit together
MIN_SIGNIFICANCE = 3.0  # fitted depth * baseline must exceed this many residual rms
DETECT_SMOOTHING = 2.0  # gaussian kernel sigma in samples applied before peak finding


class DipGuess(NamedTuple):
    center: float
    depth: float
    width: float


@dataclass(frozen=True)
class LorentzianFit:
    center: float
    width: float
    depth: float
    baseline: float
    residual_rms: float
    converged: bool
    iterations: int
    message: str = ""


@dataclass(frozen=True)
class LinearFit:
    slope: float
    y_intercept: float
    x_intercept: float
    r_squared: float


@dataclass(frozen=True)
class QuadraticFit:
    c0: float
    c1: float
    c2: float
    stderr: tuple[float, float, float]
    n_points: int = 0

    def __call__(self, x):
        return self.c0 + self.c1 * np.asarray(x) + self.c2 * np.asarray(x) ** 2

    @property
    def vertex(self) -> float:
        return -self.c1 / (2 * self.c2)


# --------------------------------------------------------------------------
# detection


def detect_dips(
    s: Spectrum, min_prominence: float = 0.03, smoothing: float = DETECT_SMOOTHING
) -> list[DipGuess]:
    """Initial guesses for dips at least ``min_prominence * baseline`` deep.

    Peaks are searched in a lightly smoothed copy of the data so that
    isolated noise spikes on a dip flank are not reported as dips.
    """
    if not 0 < min_prominence < 1:
        raise ValueError(f"min_prominence must be in (0, 1), got {min_prominence}")
    y = s.fluorescence
    if smoothing > 0:
        y = gaussian_filter1d(y, smoothing, mode="nearest")
    base = float(np.median(y))
    inv = base - y
    peaks, props = find_peaks(inv, prominence=min_prominence * base, height=min_prominence * base)
    if peaks.size == 0:
        return []
    _, _, left, right = peak_widths(inv, peaks, rel_height=0.5, prominence_data=(
        props["prominences"], props["left_bases"], props["right_bases"]))
    idx = np.arange(y.size)
    f_left = np.interp(left, idx, s.frequencies)
    f_right = np.interp(right, idx, s.frequencies)
    step = float(np.min(np.diff(s.frequencies)))
    guesses = [
        DipGuess(float(s.frequencies[p]), float(inv[p] / base), float(max(fr - fl, 2 * step)))
        for p, fl, fr in zip(peaks, f_left, f_right)
    ]
    return sorted(guesses, key=lambda g: g.center)


# --------------------------------------------------------------------------
# Lorentzian model


def lorentzian_model(f, params) -> np.ndarray:
    """Multi-dip model; ``params = (c_1, w_1, d_1, ..., c_k, w_k, d_k, baseline)``."""
    f = np.asarray(f, dtype=float)
    p = np.asarray(params, dtype=float)
    absorbed = np.zeros_like(f)
    for c, w, d in p[:-1].reshape(-1, 3):
        hw2 = 0.25 * w * w
        absorbed += d * hw2 / ((f - c) ** 2 + hw2)
    return p[-1] * (1.0 - absorbed)


def lorentzian_jacobian(f, params) -> np.ndarray:
    """Analytic derivative of :func:`lorentzian_model` with respect to ``params``."""
    f = np.asarray(f, dtype=float)
    p = np.asarray(params, dtype=float)
    base = p[-1]
    jac = np.empty((f.size, p.size))
    absorbed = np.zeros_like(f)
    for j, (c, w, d) in enumerate(p[:-1].reshape(-1, 3)):
        h = 0.5 * w
        u = f - c
        den = u * u + h * h
        lor = h * h / den
        absorbed += d * lor
        jac[:, 3 * j] = -base * d * 2 * h * h * u / den**2
        jac[:, 3 * j + 1] = -base * d * h * u * u / den**2
        jac[:, 3 * j + 2] = -base * lor
    jac[:, -1] = 1.0 - absorbed
    return jac


def _levenberg_marquardt(x, y, p0, max_iter, tol):
    p = np.array(p0, dtype=float)
    r = lorentzian_model(x, p) - y
    cost = float(r @ r)
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        jac = lorentzian_jacobian(x, p)
        a = jac.T @ jac
        g = jac.T @ r
        diag = np.diag(a).copy()
        diag = np.maximum(diag, 1e-12 * max(diag.max(), 1e-300))
        for _retry in range(12):
            try:
                step = np.linalg.solve(a + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                break
            lam *= 10.0
        else:
            raise FitError("normal equations singular after repeated damping")
        rel = np.max(np.abs(step) / (np.abs(p) + 1e-30))
        p_new = p + step
        r_new = lorentzian_model(x, p_new) - y
        cost_new = float(r_new @ r_new)
        if np.isfinite(cost_new) and cost_new < cost:
            p, r, cost = p_new, r_new, cost_new
            lam = max(lam / 10.0, 1e-15)
            if rel < tol or cost == 0.0:
                converged = True
                break
        else:
            if rel < tol:
                # current point is already optimal to the requested precision
                converged = True
                break
            lam *= 10.0
            if lam > 1e20:
                break
    return p, cost, converged, it


def _fit_group(
    s: Spectrum,
    guesses: Sequence[DipGuess],
    max_iter: int,
    tol: float,
    window: float,
    limits: tuple[float, float] = (-np.inf, np.inf),
):
    lo = max(limits[0], min(g.center - window * g.width for g in guesses))
    hi = min(limits[1], max(g.center + window * g.width for g in guesses))
    sel = (s.frequencies >= lo) & (s.frequencies <= hi)
    x = s.frequencies[sel]
    y = s.fluorescence[sel]
    n_par = 3 * len(guesses) + 1
    if x.size <= n_par:
        raise FitError(f"only {x.size} samples inside the fit window [{lo:.6g}, {hi:.6g}] GHz")
    base0 = float(np.median(s.fluorescence))
    p0 = []
    for g in guesses:
        p0 += [g.center, g.width, g.depth]
    p0.append(base0)
    p, cost, converged, iters = _levenberg_marquardt(x, y, p0, max_iter, tol)
    rms = float(np.sqrt(cost / x.size))
    fits = []
    for c, w, d in p[:-1].reshape(-1, 3):
        w = abs(w)
        problems = []
        if not converged:
            problems.append(f"no convergence in {max_iter} iterations")
        if not lo <= c <= hi:
            problems.append("center left the fit window")
        if not 0 < w < hi - lo:
            problems.append("width outside (0, window)")
        if not d > 0:
            problems.append("non-positive depth")
        elif d * abs(p[-1]) < MIN_SIGNIFICANCE * rms:
            problems.append("dip not significant above residual noise")
        fits.append(
            LorentzianFit(
                center=float(c),
                width=float(w),
                depth=float(d),
                baseline=float(p[-1]),
                residual_rms=rms,
                converged=not problems,
                iterations=iters,
                message="; ".join(problems),
            )
        )
    return fits


def fit_lorentzian(
    s: Spectrum,
    guess,
    max_iter: int = 200,
    tol: float = 1e-10,
    window: float = FIT_WINDOW,
) -> LorentzianFit:
    """Single-dip least-squares fit over ``guess.center +- window * guess.width``.

    A fit that stops without meeting ``tol`` or ends with unphysical
    parameters is returned with ``converged=False`` and the best
    parameters found.
    """
    g = DipGuess(*guess)
    if not s.frequencies[0] <= g.center <= s.frequencies[-1]:
        raise ValueError("guess center outside the spectrum")
    return _fit_group(s, [g], max_iter, tol, window)[0]


def fit_dips(
    s: Spectrum,
    guesses: Sequence[DipGuess],
    max_iter: int = 200,
    tol: float = 1e-10,
    window: float = FIT_WINDOW,
    joint_separation: float = JOINT_SEPARATION,
    max_groups: int | None = None,
) -> list[LorentzianFit]:
    """Fit guessed dips in order of frequency.

    Dips closer than ``joint_separation`` widths form one group and are fit
    jointly.  A group's window stops halfway to the neighbouring groups so
    that their dips do not leak into the fit.  ``max_groups`` limits the
    work to the lowest-frequency groups.
    """
    guesses = sorted((DipGuess(*g) for g in guesses), key=lambda g: g.center)
    groups: list[list[DipGuess]] = []
    for g in guesses:
        if groups:
            prev = groups[-1][-1]
            if g.center - prev.center < joint_separation * max(g.width, prev.width):
                groups[-1].append(g)
                continue
        groups.append([g])
    out = []
    for i, grp in enumerate(groups[:max_groups]):
        lo = 0.5 * (groups[i - 1][-1].center + grp[0].center) if i > 0 else -np.inf
        hi = 0.5 * (grp[-1].center + groups[i + 1][0].center) if i + 1 < len(groups) else np.inf
        out.extend(_fit_group(s, grp, max_iter, tol, window, (lo, hi)))
    return out


# --------------------------------------------------------------------------
# polynomial fits


def _xy(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d arrays of equal length")
    return x, y


def fit_linear(x, y) -> LinearFit:
    """Ordinary least-squares line through ``(x, y)``."""
    x, y = _xy(x, y)
    if np.unique(x).size < 2:
        raise FitError("linear fit needs at least 2 distinct x values")
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    icpt = float(ym - slope * xm)
    ss_res = float(np.sum((y - icpt - slope * x) ** 2))
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    x_icpt = -icpt / slope if slope != 0 else float("nan")
    return LinearFit(slope, icpt, float(x_icpt), float(r2))


def fit_quadratic(x, y) -> QuadraticFit:
    """Least-squares parabola ``c0 + c1*x + c2*x**2`` with coefficient standard errors."""
    x, y = _xy(x, y)
    if np.unique(x).size < 3:
        raise FitError("quadratic fit needs at least 3 distinct x values")
    design = np.vander(x, 3, increasing=True)
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < 3:
        raise FitError("degenerate design matrix")
    dof = x.size - 3
    if dof > 0:
        resid = y - design @ coef
        s2 = float(resid @ resid) / dof
        cov = s2 * np.linalg.inv(design.T @ design)
        stderr = tuple(float(v) for v in np.sqrt(np.abs(np.diag(cov))))
    else:
        stderr = (0.0, 0.0, 0.0)
    return QuadraticFit(float(coef[0]), float(coef[1]), float(coef[2]), stderr, int(x.size))


# --------------------------------------------------------------------------
# sensitivity table


@dataclass(frozen=True)
class SensitivityRow:
    b_mag: float
    measured: float
    analytic: float
    naive: float
    ratio: float
    singular: bool = False


def sensitivity_table(c, fields: Sequence[float], measured_c2: Sequence[float]) -> list[SensitivityRow]:
    """Pair measured theta**2 coefficients with the analytic and naive predictions.

    ``ratio`` is measured / naive.  Fields too close to (or above) B_zfs get
    ``analytic = nan`` and ``singular = True``.
    """
    if len(fields) != len(measured_c2):
        raise ValueError("fields and measured_c2 must have the same length")
    rows = []
    for b, m in zip(fields, measured_c2):
        naive = naive_bz_sensitivity(c, b)
        try:
            analytic, singular = theta2_sensitivity(c, b), False
        except PhysicsDomainError:
            analytic, singular = float("nan"), True
        ratio = m / naive if naive > 0 else float("nan")
        rows.append(SensitivityRow(float(b), float(m), analytic, naive, float(ratio), singular))
    return rows
