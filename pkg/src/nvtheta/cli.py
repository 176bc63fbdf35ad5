"""
``nvtheta`` command-line interface.

Each subcommand runs one pipeline stage and writes plain tables.  Without
``--out`` the tables go to stdout; with ``--out DIR`` each table becomes a
file in ``DIR`` and a ``MANIFEST.json`` records status, outputs and any
failing stage.  Exit codes: 0 success, 2 usage or config error, 3 physics
domain error, 4 fit failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .config import RunConfig, default_config_text, load_config
from .errors import ConfigError, FitError, NVError, PhysicsDomainError
from .experiment import (
    OrientationEstimate,
    locate_candidate_axes,
    measure_sensitivity,
    monitored_dips,
    refine_axis,
    run_angle_sweep,
    select_refinable,
)
from .fitting import detect_dips, fit_dips, sensitivity_table
from .geometry import SphericalDirection
from .io import Table, dump_table, read_table, spectrum_table, table_spectrum, write_table
from .odmr import add_noise, synthesize
from .perturbation import (
    _check_field,
    analytic_gap_curvatures,
    gap_curve,
    numerical_curvature,
    small_angle_expansion,
)
from .spin_model import build_hamiltonian_planar, eigendecompose, transition_frequencies

log = logging.getLogger("nvtheta")

EXIT_OK, EXIT_USAGE, EXIT_PHYSICS, EXIT_FIT = 0, 2, 3, 4

COMMANDS = ("eig", "expand", "synth", "fit", "sweep", "locate", "refine", "sensitivity")


class Run:
    """Collects output tables for one command and tracks the current stage."""

    def __init__(self, command: str, cfg: RunConfig, stream=None):
        self.command, self.cfg = command, cfg
        self.out = Path(cfg.output.dir) if cfg.output.dir else None
        self.stream = stream if stream is not None else sys.stdout
        self.stage_name = "setup"
        self.outputs: list[str] = []
        self.started = datetime.now(timezone.utc)
        if self.out is not None:
            self.out.mkdir(parents=True, exist_ok=True)

    def meta(self, **extra) -> dict:
        m = {"command": self.command, "config_sha256": self.cfg.sha256(), "seed": self.cfg.sample.seed}
        m.update({k: str(v) for k, v in extra.items()})
        return m

    def emit(self, name: str, columns, rows, fmt: str | None = None, **extra):
        fmt = fmt or self.cfg.output.format
        t = Table(tuple(columns), list(rows), self.meta(table=name, **extra))
        if self.out is None:
            dump_table(t, self.stream, fmt)
        else:
            ext = "tsv" if fmt == "tsv" else "jsonl"
            p = write_table(self.out / f"{name}.{ext}", t, fmt)
            self.outputs.append(p.name)
        return t

    @contextmanager
    def stage(self, name: str):
        self.stage_name = name
        log.info("stage %s", name)
        yield

    def manifest(self, status: str, error: str | None = None):
        if self.out is None:
            return
        doc = {
            "command": self.command,
            "version": __version__,
            "config_source": self.cfg.source,
            "config_sha256": self.cfg.sha256(),
            "seed": self.cfg.sample.seed,
            "threads": self.cfg.threads,
            "status": status,
            "failed_stage": None if status == "ok" else self.stage_name,
            "error": error,
            "outputs": self.outputs,
            "started_utc": self.started.isoformat(),
            "finished_utc": datetime.now(timezone.utc).isoformat(),
        }
        (self.out / "MANIFEST.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# commands


def cmd_eig(run: Run):
    cfg = run.cfg
    c = cfg.physical_constants()
    b, theta = cfg.eig.b_mag, cfg.eig.theta_rad
    _check_field(c, b, below_zfs=False)
    es = eigendecompose(build_hamiltonian_planar(c, cfg.sample.strain_e, b, theta))
    tr = transition_frequencies(es)
    cols = ("b_mag_mT", "theta_rad", "strain_e", "lambda_p1", "lambda_0", "lambda_m1",
            "f_minus", "f_plus", "degenerate")
    row = (b, theta, cfg.sample.strain_e, es.value(1), es.value(0), es.value(-1),
           abs(tr.f_minus), abs(tr.f_plus), int(tr.degenerate or abs(tr.f_plus - tr.f_minus) < 1e-6))
    run.emit("eig", cols, [row])


def cmd_expand(run: Run):
    cfg = run.cfg
    c = cfg.physical_constants()
    if not cfg.expand.b_list:
        raise ConfigError("expand.b_list: at least one field is required")
    thetas = np.linspace(-cfg.expand.theta_max_rad, cfg.expand.theta_max_rad, cfg.expand.n_theta)
    curves, coeffs = [], []
    for b in cfg.expand.b_list:
        _check_field(c, b, below_zfs=True)
        sae = small_angle_expansion(c, b)
        gae = analytic_gap_curvatures(c, b)
        for t in thetas:
            es = eigendecompose(build_hamiltonian_planar(c, 0.0, b, float(t)))
            lam = [es.value(k) for k in (1, 0, -1)]
            approx = [sae.omega[k] + sae.kappa[k] * t * t for k in (1, 0, -1)]
            curves.append((b, float(t), *lam, lam[2] - lam[1], lam[0] - lam[1], *approx,
                           gae.f0_minus + gae.curv_minus * t * t, gae.f0_plus + gae.curv_plus * t * t))
        coeffs.append((
            b, sae.omega[1], sae.omega[0], sae.omega[-1], sae.kappa[1], sae.kappa[0], sae.kappa[-1],
            gae.curv_minus, gae.curv_plus,
            numerical_curvature(gap_curve(c, b, -1)), numerical_curvature(gap_curve(c, b, 1)),
        ))
    run.emit("expand_curves",
             ("b_mag_mT", "theta_rad", "lambda_p1", "lambda_0", "lambda_m1", "gap_minus", "gap_plus",
              "approx_lambda_p1", "approx_lambda_0", "approx_lambda_m1", "approx_gap_minus",
              "approx_gap_plus"), curves)
    run.emit("expand_coefficients",
             ("b_mag_mT", "omega_p1", "omega_0", "omega_m1", "kappa_p1", "kappa_0", "kappa_m1",
              "curv_minus", "curv_plus", "numeric_curv_minus", "numeric_curv_plus"), coeffs)


def cmd_synth(run: Run):
    cfg = run.cfg
    vs = cfg.virtual_sample()
    s = cfg.synth
    d = SphericalDirection(s.phi_rad, s.big_theta_rad)
    field = s.b_mag * d.to_vector()
    lo, hi = vs.scan_window(s.b_mag)
    lo = s.f_start if s.f_start is not None else lo
    hi = s.f_stop if s.f_stop is not None else hi
    n = int(round((hi - lo) / vs.freq_step)) + 1
    meta = {"field_mT": s.b_mag, "phi_rad": d.phi, "big_theta_rad": d.big_theta}
    spec = synthesize(monitored_dips(vs, field), vs.line, lo, hi, n, meta)
    spec = add_noise(spec, vs.noise_sigma, [vs.seed])
    t = spectrum_table(spec, run.meta())
    run.emit("spectrum", t.columns, t.rows, **{k: v for k, v in t.meta.items() if k not in run.meta()})


def cmd_fit(run: Run):
    cfg = run.cfg
    if not cfg.fit.input:
        raise ConfigError("fit.input: a spectrum file is required (--input PATH)")
    spec = table_spectrum(read_table(cfg.fit.input))
    prom = cfg.fit.min_prominence if cfg.fit.min_prominence is not None else cfg.sample.min_prominence
    guesses = detect_dips(spec, prom)
    if not guesses:
        raise FitError(f"no dip above prominence {prom} in {cfg.fit.input}")
    fits = fit_dips(spec, guesses)
    cols = ("index", "center_GHz", "width_GHz", "depth", "baseline", "residual_rms", "converged",
            "iterations", "message")
    rows = [(i, f.center, f.width, f.depth, f.baseline, f.residual_rms, int(f.converged), f.iterations,
             f.message) for i, f in enumerate(fits)]
    run.emit("fit", cols, rows, fmt="records" if cfg.output.format == "records" else "tsv",
             input=cfg.fit.input)
    bad = [i for i, f in enumerate(fits) if not f.converged]
    if bad:
        raise FitError(f"fit failed for dip(s) {bad}: " + "; ".join(fits[i].message for i in bad))


SWEEP_COLUMNS = ("phi_rad", "big_theta_rad", "depth", "location_GHz", "flag")


def _sweep(run: Run, vs):
    s = run.cfg.sweep
    with run.stage("sweep"):
        sr = run_angle_sweep(vs, s.b_mag, s.n_phi, s.n_theta, threads=run.cfg.threads)
        run.emit("sweep_map", SWEEP_COLUMNS, sr.records(), b_mag_mT=s.b_mag)
    return sr


CANDIDATE_COLUMNS = ("rank", "phi_rad", "big_theta_rad", "location_GHz", "depth", "phi_spread_rad",
                     "theta_spread_rad", "angular_radius_rad", "n_members")


def _locate(run: Run, sr):
    s = run.cfg.sweep
    with run.stage("locate"):
        cands = locate_candidate_axes(sr, k_max=s.k_max, region_tol=s.region_tol)
        rows = [(i, c.direction.phi, c.direction.big_theta, c.location, c.depth, c.phi_spread,
                 c.theta_spread, c.angular_radius, len(c.members)) for i, c in enumerate(cands)]
        run.emit("candidates", CANDIDATE_COLUMNS, rows, b_mag_mT=s.b_mag)
        if not cands:
            raise FitError("no candidate NV axis found in the sweep")
    return cands


def choose_candidate(cands, vs, b_final: float, index: int | None = None):
    """Requested candidate, or the one :func:`select_refinable` picks."""
    if index is not None:
        if not 0 <= index < len(cands):
            raise ConfigError(f"refine.candidate: index {index} out of range (0..{len(cands) - 1})")
        return cands[index]
    return select_refinable(cands, vs.region, b_final)


def _refine(run: Run, vs, cands) -> OrientationEstimate:
    r = run.cfg.refine
    with run.stage("refine"):
        seed = choose_candidate(cands, vs, max(r.schedule), r.candidate)
        est = refine_axis(vs, seed, r.schedule, n_grid=r.n_grid, shrink=r.shrink,
                          region_tol=run.cfg.sweep.region_tol, threads=run.cfg.threads)
        rows = [(k, st.b_mag, st.center.phi, st.center.big_theta, st.half_width, st.region.phi_spread,
                 st.region.theta_spread, st.region.location) for k, st in enumerate(est.stages)]
        run.emit("refine_trace", ("stage", "b_mag_mT", "phi_rad", "big_theta_rad", "half_width_rad",
                                  "phi_spread_rad", "theta_spread_rad", "location_GHz"), rows)
        for k, st in enumerate(est.stages):
            run.emit(f"refine_map_{k}", SWEEP_COLUMNS, st.sweep.records(), b_mag_mT=st.b_mag)
        run.emit("orientation", ("phi_rad", "big_theta_rad", "x", "y", "z", "angular_error_bound_rad"),
                 [(est.phi, est.big_theta, *est.direction, est.angular_error_bound)])
    return est


def cmd_sweep(run: Run):
    _sweep(run, run.cfg.virtual_sample())


def cmd_locate(run: Run):
    vs = run.cfg.virtual_sample()
    _locate(run, _sweep(run, vs))


def cmd_refine(run: Run):
    vs = run.cfg.virtual_sample()
    _refine(run, vs, _locate(run, _sweep(run, vs)))


def cmd_sensitivity(run: Run):
    cfg = run.cfg
    vs = cfg.virtual_sample()
    s = cfg.sensitivity
    if s.axis_phi_rad is not None and s.axis_big_theta_rad is not None:
        est = OrientationEstimate.from_direction(SphericalDirection(s.axis_phi_rad, s.axis_big_theta_rad))
    elif (s.axis_phi_rad is None) != (s.axis_big_theta_rad is None):
        raise ConfigError("sensitivity: give both axis_phi and axis_big_theta, or neither")
    else:
        est = _refine(run, vs, _locate(run, _sweep(run, vs)))
    with run.stage("sensitivity"):
        scans = measure_sensitivity(vs, est, s.fields, theta_span=s.theta_span_rad, n_theta=s.n_theta,
                                    expansion_fraction=s.expansion_fraction, recenter=s.recenter,
                                    threads=cfg.threads)
        pts = [(sc.b_mag, float(a), float(loc), int(fl))
               for sc in scans for a, loc, fl in zip(sc.angles, sc.locations, sc.flags)]
        run.emit("sensitivity_points", ("b_mag_mT", "theta_rad", "location_GHz", "flag"), pts,
                 axis_phi_rad=est.phi, axis_big_theta_rad=est.big_theta)
        table = sensitivity_table(vs.constants, [sc.b_mag for sc in scans], [sc.c2 for sc in scans])
        rows = [(r.b_mag, r.measured, sc.fit.stderr[2], r.analytic, r.naive, int(r.singular), r.ratio)
                for r, sc in zip(table, scans)]
        run.emit("sensitivity", ("b_mag_mT", "measured_c2", "c2_stderr", "analytic_c2",
                                 "naive_c2", "singular", "ratio_to_naive"), rows)
        if len(scans) < len(s.fields):
            raise FitError(f"sensitivity measured at {len(scans)} of {len(s.fields)} fields")


HANDLERS: dict[str, Callable[[Run], None]] = {
    "eig": cmd_eig,
    "expand": cmd_expand,
    "synth": cmd_synth,
    "fit": cmd_fit,
    "sweep": cmd_sweep,
    "locate": cmd_locate,
    "refine": cmd_refine,
    "sensitivity": cmd_sensitivity,
}


# --------------------------------------------------------------------------
# argument parsing


def _grid(text: str) -> tuple[int, int]:
    m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", text)
    if not m:
        raise argparse.ArgumentTypeError(f"expected NxM (phi x big_theta points), got {text!r}")
    return int(m.group(1)), int(m.group(2))


def _angle_pair(p: argparse.ArgumentParser, name: str, help: str):
    g = p.add_mutually_exclusive_group()
    g.add_argument(f"--{name}-rad", type=float, help=f"{help} in radians")
    g.add_argument(f"--{name}-deg", type=float, help=f"{help} in degrees")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML run configuration")
    common.add_argument("--out", metavar="DIR", help="write tables and MANIFEST.json into DIR")
    common.add_argument("--seed", type=int, help="noise seed (overrides sample.seed)")
    common.add_argument("--threads", type=int, help="worker processes for sweeps")
    common.add_argument("--format", choices=("tsv", "records"), help="table format")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="nvtheta", description="NV-center theta**2 sensor simulator")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--print-default-config", action="store_true", help="print the default config and exit")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")

    s = sub.add_parser("eig", parents=[common], help="eigenvalues and transitions at one field")
    s.add_argument("--b-mt", type=float, help="field magnitude in mT")
    _angle_pair(s, "theta", "misalignment angle")

    s = sub.add_parser("expand", parents=[common], help="exact vs small-angle curves and coefficients")
    s.add_argument("--b-mt", type=float, action="append", help="field magnitude in mT (repeatable)")
    _angle_pair(s, "theta-max", "half-range of the theta grid")

    s = sub.add_parser("synth", parents=[common], help="synthesize one noisy spectrum")
    s.add_argument("--b-mt", type=float, help="field magnitude in mT")
    _angle_pair(s, "phi", "field polar angle")
    _angle_pair(s, "big-theta", "field azimuth")

    s = sub.add_parser("fit", parents=[common], help="fit Lorentzian dips in a spectrum file")
    s.add_argument("--input", metavar="PATH", help="spectrum table written by 'synth'")

    for name, text in (("sweep", "angle sweep over the accessible hemisphere"),
                       ("locate", "sweep and locate candidate NV axes"),
                       ("refine", "sweep, locate and refine one axis"),
                       ("sensitivity", "theta**2 sensitivity along one axis")):
        s = sub.add_parser(name, parents=[common], help=text)
        s.add_argument("--b-mt", type=float, help="sweep field magnitude in mT")
        s.add_argument("--grid", type=_grid, metavar="NxM", help="sweep grid, phi x big_theta points")
        if name == "sensitivity":
            _angle_pair(s, "axis-phi", "known axis polar angle")
            _angle_pair(s, "axis-big-theta", "known axis azimuth")
    return p


def _angle(args, name):
    rad = getattr(args, f"{name}_rad", None)
    deg = getattr(args, f"{name}_deg", None)
    if deg is not None:
        return float(np.radians(deg))
    return rad


def overrides_from_args(args) -> dict:
    o = {
        "sample.seed": args.seed,
        "threads": args.threads,
        "output.format": args.format,
        "output.dir": args.out,
    }
    cmd = args.command
    b = getattr(args, "b_mt", None)
    if cmd == "eig":
        o["eig.b_mag"] = b
        o["eig.theta_rad"] = _angle(args, "theta")
    elif cmd == "expand":
        o["expand.b_list"] = b
        o["expand.theta_max_rad"] = _angle(args, "theta_max")
    elif cmd == "synth":
        o["synth.b_mag"] = b
        o["synth.phi_rad"] = _angle(args, "phi")
        o["synth.big_theta_rad"] = _angle(args, "big_theta")
    elif cmd == "fit":
        o["fit.input"] = args.input
    else:
        o["sweep.b_mag"] = b
        if args.grid is not None:
            o["sweep.n_phi"], o["sweep.n_theta"] = args.grid
        if cmd == "sensitivity":
            o["sensitivity.axis_phi_rad"] = _angle(args, "axis_phi")
            o["sensitivity.axis_big_theta_rad"] = _angle(args, "axis_big_theta")
    return {k: v for k, v in o.items() if v is not None}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.print_default_config:
        sys.stdout.write(default_config_text())
        return EXIT_OK
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, overrides_from_args(args))
    except ConfigError as e:
        print(f"nvtheta: config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        run = Run(args.command, cfg)
    except OSError as e:
        print(f"nvtheta: cannot create output directory: {e}", file=sys.stderr)
        return EXIT_USAGE
    code, err = EXIT_OK, None
    try:
        HANDLERS[args.command](run)
    except ConfigError as e:
        code, err = EXIT_USAGE, f"config error: {e}"
    except PhysicsDomainError as e:
        code, err = EXIT_PHYSICS, f"physics error: {e}"
    except FitError as e:
        code, err = EXIT_FIT, f"fit error: {e}"
    except NVError as e:  # pragma: no cover - every NVError subclass is handled above
        code, err = EXIT_PHYSICS, str(e)
    if err:
        print(f"nvtheta: {args.command} [{run.stage_name}]: {err}", file=sys.stderr)
    run.manifest("ok" if code == EXIT_OK else "failed", err)
    return code


def entry() -> int:
    """Console-script wrapper that exits quietly when stdout is closed early (``| head``)."""
    try:
        code = main()
        sys.stdout.flush()
    except BrokenPipeError:
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        code = EXIT_OK
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(entry())
