"""Command-line front end: run experiments from config files.

Verbs
-----
run <config>        integrate, reduce, and write CSVs + manifest.json
validate <config>   parse and report every config problem
list-experiments    show the bundled experiment configs

`<config>` is a file path or the name of a bundled config (fig2_fast, ...).
The output root defaults to $ROTORENGINE_OUT or the current directory; one
experiment writes one directory.  Exit status: 0 success, 1 bad config or
usage, 2 runtime failure (divergence, truncation, quota).
"""

import argparse
import json
import math
import os
import sys
import time
from importlib import resources

import numpy as np

from . import __version__, kernels
from .classical import TrajectoryDivergence, run_ensemble
from .config import ConfigError, ExperimentSpec, parse_config, render
from .io import (write_correlation_csv, write_manifest, write_pv_csv,
                 write_series_csv)
from .observables import (CorrelationGrid, correlation_grid, cycle_work,
                          efficiency, heat_power, pv_accumulate, work_power)
from .params import (carnot_floor, fr_efficiency, fr_momentum_rate,
                     fr_variance_rate, work_per_cycle)
from . import quantum

OUT_ENV = "ROTORENGINE_OUT"


class RunFailure(RuntimeError):
    """A started run could not be completed; partial outputs may exist."""


def _bundled_dir():
    return resources.files("rotorengine").joinpath("experiments")


def list_bundled():
    return sorted(p.name[:-4] for p in _bundled_dir().iterdir()
                  if p.name.endswith(".cfg"))


def load_config(ref):
    """Read config text from a path or a bundled experiment name."""
    if os.path.exists(ref):
        with open(ref) as fh:
            return fh.read()
    candidate = _bundled_dir().joinpath(ref + ".cfg")
    if candidate.is_file():
        return candidate.read_text()
    raise FileNotFoundError(
        f"{ref!r} is neither a file nor a bundled experiment "
        f"(bundled: {', '.join(list_bundled())})")


def _series_meta(spec: ExperimentSpec, seed):
    return {
        "experiment": spec.name,
        "kind": spec.kind,
        "code_version": __version__,
        "base_seed": seed if seed is not None else "none",
    }


def _run_classical(spec, seed, out, workers, quiet, outputs):
    backaction = spec.kind == "classical-backaction"
    summary = run_ensemble(
        spec.params, spec.init, spec.n_traj, seed, spec.t_max, dt=spec.dt,
        output_stride=spec.output_stride, scheme=spec.scheme,
        backaction=backaction, store_stride=spec.store_stride,
        pv_times=spec.pv_times, workers=workers)
    meta = _series_meta(spec, seed)
    extra = {"n_traj": summary.n_traj, "n_excluded": summary.n_excluded}

    if "series" in spec.observables:
        cols = {"t": summary.times}
        for name in summary.SERIES_COLUMNS:
            cols[name] = getattr(summary, name)
        cols["work_power"] = work_power(summary, spec.params)
        cols["heat_power"] = heat_power(summary, spec.params)
        cols["efficiency"] = efficiency(summary, spec.params)
        write_series_csv(out("series.csv"), {**meta, **extra}, cols)
        outputs.append("series.csv")

    if "correlation" in spec.observables:
        write_correlation_csv(out("correlation.csv"), meta,
                              correlation_grid(summary))
        outputs.append("correlation.csv")

    if "pv" in spec.observables:
        for t, (phi, n) in sorted(summary.pv_snapshots.items()):
            tag = f"{t:g}".replace(".", "p")
            pv = pv_accumulate(phi, n, params=spec.params)
            write_pv_csv(out(f"pv_t{tag}.csv"), {**meta, "snapshot_time": t},
                         pv, ideal_path=out(f"pv_ideal_t{tag}.csv"))
            outputs.extend([f"pv_t{tag}.csv", f"pv_ideal_t{tag}.csv"])
            if not quiet:
                try:
                    frac = cycle_work(pv) / work_per_cycle(spec.params)
                    print(f"  pv t={t:g}: area/W_cyc = {frac:.3f}")
                except ValueError as exc:
                    print(f"  pv t={t:g}: {exc}")
    return extra


def _run_quantum_master(spec, out, quiet, outputs):
    space = quantum.build_space(spec.params, spec.init.k, spec.t_max,
                                n_max=spec.n_max, dim_cap=spec.dim_cap)
    ops = quantum.build_operators(spec.params, space)
    psi0 = quantum.von_mises_state(space, spec.init.k, spec.init.mu)
    grid = np.linspace(0.0, spec.t_max, spec.output_points)
    angle_grid = (np.linspace(0.0, 2.0 * math.pi, 128, endpoint=False)
                  if "angles" in spec.observables else None)
    # The final state is always checkpointed for the truncation report.
    cps = tuple(spec.checkpoint_times) + (spec.t_max,)
    series = quantum.evolve_master(
        psi0, grid, spec.params, space, ops, tol=spec.tol,
        compute_entropy="entropy" in spec.observables,
        angle_grid=angle_grid, checkpoint_times=cps)
    meta = _series_meta(spec, None)
    meta.update(m_min=space.m_min, m_max=space.m_max, n_max=space.n_max,
                tol=spec.tol)

    if "series" in spec.observables:
        cols = {
            "t": series.times, "trace": series.trace,
            "mean_lz": series.mean_lz, "var_lz": series.var_lz,
            "mean_n": series.mean_n, "p_hot": series.p_hot,
            "p_cold": series.p_cold, "p_work": series.p_work,
            "p_backaction": series.p_backaction,
            "first_law_residual": series.first_law_residual,
            "purity": series.purity,
            "min_eigenvalue": series.min_eigenvalue,
            "boundary_mom_pop": series.boundary_mom_pop,
            "top_fock_pop": series.top_fock_pop,
            "R1": np.abs(series.exp_phase1) ** 2,
            "R2": np.abs(series.exp_phase2) ** 2,
        }
        if series.entropy is not None:
            cols["entropy"] = series.entropy
            cols["entropy_rate"] = series.entropy_rate
            cols["entropy_production"] = series.entropy_production
            cols["entropy_rotor"] = series.entropy_rotor
            cols["entropy_mode"] = series.entropy_mode
        write_series_csv(out("series.csv"), meta, cols)
        outputs.append("series.csv")

    if angle_grid is not None:
        rows = {"t": np.repeat(series.times, len(angle_grid)),
                "phi": np.tile(angle_grid, len(series.times)),
                "p": series.angle_dist.ravel()}
        write_series_csv(out("angles.csv"), meta, rows)
        outputs.append("angles.csv")

    if "correlation" in spec.observables:
        times, values = quantum.two_time_grid(series, ops, tol=spec.tol)
        write_correlation_csv(out("correlation.csv"), meta,
                              CorrelationGrid(times=times, values=values))
        outputs.append("correlation.csv")

    rho_final = series.checkpoints[max(series.checkpoints)]
    report = quantum.truncation_check(rho_final, space)
    info = {
        "space": {"m_min": space.m_min, "m_max": space.m_max,
                  "n_max": space.n_max, "dim": space.dim},
        "truncation": {
            "momentum_rows": {str(m): p
                              for m, p in report.momentum_rows.items()},
            "top_fock": report.top_fock,
            "passed": report.passed,
        },
    }
    if not report.passed:
        raise RunFailure("truncation check failed:\n  "
                         + "\n  ".join(report.offenders()), info)
    return info


def _run_quantum_mcwf(spec, seed, out, outputs):
    space = quantum.build_space(spec.params, spec.init.k, spec.t_max,
                                n_max=spec.n_max, dim_cap=spec.dim_cap)
    ops = quantum.build_operators(spec.params, space)
    psi0 = quantum.von_mises_state(space, spec.init.k, spec.init.mu)
    grid = np.linspace(0.0, spec.t_max, spec.output_points)
    res = quantum.run_mcwf_ensemble(psi0, grid, ops, spec.n_traj, seed)
    meta = _series_meta(spec, seed)
    meta.update(m_min=space.m_min, m_max=space.m_max, n_max=space.n_max,
                total_jumps=res["total_jumps"])
    cols = {"t": res["times"]}
    for key in ("lz", "n", "p_work"):
        cols[f"mean_{key}"] = res[f"mean_{key}"]
        cols[f"sem_{key}"] = res[f"sem_{key}"]
    write_series_csv(out("series.csv"), meta, cols)
    outputs.append("series.csv")
    return {"total_jumps": res["total_jumps"],
            "space": {"m_min": space.m_min, "m_max": space.m_max,
                      "n_max": space.n_max, "dim": space.dim}}


def _run_analytic(spec, out, outputs):
    p = spec.params
    x = np.linspace(0.0, spec.analytic_x_max, spec.analytic_points)
    eta_scaled = np.array([fr_efficiency(p, xi * p.inertia * p.kappa,
                                         scaled=True) for xi in x])
    meta = _series_meta(spec, None)
    meta.update(momentum_rate=fr_momentum_rate(p),
                variance_rate=fr_variance_rate(p),
                work_per_cycle=work_per_cycle(p),
                carnot_floor=carnot_floor(p))
    cols = {"lz_over_i_kappa": x, "eta_scaled": eta_scaled,
            "eta": eta_scaled * 2.0 / p.omega0,
            "carnot": np.full_like(x, carnot_floor(p))}
    write_series_csv(out("curves.csv"), meta, cols)
    outputs.append("curves.csv")
    return {}


def run_experiment(spec: ExperimentSpec, out_root=".", seed_override=None,
                   workers=1, quiet=False):
    """Execute a validated spec; returns the manifest dict.

    Writes all requested CSVs plus manifest.json under
    out_root/<spec directory>.  Raises RunFailure after flagging partial
    outputs in the manifest.
    """
    out_dir = os.path.join(out_root, spec.out_dir)
    os.makedirs(out_dir, exist_ok=True)
    out = lambda name: os.path.join(out_dir, name)
    seed = seed_override if seed_override is not None else spec.base_seed

    outputs = []
    manifest = {
        "experiment": spec.name,
        "kind": spec.kind,
        "code_version": __version__,
        "kernel_backend": kernels.BACKEND,
        "base_seed": seed,
        "config": render(spec),
        "outputs": outputs,
        "status": "running",
    }
    t0 = time.time()
    try:
        if spec.kind in ("classical", "classical-backaction"):
            manifest.update(_run_classical(spec, seed, out, workers, quiet,
                                           outputs))
        elif spec.kind == "quantum-master":
            manifest.update(_run_quantum_master(spec, out, quiet, outputs))
        elif spec.kind == "quantum-mcwf":
            manifest.update(_run_quantum_mcwf(spec, seed, out, outputs))
        elif spec.kind == "analytic":
            manifest.update(_run_analytic(spec, out, outputs))
        manifest["status"] = "complete"
    except (RunFailure, TrajectoryDivergence, ValueError,
            RuntimeError) as exc:
        manifest["status"] = "failed"
        manifest["error"] = str(exc)
        if isinstance(exc, RunFailure) and len(exc.args) > 1:
            manifest.update(exc.args[1])
        manifest["wall_time_s"] = time.time() - t0
        write_manifest(out("manifest.json"), manifest)
        raise RunFailure(str(exc)) from exc
    manifest["wall_time_s"] = time.time() - t0
    write_manifest(out("manifest.json"), manifest)
    if not quiet:
        print(f"{spec.name}: {manifest['status']} in "
              f"{manifest['wall_time_s']:.1f}s -> {out_dir}")
    return manifest


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="rotorengine",
        description="Rotor heat engine simulation suite.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config", help="config path or bundled name")
    p_run.add_argument("--out", default=None,
                       help=f"output root (default ${OUT_ENV} or '.')")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the config's base_seed")
    p_run.add_argument("--workers", type=int, default=1)
    p_run.add_argument("--quiet", action="store_true")

    p_val = sub.add_parser("validate", help="check a config and exit")
    p_val.add_argument("config", help="config path or bundled name")

    sub.add_parser("list-experiments", help="show bundled configs")

    args = parser.parse_args(argv)

    if args.verb == "list-experiments":
        for name in list_bundled():
            print(name)
        return 0

    try:
        text = load_config(args.config)
    except FileNotFoundError as exc:
        print(exc, file=sys.stderr)
        return 1
    try:
        spec = parse_config(text)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 1
    if args.verb == "validate":
        print(f"{args.config}: ok ({spec.kind}, {spec.name})")
        return 0

    out_root = args.out if args.out is not None \
        else os.environ.get(OUT_ENV, ".")
    try:
        run_experiment(spec, out_root, seed_override=args.seed,
                       workers=args.workers, quiet=args.quiet)
    except RunFailure as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
