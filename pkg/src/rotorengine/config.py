"""Experiment configuration: a small INI dialect over configparser.

An experiment file has sections [experiment], [engine], [init],
[integrator], [schedule], [ensemble], [output] (plus [analytic] for the
closed-form kind).  Parsing validates everything and reports ALL errors
at once; unknown sections and keys are rejected so typos cannot silently
fall back to defaults.  render() emits canonical text such that
parse_config(render(spec)) == spec.
"""

import configparser
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

from .classical import InitSpec
from .params import EngineParams

__all__ = ["ExperimentSpec", "ConfigError", "parse_config", "render",
           "KINDS", "OBSERVABLES"]

KINDS = ("classical", "classical-backaction", "quantum-master",
         "quantum-mcwf", "analytic")
CLASSICAL_KINDS = ("classical", "classical-backaction")
QUANTUM_KINDS = ("quantum-master", "quantum-mcwf")
OBSERVABLES = ("series", "pv", "correlation", "angles", "entropy")

_SECTION_KEYS = {
    "experiment": {"kind", "name"},
    "engine": {"inertia", "kappa", "n_hot", "n_cold", "omega0"},
    "init": {"kind", "k", "mu", "n0"},
    "integrator": {"scheme", "dt", "tol", "n_max", "dim_cap"},
    "schedule": {"t_max", "output_stride", "output_points",
                 "checkpoint_times", "pv_times", "store_stride"},
    "ensemble": {"n_traj", "base_seed"},
    "output": {"directory", "observables"},
    "analytic": {"x_max", "points"},
}

# Sections that make sense for each experiment kind.
_KIND_SECTIONS = {
    "classical": {"experiment", "engine", "init", "integrator", "schedule",
                  "ensemble", "output"},
    "quantum-master": {"experiment", "engine", "init", "integrator",
                       "schedule", "output"},
    "quantum-mcwf": {"experiment", "engine", "init", "integrator",
                     "schedule", "ensemble", "output"},
    "analytic": {"experiment", "engine", "output", "analytic"},
}
_KIND_SECTIONS["classical-backaction"] = _KIND_SECTIONS["classical"]


class ConfigError(ValueError):
    """Carries every validation problem found in a config, not just the first."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid experiment config:\n  "
                         + "\n  ".join(self.errors))


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    name: str
    params: EngineParams
    init: Optional[InitSpec] = None
    scheme: str = "milstein"
    dt: Optional[float] = None
    tol: Optional[float] = None
    n_max: int = 8
    dim_cap: int = 400_000
    t_max: Optional[float] = None
    output_stride: Optional[int] = None
    output_points: Optional[int] = None
    checkpoint_times: Tuple[float, ...] = ()
    pv_times: Tuple[float, ...] = ()
    store_stride: Optional[int] = None
    n_traj: Optional[int] = None
    base_seed: Optional[int] = None
    directory: Optional[str] = None
    observables: Tuple[str, ...] = ("series",)
    analytic_x_max: float = 0.2
    analytic_points: int = 201

    @property
    def out_dir(self):
        return self.directory if self.directory is not None else self.name


def _get(cp, section, key, conv, errors, required=False, default=None,
         check=None, what=""):
    if not cp.has_option(section, key):
        if required:
            errors.append(f"[{section}] missing required key '{key}'")
        return default
    raw = cp.get(section, key)
    try:
        value = conv(raw)
    except (ValueError, TypeError):
        errors.append(f"[{section}] {key} = {raw!r}: not a valid "
                      f"{conv.__name__}")
        return default
    if check is not None and not check(value):
        errors.append(f"[{section}] {key} = {raw!r}: {what}")
        return default
    return value


def _float_tuple(raw):
    raw = raw.strip()
    if not raw:
        return ()
    return tuple(float(tok) for tok in raw.split(","))


def _str_tuple(raw):
    return tuple(tok.strip() for tok in raw.split(",") if tok.strip())


def parse_config(text):
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from None

    errors = []
    for section in cp.sections():
        if section not in _SECTION_KEYS:
            errors.append(f"unknown section [{section}]")
            continue
        for key in cp.options(section):
            if key not in _SECTION_KEYS[section]:
                errors.append(f"unknown key '{key}' in [{section}]")

    if not cp.has_section("experiment"):
        errors.append("missing section [experiment]")
        raise ConfigError(errors)
    kind = _get(cp, "experiment", "kind", str, errors, required=True,
                check=lambda k: k in KINDS,
                what=f"must be one of {', '.join(KINDS)}")
    name = _get(cp, "experiment", "name", str, errors, required=True,
                check=lambda s: bool(s), what="must be nonempty")
    if kind is None:
        raise ConfigError(errors)

    allowed = _KIND_SECTIONS[kind]
    for section in cp.sections():
        if section in _SECTION_KEYS and section not in allowed:
            errors.append(f"section [{section}] not allowed for kind {kind}")

    # [engine]
    params = None
    if not cp.has_section("engine"):
        errors.append("missing section [engine]")
    else:
        kw = {}
        for key in ("inertia", "kappa", "n_hot", "n_cold"):
            v = _get(cp, "engine", key, float, errors, required=True)
            if v is not None:
                kw[key] = v
        omega0 = _get(cp, "engine", "omega0", float, errors, default=100.0)
        if len(kw) == 4:
            try:
                params = EngineParams(omega0=omega0, **kw)
            except ValueError as exc:
                errors.append(f"[engine]: {exc}")

    # [init]
    init = None
    if kind != "analytic":
        if not cp.has_section("init"):
            errors.append(f"missing section [init] (required for kind {kind})")
        else:
            ikind = _get(cp, "init", "kind", str, errors,
                         default="gaussian",
                         check=lambda s: s in ("gaussian", "deterministic"),
                         what="must be gaussian or deterministic")
            k = _get(cp, "init", "k", float, errors, default=10.0)
            mu = _get(cp, "init", "mu", float, errors, default=math.pi / 2)
            n0 = _get(cp, "init", "n0", float, errors, default=None)
            if kind in QUANTUM_KINDS and ikind == "deterministic":
                errors.append("[init] kind = deterministic is classical-only "
                              "(quantum runs start from a k-localized packet)")
            elif kind in QUANTUM_KINDS and n0 is not None:
                errors.append("[init] n0 is classical-only (the quantum mode "
                              "always starts in vacuum)")
            elif ikind is not None:
                try:
                    init = InitSpec(kind=ikind, k=k, mu=mu, n0=n0)
                except ValueError as exc:
                    errors.append(f"[init]: {exc}")

    # [integrator]
    scheme = "milstein"
    dt = tol = None
    n_max, dim_cap = 8, 400_000
    if cp.has_section("integrator"):
        scheme = _get(cp, "integrator", "scheme", str, errors,
                      default="milstein",
                      check=lambda s: s in ("euler", "milstein"),
                      what="must be euler or milstein")
        dt = _get(cp, "integrator", "dt", float, errors,
                  check=lambda v: v > 0, what="must be > 0")
        tol = _get(cp, "integrator", "tol", float, errors,
                   check=lambda v: v > 0, what="must be > 0")
        n_max = _get(cp, "integrator", "n_max", int, errors, default=8,
                     check=lambda v: v >= 1, what="must be >= 1")
        dim_cap = _get(cp, "integrator", "dim_cap", int, errors,
                       default=400_000, check=lambda v: v > 0,
                       what="must be > 0")
    if dt is not None and tol is not None:
        errors.append("[integrator] dt and tol are contradictory: fixed-step "
                      "kinds take dt, the adaptive master equation takes tol")
    if kind == "quantum-master" and dt is not None:
        errors.append("[integrator] dt is meaningless for quantum-master "
                      "(adaptive); set tol instead")
    if kind in CLASSICAL_KINDS + ("quantum-mcwf",) and tol is not None:
        errors.append(f"[integrator] tol is meaningless for {kind}; set dt")
    if tol is None and kind == "quantum-master":
        tol = 1e-8

    # [schedule]
    t_max = output_stride = output_points = store_stride = None
    checkpoint_times = pv_times = ()
    if kind != "analytic":
        if not cp.has_section("schedule"):
            errors.append("missing section [schedule]")
        else:
            t_max = _get(cp, "schedule", "t_max", float, errors,
                         required=True, check=lambda v: v > 0,
                         what="must be > 0")
            output_stride = _get(cp, "schedule", "output_stride", int, errors,
                                 check=lambda v: v >= 1, what="must be >= 1")
            output_points = _get(cp, "schedule", "output_points", int, errors,
                                 check=lambda v: v >= 2, what="must be >= 2")
            checkpoint_times = _get(cp, "schedule", "checkpoint_times",
                                    _float_tuple, errors, default=())
            pv_times = _get(cp, "schedule", "pv_times", _float_tuple, errors,
                            default=())
            store_stride = _get(cp, "schedule", "store_stride", int, errors,
                                check=lambda v: v >= 1, what="must be >= 1")
        if kind in CLASSICAL_KINDS and output_stride is None:
            errors.append("[schedule] output_stride required for classical "
                          "kinds")
        if kind in QUANTUM_KINDS and output_points is None:
            output_points = 101
        if kind in QUANTUM_KINDS and store_stride is not None:
            errors.append("[schedule] store_stride is classical-only; "
                          "quantum correlations use checkpoint_times")
        if t_max is not None:
            for t in checkpoint_times + pv_times:
                if not 0.0 <= t <= t_max:
                    errors.append(f"[schedule] time {t} outside [0, t_max]")

    # [ensemble]
    n_traj = base_seed = None
    needs_ensemble = kind in CLASSICAL_KINDS + ("quantum-mcwf",)
    if needs_ensemble:
        if not cp.has_section("ensemble"):
            errors.append("missing section [ensemble]")
        else:
            n_traj = _get(cp, "ensemble", "n_traj", int, errors,
                          required=True, check=lambda v: v >= 1,
                          what="must be >= 1")
            base_seed = _get(cp, "ensemble", "base_seed", int, errors,
                             required=True,
                             check=lambda v: 0 <= v < 2 ** 64,
                             what="must fit in 64 bits")

    # [output]
    directory = None
    observables = ("series",)
    if cp.has_section("output"):
        directory = _get(cp, "output", "directory", str, errors)
        observables = _get(cp, "output", "observables", _str_tuple, errors,
                           default=("series",))
        for obs in observables or ():
            if obs not in OBSERVABLES:
                errors.append(f"[output] unknown observable '{obs}' "
                              f"(choose from {', '.join(OBSERVABLES)})")
        if "entropy" in (observables or ()) and kind != "quantum-master":
            errors.append("[output] entropy series requires kind "
                          "quantum-master")
        if "correlation" in (observables or ()):
            if kind in CLASSICAL_KINDS and store_stride is None:
                errors.append("[output] correlation needs [schedule] "
                              "store_stride for classical kinds")
            if kind == "quantum-master" and not checkpoint_times:
                errors.append("[output] correlation needs [schedule] "
                              "checkpoint_times for quantum-master")

    analytic_x_max, analytic_points = 0.2, 201
    if cp.has_section("analytic"):
        analytic_x_max = _get(cp, "analytic", "x_max", float, errors,
                              default=0.2, check=lambda v: v > 0,
                              what="must be > 0")
        analytic_points = _get(cp, "analytic", "points", int, errors,
                               default=201, check=lambda v: v >= 2,
                               what="must be >= 2")

    if params is not None and params.n_cold <= 0 \
            and "entropy" in (observables or ()):
        errors.append("entropy bookkeeping needs n_cold > 0 (finite cold "
                      "temperature)")

    if errors:
        raise ConfigError(errors)
    return ExperimentSpec(
        kind=kind, name=name, params=params, init=init, scheme=scheme,
        dt=dt, tol=tol, n_max=n_max, dim_cap=dim_cap, t_max=t_max,
        output_stride=output_stride, output_points=output_points,
        checkpoint_times=checkpoint_times, pv_times=pv_times,
        store_stride=store_stride, n_traj=n_traj, base_seed=base_seed,
        directory=directory, observables=observables,
        analytic_x_max=analytic_x_max, analytic_points=analytic_points)


def render(spec: ExperimentSpec):
    """Canonical text for a spec; parse_config(render(spec)) == spec."""
    cp = configparser.ConfigParser(interpolation=None)
    cp["experiment"] = {"kind": spec.kind, "name": spec.name}
    p = spec.params
    cp["engine"] = {"inertia": repr(p.inertia), "kappa": repr(p.kappa),
                    "n_hot": repr(p.n_hot), "n_cold": repr(p.n_cold),
                    "omega0": repr(p.omega0)}
    if spec.init is not None:
        cp["init"] = {"kind": spec.init.kind, "k": repr(spec.init.k),
                      "mu": repr(spec.init.mu)}
        if spec.init.n0 is not None:
            cp["init"]["n0"] = repr(spec.init.n0)
    integ = {"scheme": spec.scheme}
    if spec.dt is not None:
        integ["dt"] = repr(spec.dt)
    if spec.tol is not None:
        integ["tol"] = repr(spec.tol)
    if spec.kind in QUANTUM_KINDS:
        integ["n_max"] = str(spec.n_max)
        integ["dim_cap"] = str(spec.dim_cap)
    if spec.kind != "analytic":
        cp["integrator"] = integ
        sched = {"t_max": repr(spec.t_max)}
        if spec.output_stride is not None:
            sched["output_stride"] = str(spec.output_stride)
        if spec.output_points is not None:
            sched["output_points"] = str(spec.output_points)
        if spec.checkpoint_times:
            sched["checkpoint_times"] = ", ".join(
                repr(t) for t in spec.checkpoint_times)
        if spec.pv_times:
            sched["pv_times"] = ", ".join(repr(t) for t in spec.pv_times)
        if spec.store_stride is not None:
            sched["store_stride"] = str(spec.store_stride)
        cp["schedule"] = sched
    if spec.n_traj is not None:
        cp["ensemble"] = {"n_traj": str(spec.n_traj),
                          "base_seed": str(spec.base_seed)}
    out = {"observables": ", ".join(spec.observables)}
    if spec.directory is not None:
        out["directory"] = spec.directory
    cp["output"] = out
    if spec.kind == "analytic":
        cp["analytic"] = {"x_max": repr(spec.analytic_x_max),
                          "points": str(spec.analytic_points)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
