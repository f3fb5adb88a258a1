"""Experiment drivers: efficiency sweeps, error measures and CSV export."""

from __future__ import annotations

import configparser
import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .integrators import (
    DEFAULT_CONFIG,
    IterationConfig,
    MethodId,
    Trajectory,
    integrate,
    reference_solution,
    step_count,
)
from .systems import CONSERVATIVE, PROBLEMS, SecondOrderSystem, build_problem, second_to_first_order

__all__ = [
    "EfficiencyPoint",
    "ExperimentSpec",
    "ExperimentResult",
    "PRESETS",
    "preset",
    "global_error",
    "energy_error",
    "run_experiment",
    "lyapunov_trace",
    "efficiency_curve",
    "dominates",
    "write_efficiency_csv",
    "write_trajectory_csv",
    "read_config",
    "WORKERS_ENV",
]

log = logging.getLogger(__name__)

WORKERS_ENV = "EAVF_WORKERS"
CSV_HEADER = ("problem", "method", "quadrature", "h", "total_fe", "ge", "eh", "converged")


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class EfficiencyPoint:
    problem: str
    method: str
    quadrature: str
    h: float
    total_fe: int
    ge: float
    eh: float
    converged: bool


@dataclass
class ExperimentSpec:
    """One sweep: a problem, a list of methods and a list of stepsizes."""

    name: str
    problem: str
    params: dict
    methods: list
    stepsizes: list
    t_end: float
    config: IterationConfig = DEFAULT_CONFIG
    output: str | None = None
    reference: str = "dop853"
    reference_rtol: float = 1e-13
    export_trajectories: bool = False

    def __post_init__(self):
        self.methods = [m if isinstance(m, MethodId) else MethodId.parse(m) for m in self.methods]
        if self.problem not in PROBLEMS:
            raise KeyError(f"unknown problem {self.problem!r}")
        if not self.methods or not self.stepsizes:
            raise ValueError("an experiment needs at least one method and one stepsize")
        for h in self.stepsizes:
            step_count(h, self.t_end)


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    points: list
    trajectories: dict = field(default_factory=dict)
    reference: Trajectory | None = None


# --------------------------------------------------------------------------- presets

_WIND_HS = [1 / 20 * 2.0**-i for i in range(-1, 5)]
_PRESETS = {
    "exp1": dict(problem="triatomic", params={"omega": 50.0},
                 methods=["eavf:3", "avf:3", "mid", "crk:3"],
                 stepsizes=[2.0**-i for i in range(6, 11)], t_end=50.0),
    "exp1-omega100": dict(problem="triatomic", params={"omega": 100.0},
                          methods=["eavf:3", "avf:3", "mid", "crk:3"],
                          stepsizes=[1 / 100 * 2.0**-i for i in range(0, 5)], t_end=50.0),
    "exp2-conservative": dict(problem="wind", params={"r": 20.0, "theta": math.pi / 2},
                              methods=["eavf:2", "avf:2", "mid", "crk:3"],
                              stepsizes=_WIND_HS, t_end=200.0),
    "exp2-dissipative": dict(problem="wind", params={"r": 20.0, "theta": math.pi / 2 - 1e-4},
                             methods=["eavf:2", "avf:2", "mid", "crk:3"],
                             stepsizes=_WIND_HS, t_end=100.0),
    "exp3-beta0": dict(problem="fpu", params={"n_cells": 128, "beta": 0.0, "gamma": 0.005},
                       methods=["eavf:2", "avf:2", "mid"],
                       stepsizes=[2.0**-i for i in range(1, 6)], t_end=100.0),
    "exp3-beta2": dict(problem="fpu", params={"n_cells": 128, "beta": 2.0, "gamma": 0.005},
                       methods=["eavf:2", "avf:2", "mid"],
                       stepsizes=[2.0**-i for i in range(1, 6)], t_end=100.0),
}
PRESETS = tuple(sorted(_PRESETS))


def preset(name: str, **overrides) -> ExperimentSpec:
    try:
        base = dict(_PRESETS[name])
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; known: {', '.join(PRESETS)}") from None
    base["params"] = dict(base["params"])
    base.update(overrides)
    return ExperimentSpec(name=name, **base)


# --------------------------------------------------------------------------- metrics


def _check_grid(traj: Trajectory, ref: Trajectory):
    if len(traj.times) != len(ref.times) or not np.allclose(traj.times, ref.times, rtol=0, atol=1e-9):
        raise GridMismatchError("trajectory and reference are sampled on different time grids")


def global_error(traj: Trajectory, ref: Trajectory) -> float:
    """``max_n ||y^n - y(t_n)||_inf``."""
    _check_grid(traj, ref)
    return float(np.max(np.abs(np.asarray(traj.states) - np.asarray(ref.states))))


def energy_error(traj: Trajectory, ref: Trajectory) -> float:
    """``max_n |H^n - H(y(t_n))|``; ``ref.energies`` holds the exact energy samples."""
    _check_grid(traj, ref)
    return float(np.max(np.abs(np.asarray(traj.energies) - np.asarray(ref.energies))))


def subsample(ref: Trajectory, times) -> Trajectory:
    """Restrict ``ref`` to ``times``, which must be a subset of its grid."""
    times = np.asarray(times, dtype=float)
    idx = np.searchsorted(ref.times, times - 1e-9)
    idx = np.clip(idx, 0, len(ref.times) - 1)
    if not np.allclose(ref.times[idx], times, rtol=0, atol=1e-9):
        raise GridMismatchError("requested times are not on the reference grid")
    return Trajectory(ref.times[idx], ref.states[idx], ref.energies[idx], 0, [], ref.converged,
                      None, ref.method, ref.info)


def lyapunov_trace(traj: Trajectory) -> list[tuple[float, float]]:
    return [(float(t), float(e)) for t, e in zip(traj.times, traj.energies)]


def efficiency_curve(points, method: str, measure: str = "ge"):
    """Converged ``(total_fe, error)`` pairs of one method, sorted by FE."""
    pts = [p for p in points if p.method == method and p.converged]
    return sorted((p.total_fe, getattr(p, measure)) for p in pts)


def dominates(points, better: str, worse: str, measure: str = "ge") -> bool:
    """True if no point of ``worse`` has both fewer FE and a smaller error than any point of ``better``."""
    worse_curve = efficiency_curve(points, worse, measure)
    for fe, err in efficiency_curve(points, better, measure):
        if any(wfe < fe and werr < err for wfe, werr in worse_curve):
            return False
    return True


# --------------------------------------------------------------------------- running


def _run_cell(problem, params, method, h, t_end, cfg):
    sys, y0 = build_problem(problem, **params)
    return integrate(sys, method, y0, h, t_end, cfg)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _reference(spec: ExperimentSpec, sys, y0) -> Trajectory:
    h_min = min(spec.stepsizes)
    times = h_min * np.arange(step_count(h_min, spec.t_end) + 1)
    if spec.reference == "rk4":
        fine = h_min / 100
        ref = reference_solution(sys, y0, times, fine_h=fine)
        while ref.converged and ref.info.get("self_consistency", 0.0) >= 1e-10 and fine > h_min / 6400:
            fine /= 2
            ref = reference_solution(sys, y0, times, fine_h=fine)
    else:
        ref = reference_solution(sys, y0, times, method="dop853", rtol=spec.reference_rtol)
    first = second_to_first_order(sys) if isinstance(sys, SecondOrderSystem) else sys
    if first.classification == CONSERVATIVE:
        ref.energies = np.full(len(times), sys.energy(y0))
    return ref


def run_experiment(spec: ExperimentSpec, workers: int | None = None, out_dir: str | Path | None = None) -> ExperimentResult:
    """Run every ``(method, h)`` cell, measure GE/EH against a shared reference.

    Cells whose iteration fails to converge give ``converged=False`` with NaN
    errors. Output CSVs go to ``out_dir`` (or ``spec.output`` if set).
    """
    sys, y0 = build_problem(spec.problem, **spec.params)
    ref = _reference(spec, sys, y0)
    if not ref.converged:
        raise RuntimeError(f"reference solution for {spec.name} blew up")
    log.info("reference for %s: %s", spec.name, ref.info)

    cells = [(m, h) for m in spec.methods for h in spec.stepsizes]
    workers = workers or _workers()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_cell, spec.problem, spec.params, m, h, spec.t_end, spec.config)
                       for m, h in cells]
            trajs = [f.result() for f in futures]
    else:
        trajs = [integrate(sys, m, y0, h, spec.t_end, spec.config) for m, h in cells]

    points = []
    trajectories = {}
    for (m, h), tr in zip(cells, trajs):
        trajectories[(m.name, h)] = tr
        if tr.converged:
            sub = subsample(ref, tr.times)
            ge, eh = global_error(tr, sub), energy_error(tr, sub)
        else:
            ge = eh = math.nan
            log.warning("%s %s h=%g: iteration failed at step %s", spec.name, m.name, h, tr.failed_step)
        points.append(EfficiencyPoint(spec.problem, m.name, m.quadrature, float(h), tr.total_fe, ge, eh, tr.converged))
    points.sort(key=lambda p: (p.method, p.h))
    result = ExperimentResult(spec, points, trajectories, ref)

    target = None
    if out_dir is not None:
        target = Path(out_dir) / f"{spec.name}.csv"
    elif spec.output:
        target = Path(spec.output)
    if target is not None:
        write_efficiency_csv(points, target)
        if spec.export_trajectories:
            for (name, h), tr in sorted(trajectories.items()):
                write_trajectory_csv(tr, target.with_name(f"{target.stem}_{name}_h{h:.6g}.csv"))
    return result


# --------------------------------------------------------------------------- I/O


def _num(x) -> str:
    return "nan" if isinstance(x, float) and math.isnan(x) else f"{x:.16e}"


def write_efficiency_csv(points, path) -> Path:
    """One row per point: ``problem,method,quadrature,h,total_fe,ge,eh,converged``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for p in points:
            w.writerow([p.problem, p.method, p.quadrature, _num(p.h), p.total_fe,
                        _num(p.ge), _num(p.eh), "true" if p.converged else "false"])
    return path


def read_efficiency_csv(path) -> list[EfficiencyPoint]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [EfficiencyPoint(r["problem"], r["method"], r["quadrature"], float(r["h"]), int(r["total_fe"]),
                            float(r["ge"]), float(r["eh"]), r["converged"] == "true") for r in rows]


def write_trajectory_csv(traj: Trajectory, path) -> Path:
    """Columns ``t,y_1..y_d,H``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d = traj.states.shape[1]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *[f"y_{i}" for i in range(1, d + 1)], "H"])
        for t, y, e in zip(traj.times, traj.states, traj.energies):
            w.writerow([_num(float(t)), *[_num(float(v)) for v in y], _num(float(e))])
    return path


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(" ", "").split(",") if x]


def read_config(path) -> ExperimentSpec:
    """Load an experiment from an INI file with a single ``[experiment]`` section.

    Keys: ``preset`` (optional base), ``name``, ``problem``, ``param.<key>``,
    ``methods`` (comma list such as ``eavf:2, mid``), ``stepsizes`` (comma
    list), ``t_end``, ``tolerance``, ``max_iterations``,
    ``divergence_threshold``, ``output``, ``reference`` (``dop853``|``rk4``),
    ``reference_rtol``, ``trajectories`` (bool).
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    read = cp.read(path)
    if not read:
        raise ValueError(f"cannot read config {path}")
    if not cp.has_section("experiment") or not cp.items("experiment"):
        raise ValueError(f"{path}: missing or empty [experiment] section")
    sec = cp["experiment"]
    known = {"preset", "name", "problem", "methods", "stepsizes", "t_end", "tolerance", "max_iterations",
             "divergence_threshold", "output", "reference", "reference_rtol", "trajectories"}
    extra = [k for k in sec if k not in known and not k.startswith("param.")]
    if extra:
        raise ValueError(f"{path}: unknown keys {', '.join(sorted(extra))}")

    kw: dict = {}
    if "preset" in sec:
        base = preset(sec["preset"])
        kw = dict(problem=base.problem, params=dict(base.params), methods=base.methods,
                  stepsizes=list(base.stepsizes), t_end=base.t_end, name=base.name)
    if "problem" in sec:
        if kw.get("problem") != sec["problem"]:
            kw["params"] = {}
        kw["problem"] = sec["problem"]
    if "problem" not in kw:
        raise ValueError(f"{path}: 'problem' (or 'preset') is required")
    entry = PROBLEMS.get(kw["problem"])
    if entry is None:
        raise ValueError(f"{path}: unknown problem {kw['problem']!r}")
    params = kw.setdefault("params", {})
    for k, v in sec.items():
        if k.startswith("param."):
            key = k[len("param."):]
            if key not in entry.params:
                raise ValueError(f"{path}: problem {kw['problem']!r} has no parameter {key!r}")
            params[key] = entry.params[key][0](v)
    if "methods" in sec:
        kw["methods"] = [m for m in (x.strip() for x in sec["methods"].split(",")) if m]
    if "stepsizes" in sec:
        kw["stepsizes"] = _floats(sec["stepsizes"])
    if "t_end" in sec:
        kw["t_end"] = float(sec["t_end"])
    for k in ("methods", "stepsizes", "t_end"):
        if k not in kw:
            raise ValueError(f"{path}: '{k}' is required")
    cfg = DEFAULT_CONFIG
    cfg = replace(cfg, tolerance=sec.getfloat("tolerance", cfg.tolerance),
                  max_iterations=sec.getint("max_iterations", cfg.max_iterations),
                  divergence_threshold=sec.getfloat("divergence_threshold", cfg.divergence_threshold))
    kw["config"] = cfg
    kw["name"] = sec.get("name", kw.get("name", Path(path).stem))
    kw["output"] = sec.get("output")
    kw["reference"] = sec.get("reference", "dop853")
    kw["reference_rtol"] = sec.getfloat("reference_rtol", 1e-13)
    kw["export_trajectories"] = sec.getboolean("trajectories", False)
    if kw["reference"] not in ("dop853", "rk4"):
        raise ValueError(f"{path}: reference must be 'dop853' or 'rk4'")
    return ExperimentSpec(**kw)
