"""Experiment driver: single runs, convergence studies and energy studies.

Results are written as CSV (header row, fixed column order, 17 significant
digits, LF line endings) plus a JSON summary per study.
"""
from __future__ import annotations

import csv
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from .ecr import CollocationScheme, NumericalError, RunResult, SemilinearSystem, StepInfo, _run, integrate, step_sizes
from .oscillatory import SecondOrderSystem, rkn_integrate, tcr_integrate
from .problems import CATALOG, ProblemInstance, get_problem

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "ConfigError",
    "ConvergenceReport",
    "ExperimentConfig",
    "METHODS",
    "OUT_ENV",
    "baseline_rk4",
    "converge",
    "energy_study",
    "fit_order",
    "load_config",
    "run",
    "run_method",
]

METHODS = ("ecr", "tcr", "rkn", "baseline-rk4")
OUT_ENV = "EXPCOLLOC_OUT"
MONOTONE_SLACK = 1e-10
# Endpoint errors below this multiple of the solution size are roundoff, not truncation.
ERROR_FLOOR = 1e-12


class ConfigError(ValueError):
    """Bad experiment configuration (unknown problem or method, bad stepsizes, ...)."""


@dataclass
class ExperimentConfig:
    problem: str = "duffing"
    params: dict = field(default_factory=dict)
    method: str = "ecr"
    r: int = 2
    h: list = field(default_factory=lambda: [0.01])
    t_end: float = 10.0
    out: str = "results"
    seed: int = 0
    dense: bool = False
    max_iter: int = 5
    tol: float = 1e-16

    def validate(self) -> ExperimentConfig:
        if self.problem not in CATALOG:
            raise ConfigError(f"unknown problem {self.problem!r}; choose from {sorted(CATALOG)}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {list(METHODS)}")
        hs = [float(h) for h in self.h]
        if not hs or any(not h > 0 for h in hs):
            raise ConfigError("stepsizes must be positive")
        self.h = sorted(set(hs), reverse=True)
        if not self.t_end > 0:
            raise ConfigError("t_end must be positive")
        if self.r < 1:
            raise ConfigError("r must be >= 1")
        return self

    def scheme(self, h: float) -> CollocationScheme:
        return CollocationScheme(r=self.r, h=h, tol=self.tol, max_iter=self.max_iter)

    def instance(self) -> ProblemInstance:
        try:
            return get_problem(self.problem, **self.params)
        except TypeError as exc:
            raise ConfigError(f"bad parameters for {self.problem!r}: {exc}") from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def load_config(path, **overrides) -> ExperimentConfig:
    """Read a TOML config with [problem], [method] and [run] tables.

    Keyword overrides (None means "not given") win over the file, and the
    output directory falls back to $EXPCOLLOC_OUT before the file value.
    """
    data = {}
    if path is not None:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    prob = dict(data.get("problem", {}))
    meth = dict(data.get("method", {}))
    runs = dict(data.get("run", {}))
    cfg = ExperimentConfig()
    cfg.problem = prob.pop("name", cfg.problem)
    cfg.params = prob
    cfg.method = meth.get("name", cfg.method)
    cfg.r = int(meth.get("r", cfg.r))
    cfg.max_iter = int(meth.get("max_iter", cfg.max_iter))
    cfg.tol = float(meth.get("tol", cfg.tol))
    h = runs.get("h", cfg.h)
    cfg.h = list(h) if isinstance(h, (list, tuple)) else [h]
    cfg.t_end = float(runs.get("t_end", cfg.t_end))
    cfg.out = runs.get("out", cfg.out)
    cfg.seed = int(runs.get("seed", cfg.seed))
    cfg.dense = bool(runs.get("dense", cfg.dense))
    if os.environ.get(OUT_ENV):
        cfg.out = os.environ[OUT_ENV]
    params = overrides.pop("params", None)
    if params:
        cfg.params = {**cfg.params, **params}
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg


def _rk4_step(f, y, h):
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    y1 = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(y1)):
        raise NumericalError("non-finite state after RK4 step")
    return y1


def baseline_rk4(system: SemilinearSystem, h: float, T: float, y0) -> RunResult:
    """Classical explicit fourth-order Runge-Kutta on y' = A y + g(y), for comparison.

    Growth past ecr.BLOWUP_FACTOR or a non-finite state stops the run with
    ``blowup`` set.
    """
    def one(y, hk):
        return _rk4_step(system.rhs, y, hk), StepInfo(iterations=0, residual=0.0, converged=True,
                                                       stages=None)

    return _run(one, system, y0, step_sizes(h, T), "baseline-rk4", h)


def _absorbed(second: SecondOrderSystem) -> SecondOrderSystem:
    Om = second.Omega

    def grad_U(q):
        return Om @ q + second.grad_U(q)

    def U(q):
        return 0.5 * q @ (Om @ q) + second.U(q)

    return SecondOrderSystem(Omega=np.zeros_like(Om), grad_U=grad_U, U=U, name=second.name)


def run_method(inst: ProblemInstance, method: str, scheme: CollocationScheme, T: float,
               record_stages: bool = False) -> RunResult:
    y0 = inst.y0
    if method == "ecr":
        return integrate(inst.system, scheme, y0, T, record_stages=record_stages)
    if method == "baseline-rk4":
        return baseline_rk4(inst.system, scheme.h, T, y0)
    if inst.second_order is None:
        raise ConfigError(f"method {method!r} needs a second-order problem; {inst.name!r} is not")
    d = inst.second_order.d
    if method == "tcr":
        return tcr_integrate(inst.second_order, scheme, y0[:d], y0[d:], T)
    if method == "rkn":
        return rkn_integrate(_absorbed(inst.second_order), scheme, y0[:d], y0[d:], T)
    raise ConfigError(f"unknown method {method!r}")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_json(path: Path, data: dict) -> None:
    with open(path, "w", newline="") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_run(res: RunResult, out: Path, system=None, scheme=None, y0=None) -> list:
    """Write trajectory, energy and diagnostics CSVs for one run; returns the paths."""
    out.mkdir(parents=True, exist_ok=True)
    d = res.y.shape[1]
    paths = [out / "trajectory.csv", out / "diagnostics.csv"]
    write_csv(paths[0], ["t"] + [f"y{i}" for i in range(d)],
              (np.concatenate([[t], y]) for t, y in zip(res.t, res.y)))
    write_csv(paths[1], ["step", "iterations", "residual", "converged"],
              ((k + 1, res.iterations[k], res.residuals[k], res.converged[k])
               for k in range(len(res.iterations))))
    if res.energy is not None:
        paths.append(out / "energy.csv")
        H0 = res.energy[0]
        write_csv(paths[-1], ["t", "H", "H_minus_H0"],
                  ((t, H, H - H0) for t, H in zip(res.t, res.energy)))
    if res.stages is not None and system is not None:
        from .ecr import dense_output
        paths.append(out / "dense.csv")
        rows = []
        for k, stages in enumerate(res.stages):
            hk = res.t[k + 1] - res.t[k]
            sch = scheme if hk == scheme.h else scheme.with_h(hk)
            u = dense_output(system, sch, res.y[k], stages, 0.5)
            rows.append(np.concatenate([[res.t[k] + 0.5 * hk], u]))
        write_csv(paths[-1], ["t"] + [f"y{i}" for i in range(d)], rows)
    return paths


def _out_dir(cfg: ExperimentConfig) -> Path:
    return Path(cfg.out)


def run(cfg: ExperimentConfig) -> dict:
    """Integrate the configured problem once per stepsize and write the results.

    With several stepsizes each run goes to its own ``h=<value>`` subdirectory.
    The returned summary has ``blowup`` set when a run diverged; its partial
    output is still written.
    """
    cfg.validate()
    inst = cfg.instance()
    out = _out_dir(cfg)
    summary = {"problem": cfg.problem, "params": inst.params, "method": cfg.method, "r": cfg.r,
               "t_end": cfg.t_end, "runs": [], "blowup": False}
    for h in cfg.h:
        scheme = cfg.scheme(h)
        res = run_method(inst, cfg.method, scheme, cfg.t_end,
                         record_stages=cfg.dense and cfg.method == "ecr")
        sub = out if len(cfg.h) == 1 else out / f"h={h:.17g}"
        write_run(res, sub, inst.system, scheme, inst.y0)
        entry = {"h": h, "steps": res.steps, "blowup": res.blowup,
                 "nonconverged_steps": int(len(res.nonconverged_steps)), "dir": str(sub)}
        if res.energy is not None:
            entry["max_abs_energy_drift"] = float(np.max(np.abs(res.energy - res.energy[0])))
        summary["runs"].append(entry)
        summary["blowup"] = summary["blowup"] or res.blowup
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "summary.json", summary)
    return summary


def fit_order(h, errors, T: float = 1.0) -> tuple:
    """Least-squares line through (log(T/h), log err); returns (order, R^2).

    The order is minus the fitted slope, so a method with error C h^p gives p.
    """
    x = np.log(T / np.asarray(h, float))
    y = np.log(np.asarray(errors, float))
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return -float(slope), r2


@dataclass
class ConvergenceReport:
    h: list
    errors: list
    energy_drift: list
    order: float | None
    r_squared: float | None
    meaningful: bool
    reference: str
    note: str = ""
    cross_check: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _independent_reference(inst: ProblemInstance, T: float) -> np.ndarray:
    method = "Radau" if inst.system.classification == "gradient" else "DOP853"
    sol = solve_ivp(lambda t, y: inst.system.rhs(y), (0.0, T), inst.y0, method=method,
                    rtol=1e-12, atol=1e-12)
    return sol.y[:, -1]


def convergence_study(inst: ProblemInstance, method: str, scheme: CollocationScheme, hs, T: float):
    """Endpoint max-norm errors for each h (sorted descending) and the fitted order."""
    hs = sorted({float(h) for h in hs}, reverse=True)
    if len(hs) < 3:
        raise ConfigError("a convergence study needs at least three stepsizes")
    cross = None
    if inst.reference_kind in ("elliptic", "closed-form"):
        ref = np.asarray(inst.reference(T), float)
        kind = inst.reference_kind
    else:
        fine = run_method(inst, method, scheme.with_h(hs[-1] / 8), T)
        ref = fine.y[-1]
        kind = "self-convergence"
        cross = float(np.max(np.abs(ref - _independent_reference(inst, T))))
    errors, drift = [], []
    for h in hs:
        res = run_method(inst, method, scheme.with_h(h), T)
        errors.append(float(np.max(np.abs(res.y[-1] - ref))) if not res.blowup else float("inf"))
        drift.append(float(np.max(np.abs(res.energy - res.energy[0]))) if res.energy is not None else None)
    floor = ERROR_FLOOR * max(1.0, float(np.max(np.abs(ref))))
    meaningful = all(np.isfinite(e) and e > floor for e in errors)
    order = r2 = None
    note = ""
    if meaningful:
        order, r2 = fit_order(hs, errors, T)
    else:
        note = "order fit not meaningful: errors at roundoff level or non-finite"
    return ConvergenceReport(h=hs, errors=errors, energy_drift=drift, order=order, r_squared=r2,
                             meaningful=meaningful, reference=kind, note=note, cross_check=cross)


def converge(cfg: ExperimentConfig) -> ConvergenceReport:
    cfg.validate()
    if len(cfg.h) < 3:
        raise ConfigError("a convergence study needs at least three stepsizes")
    inst = cfg.instance()
    report = convergence_study(inst, cfg.method, cfg.scheme(cfg.h[0]), cfg.h, cfg.t_end)
    out = _out_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "convergence.csv", ["h", "steps", "error_maxnorm", "max_abs_energy_drift"],
              ((h, len(step_sizes(h, cfg.t_end)), e, d if d is not None else float("nan"))
               for h, e, d in zip(report.h, report.errors, report.energy_drift)))
    summary = {"problem": cfg.problem, "params": inst.params, "method": cfg.method, "r": cfg.r,
               "t_end": cfg.t_end, "error_norm": "max-norm at the endpoint",
               "fit": "least squares of log(error) against log(T/h); order = -slope",
               **report.to_dict()}
    write_json(out / "convergence_summary.json", summary)
    return report


def one_step_defect(inst: ProblemInstance, method: str, scheme: CollocationScheme, y0) -> float:
    res = run_method(ProblemInstance(inst.name, inst.system, inst.params, np.asarray(y0, float),
                                     second_order=inst.second_order),
                     method, scheme, scheme.h)
    return float(res.energy[-1] - res.energy[0])


def defect_halving(inst: ProblemInstance, method: str, scheme: CollocationScheme, states) -> dict:
    """Largest one-step energy defect over ``states`` at h and h/2, and their ratio."""
    big = max(abs(one_step_defect(inst, method, scheme, y)) for y in states)
    small = max(abs(one_step_defect(inst, method, scheme.with_h(scheme.h / 2), y)) for y in states)
    ratio = big / small if small > 0 else float("inf")
    return {"defect_h": big, "defect_h_half": small, "ratio": ratio,
            "observed_order": math.log2(ratio) if 0 < ratio < float("inf") else None}


def energy_study(cfg: ExperimentConfig) -> dict:
    """Energy drift of one run plus a halving estimate of the one-step defect order.

    For dissipative and gradient systems the steps where H grows by more
    than MONOTONE_SLACK are counted. The halving estimate takes the largest
    one-step defect over 16 states of the computed trajectory.
    """
    cfg.validate()
    inst = cfg.instance()
    if inst.system.H is None:
        raise ConfigError(f"problem {cfg.problem!r} has no energy")
    h = cfg.h[0]
    scheme = cfg.scheme(h)
    res = run_method(inst, cfg.method, scheme, cfg.t_end)
    out = _out_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    defect = res.energy - res.energy[0]
    write_csv(out / "energy.csv", ["t", "H", "H_minus_H0"], zip(res.t, res.energy, defect))
    summary = {"problem": cfg.problem, "params": inst.params, "method": cfg.method, "r": cfg.r,
               "h": h, "t_end": cfg.t_end, "steps": res.steps, "blowup": res.blowup,
               "classification": inst.system.classification,
               "H0": float(res.energy[0]),
               "max_abs_defect": float(np.max(np.abs(defect))),
               "first_step_defect": float(defect[1]) if len(defect) > 1 else 0.0}
    summary["max_rel_defect"] = summary["max_abs_defect"] / max(abs(summary["H0"]), 1e-300)
    if inst.system.classification in ("dissipative", "gradient"):
        inc = np.diff(res.energy)
        summary["monotone_slack"] = MONOTONE_SLACK
        summary["monotonicity_violations"] = int(np.sum(inc > MONOTONE_SLACK))
        summary["max_increase"] = float(inc.max()) if inc.size else 0.0
    idx = np.unique(np.linspace(0, res.steps, 16).astype(int))
    if cfg.method != "baseline-rk4" and not res.blowup:
        summary["halving"] = defect_halving(inst, cfg.method, scheme, res.y[idx])
    write_json(out / "energy_summary.json", summary)
    return summary
