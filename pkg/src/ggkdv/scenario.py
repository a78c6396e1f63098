"""Scenario files: parse, validate, dispatch, and artifact emission.

A scenario is a YAML mapping with a ``command`` plus the sections that
command needs.  Unknown keys anywhere are hard errors.  Artifacts (CSV and
run.json) are built in memory and written atomically (temp file + rename),
so error paths leave no partial output.  Float formatting is fixed at 17
significant digits for reproducibility.
"""

from __future__ import annotations

import io
import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np
import yaml

from . import hum, pde, spectral
from .core import (
    ControlConfig,
    ControlKind,
    Grid,
    Parameters,
    StatePair,
    validate_params,
    x_norm,
)
from .errors import (
    ConstraintViolation,
    ExpressionError,
    FeasibilityError,
    NonConvergence,
    NumericalError,
    ScenarioError,
)
from .expr import compile_expression

__all__ = ["Scenario", "parse_scenario", "parse_scenario_text",
           "serialize_scenario", "run_scenario", "RunResult"]

COMMANDS = ("simulate", "adjoint", "control", "nonlinear-control",
            "observe", "ucp-sweep", "r0-check")

_FLOAT_FMT = "%.16e"

_SCHEMA = {
    "command": None,
    "seed": None,
    "output_dir": None,
    "params": {"a", "b", "c", "r", "a1", "a2"},
    "grid": {"L", "N", "T", "M"},
    "scheme": {"theta", "picard_tol", "picard_max"},
    "config": None,
    "initial": {"u", "v", "file"},
    "final": {"u", "v", "file"},
    "target": {"u", "v", "file"},
    "bc": {"h0", "h1", "h2", "g0", "g1", "g2"},
    "tol": None,
    "delta": None,
    "observe": {"samples"},
    "ucp": {"samples", "L_min", "L_max", "p_min", "p_max", "tol"},
    "r0": {"re", "im", "lengths", "tol"},
}

_REQUIRED = {
    "simulate": ("params", "grid"),
    "adjoint": ("params", "grid", "final"),
    "control": ("params", "grid", "config", "target"),
    "nonlinear-control": ("params", "grid", "config", "target"),
    "observe": ("params", "grid", "config"),
    "ucp-sweep": ("params",),
    "r0-check": (),
}


@dataclass(frozen=True)
class Scenario:
    """A validated scenario; ``raw`` preserves the file's exact content."""

    raw: dict

    @property
    def command(self) -> str:
        return self.raw["command"]

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))

    def params(self) -> Parameters:
        d = self.raw["params"]
        return Parameters(
            a=float(d["a"]), b=float(d["b"]), c=float(d["c"]), r=float(d["r"]),
            a1=float(d.get("a1", 0.0)), a2=float(d.get("a2", 0.0)),
        )

    def grid(self) -> Grid:
        d = self.raw["grid"]
        return Grid(L=float(d["L"]), N=int(d["N"]), T=float(d["T"]), M=int(d["M"]))

    def scheme(self) -> pde.SchemeConfig:
        d = self.raw.get("scheme", {})
        return pde.SchemeConfig(
            theta=float(d.get("theta", 0.5)),
            picard_tol=float(d.get("picard_tol", 1e-8)),
            picard_max=int(d.get("picard_max", 40)),
        )

    def config(self) -> ControlConfig:
        spec = self.raw["config"]
        if isinstance(spec, str):
            try:
                return ControlConfig.of(spec)
            except ValueError:
                raise ScenarioError(f"unknown configuration {spec!r}", field="config")
        if isinstance(spec, dict) and "mask" in spec and len(spec) == 1:
            return ControlConfig(kind=ControlKind.CUSTOM, mask=tuple(spec["mask"]))
        raise ScenarioError("config must be a name or {mask: [6 booleans]}",
                            field="config")


def _check_keys(raw: dict):
    if not isinstance(raw, dict):
        raise ScenarioError("scenario must be a mapping")
    for key, val in raw.items():
        if key not in _SCHEMA:
            raise ScenarioError("unknown key", field=key)
        sub = _SCHEMA[key]
        if sub is not None and isinstance(val, dict):
            for k2 in val:
                if k2 not in sub:
                    raise ScenarioError("unknown key", field=f"{key}.{k2}")


def parse_scenario_text(text: str) -> Scenario:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"YAML parse failure: {exc}")
    if raw is None:
        raise ScenarioError("empty scenario")
    _check_keys(raw)
    command = raw.get("command")
    if command not in COMMANDS:
        raise ScenarioError(
            f"command must be one of {', '.join(COMMANDS)}", field="command"
        )
    for section in _REQUIRED[command]:
        if section not in raw:
            raise ScenarioError("required section missing", field=section)
    sc = Scenario(raw=raw)
    # eagerly validate the typed sections the command will use, so bad
    # values surface as validation errors (exit 2), not runtime failures
    builders = (
        ("params", lambda: validate_params(sc.params())),
        ("grid", sc.grid),
        ("config", sc.config),
        ("scheme", sc.scheme),
    )
    for section, build in builders:
        if section not in raw:
            continue
        try:
            build()
        except ScenarioError:
            raise
        except KeyError as exc:
            raise ScenarioError(f"missing key {exc}", field=section)
        except (TypeError, ValueError) as exc:
            raise ScenarioError(str(exc), field=section)
    return sc


def parse_scenario(path: str) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}")
    return parse_scenario_text(text)


def serialize_scenario(sc: Scenario) -> str:
    return yaml.safe_dump(sc.raw, sort_keys=True)


# -- data construction -------------------------------------------------------


def _state_from_section(sc: Scenario, section: str, g: Grid) -> StatePair:
    spec = sc.raw.get(section)
    if spec is None:
        return StatePair.zeros(g)
    if "file" in spec:
        return _state_from_file(spec["file"], g, section)
    try:
        fu = compile_expression(str(spec.get("u", "0")))
        fv = compile_expression(str(spec.get("v", "0")))
        x = g.x
        return StatePair(np.array([fu(xi) for xi in x]),
                         np.array([fv(xi) for xi in x]))
    except ExpressionError as exc:
        raise ScenarioError(str(exc), field=section)


def _state_from_file(path: str, g: Grid, section: str) -> StatePair:
    try:
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except OSError as exc:
        raise ScenarioError(f"cannot read state file: {exc}", field=section)
    except ValueError as exc:
        raise ScenarioError(f"bad state file: {exc}", field=section)
    if rows.shape != (g.nx, 2):
        raise ScenarioError(
            f"state file must have {g.nx} rows and columns u,v", field=section
        )
    return StatePair(rows[:, 0].copy(), rows[:, 1].copy())


def _bc_from_section(sc: Scenario, g: Grid) -> pde.BoundarySignals:
    spec = sc.raw.get("bc")
    if spec is None:
        return pde.BoundarySignals.zeros(g)
    series = {}
    t = g.t
    for name in pde.SIGNAL_ORDER:
        text = str(spec.get(name, "0"))
        try:
            fn = compile_expression(text)
            series[name] = np.array([fn(ti) for ti in t])
        except ExpressionError as exc:
            raise ScenarioError(str(exc), field=f"bc.{name}")
    return pde.BoundarySignals(**series)


# -- CSV helpers --------------------------------------------------------------


def _csv(header: list, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(
            v if isinstance(v, str) else _FLOAT_FMT % v for v in row
        ) + "\n")
    return buf.getvalue()


def _trajectory_csv(traj: pde.Trajectory) -> str:
    g = traj.grid
    t, x = g.t, g.x
    rows = (
        (t[n], x[i], traj.z[n, i], traj.z[n, g.nx + i])
        for n in range(g.nt)
        for i in range(g.nx)
    )
    return _csv(["t", "x", "u", "v"], rows)


def _traces_csv(traces: pde.TraceBundle) -> str:
    g = traces.grid
    cols = traces.columns()
    names = traces.column_names()
    rows = ((g.t[n], *(col[n] for col in cols)) for n in range(g.nt))
    return _csv(["t"] + names, rows)


def _controls_csv(signals: pde.BoundarySignals, g: Grid) -> str:
    arr = signals.as_array()
    rows = ((g.t[n], *(arr[i, n] for i in range(6))) for n in range(g.nt))
    return _csv(["t"] + list(pde.SIGNAL_ORDER), rows)


# -- command runners ----------------------------------------------------------


def _run_simulate(sc: Scenario):
    p, g = sc.params(), sc.grid()
    init = _state_from_section(sc, "initial", g)
    bc = _bc_from_section(sc, g)
    traj, traces = pde.solve_linear_forward(p, g, init, bc, scheme=sc.scheme())
    summary = {
        "terminal_x_norm": x_norm(traj.final_state, p, g),
        "initial_x_norm": x_norm(init, p, g),
    }
    return summary, {
        "trajectory.csv": _trajectory_csv(traj),
        "traces.csv": _traces_csv(traces),
    }


def _run_adjoint(sc: Scenario):
    p, g = sc.params(), sc.grid()
    final = _state_from_section(sc, "final", g)
    traj, traces = pde.solve_adjoint_backward(p, g, final, scheme=sc.scheme())
    summary = {
        "final_x_norm": x_norm(final, p, g),
        "initial_x_norm": x_norm(traj.initial_state, p, g),
    }
    return summary, {
        "trajectory.csv": _trajectory_csv(traj),
        "traces.csv": _traces_csv(traces),
    }


def _run_control(sc: Scenario):
    p, g = sc.params(), sc.grid()
    cfg = sc.config()
    init = _state_from_section(sc, "initial", g)
    target = _state_from_section(sc, "target", g)
    tol = float(sc.raw.get("tol", 1e-3))
    res = hum.solve_control(cfg, init, target, tol, p, g, scheme=sc.scheme())
    err = x_norm(StatePair(res.achieved.u - target.u, res.achieved.v - target.v), p, g)
    tnorm = max(x_norm(target, p, g), 1e-30)
    summary = {
        "iterations": res.iterations,
        "cg_residual": res.residuals[-1],
        "terminal_relative_error": err / tnorm,
        "control_norms": {k: float(v) for k, v in res.controls.norms.items()},
    }
    return summary, {"controls.csv": _controls_csv(res.controls.signals, g)}


def _run_nonlinear_control(sc: Scenario):
    p, g = sc.params(), sc.grid()
    cfg = sc.config()
    init = _state_from_section(sc, "initial", g)
    target = _state_from_section(sc, "target", g)
    tol = float(sc.raw.get("tol", 1e-3))
    delta = float(sc.raw.get("delta", 0.1))
    res = hum.solve_nonlinear_control(init, target, cfg, delta, p, g,
                                      scheme=sc.scheme(), tol=tol)
    summary = {
        "outer_iterations": res.iterations,
        "terminal_relative_error": res.terminal_error,
        "outer_history": [float(v) for v in res.history],
        "control_norms": {k: float(v) for k, v in res.controls.norms.items()},
    }
    return summary, {"controls.csv": _controls_csv(res.controls.signals, g)}


def _run_observe(sc: Scenario):
    p, g = sc.params(), sc.grid()
    cfg = sc.config()
    nsamples = int(sc.raw.get("observe", {}).get("samples", 20))
    rep = hum.estimate_observability(cfg, nsamples, p, g, seed=sc.seed,
                                     scheme=sc.scheme())
    summary = rep.as_json_dict()
    if cfg.is_three_control:
        summary["feasible_three_control"] = rep.feasible_three_control(p)
    rows = ((str(i), q) for i, q in enumerate(rep.quotients))
    return summary, {"observability.csv": _csv(["sample", "quotient"], rows)}


def _run_ucp_sweep(sc: Scenario):
    p = sc.params()
    opts = sc.raw.get("ucp", {})
    n = int(opts.get("samples", 200))
    verdicts = spectral.ucp_sweep(
        n, p, seed=sc.seed,
        L_range=(float(opts.get("L_min", 0.05)), float(opts.get("L_max", 10.0))),
        p_radius=(float(opts.get("p_min", 0.3)), float(opts.get("p_max", 3.0))),
        tol=float(opts.get("tol", 1e-6)),
    )
    inconclusive = sum(v.verdict is spectral.Verdict.INCONCLUSIVE for v in verdicts)
    summary = {
        "samples": n,
        "inconclusive": int(inconclusive),
        "confirmed": int(n - inconclusive),
    }
    rows = (
        (v.L, v.p.real, v.p.imag, v.case_tag.value,
         v.dispersion if np.isfinite(v.dispersion) else 1e308,
         v.verdict.value)
        for v in verdicts
    )
    header = ["L", "re_p", "im_p", "case_tag", "dispersion", "verdict"]
    body = _csv(header, (
        (r[0], r[1], r[2], str(r[3]), r[4], str(r[5])) for r in rows
    ))
    return summary, {"ucp.csv": body}


def _run_r0_check(sc: Scenario):
    opts = sc.raw.get("r0", {})
    re_lo, re_hi, re_n = opts.get("re", [-10.0, 10.0, 9])
    im_lo, im_hi, im_n = opts.get("im", [-10.0, 10.0, 9])
    lengths = [float(v) for v in opts.get("lengths", [0.5, 1.0, float(np.pi), 5.0])]
    tol = float(opts.get("tol", 1e-8))
    rows = []
    smin_all = np.inf
    for Lval in lengths:
        for sre in np.linspace(float(re_lo), float(re_hi), int(re_n)):
            for sim in np.linspace(float(im_lo), float(im_hi), int(im_n)):
                rep = spectral.r0_eigencheck(Lval, complex(sre, sim), tol=tol)
                smin_all = min(smin_all, rep.sigma_min)
                rows.append((rep.s.real, rep.s.imag, rep.L, rep.sigma_min))
    summary = {"sigma_min": float(smin_all), "certified": bool(smin_all > tol),
               "points": len(rows)}
    return summary, {"r0.csv": _csv(["re_s", "im_s", "L", "sigma_min"], rows)}


_RUNNERS = {
    "simulate": _run_simulate,
    "adjoint": _run_adjoint,
    "control": _run_control,
    "nonlinear-control": _run_nonlinear_control,
    "observe": _run_observe,
    "ucp-sweep": _run_ucp_sweep,
    "r0-check": _run_r0_check,
}


@dataclass
class RunResult:
    exit_code: int
    summary: dict
    artifacts: dict
    message: str = ""


def _atomic_write(directory: str, artifacts: dict):
    os.makedirs(directory, exist_ok=True)
    for name, text in artifacts.items():
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{name}.")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(text)
            os.replace(tmp, os.path.join(directory, name))
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def run_scenario(path: str, output_dir: str = None, seed: int = None) -> RunResult:
    """Run one scenario file; returns the exit code and artifact map.

    Exit codes: 0 success, 2 parse/validation error, 3 numerical failure,
    4 three-control feasibility failure.
    """
    try:
        sc = parse_scenario(path)
        if seed is not None:
            raw = dict(sc.raw)
            raw["seed"] = int(seed)
            sc = Scenario(raw=raw)
        summary, artifacts = _RUNNERS[sc.command](sc)
    except (ScenarioError, ExpressionError) as exc:
        return RunResult(2, {}, {}, message=str(exc))
    except FeasibilityError as exc:
        return RunResult(4, {}, {}, message=str(exc))
    except (NumericalError, NonConvergence, ConstraintViolation) as exc:
        return RunResult(3, {}, {}, message=str(exc))

    run_json = {
        "command": sc.command,
        "seed": sc.seed,
        "scenario": sc.raw,
        "summary": summary,
    }
    artifacts = dict(artifacts)
    artifacts["run.json"] = json.dumps(run_json, sort_keys=True, indent=2) + "\n"
    out_dir = output_dir or sc.raw.get("output_dir") or "."
    _atomic_write(out_dir, artifacts)
    return RunResult(0, summary, artifacts)
