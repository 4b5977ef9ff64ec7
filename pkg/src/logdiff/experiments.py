"""Experiment specs, the initial-data catalog, verification suites and sweeps.

A spec is read from TOML (or JSON) and fully validated before anything is
written, so a malformed config leaves no partial output.
"""

from __future__ import annotations

import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .grid import Field, Grid1D, Kind, Nonlinearity, integrate, load_snapshot
from .operators import poisson_kernel
from .solver import RunConfig, StepError, Trajectory, evolve, mild_form_residual

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib


SUITES = ("mass", "monotone", "positivity", "mild", "smoothing", "transport", "inequalities")
INITIAL_KINDS = ("zero", "gaussian", "box", "double_bump", "poisson", "from_file")
SWEEP_AXES = ("dt", "n", "amplitude", "mass")


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


# -- initial data ----------------------------------------------------------

_INITIAL_PARAMS = {
    "zero": {},
    "gaussian": {"amplitude": 1.0, "width": 1.0, "center": 0.0},
    "box": {"height": 1.0, "halfwidth": 1.0},
    "double_bump": {"amplitude": 1.0, "amplitude2": 1.0, "width": 1.0, "separation": 4.0},
    "poisson": {"t0": 1.0, "scale": 1.0},
    "from_file": {"path": ""},
}
_POSITIVE = {"width", "halfwidth", "t0", "scale"}
_NONNEG = {"amplitude", "amplitude2", "height", "separation"}


@dataclass(frozen=True)
class InitialDataSpec:
    kind: str = "gaussian"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in INITIAL_KINDS:
            raise ConfigError(f"initial.kind: unknown kind {self.kind!r} (expected one of {INITIAL_KINDS})")
        allowed = _INITIAL_PARAMS[self.kind]
        for k, v in self.params.items():
            if k not in allowed:
                raise ConfigError(f"initial.{k}: not a parameter of kind {self.kind!r}")
            if k == "path":
                if not isinstance(v, str) or not v:
                    raise ConfigError("initial.path: must be a nonempty string")
                continue
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                raise ConfigError(f"initial.{k}: must be a finite number")
            if k in _POSITIVE and not v > 0:
                raise ConfigError(f"initial.{k}: must be positive")
            if k in _NONNEG and v < 0:
                raise ConfigError(f"initial.{k}: must be nonnegative")
        if self.kind == "from_file" and "path" not in self.params:
            raise ConfigError("initial.path: required for kind 'from_file'")

    def value(self, key):
        return self.params.get(key, _INITIAL_PARAMS[self.kind][key])

    def sample(self, grid: Grid1D) -> Field:
        x = grid.x
        k = self.kind
        if k == "zero":
            v = np.zeros(grid.n)
        elif k == "gaussian":
            v = self.value("amplitude") * np.exp(-(((x - self.value("center")) / self.value("width")) ** 2))
        elif k == "box":
            v = np.where(np.abs(x) <= self.value("halfwidth"), self.value("height"), 0.0)
        elif k == "double_bump":
            s, w = 0.5 * self.value("separation"), self.value("width")
            v = (self.value("amplitude") * np.exp(-(((x + s) / w) ** 2))
                 + self.value("amplitude2") * np.exp(-(((x - s) / w) ** 2)))
        elif k == "poisson":
            v = self.value("scale") * poisson_kernel(grid, self.value("t0")).values
        else:
            path = Path(self.value("path"))
            f, _ = load_snapshot(path) if path.suffix == ".json" else (Field.from_csv(path), None)
            if f.grid != grid:
                raise ConfigError(f"initial.path: file grid {f.grid} does not match configured grid {grid}")
            v = f.values
        if np.any(v < 0):
            raise ConfigError("initial: sampled data must be nonnegative")
        f = Field(grid, v)
        peak = f.max()
        if peak > 0 and max(abs(v[0]), abs(v[-1])) > 1e-12 * peak:
            warnings.warn(f"initial data is not negligible at the domain boundary "
                          f"({max(abs(v[0]), abs(v[-1])) / peak:.3g} of peak)", stacklevel=2)
        return f

    def scaled(self, factor: float) -> "InitialDataSpec":
        key = {"gaussian": "amplitude", "box": "height", "poisson": "scale"}.get(self.kind)
        if self.kind == "double_bump":
            p = dict(self.params)
            p["amplitude"] = self.value("amplitude") * factor
            p["amplitude2"] = self.value("amplitude2") * factor
            return replace(self, params=p)
        if key is None:
            raise ConfigError(f"initial data of kind {self.kind!r} cannot be rescaled")
        return replace(self, params={**self.params, key: self.value(key) * factor})

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}


# -- experiment spec -------------------------------------------------------

@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    n: int = 512
    L: float = 30.0
    t_end: float = 1.0
    dt: float = 0.01
    dt_growth: float = 1.0
    dt_max: float = math.inf
    cadence: int = 1
    newton_tol: float = 1e-11
    max_newton_iters: int = 50
    nonlinearity: Nonlinearity = field(default_factory=Nonlinearity.log1p)
    initial: InitialDataSpec = field(default_factory=InitialDataSpec)
    suites: tuple = ()
    out: str | None = None
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name.strip():
            raise ConfigError("name: must be a nonempty string")
        for s in self.suites:
            if s not in SUITES:
                raise ConfigError(f"suites: unknown suite {s!r} (expected some of {SUITES})")
        try:
            self.run_config()
        except ConfigError:
            raise
        except (ValueError, TypeError) as e:
            raise ConfigError(f"run parameters: {e}") from e

    @property
    def grid(self) -> Grid1D:
        try:
            return Grid1D(self.n, self.L)
        except ValueError as e:
            raise ConfigError(f"grid: {e}") from e

    def run_config(self, initial: Field | None = None) -> RunConfig:
        g = self.grid
        return RunConfig(g, initial if initial is not None else self.initial.sample(g), self.t_end, self.dt,
                         self.nonlinearity, dt_growth=self.dt_growth, dt_max=self.dt_max,
                         cadence=self.cadence, newton_tol=self.newton_tol,
                         max_newton_iters=self.max_newton_iters)

    def with_(self, **kw) -> "ExperimentSpec":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        """Config-shaped dict; ``spec_from_dict`` inverts it."""
        time = {"t_end": self.t_end, "dt": self.dt, "growth": self.dt_growth, "cadence": self.cadence}
        if not math.isinf(self.dt_max):
            time["dt_max"] = self.dt_max
        return {
            "name": self.name,
            "seed": self.seed,
            "suites": list(self.suites),
            "grid": {"n": self.n, "L": self.L},
            "time": time,
            "solver": {"newton_tol": self.newton_tol, "max_newton_iters": self.max_newton_iters},
            "nonlinearity": self.nonlinearity.to_dict(),
            "initial": self.initial.to_dict(),
        }


_SECTIONS = {
    "grid": {"n", "L"},
    "time": {"t_end", "dt", "growth", "dt_max", "cadence"},
    "solver": {"newton_tol", "max_newton_iters"},
    "nonlinearity": {"kind", "m"},
    "initial": None,
}
_TOP = {"name", "seed", "suites", "out"}


def _num(d, key, where, kind=float):
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {v!r}")
    if kind is int:
        if isinstance(v, float) and not v.is_integer():
            raise ConfigError(f"{where}.{key}: expected an integer, got {v!r}")
        return int(v)
    return float(v)


def spec_from_dict(d: dict) -> ExperimentSpec:
    if not isinstance(d, dict):
        raise ConfigError("config root must be a table")
    for k in d:
        if k not in _TOP and k not in _SECTIONS:
            raise ConfigError(f"{k}: unknown key")
    for sec, keys in _SECTIONS.items():
        if sec in d:
            if not isinstance(d[sec], dict):
                raise ConfigError(f"{sec}: expected a table")
            if keys is not None:
                for k in d[sec]:
                    if k not in keys:
                        raise ConfigError(f"{sec}.{k}: unknown key")
    kw = {}
    if "name" not in d:
        raise ConfigError("name: required")
    kw["name"] = d["name"]
    if "seed" in d:
        kw["seed"] = _num(d, "seed", "config", int)
    if "suites" in d:
        s = d["suites"]
        if isinstance(s, str):
            s = [x for x in s.split(",") if x]
        if not isinstance(s, list) or not all(isinstance(x, str) for x in s):
            raise ConfigError("suites: expected a list of names")
        kw["suites"] = tuple(x.strip() for x in s)
    if "out" in d:
        kw["out"] = str(d["out"])
    g = d.get("grid", {})
    if "n" in g:
        kw["n"] = _num(g, "n", "grid", int)
    if "L" in g:
        kw["L"] = _num(g, "L", "grid")
    t = d.get("time", {})
    for src, dst, kind in (("t_end", "t_end", float), ("dt", "dt", float), ("growth", "dt_growth", float),
                           ("dt_max", "dt_max", float), ("cadence", "cadence", int)):
        if src in t:
            kw[dst] = _num(t, src, "time", kind)
    s = d.get("solver", {})
    if "newton_tol" in s:
        kw["newton_tol"] = _num(s, "newton_tol", "solver")
    if "max_newton_iters" in s:
        kw["max_newton_iters"] = _num(s, "max_newton_iters", "solver", int)
    if "nonlinearity" in d:
        nd = d["nonlinearity"]
        try:
            kind = Kind(nd.get("kind", "log1p"))
        except ValueError:
            raise ConfigError(f"nonlinearity.kind: unknown kind {nd.get('kind')!r}") from None
        try:
            kw["nonlinearity"] = Nonlinearity(kind, _num(nd, "m", "nonlinearity") if "m" in nd else 1.0)
        except ValueError as e:
            raise ConfigError(f"nonlinearity.m: {e}") from None
    if "initial" in d:
        ini = dict(d["initial"])
        kw["initial"] = InitialDataSpec(ini.pop("kind", "gaussian"), ini)
    return ExperimentSpec(**kw)


def load_spec(path) -> ExperimentSpec:
    """Parse a TOML or JSON spec; every failure is a :class:`ConfigError` with context."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"{path}: cannot read ({e.strerror})") from None
    try:
        if path.suffix == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    try:
        return spec_from_dict(data)
    except ConfigError as e:
        raise ConfigError(f"{path}: {e}") from None


# -- verification suites ---------------------------------------------------

def _monotone(series: np.ndarray, slack: float) -> float:
    """Largest increase between consecutive samples (<= slack means monotone)."""
    return float(np.max(np.diff(series), initial=0.0)) if series.size > 1 else 0.0


def suite_mass(tr: Trajectory, spec: ExperimentSpec) -> dict:
    m = tr.series("mass")
    drift = float(np.max(np.abs(m - m[0])) / m[0]) if m[0] > 0 else float(np.max(np.abs(m)))
    return {"passed": drift <= 1e-8, "relative_drift": drift}


def suite_monotone(tr: Trajectory, spec: ExperimentSpec) -> dict:
    slack = 1e-9
    inc = {name: _monotone(tr.series(name), slack) for name in ("l1", "l2", "l4", "linf", "lx", "energy")}
    t = np.asarray(tr.times)
    lx0 = tr.records[0].lx
    e = tr.series("energy")
    ratio = float(np.max(2 * t[1:] * e[1:] / lx0)) if lx0 > 0 and t.size > 1 else 0.0
    ok = all(v <= slack for v in inc.values()) and ratio <= 1.01
    return {"passed": ok, "max_increase": inc, "max_2tE_over_LX": ratio}


def suite_positivity(tr: Trajectory, spec: ExperimentSpec) -> dict:
    if tr.initial.max() <= 0:
        return {"passed": all(u.min() == 0 and u.max() == 0 for u in tr.fields), "trivial": True}
    mins = [u.min() for u in tr.fields[1:]]
    return {"passed": bool(mins) and min(mins) > 0, "min_after_first_step": min(mins) if mins else None}


def suite_mild(tr: Trajectory, spec: ExperimentSpec) -> dict:
    r = mild_form_residual(tr, tr.times[-1])
    # consistency only: the representation holds to O(dt + h^2)
    tol = 10.0 * (spec.dt + tr.grid.h**2) * max(1.0, tr.initial.max())
    return {"passed": r <= tol, "residual": r, "tolerance": tol}


def suite_smoothing(tr: Trajectory, spec: ExperimentSpec) -> dict:
    from .diagnostics import check_h12_bound, check_lp_linf_smoothing, check_lx_l2_smoothing

    if tr.initial.max() <= 0:
        return {"passed": True, "trivial": True}
    fam = {}
    for lam in (0.5, 2.0):
        fam[f"x{lam:g}"] = evolve(spec.with_(initial=spec.initial.scaled(lam)).run_config())
    reps = [check_lp_linf_smoothing(fam, 2.0, calibration=tr), check_lx_l2_smoothing(fam, calibration=tr),
            check_h12_bound(fam, calibration=tr)]
    return {"passed": all(r.passed for r in reps), "reports": [r.to_dict() for r in reps]}


def suite_transport(tr: Trajectory, spec: ExperimentSpec) -> dict:
    from .backlund import l1_relation, transport_residual, transport_trajectory

    if spec.nonlinearity.kind is not Kind.LOG1P:
        return {"passed": True, "skipped": "transport map needs the log1p nonlinearity"}
    tfs = transport_trajectory(tr)
    m = np.array([integrate(u) for u in tr.fields])
    c = np.array([l1_relation(x) for x in tfs])
    rel = float(np.max(np.abs(c - m) / np.maximum(m, 1e-300))) if m[0] > 0 else float(np.max(np.abs(c)))
    t, r = transport_residual(tr)
    return {"passed": rel <= 1e-4, "l1_relation_rel_error": rel,
            "residual": {"t": t.tolist(), "l2": r.tolist()}}


def suite_inequalities(tr: Trajectory, spec: ExperimentSpec) -> dict:
    from .inequalities import (SampleFamily, check_expm1_cauchy_schwarz, check_log_inequality_suite,
                               check_stroock_varopoulos)

    worst = math.inf
    samples = SampleFamily("bandlimited", 20, spec.seed, tr.grid).generate()
    for u in list(tr.fields) + samples:
        z = u.with_values(np.log1p(u.values))
        lhs, rhs = check_stroock_varopoulos(z, 2.0)
        worst = min(worst, lhs - rhs + 1e-8 * max(1.0, abs(lhs)))
    cs = check_expm1_cauchy_schwarz(np.linspace(0, 30, 301), np.linspace(0, 10, 301))
    logs = check_log_inequality_suite(10001)
    ok = worst >= 0 and cs >= -1e-12 and logs["log1p_le_u_margin"] >= 0 and logs["j_nonneg_margin"] >= 0 \
        and logs["j_le_abs_margin"] >= 0 and logs["psi_prime_fd_error"] <= 1e-8
    return {"passed": ok, "stroock_varopoulos_worst_margin": worst, "expm1_cauchy_schwarz_margin": cs, "scalar": logs}


SUITE_FUNCS = {
    "mass": suite_mass,
    "monotone": suite_monotone,
    "positivity": suite_positivity,
    "mild": suite_mild,
    "smoothing": suite_smoothing,
    "transport": suite_transport,
    "inequalities": suite_inequalities,
}


# -- running ---------------------------------------------------------------

@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    trajectory: Trajectory | None
    suites: dict
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(v.get("passed", False) for v in self.suites.values())

    @property
    def exit_status(self) -> int:
        return 0 if self.passed else 1

    def report(self) -> dict:
        return {"name": self.spec.name, "passed": self.passed, "error": self.error,
                "spec": self.spec.to_dict(), "suites": self.suites}


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default, allow_nan=True) + "\n"


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (bool, np.bool_)):
        return bool(o)
    raise TypeError(f"not serializable: {type(o)}")


def execute(spec: ExperimentSpec) -> ExperimentResult:
    """Run the spec and its suites in memory."""
    try:
        tr = evolve(spec.run_config())
    except StepError as e:
        return ExperimentResult(spec, None, {}, f"solver failure at t={e.t}: {e}")
    results = {}
    for s in spec.suites:
        try:
            results[s] = SUITE_FUNCS[s](tr, spec)
        except Exception as e:  # a broken suite is a failed suite
            results[s] = {"passed": False, "error": f"{type(e).__name__}: {e}"}
    return ExperimentResult(spec, tr, results)


def write_artifacts(res: ExperimentResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "spec.json").write_text(_dumps(res.spec.to_dict()))
    if res.trajectory is not None:
        (out / "diagnostics.csv").write_text(res.trajectory.diagnostics_csv())
        (out / "trajectory.json").write_text(json.dumps(res.trajectory.to_json_dict()) + "\n")
    (out / "report.json").write_text(_dumps(res.report()))


def run_experiment(spec: ExperimentSpec, out=None) -> int:
    """Run, write artifacts under ``out`` (or ``spec.out``) and return the exit status."""
    res = execute(spec)
    target = out or spec.out
    if target is not None:
        write_artifacts(res, Path(target))
    return res.exit_status


# -- sweeps ----------------------------------------------------------------

def _apply_axis(spec: ExperimentSpec, axis: str, value) -> ExperimentSpec:
    if axis == "dt":
        return spec.with_(dt=float(value))
    if axis == "n":
        return spec.with_(n=int(value))
    if axis in ("amplitude", "mass"):
        base = integrate(spec.initial.sample(spec.grid)) if axis == "mass" else 1.0
        if axis == "mass" and base <= 0:
            raise ConfigError("mass sweep needs nonzero initial mass")
        return spec.with_(initial=spec.initial.scaled(float(value) / base))
    raise ConfigError(f"axis: unknown sweep axis {axis!r} (expected one of {SWEEP_AXES})")


def _sweep_point(args):
    spec, axis, value = args
    try:
        s = _apply_axis(spec, axis, value)
        res = execute(s)
        tr = res.trajectory
        final = tr.fields[-1].values.tolist() if tr is not None else None
        return {"value": value, "passed": res.passed, "error": res.error, "suites": res.suites,
                "final": final, "t_final": tr.times[-1] if tr is not None else None,
                "grid": {"n": s.n, "L": s.L}, "_trajectory": tr}
    except Exception as e:
        return {"value": value, "passed": False, "error": f"{type(e).__name__}: {e}", "final": None}


def _exact_solution(spec: ExperimentSpec, grid: Grid1D, t: float):
    """Closed form when available: the linear flow of a Poisson profile."""
    if spec.nonlinearity.kind is Kind.LINEAR and spec.initial.kind == "poisson":
        return spec.initial.value("scale") * poisson_kernel(grid, spec.initial.value("t0") + t).values
    return None


def convergence_table(spec: ExperimentSpec, axis: str, points: list) -> list[dict]:
    """Errors and observed orders along a refinement axis.

    Uses the exact solution when one is known, otherwise differences of
    consecutive points (restricted to the coarser grid for ``n``).
    """
    rows = []
    ok = [p for p in points if p.get("final") is not None]
    if axis not in ("dt", "n") or len(ok) < 2:
        return rows
    errs = []
    for i, p in enumerate(ok):
        g = Grid1D(p["grid"]["n"], p["grid"]["L"])
        exact = _exact_solution(spec, g, p["t_final"])
        u = np.asarray(p["final"])
        if exact is not None:
            errs.append(float(np.max(np.abs(u - exact))))
        elif i + 1 < len(ok):
            v = np.asarray(ok[i + 1]["final"])
            stride = v.size // u.size
            errs.append(float(np.max(np.abs(u - v[::stride]))))
    for i, e in enumerate(errs):
        row = {"value": ok[i]["value"], "error": e}
        if i > 0 and errs[i - 1] > 0 and e > 0:
            ratio = float(ok[i - 1]["value"]) / float(ok[i]["value"])
            ratio = ratio if axis == "dt" else 1.0 / ratio
            row["order"] = math.log(errs[i - 1] / e) / math.log(ratio)
        rows.append(row)
    return rows


def sweep(spec: ExperimentSpec, axis: str, values, threads: int = 1) -> dict:
    """Run ``spec`` at every value of ``axis``; failures are recorded, not raised."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"axis: unknown sweep axis {axis!r} (expected one of {SWEEP_AXES})")
    args = [(spec, axis, v) for v in values]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            points = list(ex.map(_sweep_point, args))
    else:
        points = [_sweep_point(a) for a in args]
    runs = {f"{axis}={p['value']}": p.pop("_trajectory", None) for p in points}
    report = {"axis": axis, "values": list(values), "points": points,
              "convergence": convergence_table(spec, axis, points)}
    if axis in ("amplitude", "mass"):
        report["smoothing"] = _sweep_smoothing({k: v for k, v in runs.items() if v is not None})
    for p in points:
        p.pop("final", None)
    return report


def _sweep_smoothing(runs: dict) -> dict:
    """Lp-Linf bound (p=2) calibrated on the first successful point."""
    from .diagnostics import check_lp_linf_smoothing

    if len(runs) < 2:
        return {"error": "fewer than two successful runs"}
    return check_lp_linf_smoothing(runs, 2.0).to_dict()


def resolve_threads(cli_value: int | None) -> int:
    if cli_value is not None:
        return max(1, int(cli_value))
    env = os.environ.get("LOGDIFF_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"LOGDIFF_THREADS: expected an integer, got {env!r}") from None
    return 1

