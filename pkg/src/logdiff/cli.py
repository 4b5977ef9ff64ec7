"""Command-line entry point: ``logdiff {solve,transport,verify,sweep,inspect}``.

Exit status: 0 on success, 1 when an enabled check fails or the solver
aborts, 2 on a malformed configuration or unreadable input.  Configs are
validated before anything is written.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .experiments import (SUITES, SWEEP_AXES, ConfigError, ExperimentResult, _dumps, execute, load_spec,
                          resolve_threads, sweep, write_artifacts)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _parse_suites(text: str | None):
    if text is None:
        return None
    names = tuple(s.strip() for s in text.split(",") if s.strip())
    bad = [s for s in names if s not in SUITES]
    if bad:
        raise ConfigError(f"--suite: unknown suite(s) {bad} (expected some of {SUITES})")
    return names


def _load(args, default_suites=()):
    spec = load_spec(args.config)
    suites = _parse_suites(getattr(args, "suite", None))
    if suites is None:
        suites = spec.suites or default_suites
    kw = {"suites": tuple(suites)}
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    return spec.with_(**kw)


def _out_dir(args, spec) -> Path | None:
    target = args.out or spec.out
    return Path(target) if target else None


def _print_result(res: ExperimentResult) -> None:
    if res.error:
        print(f"{res.spec.name}: ERROR {res.error}")
    for name, r in res.suites.items():
        print(f"{res.spec.name}: {name:<13} {'PASS' if r.get('passed') else 'FAIL'}")
    print(f"{res.spec.name}: {'PASS' if res.passed else 'FAIL'}")


def cmd_solve(args, default_suites=()) -> int:
    spec = _load(args, default_suites)
    out = _out_dir(args, spec)
    res = execute(spec)
    if out is not None:
        write_artifacts(res, out)
    _print_result(res)
    return res.exit_status


def cmd_verify(args) -> int:
    return cmd_solve(args, default_suites=SUITES)


def cmd_transport(args) -> int:
    from .backlund import l1_relation, transport_residual, transport_trajectory, v_integral
    from .grid import integrate

    spec = _load(args)
    if spec.nonlinearity.kind.value != "log1p":
        raise ConfigError("nonlinearity.kind: the transport map needs 'log1p'")
    out = _out_dir(args, spec)
    res = execute(spec)
    if res.trajectory is None:
        _print_result(res)
        return EXIT_FAIL
    tr = res.trajectory
    tfs = transport_trajectory(tr)
    t_res, r = transport_residual(tr)
    rows = []
    for tf, u in zip(tfs, tr.fields):
        m = integrate(u)
        rows.append({"t": tf.t, "shift": tf.shift, "mass": m, "l1_relation": l1_relation(tf),
                     "v_integral": v_integral(tf), "x_log_integral": integrate(u.with_values(
                         (1 + u.values) * np.log1p(u.values)))})
    rel = max(abs(row["l1_relation"] - row["mass"]) / max(row["mass"], 1e-300) for row in rows)
    ok = rel <= 1e-4 if rows[0]["mass"] > 0 else True
    if out is not None:
        write_artifacts(res, out)
        tdir = out / "transport"
        tdir.mkdir(exist_ok=True)
        for k, tf in enumerate(tfs):
            tf.to_csv(tdir / f"record_{k:05d}.csv")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "residual_l2"])
        w.writerows([[repr(float(a)), repr(float(b))] for a, b in zip(t_res, r)])
        (out / "transport_residual.csv").write_text(buf.getvalue())
        (out / "transport_report.json").write_text(_dumps({"passed": ok, "l1_relation_rel_error": rel,
                                                           "records": rows}))
    print(f"{spec.name}: transport l1 relation rel. error {rel:.3e} {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok and res.passed else EXIT_FAIL


def cmd_sweep(args) -> int:
    spec = _load(args)
    if args.axis not in SWEEP_AXES:
        raise ConfigError(f"--axis: expected one of {SWEEP_AXES}")
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values: expected comma-separated numbers, got {args.values!r}") from None
    if args.axis == "n":
        values = [int(v) for v in values]
    if not values:
        raise ConfigError("--values: empty")
    threads = resolve_threads(args.threads)
    out = _out_dir(args, spec)
    rep = sweep(spec, args.axis, values, threads)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.json").write_text(_dumps(rep))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["value", "error", "order"])
        for row in rep["convergence"]:
            w.writerow([repr(row["value"]), repr(row["error"]), repr(row.get("order", float("nan")))])
        (out / "convergence.csv").write_text(buf.getvalue())
    for p in rep["points"]:
        print(f"{args.axis}={p['value']}: {'PASS' if p['passed'] else 'FAIL'}" + (f" ({p['error']})" if p.get("error") else ""))
    for row in rep["convergence"]:
        order = f"{row['order']:.3f}" if "order" in row else "-"
        print(f"  {row['value']!r:>12} error {row['error']:.3e} order {order}")
    return EXIT_OK if all(p["passed"] for p in rep["points"]) else EXIT_FAIL


def cmd_inspect(args) -> int:
    path = Path(args.path)
    if not path.exists():
        raise ConfigError(f"{path}: no such file")
    if path.suffix == ".csv":
        lines = path.read_text().splitlines()
        print(f"{path}: {len(lines) - 1} rows, columns {lines[0]}")
        for line in lines[1:2] + lines[-1:]:
            print("  " + line)
        return EXIT_OK
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from None
    if "snapshots" in d:
        times = [s["t"] for s in d["snapshots"]]
        print(f"{path}: trajectory n={d['grid']['n']} L={d['grid']['L']} records={len(times)} "
              f"t=[{times[0]!r}, {times[-1]!r}] nonlinearity={d['nonlinearity']['kind']}")
    elif "values" in d and "grid" in d:
        v = np.asarray(d["values"])
        h = 2 * d["grid"]["L"] / d["grid"]["n"]
        print(f"{path}: field n={d['grid']['n']} L={d['grid']['L']} t={d.get('t')!r} "
              f"min={v.min()!r} max={v.max()!r} mass={h * v.sum()!r}")
    elif "suites" in d:
        print(f"{path}: report {d.get('name')} {'PASS' if d.get('passed') else 'FAIL'}")
        for name, r in d["suites"].items():
            print(f"  {name:<13} {'PASS' if r.get('passed') else 'FAIL'}")
    else:
        print(f"{path}: JSON with keys {sorted(d)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="logdiff", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, suites=True):
        p.add_argument("--config", required=True, help="TOML or JSON experiment spec")
        p.add_argument("--out", help="output directory (overrides the spec)")
        p.add_argument("--seed", type=int, help="override the spec seed")
        p.add_argument("--threads", type=int, help="worker count (fallback: LOGDIFF_THREADS)")
        if suites:
            p.add_argument("--suite", help=f"comma-separated subset of {','.join(SUITES)}")

    p = sub.add_parser("solve", help="evolve and run the spec's suites")
    common(p)
    p.set_defaults(func=cmd_solve)
    p = sub.add_parser("verify", help="evolve and run all suites unless restricted")
    common(p)
    p.set_defaults(func=cmd_verify)
    p = sub.add_parser("transport", help="evolve and export the transport-side fields")
    common(p)
    p.set_defaults(func=cmd_transport)
    p = sub.add_parser("sweep", help="run the spec along a parameter axis")
    common(p, suites=False)
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", required=True, help="comma-separated axis values")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("inspect", help="summarize a snapshot, trajectory, report or CSV")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:  # argparse usage errors are config errors
        return EXIT_CONFIG if e.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
