"""Command-line entry points: run scenarios, compare runs, the LQR oracle and a CSV checker.

Exit codes: 0 success, 1 user or file error, 2 safety violation, 3 numerical
blowup.
"""
import argparse
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

from .config import parse_config
from .errors import ConfigError
from .sim import column_names, run_lqr_oracle, run_scenario

EXIT_OK, EXIT_USER, EXIT_SAFETY, EXIT_BLOWUP = 0, 1, 2, 3
STATUS_EXIT = {"ok": EXIT_OK, "safety_violation": EXIT_SAFETY, "blowup": EXIT_BLOWUP}
OUTPUT_FILES = ("resolved-config.json", "trajectory.csv", "summary.json")
THETA_TOL = 1e-2


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _json_default(obj):
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if hasattr(obj, "item"):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _clean(obj):
    """Replace non-finite floats with None so summaries stay strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def write_json(path, data):
    text = json.dumps(_clean(json.loads(json.dumps(data, default=_json_default))), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n")


def load_config(path, dt=None, duration=None):
    cfg = parse_config(path)
    changes = {}
    if dt is not None:
        changes["dt"] = dt
    if duration is not None:
        changes["duration"] = duration
    return cfg.replace(**changes) if changes else cfg


def run(config_path, out_dir, dt=None, duration=None):
    """Run one scenario and write its three artifacts; returns (exit code, message)."""
    try:
        cfg = load_config(config_path, dt, duration)
    except (FileNotFoundError, ConfigError) as exc:
        return EXIT_USER, f"{config_path}: {exc}"
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = _now()
    t0 = time.perf_counter()
    result = run_scenario(cfg)
    elapsed = time.perf_counter() - t0
    (out / "resolved-config.json").write_text(cfg.to_json())
    result.log.to_csv(out / "trajectory.csv")
    summary = dict(result.summary)
    summary["manifest"] = {"config_path": str(config_path), "output_dir": str(out), "scenario": cfg.name,
                           "config_hash": cfg.digest(), "started": started, "finished": _now(),
                           "wall_time_s": round(elapsed, 3)}
    write_json(out / "summary.json", summary)
    code = STATUS_EXIT[result.status]
    min_h = summary.get("min_h")
    msg = f"{cfg.name}: {result.status}, min_h={min_h:.6g}" if min_h is not None else f"{cfg.name}: {result.status}"
    if result.error:
        msg += f" ({result.error['message']})"
    return code, msg


def _job(args):
    return run(*args)


def _cmd_run(ns):
    paths = ns.config
    if len(paths) == 1:
        out = ns.out or str(Path("runs") / Path(paths[0]).stem)
        jobs = [(paths[0], out, ns.dt, ns.duration)]
    else:
        root = Path(ns.out or "runs")
        stems = [Path(p).stem for p in paths]
        if len(set(stems)) != len(stems):
            print("error: configs must have distinct file names when run together", file=sys.stderr)
            return EXIT_USER
        jobs = [(p, str(root / s), ns.dt, ns.duration) for p, s in zip(paths, stems)]
    if len(jobs) == 1 or ns.jobs == 1:
        results = [_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=ns.jobs) as pool:
            results = list(pool.map(_job, jobs))
    worst = EXIT_OK
    for (code, msg), job in zip(results, jobs):
        stream = sys.stdout if code == EXIT_OK else sys.stderr
        print(f"{msg} -> {job[1]}" if code != EXIT_USER else f"error: {msg}", file=stream)
        worst = max(worst, code)
    return worst


def load_summary(run_dir):
    path = Path(run_dir) / "summary.json"
    if not path.is_file():
        raise FileNotFoundError(f"no summary.json in {run_dir}")
    return json.loads(path.read_text())


COMPARE_FIELDS = ("min_h", "argmin_t", "theta_err_final", "J_total", "sigmin_grid_inf")


def compare(run_a, run_b):
    """Side-by-side metrics of two runs with per-case and contrast verdicts."""
    a, b = load_summary(run_a), load_summary(run_b)
    rows = []
    for key in COMPARE_FIELDS:
        va, vb = a.get(key), b.get(key)
        delta = vb - va if isinstance(va, (int, float)) and isinstance(vb, (int, float)) else None
        rows.append({"metric": key, "a": va, "b": vb, "delta": delta})

    def verdicts(s):
        min_h = s.get("min_h")
        th = s.get("theta_err_final")
        return {"status": s.get("status"),
                "safe": bool(min_h is not None and min_h > 0 and s.get("safety_violations", 0) == 0),
                "incursions": (s.get("incursions") or {}).get("count", 0),
                "theta_converged": bool(th is not None and th < THETA_TOL)}

    ha, hb = a.get("min_h"), b.get("min_h")
    contrast = None if ha is None or hb is None else {
        "b_nearer_obstacle": bool(hb < ha), "min_h_gap": ha - hb}
    return {"a": {"dir": str(run_a), "name": a.get("name"), "mode": a.get("mode"), **verdicts(a)},
            "b": {"dir": str(run_b), "name": b.get("name"), "mode": b.get("mode"), **verdicts(b)},
            "metrics": rows, "contrast": contrast}


def _fmt(v):
    if v is None:
        return "-"
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def format_table(report):
    a, b = report["a"], report["b"]
    ha, hb = "A: " + str(a["name"]), "B: " + str(b["name"])
    w = max(22, len(ha) + 2, len(hb) + 2)
    lines = [f"{'metric':<18}{ha:>{w}}{hb:>{w}}{'B - A':>16}"]
    lines.append("-" * len(lines[0]))
    for r in report["metrics"]:
        lines.append(f"{r['metric']:<18}{_fmt(r['a']):>{w}}{_fmt(r['b']):>{w}}{_fmt(r['delta']):>16}")
    lines.append("-" * len(lines[0]))
    for key in ("mode", "status", "safe", "incursions", "theta_converged"):
        lines.append(f"{key:<18}{_fmt(a[key]):>{w}}{_fmt(b[key]):>{w}}")
    if report["contrast"] is not None:
        lines.append(f"verdict: B min_h {'<' if report['contrast']['b_nearer_obstacle'] else '>='} A min_h "
                     f"(gap {report['contrast']['min_h_gap']:.6g})")
    return "\n".join(lines)


def _cmd_compare(ns):
    try:
        report = compare(ns.run_a, ns.run_b)
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    print(format_table(report))
    if ns.json:
        write_json(ns.json, report)
    return EXIT_OK


def _cmd_oracle(ns):
    try:
        cfg = load_config(ns.config or "lqr_oracle.json", ns.dt, ns.duration)
        record = run_lqr_oracle(cfg, tolerance=ns.tolerance)
    except (FileNotFoundError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    print(f"P* = {record['P_star']:.10f}")
    print(f"Wc = {record['Wc_final']:.10f}  (rel err {record['rel_err_c']:.3e})")
    print(f"Wa = {record['Wa_final']:.10f}  (rel err {record['rel_err_a']:.3e})")
    print(f"{'converged' if record['converged'] else 'NOT converged'} within {record['tolerance']:.0%}")
    if ns.json:
        write_json(ns.json, record)
    return EXIT_OK if record["converged"] else EXIT_USER


def check_csv(path):
    """Validate a trajectory CSV; returns a list of problems (empty when valid)."""
    path = Path(path)
    if not path.is_file():
        return [f"file not found: {path}"]
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split(",")
        lines = fh.read().splitlines()
    n = sum(1 for c in header if c.startswith("x") and c[1:].isdigit())
    p = sum(1 for c in header if c.startswith("th") and c[2:].isdigit())
    L = sum(1 for c in header if c.startswith("wc") and c[2:].isdigit())
    m = 1 if "u" in header else sum(1 for c in header if c.startswith("u") and c[1:].isdigit())
    problems = []
    if min(n, p, L, m) < 1 or header != column_names(n, p, L, m):
        return [f"header does not match the fixed layout: {','.join(header)}"]
    nullable = {header.index(c) for c in ("z", "zhat", "h")}
    prev_t = -math.inf
    for i, line in enumerate(lines, start=2):
        fields = line.split(",")
        if len(fields) != len(header):
            problems.append(f"line {i}: {len(fields)} fields, expected {len(header)}")
            continue
        try:
            vals = [float(v) for v in fields]
        except ValueError:
            problems.append(f"line {i}: non-numeric field")
            continue
        bad = [header[j] for j, v in enumerate(vals) if not math.isfinite(v) and j not in nullable]
        if bad:
            problems.append(f"line {i}: non-finite values in {', '.join(bad)}")
        if not vals[0] > prev_t:
            problems.append(f"line {i}: time not strictly increasing")
        prev_t = vals[0]
        if len(problems) > 20:
            problems.append("too many problems; stopping")
            break
    if not lines:
        problems.append("no data rows")
    return problems


def _cmd_check(ns):
    problems = check_csv(ns.csv)
    if problems:
        for msg in problems:
            print(msg, file=sys.stderr)
        return EXIT_USER
    print(f"{ns.csv}: ok")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="bastion", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one or more scenario configs")
    p.add_argument("config", nargs="+", help="config JSON path or bundled preset name (e.g. case7_bas.json)")
    p.add_argument("--out", help="output directory (parent directory when several configs are given)")
    p.add_argument("--dt", type=float, help="override the integration step")
    p.add_argument("--duration", type=float, help="override the simulated horizon")
    p.add_argument("--jobs", type=int, default=None, help="parallel workers for several configs")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("compare", help="compare two run directories")
    p.add_argument("run_a")
    p.add_argument("run_b")
    p.add_argument("--json", help="also write the comparison record to this file")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("oracle-lqr", help="check the actor-critic against the scalar Riccati solution")
    p.add_argument("--config", help="scalar-linear config (default: bundled lqr_oracle.json)")
    p.add_argument("--dt", type=float)
    p.add_argument("--duration", type=float)
    p.add_argument("--tolerance", type=float, default=0.02)
    p.add_argument("--json", help="write the comparison record to this file")
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("check", help="validate a trajectory CSV")
    p.add_argument("csv")
    p.set_defaults(func=_cmd_check)
    return parser


def main(argv=None):
    ns = build_parser().parse_args(argv)
    return ns.func(ns)
