"""Command line interface.

    ionthresh run    --config C --out DIR [--jobs N] [--seed-override S]
    ionthresh sweep  --config C --out DIR [--axis A] [--jobs N] [--seed-override S]
    ionthresh report DIR

Exit codes: 0 success, 2 invalid configuration or arguments, 3 solver
failure, 4 a certificate or check failed, 5 partial sweep failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import shutil
import sys
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, config_hash, load
from .experiments import Job, axes_for, csv_schema, finalize, jobs_for, run_job

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_CHECK = 4
EXIT_PARTIAL = 5

JOBS_ENV = "IONTHRESH_JOBS"
MANIFEST = "manifest.json"
POINTS = "points"


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (tuple, set)):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, default=_jsonable) + "\n"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _fmt(value) -> str:
    if value is None or value == "":
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    """Deterministic CSV: fixed column order, repr floats, LF line endings."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        extra = set(row) - set(columns)
        if extra:
            raise ValueError(f"row has undocumented columns {sorted(extra)}")
        w.writerow([_fmt(row.get(c, "")) for c in columns])
    path.write_text(buf.getvalue())


def _worker_count(arg: int | None) -> int:
    if arg is not None:
        if arg < 1:
            raise ConfigError("--jobs", "must be a positive integer")
        return arg
    env = os.environ.get(JOBS_ENV)
    if env is None or env == "":
        return 1
    try:
        n = int(env)
    except ValueError as exc:
        raise ConfigError(JOBS_ENV, f"expected a positive integer, got {env!r}") from exc
    if n < 1:
        raise ConfigError(JOBS_ENV, f"expected a positive integer, got {env!r}")
    return n


def _run_one(cfg: dict, job: Job) -> tuple[str, dict | None, str | None, float]:
    t0 = time.perf_counter()
    try:
        res = run_job(cfg, job)
        return job.key, res, None, time.perf_counter() - t0
    except Exception as exc:  # recorded per point; the sweep decides the exit code
        return job.key, None, f"{type(exc).__name__}: {exc}", time.perf_counter() - t0


def execute(cfg: dict, out: Path, *, workers: int, resume: bool, seed_source: str,
            mode: str, stream=None) -> int:
    """Run all jobs of ``cfg`` into ``out`` and merge them."""
    stream = stream or sys.stderr
    out.mkdir(parents=True, exist_ok=True)
    points = out / POINTS
    chash = config_hash(cfg)
    mpath = out / MANIFEST
    previous = {}
    if mpath.exists():
        old = json.loads(mpath.read_text())
        if resume:
            if old.get("config_sha256") != chash:
                raise ConfigError("--out", f"{out} holds results for a different configuration")
            previous = old.get("jobs", {})
    if not resume and points.exists():
        shutil.rmtree(points)
    points.mkdir(exist_ok=True)

    jobs = jobs_for(cfg)
    manifest = {
        "tool": "ionthresh",
        "version": __version__,
        "mode": mode,
        "experiment": cfg["experiment"],
        "config": cfg,
        "config_sha256": chash,
        "seed": cfg["seed"],
        "seed_source": seed_source,
        "tolerance": cfg["tolerance"],
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "jobs": {},
        "files": {},
        "checks": {},
        "status": "running",
    }
    results: dict[str, dict] = {}
    pending = []
    for job in jobs:
        rec = previous.get(job.key)
        p = points / job.filename
        if rec and rec.get("status") == "done" and p.exists() and _sha256(p) == rec.get("sha256"):
            results[job.key] = json.loads(p.read_text())["result"]
            manifest["jobs"][job.key] = rec
        else:
            pending.append(job)
    if len(pending) < len(jobs):
        print(f"resuming: {len(jobs) - len(pending)} of {len(jobs)} points already done", file=stream)

    def record(key, res, err, secs):
        job = next(j for j in jobs if j.key == key)
        if err is None:
            p = points / job.filename
            _write_atomic(p, _dump({"job": job.to_dict(), "result": res}))
            results[key] = json.loads(p.read_text())["result"]
            manifest["jobs"][key] = {"status": "done", "file": f"{POINTS}/{job.filename}",
                                     "sha256": _sha256(p), "seconds": round(secs, 3)}
            print(f"done   {key} ({secs:.2f} s)", file=stream)
        else:
            manifest["jobs"][key] = {"status": "failed", "error": err, "seconds": round(secs, 3)}
            print(f"FAILED {key}: {err}", file=stream)
        _write_atomic(mpath, _dump(manifest))

    _write_atomic(mpath, _dump(manifest))
    if workers <= 1 or len(pending) <= 1:
        for job in pending:
            record(*_run_one(cfg, job))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_run_one, cfg, job) for job in pending]
            for fut in as_completed(futs):
                record(*fut.result())

    failed = [k for k, r in manifest["jobs"].items() if r["status"] != "done"]
    if failed:
        manifest["status"] = "failed" if len(failed) == len(jobs) or mode == "run" else "partial"
        manifest["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        _write_atomic(mpath, _dump(manifest))
        print(f"{len(failed)} of {len(jobs)} points failed", file=stream)
        return EXIT_SOLVER if manifest["status"] == "failed" else EXIT_PARTIAL

    try:
        outcome = finalize(cfg, results)
    except ValueError as exc:
        manifest["status"] = "check-failed"
        manifest["error"] = str(exc)
        _write_atomic(mpath, _dump(manifest))
        print(f"check failed: {exc}", file=stream)
        return EXIT_CHECK

    exp = cfg["experiment"]
    columns = csv_schema()["tables"][exp]["columns"]
    csv_path = out / f"{exp}.csv"
    write_csv(csv_path, columns, outcome.rows)
    rep_path = out / "report.json"
    _write_atomic(rep_path, _dump({"experiment": exp, "checks": outcome.checks, "report": outcome.report}))
    manifest["files"] = {p.name: _sha256(p) for p in (csv_path, rep_path)}
    manifest["checks"] = outcome.checks
    ok = all(c["passed"] for c in outcome.checks.values())
    manifest["status"] = "complete" if ok else "check-failed"
    manifest["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    _write_atomic(mpath, _dump(manifest))
    for name, c in outcome.checks.items():
        print(f"{'PASS' if c['passed'] else 'FAIL'} {name}: value={c['value']:.6g} limit={c['limit']:.6g}",
              file=stream)
    return EXIT_OK if ok else EXIT_CHECK


# ----------------------------------------------------------------------------
# report
# ----------------------------------------------------------------------------

def _num(text: str) -> str:
    try:
        x = float(text)
    except ValueError:
        return text
    if text.lstrip("-").isdigit():
        return text
    return f"{x:.10g}" if math.isfinite(x) else text


def render_report(out: Path) -> str:
    """Stable plain-text summary of an output directory."""
    mpath = out / MANIFEST
    if not mpath.exists():
        raise ConfigError("DIR", f"no {MANIFEST} in {out}")
    man = json.loads(mpath.read_text())
    for name, digest in man.get("files", {}).items():
        p = out / name
        if not p.exists() or _sha256(p) != digest:
            raise ConfigError("DIR", f"{name} does not match the hash recorded in the manifest")
    for key, rec in man.get("jobs", {}).items():
        if rec.get("status") == "done" and _sha256(out / rec["file"]) != rec["sha256"]:
            raise ConfigError("DIR", f"point file for {key} does not match the manifest")
    lines = [
        f"experiment: {man['experiment']}",
        f"config sha256: {man['config_sha256']}",
        f"seed: {man['seed']} ({man['seed_source']})",
        f"tolerance: {man['tolerance']:.3g}",
        f"status: {man['status']}",
    ]
    jobs = man.get("jobs", {})
    done = sum(1 for r in jobs.values() if r["status"] == "done")
    lines.append(f"points: {done} done, {len(jobs) - done} failed")
    for key in sorted(jobs):
        if jobs[key]["status"] != "done":
            lines.append(f"  failed {key}: {jobs[key].get('error', '')}")
    if man.get("checks"):
        lines += ["", "checks:"]
        width = max(len(n) for n in man["checks"])
        for name in sorted(man["checks"]):
            c = man["checks"][name]
            lines.append(f"  {name:<{width}}  {'PASS' if c['passed'] else 'FAIL'}  "
                         f"value={c['value']:.6g}  limit={c['limit']:.6g}")
    csv_path = out / f"{man['experiment']}.csv"
    if csv_path.exists():
        rows = list(csv.reader(csv_path.read_text().splitlines()))
        table = [rows[0]] + [[_num(x) for x in r] for r in rows[1:]]
        widths = [max(len(r[i]) for r in table) for i in range(len(table[0]))]
        lines += ["", f"table ({csv_path.name}):"]
        for r in table:
            lines.append("  " + "  ".join(x.rjust(w) for x, w in zip(r, widths)).rstrip())
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ionthresh", description="Ionization-threshold experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("run", "run one experiment"), ("sweep", "run a resumable parameter sweep")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", required=True, help="JSON configuration file")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--jobs", type=int, default=None,
                       help=f"worker processes (default: ${JOBS_ENV} or 1)")
        s.add_argument("--seed-override", type=int, default=None, help="replace the configured seed")
        if name == "sweep":
            s.add_argument("--axis", default=None, help="sweep axis; must be one of the experiment's axes")
    r = sub.add_parser("report", help="summarize an output directory")
    r.add_argument("dir", help="output directory of run or sweep")
    r.add_argument("--write", action="store_true", help="also write report.txt into the directory")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        if args.command == "report":
            text = render_report(Path(args.dir))
            sys.stdout.write(text)
            if args.write:
                (Path(args.dir) / "report.txt").write_text(text)
            return EXIT_OK
        cfg = load(args.config)
        seed_source = "config"
        if args.seed_override is not None:
            if args.seed_override < 0:
                raise ConfigError("--seed-override", "must be nonnegative")
            cfg["seed"] = args.seed_override
            seed_source = "override"
        if args.command == "sweep" and args.axis is not None:
            axes = axes_for(cfg["experiment"])
            if args.axis not in axes:
                allowed = ", ".join(axes) if axes else "none"
                raise ConfigError("--axis", f"{args.axis!r} is not an axis of {cfg['experiment']} (allowed: {allowed})")
        workers = _worker_count(args.jobs)
        return execute(cfg, Path(args.out), workers=workers, resume=args.command == "sweep",
                       seed_source=seed_source, mode=args.command)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
