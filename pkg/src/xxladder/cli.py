"""Command-line entry point: ``xxladder <command> --spec run.yaml --out results/``.

Exit codes: 0 success, 2 invalid spec or arguments, 3 numerical failure. On a
non-zero exit a JSON error record is printed to stderr and, when the output
directory is writable, saved as ``error.json``.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import scipy.linalg as la

from . import __version__
from .config import ConfigError, ExperimentSpec, load_spec, parse_spec
from .evolve import KrylovConvergenceError
from .runner import COMMANDS, NumericalError, RunOutput, Table

THREADS_ENV = "XXLADDER_THREADS"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

log = logging.getLogger("xxladder")


def format_value(v) -> str:
    """Deterministic CSV cell text: integers as-is, floats with 12 significant digits."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if math.isnan(f):
            return "nan"
        if f == 0:
            return "0"  # folds -0.0
        return format(f, ".12g")
    return str(v)


def render_csv(table: Table) -> str:
    lines = [",".join(table.header)]
    lines += [",".join(format_value(v) for v in row) for row in table.rows]
    return "\n".join(lines) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def render_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_outputs(out: RunOutput, out_dir: Path, spec: ExperimentSpec, command: str, started: float) -> dict:
    """Write every artifact, then the manifest last."""
    checksums = {}
    files = {name: render_csv(t) for name, t in out.tables.items()}
    files.update(out.extra_files)
    files["summary.json"] = render_json(out.summary)
    for name in sorted(files):
        write_atomic(out_dir / name, files[name])
        checksums[name] = hashlib.sha256(files[name].encode()).hexdigest()
    finished = time.time()
    manifest = {
        "command": command,
        "spec_hash": spec.spec_hash(),
        "code_version": __version__,
        "started_utc": _dt.datetime.fromtimestamp(started, _dt.timezone.utc).isoformat(),
        "finished_utc": _dt.datetime.fromtimestamp(finished, _dt.timezone.utc).isoformat(),
        "wall_clock_s": round(finished - started, 3),
        "outputs": checksums,
    }
    write_atomic(out_dir / "manifest.json", render_json(manifest))
    return manifest


def resolve_threads(cli_value, spec: ExperimentSpec) -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {env!r}") from None
    elif cli_value is not None:
        value = cli_value
    else:
        value = spec.threads or 1
    if value < 1:
        raise ConfigError("thread count must be at least 1")
    return value


def _error(kind: str, exc: BaseException, out_dir, details=None) -> dict:
    record = {"error": kind, "type": type(exc).__name__, "message": str(exc), "details": details or []}
    print(json.dumps(_jsonable(record), sort_keys=True), file=sys.stderr)
    if out_dir is not None:
        try:
            write_atomic(Path(out_dir) / "error.json", render_json(record))
        except OSError:
            pass
    return record


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xxladder", description="Quench dynamics of XX chains and ladders.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--spec", type=Path, required=name != "page-table", help="YAML experiment spec")
        p.add_argument("--out", type=Path, default=None, help="output directory (default: spec 'output' or ./out)")
        p.add_argument("--seed", type=int, default=None, help="override the spec seed (u64)")
        p.add_argument("--threads", type=int, default=None, help=f"worker threads; {THREADS_ENV} overrides")
        p.add_argument("--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    started = time.time()
    out_dir = args.out
    try:
        spec = load_spec(args.spec) if args.spec else parse_spec({})
        if args.seed is not None:
            spec = parse_spec({**spec.model_dump(), "seed": args.seed})
        if out_dir is None:
            out_dir = Path(spec.output or "out")
        threads = resolve_threads(args.threads, spec)
        log.info("running %s with %d thread(s), spec %s", args.command, threads, spec.spec_hash()[:12])
        out = COMMANDS[args.command](spec, threads)
        write_outputs(out, Path(out_dir), spec, args.command, started)
    except ConfigError as exc:
        _error("validation", exc, out_dir, exc.details)
        return EXIT_CONFIG
    except (FloatingPointError, KrylovConvergenceError, la.LinAlgError, MemoryError, NumericalError) as exc:
        _error("numerical", exc, out_dir)
        return EXIT_NUMERICAL
    if args.command in ("oracle-check",):
        print(f"max |many-body - free-fermion| density deviation: {out.summary['max_density_deviation']:.3e}")
    if out.failure is not None:
        _error("numerical", out.failure, out_dir, out.failure.details)
        return EXIT_NUMERICAL
    log.info("wrote %d files to %s", len(out.tables) + 2, out_dir)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
