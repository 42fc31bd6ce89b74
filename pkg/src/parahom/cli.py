"""Command line entry point.

    parahom run --config PATH [--seed U64] [--threads N] [--out DIR]
    parahom verify [--only acc3,acc7] [--threads N] [--out DIR]

``run`` writes <stem>.csv and <stem>.json into DIR (default: the current
directory). ``verify`` runs the shipped acceptance configs and prints one
PASS/FAIL line per config.

Exit codes: 0 success, 1 configuration or usage error, 2 failed scientific check.
"""

from __future__ import annotations

import argparse
import re
import sys
import tempfile
import time
from importlib import resources
from pathlib import Path

from . import __version__
from .config import Config
from .errors import ConfigurationError, InvariantViolation, SolveError
from .experiments import RUNNERS, ExperimentResult
from .parallel import set_default_threads
from .report import emit_report

EXIT_OK, EXIT_CONFIG, EXIT_CHECK = 0, 1, 2
_GRID_KEYS = ("h", "dt", "cfl")


class _Usage(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _Usage(message)


def _qualify(exc: ConfigurationError) -> str:
    # solver-level keys are bare ("dt"); point them at the config section
    if exc.key in _GRID_KEYS:
        return f"grid.{exc.key}: {str(exc).split(': ', 1)[-1]}"
    return str(exc)


def execute(cfg: Config, seed=None, threads: int = 1) -> tuple:
    """Run one experiment. Returns (result, csv bytes, json bytes)."""
    kind = cfg.kind
    seed = cfg.seed if seed is None else seed
    if seed < 0 or seed >= 2**64:
        raise ConfigurationError("seed", "must be an unsigned 64-bit integer")
    set_default_threads(threads)
    res: ExperimentResult = RUNNERS[kind](cfg, seed, threads)
    csv = emit_report(res.rows, "csv", res.header)
    echo = cfg.echo()
    # the thread count never changes results, so it stays out of the echo
    echo.get("experiment", {}).pop("threads", None)
    meta = {"kind": kind, "seed": seed, "config": echo, "metrics": res.metrics, "checks": res.checks,
            "passed": res.passed}
    js = emit_report(res.rows, "json", meta=meta)
    return res, csv, js


def _write(out: Path, stem: str, csv: bytes, js: bytes):
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{stem}.csv").write_bytes(csv)
    (out / f"{stem}.json").write_bytes(js)


def _threads(args, cfg=None) -> int:
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigurationError("threads", "must be >= 1")
        return args.threads
    if cfg is not None:
        n = cfg.int("experiment", "threads", 1)
        if n < 1:
            raise ConfigurationError("experiment.threads", "must be >= 1")
        return n
    return 1


def cmd_run(args) -> int:
    cfg = Config.load(args.config)
    res, csv, js = execute(cfg, args.seed, _threads(args, cfg))
    _write(Path(args.out), Path(args.config).stem, csv, js)
    for c in res.checks:
        if not c["pass"]:
            print(f"FAILED {c['check']}", file=sys.stderr)
    return EXIT_OK if res.passed else EXIT_CHECK


def shipped_configs(prefix: str = "") -> list:
    root = resources.files("parahom") / "configs"
    found = [p for p in root.iterdir() if p.name.endswith(".ini") and p.name.startswith(prefix)]

    def order(p):
        m = re.match(r"([a-z]+)(\d*)(.*)", p.name)
        return m.group(1), int(m.group(2) or 0), m.group(3)
    return sorted(found, key=order)


def _determinism(cfg: Config, base_dir, seed) -> dict:
    """Run the target config twice at threads=1 and once at threads=8; compare bytes."""
    target = cfg.str("determinism", "config")
    path = Path(base_dir) / target
    inner = Config.load(path)
    outs = [execute(inner, seed, t)[1:] for t in (1, 1, 8)]
    same_seed = outs[0] == outs[1]
    same_threads = outs[0] == outs[2]
    return {"config": target, "repeat_identical": same_seed, "threads_identical": same_threads,
            "pass": same_seed and same_threads}


def cmd_verify(args) -> int:
    only = [s.strip() for s in args.only.split(",")] if args.only else None
    status = EXIT_OK
    out = Path(args.out) if args.out else Path(tempfile.mkdtemp(prefix="parahom-verify-"))
    for p in shipped_configs("acc"):
        stem = p.name[:-4]
        tag = stem.split("_")[0]
        if only and stem not in only and tag not in only:
            continue
        t0 = time.perf_counter()
        with resources.as_file(p) as path:
            cfg = Config.load(path)
            try:
                if cfg.parser.has_section("determinism"):
                    r = _determinism(cfg, path.parent, args.seed)
                    ok, detail = r["pass"], f"repeat={r['repeat_identical']} threads={r['threads_identical']}"
                else:
                    res, csv, js = execute(cfg, args.seed, _threads(args, cfg))
                    _write(out, stem, csv, js)
                    ok = res.passed
                    bad = [c["check"] for c in res.checks if not c["pass"]]
                    detail = f"{len(res.checks)} checks" + (f", failed: {'; '.join(bad)}" if bad else "")
            except (InvariantViolation, SolveError) as exc:
                ok, detail = False, f"invariant violated: {exc}"
        dt = time.perf_counter() - t0
        print(f"{'PASS' if ok else 'FAIL'} {stem} ({dt:.1f}s) {detail}", flush=True)
        if not ok:
            status = EXIT_CHECK
    return status


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="parahom", description="Homogenization experiments for random parabolic equations.")
    ap.add_argument("--version", action="version", version=f"parahom {__version__}")
    sub = ap.add_subparsers(dest="command")
    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("--config", required=True)
    v = sub.add_parser("verify", help="run the shipped acceptance configs")
    v.add_argument("--only", default=None, help="comma separated config names or tags (acc3, acc1_d2)")
    for p in (r, v):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--out", default=None if p is v else ".")
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    # bare flags mean "run"
    if argv and argv[0].startswith("--config"):
        argv = ["run"] + argv
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise _Usage("a command is required (run or verify)")
        if args.command == "run":
            return cmd_run(args)
        return cmd_verify(args)
    except _Usage as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigurationError as exc:
        print(f"configuration error: {_qualify(exc)}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvariantViolation, SolveError) as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
