"""Command-line scenario runner.

    gpebo --config power-load-change --out runs/ --check
    gpebo --config my.ini --override observer.gamma=1e6 --out trace.csv

``--config`` takes a file path or the name of a packaged scenario and may be
repeated. A scenario with ``[variants]`` expands into one run per variant.
With a single run ``--out`` is the trace file; with several it is a
directory receiving ``<scenario>-<variant>.csv``. Each trace gets a sibling
``.summary.json``.

Exit status: 0 success, 1 invariant check failed, 2 bad configuration,
3 integration failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import __version__
from .config import ConfigError, load_config, load_configs, packaged_scenarios
from .kernels import BACKEND
from .numerics import IntegrationError
from .scenario import run_scenario

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_INTEGRATION, EXIT_IO = 0, 1, 2, 3, 4


@dataclass
class Job:
    cfg: object
    trace: Optional[Path]
    check: bool

    @property
    def summary_path(self) -> Optional[Path]:
        return None if self.trace is None else self.trace.with_suffix(".summary.json")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gpebo", description="Run GPEBO observer scenarios.")
    p.add_argument("--config", action="append", metavar="PATH",
                   help="scenario file or packaged scenario name (repeatable)")
    p.add_argument("--out", metavar="PATH", help="trace file, or directory when several runs are produced")
    p.add_argument("--check", action="store_true", help="evaluate invariants inline; exit 1 if any fails")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted override such as observer.gamma=1e6 (repeatable)")
    p.add_argument("--variant", metavar="NAME", help="run only this variant of the scenario")
    p.add_argument("--quiet", action="store_true", help="print nothing on success")
    p.add_argument("--batch", action="store_true", help="run independent scenarios concurrently")
    p.add_argument("--jobs", type=int, default=None, metavar="N", help="worker processes for --batch")
    p.add_argument("--list", action="store_true", help="list packaged scenarios and exit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({BACKEND} kernels)")
    return p


def _plan(args) -> list[Job]:
    cfgs = []
    for path in args.config:
        if args.variant is not None:
            cfgs.append(load_config(path, args.override, args.variant))
        else:
            cfgs.extend(load_configs(path, args.override))
    jobs = []
    if args.out is None:
        for cfg in cfgs:
            jobs.append(Job(cfg, Path(cfg.trace) if cfg.trace else None, args.check))
    elif len(cfgs) == 1:
        jobs.append(Job(cfgs[0], Path(args.out), args.check))
    else:
        out = Path(args.out)
        for cfg in cfgs:
            jobs.append(Job(cfg, out / f"{cfg.label}.csv", args.check))
    labels = [j.cfg.label for j in jobs]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"duplicate run labels {sorted(labels)}; give the scenarios distinct names")
    return jobs


def _execute(job: Job):
    """Run one job; returns ``(summary, error_code, message)``."""
    try:
        if job.trace is not None:
            job.trace.parent.mkdir(parents=True, exist_ok=True)
        summary, _ = run_scenario(job.cfg, job.trace, check=job.check)
        if job.summary_path is not None:
            job.summary_path.write_text(summary.to_json())
    except IntegrationError as exc:
        return None, EXIT_INTEGRATION, f"{job.cfg.label}: integration failed: {exc}"
    except ValueError as exc:  # domain errors raised inside the plant models
        return None, EXIT_INTEGRATION, f"{job.cfg.label}: {exc}"
    except OSError as exc:
        return None, EXIT_IO, f"{job.cfg.label}: {exc}"
    return summary, EXIT_OK, None


def _describe(s) -> str:
    err = ", ".join(f"{e:.3g}" for e in s.final_error) or "-"
    tc = "-" if s.t_c is None else f"{s.t_c:.6g}"
    checks = ""
    if s.invariants:
        bad = [k for k, v in s.invariants.items() if not v]
        checks = "  checks=ok" if not bad else f"  checks=FAILED({', '.join(bad)})"
    return (f"{s.scenario}: steps={s.steps}  final_error=[{err}]  t_c={tc}  "
            f"max|Delta|={s.max_abs_delta:.3g}{checks}  wall={s.wall_clock_s:.3f}s")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list:
        print("\n".join(packaged_scenarios()))
        return EXIT_OK
    if not args.config:
        parser.error("--config is required")
    try:
        jobs = _plan(args)
    except ConfigError as exc:
        print(f"gpebo: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.batch and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_execute, jobs))
    else:
        results = [_execute(j) for j in jobs]

    status = EXIT_OK
    for summary, code, msg in results:
        if msg is not None:
            print(f"gpebo: error: {msg}", file=sys.stderr)
            status = max(status, code)
            continue
        if summary.invariants and not summary.ok:
            bad = [k for k, v in summary.invariants.items() if not v]
            print(f"gpebo: check failed: {summary.scenario}: {', '.join(bad)}", file=sys.stderr)
            status = max(status, EXIT_CHECK)
        for note in summary.warnings:
            print(f"gpebo: warning: {summary.scenario}: {note}", file=sys.stderr)
        if not args.quiet:
            print(_describe(summary))
    return status


if __name__ == "__main__":
    sys.exit(main())
