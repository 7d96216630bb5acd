"""Command line front end.

    hmm-elast <kind> --config FILE [--check] [--threads N] [--out DIR] [--filter PAT]

Kinds: solve, macro-conv, micro-conv, tensor-conv, spr, refine-opt,
compare-fe2, and acceptance (runs the acceptance criteria).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import io
from .config import ConfigError, StudyConfig, load_config
from .studies import STUDIES, StudyOutput, run_study

EXIT_OK, EXIT_ERROR, EXIT_CHECK = 0, 1, 2


def write_outputs(cfg: StudyConfig, kind: str, out: StudyOutput, check: bool = False) -> list[str]:
    """Write study.csv, report.txt and any extra tables/fields; return failed checks."""
    d = io.ensure_dir(cfg.out)
    io.write_csv(os.path.join(d, "study.csv"), out.header, out.rows)
    for name, (header, rows) in out.extra_tables.items():
        io.write_csv(os.path.join(d, name), header, rows)
    for name, (mesh, pv, ps, cs) in out.fields.items():
        io.write_vtk(os.path.join(d, name), mesh, pv, ps, cs)
    failed = []
    lines = [f"study {kind} on {cfg.benchmark}"] + list(out.notes)
    lines += [f"{k} = {io.fmt(v)}" for k, v in sorted(out.metrics.items())]
    if check:
        for key, chk in sorted(cfg.checks.items()):
            if key not in out.metrics:
                lines.append(f"check {key}: MISSING (expected {chk.describe()})")
                failed.append(key)
                continue
            v = out.metrics[key]
            ok = chk.passes(v)
            lines.append(f"check {key}: {'pass' if ok else 'FAIL'} measured {io.fmt(v)} expected {chk.describe()}")
            if not ok:
                failed.append(key)
    with open(os.path.join(d, "report.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return failed


def run_kind(cfg: StudyConfig, kind: str, check: bool = False) -> list[str]:
    return write_outputs(cfg, kind, run_study(cfg, kind), check)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hmm-elast", description="FE-HMM studies for 2D linear elasticity")
    p.add_argument("kind", choices=sorted(STUDIES) + ["acceptance"])
    p.add_argument("--config", help="study configuration file")
    p.add_argument("--check", action="store_true", help="compare metrics against the [check] section")
    p.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--filter", help="acceptance: run criteria matching this pattern")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.kind == "acceptance":
            from .acceptance import check_acceptance

            cfg = load_config(args.config) if args.config else None
            results = check_acceptance(cfg, args.filter)
            failed = [r.cid for r in results if not r.passed]
            print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
            return EXIT_CHECK if failed else EXIT_OK
        if not args.config:
            raise ConfigError("--config is required for study kinds")
        cfg = load_config(args.config)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1")
            cfg.threads = args.threads
        if args.out:
            cfg.out = args.out
        failed = run_kind(cfg, args.kind, args.check)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # solver and I/O failures
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    with open(os.path.join(cfg.out, "report.txt")) as fh:
        sys.stdout.write(fh.read())
    return EXIT_CHECK if failed else EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
