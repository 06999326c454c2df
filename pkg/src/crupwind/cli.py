"""Command line entry point: ``crupwind run | study | check``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, parse_config, write_config

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def _set_deterministic():
    # single-threaded BLAS so reductions do not depend on thread scheduling
    from threadpoolctl import threadpool_limits

    threadpool_limits(1)
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = "1"


def _load(args) -> RunConfig:
    cfg = parse_config(args.config) if args.config else RunConfig()
    overrides = {}
    if args.mesh:
        if args.mesh.isdigit():
            overrides.update(mesh_n=int(args.mesh), mesh_file="")
        else:
            overrides["mesh_file"] = args.mesh
    if args.out:
        overrides["out_dir"] = args.out
    if args.deterministic:
        overrides["deterministic"] = True
    return cfg.replace(**overrides) if overrides else cfg


def cmd_run(args) -> int:
    from .runner import run

    cfg = _load(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_config(cfg, out / "config.txt")
    res = run(cfg)
    print(json.dumps({"ok": res.ok, "steps": res.steps, "h": res.h, "dt": res.dt,
                      "failure": res.failure and {k: res.failure[k] for k in ("step", "reason")},
                      "out": str(out)}))
    return EXIT_OK if res.ok else EXIT_FAILED


def cmd_study(args) -> int:
    from .runner import convergence_study

    cfg = _load(args)
    levels = tuple(int(n) for n in args.levels.split(","))
    try:
        result = convergence_study(cfg, levels, args.dt_rule, out_dir=cfg.out_dir)
    except RuntimeError as e:
        print(f"study aborted: {e}", file=sys.stderr)
        return EXIT_FAILED
    print(result.table())
    return EXIT_OK


def cmd_check(args) -> int:
    from .checks import run_all

    results = run_all(quick=args.quick)
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--mesh", help="structured subdivision count or a Gmsh 2.2 file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--deterministic", action="store_true", help="single-threaded linear algebra")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="crupwind", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="integrate one configuration").set_defaults(func=cmd_run)
    st = sub.add_parser("study", parents=[common], help="convergence study over structured meshes")
    st.add_argument("--levels", default="2,4,8", help="comma separated subdivision counts")
    st.add_argument("--dt-rule", default="h2", choices=("h", "h2"))
    st.set_defaults(func=cmd_study)
    ck = sub.add_parser("check", parents=[common], help="run the invariant suite")
    ck.add_argument("--quick", action="store_true", help="skip the short time-stepping runs")
    ck.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.deterministic or (args.config and parse_config(args.config).deterministic):
            _set_deterministic()
        return args.func(args)
    except (ConfigError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
