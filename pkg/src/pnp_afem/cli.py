"""Command line entry point ``pnp-afem``.

Exit codes: 0 success, 1 solver failure, 2 bad arguments.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .adapt import AdaptiveLoopError, adaptive_loop, fit_slope
from .io import export_vtk
from .mesh import write_mesh
from .problems import get_example

logger = logging.getLogger("pnp_afem")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

# thin layers at small eps need damped, re-entered Gummel sweeps on fine levels
EXAMPLE_DEFAULTS = {
    1: dict(relaxation=1.0, reenter_gummel=False),
    2: dict(relaxation=1.0, reenter_gummel=False),
    3: dict(relaxation=0.3, reenter_gummel=True),
}


def _positive_float(s):
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {s}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pnp-afem", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the adaptive loop on a benchmark example")
    run.add_argument("--example", type=int, choices=(1, 2, 3), required=True)
    run.add_argument("--epsilon", type=_positive_float, default=None,
                     help="Debye parameter (example 3 only; default 0.01)")
    run.add_argument("--max-dofs", type=int, default=100_000)
    run.add_argument("--theta", type=_positive_float, default=None)
    run.add_argument("--marking", choices=("max", "dorfler"), default="max")
    run.add_argument("--solver", choices=("two-grid", "full-gummel"), default="two-grid")
    run.add_argument("--initial-subdivision", type=int, default=2)
    run.add_argument("--relaxation", type=_positive_float, default=None,
                     help="Gummel under-relaxation (default per example)")
    run.add_argument("--reenter-gummel", action=argparse.BooleanOptionalAction, default=None)
    run.add_argument("--edge-variant", choices=("verbatim", "scaled"), default="verbatim")
    run.add_argument("--out", type=Path, default=Path("results.csv"))
    run.add_argument("--vtk-dir", type=Path, default=None)
    run.add_argument("--mesh-out", type=Path, default=None, help="write the final mesh here")
    run.add_argument("--seed", type=int, default=None,
                     help="recorded in the run metadata; the loop itself is deterministic")
    return parser


def _configure_logging():
    level = LOG_LEVELS.get(os.environ.get("PNP_AFEM_LOG", "error").lower(), logging.ERROR)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _report(hist, out):
    N = hist.column("N")
    for name in ("eta", "err_h1", "err_l2", "err_eps"):
        s = fit_slope(N, hist.column(name))
        label = "n/a" if s is None else f"{s:+.3f}"
        out.write(f"slope {name} vs N (last 5 levels): {label}\n")


def run(args) -> int:
    try:
        spec = get_example(args.example, args.epsilon)
    except ValueError as exc:
        print(f"pnp-afem: error: {exc}", file=sys.stderr)
        return 2
    if args.max_dofs < 1 or args.initial_subdivision < 1:
        print("pnp-afem: error: --max-dofs and --initial-subdivision must be positive", file=sys.stderr)
        return 2
    if args.theta is not None and args.theta > 1:
        print("pnp-afem: error: --theta must not exceed 1", file=sys.stderr)
        return 2
    opts = dict(EXAMPLE_DEFAULTS[args.example])
    if args.relaxation is not None:
        opts["relaxation"] = args.relaxation
    if args.reenter_gummel is not None:
        opts["reenter_gummel"] = args.reenter_gummel

    callback = None
    if args.vtk_dir is not None:
        args.vtk_dir.mkdir(parents=True, exist_ok=True)

        def callback(level, mesh, state, breakdown):
            export_vtk(mesh, state, args.vtk_dir / f"level_{level:03d}.vtk")

    status = 0
    try:
        hist = adaptive_loop(spec, max_dofs=args.max_dofs, theta=args.theta, marking=args.marking,
                             solver=args.solver, initial_subdivision=args.initial_subdivision,
                             edge_variant=args.edge_variant, callback=callback, **opts)
    except AdaptiveLoopError as exc:
        hist = exc.history
        print(f"pnp-afem: solver failure: {exc}", file=sys.stderr)
        status = 1
    hist.metadata["seed"] = args.seed
    hist.to_csv(args.out)
    if args.mesh_out is not None and hist.mesh is not None:
        write_mesh(hist.mesh, args.mesh_out)
    meta = hist.metadata
    print(f"example {args.example} eps={spec.epsilon:g} levels={len(hist)} "
          f"N={int(hist.column('N')[-1]) if len(hist) else 0} wall={meta.get('wall_time', 0.0):.2f}s "
          f"-> {args.out}")
    _report(hist, sys.stdout)
    return status


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return run(args)
    return 2


if __name__ == "__main__":
    sys.exit(main())
