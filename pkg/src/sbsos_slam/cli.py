"""Command line: ``sbsos-slam solve|compare|generate|certify``.

Exit codes: 0 success, 1 input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .bench import SCHEMA, compare, runs_to_csv, sbsos_report
from .certify import certify
from .datasets import NoiseSpec, SHAPES, synthesize, take_prefix
from .g2o import G2OError, read_estimate, read_g2o, write_estimate, write_g2o
from .pipeline import PipelineOptions, solve_graph
from .relaxation import RelaxationParams
from .sdp import BACKENDS, SolverConfig

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2

METRICS_HELP = """
error metrics: both trajectories are re-expressed in the frame of their first
pose before comparing.  translational_rmse is the root mean square of the
position differences; rotational_mae is the mean absolute wrapped heading
difference in radians.
"""


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_INPUT)


def _scale_arg(text: str):
    if text == "auto":
        return "auto"
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected 'auto' or a positive number") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("scale factor must be positive")
    return v


def _common(p: argparse.ArgumentParser):
    p.add_argument("--take", type=int, metavar="N", help="keep only the first N poses")
    p.add_argument("--d", type=int, default=1, help="multiplier degree bound (only 1 is supported)")
    p.add_argument("--tol", type=float, help="solver tolerance (default 1e-7, 1e-6 from 100 poses)")
    p.add_argument("--seed", type=int, default=0, help="master seed for all randomness")
    p.add_argument("--scale", type=_scale_arg, default="auto", help="'auto' or a length divisor")
    p.add_argument("--backend", choices=sorted(BACKENDS), default="admm", help="SDP backend")
    p.add_argument("--external-command", help="command for --backend external, with {problem} and {solution}")
    p.add_argument("--truth", type=Path, help="ground-truth vertices (g2o) for error metrics")
    p.add_argument("--out", type=Path, help="directory for output files")
    p.add_argument("--format", choices=("json", "csv"), default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sbsos-slam", description="Certifiably optimal planar SLAM.", epilog=METRICS_HELP,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve a g2o file and report", epilog=METRICS_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("path", type=Path)
    _common(p)

    p = sub.add_parser("compare", help="SBSOS against LM from random inits", epilog=METRICS_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("path", type=Path)
    p.add_argument("--trials", type=int, default=10, metavar="M")
    _common(p)

    p = sub.add_parser("generate", help="write a synthetic graph and its ground truth")
    p.add_argument("--shape", choices=sorted(SHAPES), default="manhattan")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--w", type=int, default=0)
    p.add_argument("--kappa", type=float, default=50.0, help="rotation concentration")
    p.add_argument("--sigma", type=float, default=0.05, help="translation and landmark noise std")
    p.add_argument("--no-noise", action="store_true", help="exact measurements")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--name", default="graph")

    p = sub.add_parser("certify", help="bound a given estimate against the relaxation")
    p.add_argument("path", type=Path)
    p.add_argument("estimate", type=Path)
    _common(p)
    return parser


def _load(args):
    if not args.path.exists():
        raise InputError(f"no such file: {args.path}")
    data = read_g2o(args.path)
    graph = data.graph
    truth = read_estimate(args.truth, graph) if args.truth else None
    if args.take is not None:
        if args.take < 1:
            raise InputError("--take must be positive")
        graph, truth = take_prefix(graph, truth, args.take)
    return graph, truth


def _options(args) -> PipelineOptions:
    if args.d != 1:
        raise InputError("only --d 1 is supported: higher multiplier degrees need Gram bases beyond degree one")
    if args.tol is not None and not args.tol > 0:
        raise InputError("--tol must be positive")
    solver = SolverConfig(backend=args.backend, seed=args.seed, external_command=args.external_command)
    return PipelineOptions(params=RelaxationParams(d=args.d), solver=solver, scale=args.scale, tol=args.tol)


def _emit(payload: dict, args, stem: str):
    text = runs_to_csv(payload["runs"]) if args.format == "csv" else json.dumps(payload, indent=2)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / f"{stem}.{args.format}").write_text(text if text.endswith("\n") else text + "\n")
        if args.format == "csv":
            (args.out / f"{stem}.json").write_text(json.dumps(payload, indent=2) + "\n")
    print(text.rstrip("\n"))


def cmd_solve(args) -> int:
    graph, truth = _load(args)
    result = solve_graph(graph, _options(args))
    report = sbsos_report(str(args.path), graph, result, truth)
    payload = {"schema": SCHEMA, "runs": [report.to_dict()], "flags": result.flags}
    if args.out and result.estimate is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "estimate.g2o").write_text(write_estimate(graph, result.estimate))
    _emit(payload, args, "report")
    return EXIT_OK if result.estimate is not None and result.solution.ok else EXIT_NUMERICAL


def cmd_compare(args) -> int:
    if args.trials < 0:
        raise InputError("--trials must be nonnegative")
    graph, truth = _load(args)
    payload = compare(str(args.path), graph, args.trials, args.seed, truth, _options(args))
    _emit(payload, args, "compare")
    sb = payload["runs"][0]
    return EXIT_NUMERICAL if sb["status"] in ("numerical-failure", "extraction-failure", "infeasible-detected") else EXIT_OK


def cmd_generate(args) -> int:
    if args.n < 2 or args.w < 0:
        raise InputError("need --n >= 2 and --w >= 0")
    if not (args.kappa > 0 and args.sigma > 0):
        raise InputError("--kappa and --sigma must be positive")
    s = args.sigma
    noise = NoiseSpec(args.kappa, s, s, s, s, seed=args.seed, disabled=args.no_noise)
    graph, truth = synthesize(args.shape, args.n, args.w, noise)
    args.out.mkdir(parents=True, exist_ok=True)
    gpath = args.out / f"{args.name}.g2o"
    tpath = args.out / f"{args.name}.truth.g2o"
    gpath.write_text(write_g2o(graph))
    tpath.write_text(write_estimate(graph, truth))
    print(json.dumps({"graph": str(gpath), "truth": str(tpath), "n": graph.n, "w": graph.w,
                      "edges": len(graph.edges), "landmark_edges": len(graph.land_edges)}, indent=2))
    return EXIT_OK


def cmd_certify(args) -> int:
    graph, _ = _load(args)
    if not args.estimate.exists():
        raise InputError(f"no such file: {args.estimate}")
    estimate = read_estimate(args.estimate, graph)
    result = solve_graph(graph, _options(args))
    ratios = [m.rank_ratio for m in result.moments]
    cert = certify(graph, estimate, result.lower_bound, ratios)
    if not result.solution.ok:
        cert = replace(cert, verdict="uncertified")
    payload = {"schema": SCHEMA, "certificate": cert.to_dict(), "status": result.solution.status}
    text = json.dumps(payload, indent=2)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "certificate.json").write_text(text + "\n")
    print(text)
    return EXIT_OK if result.solution.ok else EXIT_NUMERICAL


COMMANDS = {"solve": cmd_solve, "compare": cmd_compare, "generate": cmd_generate, "certify": cmd_certify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (InputError, G2OError, OSError, UnicodeDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
