"""Command-line interface.

Subcommands: generate (emit instance files), solve (power method on a
cloud-set file, JSON report), certify (cloud set + stack file, certificate
JSON), bm (Stiefel ascent), phase (grid run, CSV).

Exit codes: 0 success, 1 usage error, 2 numerical failure,
3 timeout-dominated grid.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .bench import (
    PhaseGrid,
    generate_instance,
    phase_diagram,
    write_phase_csv,
)
from .bm import BmConfig, solve_bm
from .certificate import certify
from .gpm import GpmConfig, NumericalError, solve
from .linops import StiefelStack
from .model import (
    build_data_matrix,
    build_gram,
    read_cloud_set,
    write_cloud,
    write_cloud_set,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_TIMEOUT = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def write_stack(path, stack: StiefelStack) -> None:
    lines = [f"{stack.n} {stack.d} {stack.p}"]
    for row in stack.stacked:
        lines.append(" ".join(repr(float(v)) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_stack(path) -> StiefelStack:
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    n, d, p = (int(v) for v in lines[0].split())
    rows = [[float(v) for v in ln.split()] for ln in lines[1 : 1 + n * d]]
    return StiefelStack(np.array(rows).reshape(n, d, p))


def _load_config_defaults(path) -> dict:
    """key=value lines, '#' comments; values stay strings for argparse to coerce."""
    defaults = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"bad config line: {raw.rstrip()!r}")
            key, value = line.split("=", 1)
            defaults[key.strip().replace("-", "_")] = value.strip()
    return defaults


def _add_common(parser):
    parser.add_argument("--config", help="key=value config file; flags override it")


def build_parser() -> _Parser:
    parser = _Parser(prog="gopp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[], help="emit a synthetic cloud-set file")
    g.add_argument("--model", choices=("uniform_cube", "standard_normal"), default="uniform_cube")
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--m", type=int, default=25)
    g.add_argument("--d", type=int, default=3)
    g.add_argument("--sigma", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--with-shifts", action="store_true")
    g.add_argument("--haar-rotations", action="store_true")
    g.add_argument("--out", required=True, help="cloud-set output file")
    g.add_argument("--truth-out", help="optional file for the latent cloud")
    _add_common(g)

    s = sub.add_parser("solve", help="power method on a cloud-set file")
    s.add_argument("input", help="cloud-set file")
    s.add_argument("--init", choices=("spectral", "random"), default="spectral")
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--max-iter", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--center", action=argparse.BooleanOptionalAction, default=True)
    s.add_argument("--out", help="JSON report path (default stdout)")
    _add_common(s)

    c = sub.add_parser("certify", help="certificate for a candidate stack")
    c.add_argument("clouds", help="cloud-set file defining C")
    c.add_argument("stack", help="stack file with the candidate S")
    c.add_argument("--stat-tol", type=float, default=1e-6)
    c.add_argument("--psd-tol", type=float, default=0.0)
    c.add_argument("--center", action=argparse.BooleanOptionalAction, default=True)
    c.add_argument("--out", help="JSON output path (default stdout)")
    _add_common(c)

    b = sub.add_parser("bm", help="Stiefel-manifold gradient ascent")
    b.add_argument("input", help="cloud-set file")
    b.add_argument("--p", type=int, help="columns per block (default 2d+1)")
    b.add_argument("--grad-tol", type=float, default=1e-8)
    b.add_argument("--max-iter", type=int, default=5000)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--center", action=argparse.BooleanOptionalAction, default=True)
    b.add_argument("--out", help="JSON report path (default stdout)")
    _add_common(b)

    ph = sub.add_parser("phase", help="Monte Carlo phase-transition grid")
    ph.add_argument("--model", choices=("uniform_cube", "standard_normal"), default="uniform_cube")
    ph.add_argument("--d", type=int, default=3)
    ph.add_argument("--m", type=str, default="25", help="comma-separated m values")
    ph.add_argument("--n", type=str, default="100", help="comma-separated n values")
    ph.add_argument(
        "--sigmas", type=str, default="0.2,0.4,0.6,0.8,1.0,1.2,1.4",
        help="comma-separated noise levels",
    )
    ph.add_argument("--trials", type=int, default=20)
    ph.add_argument("--seed", type=int, default=0)
    ph.add_argument("--method", choices=("gpm_spectral", "gpm_random", "bm"), default="gpm_random")
    ph.add_argument("--p", type=int, help="columns per block for method=bm")
    ph.add_argument("--time-limit", type=float, default=60.0, help="per-trial cap in seconds")
    ph.add_argument("--workers", type=int, default=1)
    ph.add_argument("--out", required=True, help="CSV output path")
    _add_common(ph)
    return parser


def _emit_json(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=2)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _cmd_generate(args) -> int:
    instance = generate_instance(
        args.model,
        args.n,
        args.m,
        args.d,
        args.sigma,
        with_shifts=args.with_shifts,
        seed=args.seed,
        haar_rotations=args.haar_rotations,
    )
    write_cloud_set(args.out, instance.observed)
    if args.truth_out:
        write_cloud(args.truth_out, instance.truth)
    return EXIT_OK


def _cmd_solve(args) -> int:
    clouds = read_cloud_set(args.input)
    gram = build_gram(clouds, center_first=args.center)
    config = GpmConfig(tol=args.tol, max_iter=args.max_iter, init=args.init, seed=args.seed)
    d_init = build_data_matrix(clouds) if args.init == "spectral" else None
    report = solve(gram, config, d_for_init=d_init)
    report.certificate = certify(gram, report.solution)
    _emit_json(report.to_json_dict(), args.out)
    return EXIT_OK


def _cmd_certify(args) -> int:
    clouds = read_cloud_set(args.clouds)
    gram = build_gram(clouds, center_first=args.center)
    stack = read_stack(args.stack)
    cert = certify(gram, stack, stat_tol=args.stat_tol, psd_tol=args.psd_tol)
    _emit_json(cert.to_json_dict(), args.out)
    return EXIT_OK


def _cmd_bm(args) -> int:
    clouds = read_cloud_set(args.input)
    gram = build_gram(clouds, center_first=args.center)
    p = args.p if args.p is not None else 2 * clouds.d + 1
    config = BmConfig(p=p, grad_tol=args.grad_tol, max_iter=args.max_iter, seed=args.seed)
    report = solve_bm(gram, config)
    report.certificate = certify(gram, report.solution)
    _emit_json(report.to_json_dict(), args.out)
    return EXIT_OK


def _cmd_phase(args) -> int:
    grid = PhaseGrid(
        cloud_model=args.model,
        d=args.d,
        m_list=tuple(int(v) for v in args.m.split(",")),
        n_list=tuple(int(v) for v in args.n.split(",")),
        sigma_list=tuple(float(v) for v in args.sigmas.split(",")),
        trials_per_cell=args.trials,
        base_seed=args.seed,
        time_limit_s=args.time_limit,
    )
    rows = phase_diagram(grid, method=args.method, p=args.p, workers=args.workers)
    write_phase_csv(args.out, rows)
    total_trials = sum(r.trials for r in rows)
    total_timeouts = sum(r.timeouts for r in rows)
    if total_timeouts > total_trials / 2:
        return EXIT_TIMEOUT
    return EXIT_OK


_COMMANDS = {
    "generate": _cmd_generate,
    "solve": _cmd_solve,
    "certify": _cmd_certify,
    "bm": _cmd_bm,
    "phase": _cmd_phase,
}


def main(argv=None) -> int:
    parser = build_parser()
    # A config file supplies defaults; explicit flags override them.
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            defaults = _load_config_defaults(args.config)
        except (OSError, ValueError) as exc:
            print(f"gopp: bad config file: {exc}", file=sys.stderr)
            return EXIT_USAGE
        sub = build_parser()
        for action in sub._subparsers._group_actions:
            child = action.choices.get(args.command)
            if child is None:
                continue
            actions = {a.dest: a for a in child._actions}
            coerced = {}
            for key, value in defaults.items():
                act = actions.get(key)
                if act is None:
                    continue
                # argparse does not run `type` on defaults; do it here.
                try:
                    if act.type is not None:
                        value = act.type(value)
                    elif isinstance(act.default, bool) or act.const is True:
                        value = value.lower() in ("1", "true", "yes", "on")
                except ValueError as exc:
                    print(f"gopp: bad config value for {key}: {exc}", file=sys.stderr)
                    return EXIT_USAGE
                coerced[key] = value
            child.set_defaults(**coerced)
        args = sub.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"gopp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"gopp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
