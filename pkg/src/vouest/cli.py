"""Command line interface.

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical failure
(including degenerate paths), 3 failed acceptance assertion.  Every command
writes its outputs under ``--output-dir`` together with ``manifest.json``
listing each file with its SHA-256.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

from . import _accel
from . import io as vio
from .calculus import PathOnGrid, e_beta_integral_target, e_beta_tail_integrals, solve_second_kind, z_transform
from .config import PRESETS, load_config, preset
from .errors import NumericalError, VouError
from .estimators import method_of_moments, mle_discrete, mle_known_b, mle_known_beta
from .experiments import run_experiment, write_report
from .kernels import (DampedFractional, ExpSum, Fractional, LogKernel, first_kind_resolvent,
                      kernel_from_json)
from .simulate import SCHEMES, VouParams, simulate_batch

log = logging.getLogger("vouest")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_ACCEPTANCE = 0, 1, 2, 3


def _add_kernel_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("kernel")
    g.add_argument("--kind", choices=["fractional", "log", "expsum", "damped_fractional"], default="fractional")
    g.add_argument("--alpha", type=float, default=None, help="singularity exponent (default 0.75; log: 0.99)")
    g.add_argument("--gamma", type=float, default=0.49, help="Hoelder exponent of the log kernel")
    g.add_argument("--coefficients", type=float, nargs="+", default=[1.0, 2.0])
    g.add_argument("--rates", type=float, nargs="+", default=[1.0, 2.0])
    g.add_argument("--rate", type=float, default=1.0, help="damping rate")
    g.add_argument("--kernel-json", default=None, help='kernel object, e.g. \'{"kind": "fractional", "params": {"alpha": 0.75}}\'')


def _kernel(args):
    if args.kernel_json:
        return kernel_from_json(args.kernel_json)
    if args.kind == "fractional":
        return Fractional(0.75 if args.alpha is None else args.alpha)
    if args.kind == "log":
        return LogKernel(0.99 if args.alpha is None else args.alpha, args.gamma)
    if args.kind == "expsum":
        return ExpSum(tuple(args.coefficients), tuple(args.rates))
    return DampedFractional(0.75 if args.alpha is None else args.alpha, args.rate)


def _add_param_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model parameters")
    g.add_argument("--b", type=float, default=1.2)
    g.add_argument("--beta", type=float, default=-1.0)
    g.add_argument("--sigma", type=float, default=0.3)
    g.add_argument("--x0", type=float, default=1.0)


def _fmt_inf(x: float) -> str:
    return "inf" if math.isinf(x) else format(x, ".10g")


# ---------------------------------------------------------------------------
# subcommands; each returns (exit code, list of written files)
# ---------------------------------------------------------------------------

def cmd_kernel_info(args, out: Path):
    k = _kernel(args)
    info = {"kernel": k.to_dict(), "alpha": k.alpha, "gamma": k.gamma,
            "K(0+)": _fmt_inf(k.k_zero_plus), "L1_norm": _fmt_inf(k.l1_norm())}
    for key in ("alpha", "gamma"):
        print(f"{key:8s} {info[key]}")
    print(f"K(0+)    {info['K(0+)']}")
    print(f"||K||_1  {info['L1_norm']}")
    path = out / "kernel_info.json"
    path.write_text(json.dumps(info, indent=2, sort_keys=True))
    return EXIT_OK, [path]


def cmd_resolvent(args, out: Path):
    k = _kernel(args)
    res = solve_second_kind(k, args.beta, args.dt, args.horizon)
    e_path = out / "e_beta.csv"
    res.to_csv(e_path)
    L = first_kind_resolvent(k, args.dt, args.horizon, rule=args.rule)
    l_path = vio.write_csv(out / "first_kind.csv", ["t", "mass", "cumulative"],
                           zip(L.times()[1:], L.masses, L.cumulative()[1:]))
    h1, h2 = e_beta_tail_integrals(res)
    x1, x2 = e_beta_tail_integrals(res, extrapolate=True)
    tail = res.tail_estimates()
    # extrapolated values are reported only where the tail fit is usable
    x1 = x1 if math.isfinite(x1) else None
    x2 = x2 if math.isfinite(x2) else None
    summary = {"kernel": k.to_dict(), "beta": args.beta, "dt": args.dt, "horizon": args.horizon,
               "atom": L.atom, "int_E_horizon": h1, "int_E2_horizon": h2,
               "int_E_extrapolated": x1, "int_E2_extrapolated": x2,
               "int_E_target": e_beta_integral_target(k, args.beta),
               "tail": {key: (v if not isinstance(v, float) or math.isfinite(v) else None)
                        for key, v in tail.items()}}
    s_path = out / "resolvent.json"
    s_path.write_text(json.dumps(summary, indent=2, sort_keys=True, allow_nan=False))
    print(f"atom={L.atom:.10g} L((0,T])={L.cumulative()[-1]:.10g}")
    print(f"int_0^T E={h1:.10g} int_0^T E^2={h2:.10g} (target int_0^inf E={summary['int_E_target']:.10g})")
    if x1 is None or x2 is None:
        print("tail extrapolation not converged; increase --horizon")
    else:
        print(f"extrapolated: int E={x1:.10g} int E^2={x2:.10g}")
    return EXIT_OK, [e_path, l_path, s_path]


def cmd_simulate(args, out: Path):
    k = _kernel(args)
    params = VouParams(args.b, args.beta, args.sigma, args.x0)
    kw = {"retain_noise": args.retain_noise}
    batch = simulate_batch(args.scheme, k, params, args.n, args.T, args.seed, args.paths, **kw)
    files = []
    if args.format == "binary":
        files.append(vio.write_batch(out / "paths.vpb", batch))
    else:
        t = batch.times()
        for p in range(batch.n_paths):
            files.append(vio.write_path_csv(out / f"path_{batch.first + p:05d}.csv", t, batch.values[p]))
        if args.retain_noise:
            files.append(vio.write_batch(out / "paths.vpb", batch))
    print(f"{batch.n_paths} path(s), scheme={batch.scheme}, n={batch.n}, dt={batch.grid_step:.6g}")
    return EXIT_OK, files


def _load_paths(path: str):
    p = Path(path)
    if p.suffix == ".vpb":
        b = vio.read_batch(p)
        return b.values, b.grid_step, b.params.x0, b.seed
    t, x = vio.read_path_csv(p)
    return x[None, :], vio.uniform_step(t), None, None


def cmd_estimate(args, out: Path):
    k = _kernel(args)
    values, dt, x0_file, seed = _load_paths(args.path)
    x0 = args.x0 if x0_file is None else x0_file
    T = dt * (values.shape[1] - 1)
    L = first_kind_resolvent(k, dt, T, rule=args.z_rule)
    rows = []
    for i, v in enumerate(values):
        path = PathOnGrid(v, dt, x0)
        if args.method == "mom":
            if not isinstance(k, Fractional):
                raise VouError("the method of moments needs a fractional kernel")
            rows.append(method_of_moments(path, k.alpha, args.sigma, seed=seed))
            continue
        z = z_transform(path, L)
        if args.method == "mle":
            rows.append(mle_discrete(path, z, seed=seed))
        elif args.method == "known-beta":
            rows.append(mle_known_beta(path, z, args.beta, seed=seed))
        else:
            rows.append(mle_known_b(path, z, args.b, seed=seed))
    for e in rows:
        print(f"{e.method}: b_hat={e.b_hat:.10g} beta_hat={e.beta_hat:.10g}")
    return EXIT_OK, [vio.write_estimates(out / "estimates.csv", rows)]


def cmd_experiment(args, out: Path):
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = preset(args.preset)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.paths is not None:
        cfg.n_paths = args.paths
    cfg.validate()
    rep = run_experiment(cfg)
    files = write_report(rep, out, stem=f"experiment_{rep.name}")
    print(f"{rep.name}: {len(rep.rows)} row(s) in {rep.runtime:.1f}s")
    return EXIT_OK, files


def cmd_acceptance(args, out: Path):
    from .acceptance import run_suite

    results = run_suite(args.suite)
    payload = {"suite": args.suite, "passed": all(r.passed for r in results),
               "criteria": [{k: v for k, v in r.to_dict().items() if k != "runtime_s"} for r in results]}
    path = out / f"acceptance_{args.suite}.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))
    return (EXIT_OK if payload["passed"] else EXIT_ACCEPTANCE), [path]


COMMANDS = {"kernel-info": cmd_kernel_info, "resolvent": cmd_resolvent, "simulate": cmd_simulate,
            "estimate": cmd_estimate, "experiment": cmd_experiment, "acceptance": cmd_acceptance}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vouest", description="Volterra Ornstein-Uhlenbeck simulation and drift estimation")
    parser.add_argument("--output-dir", default=os.environ.get("VOUEST_OUTPUT_DIR", "vouest-out"))
    parser.add_argument("--threads", type=int, default=None, help="cap worker threads (default: all cores)")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kernel-info", help="print kernel metadata")
    _add_kernel_args(p)

    p = sub.add_parser("resolvent", help="tabulate E_beta and the first-kind resolvent")
    _add_kernel_args(p)
    p.add_argument("--beta", type=float, default=-1.0)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--horizon", type=float, default=10.0)
    p.add_argument("--rule", choices=["product", "euler"], default="product")

    p = sub.add_parser("simulate", help="simulate sample paths")
    _add_kernel_args(p)
    _add_param_args(p)
    p.add_argument("--scheme", choices=SCHEMES, default="euler")
    p.add_argument("--n", type=int, default=1000, help="number of steps")
    p.add_argument("--T", type=float, default=200.0, help="horizon")
    p.add_argument("--paths", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["csv", "binary"], default="csv")
    p.add_argument("--retain-noise", action="store_true", help="keep the Gaussian increments (binary file)")

    p = sub.add_parser("estimate", help="estimate drift parameters from a path file")
    _add_kernel_args(p)
    _add_param_args(p)
    p.add_argument("path", help="CSV with columns t, X or a .vpb batch")
    p.add_argument("--method", choices=["mle", "known-beta", "known-b", "mom"], default="mle")
    p.add_argument("--z-rule", choices=["product", "euler"], default="product",
                   help="first-kind resolvent discretization used for Z (euler matches Euler-scheme paths)")

    p = sub.add_parser("experiment", help="run a Monte Carlo experiment")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="JSON config file")
    src.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--paths", type=int, default=None, help="override the number of paths")

    p = sub.add_parser("acceptance", help="run the acceptance checks")
    p.add_argument("--suite", choices=["fast", "full"], default="fast")
    return parser


def run_cli(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    _accel.set_threads(args.threads if args.threads is not None else os.cpu_count())
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        code, files = COMMANDS[args.command](args, out)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (VouError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    vio.write_manifest(out, files, {"command": args.command, "argv": list(sys.argv[1:] if argv is None else argv),
                                    "backend": _accel.backend(), "exit_code": code})
    log.info("wrote %d file(s) to %s", len(files), out)
    return code


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
