"""Command-line surface.

Subcommands:
  estimate    compute a Lipschitz upper bound for a network file
  cliques     print the clique intervals of the constraint pattern
  sparsity    export the constraint sparsity pattern (PBM bitmap or CSV)
  random-net  generate a random benchmark network file
  verify      solve, audit the solution, and compare to a sampled floor
  bench       sweep a width/depth/tau/method grid into a CSV

Exit codes: 0 success, 1 input/usage error, 2 non-convergence (estimate,
verify) or pattern mismatch (sparsity --oracle).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import admm, chordal, network, sdp, verify as verify_mod
from .admm import BoundReport, SolveOptions

__all__ = ["main", "run_estimate", "derive_net_seed"]

THREADS_ENV_VAR = "LIPCHORD_THREADS"

BENCH_COLUMNS = ["net", "method", "tau", "bound", "wall_time_s", "iters", "converged"]


def _err(msg: str) -> None:
    print(f"lipchord: error: {msg}", file=sys.stderr)


def _cliques_for(problem: sdp.SdpProblem, method: str) -> chordal.CliqueSet:
    if method == "dense":
        return chordal.dense_clique(problem.n)
    return chordal.maximal_cliques(problem.dims, problem.tau)


def run_estimate(
    net: network.Network,
    tau: int,
    method: str,
    opts: SolveOptions | None = None,
    scale_weights: bool = False,
    return_state: bool = False,
):
    """Shared estimation path behind ``estimate``, ``verify`` and ``bench``.

    With ``scale_weights`` each layer is normalized to unit spectral norm
    before solving and the bound is mapped back through the norm product;
    valid only for relu activations with zero biases (positive homogeneity),
    rejected otherwise.
    """
    if method == "naive":
        t0 = time.perf_counter()
        bound = network.naive_lip(net)
        wall = time.perf_counter() - t0
        report = BoundReport(
            method="naive",
            tau=tau,
            gamma_ell=bound * bound,
            lipschitz_bound=bound,
            certified=False,
            iters=0,
            converged=True,
            primal_residual=0.0,
            dual_residual=0.0,
            wall_time_s=wall,
        )
        return (report, None) if return_state else report

    rescale = 1.0
    solved_net = net
    if scale_weights:
        if net.activation.kind != "relu" or not net.zero_bias():
            raise ValueError(
                "--scale-weights requires a relu network with zero biases "
                "(weight scaling only commutes with positively homogeneous "
                "activations)"
            )
        norms = [network.spectral_norm(W) for W in net.weights]
        if any(s == 0.0 for s in norms):
            raise ValueError("cannot normalize a zero layer")
        solved_net = network.scale_weights(net, [1.0 / s for s in norms])
        rescale = math.prod(norms)

    problem = sdp.build_problem(solved_net, tau)
    cliques = _cliques_for(problem, method)
    gamma_ell0 = network.naive_lip(solved_net) ** 2
    out = admm.solve(
        problem,
        cliques,
        opts,
        method=method,
        gamma_ell0=gamma_ell0,
        return_state=return_state,
    )
    report, state = out if return_state else (out, None)
    if rescale != 1.0:
        report.lipschitz_bound *= rescale
        report.gamma_ell = report.lipschitz_bound**2
    return (report, state) if return_state else report


def _solver_opts_from_args(args) -> SolveOptions:
    kw = {}
    if args.rho is not None:
        kw["rho0"] = args.rho
    if args.eps_abs is not None:
        kw["eps_abs"] = args.eps_abs
    if args.eps_rel is not None:
        kw["eps_rel"] = args.eps_rel
    if args.max_iters is not None:
        kw["max_iters"] = args.max_iters
    return SolveOptions(**kw)


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rho", type=float, default=None, help="initial ADMM penalty")
    p.add_argument("--eps-abs", type=float, default=None, help="absolute tolerance")
    p.add_argument("--eps-rel", type=float, default=None, help="relative tolerance")
    p.add_argument("--max-iters", type=int, default=None, help="iteration cap")
    p.add_argument(
        "--scale-weights",
        action="store_true",
        help="normalize layer spectral norms before solving (relu, zero "
        "biases only); the bound is mapped back exactly",
    )


def _load_net(path: str) -> network.Network:
    if not os.path.exists(path):
        raise network.NetworkFormatError(f"no such file: {path}")
    return network.load_network(path)


def cmd_estimate(args) -> int:
    try:
        net = _load_net(args.net)
        opts = _solver_opts_from_args(args)
        report = run_estimate(
            net, args.tau, args.method, opts, scale_weights=args.scale_weights
        )
    except (network.NetworkFormatError, ValueError) as exc:
        _err(str(exc))
        return 1
    status = "certified" if report.certified else "estimate (per formulation)"
    if report.method == "naive":
        status = "layer norm product"
    print(
        f"lipschitz_bound = {report.lipschitz_bound:.9g}  "
        f"[{status}; method={report.method}, tau={report.tau}, "
        f"converged={report.converged}]"
    )
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report.as_dict(), fh, indent=2)
            fh.write("\n")
    if report.method != "naive" and not report.converged:
        _err(f"solver did not converge within {opts.max_iters} iterations")
        return 2
    return 0


def cmd_cliques(args) -> int:
    try:
        net = _load_net(args.net)
        dims = sdp.build_dims(net)
        if args.tau < 0:
            raise ValueError("tau must be nonnegative")
        cs = chordal.maximal_cliques(dims, args.tau)
    except (network.NetworkFormatError, ValueError) as exc:
        _err(str(exc))
        return 1
    if args.format == "json":
        print(
            json.dumps(
                {
                    "p": cs.p,
                    "cliques": [list(iv) for iv in cs.intervals],
                    "sizes": list(cs.sizes),
                }
            )
        )
    else:
        print(f"p = {cs.p}")
        for k, ((lo, hi), s) in enumerate(zip(cs.intervals, cs.sizes), start=1):
            print(f"C_{k} = [{lo}, {hi}]  size {s}")
    return 0


def cmd_sparsity(args) -> int:
    try:
        net = _load_net(args.net)
        dims = sdp.build_dims(net)
        if args.tau < 0:
            raise ValueError("tau must be nonnegative")
        mask = chordal.pattern_mask(dims, args.tau)
        if args.format == "pbm":
            chordal.write_pbm(mask, args.out)
        else:
            chordal.write_edge_csv(mask, args.out)
    except (network.NetworkFormatError, ValueError) as exc:
        _err(str(exc))
        return 1
    if args.oracle:
        problem = sdp.build_problem(net, args.tau)
        predicted = chordal.predicted_edge_set(dims, problem.tau)
        oracle = chordal.oracle_edge_set(problem)
        if predicted.pairs != oracle.pairs:
            only_pred = len(predicted.pairs - oracle.pairs)
            only_orac = len(oracle.pairs - predicted.pairs)
            _err(
                f"oracle pattern differs from the closed form: "
                f"{only_pred} predicted-only, {only_orac} oracle-only entries"
            )
            return 2
        print("oracle pattern matches the closed form")
    return 0


def cmd_random_net(args) -> int:
    try:
        net = network.random_network(args.width, args.depth, args.seed)
        network.save_network(net, args.out)
    except ValueError as exc:
        _err(str(exc))
        return 1
    print(
        f"wrote W{args.width}-D{args.depth} (seed {args.seed}) to {args.out}"
    )
    return 0


def cmd_verify(args) -> int:
    try:
        net = _load_net(args.net)
        opts = _solver_opts_from_args(args)
        # The audit constants are absolute; unless the caller overrode them,
        # solve tighter than the estimation default so the audit is decisive.
        if args.eps_abs is None:
            opts.eps_abs = 1e-10
        if args.eps_rel is None:
            opts.eps_rel = 1e-8
        report, state = run_estimate(
            net,
            args.tau,
            "chordal",
            opts,
            scale_weights=args.scale_weights,
            return_state=True,
        )
        # Audit the solved problem in its own scale (the solver state refers
        # to the conditioned problem when --scale-weights is on).
        solved_net = net
        if args.scale_weights:
            norms = [network.spectral_norm(W) for W in net.weights]
            solved_net = network.scale_weights(net, [1.0 / s for s in norms])
        problem = sdp.build_problem(solved_net, args.tau)
        cliques = _cliques_for(problem, "chordal")
        check = admm.verify_solution(
            problem, cliques, state.gamma, state.z_matrices(admm.VecSpace(problem.n, cliques))
        )
        floor = verify_mod.lower_bound_sampling(
            net, n_pairs=args.pairs, n_local=args.local, radius=args.radius,
            seed=args.seed,
        )
    except (network.NetworkFormatError, ValueError) as exc:
        _err(str(exc))
        return 1
    checks = {
        "solver_converged": report.converged,
        "reconstruction": check.reconstruction_ok,
        "clique_blocks_nsd": check.blocks_ok,
        "gamma_nonnegative": check.gamma_ok,
        "constraint_matrix_nsd": check.z_ok,
        "floor_below_bound": floor.best_quotient <= report.lipschitz_bound,
    }
    for name, ok in checks.items():
        print(f"{name}: {'PASS' if ok else 'FAIL'}", file=sys.stderr)
    print(
        json.dumps(
            {
                "bound_report": report.as_dict(),
                "solution_check": check.as_dict(),
                "lower_bound_report": floor.as_dict(),
                "checks": checks,
                "all_passed": all(checks.values()),
            }
        )
    )
    return 0 if all(checks.values()) else 2


def _parse_int_list(text: str, what: str) -> list[int]:
    """Comma-separated ints, each item either a value or an a..b range."""
    out: list[int] = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if ".." in item:
            a, b = item.split("..", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(item))
    if not out:
        raise ValueError(f"empty {what} list")
    return out


def derive_net_seed(seed: int, width: int, depth: int) -> int:
    """Stable per-cell generation seed for the benchmark grid."""
    return int(np.random.SeedSequence([seed, width, depth]).generate_state(1)[0])


def _bench_cell(task) -> dict:
    width, depth, tau, method, seed, time_budget = task
    net = network.random_network(width, depth, derive_net_seed(seed, width, depth))
    opts = SolveOptions(time_budget_s=time_budget)
    # Normalize layer norms for solver conditioning (always valid here: the
    # generated networks are relu with zero biases); bounds are mapped back.
    report = run_estimate(net, tau, method, opts, scale_weights=(method != "naive"))
    return {
        "net": f"W{width}-D{depth}",
        "method": method,
        "tau": tau,
        "bound": report.lipschitz_bound,
        "wall_time_s": report.wall_time_s,
        "iters": report.iters,
        "converged": report.converged,
    }


def cmd_bench(args) -> int:
    try:
        widths = _parse_int_list(args.widths, "width")
        depths = _parse_int_list(args.depths, "depth")
        taus = _parse_int_list(args.taus, "tau")
        methods = [m.strip() for m in args.methods.split(",") if m.strip()]
        if not methods:
            raise ValueError("empty method list")
        for m in methods:
            if m not in ("chordal", "dense", "naive"):
                raise ValueError(f"unknown method {m!r}")
        if any(t < 0 for t in taus):
            raise ValueError("tau values must be nonnegative")
    except ValueError as exc:
        _err(str(exc))
        return 1

    tasks = [
        (w, d, t, m, args.seed, args.time_budget_s)
        for w in widths
        for d in depths
        for m in methods
        for t in taus
    ]
    env_threads = os.environ.get(THREADS_ENV_VAR)
    workers = int(env_threads) if env_threads else (os.cpu_count() or 1)
    workers = max(1, min(workers, len(tasks)))

    if workers == 1:
        rows = [_bench_cell(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_bench_cell, tasks))

    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lipchord",
        description="Lipschitz upper bounds for feedforward networks via a "
        "clique-decomposed semidefinite relaxation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="compute a Lipschitz upper bound")
    p.add_argument("--net", required=True, help="network JSON file")
    p.add_argument("--tau", type=int, default=0, help="multiplier bandwidth (default 0: certified)")
    p.add_argument("--method", choices=["chordal", "dense", "naive"], default="chordal")
    _add_solver_flags(p)
    p.add_argument("--out", default=None, help="write the report JSON here")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("cliques", help="print the clique intervals")
    p.add_argument("--net", required=True)
    p.add_argument("--tau", type=int, default=0)
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.set_defaults(func=cmd_cliques)

    p = sub.add_parser("sparsity", help="export the sparsity pattern")
    p.add_argument("--net", required=True)
    p.add_argument("--tau", type=int, default=0)
    p.add_argument("--format", choices=["pbm", "csv"], default="pbm")
    p.add_argument("--out", required=True)
    p.add_argument(
        "--oracle",
        action="store_true",
        help="cross-check the closed-form pattern against the numeric "
        "support oracle; exit 2 on mismatch",
    )
    p.set_defaults(func=cmd_sparsity)

    p = sub.add_parser("random-net", help="generate a benchmark network")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_random_net)

    p = sub.add_parser("verify", help="solve, audit, and compare to a sampled floor")
    p.add_argument("--net", required=True)
    p.add_argument("--tau", type=int, default=0)
    _add_solver_flags(p)
    p.add_argument("--seed", type=int, default=0, help="sampling seed")
    p.add_argument("--pairs", type=int, default=verify_mod.DEFAULT_PAIRS)
    p.add_argument("--local", type=int, default=verify_mod.DEFAULT_LOCAL)
    p.add_argument("--radius", type=float, default=verify_mod.DEFAULT_RADIUS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="sweep a grid into a CSV")
    p.add_argument("--widths", required=True, help="e.g. 10,20 or 10..50")
    p.add_argument("--depths", required=True, help="e.g. 5..30")
    p.add_argument("--taus", required=True, help="e.g. 0,2,4")
    p.add_argument("--methods", required=True, help="subset of chordal,dense,naive")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--time-budget-s", type=float, default=None)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; the CLI contract reserves 1.
        return 1 if exc.code not in (0, None) else 0
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
