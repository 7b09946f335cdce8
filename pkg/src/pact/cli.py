"""Command-line interface: simulate / theory / oracle / verify."""

from __future__ import annotations

import argparse
import json
import sys

from . import acceptance, theory
from .harness import ExperimentConfig, FringeStat, UrnStat, run_experiment, _jsonable
from .oracle import enumerate_small, exact_root_cluster_pmf, series_moments
from .stats import all_patterns
from .tree import Model


def _add_model_args(p: argparse.ArgumentParser) -> None:
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--alpha", type=float, help="attachment parameter, >= 0")
    group.add_argument("--dary", type=int, help="d-ary mode (alpha = -1/d)")
    p.add_argument("--p", type=float, required=True, help="colour persistence in [0,1]")


def _model_from(args) -> Model:
    if args.dary is not None:
        return Model.dary(args.dary, args.p)
    return Model.preferential(args.alpha, args.p)


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pact")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="Monte Carlo experiment with verdicts")
    _add_model_args(sim)
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--reps", type=int, required=True)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument(
        "--stats",
        default="vertices",
        help="comma list of vertices,clusters,leaves,rootcluster,fringe,"
        "urn:weight2,urn:cluster4,urn:leaf4,urn:leaf3",
    )
    sim.add_argument("--fringe-max-size", type=int, default=3)
    sim.add_argument("--out", default=None)
    sim.add_argument("--format", choices=("json", "csv"), default="json")
    sim.add_argument("--jobs", type=int, default=1)

    th = sub.add_parser("theory", help="closed-form limit predictions")
    _add_model_args(th)
    th.add_argument("--root-cluster", action="store_true")
    th.add_argument("--kmax", type=int, default=6)
    th.add_argument("--stat", choices=("vertices", "clusters", "leaves", "fringe"))
    th.add_argument("--fringe-max-size", type=int, default=3)
    th.add_argument("--out", default=None)

    orc = sub.add_parser("oracle", help="exact small-n distributions")
    _add_model_args(orc)
    orc.add_argument("--pmf-n", type=int, help="exact root-cluster pmf at this n")
    orc.add_argument("--enumerate-n", type=int, help="full (shape,colouring) law at this n")
    orc.add_argument("--series-k", type=int, help="falling-factorial moment order")
    orc.add_argument("--nmax", type=int, default=1000)
    orc.add_argument("--out", default=None)

    ver = sub.add_parser("verify", help="run the acceptance suite")
    ver.add_argument("--suite", choices=("default", "smoke"), default="default")
    ver.add_argument("--seed", type=int, default=acceptance.DEFAULT_SEED)
    return parser


def _parse_stats(args) -> tuple:
    out = []
    for token in args.stats.split(","):
        token = token.strip()
        if not token:
            continue
        if token == "fringe":
            out.append(FringeStat(patterns=tuple(all_patterns(args.fringe_max_size))))
        elif token.startswith("urn:"):
            out.append(UrnStat(kind=token.split(":", 1)[1]))
        elif token in ("vertices", "clusters", "leaves", "rootcluster"):
            out.append(token)
        else:
            raise ValueError(f"unknown statistic {token!r}")
    return tuple(out)


def _cmd_simulate(args) -> int:
    config = ExperimentConfig(
        model=_model_from(args),
        n=args.n,
        replicates=args.reps,
        seed=args.seed,
        statistics=_parse_stats(args),
        output=args.out,
        fmt=args.format,
        jobs=args.jobs,
    )
    report = run_experiment(config)
    if not args.out:
        sys.stdout.write(report.to_json() if args.format == "json" else report.to_csv())
        sys.stdout.write("\n")
    return 0


def _cmd_theory(args) -> int:
    model = _model_from(args)
    payload: dict = {"model": {"p": model.p}}
    if model.is_dary:
        payload["model"]["dary"] = model.d
    else:
        payload["model"]["alpha"] = model.alpha
    if args.root_cluster:
        table = theory.root_cluster_limit(model, args.kmax)
        payload["root_cluster"] = {
            "kind": table.kind,
            "scaling_exponent": table.scaling_exponent,
            "log_scaled": table.log_scaled,
            "moments": {str(k): v for k, v in table.moments.items()},
            "aux": {str(k): v for k, v in table.aux.items()},
        }
        if table.pmf is not None:
            payload["root_cluster"]["pmf"] = table.pmf.tolist()
    if args.stat:
        patterns = all_patterns(args.fringe_max_size) if args.stat == "fringe" else None
        pred = theory.global_limit(args.stat, model, patterns=patterns)
        payload[args.stat] = _jsonable(
            {
                "mean_coeff": pred.mean_coeff,
                "regime": pred.regime.kind,
                "scaling": pred.scaling,
                "exponent": pred.exponent,
                "covariance": pred.covariance,
                "limit_vector": pred.limit_vector,
                "z_first_two": pred.z_first_two,
                "degenerate_limit": pred.degenerate_limit,
                "note": pred.note,
            }
        )
    _emit(json.dumps(payload, sort_keys=True, indent=2), args.out)
    return 0


def _cmd_oracle(args) -> int:
    model = _model_from(args)
    payload: dict = {}
    if args.pmf_n:
        payload["pmf"] = exact_root_cluster_pmf(model, args.pmf_n).tolist()
    if args.enumerate_n:
        enum = enumerate_small(model, args.enumerate_n)
        payload["codes"] = {
            code.decode(): prob for code, prob in sorted(enum.code_probs.items())
        }
        payload["root_cluster_pmf"] = enum.root_cluster_pmf[1:].tolist()
    if args.series_k is not None:
        moments = series_moments(model, args.series_k, args.nmax)
        payload["series_moments"] = {
            "k": args.series_k,
            "nmax": args.nmax,
            "values": moments[1:].tolist(),
        }
    _emit(json.dumps(payload, sort_keys=True, indent=2), args.out)
    return 0


def _cmd_verify(args) -> int:
    results = acceptance.run_suite(seed=args.seed, suite=args.suite)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "theory":
            return _cmd_theory(args)
        if args.command == "oracle":
            return _cmd_oracle(args)
        if args.command == "verify":
            return _cmd_verify(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


def main() -> None:
    sys.exit(cli_main())
