"""Command line interface: generate, release, verify, bench.

Exit codes: 0 success, 1 other failures, 2 unreadable/malformed input,
3 support or domain cap exceeded, 4 wrong relation arity or shape,
5 hierarchy requirement violated.

The optional JOINDP_CONFIG environment variable names a JSON file of
default flag values; explicit flags always win.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from .bench import (
    PIPELINES,
    ErrorRow,
    _report_delta_tilde,
    nominal_domain_size,
    render_figure,
    run_experiment,
    summarize,
    write_error_table,
)
from .errors import (
    DomainTooLarge,
    JoinDpError,
    NotHierarchical,
    ParseError,
    SchemaNotTwoTableChain,
    SupportTooLarge,
    WrongArity,
)
from .hierarchy import attribute_forest, is_hierarchical
from .instances import (
    SingleTable,
    error_envelope_two_table,
    f_upper,
    gen_bucket_conforming,
    gen_gap,
    gen_multi_table_lb,
    gen_staircase,
    gen_two_table_lb,
)
from .noise import PrivacyParams, RngStream
from .queries import DENSE_DOMAIN_CAP, FamilyEvaluator, QueryFamily, max_error
from .relational import Attribute, Instance, JoinQuery, count
from .sensitivity import local_sensitivity, residual_sensitivity_report
from .serialize import (
    load_family,
    load_instance,
    save_family,
    save_instance,
    save_report,
    synthetic_to_csv,
)

EXIT_PARSE = 2
EXIT_CAP = 3
EXIT_ARITY = 4
EXIT_HIERARCHY = 5

CONFIG_ENV = "JOINDP_CONFIG"


def _config_defaults() -> dict:
    path = os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read {CONFIG_ENV} file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{CONFIG_ENV} file {path} must hold a JSON object")
    return {key.replace("-", "_"): value for key, value in doc.items()}


def _check_dense_domain(instance: Instance) -> None:
    size = instance.query.joined_domain_size
    if size > DENSE_DOMAIN_CAP:
        raise DomainTooLarge(
            f"joined domain {size} exceeds the dense cap {DENSE_DOMAIN_CAP}")


def _write_run_config(out_dir: Path, args: argparse.Namespace) -> None:
    doc = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    (out_dir / "config.json").write_text(json.dumps(doc, indent=2) + "\n")


def _resolve_family(args: argparse.Namespace, instance: Instance) -> QueryFamily:
    from . import queries

    if args.family:
        return load_family(instance.query, args.family)
    kind = args.family_kind
    if kind == "counting":
        return queries.counting_family(instance.query)
    if kind == "random_sign":
        return queries.random_sign_family(
            instance.query, args.num_queries, args.family_seed)
    if kind == "interval":
        attribute = args.interval_attribute or instance.query.attribute_names[0]
        return queries.prefix_interval_family(
            instance.query, attribute, args.num_queries)
    raise ParseError(f"unknown family kind {kind!r}")


def _add_family_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--family", help="query family JSON file")
    p.add_argument("--family-kind", default="random_sign",
                   choices=["counting", "random_sign", "interval"],
                   help="built-in family used when --family is not given")
    p.add_argument("--num-queries", type=int, default=64)
    p.add_argument("--family-seed", type=int, default=0)
    p.add_argument("--interval-attribute", default=None)


def _add_privacy_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)


def _star_query(num_leaves: int) -> JoinQuery:
    attrs = [Attribute("A", 2)] + [Attribute(f"B{j}", 2) for j in range(num_leaves)]
    relations = tuple([("A",)] + [("A", f"B{j}") for j in range(num_leaves)])
    return JoinQuery(tuple(attrs), relations)


def _build_instance(args: argparse.Namespace) -> Instance:
    if args.gen == "lb2":
        return gen_two_table_lb(args.n, args.delta)
    if args.gen == "lbm":
        return gen_multi_table_lb(
            _star_query(args.star), SingleTable((1,) * args.n), args.delta)
    if args.gen == "staircase":
        return gen_staircase(args.sqrt_n)
    if args.gen == "gap":
        return gen_gap(args.k)
    if args.gen == "bucket":
        blocks = {}
        for spec in args.block:
            bucket, _, size = spec.partition("=")
            try:
                blocks[int(bucket)] = int(size)
            except ValueError as exc:
                raise ParseError(f"bad --block {spec!r}, expected BUCKET=SIZE") from exc
        return gen_bucket_conforming(args.lam, blocks)
    raise ParseError(f"unknown generator {args.gen!r}")


def cmd_generate(args: argparse.Namespace) -> int:
    instance = _build_instance(args)
    manifest = {
        "generator": args.gen,
        "n": instance.input_size,
        "count": count(instance),
        "ls": local_sensitivity(instance),
    }
    if args.beta is not None:
        rs = residual_sensitivity_report(instance, args.beta)
        manifest["beta"] = args.beta
        manifest["rs"] = rs.value
    if args.out:
        save_instance(instance, args.out)
        manifest_path = Path(args.out).with_suffix(".manifest.json")
        manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
        print(f"wrote {args.out} and {manifest_path}")
    else:
        from .serialize import instance_to_json

        json.dump(instance_to_json(instance), sys.stdout, indent=2)
        print()
    print(" ".join(f"{k}={v}" for k, v in manifest.items()))
    return 0


def cmd_release(args: argparse.Namespace) -> int:
    instance = load_instance(args.instance)
    _check_dense_domain(instance)
    family = _resolve_family(args, instance)
    params = PrivacyParams(args.epsilon, args.delta)
    evaluator = FamilyEvaluator(instance.query, family)
    rng = RngStream(args.seed)
    start = time.perf_counter()
    result = PIPELINES[args.pipeline](
        instance, evaluator, params, rng, args.iterations)
    wall_ms = (time.perf_counter() - start) * 1000.0
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_run_config(out_dir, args)
    save_report(result.report, out_dir / "report.json")
    if not args.family:
        save_family(family, out_dir / "family.json")
    cells = synthetic_to_csv(
        result.distribution, out_dir / "synthetic.csv", args.sparse_threshold)
    err = max_error(evaluator.evaluate_instance(instance),
                    evaluator.evaluate_mass(result.distribution.mass))
    envelope = error_envelope_two_table(
        count(instance), local_sensitivity(instance), params.lam,
        f_upper(nominal_domain_size(instance), len(family),
                params.epsilon, params.delta))
    row = ErrorRow(
        seed=args.seed, pipeline=args.pipeline, epsilon=params.epsilon,
        delta=params.delta, count=count(instance),
        delta_tilde=_report_delta_tilde(result.report), max_error=err,
        envelope=envelope,
        ratio=err / envelope if envelope > 0 else float("inf"),
        wall_ms=wall_ms)
    write_error_table([row], out_dir / "errors.csv")
    print(f"released {result.report.pipeline}: total mass "
          f"{result.distribution.total:.3f}, {cells} cells > "
          f"{args.sparse_threshold}, max error {err:.3f} -> {out_dir}")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    instance = load_instance(args.instance)
    query = instance.query
    print(f"attributes: {', '.join(f'{a.name}[{a.domain_size}]' for a in query.attributes)}")
    print(f"relations: {', '.join('(' + ','.join(s) + ')' for s in query.relations)}")
    print(f"input size: {instance.input_size}")
    print(f"join count: {count(instance)}")
    print(f"local sensitivity: {local_sensitivity(instance)}")
    if args.beta is not None:
        rs = residual_sensitivity_report(instance, args.beta)
        print(f"residual sensitivity (beta={args.beta}): {rs.value:.6f} "
              f"at shift {rs.best_k}")
    hier = is_hierarchical(query)
    print(f"hierarchical: {'yes' if hier else 'no'}")
    if hier:
        forest = attribute_forest(query)
        for node in forest.nodes:
            indent = "  " * node.depth
            print(f"  {indent}{'+'.join(node.name)} "
                  f"(relations {sorted(node.atom)})")
    elif args.require_hierarchical:
        raise NotHierarchical("instance query is not hierarchical")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    instance = load_instance(args.instance)
    _check_dense_domain(instance)
    family = _resolve_family(args, instance)
    params = PrivacyParams(args.epsilon, args.delta)
    pipelines = [p.strip() for p in args.pipelines.split(",") if p.strip()]
    seeds = range(args.num_seeds)
    rows = run_experiment(instance, family, pipelines, params, seeds,
                          args.iterations, workers=args.workers)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_run_config(out_dir, args)
    write_error_table(rows, out_dir / "errors.csv")
    render_figure(rows, out_dir / "errors.png")
    summary = summarize(rows)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    for name, stats in summary.items():
        print(f"{name}: median max_error {stats['median_max_error']:.3f} "
              f"(ratio {stats['median_ratio']:.3f}) over {stats['runs']} runs")
    print(f"wrote {out_dir}/errors.csv, errors.png, summary.json")
    return 0


def build_parser(defaults: dict | None = None) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="joindp",
        description="Differentially private synthetic data over natural joins")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a benchmark instance")
    g.add_argument("--gen", required=True,
                   choices=["lb2", "lbm", "staircase", "gap", "bucket"])
    g.add_argument("--n", type=int, default=64,
                   help="embedded table size for lb2/lbm")
    g.add_argument("--delta", type=int, default=4, dest="delta",
                   help="degree amplification for lb2/lbm")
    g.add_argument("--star", type=int, default=2,
                   help="number of leaf relations for lbm")
    g.add_argument("--sqrt-n", type=int, default=8)
    g.add_argument("--k", type=int, default=8)
    g.add_argument("--lam", type=float, default=2.0)
    g.add_argument("--block", action="append", default=[],
                   metavar="BUCKET=SIZE", help="bucket block spec, repeatable")
    g.add_argument("--beta", type=float, default=None,
                   help="also report residual sensitivity at this beta")
    g.add_argument("--out", help="output instance JSON path")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("release", help="run one private release")
    r.add_argument("--instance", required=True)
    r.add_argument("--pipeline", required=True, choices=sorted(PIPELINES))
    _add_privacy_options(r)
    _add_family_options(r)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--iterations", type=int, default=None)
    r.add_argument("--sparse-threshold", type=float, default=0.0,
                   help="omit synthetic cells with mass at or below this")
    r.add_argument("--out-dir", required=True)
    r.set_defaults(func=cmd_release)

    v = sub.add_parser("verify", help="validate an instance and print stats")
    v.add_argument("--instance", required=True)
    v.add_argument("--beta", type=float, default=None)
    v.add_argument("--require-hierarchical", action="store_true")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="compare pipelines over many seeds")
    b.add_argument("--instance", required=True)
    b.add_argument("--pipelines", default="two_table,unif_two_table")
    _add_privacy_options(b)
    _add_family_options(b)
    b.add_argument("--num-seeds", type=int, default=21)
    b.add_argument("--iterations", type=int, default=None)
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--out-dir", required=True)
    b.set_defaults(func=cmd_bench)

    if defaults:
        for p in (parser, g, r, v, b):
            for action in p._actions:
                if action.dest in defaults:
                    action.default = defaults[action.dest]
                    action.required = False
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        parser = build_parser(_config_defaults())
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (SupportTooLarge, DomainTooLarge) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (WrongArity, SchemaNotTwoTableChain) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARITY
    except NotHierarchical as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_HIERARCHY
    except JoinDpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
