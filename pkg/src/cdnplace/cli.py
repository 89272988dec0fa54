"""Command line entry point: ``cdnplace <command> ...``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .harness import (
    AXES,
    SCENARIO_KINDS,
    Scenario,
    emit_plotdata,
    gen_scenario,
    parse_rates,
    rows_from_csv,
    run_experiment,
    write_experiment,
)
from .heuristics import InfeasibleError, PriorityKind, run_placement
from .lp import DEFAULT_MAX_VARIABLES, export_ilp
from .model import (
    CapacityError,
    Configuration,
    DemandMatrix,
    Params,
    make_instance,
    validate,
    violations_to_csv,
)
from .oracle import OracleError, OracleLimits, exact_optimal
from .topology import (
    DEFAULT_LINK_MODEL,
    TopologyError,
    betweenness,
    dump_topology,
    enumerate_paths,
    generate_amazon_na,
    load_link_model,
    load_topology,
    zero_load_weights,
    build_luts,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc


def _topology(args):
    if args.topology:
        return load_topology(_read(args.topology))
    return generate_amazon_na()


def _link_model(args):
    if args.link_model:
        return load_link_model(_read(args.link_model))
    return DEFAULT_LINK_MODEL


def _params(args) -> Params:
    return Params(
        qos=args.q, sla=args.sla, access_rate=args.rate, granularity=args.mu,
        latency_cap=args.cap, server_latency=args.ts, isp_latency=args.tisp,
        big_k=args.big_k, k_paths=args.k,
    )


def _demand(args, topology) -> DemandMatrix:
    if args.demand:
        return DemandMatrix.from_csv(_read(args.demand))
    sc = Scenario(args.scenario, args.seed, (args.lo, args.hi), args.fraction)
    return gen_scenario(topology, sc)


def _instance(args):
    topo = _topology(args)
    return make_instance(topo, _demand(args, topo), _params(args), _link_model(args))


def _kinds(text: str) -> list[PriorityKind]:
    try:
        return [PriorityKind.parse(k) for k in text.split(",") if k.strip()]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# ---------------------------------------------------------------------------
# commands


def cmd_topo_gen(args) -> int:
    topo = generate_amazon_na(args.inter_region, args.inter_zone, seed=args.seed)
    _emit(dump_topology(topo), args.out)
    return EXIT_OK


def cmd_topo_check(args) -> int:
    topo = load_topology(_read(args.file))
    lm = _link_model(args)
    build_luts(topo, lm, args.mu, args.cap)
    print(
        f"ok: {len(topo.zone_ids)} zones, {len(topo.regions)} regions, "
        f"{len(topo.edges)} directed edges ({len(topo.undirected_edges)} links)"
    )
    return EXIT_OK


def cmd_paths(args) -> int:
    topo = _topology(args)
    lat, _ = build_luts(topo, _link_model(args), args.mu, args.cap)
    ps = enumerate_paths(topo, args.k, zero_load_weights(lat))
    lines = ["m,n,x,latency_ms,path"]
    for m, n in ps.pairs():
        if args.pair and (m, n) != tuple(args.pair):
            continue
        for x in range(1, ps.count(m, n) + 1):
            path = "-".join(str(v) for v in ps.path(m, n, x))
            lines.append(f"{m},{n},{x},{ps.zero_load_latency(m, n, x):g},{path}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_bc(args) -> int:
    topo = _topology(args)
    lat, _ = build_luts(topo, _link_model(args), args.mu, args.cap)
    bc = betweenness(topo, zero_load_weights(lat))
    total = sum(bc.values())
    lines = ["zone,bc,share"]
    for m in topo.zone_ids:
        share = bc[m] / total if total > 0 else 1.0 / len(bc)
        lines.append(f"{m},{bc[m]:.12g},{share:.12g}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_scenario_gen(args) -> int:
    topo = _topology(args)
    sc = Scenario(args.kind, args.seed, (args.lo, args.hi), args.fraction)
    _emit(gen_scenario(topo, sc).to_csv(), args.out)
    return EXIT_OK


def cmd_place(args) -> int:
    inst = _instance(args)
    result = run_placement(inst, PriorityKind.parse(args.kind))
    _emit(result.config.to_csv(), args.out)
    rep = result.report
    print(
        f"kind={result.kind.name} providers={','.join(map(str, result.config.provider_zones()))} "
        f"storage={rep.storage_cost:.6g} bandwidth={rep.bandwidth_cost:.6g} "
        f"degree={rep.violation_degree:.6g} sla_violation_rate={rep.sla_violation_rate:.6g} "
        f"sla_met={int(result.sla_met)}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_validate(args) -> int:
    inst = _instance(args)
    config = Configuration.from_csv(_read(args.config))
    found = validate(config, inst, sla_lenient=args.lenient)
    if args.csv:
        sys.stdout.write(violations_to_csv(found))
    else:
        for v in found:
            print(v)
        print(f"{len(found)} violation(s)")
    return EXIT_FAIL if found else EXIT_OK


def cmd_oracle(args) -> int:
    inst = _instance(args)
    limits = OracleLimits(
        max_zones=args.max_zones, max_contents=args.max_contents,
        max_total_demand=args.max_demand, max_paths_per_pair=args.max_paths,
        work_budget=args.budget,
    )
    res = exact_optimal(inst, limits, enforce_sla=not args.lenient)
    _emit(res.config.to_csv(), args.out)
    sys.stderr.write(res.stats())
    return EXIT_OK


def cmd_export_lp(args) -> int:
    _emit(export_ilp(_instance(args), args.max_vars), args.out)
    return EXIT_OK


def cmd_experiment(args) -> int:
    topo = _topology(args)
    kinds = _kinds(args.kinds)
    names = [s.strip() for s in args.scenarios.split(",") if s.strip()]
    for s in names:
        if s not in SCENARIO_KINDS:
            raise UsageError(f"unknown scenario {s!r}")
    try:
        rates = parse_rates(args.rates)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    scenarios = [Scenario(s, args.seed, (args.lo, args.hi), args.fraction) for s in names]
    rows = run_experiment(topo, scenarios, rates, kinds, _params(args), _link_model(args))
    written = write_experiment(rows, args.out)
    failed = [r for r in rows if not r.ok]
    print(f"{len(rows)} cells, {len(failed)} failed; wrote {len(written)} files to {args.out}")
    for r in failed:
        print(f"  {r.scenario} rate={r.rate:g} {r.kind}: {r.error}", file=sys.stderr)
    return EXIT_FAIL if failed else EXIT_OK


def cmd_plotdata(args) -> int:
    rows = rows_from_csv(_read(args.input))
    rates = parse_rates(args.rates) if args.rates else None
    _emit(emit_plotdata(rows, args.axis, args.scenario, rates), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _model_opts(p: argparse.ArgumentParser, rate: float = 10.0) -> None:
    p.add_argument("--topology", help="topology file (default: Amazon NA fixture)")
    p.add_argument("--link-model", help="INI file with delay/tariff overrides")
    p.add_argument("--rate", type=float, default=rate, help="access rate per request, Mbps")
    p.add_argument("--q", type=float, default=100.0, help="QoS latency threshold, ms")
    p.add_argument("--sla", type=float, default=98.0, help="SLA percentage of compliant paths")
    p.add_argument("--mu", type=float, default=10.0, help="LUT granularity, Mbps")
    p.add_argument("--cap", type=float, default=1000.0, help="latency upper bound, ms")
    p.add_argument("--ts", type=float, default=10.0, help="server latency, ms")
    p.add_argument("--tisp", type=float, default=10.0, help="ISP latency, ms")
    p.add_argument("--big-k", type=float, default=None)
    p.add_argument("--k", type=int, default=3, help="paths per zone pair")


def _demand_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--demand", help="demand CSV (zone,content,requests)")
    _scenario_opts(p)
    p.add_argument("--scenario", choices=SCENARIO_KINDS, default="dense")


def _scenario_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lo", type=int, default=1, help="min requests per demanding zone")
    p.add_argument("--hi", type=int, default=5, help="max requests per demanding zone")
    p.add_argument("--fraction", type=float, default=0.3, help="sparse: share of zones with demand")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cdnplace", description="QoS-aware content placement toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    topo = sub.add_parser("topo", help="generate or check topology files")
    tsub = topo.add_subparsers(dest="action", required=True)
    p = tsub.add_parser("gen", help="write the Amazon NA topology")
    p.add_argument("--inter-region", type=float, default=100.0)
    p.add_argument("--inter-zone", type=float, default=1000.0)
    p.add_argument("--seed", type=int, default=None, help="draw storage costs instead of the fixture")
    p.add_argument("--out")
    p.set_defaults(func=cmd_topo_gen)
    p = tsub.add_parser("check", help="validate a topology file")
    p.add_argument("file")
    p.add_argument("--link-model")
    p.add_argument("--mu", type=float, default=10.0)
    p.add_argument("--cap", type=float, default=1000.0)
    p.set_defaults(func=cmd_topo_check)

    for name, func, help_ in (("paths", cmd_paths, "list candidate paths"), ("bc", cmd_bc, "betweenness centrality")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--topology")
        p.add_argument("--link-model")
        p.add_argument("--mu", type=float, default=10.0)
        p.add_argument("--cap", type=float, default=1000.0)
        p.add_argument("--k", type=int, default=3)
        p.add_argument("--out")
        if name == "paths":
            p.add_argument("--pair", type=int, nargs=2, metavar=("M", "N"))
        p.set_defaults(func=func)

    sc = sub.add_parser("scenario", help="demand scenarios")
    ssub = sc.add_subparsers(dest="action", required=True)
    p = ssub.add_parser("gen", help="write a demand CSV")
    p.add_argument("--kind", choices=SCENARIO_KINDS, default="dense")
    p.add_argument("--topology")
    _scenario_opts(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_scenario_gen)

    p = sub.add_parser("place", help="run a placement heuristic")
    p.add_argument("--kind", choices=["wsna", "gs", "sna"], required=True)
    _model_opts(p)
    _demand_opts(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_place)

    p = sub.add_parser("validate", help="check a configuration CSV against the model")
    p.add_argument("config")
    p.add_argument("--lenient", action="store_true", help="skip the SLA row")
    p.add_argument("--csv", action="store_true", help="machine-readable output")
    _model_opts(p)
    _demand_opts(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("oracle", help="exact optimum of a tiny instance")
    _model_opts(p)
    _demand_opts(p)
    d = OracleLimits()
    p.add_argument("--max-zones", type=int, default=d.max_zones)
    p.add_argument("--max-contents", type=int, default=d.max_contents)
    p.add_argument("--max-demand", type=int, default=d.max_total_demand)
    p.add_argument("--max-paths", type=int, default=d.max_paths_per_pair)
    p.add_argument("--budget", type=int, default=d.work_budget)
    p.add_argument("--lenient", action="store_true", help="drop the SLA row")
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("export-lp", help="write the model in LP format")
    _model_opts(p)
    _demand_opts(p)
    p.add_argument("--max-vars", type=int, default=DEFAULT_MAX_VARIABLES)
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_lp)

    p = sub.add_parser("experiment", help="sweep scenarios x rates x heuristics")
    p.add_argument("--scenarios", default="dense,sparse")
    p.add_argument("--rates", default="10:100:10")
    p.add_argument("--kinds", default="wsna,gs,sna")
    _model_opts(p)
    _scenario_opts(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("plotdata", help="one metric per rate and heuristic from an experiment CSV")
    p.add_argument("--axis", choices=sorted(AXES), required=True)
    p.add_argument("--input", required=True, help="experiment.csv")
    p.add_argument("--scenario", choices=SCENARIO_KINDS)
    p.add_argument("--rates")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plotdata)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TopologyError, InfeasibleError, OracleError, CapacityError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
