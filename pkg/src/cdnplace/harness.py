"""Scenario generation, rate sweeps and plot-data emission."""

from __future__ import annotations

import csv
import io
import math
import random
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

from .heuristics import InfeasibleError, PriorityKind, run_placement
from .model import DemandMatrix, Instance, Params, evaluate, make_instance
from .topology import (
    DEFAULT_LINK_MODEL,
    INTER_REGION,
    INTER_ZONE,
    LinkModel,
    Topology,
    Zone,
    build_topology,
)

DENSE = "dense"
SPARSE = "sparse"
SCENARIO_KINDS = (DENSE, SPARSE)
SERIES = (PriorityKind.GS, PriorityKind.WSNA, PriorityKind.SNA)
AXES = {
    "cost": "total_cost",
    "providers": "provider_count",
    "latency": "mean_latency",
    "sla": "sla_violation_rate",
    "degree": "violation_degree",
}


@dataclass(frozen=True)
class Scenario:
    kind: str
    seed: int = 0
    demand_range: tuple[int, int] = (1, 5)
    sparse_fraction: float = 0.3

    def __post_init__(self) -> None:
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"scenario kind must be one of {SCENARIO_KINDS}")
        lo, hi = self.demand_range
        if not 1 <= lo <= hi:
            raise ValueError("demand range must satisfy 1 <= lo <= hi")
        if not 0.0 < self.sparse_fraction <= 1.0:
            raise ValueError("sparse fraction must lie in (0, 1]")


def gen_scenario(topology: Topology, scenario: Scenario, content: int = 1) -> DemandMatrix:
    rng = random.Random(scenario.seed)
    lo, hi = scenario.demand_range
    ids = topology.zone_ids
    if scenario.kind == DENSE:
        chosen = ids
    else:
        count = math.ceil(scenario.sparse_fraction * len(ids) - 1e-9)
        chosen = sorted(rng.sample(ids, count))
    return DemandMatrix({(m, content): rng.randint(lo, hi) for m in chosen}, (content,))


@dataclass(frozen=True)
class ExperimentRow:
    scenario: str
    seed: int
    rate: float
    kind: str
    storage_cost: float = math.nan
    bandwidth_cost: float = math.nan
    total_cost: float = math.nan
    objective: float = math.nan
    provider_count: int = 0
    sla_violation_rate: float = math.nan
    request_violation_rate: float = math.nan
    violation_degree: float = math.nan
    mean_latency: float = math.nan
    p95_latency: float = math.nan
    mean_request_latency: float = math.nan
    upper_bound: float = math.nan
    sla_met: bool = False
    error: str = ""
    runtime_ms: float = field(default=0.0, compare=False)

    @property
    def ok(self) -> bool:
        return not self.error


_TIMING_ONLY = {"runtime_ms"}
ROW_COLUMNS = [f.name for f in fields(ExperimentRow) if f.name not in _TIMING_ONLY]


def _fmt(value: object) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return format(value, ".12g")
    return str(value)


def latency_stats(instance: Instance, config) -> tuple[float, float, float]:
    """Mean and 95th percentile of perceived latency over used paths, plus the request-weighted mean."""
    ev = evaluate(config, instance)
    fixed = instance.params.fixed_latency
    samples = sorted((ev.latency[t] + fixed, ev.path_requests[t]) for t in ev.used)
    if not samples:
        return 0.0, 0.0, 0.0
    values = [v for v, _ in samples]
    mean = sum(values) / len(values)
    p95 = values[max(0, math.ceil(0.95 * len(values)) - 1)]
    weight = sum(w for _, w in samples)
    mean_req = sum(v * w for v, w in samples) / weight
    return mean, p95, mean_req


def run_cell(
    topology: Topology,
    scenario: Scenario,
    rate: float,
    kind: PriorityKind,
    params: Params,
    link_model: LinkModel = DEFAULT_LINK_MODEL,
) -> ExperimentRow:
    base = dict(scenario=scenario.kind, seed=scenario.seed, rate=float(rate), kind=kind.name)
    try:
        demand = gen_scenario(topology, scenario)
        instance = make_instance(topology, demand, replace(params, access_rate=rate), link_model)
        start = time.perf_counter()
        result = run_placement(instance, kind)
        elapsed = (time.perf_counter() - start) * 1000.0
    except (InfeasibleError, ValueError) as exc:
        return ExperimentRow(**base, error=f"{type(exc).__name__}: {exc}")
    rep = result.report
    mean, p95, mean_req = latency_stats(instance, result.config)
    return ExperimentRow(
        **base,
        storage_cost=rep.storage_cost,
        bandwidth_cost=rep.bandwidth_cost,
        total_cost=rep.cost,
        objective=rep.total,
        provider_count=len(result.config.provider_zones()),
        sla_violation_rate=rep.sla_violation_rate,
        request_violation_rate=rep.request_violation_rate,
        violation_degree=rep.violation_degree,
        mean_latency=mean,
        p95_latency=p95,
        mean_request_latency=mean_req,
        upper_bound=instance.all_surrogates_cost,
        sla_met=result.sla_met,
        runtime_ms=elapsed,
    )


def run_experiment(
    topology: Topology,
    scenarios: Sequence[Scenario],
    rates: Sequence[float],
    kinds: Sequence[PriorityKind] = SERIES,
    params: Params | None = None,
    link_model: LinkModel = DEFAULT_LINK_MODEL,
) -> list[ExperimentRow]:
    """One row per (scenario, rate, kind); failing cells are recorded, not raised."""
    params = params or Params()
    if any(r <= 0 for r in rates):
        raise ValueError("rates must be positive")
    rows = []
    for sc in scenarios:
        for rate in rates:
            for kind in kinds:
                rows.append(run_cell(topology, sc, rate, kind, params, link_model))
    return rows


def rows_to_csv(rows: Iterable[ExperimentRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROW_COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in ROW_COLUMNS])
    return buf.getvalue()


def timings_to_csv(rows: Iterable[ExperimentRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", "seed", "rate", "kind", "runtime_ms"])
    for r in rows:
        w.writerow([r.scenario, r.seed, _fmt(r.rate), r.kind, format(r.runtime_ms, ".3f")])
    return buf.getvalue()


def rows_from_csv(text: str) -> list[ExperimentRow]:
    types = {f.name: f.type for f in fields(ExperimentRow)}
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        kw: dict[str, object] = {}
        for name, raw in rec.items():
            t = types.get(name)
            if t is None:
                continue
            if t in ("int", int):
                kw[name] = int(raw)
            elif t in ("float", float):
                kw[name] = float(raw) if raw != "" else math.nan
            elif t in ("bool", bool):
                kw[name] = raw == "1"
            else:
                kw[name] = raw
        out.append(ExperimentRow(**kw))
    return out


def emit_plotdata(
    rows: Sequence[ExperimentRow],
    axis: str,
    scenario: str | None = None,
    rates: Sequence[float] | None = None,
) -> str:
    """Metric per access rate with one column per heuristic; seeds are averaged."""
    if axis not in AXES:
        raise ValueError(f"unknown axis {axis!r}; choose from {sorted(AXES)}")
    metric = AXES[axis]
    picked = [
        r for r in rows
        if (scenario is None or r.scenario == scenario)
        and (rates is None or any(math.isclose(r.rate, x) for x in rates))
    ]
    if not picked:
        raise ValueError("no rows match the requested filter")
    table: dict[float, dict[str, list[float]]] = {}
    for r in picked:
        cell = table.setdefault(r.rate, {})
        if r.ok:
            cell.setdefault(r.kind, []).append(float(getattr(r, metric)))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rate"] + [k.name for k in SERIES])
    for rate in sorted(table):
        vals = []
        for k in SERIES:
            got = table[rate].get(k.name)
            vals.append(_fmt(sum(got) / len(got)) if got else "")
        w.writerow([_fmt(rate)] + vals)
    return buf.getvalue()


def write_experiment(rows: Sequence[ExperimentRow], out_dir: str | Path) -> list[Path]:
    """Write the result table, timings and every plot-data file; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name: str, text: str) -> None:
        path = out / name
        path.write_text(text, encoding="utf-8")
        written.append(path)

    put("experiment.csv", rows_to_csv(rows))
    put("timings.csv", timings_to_csv(rows))
    rates = sorted({r.rate for r in rows})
    for sc in sorted({r.scenario for r in rows}):
        for axis in AXES:
            put(f"plot_{sc}_{axis}.csv", emit_plotdata(rows, axis, sc))
        for label, rate in (("low", rates[0]), ("high", rates[-1])):
            put(f"plot_{sc}_degree_{label}.csv", emit_plotdata(rows, "degree", sc, [rate]))
    return written


def parse_rates(text: str) -> list[float]:
    """``10:100:10`` (inclusive range) or a comma list ``10,50,100``."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"bad rate range {text!r}")
        lo, hi, step = (float(p) for p in parts)
        if step <= 0 or hi < lo:
            raise ValueError(f"bad rate range {text!r}")
        n = int(math.floor((hi - lo) / step + 1e-9))
        return [lo + i * step for i in range(n + 1)]
    return [float(p) for p in text.split(",") if p.strip()]


# ---------------------------------------------------------------------------
# Random fixtures


def random_topology(
    rng: random.Random,
    n_zones: int,
    n_regions: int | None = None,
    inter_zone_capacity: float = 1000.0,
    inter_region_capacity: float = 100.0,
    extra_edge_prob: float = 0.3,
) -> Topology:
    """Connected random topology: a random tree per region, random chords, regions joined by a tree."""
    if n_regions is None:
        n_regions = rng.randint(1, min(3, n_zones))
    ids = list(range(1, n_zones + 1))
    region = {m: (i % n_regions) + 1 for i, m in enumerate(ids)}
    zones = [Zone(m, region[m], round(rng.uniform(0.2, 1.0), 4)) for m in ids]
    links: set[tuple[int, int]] = set()
    members = {r: [m for m in ids if region[m] == r] for r in range(1, n_regions + 1)}
    for group in members.values():
        for i in range(1, len(group)):
            links.add(tuple(sorted((group[i], rng.choice(group[:i])))))
        for a in group:
            for b in group:
                if a < b and rng.random() < extra_edge_prob:
                    links.add((a, b))
    order = list(members)
    for i in range(1, len(order)):
        a = rng.choice(members[order[i]])
        b = rng.choice(members[rng.choice(order[:i])])
        links.add(tuple(sorted((a, b))))
    link_specs = []
    for a, b in sorted(links):
        same = region[a] == region[b]
        link_specs.append(
            (a, b, inter_zone_capacity if same else inter_region_capacity,
             INTER_ZONE if same else INTER_REGION)
        )
    return build_topology(zones, link_specs)


def random_demand(
    rng: random.Random, topology: Topology, n_contents: int = 1, max_requests: int = 3,
    max_total: int | None = None,
) -> DemandMatrix:
    counts: dict[tuple[int, int], int] = {}
    contents = tuple(range(1, n_contents + 1))
    cells = [(m, k) for m in topology.zone_ids for k in contents]
    rng.shuffle(cells)
    budget = max_total if max_total is not None else math.inf
    for cell in cells:
        if budget <= 0:
            break
        if rng.random() < 0.6:
            r = min(rng.randint(1, max_requests), budget)
            counts[cell] = r
            budget -= r
    if not counts:
        counts[cells[0]] = 1
    return DemandMatrix(counts, contents)


def validity_instance(seed: int, link_model: LinkModel = DEFAULT_LINK_MODEL) -> Instance:
    """Random connected instance with 4-11 zones and 1-2 contents."""
    rng = random.Random(seed)
    topo = random_topology(rng, rng.randint(4, 11))
    demand = random_demand(rng, topo, rng.randint(1, 2), max_requests=4)
    params = Params(access_rate=rng.choice([10.0, 20.0, 50.0]))
    return make_instance(topo, demand, params, link_model)


def tiny_instance(seed: int, link_model: LinkModel = DEFAULT_LINK_MODEL) -> Instance:
    """Instance small enough for the exhaustive oracle (<=5 zones, 1 content, <=6 requests, k=2)."""
    rng = random.Random(seed)
    topo = random_topology(
        rng, rng.randint(2, 5), inter_zone_capacity=rng.choice([30.0, 60.0]),
        inter_region_capacity=rng.choice([20.0, 40.0]), extra_edge_prob=0.5,
    )
    demand = random_demand(rng, topo, 1, max_requests=3, max_total=6)
    params = Params(access_rate=10.0, k_paths=2)
    return make_instance(topo, demand, params, link_model)
