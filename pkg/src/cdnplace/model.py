"""Placement model: inputs, configurations, objective evaluation and validation."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

from .topology import (
    DEFAULT_LINK_MODEL,
    BandwidthCostLut,
    LatencyLut,
    LinkModel,
    PathSet,
    Topology,
    build_luts,
    enumerate_paths,
    zero_load_weights,
)

Triple = tuple[int, int, int]
FlowKey = tuple[int, int, int, int]

_EPS = 1e-9


class CapacityError(ValueError):
    """A link carries more load than its capacity (no LUT index exists)."""


@dataclass(frozen=True)
class Params:
    qos: float = 100.0
    sla: float = 98.0
    access_rate: float = 10.0
    granularity: float = 10.0
    latency_cap: float = 1000.0
    server_latency: float = 10.0
    isp_latency: float = 10.0
    big_k: float | None = None
    k_paths: int = 3

    def __post_init__(self) -> None:
        for name in ("qos", "access_rate", "granularity", "latency_cap"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.sla <= 100.0:
            raise ValueError("sla must lie in (0, 100]")
        if self.server_latency < 0 or self.isp_latency < 0:
            raise ValueError("server/ISP latency must be non-negative")
        if self.k_paths < 1:
            raise ValueError("k_paths must be >= 1")

    @property
    def fixed_latency(self) -> float:
        return self.server_latency + self.isp_latency


@dataclass(frozen=True)
class DemandMatrix:
    """Request counts per (zone, content); contents are numbered from 1."""

    counts: Mapping[tuple[int, int], int]
    contents: tuple[int, ...] = (1,)

    def __post_init__(self) -> None:
        clean = {}
        for (m, k), r in self.counts.items():
            if r < 0 or int(r) != r:
                raise ValueError(f"demand at zone {m}, content {k} must be a non-negative integer")
            if k not in self.contents:
                raise ValueError(f"demand references unknown content {k}")
            if r:
                clean[(m, k)] = int(r)
        object.__setattr__(self, "counts", dict(sorted(clean.items())))

    def r(self, m: int, k: int) -> int:
        return self.counts.get((m, k), 0)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def zone_total(self, m: int) -> int:
        return sum(r for (z, _), r in self.counts.items() if z == m)

    def content_total(self, k: int) -> int:
        return sum(r for (_, c), r in self.counts.items() if c == k)

    def consumers(self, k: int) -> list[int]:
        return sorted(m for (m, c) in self.counts if c == k)

    def zones(self) -> list[int]:
        return sorted({m for (m, _) in self.counts})

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["zone", "content", "requests"])
        for (m, k), r in self.counts.items():
            w.writerow([m, k, r])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DemandMatrix":
        rows = list(csv.DictReader(io.StringIO(text)))
        counts = {(int(r["zone"]), int(r["content"])): int(r["requests"]) for r in rows}
        contents = tuple(sorted({k for _, k in counts} or {1}))
        return cls(counts, tuple(range(1, max(contents) + 1)))


@dataclass(frozen=True, order=True)
class FlowAssignment:
    provider: int
    consumer: int
    path: int
    content: int
    amount: float

    @property
    def key(self) -> FlowKey:
        return (self.provider, self.consumer, self.path, self.content)


@dataclass(frozen=True)
class Configuration:
    """Placement bits (set of hosting (zone, content)) and request flows."""

    placement: frozenset[tuple[int, int]] = frozenset()
    flows: tuple[FlowAssignment, ...] = ()

    @classmethod
    def build(
        cls, placement: Iterable[tuple[int, int]], flows: Mapping[FlowKey, float]
    ) -> "Configuration":
        fl = tuple(
            FlowAssignment(m, n, x, k, amt)
            for (m, n, x, k), amt in sorted(flows.items())
            if amt
        )
        return cls(frozenset(placement), fl)

    def flow_map(self) -> dict[FlowKey, float]:
        out: dict[FlowKey, float] = {}
        for f in self.flows:
            out[f.key] = out.get(f.key, 0) + f.amount
        return out

    def providers(self, k: int) -> list[int]:
        return sorted(m for (m, c) in self.placement if c == k)

    def provider_zones(self) -> list[int]:
        return sorted({m for (m, _) in self.placement})

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for m, k in sorted(self.placement):
            w.writerow(["x", m, k])
        for f in self.flows:
            amt = int(f.amount) if float(f.amount).is_integer() else f.amount
            w.writerow(["y", f.provider, f.consumer, f.path, f.content, amt])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Configuration":
        placement = set()
        flows: dict[FlowKey, float] = {}
        for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
            if not row or row[0].startswith("#"):
                continue
            if row[0] == "x" and len(row) == 3:
                placement.add((int(row[1]), int(row[2])))
            elif row[0] == "y" and len(row) == 6:
                key = (int(row[1]), int(row[2]), int(row[3]), int(row[4]))
                amt = float(row[5])
                flows[key] = flows.get(key, 0) + (int(amt) if amt.is_integer() else amt)
            else:
                raise ValueError(f"configuration line {lineno}: unrecognised row {row}")
        return cls.build(placement, flows)


@dataclass(frozen=True)
class Instance:
    topology: Topology
    demand: DemandMatrix
    params: Params
    link_model: LinkModel
    pathset: PathSet
    latency_luts: Mapping[tuple[int, int], LatencyLut]
    cost_luts: Mapping[tuple[int, int], BandwidthCostLut]

    @cached_property
    def zone_ids(self) -> list[int]:
        return self.topology.zone_ids

    @cached_property
    def path_bound(self) -> dict[Triple, float]:
        """Largest latency each path can reach (every edge saturated)."""
        out = {}
        for m, n, x in self.pathset.triples():
            out[(m, n, x)] = sum(
                self.latency_luts[_und(e)][-1] for e in self.pathset.edges(m, n, x)
            )
        return out

    @cached_property
    def big_k(self) -> float:
        """Big constant for the linearized constraints.

        Must dominate every feasible request sum (rows 2, 3) and every
        possible QoS excess (row 5).
        """
        floor_k = max(
            1.0 + self.demand.total,
            max(self.path_bound.values()) + self.params.fixed_latency,
        )
        if self.params.big_k is not None:
            if self.params.big_k < floor_k:
                raise ValueError(f"big_k {self.params.big_k} below required {floor_k}")
            return float(self.params.big_k)
        return floor_k

    @cached_property
    def all_surrogates_cost(self) -> float:
        """Storage for every content on every zone; all requests served locally."""
        return sum(
            self.topology.zone(m).storage_cost for m in self.zone_ids
        ) * len(self.demand.contents)


def make_instance(
    topology: Topology,
    demand: DemandMatrix,
    params: Params | None = None,
    link_model: LinkModel = DEFAULT_LINK_MODEL,
) -> Instance:
    params = params or Params()
    for m, _ in demand.counts:
        topology.zone(m)
    latency, cost = build_luts(topology, link_model, params.granularity, params.latency_cap)
    pathset = enumerate_paths(topology, params.k_paths, zero_load_weights(latency))
    return Instance(topology, demand, params, link_model, pathset, latency, cost)


def _und(edge: tuple[int, int]) -> tuple[int, int]:
    i, j = edge
    return (i, j) if i < j else (j, i)


def _index(load: float, granularity: float) -> int:
    return max(0, math.ceil(load / granularity - _EPS))


# ---------------------------------------------------------------------------
# Elementary evaluators


def edge_loads(
    flows: Iterable[FlowAssignment] | Mapping[FlowKey, float],
    pathset: PathSet,
    access_rate: float,
    edges: Iterable[tuple[int, int]] = (),
) -> dict[tuple[int, int], float]:
    """Directional load in Mbps: requests on every path through the edge times the access rate."""
    loads = {e: 0.0 for e in edges}
    items = flows.items() if isinstance(flows, Mapping) else ((f.key, f.amount) for f in flows)
    for (m, n, x, _), amount in items:
        for e in pathset.edges(m, n, x):
            loads[e] = loads.get(e, 0.0) + amount * access_rate
    return loads


def edge_delay(lut: LatencyLut, load_ij: float, load_ji: float, granularity: float) -> float:
    """Delay driven by the total load across both directions."""
    p = _index(load_ij + load_ji, granularity)
    if p >= len(lut):
        raise CapacityError(
            f"combined load {load_ij + load_ji} Mbps exceeds capacity {lut.capacity} Mbps"
        )
    return lut[p]


def path_latency(
    edges: Iterable[tuple[int, int]], edge_delays: Mapping[tuple[int, int], float]
) -> float:
    return sum(edge_delays[_und(e)] for e in edges)


def bandwidth_cost(lut: BandwidthCostLut, load: float, granularity: float) -> float:
    p = _index(load, granularity)
    if p >= len(lut):
        raise CapacityError(f"load {load} Mbps exceeds capacity {lut.capacity} Mbps")
    return lut[p]


def classify_violations(
    latency: Mapping[Triple, float], used: Iterable[Triple], params: Params
) -> tuple[dict[Triple, int], dict[Triple, int]]:
    """Usage flags ``a`` and QoS-violation flags ``z`` for every path."""
    used = set(used)
    a = {t: int(t in used) for t in latency}
    z = {
        t: int(a[t] == 1 and gamma + params.fixed_latency > params.qos + _EPS)
        for t, gamma in latency.items()
    }
    return a, z


def sla_satisfied(z: Mapping[Triple, int] | int, a: Mapping[Triple, int] | int, sla: float) -> bool:
    nz = z if isinstance(z, (int, float)) else sum(z.values())
    na = a if isinstance(a, (int, float)) else sum(a.values())
    return nz <= (1.0 - sla / 100.0) * na + _EPS


# ---------------------------------------------------------------------------
# Whole-configuration evaluation


@dataclass(frozen=True)
class Evaluation:
    loads: dict[tuple[int, int], float]
    delays: dict[tuple[int, int], float]
    latency: dict[Triple, float]
    a: dict[Triple, int]
    z: dict[Triple, int]
    path_requests: dict[Triple, float]

    @property
    def used(self) -> list[Triple]:
        return [t for t, v in self.a.items() if v]

    @property
    def violating(self) -> list[Triple]:
        return [t for t, v in self.z.items() if v]


def evaluate(config: Configuration, instance: Instance) -> Evaluation:
    topo = instance.topology
    params = instance.params
    flows = config.flow_map()
    loads = edge_loads(flows, instance.pathset, params.access_rate, (e.key for e in topo.edges))
    delays = {
        (e.src, e.dst): edge_delay(
            instance.latency_luts[e.undirected],
            loads[(e.src, e.dst)],
            loads[(e.dst, e.src)],
            params.granularity,
        )
        for e in topo.undirected_edges
    }
    latency = {
        t: path_latency(instance.pathset.edges(*t), delays) for t in instance.pathset.triples()
    }
    path_requests: dict[Triple, float] = {}
    for (m, n, x, _), amt in flows.items():
        path_requests[(m, n, x)] = path_requests.get((m, n, x), 0) + amt
    used = [t for t, amt in path_requests.items() if amt > 0]
    a, z = classify_violations(latency, used, params)
    return Evaluation(loads, delays, latency, a, z, path_requests)


@dataclass(frozen=True)
class CostReport:
    storage_cost: float
    bandwidth_cost: float
    violation_degree: float
    sla_violation_rate: float
    request_violation_rate: float
    used_paths: int
    violating_paths: int
    path_latencies: tuple[tuple[Triple, float], ...] = field(default=(), repr=False)

    @property
    def total(self) -> float:
        return self.storage_cost + self.bandwidth_cost + self.violation_degree

    @property
    def cost(self) -> float:
        """Storage plus bandwidth, without the QoS term."""
        return self.storage_cost + self.bandwidth_cost


def total_objective(
    config: Configuration, instance: Instance, evaluation: Evaluation | None = None
) -> CostReport:
    ev = evaluation or evaluate(config, instance)
    topo = instance.topology
    params = instance.params
    storage = sum(topo.zone(m).storage_cost for (m, _) in config.placement)
    bandwidth = sum(
        bandwidth_cost(instance.cost_luts[e], load, params.granularity)
        for e, load in ev.loads.items()
    )
    degree = sum(ev.latency[t] / params.latency_cap for t, v in ev.z.items() if v)
    n_used = sum(ev.a.values())
    n_viol = sum(ev.z.values())
    req_total = sum(ev.path_requests.values())
    req_viol = sum(r for t, r in ev.path_requests.items() if ev.z.get(t))
    return CostReport(
        storage_cost=storage,
        bandwidth_cost=bandwidth,
        violation_degree=degree,
        sla_violation_rate=n_viol / n_used if n_used else 0.0,
        request_violation_rate=req_viol / req_total if req_total else 0.0,
        used_paths=n_used,
        violating_paths=n_viol,
        path_latencies=tuple((t, ev.latency[t]) for t in sorted(ev.used)),
    )


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class Violation:
    constraint: str
    entity: str
    lhs: float
    rhs: float

    def __str__(self) -> str:
        return f"({self.constraint}) {self.entity}: lhs={self.lhs:g} rhs={self.rhs:g}"


def validate(
    config: Configuration, instance: Instance, sla_lenient: bool = False
) -> list[Violation]:
    """Check a configuration against every model constraint; returns the failures."""
    out: list[Violation] = []
    topo = instance.topology
    params = instance.params
    pathset = instance.pathset
    big_k = instance.big_k
    flows = config.flow_map()

    pairs = set(pathset.pairs())
    valid_flows: dict[FlowKey, float] = {}
    for (m, n, x, k), amt in flows.items():
        ent = f"y[{m},{n},{x},{k}]"
        if (m, n) not in pairs or not 1 <= x <= pathset.count(m, n):
            out.append(Violation("path", ent, x, pathset.count(m, n) if (m, n) in pairs else 0))
            continue
        if k not in instance.demand.contents:
            out.append(Violation("content", ent, k, len(instance.demand.contents)))
            continue
        if amt < 0:
            out.append(Violation("amount", ent, amt, 0))
            continue
        valid_flows[(m, n, x, k)] = amt

    served: dict[tuple[int, int], float] = {}
    shipped: dict[tuple[int, int], float] = {}
    for (m, n, x, k), amt in valid_flows.items():
        served[(n, k)] = served.get((n, k), 0) + amt
        shipped[(m, k)] = shipped.get((m, k), 0) + amt
    for n in topo.zone_ids:
        for k in instance.demand.contents:
            lhs, rhs = served.get((n, k), 0), instance.demand.r(n, k)
            if lhs < rhs - _EPS:
                out.append(Violation("1", f"demand[{n},{k}]", lhs, rhs))
    for (m, k), amt in sorted(shipped.items()):
        hosted = int((m, k) in config.placement)
        if amt > big_k * hosted + _EPS:
            out.append(Violation("2", f"x[{m},{k}]", amt, big_k * hosted))

    loads = edge_loads(valid_flows, pathset, params.access_rate, (e.key for e in topo.edges))
    over = False
    for e in topo.undirected_edges:
        both = loads[e.key] + loads[(e.dst, e.src)]
        if both > e.capacity + _EPS:
            out.append(Violation("8", f"edge[{e.src},{e.dst}]", both, e.capacity))
            over = True
    for e in topo.edges:
        if loads[e.key] > e.capacity + _EPS:
            out.append(Violation("12", f"edge[{e.src},{e.dst}]", loads[e.key], e.capacity))
            over = True
    if over:
        return out

    ev = evaluate(Configuration.build(config.placement, valid_flows), instance)
    for t in pathset.triples():
        ysum = ev.path_requests.get(t, 0)
        a, z = ev.a[t], ev.z[t]
        ent = f"path[{t[0]},{t[1]},{t[2]}]"
        if ysum > big_k * a + _EPS:
            out.append(Violation("3", ent, ysum, big_k * a))
        if ysum < a - _EPS:
            out.append(Violation("4", ent, ysum, a))
        excess = (ev.latency[t] + params.fixed_latency) * a - params.qos
        if excess > big_k * z + _EPS:
            out.append(Violation("5", ent, excess, big_k * z))
        if z > a:
            out.append(Violation("5", ent, z, a))
    if not sla_lenient:
        nz, na = sum(ev.z.values()), sum(ev.a.values())
        if not sla_satisfied(nz, na, params.sla):
            out.append(Violation("6", "sla", nz, (1 - params.sla / 100.0) * na))
    return out


def violations_to_csv(records: Iterable[Violation]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["constraint", "entity", "lhs", "rhs"])
    for v in records:
        w.writerow([v.constraint, v.entity, repr(float(v.lhs)), repr(float(v.rhs))])
    return buf.getvalue()
