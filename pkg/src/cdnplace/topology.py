"""Region/zone network graphs, candidate paths, betweenness and link LUTs."""

from __future__ import annotations

import configparser
import heapq
import math
import random
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Iterator, Mapping

INTER_ZONE = "inter-zone"
INTER_REGION = "inter-region"
EDGE_KINDS = (INTER_ZONE, INTER_REGION)

# Latency sums are compared after rounding so that float noise never splits a tie.
_DIGITS = 9


class TopologyError(ValueError):
    """Raised for malformed or inconsistent topology input."""


def _key(length: float) -> float:
    return round(length, _DIGITS)


def _divisible(value: float, step: float) -> bool:
    ratio = value / step
    return math.isclose(ratio, round(ratio), rel_tol=0.0, abs_tol=1e-9)


@dataclass(frozen=True)
class Zone:
    id: int
    region: int
    storage_cost: float


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    capacity: float
    kind: str

    @property
    def key(self) -> tuple[int, int]:
        return (self.src, self.dst)

    @property
    def undirected(self) -> tuple[int, int]:
        return (min(self.src, self.dst), max(self.src, self.dst))


@dataclass(frozen=True)
class Topology:
    """Directed, capacity-bounded zone graph.

    Edges always come in opposite pairs with equal capacity; the undirected
    set keeps one representative ``(i, j)`` with ``i < j`` per pair.
    """

    zones: tuple[Zone, ...]
    edges: tuple[Edge, ...]
    _zone_index: dict = field(init=False, repr=False, compare=False)
    _edge_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        zone_index: dict[int, Zone] = {}
        for zone in self.zones:
            if zone.id in zone_index:
                raise TopologyError(f"duplicate zone id {zone.id}")
            if not 0.0 < zone.storage_cost <= 1.0:
                raise TopologyError(
                    f"zone {zone.id}: storage cost {zone.storage_cost} outside (0, 1]"
                )
            zone_index[zone.id] = zone
        if not zone_index:
            raise TopologyError("topology has no zones")
        edge_index: dict[tuple[int, int], Edge] = {}
        for edge in self.edges:
            if edge.src not in zone_index or edge.dst not in zone_index:
                raise TopologyError(f"edge {edge.key} references an unknown zone")
            if edge.src == edge.dst:
                raise TopologyError(f"self-loop on zone {edge.src}")
            if not edge.capacity > 0:
                raise TopologyError(f"edge {edge.key}: non-positive capacity {edge.capacity}")
            if edge.kind not in EDGE_KINDS:
                raise TopologyError(f"edge {edge.key}: unknown kind {edge.kind!r}")
            if edge.key in edge_index:
                raise TopologyError(f"duplicate edge {edge.key}")
            edge_index[edge.key] = edge
        for edge in self.edges:
            rev = edge_index.get((edge.dst, edge.src))
            if rev is None:
                raise TopologyError(f"edge {edge.key} has no reverse edge")
            if rev.capacity != edge.capacity or rev.kind != edge.kind:
                raise TopologyError(f"edge pair {edge.undirected} is asymmetric")
        object.__setattr__(self, "_zone_index", zone_index)
        object.__setattr__(self, "_edge_index", edge_index)
        if not self._connected():
            raise TopologyError("topology is not connected")

    def _connected(self) -> bool:
        start = self.zones[0].id
        seen = {start}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in self.neighbors(u):
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return len(seen) == len(self.zones)

    @property
    def zone_ids(self) -> list[int]:
        return sorted(self._zone_index)

    @property
    def regions(self) -> list[int]:
        return sorted({z.region for z in self.zones})

    @property
    def undirected_edges(self) -> list[Edge]:
        return sorted(
            (e for e in self.edges if e.src < e.dst), key=lambda e: e.key
        )

    def zone(self, zone_id: int) -> Zone:
        return self._zone_index[zone_id]

    def edge(self, src: int, dst: int) -> Edge:
        return self._edge_index[(src, dst)]

    def has_edge(self, src: int, dst: int) -> bool:
        return (src, dst) in self._edge_index

    def neighbors(self, zone_id: int) -> list[int]:
        return sorted(v for (u, v) in self._edge_index if u == zone_id)

    def region_of(self, zone_id: int) -> int:
        return self._zone_index[zone_id].region

    def zones_in_region(self, region: int) -> list[int]:
        return sorted(z.id for z in self.zones if z.region == region)


def build_topology(
    zones: Iterable[Zone],
    links: Iterable[tuple[int, int, float, str]],
) -> Topology:
    """Create a topology from undirected link declarations, adding reverse edges."""
    edges: list[Edge] = []
    seen: set[tuple[int, int]] = set()
    for i, j, capacity, kind in links:
        pair = (min(i, j), max(i, j))
        if pair in seen:
            raise TopologyError(f"link {pair} declared twice")
        seen.add(pair)
        edges.append(Edge(i, j, float(capacity), kind))
        edges.append(Edge(j, i, float(capacity), kind))
    return Topology(tuple(sorted(zones, key=lambda z: z.id)), tuple(edges))


def load_topology(document: str) -> Topology:
    """Parse the line-oriented topology format.

    Recognised records (``#`` starts a comment)::

        region <id>
        zone <id> <region> <storage_cost>
        edge <i> <j> <capacity_mbps> <inter-zone|inter-region>
    """
    regions: set[int] = set()
    zones: list[Zone] = []
    links: list[tuple[int, int, float, str]] = []
    for lineno, raw in enumerate(document.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "region" and len(parts) == 2:
                regions.add(int(parts[1]))
            elif parts[0] == "zone" and len(parts) == 4:
                zones.append(Zone(int(parts[1]), int(parts[2]), float(parts[3])))
            elif parts[0] == "edge" and len(parts) == 5:
                links.append((int(parts[1]), int(parts[2]), float(parts[3]), parts[4]))
            else:
                raise TopologyError(f"line {lineno}: unrecognised record {line!r}")
        except ValueError as exc:
            if isinstance(exc, TopologyError):
                raise
            raise TopologyError(f"line {lineno}: {exc}") from None
    for zone in zones:
        if regions and zone.region not in regions:
            raise TopologyError(f"zone {zone.id} names undeclared region {zone.region}")
    return build_topology(zones, links)


def dump_topology(topology: Topology) -> str:
    lines = [f"region {r}" for r in topology.regions]
    lines += [
        f"zone {z.id} {z.region} {z.storage_cost:g}"
        for z in sorted(topology.zones, key=lambda z: z.id)
    ]
    lines += [
        f"edge {e.src} {e.dst} {e.capacity:g} {e.kind}" for e in topology.undirected_edges
    ]
    return "\n".join(lines) + "\n"


def _fixture_text(name: str) -> str:
    return resources.files("cdnplace.data").joinpath(name).read_text(encoding="utf-8")


AMAZON_NA_REGIONS = (5, 3, 3)


def generate_amazon_na(
    inter_region_capacity: float = 100.0,
    inter_zone_capacity: float = 1000.0,
    seed: int | None = None,
    granularity: float = 10.0,
) -> Topology:
    """North-America storage cloud: 3 regions holding 5, 3 and 3 zones.

    Zones inside a region form a full mesh; each pair of regions is joined by
    one link between the regions' lowest-id (gateway) zones.  Storage costs
    come from the bundled fixture, or from a seeded uniform draw in
    [0.2, 1.0] when ``seed`` is given.
    """
    for cap in (inter_region_capacity, inter_zone_capacity):
        if cap <= 0 or not _divisible(cap, granularity):
            raise TopologyError(f"capacity {cap} must be positive and divisible by {granularity}")
    if seed is None:
        fixture = load_topology(_fixture_text("amazon_na.topo"))
        costs = {z.id: z.storage_cost for z in fixture.zones}
    else:
        rng = random.Random(seed)
        costs = {m: round(rng.uniform(0.2, 1.0), 4) for m in range(1, sum(AMAZON_NA_REGIONS) + 1)}
    zones: list[Zone] = []
    gateways: list[int] = []
    next_id = 1
    links: list[tuple[int, int, float, str]] = []
    for region, size in enumerate(AMAZON_NA_REGIONS, start=1):
        members = list(range(next_id, next_id + size))
        next_id += size
        gateways.append(members[0])
        zones.extend(Zone(m, region, costs[m]) for m in members)
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                links.append((members[a], members[b], inter_zone_capacity, INTER_ZONE))
    for a in range(len(gateways)):
        for b in range(a + 1, len(gateways)):
            links.append((gateways[a], gateways[b], inter_region_capacity, INTER_REGION))
    return build_topology(zones, links)


# ---------------------------------------------------------------------------
# Link models and lookup tables


@dataclass(frozen=True)
class DelayParams:
    """Zero-load delay ``base`` (processing, propagation, transmission) and queuing scale."""

    base: float
    queue: float


@dataclass(frozen=True)
class Tariff:
    """Tiered per-Mbps rates; ``tiers`` holds (upper fraction of capacity, rate)."""

    tiers: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if not self.tiers:
            raise ValueError("tariff needs at least one tier")
        prev_frac, prev_rate = 0.0, math.inf
        for frac, rate in self.tiers:
            if not prev_frac < frac <= 1.0:
                raise ValueError(f"tier fractions must increase within (0, 1]: {self.tiers}")
            if not 0.0 < rate < prev_rate:
                raise ValueError(f"tier rates must be positive and strictly decreasing: {self.tiers}")
            prev_frac, prev_rate = frac, rate
        if not math.isclose(prev_frac, 1.0):
            raise ValueError("last tier must end at fraction 1.0")

    def cost(self, load: float, capacity: float) -> float:
        total = 0.0
        lower = 0.0
        for frac, rate in self.tiers:
            upper = frac * capacity
            if load <= lower:
                break
            total += (min(load, upper) - lower) * rate
            lower = upper
        return total


@dataclass(frozen=True)
class LinkModel:
    delay: Mapping[str, DelayParams]
    tariff: Mapping[str, Tariff]


DEFAULT_LINK_MODEL = LinkModel(
    delay={
        INTER_ZONE: DelayParams(base=2.0, queue=16.0),
        INTER_REGION: DelayParams(base=40.0, queue=320.0),
    },
    tariff={
        INTER_ZONE: Tariff(((0.4, 0.0001), (1.0, 0.00005))),
        INTER_REGION: Tariff(((0.2, 0.02), (0.5, 0.004), (1.0, 0.0005))),
    },
)


def _parse_tiers(text: str) -> Tariff:
    tiers = []
    for chunk in text.split(","):
        frac, rate = chunk.split(":")
        tiers.append((float(frac), float(rate)))
    return Tariff(tuple(tiers))


def load_link_model(document: str, base: LinkModel = DEFAULT_LINK_MODEL) -> LinkModel:
    """Read delay/tariff overrides from an INI document.

    Sections are named after edge kinds::

        [inter-region]
        base = 40
        queue = 320
        tariff = 0.2:0.02, 0.5:0.004, 1.0:0.0005
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",))
    parser.read_string(document)
    delay = dict(base.delay)
    tariff = dict(base.tariff)
    for kind in parser.sections():
        if kind not in EDGE_KINDS:
            raise ValueError(f"unknown link kind section [{kind}]")
        sec = parser[kind]
        unknown = set(sec) - {"base", "queue", "tariff"}
        if unknown:
            raise ValueError(f"[{kind}]: unknown keys {sorted(unknown)}")
        old = delay[kind]
        delay[kind] = DelayParams(
            base=sec.getfloat("base", old.base), queue=sec.getfloat("queue", old.queue)
        )
        if "tariff" in sec:
            tariff[kind] = _parse_tiers(sec["tariff"])
    return LinkModel(delay=delay, tariff=tariff)


@dataclass(frozen=True)
class LatencyLut:
    """Delay in ms indexed by total bidirectional load ``p * granularity``."""

    capacity: float
    granularity: float
    values: tuple[float, ...]

    def __getitem__(self, p: int) -> float:
        return self.values[p]

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class BandwidthCostLut:
    """Cumulative leasing cost indexed by directional load ``p * granularity``."""

    capacity: float
    granularity: float
    values: tuple[float, ...]

    def __getitem__(self, p: int) -> float:
        return self.values[p]

    def __len__(self) -> int:
        return len(self.values)


def _steps(capacity: float, granularity: float) -> int:
    if granularity <= 0 or not _divisible(capacity, granularity):
        raise ValueError(f"granularity {granularity} does not divide capacity {capacity}")
    return int(round(capacity / granularity))


def build_latency_lut(
    edge: Edge, delay: DelayParams, granularity: float, latency_cap: float
) -> LatencyLut:
    """Tabulate ``base + queue * rho / (1 - rho)`` clamped at ``latency_cap``."""
    if latency_cap <= delay.base:
        raise ValueError(f"latency cap {latency_cap} must exceed base delay {delay.base}")
    n = _steps(edge.capacity, granularity)
    values = []
    for p in range(n + 1):
        rho = p / n
        if rho >= 1.0:
            values.append(latency_cap)
        else:
            values.append(min(delay.base + delay.queue * rho / (1.0 - rho), latency_cap))
    return LatencyLut(edge.capacity, granularity, tuple(values))


def build_bandwidth_cost_lut(edge: Edge, tariff: Tariff, granularity: float) -> BandwidthCostLut:
    n = _steps(edge.capacity, granularity)
    values = tuple(tariff.cost(p * granularity, edge.capacity) for p in range(n + 1))
    return BandwidthCostLut(edge.capacity, granularity, values)


def check_tariff_dominance(
    link_model: LinkModel, zone_capacity: float, region_capacity: float, granularity: float
) -> None:
    """Inter-region traffic must cost strictly more than inter-zone traffic at equal load."""
    zone_t = link_model.tariff[INTER_ZONE]
    region_t = link_model.tariff[INTER_REGION]
    limit = min(zone_capacity, region_capacity)
    for p in range(1, _steps(limit, granularity) + 1):
        load = p * granularity
        if region_t.cost(load, region_capacity) <= zone_t.cost(load, zone_capacity):
            raise ValueError(
                f"inter-region tariff does not dominate inter-zone tariff at {load} Mbps"
            )


def build_luts(
    topology: Topology,
    link_model: LinkModel,
    granularity: float,
    latency_cap: float,
) -> tuple[dict[tuple[int, int], LatencyLut], dict[tuple[int, int], BandwidthCostLut]]:
    """Latency LUT per undirected edge and cost LUT per directed edge."""
    latency = {
        e.undirected: build_latency_lut(e, link_model.delay[e.kind], granularity, latency_cap)
        for e in topology.undirected_edges
    }
    cost = {
        e.key: build_bandwidth_cost_lut(e, link_model.tariff[e.kind], granularity)
        for e in topology.edges
    }
    zone_caps = {e.capacity for e in topology.edges if e.kind == INTER_ZONE}
    region_caps = {e.capacity for e in topology.edges if e.kind == INTER_REGION}
    for zc in zone_caps:
        for rc in region_caps:
            check_tariff_dominance(link_model, zc, rc, granularity)
    return latency, cost


def zero_load_weights(
    latency_luts: Mapping[tuple[int, int], LatencyLut],
) -> dict[tuple[int, int], float]:
    """Directed edge weights equal to each link's zero-load latency."""
    weights = {}
    for (i, j), lut in latency_luts.items():
        weights[(i, j)] = lut[0]
        weights[(j, i)] = lut[0]
    return weights


def base_weights(
    topology: Topology, link_model: LinkModel = DEFAULT_LINK_MODEL
) -> dict[tuple[int, int], float]:
    return {e.key: link_model.delay[e.kind].base for e in topology.edges}


# ---------------------------------------------------------------------------
# Paths

Path = tuple[int, ...]


def path_edges(path: Path) -> tuple[tuple[int, int], ...]:
    return tuple(zip(path, path[1:]))


def path_length(path: Path, weights: Mapping[tuple[int, int], float]) -> float:
    return sum(weights[e] for e in path_edges(path))


class PathSet:
    """Up to k loopless paths per ordered zone pair, 1-based path indices.

    ``g(m, n, x, edge)`` is the edge-membership indicator of the ILP.
    """

    def __init__(
        self,
        paths: Mapping[tuple[int, int], tuple[Path, ...]],
        weights: Mapping[tuple[int, int], float],
    ) -> None:
        self._paths = {pair: tuple(ps) for pair, ps in paths.items()}
        self._latency = {
            pair: tuple(path_length(p, weights) for p in ps) for pair, ps in self._paths.items()
        }
        self._edges = {
            pair: tuple(frozenset(path_edges(p)) for p in ps) for pair, ps in self._paths.items()
        }

    def get(self, m: int, n: int) -> tuple[Path, ...]:
        return self._paths[(m, n)]

    def count(self, m: int, n: int) -> int:
        return len(self._paths[(m, n)])

    def path(self, m: int, n: int, x: int) -> Path:
        return self._paths[(m, n)][x - 1]

    def edges(self, m: int, n: int, x: int) -> tuple[tuple[int, int], ...]:
        return path_edges(self._paths[(m, n)][x - 1])

    def zero_load_latency(self, m: int, n: int, x: int = 1) -> float:
        return self._latency[(m, n)][x - 1]

    def g(self, m: int, n: int, x: int, edge: tuple[int, int]) -> int:
        return int(edge in self._edges[(m, n)][x - 1])

    def pairs(self) -> list[tuple[int, int]]:
        return sorted(self._paths)

    def triples(self) -> Iterator[tuple[int, int, int]]:
        for m, n in self.pairs():
            for x in range(1, len(self._paths[(m, n)]) + 1):
                yield (m, n, x)

    def total(self) -> int:
        return sum(len(ps) for ps in self._paths.values())

    def __eq__(self, other: object) -> bool:
        return isinstance(other, PathSet) and self._paths == other._paths


def _adjacency(weights: Mapping[tuple[int, int], float]) -> dict[int, list[tuple[int, float]]]:
    adj: dict[int, list[tuple[int, float]]] = {}
    for (u, v), w in weights.items():
        adj.setdefault(u, []).append((v, w))
        adj.setdefault(v, [])
    for nbrs in adj.values():
        nbrs.sort()
    return adj


def _dijkstra_path(
    adj: Mapping[int, list[tuple[int, float]]],
    source: int,
    target: int,
    banned_nodes: set[int],
    banned_edges: set[tuple[int, int]],
) -> tuple[float, Path] | None:
    # Heap keyed by (rounded length, node sequence): the first time a node is
    # settled we hold its lexicographically smallest shortest path.
    heap: list[tuple[float, Path, float]] = [(0.0, (source,), 0.0)]
    settled: set[int] = set()
    while heap:
        key, path, dist = heapq.heappop(heap)
        u = path[-1]
        if u in settled:
            continue
        settled.add(u)
        if u == target:
            return dist, path
        for v, w in adj[u]:
            if v in settled or v in banned_nodes or (u, v) in banned_edges:
                continue
            nd = dist + w
            heapq.heappush(heap, (_key(nd), path + (v,), nd))
    return None


def k_shortest_paths(
    weights: Mapping[tuple[int, int], float], source: int, target: int, k: int
) -> list[Path]:
    """Yen's loopless k-shortest paths ordered by (length, zone-id sequence)."""
    if source == target:
        return [(source,)]
    adj = _adjacency(weights)
    first = _dijkstra_path(adj, source, target, set(), set())
    if first is None:
        return []
    accepted: list[tuple[float, Path]] = [(_key(first[0]), first[1])]
    candidates: list[tuple[float, Path]] = []
    known: set[Path] = {first[1]}
    while len(accepted) < k:
        _, last = accepted[-1]
        for i in range(len(last) - 1):
            spur, root = last[i], last[: i + 1]
            banned_edges = {
                (p[i], p[i + 1]) for _, p in accepted if len(p) > i + 1 and p[: i + 1] == root
            }
            banned_nodes = set(root[:-1])
            found = _dijkstra_path(adj, spur, target, banned_nodes, banned_edges)
            if found is None:
                continue
            full = root[:-1] + found[1]
            if full not in known:
                known.add(full)
                heapq.heappush(candidates, (_key(path_length(full, weights)), full))
        if not candidates:
            break
        accepted.append(heapq.heappop(candidates))
    return [p for _, p in accepted]


def enumerate_paths(
    topology: Topology,
    k: int,
    weights: Mapping[tuple[int, int], float] | None = None,
) -> PathSet:
    """Candidate paths for every ordered pair; the self pair gets the empty path."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if weights is None:
        weights = base_weights(topology)
    paths = {}
    for m in topology.zone_ids:
        for n in topology.zone_ids:
            paths[(m, n)] = tuple(k_shortest_paths(weights, m, n, k))
    return PathSet(paths, weights)


# ---------------------------------------------------------------------------
# Betweenness


def betweenness(
    topology: Topology, weights: Mapping[tuple[int, int], float] | None = None
) -> dict[int, float]:
    """Weighted Brandes betweenness over unordered pairs, endpoints excluded."""
    if weights is None:
        weights = base_weights(topology)
    adj = _adjacency(weights)
    nodes = topology.zone_ids
    for v in nodes:
        adj.setdefault(v, [])
    bc = {v: 0.0 for v in nodes}
    for s in nodes:
        order: list[int] = []
        preds: dict[int, list[int]] = {v: [] for v in nodes}
        sigma = dict.fromkeys(nodes, 0)
        dist: dict[int, float] = {}
        sigma[s] = 1
        seen = {s: 0.0}
        heap = [(0.0, s, s)]
        while heap:
            d, pred, v = heapq.heappop(heap)
            if v in dist:
                continue
            sigma[v] += sigma[pred] if pred != v else 0
            order.append(v)
            dist[v] = d
            for w, wt in adj[v]:
                nd = _key(d + wt)
                if w not in dist and (w not in seen or nd < seen[w]):
                    seen[w] = nd
                    heapq.heappush(heap, (nd, v, w))
                    sigma[w] = 0
                    preds[w] = [v]
                elif nd == seen.get(w) and w not in dist:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = dict.fromkeys(nodes, 0.0)
        for w in reversed(order):
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                bc[w] += delta[w]
    return {v: val / 2.0 for v, val in bc.items()}
