"""Exhaustive solvers for tiny instances, used as ground truth in tests."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping

from .model import (
    Configuration,
    CostReport,
    Instance,
    _index,
    sla_satisfied,
    total_objective,
)
from .topology import Topology, base_weights

_TIE = 1e-12


class OracleError(ValueError):
    pass


class OracleLimitError(OracleError):
    """Instance is larger than the oracle is allowed to enumerate."""


class BudgetExceeded(OracleError):
    pass


@dataclass(frozen=True)
class OracleLimits:
    max_zones: int = 5
    max_contents: int = 1
    max_total_demand: int = 6
    max_paths_per_pair: int = 2
    work_budget: int = 3_000_000

    def check(self, instance: Instance) -> None:
        zones = len(instance.topology.zone_ids)
        if zones > self.max_zones:
            raise OracleLimitError(f"{zones} zones > {self.max_zones}")
        if len(instance.demand.contents) > self.max_contents:
            raise OracleLimitError(f"{len(instance.demand.contents)} contents > {self.max_contents}")
        if instance.demand.total > self.max_total_demand:
            raise OracleLimitError(f"total demand {instance.demand.total} > {self.max_total_demand}")
        widest = max(instance.pathset.count(m, n) for m, n in instance.pathset.pairs())
        if widest > self.max_paths_per_pair:
            raise OracleLimitError(f"{widest} paths for a pair > {self.max_paths_per_pair}")
        for amount in instance.demand.counts.values():
            if amount != int(amount):
                raise OracleLimitError("demand must be integral")


@dataclass(frozen=True)
class OracleResult:
    config: Configuration
    objective: float
    report: CostReport
    nodes: int
    leaves: int
    feasible: int
    placements: int

    def stats(self) -> str:
        return (
            f"objective={self.objective!r}\nproviders={len(self.config.placement)}\n"
            f"placements={self.placements}\nnodes={self.nodes}\n"
            f"leaves={self.leaves}\nfeasible={self.feasible}\n"
        )


class _Search:
    """Per-unit assignment DFS with the partial objective as lower bound."""

    def __init__(self, instance: Instance, enforce_sla: bool, budget: int) -> None:
        self.inst = instance
        self.enforce_sla = enforce_sla
        self.budget = budget
        p = instance.params
        topo = instance.topology
        total = instance.demand.total
        self.dir_idx = {e.key: i for i, e in enumerate(topo.edges)}
        self.und_idx = {e.key: i for i, e in enumerate(topo.undirected_edges)}
        # Cost and delay as a function of the number of request units on the edge;
        # None marks an over-capacity load.
        self.cost_by_units = []
        for e in topo.edges:
            lut = instance.cost_luts[e.key]
            row = []
            for u in range(total + 1):
                i = _index(u * p.access_rate, p.granularity)
                row.append(lut[i] if i < len(lut) else None)
            self.cost_by_units.append(row)
        self.delay_by_units = []
        for e in topo.undirected_edges:
            lut = instance.latency_luts[e.key]
            row = []
            for u in range(2 * total + 1):
                i = _index(u * p.access_rate, p.granularity)
                row.append(lut[i] if i < len(lut) else None)
            self.delay_by_units.append(row)
        self.path_dir: dict[tuple[int, int, int], list[int]] = {}
        self.path_und: dict[tuple[int, int, int], list[int]] = {}
        for t in instance.pathset.triples():
            edges = instance.pathset.edges(*t)
            self.path_dir[t] = [self.dir_idx[e] for e in edges]
            self.path_und[t] = [self.und_idx[(min(e), max(e))] for e in edges]
        self.nodes = 0
        self.leaves = 0
        self.feasible = 0

    def _cost(self, storage: float, dir_units, und_units, used) -> tuple[float, int, int] | None:
        """Objective of the partial assignment, or None if a link is over capacity."""
        bw = 0.0
        for i, u in enumerate(dir_units):
            c = self.cost_by_units[i][u]
            if c is None:
                return None
            bw += c
        delays = []
        for i, u in enumerate(und_units):
            d = self.delay_by_units[i][u]
            if d is None:
                return None
            delays.append(d)
        p = self.inst.params
        degree = 0.0
        n_used = n_viol = 0
        for t, cnt in used.items():
            if cnt <= 0:
                continue
            n_used += 1
            gamma = sum(delays[i] for i in self.path_und[t])
            if gamma + p.fixed_latency > p.qos + 1e-9:
                n_viol += 1
                degree += gamma / p.latency_cap
        return storage + bw + degree, n_used, n_viol

    def run(self, placement: tuple[tuple[int, int], ...], best: float):
        """Best routing for a fixed placement whose objective is <= ``best`` (with ties)."""
        inst = self.inst
        ps = inst.pathset
        storage = sum(inst.topology.zone(m).storage_cost for m, _ in placement)
        hosts = {}
        for m, k in placement:
            hosts.setdefault(k, []).append(m)
        units = []  # one entry per request unit: (consumer index, option list)
        consumers = []
        for (n, k), r in sorted(inst.demand.counts.items()):
            opts = [(m, n, x, k) for m in sorted(hosts.get(k, ())) for x in range(1, ps.count(m, n) + 1)]
            if not opts:
                return None
            ci = len(consumers)
            consumers.append((n, k))
            units += [(ci, opts)] * r
        dir_units = [0] * len(self.dir_idx)
        und_units = [0] * len(self.und_idx)
        used: dict[tuple[int, int, int], int] = {}
        host_use = {cell: 0 for cell in placement}
        chosen: list[tuple[int, int, int, int]] = []
        found: list = [None, best]
        sla = inst.params.sla

        def dfs(u: int, start: int) -> None:
            self.nodes += 1
            if self.nodes > self.budget:
                raise BudgetExceeded(f"oracle work budget {self.budget} exhausted")
            if u == len(units):
                self.leaves += 1
                if any(v == 0 for v in host_use.values()):
                    return  # dominated: dropping the idle host is strictly cheaper
                res = self._cost(storage, dir_units, und_units, used)
                if res is None:
                    return
                obj, n_used, n_viol = res
                if self.enforce_sla and not sla_satisfied(n_viol, n_used, sla):
                    return
                self.feasible += 1
                if found[0] is None and obj <= found[1] + _TIE or obj < found[1] - _TIE:
                    found[0], found[1] = list(chosen), obj
                return
            ci, opts = units[u]
            first = start if u > 0 and units[u - 1][0] == ci else 0
            for oi in range(first, len(opts)):
                m, n, x, k = opts[oi]
                t = (m, n, x)
                for i in self.path_dir[t]:
                    dir_units[i] += 1
                for i in self.path_und[t]:
                    und_units[i] += 1
                used[t] = used.get(t, 0) + 1
                host_use[(m, k)] += 1
                chosen.append(opts[oi])
                res = self._cost(storage, dir_units, und_units, used)
                if res is not None and res[0] <= found[1] + _TIE:
                    dfs(u + 1, oi)
                chosen.pop()
                host_use[(m, k)] -= 1
                used[t] -= 1
                for i in self.path_dir[t]:
                    dir_units[i] -= 1
                for i in self.path_und[t]:
                    und_units[i] -= 1

        dfs(0, 0)
        if found[0] is None:
            return None
        flows: dict[tuple[int, int, int, int], float] = {}
        for key in found[0]:
            flows[key] = flows.get(key, 0) + 1
        return found[1], flows


def _placements(instance: Instance) -> list[tuple[tuple[int, int], ...]]:
    """Candidate host sets: every demanded content hosted, no undemanded content hosted."""
    topo = instance.topology
    demanded = [k for k in instance.demand.contents if instance.demand.content_total(k) > 0]
    per_content = []
    for k in demanded:
        subsets = []
        for size in range(1, len(topo.zone_ids) + 1):
            for combo in itertools.combinations(topo.zone_ids, size):
                subsets.append(tuple((m, k) for m in combo))
        per_content.append(subsets)
    out = []
    for combo in itertools.product(*per_content):
        out.append(tuple(sorted(itertools.chain.from_iterable(combo))))

    def storage(cells):
        return sum(topo.zone(m).storage_cost for m, _ in cells)

    out.sort(key=lambda cells: (storage(cells), len(cells), cells))
    return out


def exact_optimal(
    instance: Instance, limits: OracleLimits | None = None, enforce_sla: bool = True
) -> OracleResult:
    """Minimum-objective configuration over all placements and integral routings.

    Ties are resolved towards fewer providers, then the lexicographically
    smaller placement.
    """
    limits = limits or OracleLimits()
    limits.check(instance)
    search = _Search(instance, enforce_sla, limits.work_budget)
    best_obj = math.inf
    best: tuple | None = None
    tried = 0
    for cells in _placements(instance):
        storage = sum(instance.topology.zone(m).storage_cost for m, _ in cells)
        if storage > best_obj + _TIE:
            break  # placements are sorted by storage cost
        tried += 1
        res = search.run(cells, best_obj)
        if res is None:
            continue
        obj, flows = res
        rank = (len(cells), cells)
        if best is None or obj < best_obj - _TIE or (abs(obj - best_obj) <= _TIE and rank < best[0]):
            best_obj, best = obj, (rank, cells, flows)
    if best is None:
        raise OracleError("no feasible configuration")
    config = Configuration.build(best[1], best[2])
    report = total_objective(config, instance)
    return OracleResult(
        config, report.total, report, search.nodes, search.leaves, search.feasible, tried
    )


# ---------------------------------------------------------------------------
# Betweenness by enumeration


def _simple_paths(adj: Mapping[int, list[tuple[int, float]]], s: int, t: int):
    stack = [(s, (s,), 0.0)]
    while stack:
        u, path, length = stack.pop()
        if u == t:
            yield path, length
            continue
        for v, w in adj[u]:
            if v not in path:
                stack.append((v, path + (v,), length + w))


def bc_bruteforce(
    topology: Topology,
    weights: Mapping[tuple[int, int], float] | None = None,
    max_zones: int = 8,
) -> dict[int, float]:
    """Betweenness from the list of every simple path between every pair."""
    nodes = topology.zone_ids
    if len(nodes) > max_zones:
        raise OracleLimitError(f"{len(nodes)} zones > {max_zones}")
    if weights is None:
        weights = base_weights(topology)
    adj: dict[int, list[tuple[int, float]]] = {v: [] for v in nodes}
    for (u, v), w in weights.items():
        adj[u].append((v, w))
    bc = {v: 0.0 for v in nodes}
    for s, t in itertools.combinations(nodes, 2):
        paths = list(_simple_paths(adj, s, t))
        shortest = min(length for _, length in paths)
        best = [p for p, length in paths if math.isclose(length, shortest, rel_tol=1e-9, abs_tol=1e-12)]
        for v in nodes:
            if v in (s, t):
                continue
            through = sum(1 for p in best if v in p)
            bc[v] += through / len(best)
    return bc
