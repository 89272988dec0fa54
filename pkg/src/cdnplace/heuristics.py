"""Surrogate priorities and the greedy push-based placement procedure.

All three strategies share the same placement loop and differ in how the
surrogate list is ranked.  Only W-SNA runs the SLA repair loop and the
final violation-degree pass.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping

from .model import (
    Configuration,
    CostReport,
    DemandMatrix,
    FlowKey,
    Instance,
    evaluate,
    sla_satisfied,
    total_objective,
)
from .topology import Topology, betweenness, zero_load_weights

log = logging.getLogger(__name__)

_EPS = 1e-9


class InfeasibleError(RuntimeError):
    """Demand cannot be routed even with every zone acting as a provider."""


class PriorityKind(enum.Enum):
    WSNA = "wsna"
    GS = "gs"
    SNA = "sna"

    @classmethod
    def parse(cls, name: str) -> "PriorityKind":
        try:
            return cls(name.strip().lower().replace("-", ""))
        except ValueError:
            raise ValueError(f"unknown heuristic {name!r}; expected wsna, gs or sna") from None


# ---------------------------------------------------------------------------
# Priorities


def bc_shares(bc: Mapping[int, float]) -> dict[int, float]:
    """Normalized BC; uniform when no vertex carries transit traffic."""
    total = sum(bc.values())
    if total <= 0:
        return {v: 1.0 / len(bc) for v in bc}
    return {v: val / total for v, val in bc.items()}


def storage_factor(m: int, topology: Topology, n_contents: int) -> float:
    """One minus the cost of hosting the whole catalog at ``m``, normalized by the dearest zone."""
    dearest = max(z.storage_cost for z in topology.zones) * n_contents
    return 1.0 - topology.zone(m).storage_cost * n_contents / dearest


def request_share(m: int, demand: DemandMatrix) -> float:
    return demand.zone_total(m) / demand.total


def regional_share(m: int, demand: DemandMatrix, topology: Topology) -> float:
    """Share of all requests issued inside ``m``'s region."""
    region = topology.region_of(m)
    local = sum(r for (n, _), r in demand.counts.items() if topology.region_of(n) == region)
    return local / demand.total


def priority_wsna(
    m: int, demand: DemandMatrix, bc: Mapping[int, float], topology: Topology
) -> float:
    return (
        request_share(m, demand)
        * storage_factor(m, topology, len(demand.contents))
        * bc_shares(bc)[m]
    )


def priority_gs(m: int, demand: DemandMatrix, topology: Topology) -> float:
    return demand.zone_total(m) / (topology.zone(m).storage_cost * len(demand.contents))


def priority_sna(m: int, bc: Mapping[int, float]) -> float:
    return bc_shares(bc)[m]


def surrogate_order(
    instance: Instance, kind: PriorityKind, bc: Mapping[int, float] | None = None
) -> list[int]:
    """Zones in the order they are promoted to providers.

    Equal priorities are frequent (zero BC off the transit zones, zero
    demand in sparse scenarios), so each kind breaks ties on its own
    ingredients before falling back to the zone id.
    """
    topo = instance.topology
    demand = instance.demand
    if bc is None:
        bc = betweenness(topo, zero_load_weights(instance.latency_luts))
    shares = bc_shares(bc)
    n_c = len(demand.contents)

    def key(m: int) -> tuple:
        alpha = topo.zone(m).storage_cost
        if kind is PriorityKind.WSNA:
            p = priority_wsna(m, demand, bc, topo)
            sf = storage_factor(m, topo, n_c)
            regional = regional_share(m, demand, topo) * sf * shares[m]
            return (-p, -regional, -shares[m], -request_share(m, demand), -sf, m)
        if kind is PriorityKind.GS:
            return (-priority_gs(m, demand, topo), alpha, m)
        return (-priority_sna(m, bc), m)

    return sorted(topo.zone_ids, key=key)


# ---------------------------------------------------------------------------
# Placement state


@dataclass
class PlacementState:
    """Mutable working state of one placement run."""

    instance: Instance
    kind: PriorityKind
    providers: dict[int, list[int]]
    surrogates: dict[int, list[int]]
    consumers: list[list[int]] = field(default_factory=list)
    flows: dict[FlowKey, int] = field(default_factory=dict)
    edge_units: dict[tuple[int, int], int] = field(default_factory=dict)
    unit_capacity: dict[tuple[int, int], int] = field(default_factory=dict)
    sla_met: bool = True

    @classmethod
    def start(cls, instance: Instance, kind: PriorityKind, order: list[int]) -> "PlacementState":
        rate = instance.params.access_rate
        contents = instance.demand.contents
        state = cls(
            instance=instance,
            kind=kind,
            providers={k: [] for k in contents},
            surrogates={k: list(order) for k in contents},
        )
        for e in instance.topology.edges:
            state.edge_units[e.key] = 0
        for e in instance.topology.undirected_edges:
            state.unit_capacity[e.undirected] = math.floor(e.capacity / rate + _EPS)
        return state

    # -- capacities -------------------------------------------------------

    def residual_units(self, edge: tuple[int, int]) -> int:
        i, j = edge
        und = (i, j) if i < j else (j, i)
        return self.unit_capacity[und] - self.edge_units[(i, j)] - self.edge_units[(j, i)]

    @property
    def residual_capacity(self) -> dict[tuple[int, int], float]:
        """Spare Mbps per directed edge; both directions share one budget."""
        rate = self.instance.params.access_rate
        topo = self.instance.topology
        return {
            e.key: e.capacity - rate * (self.edge_units[e.key] + self.edge_units[(e.dst, e.src)])
            for e in topo.edges
        }

    def path_room(self, m: int, n: int, x: int) -> float:
        edges = self.instance.pathset.edges(m, n, x)
        if not edges:
            return math.inf
        return min(self.residual_units(e) for e in edges)

    # -- flows ------------------------------------------------------------

    def add_flow(self, key: FlowKey, units: int) -> None:
        m, n, x, _ = key
        for e in self.instance.pathset.edges(m, n, x):
            self.edge_units[e] += units
        self.flows[key] = self.flows.get(key, 0) + units

    def remove_flow(self, key: FlowKey, units: int | None = None) -> int:
        held = self.flows[key]
        units = held if units is None else units
        m, n, x, _ = key
        for e in self.instance.pathset.edges(m, n, x):
            self.edge_units[e] -= units
        if units == held:
            del self.flows[key]
        else:
            self.flows[key] = held - units
        return units

    def enqueue(self, n: int, k: int, units: int) -> None:
        if units <= 0:
            return
        for entry in self.consumers:
            if entry[0] == n and entry[1] == k:
                entry[2] += units
                return
        self.consumers.append([n, k, units])

    def release(self, key: FlowKey) -> None:
        units = self.remove_flow(key)
        self.enqueue(key[1], key[3], units)

    def release_region(self, region: int, k: int) -> None:
        topo = self.instance.topology
        for key in sorted(self.flows):
            if key[3] == k and topo.region_of(key[1]) == region:
                self.release(key)

    # -- providers --------------------------------------------------------

    def add_provider(self, k: int) -> int | None:
        remaining = self.surrogates[k]
        while remaining:
            m = remaining.pop(0)
            if m not in self.providers[k]:
                self.providers[k].append(m)
                log.debug("content %d: provider %d added", k, m)
                return m
        return None

    def nearest_providers(self, n: int, k: int) -> list[int]:
        topo = self.instance.topology
        pathset = self.instance.pathset
        region = topo.region_of(n)
        return sorted(
            self.providers[k],
            key=lambda p: (pathset.zero_load_latency(p, n, 1), topo.region_of(p) != region, p),
        )

    # -- snapshots --------------------------------------------------------

    def config(self) -> Configuration:
        placement = {(m, k) for k, ps in self.providers.items() for m in ps}
        return Configuration.build(placement, self.flows)

    def signature(self) -> tuple:
        placement = tuple(sorted((m, k) for k, ps in self.providers.items() for m in ps))
        return (placement, tuple(sorted(self.flows.items())))


# ---------------------------------------------------------------------------
# Placement steps


def _serve(state: PlacementState, entry: list[int]) -> None:
    n, k, need = entry
    pathset = state.instance.pathset
    for p in state.nearest_providers(n, k):
        for x in range(1, pathset.count(p, n) + 1):
            room = state.path_room(p, n, x)
            units = int(min(room, need))
            if units > 0:
                state.add_flow((p, n, x, k), units)
                need -= units
            if need == 0:
                break
        if need == 0:
            break
    entry[2] = need


def satisfy_consumers(state: PlacementState) -> PlacementState:
    """Serve queued consumers from the nearest providers, adding providers when stuck."""
    # largest residual demand first; unmet consumers keep their relative order
    state.consumers.sort(key=lambda c: (-c[2], c[1], c[0]))
    while state.consumers:
        unmet: list[list[int]] = []
        for entry in state.consumers:
            _serve(state, entry)
            if entry[2] > 0:
                unmet.append(entry)
        state.consumers = unmet
        if not unmet:
            break
        for k in sorted({e[1] for e in unmet}):
            if state.add_provider(k) is None:
                raise InfeasibleError(
                    f"content {k}: demand unroutable with every zone as provider"
                )
    return state


def _sla_ok(state: PlacementState) -> tuple[bool, list]:
    ev = evaluate(state.config(), state.instance)
    ok = sla_satisfied(ev.z, ev.a, state.instance.params.sla)
    return ok, ev.violating


def _violating_flows(state: PlacementState, violating) -> list[FlowKey]:
    bad = set(violating)
    return [key for key in sorted(state.flows) if key[:3] in bad]


def sla_repair(state: PlacementState, max_rounds: int | None = None) -> PlacementState:
    """Re-route violating flows, adding providers when re-routing does not help."""
    topo = state.instance.topology
    if max_rounds is None:
        max_rounds = 4 * len(topo.zone_ids) * len(state.instance.demand.contents) + 16
    seen = {state.signature()}
    rounds = 0
    ok, violating = _sla_ok(state)
    while not ok:
        rounds += 1
        progressed = False
        for key in _violating_flows(state, violating):
            ok, current = _sla_ok(state)
            if ok:
                break
            if key not in state.flows or key[:3] not in set(current):
                continue
            before = state.signature()
            state.release(key)
            satisfy_consumers(state)
            after = state.signature()
            stalled = after == before or after in seen or rounds > max_rounds
            if stalled:
                p = state.add_provider(key[3])
                if p is not None:
                    state.release_region(topo.region_of(p), key[3])
                    satisfy_consumers(state)
                    progressed = True
            else:
                progressed = True
            seen.add(state.signature())
        ok, violating = _sla_ok(state)
        if not ok and not progressed:
            log.warning("SLA unmet with every surrogate exhausted; returning best effort")
            state.sla_met = False
            break
    return state


def minimize_violation_degree(state: PlacementState) -> PlacementState:
    """Move violating flows to nearer providers when that is free of extra cost.

    A move is kept only if it lowers the violation degree without raising
    bandwidth cost or the number of violating paths, and keeps the SLA.
    The provider set is frozen.
    """
    instance = state.instance
    topo = instance.topology
    pathset = instance.pathset
    sla = instance.params.sla
    ev = evaluate(state.config(), instance)
    report = total_objective(state.config(), instance, ev)
    was_ok = sla_satisfied(ev.z, ev.a, sla)
    for key in _violating_flows(state, ev.violating):
        if key not in state.flows:
            continue
        ev = evaluate(state.config(), instance)
        if not ev.z.get(key[:3]):
            continue
        m, n, x, k = key
        region = topo.region_of(n)
        candidates = sorted(
            state.providers[k],
            key=lambda p: (topo.region_of(p) != region, pathset.zero_load_latency(p, n, 1), p),
        )
        moved = False
        for p in candidates:
            for x2 in range(1, pathset.count(p, n) + 1):
                if (p, x2) == (m, x):
                    continue
                amount = state.remove_flow(key)
                units = int(min(state.path_room(p, n, x2), amount))
                if units <= 0:
                    state.add_flow(key, amount)
                    continue
                target = (p, n, x2, k)
                state.add_flow(target, units)
                if amount > units:
                    state.add_flow(key, amount - units)
                trial_ev = evaluate(state.config(), instance)
                trial = total_objective(state.config(), instance, trial_ev)
                ok = sla_satisfied(trial_ev.z, trial_ev.a, sla)
                if (
                    trial.violation_degree < report.violation_degree - _EPS
                    and trial.bandwidth_cost <= report.bandwidth_cost + _EPS
                    and trial.violating_paths <= report.violating_paths
                    and (ok or not was_ok)
                ):
                    report = trial
                    moved = True
                    log.debug("degree pass: %s -> %s (%d units)", key, target, units)
                    break
                state.remove_flow(target, units)
                if amount > units:
                    state.remove_flow(key, amount - units)
                state.add_flow(key, amount)
            if moved:
                break
    return state


# ---------------------------------------------------------------------------
# Driver


@dataclass(frozen=True)
class PlacementResult:
    config: Configuration
    kind: PriorityKind
    providers: dict[int, tuple[int, ...]]
    sla_met: bool
    report: CostReport
    before_degree_pass: CostReport | None = None


def run_placement(instance: Instance, kind: PriorityKind) -> PlacementResult:
    """Full placement run returning the configuration plus run metadata."""
    demand = instance.demand
    if demand.total <= 0:
        raise ValueError("placement needs at least one request")
    topo = instance.topology
    order = surrogate_order(instance, kind)
    state = PlacementState.start(instance, kind, order)
    contents = sorted(demand.contents, key=lambda k: (-demand.content_total(k), k))
    for k in contents:
        if demand.content_total(k) == 0:
            continue
        p = state.add_provider(k)
        region = topo.region_of(p)
        local = [n for n in demand.consumers(k) if topo.region_of(n) == region]
        for n in local:
            state.enqueue(n, k, demand.r(n, k))
        satisfy_consumers(state)
        for n in demand.consumers(k):
            if n not in local:
                state.enqueue(n, k, demand.r(n, k))
        satisfy_consumers(state)

    before = None
    if kind is PriorityKind.WSNA:
        sla_repair(state)
        before = total_objective(state.config(), instance)
        minimize_violation_degree(state)
    config = state.config()
    report = total_objective(config, instance)
    sla_met = sla_satisfied(report.violating_paths, report.used_paths, instance.params.sla)
    if kind is PriorityKind.WSNA:
        sla_met = sla_met and state.sla_met
    return PlacementResult(
        config=config,
        kind=kind,
        providers={k: tuple(v) for k, v in state.providers.items()},
        sla_met=sla_met,
        report=report,
        before_degree_pass=before,
    )


def place(instance: Instance, kind: PriorityKind) -> Configuration:
    return run_placement(instance, kind).config
