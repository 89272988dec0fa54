import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cdnplace.harness import validity_instance
from cdnplace.heuristics import PriorityKind, place
from cdnplace.model import (
    CapacityError,
    Configuration,
    DemandMatrix,
    FlowAssignment,
    Params,
    bandwidth_cost,
    classify_violations,
    edge_delay,
    edge_loads,
    evaluate,
    make_instance,
    path_latency,
    sla_satisfied,
    total_objective,
    validate,
    violations_to_csv,
)
from cdnplace.topology import (
    DEFAULT_LINK_MODEL,
    DelayParams,
    Edge,
    INTER_ZONE,
    Tariff,
    build_bandwidth_cost_lut,
    build_latency_lut,
    enumerate_paths,
    generate_amazon_na,
)

from conftest import instance, line_topology, two_region_topology


@pytest.fixture
def lat_lut():
    return build_latency_lut(Edge(1, 2, 100.0, INTER_ZONE), DelayParams(2.0, 16.0), 10.0, 1000.0)


@pytest.fixture
def cost_lut():
    return build_bandwidth_cost_lut(Edge(1, 2, 100.0, INTER_ZONE), Tariff(((0.4, 1.0), (1.0, 0.5))), 10.0)


# -- loads -----------------------------------------------------------------------

def test_edge_loads_examples():
    ps = enumerate_paths(line_topology(), 1)
    one = edge_loads([FlowAssignment(1, 3, 1, 1, 2)], ps, 10.0)
    assert one[(1, 2)] == 20 and one[(2, 3)] == 20
    assert set(edge_loads([], ps, 10.0, [(1, 2), (2, 1)]).values()) == {0.0}
    two = edge_loads([FlowAssignment(1, 2, 1, 1, 1), FlowAssignment(1, 3, 1, 1, 3)], ps, 10.0)
    assert two[(1, 2)] == 40
    assert (2, 1) not in two


# -- delays and costs ----------------------------------------------------------

def test_edge_delay_examples(lat_lut):
    assert edge_delay(lat_lut, 0, 0, 10) == lat_lut[0]
    assert edge_delay(lat_lut, 30, 20, 10) == lat_lut[5]
    assert edge_delay(lat_lut, 31, 20, 10) == lat_lut[6]
    with pytest.raises(CapacityError):
        edge_delay(lat_lut, 60, 50, 10)


@given(st.floats(0, 100), st.floats(0, 100))
def test_edge_delay_symmetric(a, b):
    lut = build_latency_lut(Edge(1, 2, 200.0, INTER_ZONE), DelayParams(2.0, 16.0), 10.0, 1000.0)
    assert edge_delay(lut, a, b, 10) == edge_delay(lut, b, a, 10)


def test_path_latency_examples():
    assert path_latency((), {}) == 0
    assert path_latency(((1, 2), (3, 2)), {(1, 2): 10, (2, 3): 15}) == 25


def test_cross_region_zero_load_latency():
    inst = instance(generate_amazon_na(), {(6, 1): 1})
    ev = evaluate(Configuration(), inst)
    assert inst.pathset.path(2, 6, 1) == (2, 1, 6)
    assert path_latency(inst.pathset.edges(2, 6, 1), ev.delays) == 42


def test_bandwidth_cost_examples(cost_lut):
    assert bandwidth_cost(cost_lut, 0, 10) == 0
    assert bandwidth_cost(cost_lut, 10, 10) == cost_lut[1]
    assert bandwidth_cost(cost_lut, 47, 10) == cost_lut[5]
    with pytest.raises(CapacityError):
        bandwidth_cost(cost_lut, 101, 10)


# -- QoS flags and SLA -----------------------------------------------------------

def test_classify_violations_examples():
    params = Params()
    lat = {(1, 2, 1): 85.0, (1, 3, 1): 75.0, (2, 3, 1): 5000.0}
    a, z = classify_violations(lat, [(1, 2, 1), (1, 3, 1)], params)
    assert (a[(1, 2, 1)], z[(1, 2, 1)]) == (1, 1)
    assert (a[(1, 3, 1)], z[(1, 3, 1)]) == (1, 0)
    assert (a[(2, 3, 1)], z[(2, 3, 1)]) == (0, 0)


def test_classify_boundary_is_not_violation():
    a, z = classify_violations({(1, 2, 1): 80.0}, [(1, 2, 1)], Params())
    assert z[(1, 2, 1)] == 0


def test_sla_examples():
    assert sla_satisfied(2, 100, 98)
    assert not sla_satisfied(3, 100, 98)
    assert sla_satisfied(0, 0, 98)
    assert sla_satisfied({(1, 1, 1): 0}, {(1, 1, 1): 1}, 100)


@given(st.integers(0, 500), st.integers(0, 500), st.floats(1, 100))
def test_sla_matches_inequality(nz, na, s):
    expected = nz <= (1 - s / 100) * na + 1e-9
    assert sla_satisfied(nz, na, s) == expected


# -- objective --------------------------------------------------------------------

def test_empty_configuration_costs_nothing(line3):
    inst = instance(line3, {(1, 1): 1})
    rep = total_objective(Configuration(), inst)
    assert (rep.storage_cost, rep.bandwidth_cost, rep.violation_degree, rep.total) == (0, 0, 0, 0)
    assert rep.sla_violation_rate == 0


def test_single_placement_term_isolation(line3):
    inst = instance(line3, {(1, 1): 1})
    rep = total_objective(Configuration(frozenset({(1, 1)})), inst)
    assert rep.storage_cost == 0.5
    assert rep.bandwidth_cost == 0
    assert rep.violation_degree == 0


def test_objective_by_hand():
    # two regions; serve zone 4 from zone 2 over 2-1-3-4
    topo = two_region_topology()
    inst = instance(topo, {(4, 1): 3}, access_rate=10.0)
    cfg = Configuration.build({(2, 1)}, {(2, 4, 1, 1): 3})
    rep = total_objective(cfg, inst)
    zone_t = DEFAULT_LINK_MODEL.tariff[INTER_ZONE]
    region_t = DEFAULT_LINK_MODEL.tariff["inter-region"]
    expect_bw = 2 * zone_t.cost(30, 1000) + region_t.cost(30, 100)
    assert rep.storage_cost == 0.5
    assert rep.bandwidth_cost == pytest.approx(expect_bw, rel=1e-12)
    lat = inst.latency_luts
    gamma = lat[(1, 2)][3] + lat[(1, 3)][3] + lat[(3, 4)][3]
    assert gamma + 20 > 100
    assert rep.violation_degree == pytest.approx(gamma / 1000)
    assert rep.sla_violation_rate == 1.0
    assert rep.request_violation_rate == 1.0
    assert rep.total == pytest.approx(rep.storage_cost + rep.bandwidth_cost + rep.violation_degree)


@given(st.integers(0, 300), st.randoms(use_true_random=False))
def test_objective_is_order_independent(seed, rnd):
    inst = validity_instance(seed % 40)
    cfg = place(inst, PriorityKind.GS)
    flows = list(cfg.flows)
    rnd.shuffle(flows)
    shuffled = Configuration(cfg.placement, tuple(flows))
    a, b = total_objective(cfg, inst), total_objective(shuffled, inst)
    assert a.total == pytest.approx(b.total, rel=1e-12)
    assert a.total == pytest.approx(a.storage_cost + a.bandwidth_cost + a.violation_degree)


@given(st.integers(0, 10_000))
def test_adding_flow_is_monotone(seed):
    rng = random.Random(seed)
    topo = two_region_topology(cap_region=200.0)
    inst = make_instance(topo, DemandMatrix({(4, 1): 1}), Params(access_rate=10.0))
    ps = inst.pathset
    triples = list(ps.triples())
    flows = {}
    for _ in range(rng.randint(0, 5)):
        t = rng.choice(triples)
        flows[(*t, 1)] = flows.get((*t, 1), 0) + 1
    placement = {(m, 1) for m in topo.zone_ids}
    base = Configuration.build(placement, flows)
    t = rng.choice(triples)
    more = dict(flows)
    more[(*t, 1)] = more.get((*t, 1), 0) + 1
    bigger = Configuration.build(placement, more)
    try:
        ev2 = evaluate(bigger, inst)
    except CapacityError:
        return
    ev1 = evaluate(base, inst)
    assert all(ev2.loads[e] >= ev1.loads[e] for e in ev1.loads)
    assert all(ev2.delays[e] >= ev1.delays[e] for e in ev1.delays)
    assert total_objective(bigger, inst).bandwidth_cost >= total_objective(base, inst).bandwidth_cost


# -- validation --------------------------------------------------------------------

@pytest.mark.parametrize("kind", list(PriorityKind))
def test_heuristic_output_validates(kind):
    for seed in range(5):
        inst = validity_instance(seed)
        cfg = place(inst, kind)
        assert validate(cfg, inst, sla_lenient=kind is not PriorityKind.WSNA) == []


def test_unmet_demand_reported(line3):
    inst = instance(line3, {(3, 1): 2})
    cfg = Configuration.build({(3, 1)}, {(3, 3, 1, 1): 1})
    found = validate(cfg, inst)
    assert [(v.constraint, v.entity) for v in found] == [("1", "demand[3,1]")]


def test_flow_from_non_host_reported(line3):
    inst = instance(line3, {(3, 1): 1})
    cfg = Configuration.build({(3, 1)}, {(1, 3, 1, 1): 1})
    found = validate(cfg, inst)
    assert any(v.constraint == "2" and v.entity == "x[1,1]" for v in found)


def test_capacity_violation_reported():
    topo = line_topology(capacity=20.0)
    inst = instance(topo, {(3, 1): 3})
    cfg = Configuration.build({(1, 1)}, {(1, 3, 1, 1): 3})
    kinds = {v.constraint for v in validate(cfg, inst)}
    assert {"8", "12"} <= kinds


def test_bad_path_and_content_reported(line3):
    inst = instance(line3, {(3, 1): 1})
    cfg = Configuration.build({(1, 1)}, {(1, 3, 1, 1): 1, (1, 3, 5, 1): 1, (1, 3, 1, 9): 1})
    kinds = [v.constraint for v in validate(cfg, inst)]
    assert "path" in kinds and "content" in kinds


def test_sla_row_and_lenient_mode():
    topo = two_region_topology()
    inst = instance(topo, {(4, 1): 3})
    cfg = Configuration.build({(2, 1)}, {(2, 4, 1, 1): 3})
    assert [v.constraint for v in validate(cfg, inst)] == ["6"]
    assert validate(cfg, inst, sla_lenient=True) == []
    text = violations_to_csv(validate(cfg, inst))
    assert text.splitlines()[0] == "constraint,entity,lhs,rhs"


# -- parameters and serialization ------------------------------------------------------

@pytest.mark.parametrize(
    "kw", [dict(qos=0), dict(sla=0), dict(sla=101), dict(access_rate=-1), dict(granularity=0), dict(k_paths=0)]
)
def test_params_rejected(kw):
    with pytest.raises(ValueError):
        Params(**kw)


def test_big_k_floor(line3):
    inst = instance(line3, {(3, 1): 2})
    assert inst.big_k >= 1 + inst.demand.total
    assert inst.big_k >= max(inst.path_bound.values()) + 20
    with pytest.raises(ValueError):
        _ = instance(line3, {(3, 1): 2}, big_k=3.0).big_k


def test_all_surrogates_cost():
    inst = instance(generate_amazon_na(), {(1, 1): 1})
    assert inst.all_surrogates_cost == pytest.approx(sum(z.storage_cost for z in inst.topology.zones))


def test_demand_csv_roundtrip():
    d = DemandMatrix({(3, 1): 2, (1, 2): 4, (2, 1): 0}, (1, 2))
    again = DemandMatrix.from_csv(d.to_csv())
    assert again == d
    assert d.zones() == [1, 3]
    with pytest.raises(ValueError):
        DemandMatrix({(1, 1): -1})
    with pytest.raises(ValueError):
        DemandMatrix({(1, 3): 1}, (1,))


def test_configuration_csv_roundtrip():
    cfg = Configuration.build({(1, 1), (2, 1)}, {(1, 3, 1, 1): 2, (2, 3, 2, 1): 1.5})
    text = cfg.to_csv()
    assert text.splitlines()[0] == "x,1,1"
    assert "y,1,3,1,1,2" in text.splitlines()
    assert Configuration.from_csv(text) == cfg
    with pytest.raises(ValueError):
        Configuration.from_csv("q,1,2\n")
