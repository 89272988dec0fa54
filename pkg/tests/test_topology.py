import itertools
import math
import random

import networkx as nx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cdnplace.harness import random_topology
from cdnplace.oracle import bc_bruteforce
from cdnplace.topology import (
    DEFAULT_LINK_MODEL,
    INTER_REGION,
    INTER_ZONE,
    DelayParams,
    Edge,
    LinkModel,
    Tariff,
    TopologyError,
    Zone,
    base_weights,
    betweenness,
    build_bandwidth_cost_lut,
    build_latency_lut,
    build_luts,
    build_topology,
    check_tariff_dominance,
    dump_topology,
    enumerate_paths,
    generate_amazon_na,
    k_shortest_paths,
    load_link_model,
    load_topology,
    path_length,
    zero_load_weights,
)

from conftest import cycle_topology, line_topology, star_topology


# -- loading -----------------------------------------------------------------

def test_two_zone_document_gets_reverse_edge():
    topo = load_topology("region 1\nzone 1 1 0.5\nzone 2 1 0.4\nedge 1 2 100 inter-zone\n")
    assert len(topo.edges) == 2
    assert len(topo.undirected_edges) == 1
    assert topo.edge(2, 1).capacity == 100


def test_fixture_shape():
    topo = generate_amazon_na()
    assert len(topo.zone_ids) == 11
    assert len(topo.regions) == 3
    assert [len(topo.zones_in_region(r)) for r in topo.regions] == [5, 3, 3]


@pytest.mark.parametrize(
    "doc",
    [
        "zone 1 1 0\nzone 2 1 0.5\nedge 1 2 100 inter-zone\n",
        "zone 1 1 1.5\nzone 2 1 0.5\nedge 1 2 100 inter-zone\n",
        "zone 1 1 0.5\nzone 1 1 0.5\n",
        "zone 1 1 0.5\nzone 2 1 0.5\nzone 3 1 0.5\nedge 1 2 100 inter-zone\n",
        "zone 1 1 0.5\nzone 2 1 0.5\nedge 1 2 0 inter-zone\n",
        "zone 1 1 0.5\nzone 2 1 0.5\nedge 1 2 100 backbone\n",
        "zone 1 1 0.5\nzone 2 1 0.5\nedge 1 3 100 inter-zone\n",
        "zone 1 1 0.5\nzone 2 1 0.5\nedge 1 1 100 inter-zone\n",
        "zone 1 1 0.5\nzone 2 1 0.5\nedge 1 2 100 inter-zone\nedge 2 1 100 inter-zone\n",
        "zone 1 1 abc\n",
        "bogus line\n",
        "region 1\nzone 1 2 0.5\n",
    ],
)
def test_malformed_documents_rejected(doc):
    with pytest.raises(TopologyError):
        load_topology(doc)


def test_asymmetric_edges_rejected():
    zones = (Zone(1, 1, 0.5), Zone(2, 1, 0.5))
    from cdnplace.topology import Topology

    with pytest.raises(TopologyError):
        Topology(zones, (Edge(1, 2, 100, INTER_ZONE),))
    with pytest.raises(TopologyError):
        Topology(zones, (Edge(1, 2, 100, INTER_ZONE), Edge(2, 1, 50, INTER_ZONE)))


def test_comments_and_roundtrip():
    topo = generate_amazon_na()
    text = "# header\n" + dump_topology(topo).replace("\n", "  # trailing\n", 1)
    again = load_topology(text)
    assert again.zone_ids == topo.zone_ids
    assert {e.key for e in again.edges} == {e.key for e in topo.edges}
    assert [z.storage_cost for z in again.zones] == [z.storage_cost for z in topo.zones]


# -- Amazon NA -----------------------------------------------------------------

def test_amazon_capacities():
    topo = generate_amazon_na(100, 1000)
    for e in topo.edges:
        assert e.capacity == (100 if e.kind == INTER_REGION else 1000)
        assert (e.kind == INTER_REGION) == (topo.region_of(e.src) != topo.region_of(e.dst))


def test_amazon_edge_counts():
    topo = generate_amazon_na()
    region1 = set(topo.zones_in_region(1))
    intra = [e for e in topo.edges if e.src in region1 and e.dst in region1]
    assert len(intra) == 20
    assert len([e for e in topo.undirected_edges if e.kind == INTER_REGION]) == 3
    gateways = {min(topo.zones_in_region(r)) for r in topo.regions}
    for e in topo.edges:
        if e.kind == INTER_REGION:
            assert e.src in gateways and e.dst in gateways


def test_amazon_seeded_costs():
    a = generate_amazon_na(seed=4)
    b = generate_amazon_na(seed=4)
    assert [z.storage_cost for z in a.zones] == [z.storage_cost for z in b.zones]
    assert all(0.2 <= z.storage_cost <= 1.0 for z in a.zones)
    assert [z.storage_cost for z in a.zones] != [z.storage_cost for z in generate_amazon_na().zones]


def test_amazon_rejects_indivisible_capacity():
    with pytest.raises(TopologyError):
        generate_amazon_na(105, 1000)


# -- LUTs ----------------------------------------------------------------------

def _edge(cap=100.0, kind=INTER_ZONE):
    return Edge(1, 2, cap, kind)


def test_latency_lut_examples():
    lut = build_latency_lut(_edge(), DelayParams(2.0, 8.0), 10.0, 1000.0)
    assert lut[0] == 2.0
    assert lut[5] == pytest.approx(10.0)
    assert lut[10] == 1000.0
    assert len(lut) == 11


def test_latency_lut_errors():
    with pytest.raises(ValueError):
        build_latency_lut(_edge(105.0), DelayParams(2.0, 8.0), 10.0, 1000.0)
    with pytest.raises(ValueError):
        build_latency_lut(_edge(), DelayParams(2.0, 8.0), 10.0, 2.0)


def test_bandwidth_lut_examples():
    tiered = build_bandwidth_cost_lut(_edge(), Tariff(((0.4, 1.0), (1.0, 0.5))), 10.0)
    assert tiered[0] == 0
    assert tiered[6] == pytest.approx(50.0)
    flat = build_bandwidth_cost_lut(_edge(), Tariff(((1.0, 0.3),)), 10.0)
    assert [flat[p] for p in range(11)] == pytest.approx([0.3 * p * 10 for p in range(11)])


@pytest.mark.parametrize(
    "tiers",
    [((0.4, 0.5), (1.0, 1.0)), ((0.4, 0.5), (1.0, 0.5)), ((0.5, 1.0),), ((0.6, 1.0), (0.4, 0.5)), ()],
)
def test_bad_tariffs_rejected(tiers):
    with pytest.raises(ValueError):
        Tariff(tiers)


@given(
    cap_steps=st.integers(1, 60),
    base=st.floats(0.5, 50),
    qmul=st.floats(0, 20),
    rates=st.lists(st.floats(1e-4, 1.0), min_size=1, max_size=4, unique=True),
)
def test_lut_shape_properties(cap_steps, base, qmul, rates):
    edge = _edge(cap_steps * 10.0)
    lat = build_latency_lut(edge, DelayParams(base, base * qmul), 10.0, 1000.0 + base)
    assert lat[0] == base
    assert all(a <= b for a, b in zip(lat.values, lat.values[1:]))
    assert lat[len(lat) - 1] == 1000.0 + base
    rates = sorted(rates, reverse=True)
    fracs = [(i + 1) / len(rates) for i in range(len(rates))]
    lut = build_bandwidth_cost_lut(edge, Tariff(tuple(zip(fracs, rates))), 10.0)
    assert lut[0] == 0
    steps = [b - a for a, b in zip(lut.values, lut.values[1:])]
    assert all(s >= 0 for s in steps)
    assert all(b <= a + 1e-12 for a, b in zip(steps, steps[1:]))


def test_default_tariff_dominance():
    check_tariff_dominance(DEFAULT_LINK_MODEL, 1000, 100, 10)
    _, cost = build_luts(generate_amazon_na(), DEFAULT_LINK_MODEL, 10, 1000)
    zone = cost[(1, 2)]
    region = cost[(1, 6)]
    for p in range(1, len(region)):
        assert region[p] > zone[p]


def test_dominance_violation_detected():
    flat = Tariff(((1.0, 0.01),))
    lm = LinkModel(DEFAULT_LINK_MODEL.delay, {INTER_ZONE: flat, INTER_REGION: flat})
    with pytest.raises(ValueError):
        build_luts(generate_amazon_na(), lm, 10, 1000)


def test_link_model_ini_matches_defaults():
    from importlib import resources

    text = resources.files("cdnplace.data").joinpath("network.ini").read_text()
    assert load_link_model(text) == DEFAULT_LINK_MODEL
    custom = load_link_model("[inter-zone]\nbase = 3\ntariff = 1.0:0.2\n")
    assert custom.delay[INTER_ZONE] == DelayParams(3.0, DEFAULT_LINK_MODEL.delay[INTER_ZONE].queue)
    assert custom.tariff[INTER_ZONE] == Tariff(((1.0, 0.2),))
    with pytest.raises(ValueError):
        load_link_model("[core]\nbase = 1\n")


def test_default_delay_params():
    assert DEFAULT_LINK_MODEL.delay[INTER_ZONE] == DelayParams(2.0, 16.0)
    assert DEFAULT_LINK_MODEL.delay[INTER_REGION] == DelayParams(40.0, 320.0)


# -- paths -----------------------------------------------------------------------

def test_line_has_single_path():
    ps = enumerate_paths(line_topology(), 2)
    assert ps.get(1, 3) == ((1, 2, 3),)
    assert ps.edges(1, 3, 1) == ((1, 2), (2, 3))


def test_cycle_has_two_equal_paths():
    ps = enumerate_paths(cycle_topology(4), 2)
    assert ps.get(1, 3) == ((1, 2, 3), (1, 4, 3))
    assert ps.zero_load_latency(1, 3, 1) == ps.zero_load_latency(1, 3, 2)


def test_self_pair_is_empty_path():
    ps = enumerate_paths(line_topology(), 3)
    for m in (1, 2, 3):
        assert ps.count(m, m) == 1
        assert ps.edges(m, m, 1) == ()
        assert ps.zero_load_latency(m, m) == 0


def test_indicator_g():
    ps = enumerate_paths(line_topology(), 1)
    assert ps.g(1, 3, 1, (1, 2)) == 1
    assert ps.g(1, 3, 1, (2, 1)) == 0


def _simple_paths(weights, s, t):
    G = nx.DiGraph()
    G.add_weighted_edges_from((i, j, w) for (i, j), w in weights.items())
    return [tuple(p) for p in nx.all_simple_paths(G, s, t)]


def _weighted(rng, topo):
    w = {}
    for e in topo.undirected_edges:
        w[(e.src, e.dst)] = w[(e.dst, e.src)] = float(rng.choice([1, 2, 3]))
    return w


@pytest.mark.parametrize("seed", range(60))
def test_yen_matches_exhaustive_ranking(seed):
    rng = random.Random(seed)
    topo = random_topology(rng, rng.randint(2, 7), extra_edge_prob=0.5)
    w = _weighted(rng, topo)
    for s, t in itertools.permutations(topo.zone_ids, 2):
        ranked = sorted(_simple_paths(w, s, t), key=lambda p: (round(path_length(p, w), 9), p))
        assert k_shortest_paths(w, s, t, 3) == ranked[:3]


@given(st.integers(0, 10_000))
def test_paths_sorted_simple_and_deterministic(seed):
    rng = random.Random(seed)
    topo = random_topology(rng, rng.randint(2, 8))
    lat, _ = build_luts(topo, DEFAULT_LINK_MODEL, 10, 1000)
    w = zero_load_weights(lat)
    ps = enumerate_paths(topo, 3, w)
    assert ps == enumerate_paths(topo, 3, w)
    for m, n in ps.pairs():
        paths = ps.get(m, n)
        assert len(set(paths)) == len(paths)
        assert all(len(set(p)) == len(p) for p in paths)
        lengths = [path_length(p, w) for p in paths]
        assert lengths == sorted(lengths)
        assert all(p[0] == m and p[-1] == n for p in paths)


# -- betweenness ---------------------------------------------------------------

def test_bc_examples():
    assert betweenness(line_topology()) == {1: 0, 2: 1, 3: 0}
    assert betweenness(star_topology(3)) == {1: 3, 2: 0, 3: 0, 4: 0}
    assert betweenness(cycle_topology(4)) == {v: 0.5 for v in range(1, 5)}


def test_bc_complete_graph_zero():
    zones = [Zone(i, 1, 0.5) for i in (1, 2, 3)]
    topo = build_topology(zones, [(1, 2, 100, INTER_ZONE), (1, 3, 100, INTER_ZONE), (2, 3, 100, INTER_ZONE)])
    assert set(betweenness(topo).values()) == {0}


def test_bc_amazon_gateways():
    bc = betweenness(generate_amazon_na())
    gateways = {1, 6, 9}
    assert all(bc[v] > 0 for v in gateways)
    assert all(bc[v] == 0 for v in bc if v not in gateways)
    assert bc[1] > bc[6] == bc[9]


@pytest.mark.parametrize("seed", range(40))
def test_bc_matches_networkx(seed):
    rng = random.Random(seed)
    topo = random_topology(rng, rng.randint(2, 10))
    w = _weighted(rng, topo)
    G = nx.Graph()
    G.add_weighted_edges_from((i, j, v) for (i, j), v in w.items())
    ref = nx.betweenness_centrality(G, weight="weight", normalized=False)
    got = betweenness(topo, w)
    for v in topo.zone_ids:
        assert got[v] == pytest.approx(ref[v], abs=1e-9)


@given(st.integers(0, 10_000))
def test_bc_matches_bruteforce_property(seed):
    rng = random.Random(seed)
    topo = random_topology(rng, rng.randint(2, 7))
    w = _weighted(rng, topo) if rng.random() < 0.5 else base_weights(topo)
    got = betweenness(topo, w)
    ref = bc_bruteforce(topo, w)
    assert all(math.isclose(got[v], ref[v], abs_tol=1e-12) for v in got)
