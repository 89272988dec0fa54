import pytest
from hypothesis import HealthCheck, settings

from cdnplace.model import DemandMatrix, Params, make_instance
from cdnplace.topology import INTER_REGION, INTER_ZONE, Zone, build_topology

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def line_topology(alphas=(0.5, 0.5, 0.5), capacity=1000.0, kind=INTER_ZONE):
    zones = [Zone(i + 1, 1, a) for i, a in enumerate(alphas)]
    links = [(i, i + 1, capacity, kind) for i in range(1, len(alphas))]
    return build_topology(zones, links)


def cycle_topology(n=4, capacity=1000.0):
    zones = [Zone(i, 1, 0.5) for i in range(1, n + 1)]
    links = [(i, i % n + 1, capacity, INTER_ZONE) for i in range(1, n + 1)]
    return build_topology(zones, links)


def star_topology(leaves=3, capacity=1000.0):
    zones = [Zone(i, 1, 0.5) for i in range(1, leaves + 2)]
    links = [(1, i, capacity, INTER_ZONE) for i in range(2, leaves + 2)]
    return build_topology(zones, links)


def two_region_topology(cap_region=100.0, cap_zone=1000.0):
    """Region 1 = {1, 2}, region 2 = {3, 4}; gateways 1 and 3."""
    zones = [Zone(1, 1, 0.5), Zone(2, 1, 0.5), Zone(3, 2, 0.5), Zone(4, 2, 0.5)]
    links = [
        (1, 2, cap_zone, INTER_ZONE),
        (3, 4, cap_zone, INTER_ZONE),
        (1, 3, cap_region, INTER_REGION),
    ]
    return build_topology(zones, links)


def instance(topology, counts, contents=(1,), **params):
    return make_instance(topology, DemandMatrix(counts, contents), Params(**params))


@pytest.fixture
def line3():
    return line_topology()
