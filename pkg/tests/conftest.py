import json
import sys
from pathlib import Path

import pytest

from mwsbench.keys import generate_ring, pair_rings
from mwsbench.topology import LocalTopology, TopologyConfig

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def kat():
    return json.loads((DATA / "kat_vectors.json").read_text())


@pytest.fixture(scope="session")
def rings():
    """(client, host) rings holding each other's public keys."""
    client, host = generate_ring("client"), generate_ring("host")
    pair_rings(client, host)
    return client, host


@pytest.fixture(scope="session")
def topology():
    with LocalTopology(TopologyConfig(seed=7)) as topo:
        yield topo


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
