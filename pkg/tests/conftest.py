import sys
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).parent
sys.path.insert(0, str(TESTS_DIR))

from ctirag.gateway import Gateway, ScriptedMockProvider
from ctirag.graph_store import PropertyGraph


@pytest.fixture
def small_graph() -> PropertyGraph:
    """APT37 -uses-> RokRAT -targets_sector-> Media, plus one CVE/incident."""
    g = PropertyGraph()
    actor = g.merge_node("ThreatActor", {"name": "APT37", "summary": "espionage group"})
    malware = g.merge_node("Malware", {"name": "RokRAT", "summary": "remote access trojan"})
    sector = g.merge_node("Sector", {"name": "Media"})
    cve = g.merge_node("CVE", {"name": "CVE-2022-41128"})
    incident = g.merge_node("Incident", {"name": "APT37 Internet Explorer incident"})
    g.merge_edge(actor, malware, "uses", {"evidence": "deployed RokRAT"})
    g.merge_edge(malware, sector, "targets_sector")
    g.merge_edge(cve, incident, "exploited_in", {"date": "2022-11"})
    g.merge_edge(incident, actor, "attributed_to")
    g.freeze()
    return g


def mock_gateway(script) -> Gateway:
    return Gateway(ScriptedMockProvider(script))


@pytest.fixture
def gateway_factory():
    return mock_gateway
