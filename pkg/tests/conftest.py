import os

import hypothesis
import pytest

from foglet.config import EngineConfig
from foglet.engine import Engine
from foglet.topology import load_topology

hypothesis.settings.register_profile(
    "ci", deadline=None, derandomize=True, max_examples=100
)
hypothesis.settings.load_profile("ci")

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SCENARIO_DIR = os.path.join(REPO_ROOT, "scenarios")


def reference_topology_doc() -> dict:
    return {
        "nodes": [
            {"id": "cloud", "tier": "cloud", "region": "core",
             "vcpus": 32, "ram_mib": 65536, "disk_gib": 1000},
            {"id": "cloudlet-a", "tier": "edge_cloudlet", "region": "metro-a",
             "vcpus": 4, "ram_mib": 16384, "disk_gib": 480},
            {"id": "gateway-a", "tier": "edge_gateway", "region": "metro-a",
             "vcpus": 4, "ram_mib": 1024, "disk_gib": 16},
        ],
        "links": [
            {"id": "wan", "a": "cloud", "b": "cloudlet-a",
             "bandwidth_mbps": 2, "latency_ms": 40},
            {"id": "lan-a", "a": "cloudlet-a", "b": "gateway-a",
             "bandwidth_mbps": 100, "latency_ms": 2},
        ],
        "endpoints": [
            {"id": "camera-1", "node": "gateway-a", "kind": "camera"},
        ],
    }


@pytest.fixture
def reference_topology():
    return load_topology(reference_topology_doc())


@pytest.fixture
def reference_engine(reference_topology):
    return Engine(reference_topology, config=EngineConfig())


def camera_app_doc(name="face_detection", store="face_store", svs=False) -> dict:
    requirements = []
    if svs:
        requirements.append({
            "network": {"profile": "signaling_and_video_streaming", "endpoint": "camera-1"}
        })
    return {
        "component": {
            "name": name,
            "image": "demo/face-detection:1.0",
            "flows": [
                {"from_endpoint": "camera-1", "rate_mbps": 4.0},
                {"to_component": store, "rate_mbps": 0.2},
            ],
        },
        "requirements": requirements,
    }


def store_app_doc(name="face_store") -> dict:
    return {
        "component": {"name": name, "image": "demo/face-store:1.0"},
        "requirements": [],
    }


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    lines = []
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py::test_criterion" not in nodeid:
                continue
            name = nodeid.split("::", 1)[1]
            verdict = "PASS" if status == "passed" else "FAIL"
            lines.append((name, verdict))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for name, verdict in sorted(lines):
        terminalreporter.write_line(f"{verdict}  {name}")
