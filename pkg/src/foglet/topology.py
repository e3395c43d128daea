"""The infrastructure graph: nodes, links, endpoints, and path computation.

Nodes and links are fixed for the lifetime of a topology; the only mutable
bit is per-link up/down state, changes to which are published as
LinkStateChanged events.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

from .events import Dispatcher, LinkStateChanged
from .model import ResourceVector, Tier, mbps

# Bandwidth of an empty path (co-located source and sink): effectively
# unconstrained. Kept finite-typed as None and handled by PathMetrics.
INFINITE_BANDWIDTH = None


class TopologyError(Exception):
    pass


@dataclass(frozen=True)
class Node:
    id: str
    tier: Tier
    capacity: ResourceVector
    region: str = ""
    labels: frozenset = frozenset()
    cache_mib: int = 0  # >0 enables fault-time caching of flows at this node


@dataclass
class Link:
    id: str
    a: str
    b: str
    bandwidth_mbps: Fraction
    latency_ms: Fraction
    jitter_ms: Fraction = Fraction(0)
    up: bool = True

    def other(self, node_id: str) -> str:
        return self.b if node_id == self.a else self.a

    def touches(self, node_id: str) -> bool:
        return node_id in (self.a, self.b)


@dataclass(frozen=True)
class Endpoint:
    """A data source/sink attached to a node; never hosts components."""

    id: str
    node: str
    kind: str = ""


# A path is an ordered tuple of link ids from source to destination.
Path = Tuple[str, ...]


@dataclass(frozen=True)
class PathMetrics:
    bottleneck_mbps: Optional[Fraction]  # None = unconstrained (empty path)
    total_latency_ms: Fraction
    total_jitter_ms: Fraction
    hops: int

    def bandwidth_at_least(self, needed: Fraction) -> bool:
        return self.bottleneck_mbps is None or self.bottleneck_mbps >= needed


class Unreachable(Exception):
    def __init__(self, a: str, b: str):
        super().__init__(f"no path over up links between {a!r} and {b!r}")
        self.a = a
        self.b = b


class Topology:
    def __init__(self, nodes: Iterable[Node], links: Iterable[Link],
                 endpoints: Iterable[Endpoint] = ()):
        self.nodes: Dict[str, Node] = {}
        self.links: Dict[str, Link] = {}
        self.endpoints: Dict[str, Endpoint] = {}
        self.events = Dispatcher()
        self._adjacency: Dict[str, List[str]] = {}

        for n in nodes:
            if n.id in self.nodes:
                raise TopologyError(f"duplicate node id {n.id!r}")
            self.nodes[n.id] = n
            self._adjacency[n.id] = []
        for l in links:
            if l.id in self.links:
                raise TopologyError(f"duplicate link id {l.id!r}")
            for end in (l.a, l.b):
                if end not in self.nodes:
                    raise TopologyError(f"link {l.id!r} references missing node {end!r}")
            if l.a == l.b:
                raise TopologyError(f"link {l.id!r} is a self-loop")
            if l.bandwidth_mbps <= 0:
                raise TopologyError(f"link {l.id!r} must have positive bandwidth")
            if l.latency_ms < 0 or l.jitter_ms < 0:
                raise TopologyError(f"link {l.id!r} has negative latency or jitter")
            self.links[l.id] = l
            self._adjacency[l.a].append(l.id)
            self._adjacency[l.b].append(l.id)
        for e in endpoints:
            if e.id in self.endpoints:
                raise TopologyError(f"duplicate endpoint id {e.id!r}")
            if e.node not in self.nodes:
                raise TopologyError(f"endpoint {e.id!r} attached to missing node {e.node!r}")
            self.endpoints[e.id] = e

        for n in self.nodes.values():
            if n.tier is Tier.SWARM_OF_THINGS and not n.capacity.is_zero():
                raise TopologyError(
                    f"swarm-of-things node {n.id!r} cannot advertise capacity"
                )

        self._check_connected()

    def _check_connected(self) -> None:
        if len(self.nodes) <= 1:
            return
        start = next(iter(self.nodes))
        seen = {start}
        stack = [start]
        while stack:
            at = stack.pop()
            for lid in self._adjacency[at]:
                nxt = self.links[lid].other(at)
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        if len(seen) != len(self.nodes):
            missing = sorted(set(self.nodes) - seen)
            raise TopologyError(f"topology is disconnected; unreachable nodes: {missing}")

    @property
    def hostable_nodes(self) -> List[Node]:
        return [n for n in self.nodes.values() if n.tier.hostable]

    @property
    def regions(self) -> set:
        return {n.region for n in self.nodes.values() if n.region}

    def endpoint_node(self, endpoint_id: str) -> str:
        return self.endpoints[endpoint_id].node

    def set_link_state(self, link_id: str, up: bool) -> Optional[LinkStateChanged]:
        """Change a link's state; idempotent, emitting one event per actual change."""
        link = self.links.get(link_id)
        if link is None:
            raise TopologyError(f"unknown link {link_id!r}")
        if link.up == up:
            return None
        link.up = up
        event = LinkStateChanged(link_id=link_id, up=up)
        self.events.publish(event)
        return event

    def path_nodes(self, start: str, path: Path) -> List[str]:
        """Node sequence visited by `path`, beginning at `start`."""
        out = [start]
        at = start
        for lid in path:
            link = self.links[lid]
            if not link.touches(at):
                raise TopologyError(f"path link {lid!r} does not continue from {at!r}")
            at = link.other(at)
            out.append(at)
        return out

    def _min_hop_paths(self, a: str, b: str) -> List[Path]:
        """All minimum-hop simple paths from a to b over up links."""
        if a == b:
            return [()]
        # BFS distance layers over up links only.
        dist = {a: 0}
        frontier = [a]
        while frontier and b not in dist:
            nxt = []
            for at in frontier:
                for lid in self._adjacency[at]:
                    link = self.links[lid]
                    if not link.up:
                        continue
                    other = link.other(at)
                    if other not in dist:
                        dist[other] = dist[at] + 1
                        nxt.append(other)
            frontier = nxt
        if b not in dist:
            return []
        # Walk backwards from b along strictly-decreasing distance.
        paths: List[Path] = []

        def backtrack(at: str, suffix: List[str]) -> None:
            if at == a:
                paths.append(tuple(reversed(suffix)))
                return
            for lid in self._adjacency[at]:
                link = self.links[lid]
                if not link.up:
                    continue
                prev = link.other(at)
                if dist.get(prev) == dist[at] - 1:
                    suffix.append(lid)
                    backtrack(prev, suffix)
                    suffix.pop()

        backtrack(b, [])
        return paths

    def path_between(self, a: str, b: str, residual: Mapping[str, Fraction]) -> Path:
        """Deterministic routing: minimum hops, then maximum bottleneck residual
        bandwidth, then lexicographically smallest link-id sequence.

        The tie-break is evaluated in canonical node order (smaller id first)
        and reversed as needed, so path_between(a, b) is always the reverse of
        path_between(b, a) under the same residuals.
        """
        for node_id in (a, b):
            if node_id not in self.nodes:
                raise TopologyError(f"unknown node {node_id!r}")
        if a == b:
            return ()
        lo, hi = (a, b) if a <= b else (b, a)
        candidates = self._min_hop_paths(lo, hi)
        if not candidates:
            raise Unreachable(a, b)

        def bottleneck(path: Path) -> Fraction:
            return min(residual.get(lid, self.links[lid].bandwidth_mbps) for lid in path)

        best = min(candidates, key=lambda p: (-bottleneck(p), p))
        return best if a == lo else tuple(reversed(best))

    def path_metrics(self, path: Path, residual: Mapping[str, Fraction]) -> PathMetrics:
        """Aggregate metrics of a path: min residual bandwidth, summed latency/jitter."""
        if not path:
            return PathMetrics(INFINITE_BANDWIDTH, Fraction(0), Fraction(0), 0)
        links = [self.links[lid] for lid in path]
        return PathMetrics(
            bottleneck_mbps=min(
                residual.get(l.id, l.bandwidth_mbps) for l in links
            ),
            total_latency_ms=sum((l.latency_ms for l in links), Fraction(0)),
            total_jitter_ms=sum((l.jitter_ms for l in links), Fraction(0)),
            hops=len(links),
        )


_TIER_ALIASES = {t.value: t for t in Tier}
_TIER_ALIASES.update({
    "Cloud": Tier.CLOUD,
    "EdgeCloudlet": Tier.EDGE_CLOUDLET,
    "EdgeGateway": Tier.EDGE_GATEWAY,
    "SwarmOfThings": Tier.SWARM_OF_THINGS,
})


def load_topology(doc: Mapping) -> Topology:
    """Build a topology from its document form.

    Expected shape: {nodes: [...], links: [...], endpoints: [...]}; see the
    shipped scenario files for the field inventory.
    """
    if not isinstance(doc, Mapping):
        raise TopologyError("topology document must be a mapping")
    nodes = []
    for nd in doc.get("nodes", []) or []:
        tier_name = nd.get("tier")
        tier = _TIER_ALIASES.get(tier_name)
        if tier is None:
            raise TopologyError(f"node {nd.get('id')!r}: unknown tier {tier_name!r}")
        try:
            capacity = ResourceVector(
                vcpus=float(nd.get("vcpus", 0)),
                ram_mib=int(nd.get("ram_mib", 0)),
                disk_gib=int(nd.get("disk_gib", 0)),
            )
        except ValueError as exc:
            raise TopologyError(f"node {nd.get('id')!r}: {exc}")
        nodes.append(Node(
            id=str(nd["id"]),
            tier=tier,
            capacity=capacity,
            region=str(nd.get("region", "")),
            labels=frozenset(nd.get("labels", []) or []),
            cache_mib=int(nd.get("cache_mib", 0)),
        ))
    links = []
    for ld in doc.get("links", []) or []:
        links.append(Link(
            id=str(ld["id"]),
            a=str(ld["a"]),
            b=str(ld["b"]),
            bandwidth_mbps=mbps(ld["bandwidth_mbps"]),
            latency_ms=mbps(ld.get("latency_ms", 0)),
            jitter_ms=mbps(ld.get("jitter_ms", 0)),
        ))
    endpoints = []
    for ed in doc.get("endpoints", []) or []:
        endpoints.append(Endpoint(
            id=str(ed["id"]),
            node=str(ed["node"]),
            kind=str(ed.get("kind", "")),
        ))
    return Topology(nodes, links, endpoints)


def topology_to_document(topo: Topology) -> dict:
    """Serialize structure plus current link state (used by engine snapshots)."""
    return {
        "nodes": [
            {
                "id": n.id,
                "tier": n.tier.value,
                "vcpus": n.capacity.vcpus,
                "ram_mib": n.capacity.ram_mib,
                "disk_gib": n.capacity.disk_gib,
                "region": n.region,
                "labels": sorted(n.labels),
                "cache_mib": n.cache_mib,
            }
            for n in sorted(topo.nodes.values(), key=lambda n: n.id)
        ],
        "links": [
            {
                "id": l.id,
                "a": l.a,
                "b": l.b,
                "bandwidth_mbps": str(l.bandwidth_mbps),
                "latency_ms": str(l.latency_ms),
                "jitter_ms": str(l.jitter_ms),
                "up": l.up,
            }
            for l in sorted(topo.links.values(), key=lambda l: l.id)
        ],
        "endpoints": [
            {"id": e.id, "node": e.node, "kind": e.kind}
            for e in sorted(topo.endpoints.values(), key=lambda e: e.id)
        ],
    }


def topology_from_snapshot(doc: Mapping) -> Topology:
    """Rebuild a topology from topology_to_document output, link states included."""
    topo = load_topology(doc)
    for ld in doc.get("links", []) or []:
        if not ld.get("up", True):
            topo.links[str(ld["id"])].up = False
    return topo
