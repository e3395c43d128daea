"""Constant-rate flow simulation with link-fault caching and drain-on-restore.

The model is fluid: each flow moves rate * dt megabits per advance step, with
no packets, queueing, or congestion (admission control keeps reserved load
within link capacity; unreserved best-effort load may oversubscribe a link,
which shows up as utilization > 1 in reports rather than as loss).

All counters are exact rationals in megabits, so every conservation
identity holds with zero tolerance and replays are bit-identical.

Fault semantics: when a link on a flow's path goes down, the flow caches at
the nearest cache-capable node upstream of the break if one exists (data
keeps accruing in that node's buffer), otherwise it stalls and its data is
lost. On restore, buffered data drains at a configured multiple of the flow
rate, capped by the path's residual bandwidth, concurrently with live
traffic.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, List, Mapping, Optional, Tuple

from .events import LinkStateChanged
from .scheduler import FlowEnd, PlannedFlow
from .topology import Path, Topology

BYTES_PER_MBIT = Fraction(1_000_000, 8)
MBIT_PER_MIB = Fraction(8 * 2**20, 1_000_000)


class FlowState(enum.Enum):
    ACTIVE = "active"
    CACHING = "caching"
    STALLED = "stalled"


@dataclass
class Flow:
    id: str
    source: FlowEnd
    sink: FlowEnd
    rate_mbps: Fraction
    path: Path  # source-to-sink link order
    booked_mbps: Fraction
    booking_owner: str
    state: FlowState = FlowState.ACTIVE
    cache_node: Optional[str] = None  # set while CACHING
    drain_rate_mbps: Fraction = Fraction(0)  # >0 while a restored flow drains
    sourced_mbit: Fraction = Fraction(0)
    delivered_mbit: Fraction = Fraction(0)
    buffered_mbit: Fraction = Fraction(0)
    lost_mbit: Fraction = Fraction(0)
    buffered_peak_mbit: Fraction = Fraction(0)


@dataclass
class NodeCache:
    node_id: str
    capacity_mbit: Fraction
    # occupancy is derived: sum of buffers of flows caching here

    def occupied_mbit(self, flows: Mapping[str, Flow]) -> Fraction:
        return sum(
            (f.buffered_mbit for f in flows.values() if f.cache_node == self.node_id),
            Fraction(0),
        )


@dataclass(frozen=True)
class LinkReport:
    link_id: str
    capacity_mbps: Fraction
    reserved_mbps: Fraction
    offered_mbps: Fraction
    up: bool

    @property
    def utilization(self) -> Fraction:
        return self.offered_mbps / self.capacity_mbps

    def to_dict(self) -> dict:
        return {
            "link_id": self.link_id,
            "capacity_mbps": float(self.capacity_mbps),
            "reserved_mbps": float(self.reserved_mbps),
            "offered_mbps": float(self.offered_mbps),
            "utilization": float(self.utilization),
            "up": self.up,
        }


@dataclass(frozen=True)
class FlowReport:
    flow_id: str
    source: str
    sink: str
    rate_mbps: Fraction
    state: str
    bytes_sourced: Fraction
    bytes_delivered: Fraction
    bytes_cached: Fraction
    bytes_lost: Fraction
    bytes_cached_peak: Fraction

    def to_dict(self) -> dict:
        return {
            "flow_id": self.flow_id,
            "source": self.source,
            "sink": self.sink,
            "rate_mbps": float(self.rate_mbps),
            "state": self.state,
            "bytes_sourced": float(self.bytes_sourced),
            "bytes_delivered": float(self.bytes_delivered),
            "bytes_cached": float(self.bytes_cached),
            "bytes_lost": float(self.bytes_lost),
            "bytes_cached_peak": float(self.bytes_cached_peak),
        }


@dataclass(frozen=True)
class MetricsReport:
    horizon_s: Fraction
    links: Tuple[LinkReport, ...]
    flows: Tuple[FlowReport, ...]
    caches: Mapping[str, Fraction]  # node -> occupied bytes

    def link(self, link_id: str) -> LinkReport:
        for l in self.links:
            if l.link_id == link_id:
                return l
        raise KeyError(link_id)

    def flow(self, flow_id: str) -> FlowReport:
        for f in self.flows:
            if f.flow_id == flow_id:
                return f
        raise KeyError(flow_id)

    def to_dict(self) -> dict:
        return {
            "horizon_s": float(self.horizon_s),
            "links": [l.to_dict() for l in self.links],
            "flows": [f.to_dict() for f in self.flows],
            "caches": {n: float(v) for n, v in sorted(self.caches.items())},
        }


class FlowSimulator:
    """Owns all flows and node caches; driven by advance() and link events."""

    def __init__(self, topo: Topology, drain_multiplier: Fraction = Fraction(2),
                 residuals_fn: Optional[Callable[[], Dict[str, Fraction]]] = None):
        self._topo = topo
        self._drain_multiplier = drain_multiplier
        # Residual bandwidth source for drain-rate sizing; defaults to raw capacity.
        self._residuals_fn = residuals_fn or (
            lambda: {lid: l.bandwidth_mbps for lid, l in topo.links.items()}
        )
        self.flows: Dict[str, Flow] = {}
        self.caches: Dict[str, NodeCache] = {
            n.id: NodeCache(node_id=n.id, capacity_mbit=n.cache_mib * MBIT_PER_MIB)
            for n in topo.nodes.values()
            if n.cache_mib > 0
        }
        self._clock_s = Fraction(0)

    @property
    def now_s(self) -> Fraction:
        return self._clock_s

    def set_cache(self, node_id: str, capacity_mib: int) -> None:
        if capacity_mib > 0:
            self.caches[node_id] = NodeCache(
                node_id=node_id, capacity_mbit=capacity_mib * MBIT_PER_MIB
            )
        else:
            self.caches.pop(node_id, None)

    # -- activation / teardown -------------------------------------------------

    def activate_flow(self, plan: PlannedFlow) -> Flow:
        flow = Flow(
            id=plan.flow_id,
            source=plan.source,
            sink=plan.sink,
            rate_mbps=plan.rate_mbps,
            path=plan.path,
            booked_mbps=plan.booked_mbps,
            booking_owner=plan.booking_owner,
        )
        self._assign_state(flow)
        self.flows[flow.id] = flow
        return flow

    def deactivate_flows_touching(self, request_ids) -> List[Flow]:
        """Remove flows whose source or sink placement belongs to `request_ids`."""
        targets = set(request_ids)
        removed = []
        for fid, flow in list(self.flows.items()):
            for end in (flow.source, flow.sink):
                if end.kind == "placement" and end.id in targets:
                    removed.append(self.flows.pop(fid))
                    break
        return removed

    # -- fault handling ----------------------------------------------------------

    def _first_down_index(self, path: Path) -> Optional[int]:
        for i, lid in enumerate(path):
            if not self._topo.links[lid].up:
                return i
        return None

    def _upstream_nodes(self, flow: Flow, down_index: int) -> List[str]:
        """Nodes the flow's data can still reach: source node through the node
        just before the down link."""
        nodes = self._topo.path_nodes(flow.source.node, flow.path)
        return nodes[: down_index + 1]

    def _assign_state(self, flow: Flow) -> None:
        down = self._first_down_index(flow.path)
        if down is None:
            # Restored path. Buffered data stays parked at its cache node and
            # keeps occupying that cache until the drain finishes.
            if flow.buffered_mbit > 0:
                if flow.drain_rate_mbps == 0:
                    flow.drain_rate_mbps = self._drain_rate_for(flow)
            else:
                flow.cache_node = None
            flow.state = FlowState.ACTIVE
            return
        # Broken path: cache at the most downstream reachable cache with free
        # space, otherwise stall. A flow already caching keeps its cache node
        # while that node remains reachable.
        flow.drain_rate_mbps = Fraction(0)
        reachable = self._upstream_nodes(flow, down)
        if flow.cache_node in reachable:
            flow.state = FlowState.CACHING
            return
        for node_id in reversed(reachable):
            cache = self.caches.get(node_id)
            if cache is None:
                continue
            if cache.occupied_mbit(self.flows) < cache.capacity_mbit:
                flow.state = FlowState.CACHING
                flow.cache_node = node_id
                return
        flow.state = FlowState.STALLED
        if flow.buffered_mbit == 0:
            flow.cache_node = None

    def _drain_rate_for(self, flow: Flow) -> Fraction:
        if not flow.path:
            return self._drain_multiplier * flow.rate_mbps
        residuals = self._residuals_fn()
        residual = min(residuals.get(lid, Fraction(0)) for lid in flow.path)
        return max(Fraction(0), min(self._drain_multiplier * flow.rate_mbps, residual))

    def on_link_state_changed(self, event: LinkStateChanged) -> None:
        for flow in self.flows.values():
            if event.link_id in flow.path:
                self._assign_state(flow)

    # -- time ---------------------------------------------------------------------

    def advance(self, dt_s: Fraction) -> None:
        """Move simulated time forward, accruing per-flow byte counters.

        Flows are independent constant-rate streams, except that flows caching
        at the same node share its remaining space proportionally to rate
        within the step (keeps the result order-independent).
        """
        if dt_s <= 0:
            raise ValueError("advance requires dt > 0")
        # Pre-compute per-cache inflow so space is shared proportionally.
        cache_inflow: Dict[str, Fraction] = {}
        for flow in self.flows.values():
            if flow.state is FlowState.CACHING and flow.rate_mbps > 0:
                cache_inflow[flow.cache_node] = (
                    cache_inflow.get(flow.cache_node, Fraction(0)) + flow.rate_mbps
                )
        cache_accept: Dict[str, Fraction] = {}
        for node_id, inflow_rate in cache_inflow.items():
            cache = self.caches[node_id]
            free = cache.capacity_mbit - cache.occupied_mbit(self.flows)
            wanted = inflow_rate * dt_s
            cache_accept[node_id] = min(Fraction(1), free / wanted) if wanted > 0 else Fraction(1)

        for flow in sorted(self.flows.values(), key=lambda f: f.id):
            produced = flow.rate_mbps * dt_s
            flow.sourced_mbit += produced
            if flow.state is FlowState.ACTIVE:
                flow.delivered_mbit += produced
                if flow.buffered_mbit > 0 and flow.drain_rate_mbps > 0:
                    drained = min(flow.buffered_mbit, flow.drain_rate_mbps * dt_s)
                    flow.buffered_mbit -= drained
                    flow.delivered_mbit += drained
                    if flow.buffered_mbit == 0:
                        flow.drain_rate_mbps = Fraction(0)
                        flow.cache_node = None
            elif flow.state is FlowState.CACHING:
                share = cache_accept.get(flow.cache_node, Fraction(1))
                accepted = produced * share
                flow.buffered_mbit += accepted
                flow.lost_mbit += produced - accepted
                flow.buffered_peak_mbit = max(flow.buffered_peak_mbit, flow.buffered_mbit)
            else:  # STALLED
                flow.lost_mbit += produced
        self._clock_s += dt_s

    # -- reporting -------------------------------------------------------------------

    def _offered_per_link(self) -> Dict[str, Fraction]:
        offered = {lid: Fraction(0) for lid in self._topo.links}
        for flow in self.flows.values():
            if flow.state is FlowState.ACTIVE:
                rate = flow.rate_mbps + (
                    flow.drain_rate_mbps if flow.buffered_mbit > 0 else Fraction(0)
                )
                for lid in flow.path:
                    offered[lid] += rate
            elif flow.state is FlowState.CACHING:
                # Load reaches only the segment between source and cache node.
                nodes = self._topo.path_nodes(flow.source.node, flow.path)
                cache_at = nodes.index(flow.cache_node)
                for lid in flow.path[:cache_at]:
                    offered[lid] += flow.rate_mbps
        return offered

    def report(self, reserved: Mapping[str, Fraction]) -> MetricsReport:
        """Immutable counters snapshot; `reserved` is the inventory's per-link
        booked bandwidth."""
        offered = self._offered_per_link()
        links = tuple(
            LinkReport(
                link_id=lid,
                capacity_mbps=link.bandwidth_mbps,
                reserved_mbps=reserved.get(lid, Fraction(0)),
                offered_mbps=offered[lid],
                up=link.up,
            )
            for lid, link in sorted(self._topo.links.items())
        )
        flows = tuple(
            FlowReport(
                flow_id=f.id,
                source=self._end_label(f.source),
                sink=self._end_label(f.sink),
                rate_mbps=f.rate_mbps,
                state=f.state.value,
                bytes_sourced=f.sourced_mbit * BYTES_PER_MBIT,
                bytes_delivered=f.delivered_mbit * BYTES_PER_MBIT,
                bytes_cached=f.buffered_mbit * BYTES_PER_MBIT,
                bytes_lost=f.lost_mbit * BYTES_PER_MBIT,
                bytes_cached_peak=f.buffered_peak_mbit * BYTES_PER_MBIT,
            )
            for f in sorted(self.flows.values(), key=lambda f: f.id)
        )
        caches = {
            node_id: cache.occupied_mbit(self.flows) * BYTES_PER_MBIT
            for node_id, cache in self.caches.items()
        }
        return MetricsReport(
            horizon_s=self._clock_s, links=links, flows=flows, caches=caches
        )

    @staticmethod
    def _end_label(end: FlowEnd) -> str:
        return f"{end.kind}:{end.component or end.id}@{end.node}"

    # -- persistence ------------------------------------------------------------------

    def state_document(self) -> dict:
        return {
            "clock_s": str(self._clock_s),
            "caches": {
                nid: str(c.capacity_mbit) for nid, c in sorted(self.caches.items())
            },
            "flows": {
                fid: {
                    "source": vars(f.source),
                    "sink": vars(f.sink),
                    "rate_mbps": str(f.rate_mbps),
                    "path": list(f.path),
                    "booked_mbps": str(f.booked_mbps),
                    "booking_owner": f.booking_owner,
                    "state": f.state.value,
                    "cache_node": f.cache_node,
                    "drain_rate_mbps": str(f.drain_rate_mbps),
                    "sourced_mbit": str(f.sourced_mbit),
                    "delivered_mbit": str(f.delivered_mbit),
                    "buffered_mbit": str(f.buffered_mbit),
                    "lost_mbit": str(f.lost_mbit),
                    "buffered_peak_mbit": str(f.buffered_peak_mbit),
                }
                for fid, f in sorted(self.flows.items())
            },
        }

    def load_state_document(self, doc: Mapping) -> None:
        self._clock_s = Fraction(doc["clock_s"])
        self.caches = {
            nid: NodeCache(node_id=nid, capacity_mbit=Fraction(cap))
            for nid, cap in doc["caches"].items()
        }
        self.flows = {}
        for fid, fd in doc["flows"].items():
            self.flows[fid] = Flow(
                id=fid,
                source=FlowEnd(**fd["source"]),
                sink=FlowEnd(**fd["sink"]),
                rate_mbps=Fraction(fd["rate_mbps"]),
                path=tuple(fd["path"]),
                booked_mbps=Fraction(fd["booked_mbps"]),
                booking_owner=fd["booking_owner"],
                state=FlowState(fd["state"]),
                cache_node=fd["cache_node"],
                drain_rate_mbps=Fraction(fd["drain_rate_mbps"]),
                sourced_mbit=Fraction(fd["sourced_mbit"]),
                delivered_mbit=Fraction(fd["delivered_mbit"]),
                buffered_mbit=Fraction(fd["buffered_mbit"]),
                lost_mbit=Fraction(fd["lost_mbit"]),
                buffered_peak_mbit=Fraction(fd["buffered_peak_mbit"]),
            )
