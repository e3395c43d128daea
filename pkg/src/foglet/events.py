"""In-process change events connecting topology, inventory, and the flow simulator."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List


@dataclass(frozen=True)
class LinkStateChanged:
    link_id: str
    up: bool


@dataclass(frozen=True)
class PlacementCreated:
    request_id: str
    node_id: str


class Dispatcher:
    """Synchronous fan-out of events to subscribers, in subscription order."""

    def __init__(self):
        self._subscribers: List[Callable] = []

    def subscribe(self, handler: Callable) -> None:
        self._subscribers.append(handler)

    def publish(self, event) -> None:
        for handler in list(self._subscribers):
            handler(event)
