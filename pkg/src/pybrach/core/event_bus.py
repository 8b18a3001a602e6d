"""
Event Bus - Progress notifications for long-running computations.

Synthesis rounds, identification evaluations, Monte Carlo trials and swings are
published here so that the CLI (or a test) can observe progress without the
numerical modules knowing who is listening.
"""

from typing import Callable, Dict, List
from dataclasses import dataclass, field
from enum import Enum, auto
import threading


class EventType(Enum):
    """All event types in the system."""

    # Synthesis events
    SYNTHESIS_STARTED = auto()
    STEP_SOLVED = auto()
    ROUND_COMPLETED = auto()
    SYNTHESIS_FINISHED = auto()

    # Identification events
    SYSID_EVALUATION = auto()

    # Simulation events
    TRIAL_COMPLETED = auto()
    ENTRY_BUILT = auto()
    ENTRY_SKIPPED = auto()
    SWING_COMPLETED = auto()


@dataclass
class Event:
    """Base event class."""
    event_type: EventType
    data: dict = field(default_factory=dict)


class EventBus:
    """
    Central event bus using publish-subscribe pattern.

    Step-1 solves and Monte Carlo trials publish from worker threads, so the
    subscriber table is guarded by a lock; callbacks run on the publishing thread.
    """

    def __init__(self):
        self._subscribers: Dict[EventType, List[Callable[[Event], None]]] = {}
        self._lock = threading.Lock()

    def subscribe(self, event_type: EventType, callback: Callable[[Event], None]) -> None:
        """
        Subscribe to an event type.

        Args:
            event_type: The type of event to listen for
            callback: Function to call when event occurs (receives Event object)
        """
        with self._lock:
            self._subscribers.setdefault(event_type, []).append(callback)

    def subscribe_all(self, callback: Callable[[Event], None]) -> None:
        """Subscribe one callback to every event type."""
        for event_type in EventType:
            self.subscribe(event_type, callback)

    def unsubscribe(self, event_type: EventType, callback: Callable[[Event], None]) -> None:
        """Remove a subscriber."""
        with self._lock:
            if callback in self._subscribers.get(event_type, []):
                self._subscribers[event_type].remove(callback)

    def publish(self, event: Event) -> None:
        """
        Publish an event to all subscribers.

        Args:
            event: The event to publish
        """
        with self._lock:
            callbacks = list(self._subscribers.get(event.event_type, []))
        for callback in callbacks:
            callback(event)

    def emit(self, event_type: EventType, **data) -> None:
        """Shorthand for ``publish(Event(event_type, data))``."""
        self.publish(Event(event_type, data))

    def clear(self) -> None:
        """Clear all subscribers (mainly for testing)."""
        with self._lock:
            self._subscribers.clear()


# Global event bus instance
_event_bus = EventBus()


def get_event_bus() -> EventBus:
    """Get the global event bus instance."""
    return _event_bus
