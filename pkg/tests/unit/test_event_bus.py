"""Tests for the event bus."""

import threading

from pybrach.core.event_bus import Event, EventBus, EventType, get_event_bus


def test_event_bus_subscribe():
    """Test subscribing to events."""
    bus = EventBus()
    events_received = []

    def callback(event: Event):
        events_received.append(event)

    bus.subscribe(EventType.ROUND_COMPLETED, callback)
    bus.publish(Event(EventType.ROUND_COMPLETED, {"round": 1, "integral": 0.5}))

    assert len(events_received) == 1
    assert events_received[0].event_type == EventType.ROUND_COMPLETED
    assert events_received[0].data["integral"] == 0.5


def test_event_bus_unsubscribe():
    """Test unsubscribing from events."""
    bus = EventBus()
    events_received = []

    def callback(event: Event):
        events_received.append(event)

    bus.subscribe(EventType.TRIAL_COMPLETED, callback)
    bus.unsubscribe(EventType.TRIAL_COMPLETED, callback)
    bus.publish(Event(EventType.TRIAL_COMPLETED, {}))

    assert len(events_received) == 0


def test_event_bus_multiple_subscribers():
    """Test multiple subscribers to the same event."""
    bus = EventBus()
    events_a = []
    events_b = []

    bus.subscribe(EventType.STEP_SOLVED, events_a.append)
    bus.subscribe(EventType.STEP_SOLVED, events_b.append)
    bus.publish(Event(EventType.STEP_SOLVED, {"step": 1}))

    assert len(events_a) == 1
    assert len(events_b) == 1


def test_event_bus_emit_shorthand():
    """Test that emit wraps keyword data in an Event."""
    bus = EventBus()
    received = []
    bus.subscribe(EventType.SWING_COMPLETED, received.append)

    bus.emit(EventType.SWING_COMPLETED, swing=2, entry="swing00")

    assert received[0].data == {"swing": 2, "entry": "swing00"}


def test_event_bus_subscribe_all():
    """Test that a catch-all subscriber sees every event type."""
    bus = EventBus()
    received = []
    bus.subscribe_all(received.append)

    bus.emit(EventType.SYNTHESIS_STARTED)
    bus.emit(EventType.ENTRY_SKIPPED, id="swing03")

    assert [e.event_type for e in received] == [EventType.SYNTHESIS_STARTED, EventType.ENTRY_SKIPPED]


def test_event_bus_other_types_not_delivered():
    """Test that subscribers only see their own event type."""
    bus = EventBus()
    received = []
    bus.subscribe(EventType.ENTRY_BUILT, received.append)

    bus.emit(EventType.ENTRY_SKIPPED, id="swing01")

    assert received == []


def test_event_bus_publish_from_threads():
    """Test publishing concurrently from worker threads."""
    bus = EventBus()
    received = []
    lock = threading.Lock()

    def callback(event: Event):
        with lock:
            received.append(event.data["k"])

    bus.subscribe(EventType.TRIAL_COMPLETED, callback)
    threads = [threading.Thread(target=bus.emit, args=(EventType.TRIAL_COMPLETED,), kwargs={"k": k})
               for k in range(16)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()

    assert sorted(received) == list(range(16))


def test_event_bus_clear():
    """Test that clear removes every subscriber."""
    bus = get_event_bus()
    received = []
    bus.subscribe(EventType.SYSID_EVALUATION, received.append)
    bus.clear()

    bus.emit(EventType.SYSID_EVALUATION, cost=1.0)

    assert received == []
