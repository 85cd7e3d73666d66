"""Centralized per-session event channel with total ordering and replay.

One in-process bus coordinates every engine subsystem. Events carry a
per-session strictly increasing ``seq``; subscribers get exactly-once,
in-order delivery over bounded queues (publishers block rather than drop,
keeping golden logs deterministic). The full per-session log is retained,
so ``replay_from`` equals live observation.
"""

from __future__ import annotations

import json
import queue
import threading
from dataclasses import dataclass
from typing import Any, Iterator

from .errors import SessionClosed, UnknownSession

TOPICS = (
    "player_action", "npc_action", "state_updated", "goal_achieved",
    "chapter_advanced", "narrative_injected", "asset_updated", "session_ended",
)

DEFAULT_QUEUE_SIZE = 1024


@dataclass(frozen=True)
class BusEvent:
    seq: int
    session_id: str
    topic: str
    payload: dict[str, Any]
    ts: int  # logical turn index

    def to_canonical(self) -> str:
        return json.dumps(
            {"payload": self.payload, "seq": self.seq, "session_id": self.session_id,
             "topic": self.topic, "ts": self.ts},
            sort_keys=True, separators=(",", ":"), ensure_ascii=False,
        )

    @staticmethod
    def from_canonical(line: str) -> "BusEvent":
        data = json.loads(line)
        return BusEvent(seq=data["seq"], session_id=data["session_id"],
                        topic=data["topic"], payload=data["payload"], ts=data["ts"])


class Subscription:
    """Ordered event stream for one subscriber.

    Replayed history is yielded before live events; the two never overlap
    because registration and the history snapshot happen under the channel
    lock.
    """

    _CLOSE = object()

    def __init__(self, topics: frozenset[str] | None, replay: list[BusEvent], maxsize: int):
        self._topics = topics
        self._replay = replay
        self._queue: queue.Queue = queue.Queue(maxsize=maxsize)
        self._closed = False

    def _matches(self, event: BusEvent) -> bool:
        return self._topics is None or event.topic in self._topics

    def _deliver(self, event: BusEvent) -> None:
        if not self._closed and self._matches(event):
            self._queue.put(event)  # blocks when full: backpressure on publisher

    def get(self, timeout: float | None = None) -> BusEvent | None:
        """Next event, or None on timeout/close."""
        if self._replay:
            return self._replay.pop(0)
        try:
            item = self._queue.get(timeout=timeout)
        except queue.Empty:
            return None
        if item is self._CLOSE:
            return None
        return item

    def events(self, timeout: float | None = None) -> Iterator[BusEvent]:
        while True:
            event = self.get(timeout=timeout)
            if event is None:
                return
            yield event

    def close(self) -> None:
        self._closed = True
        try:
            self._queue.put_nowait(self._CLOSE)
        except queue.Full:
            pass


class _Channel:
    def __init__(self, session_id: str, queue_size: int):
        self.session_id = session_id
        self.lock = threading.Lock()
        self.log: list[BusEvent] = []
        self.subscribers: list[Subscription] = []
        self.ended = False
        self.queue_size = queue_size


class MessageBus:
    """In-process bus; publish is safe from any thread."""

    def __init__(self, queue_size: int = DEFAULT_QUEUE_SIZE):
        self._channels: dict[str, _Channel] = {}
        self._lock = threading.Lock()
        self._queue_size = queue_size

    def open_session(self, session_id: str) -> None:
        with self._lock:
            if session_id in self._channels:
                raise ValueError(f"session {session_id!r} already open")
            self._channels[session_id] = _Channel(session_id, self._queue_size)

    def has_session(self, session_id: str) -> bool:
        with self._lock:
            return session_id in self._channels

    def _channel(self, session_id: str) -> _Channel:
        with self._lock:
            channel = self._channels.get(session_id)
        if channel is None:
            raise UnknownSession(session_id)
        return channel

    def publish(self, session_id: str, topic: str, payload: dict[str, Any], ts: int = 0) -> int:
        """Append one event; returns its seq."""
        return self.publish_batch(session_id, [(topic, payload)], ts)[0].seq

    def publish_batch(self, session_id: str, items: list[tuple[str, dict[str, Any]]],
                      ts: int = 0) -> list[BusEvent]:
        """Atomically append several events with contiguous seqs.

        The turn pipeline stages a whole round and commits it through here,
        so a failed round never leaves partial events behind.
        """
        channel = self._channel(session_id)
        deliveries: list[BusEvent] = []
        # Delivery happens under the channel lock so concurrent publishers
        # cannot interleave fan-out; queue backpressure therefore blocks
        # the whole channel, which is the documented trade for determinism.
        with channel.lock:
            for topic, payload in items:
                if topic not in TOPICS:
                    raise ValueError(f"unknown topic {topic!r}")
                if channel.ended and topic != "session_ended":
                    raise SessionClosed(session_id)
                event = BusEvent(seq=len(channel.log) + 1, session_id=session_id,
                                 topic=topic, payload=payload, ts=ts)
                channel.log.append(event)
                deliveries.append(event)
                if topic == "session_ended":
                    channel.ended = True
            for event in deliveries:
                for sub in channel.subscribers:
                    sub._deliver(event)
        return deliveries

    def commit_events(self, events: list[BusEvent]) -> None:
        """Append pre-numbered events (from a staged round) atomically.

        Seqs must continue the channel log exactly; a mismatch means a
        concurrent publish slipped in while the round was in flight.
        """
        if not events:
            return
        channel = self._channel(events[0].session_id)
        with channel.lock:
            for event in events:
                if event.seq != len(channel.log) + 1:
                    raise RuntimeError(
                        f"staged seq {event.seq} does not continue log "
                        f"({len(channel.log)} committed)")
                if channel.ended and event.topic != "session_ended":
                    raise SessionClosed(event.session_id)
                channel.log.append(event)
                if event.topic == "session_ended":
                    channel.ended = True
            for event in events:
                for sub in channel.subscribers:
                    sub._deliver(event)

    def next_seq(self, session_id: str) -> int:
        channel = self._channel(session_id)
        with channel.lock:
            return len(channel.log) + 1

    def is_ended(self, session_id: str) -> bool:
        channel = self._channel(session_id)
        with channel.lock:
            return channel.ended

    def subscribe(self, session_id: str, topics: list[str] | None = None,
                  replay_from: int | None = None) -> Subscription:
        """Live stream from now on; with replay_from, history first."""
        channel = self._channel(session_id)
        topic_set = frozenset(topics) if topics is not None else None
        with channel.lock:
            replay: list[BusEvent] = []
            if replay_from is not None:
                replay = [e for e in channel.log
                          if e.seq >= replay_from and (topic_set is None or e.topic in topic_set)]
            sub = Subscription(topic_set, replay, channel.queue_size)
            channel.subscribers.append(sub)
        return sub

    def unsubscribe(self, session_id: str, sub: Subscription) -> None:
        channel = self._channel(session_id)
        with channel.lock:
            if sub in channel.subscribers:
                channel.subscribers.remove(sub)
        sub.close()

    def replay(self, session_id: str, from_seq: int = 0) -> list[BusEvent]:
        channel = self._channel(session_id)
        with channel.lock:
            return [e for e in channel.log if e.seq >= from_seq]

    def log_snapshot(self, session_id: str) -> list[BusEvent]:
        return self.replay(session_id, 0)
