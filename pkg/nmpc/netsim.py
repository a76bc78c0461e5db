"""
Packets, impaired channels and latest-timestamp buffers

A Channel is the userspace stand-in for per-interface queuing-discipline
manipulation: each direction gets its own base delay, uniform jitter and
Bernoulli loss, driven by a seeded random stream. Times are converted to
integer nanoseconds on entry so delivery instants compare exactly.
"""

import heapq
import itertools
import math
import threading
import zlib
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np

from nmpc.dynamics import InvalidArgumentError

NS_PER_S = 1_000_000_000
MAX_SEQ = (1 << 64) - 1


def to_ns(seconds: float) -> int:
    return int(round(float(seconds) * NS_PER_S))


def derive_seed(seed: int, label: str) -> int:
    """Independent 64-bit substream seed for a named component"""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(zlib.crc32(label.encode("utf-8")),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class StatePayload:
    """Per-joint (angle, velocity) pairs"""
    states: Tuple[Tuple[float, float], ...]

    @property
    def joint_count(self) -> int:
        return len(self.states)


@dataclass(frozen=True)
class ControlPayload:
    """Step-major accelerations: accelerations[step][joint]"""
    accelerations: Tuple[Tuple[float, ...], ...]

    @property
    def horizon(self) -> int:
        return len(self.accelerations)

    @property
    def joint_count(self) -> int:
        return len(self.accelerations[0]) if self.accelerations else 0


Payload = Union[StatePayload, ControlPayload]


@dataclass(frozen=True)
class Packet:
    seq: int
    origin_timestamp: int
    echo_timestamp: int
    payload: Payload
    prediction_applied: bool = False

    def __post_init__(self):
        if not 0 <= self.seq <= MAX_SEQ:
            raise InvalidArgumentError(f"seq out of range: {self.seq}")


@dataclass(frozen=True)
class ChannelConfig:
    base_delay: float = 0.0
    jitter: float = 0.0
    loss_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("base_delay", "jitter", "loss_rate"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise InvalidArgumentError(f"{name} must be finite and >= 0, got {value}")
        if self.loss_rate > 1.0:
            raise InvalidArgumentError(f"loss_rate must be in [0, 1], got {self.loss_rate}")
        if self.base_delay - self.jitter < -1e-12:
            raise InvalidArgumentError("base_delay must be at least the jitter half-width")


class Channel:
    """
    One direction of the network

    Every send draws a loss sample and a jitter sample from the channel's own
    stream, so the drop pattern depends only on the seed and the number of
    sends.
    """

    def __init__(self, config: ChannelConfig, name: str = "channel"):
        self.config = config
        self.name = name
        self._rng = np.random.default_rng(config.seed)
        self._queue: List[Tuple[int, int, int, Packet]] = []
        self._counter = itertools.count()
        self._last_send_ns: Optional[int] = None
        self.sent = 0
        self.delivered = 0
        self.dropped = 0
        self.drop_events: List[Tuple[int, int]] = []

    def send(self, p: Packet, now: float) -> bool:
        """Returns False when the packet was dropped"""
        now_ns = to_ns(now)
        if self._last_send_ns is not None and now_ns < self._last_send_ns:
            raise InvalidArgumentError(
                f"{self.name}: send time {now} precedes previous send"
            )
        self._last_send_ns = now_ns
        self.sent += 1

        loss_draw = self._rng.random()
        jitter_draw = self._rng.uniform(-self.config.jitter, self.config.jitter) if self.config.jitter > 0 else 0.0
        if loss_draw < self.config.loss_rate:
            self.dropped += 1
            self.drop_events.append((now_ns, p.seq))
            return False

        deliver_at = now_ns + max(0, to_ns(self.config.base_delay + jitter_draw))
        heapq.heappush(self._queue, (deliver_at, p.seq, next(self._counter), p))
        return True

    def poll(self, now: float) -> List[Packet]:
        """Remove and return every packet due by now, by (deliver_at, seq)"""
        return [p for _, p in self.poll_with_times(now)]

    def poll_with_times(self, now: float) -> List[Tuple[int, Packet]]:
        now_ns = to_ns(now)
        out = []
        while self._queue and self._queue[0][0] <= now_ns:
            deliver_at, _, _, p = heapq.heappop(self._queue)
            out.append((deliver_at, p))
        self.delivered += len(out)
        return out

    def in_flight(self) -> int:
        return len(self._queue)

    def next_delivery(self) -> Optional[int]:
        """Earliest pending delivery instant in ns, or None"""
        return self._queue[0][0] if self._queue else None

    def stats(self) -> dict:
        return {
            "sent": self.sent,
            "delivered": self.delivered,
            "dropped": self.dropped,
            "in_flight": self.in_flight(),
        }


class LatestBuffer:
    """
    Single-slot store keeping the packet with the newest origin timestamp

    Ties on timestamp go to the higher seq. Offer and read hold a lock so a
    receive thread and a control thread can share one buffer.
    """

    def __init__(self):
        self._current: Optional[Packet] = None
        self._lock = threading.Lock()
        self.accepted = 0
        self.rejected = 0

    def offer(self, p: Packet) -> bool:
        with self._lock:
            cur = self._current
            newer = (
                cur is None
                or p.origin_timestamp > cur.origin_timestamp
                or (p.origin_timestamp == cur.origin_timestamp and p.seq > cur.seq)
            )
            if newer:
                self._current = p
                self.accepted += 1
            else:
                self.rejected += 1
            return newer

    def latest(self) -> Optional[Packet]:
        with self._lock:
            return self._current


def channel_send(ch: Channel, p: Packet, now: float) -> None:
    ch.send(p, now)


def channel_poll(ch: Channel, now: float) -> List[Packet]:
    return ch.poll(now)


def buffer_offer(b: LatestBuffer, p: Packet) -> bool:
    return b.offer(p)


def buffer_latest(b: LatestBuffer) -> Optional[Packet]:
    return b.latest()
