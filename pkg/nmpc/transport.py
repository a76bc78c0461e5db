"""
UDP endpoints: plant client, controller server and impairment proxy

The plant client simulates the robot at Ts and sends STATE datagrams; the
controller server answers each new STATE with a CONTROL. Both processes
must read the same clock (monotonic by default, which holds on one host)
because the plant indexes a CONTROL horizon by now - origin_timestamp.
RTT needs no shared clock: the plant compares its own clock with the echo
of its own timestamp.

The proxy sits between them and runs one netsim Channel per direction over
raw datagrams.
"""

import logging
import math
import socket
import threading
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from nmpc import settings
from nmpc.agents import ControllerAgent, PlantAgent
from nmpc.netsim import NS_PER_S, Channel, ChannelConfig, ControlPayload, Packet, StatePayload, to_ns
from nmpc.scenario import ConfigError, ScenarioConfig
from nmpc.simloop import RunResult, TraceRecord, trace_record
from nmpc.wire import WireError, decode, encode

logger = logging.getLogger(__name__)

Address = Tuple[str, int]

CLOCKS: Dict[str, Callable[[], int]] = {
    "monotonic": time.monotonic_ns,
    "realtime": time.time_ns,
}


@dataclass(frozen=True)
class EndpointConfig:
    bind: Address = ("127.0.0.1", 0)
    peer: Optional[Address] = None
    rate_hz: float = 100.0
    role: str = "plant"
    clock: str = "monotonic"
    # Server/proxy stop after this many seconds without traffic (None: never)
    idle_timeout: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.rate_hz) and self.rate_hz > 0):
            raise ConfigError(f"rate_hz must be positive, got {self.rate_hz}")
        if self.role not in ("plant", "controller"):
            raise ConfigError(f"role must be 'plant' or 'controller', got {self.role!r}")
        if self.clock not in CLOCKS:
            raise ConfigError(f"clock must be one of {sorted(CLOCKS)}, got {self.clock!r}")

    def send_every(self, Ts: float, state_period_ticks: int = 1) -> int:
        """Plant ticks between STATE datagrams; the slower of rate_hz and the scenario's state period"""
        return max(1, int(round(1.0 / (self.rate_hz * Ts))), state_period_ticks)


class RttEstimator:
    """Running RTT statistics from timestamp echoes"""

    def __init__(self):
        self.samples: List[int] = []

    def add(self, rtt_ns: int) -> None:
        if rtt_ns >= 0:
            self.samples.append(rtt_ns)

    @property
    def count(self) -> int:
        return len(self.samples)

    def summary(self) -> Dict:
        if not self.samples:
            return {"count": 0}
        ms = np.asarray(self.samples, dtype=float) / 1e6
        return {
            "count": len(self.samples),
            "min_ms": float(np.min(ms)),
            "mean_ms": float(np.mean(ms)),
            "max_ms": float(np.max(ms)),
            # Without synchronized clocks only RTT/2 can stand in for one-way delay
            "one_way_estimate_ms": float(np.mean(ms) / 2.0),
        }

    def log_summary(self) -> None:
        s = self.summary()
        logger.info("=" * 80)
        logger.info("RTT SUMMARY")
        logger.info("=" * 80)
        if s["count"] == 0:
            logger.info("No RTT samples")
        else:
            logger.info(f"Samples: {s['count']}")
            logger.info(f"  min  {s['min_ms']:>10.2f}ms")
            logger.info(f"  mean {s['mean_ms']:>10.2f}ms")
            logger.info(f"  max  {s['max_ms']:>10.2f}ms")
            logger.info(f"  one-way (RTT/2 estimate) {s['one_way_estimate_ms']:>10.2f}ms")
        logger.info("=" * 80)


def open_socket(bind: Address, timeout: float = settings.SOCKET_TIMEOUT) -> socket.socket:
    """Bound UDP socket, retrying with exponential backoff"""
    last_error = None
    for attempt in range(settings.RETRY_TOTAL):
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        try:
            sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            sock.bind(bind)
            sock.settimeout(timeout)
            return sock
        except OSError as e:
            sock.close()
            last_error = e
            delay = settings.RETRY_BACKOFF * (2 ** attempt)
            logger.warning(f"bind {bind} failed ({e}), retrying in {delay:.2f}s")
            time.sleep(delay)
    raise last_error


def _finite(p: Packet) -> bool:
    payload = p.payload
    if isinstance(payload, StatePayload):
        return all(math.isfinite(v) for pair in payload.states for v in pair)
    return all(math.isfinite(v) for row in payload.accelerations for v in row)


class _Counters:
    def __init__(self):
        self.received = 0
        self.decode_errors = 0
        self.sent = 0
        self.send_failures = 0

    def as_dict(self) -> Dict:
        return dict(vars(self))


def _send(sock: socket.socket, data: bytes, addr: Address, counters: _Counters) -> bool:
    try:
        sock.sendto(data, addr)
        counters.sent += 1
        return True
    except OSError as e:
        counters.send_failures += 1
        if counters.send_failures == 1 or counters.send_failures % 100 == 0:
            logger.warning(f"send to {addr} failed ({e}); {counters.send_failures} failures so far")
        return False


def _drain(sock: socket.socket, counters: _Counters, block: bool = False):
    """Yield (packet, addr) for every datagram already queued on the socket"""
    first = True
    while True:
        try:
            if block and first:
                data, addr = sock.recvfrom(settings.MAX_DATAGRAM)
            else:
                sock.setblocking(False)
                try:
                    data, addr = sock.recvfrom(settings.MAX_DATAGRAM)
                finally:
                    sock.settimeout(settings.SOCKET_TIMEOUT)
        except (BlockingIOError, socket.timeout):
            return
        except OSError as e:
            logger.warning(f"receive failed: {e}")
            return
        first = False
        counters.received += 1
        try:
            p = decode(data)
        except WireError as e:
            counters.decode_errors += 1
            logger.debug(f"dropped datagram from {addr}: {e} (field {e.field})")
            continue
        if not _finite(p):
            counters.decode_errors += 1
            continue
        yield p, addr


def run_plant_client(cfg: ScenarioConfig, endpoint: EndpointConfig,
                     stop: Optional[threading.Event] = None) -> RunResult:
    """
    Simulate the plant in real time and exchange datagrams with the server

    The plant holds its last control whenever nothing new arrives, so a
    silent or dead server never stops the loop.

    Returns:
        RunResult whose trace times are relative to the first tick
    """
    if endpoint.peer is None:
        raise ConfigError("plant client needs a peer address")
    clock = CLOCKS[endpoint.clock]
    Ts_ns = to_ns(cfg.Ts)
    send_every = endpoint.send_every(cfg.Ts, cfg.state_period_ticks)
    plant = PlantAgent(cfg)
    rtt = RttEstimator()
    counters = _Counters()
    records: List[TraceRecord] = []
    started = time.time()

    sock = open_socket(endpoint.bind)
    logger.info("=" * 80)
    logger.info(f"Plant client {sock.getsockname()} -> {endpoint.peer}, Ts={cfg.Ts}s, state every {send_every} tick(s)")
    logger.info("=" * 80)
    try:
        t0 = clock()
        for k in range(cfg.tick_count):
            if stop is not None and stop.is_set():
                logger.info("plant client stopped")
                break
            deadline = t0 + k * Ts_ns
            wait = (deadline - clock()) / NS_PER_S
            if wait > 0:
                time.sleep(wait)

            rtt_ns = None
            for p, _ in _drain(sock, counters):
                if not isinstance(p.payload, ControlPayload):
                    continue
                if plant.receive(p, clock()) and p.echo_timestamp > 0:
                    rtt_ns = plant.last_rtt_ns
                    rtt.add(rtt_ns)

            selection = plant.select(deadline)
            # Trace times and references are in scenario time
            records.append(trace_record(k, k * Ts_ns, plant, cfg, selection, False, rtt_ns))

            if k % send_every == 0:
                _send(sock, encode(plant.sample(deadline)), endpoint.peer, counters)
            plant.step(selection.controls)
    finally:
        sock.close()

    rtt.log_summary()
    return RunResult(
        records=records,
        scenario=cfg,
        channel_stats={"socket": counters.as_dict(), "rtt": rtt.summary()},
        wall_time=time.time() - started,
    )


def run_controller_server(cfg: ScenarioConfig, endpoint: EndpointConfig,
                          stop: Optional[threading.Event] = None,
                          ready: Optional[threading.Event] = None,
                          bound: Optional[list] = None) -> Dict:
    """
    Answer STATE datagrams with CONTROL datagrams until stopped

    The reply goes to the STATE's sender (the plant or a proxy). Scenario
    time 0 is taken from the first STATE: origin - seq * state period.

    Args:
        ready: set once the socket is bound
        bound: receives the bound address when given

    Returns:
        counters and solver statistics
    """
    clock = CLOCKS[endpoint.clock]
    controller = ControllerAgent(cfg)
    state_period_ns = endpoint.send_every(cfg.Ts, cfg.state_period_ticks) * to_ns(cfg.Ts)
    counters = _Counters()
    epoch_set = False
    last_traffic = time.time()

    sock = open_socket(endpoint.bind)
    if bound is not None:
        bound.append(sock.getsockname())
    if ready is not None:
        ready.set()
    logger.info("=" * 80)
    logger.info(f"Controller server on {sock.getsockname()}, controller={cfg.controller_kind}")
    logger.info("=" * 80)
    try:
        while stop is None or not stop.is_set():
            reply_to = None
            for p, addr in _drain(sock, counters, block=True):
                if not isinstance(p.payload, StatePayload):
                    continue
                if controller.receive(p):
                    reply_to = addr
                    if not epoch_set:
                        controller.epoch_ns = p.origin_timestamp - p.seq * state_period_ns
                        epoch_set = True
            if reply_to is None:
                if endpoint.idle_timeout is not None and time.time() - last_traffic > endpoint.idle_timeout:
                    logger.info("controller server idle, stopping")
                    break
                continue
            last_traffic = time.time()
            p = controller.on_tick(clock())
            if p is not None:
                _send(sock, encode(p), endpoint.peer or reply_to, counters)
    finally:
        sock.close()

    stats = {**counters.as_dict(), **controller.solver_stats()}
    logger.info(f"Controller server summary: {stats}")
    return stats


@dataclass(frozen=True)
class Datagram:
    """Raw datagram queued in a proxy Channel"""
    seq: int
    data: bytes


def run_impairment_proxy(listen: Address, forward_to: Address,
                         fwd: ChannelConfig, bwd: ChannelConfig,
                         stop: Optional[threading.Event] = None,
                         ready: Optional[threading.Event] = None,
                         bound: Optional[list] = None,
                         clock_kind: str = "monotonic",
                         max_datagram: int = settings.MAX_DATAGRAM) -> Dict:
    """
    Relay datagrams between a plant and the server at forward_to

    Datagrams from forward_to travel the FWD channel (controller to plant)
    back to the most recent plant address; everything else travels the BWD
    channel to forward_to. Each direction uses its own Channel, so impairing
    one leaves the other untouched. Datagrams longer than max_datagram bytes
    are counted as oversized and dropped.
    """
    clock = CLOCKS[clock_kind]
    server = _resolve(forward_to)
    fwd_ch = Channel(fwd, "fwd")
    bwd_ch = Channel(bwd, "bwd")
    counters = {"relayed_fwd": 0, "relayed_bwd": 0, "oversized": 0, "send_failures": 0}
    client: Optional[Address] = None
    seq = 0

    sock = open_socket(listen)
    if bound is not None:
        bound.append(sock.getsockname())
    if ready is not None:
        ready.set()
    logger.info("=" * 80)
    logger.info(f"Impairment proxy {sock.getsockname()} <-> {forward_to}")
    logger.info(f"  fwd: delay={fwd.base_delay * 1000:.1f}ms jitter={fwd.jitter * 1000:.1f}ms loss={fwd.loss_rate:.2f}")
    logger.info(f"  bwd: delay={bwd.base_delay * 1000:.1f}ms jitter={bwd.jitter * 1000:.1f}ms loss={bwd.loss_rate:.2f}")
    logger.info("=" * 80)
    t0 = clock()

    def now() -> float:
        return (clock() - t0) / NS_PER_S

    try:
        while stop is None or not stop.is_set():
            pending = [d for d in (fwd_ch.next_delivery(), bwd_ch.next_delivery()) if d is not None]
            timeout = settings.SOCKET_TIMEOUT
            if pending:
                timeout = min(timeout, max(0.0, min(pending) / NS_PER_S - now()))
            sock.settimeout(timeout if timeout > 0 else 1e-4)
            try:
                data, addr = sock.recvfrom(max_datagram + 1)
            except (BlockingIOError, socket.timeout):
                data, addr = None, None
            except OSError as e:
                logger.warning(f"proxy receive failed: {e}")
                data, addr = None, None

            if data is not None:
                if len(data) > max_datagram:
                    counters["oversized"] += 1
                elif addr == server:
                    fwd_ch.send(Datagram(seq, data), now())
                    seq += 1
                else:
                    client = addr
                    bwd_ch.send(Datagram(seq, data), now())
                    seq += 1

            t = now()
            for d in bwd_ch.poll(t):
                if _relay(sock, d.data, forward_to, counters):
                    counters["relayed_bwd"] += 1
            for d in fwd_ch.poll(t):
                if client is not None and _relay(sock, d.data, client, counters):
                    counters["relayed_fwd"] += 1
    finally:
        sock.close()

    stats = {**counters, "fwd": fwd_ch.stats(), "bwd": bwd_ch.stats()}
    logger.info(f"Proxy summary: {stats}")
    return stats


def _resolve(peer: Address) -> Address:
    host, port = peer
    try:
        return socket.gethostbyname(host), port
    except OSError:
        return host, port


def _relay(sock: socket.socket, data: bytes, addr: Address, counters: Dict) -> bool:
    try:
        sock.sendto(data, addr)
        return True
    except OSError as e:
        counters["send_failures"] += 1
        logger.warning(f"proxy send to {addr} failed: {e}")
        return False
