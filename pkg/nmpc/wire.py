"""
Binary datagram format for STATE and CONTROL packets

Header, little-endian, 32 bytes:

    0-3    magic "NMPC"
    4      version (1)
    5      msg_type (0 = STATE, 1 = CONTROL)
    6      joint_count
    7      flags (bit 0: forward prediction applied)
    8-15   seq
    16-23  origin_timestamp_ns
    24-31  echo_timestamp_ns

STATE payload: joint_count x (angle f64, velocity f64).
CONTROL payload: horizon u16, then horizon x joint_count f64, step-major.
"""

import math
import struct

from nmpc.netsim import ControlPayload, Packet, StatePayload

MAGIC = b"NMPC"
VERSION = 1
MSG_STATE = 0
MSG_CONTROL = 1
FLAG_PREDICTION_APPLIED = 0x01

HEADER = struct.Struct("<4sBBBBQQQ")
HEADER_SIZE = HEADER.size
HORIZON = struct.Struct("<H")
MAX_HORIZON = 0xFFFF
MAX_JOINTS = 0xFF
MAX_TIMESTAMP = (1 << 64) - 1


class WireError(ValueError):
    def __init__(self, message: str, field: str = ""):
        super().__init__(message)
        self.field = field


class EncodingError(WireError):
    pass


class BadMagicError(WireError):
    pass


class UnsupportedVersionError(WireError):
    pass


class TruncatedError(WireError):
    pass


class UnknownMessageTypeError(WireError):
    pass


def _check_float(value, field: str) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise EncodingError(f"{field} is not a number: {value!r}", field)
    if not math.isfinite(value):
        raise EncodingError(f"{field} is not finite: {value}", field)
    return value


def encode(p: Packet) -> bytes:
    """Serialize a packet; the result depends only on the packet's fields"""
    payload = p.payload
    if isinstance(payload, StatePayload):
        msg_type = MSG_STATE
        joints = payload.joint_count
        values = []
        for j, pair in enumerate(payload.states):
            if len(pair) != 2:
                raise EncodingError(f"state {j} must be (angle, velocity)", "states")
            values.append(_check_float(pair[0], f"states[{j}].angle"))
            values.append(_check_float(pair[1], f"states[{j}].velocity"))
        body = struct.pack(f"<{len(values)}d", *values)
    elif isinstance(payload, ControlPayload):
        msg_type = MSG_CONTROL
        joints = payload.joint_count
        horizon = payload.horizon
        if not 1 <= horizon <= MAX_HORIZON:
            raise EncodingError(f"horizon out of range: {horizon}", "horizon")
        values = []
        for i, row in enumerate(payload.accelerations):
            if len(row) != joints:
                raise EncodingError(f"step {i} has {len(row)} values for {joints} joints", "accelerations")
            values.extend(_check_float(a, f"accelerations[{i}]") for a in row)
        body = HORIZON.pack(horizon) + struct.pack(f"<{len(values)}d", *values)
    else:
        raise EncodingError(f"unsupported payload {type(payload).__name__}", "payload")

    if not 1 <= joints <= MAX_JOINTS:
        raise EncodingError(f"joint_count out of range: {joints}", "joint_count")
    for name in ("origin_timestamp", "echo_timestamp"):
        value = getattr(p, name)
        if not 0 <= value <= MAX_TIMESTAMP:
            raise EncodingError(f"{name} out of range: {value}", name)

    flags = FLAG_PREDICTION_APPLIED if p.prediction_applied else 0
    header = HEADER.pack(MAGIC, VERSION, msg_type, joints, flags,
                         p.seq, p.origin_timestamp, p.echo_timestamp)
    return header + body


def decode(data: bytes) -> Packet:
    """
    Parse one datagram

    Raises:
        TruncatedError: shorter than the header or the payload it announces,
            or carrying trailing bytes
        BadMagicError, UnsupportedVersionError, UnknownMessageTypeError
    """
    data = bytes(data)
    if len(data) < HEADER_SIZE:
        raise TruncatedError(f"{len(data)} bytes is shorter than the {HEADER_SIZE}-byte header", "header")
    magic, version, msg_type, joints, flags, seq, origin, echo = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}", "magic")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}", "version")
    if joints == 0:
        raise WireError("joint_count is 0", "joint_count")

    offset = HEADER_SIZE
    if msg_type == MSG_STATE:
        expected = offset + 16 * joints
        _check_length(data, expected)
        values = struct.unpack_from(f"<{2 * joints}d", data, offset)
        payload = StatePayload(tuple(
            (values[2 * j], values[2 * j + 1]) for j in range(joints)
        ))
    elif msg_type == MSG_CONTROL:
        if len(data) < offset + HORIZON.size:
            raise TruncatedError("missing horizon field", "horizon")
        (horizon,) = HORIZON.unpack_from(data, offset)
        if horizon == 0:
            raise WireError("horizon is 0", "horizon")
        offset += HORIZON.size
        _check_length(data, offset + 8 * horizon * joints)
        values = struct.unpack_from(f"<{horizon * joints}d", data, offset)
        payload = ControlPayload(tuple(
            tuple(values[i * joints:(i + 1) * joints]) for i in range(horizon)
        ))
    else:
        raise UnknownMessageTypeError(f"unknown msg_type {msg_type}", "msg_type")

    return Packet(
        seq=seq,
        origin_timestamp=origin,
        echo_timestamp=echo,
        payload=payload,
        prediction_applied=bool(flags & FLAG_PREDICTION_APPLIED),
    )


def _check_length(data: bytes, expected: int) -> None:
    if len(data) < expected:
        raise TruncatedError(f"payload truncated: {len(data)} of {expected} bytes", "payload")
    if len(data) > expected:
        raise TruncatedError(f"{len(data) - expected} trailing bytes after payload", "payload")
