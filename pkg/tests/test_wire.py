import struct

import numpy as np
import pytest

from nmpc.netsim import ControlPayload, Packet, StatePayload
from nmpc.wire import (
    HEADER_SIZE,
    MAGIC,
    BadMagicError,
    EncodingError,
    TruncatedError,
    UnknownMessageTypeError,
    UnsupportedVersionError,
    WireError,
    decode,
    encode,
)


def _state_packet(joints=1, seq=7):
    return Packet(seq=seq, origin_timestamp=1_000, echo_timestamp=500,
                  payload=StatePayload(tuple((0.25 * j, -1.5) for j in range(joints))))


def _control_packet(horizon=30, joints=6, prediction=True):
    plan = tuple(tuple(float(i * joints + j) for j in range(joints)) for i in range(horizon))
    return Packet(seq=3, origin_timestamp=2_000, echo_timestamp=1_000,
                  payload=ControlPayload(plan), prediction_applied=prediction)


def test_state_layout():
    data = encode(_state_packet())
    assert HEADER_SIZE == 32
    assert len(data) == 48
    assert data[:4] == MAGIC
    assert data[4] == 1
    assert data[5] == 0
    assert data[6] == 1
    assert data[7] == 0
    assert struct.unpack_from("<QQQ", data, 8) == (7, 1_000, 500)
    assert struct.unpack_from("<2d", data, 32) == (0.0, -1.5)


def test_control_layout():
    data = encode(_control_packet())
    assert len(data) - HEADER_SIZE == 1442
    assert data[5] == 1
    assert data[7] & 0x01
    assert struct.unpack_from("<H", data, 32) == (30,)
    # Step-major: step 1, joint 0 follows the six values of step 0
    assert struct.unpack_from("<d", data, 34 + 6 * 8) == (6.0,)


def test_decode_restores_packets():
    for p in (_state_packet(joints=6), _control_packet(), _control_packet(horizon=1, joints=1, prediction=False)):
        assert decode(encode(p)) == p


def test_encoding_depends_only_on_fields():
    assert encode(_control_packet()) == encode(_control_packet())


def test_bad_magic_and_version():
    data = bytearray(encode(_state_packet()))
    data[0:4] = b"XXXX"
    with pytest.raises(BadMagicError) as e:
        decode(bytes(data))
    assert e.value.field == "magic"

    data = bytearray(encode(_state_packet()))
    data[4] = 2
    with pytest.raises(UnsupportedVersionError):
        decode(bytes(data))


def test_unknown_type_and_zero_joints():
    data = bytearray(encode(_state_packet()))
    data[5] = 9
    with pytest.raises(UnknownMessageTypeError):
        decode(bytes(data))

    data = bytearray(encode(_state_packet()))
    data[6] = 0
    with pytest.raises(WireError):
        decode(bytes(data))


def test_truncation_and_trailing_bytes():
    data = encode(_control_packet())
    with pytest.raises(TruncatedError):
        decode(data[:20])
    with pytest.raises(TruncatedError):
        decode(data[:33])
    with pytest.raises(TruncatedError):
        decode(data[:-1])
    with pytest.raises(TruncatedError):
        decode(data + b"\x00")


def test_zero_horizon_is_rejected():
    data = bytearray(encode(_control_packet(horizon=1, joints=1)))
    data[32:34] = b"\x00\x00"
    with pytest.raises(WireError):
        decode(bytes(data[:34]))


def test_encode_rejects_non_finite_values():
    p = Packet(seq=0, origin_timestamp=0, echo_timestamp=0,
               payload=StatePayload(((float("nan"), 0.0),)))
    with pytest.raises(EncodingError) as e:
        encode(p)
    assert "angle" in e.value.field


def test_encode_rejects_ragged_or_oversized_payloads():
    ragged = Packet(seq=0, origin_timestamp=0, echo_timestamp=0,
                    payload=ControlPayload(((1.0, 2.0), (1.0,))))
    with pytest.raises(EncodingError):
        encode(ragged)
    too_many = Packet(seq=0, origin_timestamp=0, echo_timestamp=0,
                      payload=StatePayload(((0.0, 0.0),) * 256))
    with pytest.raises(EncodingError):
        encode(too_many)
    empty = Packet(seq=0, origin_timestamp=0, echo_timestamp=0, payload=ControlPayload(()))
    with pytest.raises(EncodingError):
        encode(empty)


def test_random_bytes_never_crash_the_decoder():
    rng = np.random.default_rng(1234)
    valid = encode(_control_packet(horizon=3, joints=2))
    for _ in range(100_000):
        if rng.random() < 0.5:
            data = rng.integers(0, 256, size=int(rng.integers(0, 120)), dtype=np.uint8).tobytes()
        else:
            # Flip a few bytes of a valid datagram
            buf = bytearray(valid)
            for pos in rng.integers(0, len(buf), size=3):
                buf[pos] = int(rng.integers(0, 256))
            data = bytes(buf)
        try:
            p = decode(data)
        except WireError:
            continue
        assert isinstance(p, Packet)
