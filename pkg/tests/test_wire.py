import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pirpsi.errors import MalformedFrameError, MalformedQueryError, UsageError
from pirpsi.protocol import Answer, Library, Params, admissible_pairs, generate_queries
from pirpsi.wire import (
    MAX_FRAME,
    Kind,
    WireMessage,
    decode_answer,
    decode_query,
    encode_answer,
    encode_query,
    pack_frame,
    parse_frame,
    read_library,
    write_library,
)


@given(st.sampled_from(list(Kind)), st.binary(max_size=2048))
def test_frame_round_trip(kind, payload):
    msg = WireMessage(kind, payload)
    frame = pack_frame(msg)
    assert frame[:4] == struct.pack("<I", len(payload))
    assert frame[4] == int(kind)
    parsed, rest = parse_frame(frame + b"tail")
    assert parsed == msg and rest == b"tail"


def test_truncated_and_bogus_frames():
    with pytest.raises(MalformedFrameError):
        parse_frame(b"\x01\x00")
    with pytest.raises(MalformedFrameError):
        parse_frame(struct.pack("<IB", 10, 1) + b"abc")
    with pytest.raises(MalformedFrameError):
        parse_frame(struct.pack("<IB", 0, 9))
    with pytest.raises(MalformedFrameError):
        parse_frame(struct.pack("<IB", MAX_FRAME + 1, 1))


def test_query_layout_bytes():
    params = Params(2, 4, 2, 1)
    q = generate_queries(params, (0, 1), (2,), seed=0)[0]
    data = encode_query(q)
    header = np.frombuffer(data[:24], dtype="<u4").tolist()
    assert header == [4, 1, 1, 2, 11, 6]
    # header + K*c phase-1 positions + P*K coefficients + K*c positions
    assert len(data) == 4 * (6 + 4 + 8 + 4)


@pytest.mark.parametrize("tup", [(2, 4, 2, 1, 1), (3, 5, 2, 1, 3), (2, 1, 1, 0, 2)])
def test_query_round_trip_and_injective(tup):
    params = Params(*tup)
    seen = {}
    for side, req in admissible_pairs(params):
        for seed in range(3):
            for q in generate_queries(params, req, side, seed):
                data = encode_query(q)
                assert decode_query(data) == q
                assert seen.setdefault(data, q) == q


def test_malformed_query_payloads():
    params = Params(2, 4, 2, 1)
    data = encode_query(generate_queries(params, (0, 1), (2,), seed=0)[0])
    with pytest.raises(MalformedQueryError):
        decode_query(data[:-4])
    with pytest.raises(MalformedQueryError):
        decode_query(data + b"\x00\x00\x00\x00")
    with pytest.raises(MalformedQueryError):
        decode_query(struct.pack("<6I", 1000, 1000, 1000, 9, 11, 6))


def test_answer_round_trip():
    a = Answer(np.array([[1, 2, 3], [65536, 0, 7]]))
    data = encode_answer(a)
    assert len(data) == 8 + 6 * 4
    assert decode_answer(data) == a


def test_library_file_round_trip(tmp_path):
    lib = Library.random(3, 8, seed=4)
    path = tmp_path / "lib.pirl"
    write_library(path, lib)
    raw = path.read_bytes()
    assert raw[:4] == b"PIRL"
    assert struct.unpack_from("<4I", raw, 4) == (1, 65537, 3, 8)
    assert len(raw) == 20 + 4 * 24
    assert read_library(path) == lib


def test_library_file_errors(tmp_path):
    path = tmp_path / "bad.pirl"
    path.write_bytes(b"NOPE" + bytes(16))
    with pytest.raises(UsageError):
        read_library(path)
    path.write_bytes(struct.pack("<4s4I", b"PIRL", 1, 7, 1, 2) + struct.pack("<2I", 1, 9))
    with pytest.raises(UsageError):
        read_library(path)
    path.write_bytes(struct.pack("<4s4I", b"PIRL", 1, 7, 1, 2) + struct.pack("<I", 1))
    with pytest.raises(UsageError):
        read_library(path)
