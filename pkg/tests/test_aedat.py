import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dvsconv import aedat
from dvsconv.aedat import (
    EventStream,
    Polarity,
    decode_address,
    decode_addresses,
    encode_address,
    encode_addresses,
    read_stream,
    write_stream,
)
from dvsconv.errors import DvsConvError, MalformedAddressError, ParseError


def _record(address, t):
    return int(address).to_bytes(4, "big") + int(t).to_bytes(4, "big")


def test_known_words():
    assert decode_address(0x00000000) == (0, 0, Polarity.OFF)
    assert decode_address(0x00001800) == (1, 0, Polarity.ON)
    assert encode_address(0, 0, Polarity.OFF) == 0
    assert encode_address(1, 0, Polarity.ON) == 0x00001800
    assert decode_address(encode_address(239, 179, Polarity.ON)) == (239, 179, Polarity.ON)
    assert decode_address(encode_address(10, 20, Polarity.ON)) == (10, 20, Polarity.ON)


def test_exhaustive_address_roundtrip():
    x, y, p = np.meshgrid(np.arange(240), np.arange(180), np.arange(2), indexing="ij")
    x, y, p = x.ravel(), y.ravel(), p.ravel()
    assert x.size == 86_400
    words = encode_addresses(x, y, p)
    assert len(np.unique(words)) == 86_400
    dx, dy, dp, bad = decode_addresses(words)
    assert not bad.any()
    assert np.array_equal(dx, x) and np.array_equal(dy, y) and np.array_equal(dp, p)
    # scalar path agrees with the vectorised one on a sample
    for i in range(0, 86_400, 997):
        assert encode_address(int(x[i]), int(y[i]), int(p[i])) == int(words[i])
        assert decode_address(int(words[i])) == (x[i], y[i], p[i])


@pytest.mark.parametrize("word", [240 << 12, 180 << 22, (1 << 31) | 0x1800, 0x3FF << 12])
def test_malformed_words(word):
    with pytest.raises(MalformedAddressError) as exc:
        decode_address(word)
    assert f"{word:08x}" in str(exc.value)


@pytest.mark.parametrize("x,y", [(240, 0), (0, 180), (-1, 0)])
def test_encode_range(x, y):
    with pytest.raises(ValueError):
        encode_address(x, y, Polarity.ON)


def test_handcrafted_body():
    body = _record(encode_address(1, 0, Polarity.ON), 100) + _record(encode_address(0, 0, Polarity.OFF), 200)
    s = read_stream(b"#!AER-DAT2.0\r\n# hello\r\n" + body)
    assert [tuple(e) for e in s] == [(100, 1, 0, Polarity.ON), (200, 0, 0, Polarity.OFF)]
    assert s.geometry == (240, 180)
    assert s.header == ("#!AER-DAT2.0", "# hello")


def test_header_only_and_empty():
    assert len(read_stream(b"#!AER-DAT2.0\n")) == 0
    assert len(read_stream(b"")) == 0
    out = write_stream(EventStream.empty())
    assert out.startswith(b"#!AER-DAT2.0")
    assert aedat.body_bytes(out) == b""


def test_truncated_record_reports_offset():
    data = b"#!AER-DAT2.0\n" + _record(0x1800, 5) + b"\x00\x00\x00"
    with pytest.raises(ParseError, match="offset 21"):
        read_stream(data)


def test_malformed_address_in_body_is_parse_error():
    data = b"#x\n" + _record(0x1800, 1) + _record(250 << 12, 2)
    with pytest.raises(ParseError, match="offset 11"):
        read_stream(data)


def test_decreasing_timestamps_rejected():
    with pytest.raises(ParseError):
        read_stream(_record(0, 5) + _record(0, 4))


def test_timestamps_not_rebased():
    s = read_stream(_record(0, 1_000_000) + _record(0, 1_000_001))
    assert s.t.tolist() == [1_000_000, 1_000_001]


def test_write_rejects_subsampled_geometry():
    s = EventStream([0], [1], [1], [1], (36, 36))
    with pytest.raises(DvsConvError):
        write_stream(s)


def test_synthetic_roundtrip(small_recording, tmp_path):
    stream, _ = small_recording
    assert len(stream) > 5000
    data = write_stream(stream)
    back = read_stream(data)
    assert back == stream
    # write(read(f)) reproduces the body bytes
    assert aedat.body_bytes(write_stream(back)) == aedat.body_bytes(data)
    aedat.save(stream, tmp_path / "r.aedat")
    assert aedat.load(tmp_path / "r.aedat") == stream


def test_parsing_keeps_record_order_for_equal_timestamps():
    words = [encode_address(x, 3, 1) for x in (5, 2, 9)]
    s = read_stream(b"".join(_record(w, 7) for w in words))
    assert s.x.tolist() == [5, 2, 9]


events = st.lists(
    st.tuples(st.integers(0, 5000), st.integers(0, 239), st.integers(0, 179), st.sampled_from([0, 1])),
    max_size=200,
)


@settings(max_examples=60, deadline=None)
@given(events)
def test_roundtrip_property(evs):
    evs = sorted(evs, key=lambda e: e[0])
    s = EventStream.from_events(evs)
    assert read_stream(write_stream(s)) == s
