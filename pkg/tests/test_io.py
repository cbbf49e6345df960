import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from octscatter.fields import ParameterMaps, ScalarField
from octscatter.io import (
    HEADER_SIZE,
    OctmapError,
    decode_octmap,
    encode_octmap,
    read_manifest,
    read_octmap,
    read_pgm,
    render_pgm,
    to_gray8,
    write_manifest,
    write_octmap,
)

# 1x1 scalar field, value 1.0, pitch_x 1.0 m, pitch_z 0.5 m
GOLDEN_SCALAR = bytes.fromhex(
    "4f43544d"            # magic OCTM
    "0100"                # version 1
    "01000000"            # width 1
    "01000000"            # height 1
    "01"                  # channels 1
    "00"                  # dtype float32
    "000000000000f03f"    # pitch_x 1.0
    "000000000000e03f"    # pitch_z 0.5
    "0000803f"            # payload 1.0f
)

# 1x1 maps (n, mu_s, g) = (1.5, 2.0, 0.5), pitches 1.0 / 0.5
GOLDEN_MAPS = bytes.fromhex(
    "4f43544d" "0100" "01000000" "01000000" "03" "00"
    "000000000000f03f" "000000000000e03f"
    "0000c03f" "00000040" "0000003f"
)


def test_header_size():
    assert HEADER_SIZE == 32


def test_golden_scalar_bytes(tmp_path):
    f = ScalarField(np.array([[1.0]]), 1.0, 0.5)
    assert encode_octmap(f) == GOLDEN_SCALAR
    p = tmp_path / "one.octm"
    write_octmap(p, f)
    assert p.read_bytes() == GOLDEN_SCALAR
    assert len(GOLDEN_SCALAR) == 36
    back = read_octmap(p)
    assert isinstance(back, ScalarField) and back.data[0, 0] == 1.0


def test_golden_maps_bytes():
    maps = ParameterMaps.from_arrays([[1.5]], [[2.0]], [[0.5]], 1.0, 0.5)
    assert encode_octmap(maps) == GOLDEN_MAPS
    back = decode_octmap(GOLDEN_MAPS)
    assert isinstance(back, ParameterMaps)
    assert (back.n.data[0, 0], back.mu_s.data[0, 0], back.g.data[0, 0]) == (1.5, 2.0, 0.5)


def test_narrowing_rounds_to_nearest():
    x = 1.0 + 2.0**-24 + 2.0**-30  # just above the midpoint between two float32 values
    f = decode_octmap(encode_octmap(ScalarField(np.array([[x]]), 1.0, 1.0)))
    assert f.data[0, 0] == 1.0 + 2.0**-23


def test_round_trip_random(tmp_path, rng):
    from conftest import random_maps

    maps = random_maps(rng, 17, 9, 8e-6, 3e-6)
    p = tmp_path / "m.octm"
    write_octmap(p, maps)
    back = read_octmap(p)
    for a, b in zip(maps.stack(), back.stack()):
        np.testing.assert_array_equal(a.astype(np.float32).astype(np.float64), b)
    assert (back.pitch_x, back.pitch_z) == (8e-6, 3e-6)


@settings(max_examples=50, deadline=None)
@given(
    h=st.integers(1, 6), w=st.integers(1, 6),
    px=st.floats(1e-7, 1e-3), pz=st.floats(1e-7, 1e-3), seed=st.integers(0, 2**32 - 1),
)
def test_round_trip_property(h, w, px, pz, seed):
    data = np.random.default_rng(seed).normal(size=(h, w)) * 1e6
    back = decode_octmap(encode_octmap(ScalarField(data, px, pz)))
    np.testing.assert_array_equal(back.data, data.astype(np.float32))
    assert back.pitch_x == px and back.pitch_z == pz


def test_bad_magic():
    with pytest.raises(OctmapError, match="bad magic"):
        decode_octmap(b"XCTM" + GOLDEN_SCALAR[4:])


@pytest.mark.parametrize("cut", [0, 10, 31, 32, 35])
def test_truncated(cut):
    with pytest.raises(OctmapError, match=f"unexpected end of file at byte {cut}"):
        decode_octmap(GOLDEN_SCALAR[:cut])


def test_trailing_bytes_rejected():
    with pytest.raises(OctmapError, match="trailing"):
        decode_octmap(GOLDEN_SCALAR + b"\0")


@pytest.mark.parametrize("offset, value, field", [(4, b"\x02\x00", "version"), (15, b"\x01", "dtype"), (14, b"\x02", "channel")])
def test_bad_header_fields_named(offset, value, field):
    buf = bytearray(GOLDEN_SCALAR)
    buf[offset:offset + len(value)] = value
    with pytest.raises(OctmapError, match=field):
        decode_octmap(bytes(buf))


def test_maps_invariants_checked_on_load():
    buf = bytearray(GOLDEN_MAPS)
    buf[32:36] = np.float32(2.5).tobytes()  # n out of range
    with pytest.raises(OctmapError, match="n outside"):
        decode_octmap(bytes(buf))
    buf = bytearray(GOLDEN_MAPS)
    buf[36:40] = np.float32(np.nan).tobytes()
    with pytest.raises(OctmapError, match="non-finite"):
        decode_octmap(bytes(buf))


def test_boundary_g_survives_float32():
    maps = ParameterMaps.from_arrays([[2.0]], [[0.0]], [[0.999]], 1.0, 1.0)
    back = decode_octmap(encode_octmap(maps))
    assert back.g.data[0, 0] <= 0.999


def test_unwritable_path_named(tmp_path):
    target = tmp_path / "missing_dir" / "x.octm"
    with pytest.raises(OSError, match="missing_dir"):
        write_octmap(target, ScalarField(np.ones((1, 1)), 1.0, 1.0))


def test_missing_file_named(tmp_path):
    with pytest.raises(OSError, match="nope.octm"):
        read_octmap(tmp_path / "nope.octm")


def test_encode_rejects_other_types():
    with pytest.raises(TypeError):
        encode_octmap(np.ones((2, 2)))


# -- manifest --------------------------------------------------------------------

def test_manifest_round_trip(tmp_path):
    recs = [{"id": 0, "seed": 5, "scene_file": "s", "bscan_file": "b", "maps_file": "m", "extra": [1, 2]}]
    p = tmp_path / "manifest.jsonl"
    write_manifest(p, recs)
    assert read_manifest(p) == recs
    line = p.read_text().splitlines()[0]
    assert list(json.loads(line)) == sorted(recs[0])


def test_manifest_requires_schema_keys(tmp_path):
    with pytest.raises(ValueError, match="maps_file"):
        write_manifest(tmp_path / "m.jsonl", [{"id": 0, "seed": 1, "scene_file": "", "bscan_file": ""}])


# -- PGM -------------------------------------------------------------------------

def test_pgm_constant_is_mid_gray(tmp_path):
    p = tmp_path / "c.pgm"
    render_pgm(ScalarField(np.full((3, 5), 7.0), 1.0, 1.0), p)
    img = read_pgm(p)
    assert img.shape == (3, 5) and np.all(img == 128)
    assert p.read_bytes().startswith(b"P5\n5 3\n255\n")


def test_pgm_two_values_linear():
    assert set(np.unique(to_gray8(np.array([[0.0, 1.0], [1.0, 0.0]])))) == {0, 255}


def test_pgm_log_floor_maps_zero_to_black():
    img = to_gray8(np.array([[0.0, 1e-3, 1.0]]), log=True, floor_db=-60.0)
    assert img[0, 0] == 0 and img[0, 2] == 255
    # -30 dB sits halfway down a 60 dB range
    assert img[0, 1] == 128


def test_pgm_log_all_zero_is_mid_gray():
    assert np.all(to_gray8(np.zeros((2, 2)), log=True) == 128)


def test_pgm_monotone(rng):
    a = rng.uniform(size=200)
    img = to_gray8(a[None])[0]
    order = np.argsort(a)
    assert np.all(np.diff(img[order].astype(int)) >= 0)
