import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sscsr.dataio import (
    DataCondition,
    SignalDataset,
    assign_condition,
    decode_dataset,
    encode_dataset,
    read_dataset,
    read_manifest,
    to_network_input,
    write_dataset,
)
from sscsr.errors import ConfigError, FormatError, ShapeError


def _dataset(per_class=(6, 6, 6), L=8, n_u=2, seed=0, C=3):
    rng = np.random.default_rng(seed)

    def block(n):
        return (rng.standard_normal((n, L)) + 1j * rng.standard_normal((n, L))).astype(np.complex64)

    ly = np.repeat(np.arange(C), per_class)
    return SignalDataset(
        labeled_x=block(len(ly)),
        labeled_y=ly,
        unlabeled_x=block(n_u),
        val_x=block(C),
        val_y=np.arange(C),
        test_x=block(2 * C),
        test_y=np.tile(np.arange(C), 2),
        num_classes=C,
    )


def _ref_encode(ds):
    """Independent encoder built from struct calls, record by record."""
    out = [struct.pack("<6sBII", b"SSCSR1", 1, ds.num_classes, ds.sample_len)]
    parts = [
        (ds.labeled_x, ds.labeled_y),
        (ds.unlabeled_x, [-1] * len(ds.unlabeled_x)),
        (ds.val_x, ds.val_y),
        (ds.test_x, ds.test_y),
    ]
    out.append(struct.pack("<4I", *(len(x) for x, _ in parts)))
    for xs, ys in parts:
        for x, y in zip(xs, ys):
            out.append(struct.pack("<i", int(y)))
            for v in x:
                out.append(struct.pack("<ff", v.real, v.imag))
    return b"".join(out)


def test_encoding_matches_reference_layout():
    ds = _dataset()
    assert encode_dataset(ds) == _ref_encode(ds)


def test_round_trip_bit_exact(tmp_path):
    ds = _dataset()
    path = tmp_path / "d.sscsr"
    write_dataset(ds, path, {"seed": 3})
    back = read_dataset(path)
    assert back.equals(ds)
    assert encode_dataset(back) == path.read_bytes()
    assert read_manifest(path) == {"seed": 3}
    assert read_manifest(tmp_path / "missing.sscsr") is None


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 16), st.integers(0, 5), st.integers(0, 10_000))
def test_round_trip_property(L, n_u, seed):
    ds = _dataset(per_class=(2, 1), L=L, n_u=n_u, seed=seed, C=2)
    blob = encode_dataset(ds)
    assert decode_dataset(blob).equals(ds)
    assert encode_dataset(decode_dataset(blob)) == blob


def test_bad_magic_reports_offset_zero():
    blob = bytearray(encode_dataset(_dataset()))
    blob[0] ^= 0xFF
    with pytest.raises(FormatError) as e:
        decode_dataset(bytes(blob))
    assert e.value.offset == 0


def test_version_mismatch():
    blob = bytearray(encode_dataset(_dataset()))
    blob[6] = 2
    with pytest.raises(FormatError) as e:
        decode_dataset(bytes(blob))
    assert e.value.offset == 6


def test_truncation_reports_first_incomplete_record():
    ds = _dataset()
    blob = encode_dataset(ds)
    rec = 4 + 8 * ds.sample_len
    header = 6 + 1 + 4 + 4 + 16
    cut = header + 5 * rec + 7
    with pytest.raises(FormatError) as e:
        decode_dataset(blob[:cut])
    assert e.value.offset == header + 5 * rec
    with pytest.raises(FormatError):
        decode_dataset(blob[:10])


def test_count_mismatch_and_trailing_bytes():
    blob = bytearray(encode_dataset(_dataset()))
    struct.pack_into("<I", blob, 15, 17)  # claims one more labeled record
    with pytest.raises(FormatError):
        decode_dataset(bytes(blob))
    with pytest.raises(FormatError):
        decode_dataset(encode_dataset(_dataset()) + b"\0\0")


def test_bad_label_in_file():
    ds = _dataset()
    blob = bytearray(encode_dataset(ds))
    struct.pack_into("<i", blob, 31, 7)
    with pytest.raises(FormatError) as e:
        decode_dataset(bytes(blob))
    assert e.value.offset == 31


def test_dataset_validation():
    with pytest.raises(ShapeError):
        SignalDataset(np.zeros(4), [0], np.zeros((0, 4)), np.zeros((1, 4)), [0], np.zeros((1, 4)), [0], 2)
    with pytest.raises(ShapeError):
        SignalDataset(np.zeros((1, 4)), [5], np.zeros((0, 4)), np.zeros((1, 4)), [0], np.zeros((1, 4)), [0], 2)
    with pytest.raises(ShapeError):
        SignalDataset(np.zeros((1, 4)), [0], np.zeros((0, 3)), np.zeros((1, 4)), [0], np.zeros((1, 4)), [0], 2)


def test_condition_parse():
    c = DataCondition.parse("10 + 1000")
    assert (c.m_labeled_per_class, c.n_unlabeled_per_class) == (10, 1000)
    assert str(c) == "10+1000"
    for bad in ("10", "a+b", "-1+3"):
        with pytest.raises(ConfigError):
            DataCondition.parse(bad)
    with pytest.raises(ConfigError):
        DataCondition(0, 5)


def test_assign_condition_counts_and_disjointness():
    ds = _dataset(per_class=(20, 20, 20), n_u=0)
    out = assign_condition(ds, DataCondition(3, 10), seed=1)
    assert out.class_counts("labeled").tolist() == [3, 3, 3]
    assert len(out.unlabeled_x) == 30
    assert np.array_equal(out.val_x, ds.val_x) and np.array_equal(out.test_x, ds.test_x)
    rows = {r.tobytes() for r in out.labeled_x}
    assert rows.isdisjoint({r.tobytes() for r in out.unlabeled_x})
    src = {r.tobytes() for r in ds.labeled_x}
    assert rows <= src


def test_assign_condition_determinism_and_seed_dependence():
    ds = _dataset(per_class=(200, 200), n_u=0, C=2)
    a = assign_condition(ds, DataCondition(10, 50), seed=4)
    assert a.equals(assign_condition(ds, DataCondition(10, 50), seed=4))
    assert not np.array_equal(a.labeled_x, assign_condition(ds, DataCondition(10, 50), seed=5).labeled_x)


def test_assign_condition_no_unlabeled_and_shortage():
    ds = _dataset(per_class=(6, 6, 6), n_u=0)
    assert len(assign_condition(ds, DataCondition(2, 0), 0).unlabeled_x) == 0
    with pytest.raises(ConfigError):
        assign_condition(ds, DataCondition(4, 3), 0)


def test_network_input_layout():
    x = np.array([[1 + 2j, 3 - 4j]])
    out = to_network_input(x)
    assert out.shape == (1, 2, 2)
    assert out[0, 0].tolist() == [1, 3] and out[0, 1].tolist() == [2, -4]
