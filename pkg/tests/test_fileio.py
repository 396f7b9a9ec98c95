"""Artifact file formats: volumes, atlases, cohort manifests, CSV."""

import numpy as np
import pytest

from latentscope.data import AtlasMap, Volume
from latentscope.errors import FormatError
from latentscope.fileio import (load_atlas, load_cohort, load_volume, read_csv,
                                save_atlas, save_cohort, save_volume,
                                write_csv)


def _random_volume(seed, dims=(4, 5, 6)):
    rng = np.random.default_rng(seed)
    return Volume(rng.uniform(0, 1, size=dims).astype(np.float32))


def test_volume_round_trip_is_bit_exact(tmp_path):
    vol = _random_volume(0)
    path = str(tmp_path / "v.vol")
    save_volume(vol, path)
    back = load_volume(path)
    assert back.dims == vol.dims
    assert np.array_equal(back.voxels, vol.voxels)


def test_zero_volume_payload_layout(tmp_path):
    vol = Volume(np.zeros((2, 2, 2), dtype=np.float32))
    path = tmp_path / "z.vol"
    save_volume(vol, str(path))
    data = path.read_bytes()
    assert data.startswith(b"LSVOL1\n")
    rest = data[len(b"LSVOL1\n"):]
    header, payload = rest.split(b"\n", 1)
    assert header == b"2 2 2"
    assert payload == b"\x00" * 32  # 8 voxels x 4 bytes


def test_magic_mismatch_raises_format_error(tmp_path):
    path = tmp_path / "bad.vol"
    path.write_bytes(b"NOTMAG\n2 2 2\n" + b"\x00" * 32)
    with pytest.raises(FormatError):
        load_volume(str(path))


def test_truncated_payload_raises_format_error(tmp_path):
    vol = Volume(np.zeros((2, 2, 2), dtype=np.float32))
    path = tmp_path / "t.vol"
    save_volume(vol, str(path))
    data = path.read_bytes()
    path.write_bytes(data[:-5])
    with pytest.raises(FormatError):
        load_volume(str(path))


def test_malformed_dims_line_raises_format_error(tmp_path):
    path = tmp_path / "d.vol"
    path.write_bytes(b"LSVOL1\n2 x 2\n" + b"\x00" * 32)
    with pytest.raises(FormatError):
        load_volume(str(path))


def test_atlas_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    labels = rng.integers(1, 4, size=(3, 4, 3)).astype(np.uint32)
    labels.flat[:3] = [1, 2, 3]
    atlas = AtlasMap(labels=labels, region_count=3)
    path = str(tmp_path / "a.atl")
    save_atlas(atlas, path)
    back = load_atlas(path)
    assert back.region_count == 3
    assert np.array_equal(back.labels, atlas.labels)


def test_atlas_magic_differs_from_volume(tmp_path):
    vol = _random_volume(2)
    path = str(tmp_path / "v.vol")
    save_volume(vol, path)
    with pytest.raises(FormatError):
        load_atlas(path)


def test_cohort_round_trip(tmp_path, small_cohort):
    directory = str(tmp_path / "cohort")
    save_cohort(directory, small_cohort)
    back = load_cohort(directory)
    assert back.subject_ids == small_cohort.subject_ids
    assert list(back.class_labels) == list(small_cohort.class_labels)
    assert np.array_equal(back.atlas.labels, small_cohort.atlas.labels)
    for sa, sb in zip(back.subjects, small_cohort.subjects):
        assert np.array_equal(sa.volume.voxels, sb.volume.voxels)


def test_csv_round_trip_with_comments(tmp_path):
    path = str(tmp_path / "t.csv")
    rows = [{"a": 1, "b": "x"}, {"a": 2, "b": "y"}]
    write_csv(path, ["a", "b"], rows, comments=("config_hash=deadbeef",))
    back = read_csv(path)
    assert back == [{"a": "1", "b": "x"}, {"a": "2", "b": "y"}]
    with open(path, encoding="utf-8") as f:
        first = f.readline()
    assert first.startswith("#") and "deadbeef" in first


def test_csv_float_formatting_is_round_trippable(tmp_path):
    path = str(tmp_path / "f.csv")
    value = 0.1234567890123456789
    write_csv(path, ["v"], [{"v": value}])
    back = float(read_csv(path)[0]["v"])
    assert back == pytest.approx(value, rel=0, abs=0) or back == float(
        np.float64(value))
