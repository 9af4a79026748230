import struct

import numpy as np
import pytest

from fedsym.dataset import (
    SampleStore,
    index_labels,
    index_of,
    load_idx,
    parse_dataset_spec,
    synth_classification,
    write_idx,
)
from fedsym.errors import BadMagic, CountMismatch, InvalidDataset, TruncatedFile


def _raw_idx_pair(tmp_path, n, rows=28, cols=28, seed=0, label_magic=0x801, image_magic=0x803):
    rng = np.random.default_rng(seed)
    pixels = rng.integers(0, 256, size=(n, rows, cols), dtype=np.uint8)
    labels = rng.integers(0, 10, size=n, dtype=np.uint8)
    img = tmp_path / "images.idx"
    lab = tmp_path / "labels.idx"
    img.write_bytes(struct.pack(">IIII", image_magic, n, rows, cols) + pixels.tobytes())
    lab.write_bytes(struct.pack(">II", label_magic, n) + labels.tobytes())
    return img, lab, pixels, labels


def _reference_records(img_path, lab_path, count):
    # byte-at-a-time reader, independent of numpy frombuffer
    img = img_path.read_bytes()
    lab = lab_path.read_bytes()
    rows = int.from_bytes(img[8:12], "big")
    cols = int.from_bytes(img[12:16], "big")
    size = rows * cols
    out = []
    for r in range(count):
        start = 16 + r * size
        out.append(([img[start + j] / 255.0 for j in range(size)], lab[8 + r]))
    return out


def test_load_ten_thousand_records(tmp_path):
    img, lab, _, labels = _raw_idx_pair(tmp_path, 10_000)
    store = load_idx(img, lab)
    assert store.n == 10_000
    assert store.dims == 784
    assert store.n_classes == 10
    assert store.features.min() >= 0.0 and store.features.max() <= 1.0
    assert np.array_equal(store.labels, labels)


def test_loader_matches_reference_parser(tmp_path):
    img, lab, _, _ = _raw_idx_pair(tmp_path, 50, seed=3)
    store = load_idx(img, lab)
    for r, (pixels, label) in enumerate(_reference_records(img, lab, 10)):
        assert store.features[r].tolist() == pixels
        assert store.labels[r] == label


def test_labels_file_with_image_magic_is_rejected(tmp_path):
    img, lab, _, _ = _raw_idx_pair(tmp_path, 5, label_magic=0x803)
    with pytest.raises(BadMagic):
        load_idx(img, lab)


def test_image_file_with_wrong_magic(tmp_path):
    img, lab, _, _ = _raw_idx_pair(tmp_path, 5, image_magic=0x801)
    with pytest.raises(BadMagic):
        load_idx(img, lab)


def test_truncated_image_file(tmp_path):
    img, lab, _, _ = _raw_idx_pair(tmp_path, 5)
    img.write_bytes(img.read_bytes()[: 16 + 784 * 2 + 100])
    with pytest.raises(TruncatedFile):
        load_idx(img, lab)


def test_truncated_header(tmp_path):
    img, lab, _, _ = _raw_idx_pair(tmp_path, 5)
    lab.write_bytes(lab.read_bytes()[:6])
    with pytest.raises(TruncatedFile):
        load_idx(img, lab)


def test_count_mismatch(tmp_path):
    img, _, _, _ = _raw_idx_pair(tmp_path, 5)
    other = tmp_path / "other"
    other.mkdir()
    _, lab, _, _ = _raw_idx_pair(other, 6)
    with pytest.raises(CountMismatch):
        load_idx(img, lab)


def test_write_idx_round_trip(tmp_path):
    pixels = np.arange(2 * 3 * 4, dtype=np.uint8).reshape(2, 3, 4)
    write_idx(pixels, [1, 0], tmp_path / "i", tmp_path / "l")
    store = load_idx(tmp_path / "i", tmp_path / "l")
    assert np.allclose(store.features * 255, pixels.reshape(2, -1))
    assert store.labels.tolist() == [1, 0]


# synthetic ---------------------------------------------------------------

def _nearest_centroid_accuracy(train, test):
    centroids = np.stack([train.features[train.labels == c].mean(axis=0) for c in range(train.n_classes)])
    dist = ((test.features[:, None, :] - centroids[None]) ** 2).sum(axis=2)
    return float(np.mean(dist.argmin(axis=1) == test.labels))


def test_synth_is_deterministic():
    a = synth_classification(10, 500, 16, 4.0, 7)
    b = synth_classification(10, 500, 16, 4.0, 7)
    assert a.features.tobytes() == b.features.tobytes()
    assert a.labels.tobytes() == b.labels.tobytes()


def test_synth_seed_changes_noise_not_centres():
    a = synth_classification(4, 2000, 8, 5.0, 1)
    b = synth_classification(4, 2000, 8, 5.0, 2)
    assert not np.array_equal(a.features, b.features)
    for c in range(4):
        assert np.allclose(a.features[a.labels == c].mean(0), b.features[b.labels == c].mean(0), atol=0.15)


def test_synth_large_separation_is_separable():
    train = synth_classification(10, 200, 16, 50.0, 1)
    test = synth_classification(10, 200, 16, 50.0, 2)
    assert _nearest_centroid_accuracy(train, test) > 0.99


def test_synth_zero_separation_is_chance():
    train = synth_classification(10, 200, 16, 0.0, 1)
    test = synth_classification(10, 500, 16, 0.0, 2)
    assert abs(_nearest_centroid_accuracy(train, test) - 0.1) <= 0.03


def test_synth_more_classes_than_dims():
    s = synth_classification(12, 10, 3, 4.0, 0)
    assert s.features.shape == (120, 3)


# index -------------------------------------------------------------------

def test_index_small():
    ix = index_labels([0, 1, 0, 1], 2)
    assert [x.tolist() for x in ix.by_class] == [[0, 2], [1, 3]]


def test_index_single_class_present_is_allowed():
    ix = index_labels([0, 0, 0], 3)
    assert [len(x) for x in ix.by_class] == [3, 0, 0]


def test_index_synthetic_sizes_and_partition():
    store = synth_classification(10, 500, 16, 4.0, 0)
    ix = index_of(store)
    assert all(len(x) == 500 for x in ix.by_class)
    allidx = np.concatenate(ix.by_class)
    assert sorted(allidx.tolist()) == list(range(store.n))
    for c, members in enumerate(ix.by_class):
        assert (np.diff(members) > 0).all()
        assert (store.labels[members] == c).all()


def test_store_rejects_bad_labels():
    with pytest.raises(InvalidDataset):
        SampleStore(np.zeros((2, 3)), np.array([0, 5]), 3)
    with pytest.raises(InvalidDataset):
        SampleStore(np.full((2, 3), np.nan), np.array([0, 1]), 3)


def test_parse_dataset_spec():
    assert parse_dataset_spec("synthetic:l=10,n=500,d=16,sep=4") == {
        "kind": "synthetic", "l": 10, "n": 500, "d": 16, "sep": 4.0, "seed": 0,
    }
    assert parse_dataset_spec("idx:images=a,labels=b")["images"] == "a"
    for bad in ("csv:x=1", "synthetic:l", "synthetic:q=3", "idx:images=a"):
        with pytest.raises(ValueError):
            parse_dataset_spec(bad)
