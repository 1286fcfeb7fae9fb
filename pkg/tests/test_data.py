import numpy as np
import pytest

from cimnas.data import DataError, Dataset, ingest_cifar10, read_cifar10_bin, stratified_indices, synth_dataset

from oracles import decode_cifar_bytes


def _records(labels, rng):
    out = bytearray()
    for lab in labels:
        out.append(lab)
        out += rng.integers(0, 256, size=3072, dtype=np.uint8).tobytes()
    return bytes(out)


def test_single_record(tmp_path):
    p = tmp_path / "one.bin"
    p.write_bytes(_records([7], np.random.default_rng(0)))
    x, y = read_cifar10_bin(p)
    assert x.shape == (1, 3, 32, 32) and list(y) == [7]
    assert 0.0 <= x.min() and x.max() <= 1.0


def test_golden_ten_record_fixture(tmp_path):
    blob = _records(list(range(10)), np.random.default_rng(42))
    p = tmp_path / "golden.bin"
    p.write_bytes(blob)
    x, y = read_cifar10_bin(p)
    ref_labels, ref_images = decode_cifar_bytes(blob)
    assert list(y) == ref_labels
    assert np.array_equal(x, np.array(ref_images))


@pytest.mark.parametrize("size", [3072, 3074, 0])
def test_bad_sizes_rejected(tmp_path, size):
    p = tmp_path / "bad.bin"
    p.write_bytes(bytes(size))
    with pytest.raises(DataError):
        read_cifar10_bin(p)


def test_bad_label_names_record(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(_records([1, 2, 11], np.random.default_rng(0)))
    with pytest.raises(DataError, match="record 2"):
        read_cifar10_bin(p)


def test_stratified_subset_is_balanced(tmp_path):
    rng = np.random.default_rng(1)
    p = tmp_path / "batch.bin"
    p.write_bytes(_records([i % 10 for i in range(300)], rng))
    ds = ingest_cifar10(p, 100, 50, seed=0)
    train, test = ds.split("train"), ds.split("test")
    assert np.bincount(train.labels, minlength=10).tolist() == [10] * 10
    assert np.bincount(test.labels, minlength=10).tolist() == [5] * 10
    again = ingest_cifar10(p, 100, 50, seed=0)
    assert np.array_equal(again.images, ds.images)


def test_directory_layout(tmp_path):
    rng = np.random.default_rng(2)
    (tmp_path / "data_batch_1.bin").write_bytes(_records([i % 10 for i in range(40)], rng))
    (tmp_path / "test_batch.bin").write_bytes(_records([i % 10 for i in range(20)], rng))
    ds = ingest_cifar10(tmp_path, 20, 10)
    assert len(ds.split("train")) == 20 and len(ds.split("test")) == 10
    with pytest.raises(DataError):
        ingest_cifar10(tmp_path / "missing", 1, 1)


def test_stratified_indices_exclusion():
    labels = np.repeat(np.arange(3), 4)
    first = stratified_indices(labels, 6, 3, np.random.default_rng(0))
    rest = stratified_indices(labels, 6, 3, np.random.default_rng(0), exclude=first)
    assert not set(first) & set(rest)
    assert sorted(np.bincount(labels[rest])) == [2, 2, 2]


def test_dataset_invariants():
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 1, 2, 2)), np.array([0]), 2)
    with pytest.raises(DataError):
        Dataset(np.zeros((1, 1, 2, 2)), np.array([3]), 2)


def test_synth_same_seed_same_data():
    a = synth_dataset(3, 90, seed=4)
    b = synth_dataset(3, 90, seed=4)
    assert np.array_equal(a.images, b.images) and np.array_equal(a.labels, b.labels)
    assert a.images.min() >= 0.0 and a.images.max() <= 1.0


def _nearest_mean_accuracy(ds):
    tr, te = ds.split("train"), ds.split("test")
    xtr, xte = tr.images.reshape(len(tr), -1), te.images.reshape(len(te), -1)
    means = np.stack([xtr[tr.labels == c].mean(axis=0) for c in range(ds.num_classes)])
    pred = np.argmin(((xte[:, None, :] - means[None]) ** 2).sum(-1), axis=1)
    return float((pred == te.labels).mean())


def test_linear_probe_at_four_sigma():
    accs = [_nearest_mean_accuracy(synth_dataset(2, 2000, separation=4.0, seed=s)) for s in range(3)]
    assert min(accs) >= 0.95


def test_zero_separation_is_chance():
    acc = _nearest_mean_accuracy(synth_dataset(4, 4000, separation=0.0, seed=0))
    assert abs(acc - 0.25) < 0.05
