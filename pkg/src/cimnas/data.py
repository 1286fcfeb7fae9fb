"""Datasets: CIFAR-10 binary reader and a synthetic Gaussian-blob generator."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DataError",
    "Dataset",
    "CIFAR_RECORD_BYTES",
    "read_cifar10_bin",
    "stratified_indices",
    "ingest_cifar10",
    "synth_dataset",
]

CIFAR_RECORD_BYTES = 3073
CIFAR_SHAPE = (3, 32, 32)


class DataError(ValueError):
    pass


@dataclass
class Dataset:
    images: np.ndarray  # (n, c, h, w), values in [0, 1]
    labels: np.ndarray  # (n,) int64
    num_classes: int
    splits: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise DataError(f"{len(self.images)} images but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DataError("label outside [0, num_classes)")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def image_shape(self) -> tuple:
        return tuple(self.images.shape[1:])

    def split(self, name: str) -> "Dataset":
        if name not in self.splits:
            raise DataError(f"no split named {name!r}; have {sorted(self.splits)}")
        idx = self.splits[name]
        return Dataset(self.images[idx], self.labels[idx], self.num_classes)


def read_cifar10_bin(path) -> tuple[np.ndarray, np.ndarray]:
    """Decode one CIFAR-10 binary batch: 1 label byte + 3072 channel-major pixel bytes per record."""
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0 or raw.size % CIFAR_RECORD_BYTES:
        raise DataError(f"{path}: size {raw.size} is not a positive multiple of {CIFAR_RECORD_BYTES}")
    records = raw.reshape(-1, CIFAR_RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels > 9)
    if bad.size:
        raise DataError(f"{path}: record {int(bad[0])} has label byte {int(labels[bad[0]])} > 9")
    images = records[:, 1:].reshape(-1, *CIFAR_SHAPE).astype(np.float64) / 255.0
    return images, labels


def stratified_indices(labels: np.ndarray, count: int, num_classes: int,
                       rng: np.random.Generator, exclude=None) -> np.ndarray:
    """Pick ``count`` indices spread as evenly over classes as the data allows."""
    pools = []
    taken = set() if exclude is None else set(int(i) for i in exclude)
    for c in range(num_classes):
        idx = np.flatnonzero(labels == c)
        idx = np.array([i for i in idx if i not in taken], dtype=np.int64)
        pools.append(list(rng.permutation(idx)))
    picked: list[int] = []
    while len(picked) < count and any(pools):
        for pool in pools:
            if pool and len(picked) < count:
                picked.append(int(pool.pop(0)))
    return np.sort(np.array(picked, dtype=np.int64))


def ingest_cifar10(path, train_subset: int, test_subset: int, seed: int = 0) -> Dataset:
    """Load CIFAR-10 binaries and draw class-stratified train/test subsets.

    ``path`` is either one batch file (both splits are drawn from it, disjoint)
    or a directory holding ``data_batch_*.bin`` and ``test_batch.bin``.
    """
    path = Path(path)
    rng = np.random.default_rng(seed)
    if path.is_dir():
        train_files = sorted(path.glob("data_batch_*.bin"))
        test_file = path / "test_batch.bin"
        if not train_files or not test_file.exists():
            raise DataError(f"{path}: expected data_batch_*.bin and test_batch.bin")
        parts = [read_cifar10_bin(f) for f in train_files]
        xtr = np.concatenate([p[0] for p in parts])
        ytr = np.concatenate([p[1] for p in parts])
        xte, yte = read_cifar10_bin(test_file)
        tr = stratified_indices(ytr, train_subset, 10, rng)
        te = stratified_indices(yte, test_subset, 10, rng)
        images = np.concatenate([xtr[tr], xte[te]])
        labels = np.concatenate([ytr[tr], yte[te]])
        splits = {"train": np.arange(len(tr)), "test": np.arange(len(tr), len(tr) + len(te))}
        return Dataset(images, labels, 10, splits)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    images, labels = read_cifar10_bin(path)
    tr = stratified_indices(labels, train_subset, 10, rng)
    te = stratified_indices(labels, test_subset, 10, rng, exclude=tr)
    keep = np.concatenate([tr, te])
    splits = {"train": np.arange(len(tr)), "test": np.arange(len(tr), len(keep))}
    return Dataset(images[keep], labels[keep], 10, splits)


def _blob_basis(classes: int, image_shape, rng: np.random.Generator) -> np.ndarray:
    """Orthonormal class directions shaped like Gaussian spots at random positions."""
    c, h, w = image_shape
    yy, xx = np.mgrid[0:h, 0:w]
    width = max(h, w) / 5.0
    spots = []
    for _ in range(classes):
        cy, cx = rng.uniform(0, h - 1), rng.uniform(0, w - 1)
        spot = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width ** 2))
        spots.append(np.broadcast_to(spot, (c, h, w)).ravel() * rng.uniform(0.5, 1.0, size=c).repeat(h * w))
    m = np.stack(spots, axis=1)
    # symmetric orthogonalisation keeps each direction close to its spot
    u, _, vt = np.linalg.svd(m, full_matrices=False)
    return (u @ vt).T


def synth_dataset(classes: int, n: int, image_shape=(1, 8, 8), separation: float = 4.0,
                  seed: int = 0, test_fraction: float = 0.25, pixel_scale: float = 0.1,
                  background: float = 0.5) -> Dataset:
    """Gaussian class blobs rendered as images.

    Each class mean is a unit direction in pixel space shaped like a spot at a
    random position; the directions are orthonormal and scaled so every pair
    of class means is ``separation`` noise-sigmas apart. Samples are
    ``background + pixel_scale * (mean + N(0, I))`` clipped to ``[0, 1]``.
    """
    image_shape = tuple(image_shape)
    dim = int(np.prod(image_shape))
    if classes > dim:
        raise DataError(f"{classes} classes need at least that many pixels, have {dim}")
    rng = np.random.default_rng(seed)
    means = _blob_basis(classes, image_shape, rng) * (separation / np.sqrt(2.0))
    labels = rng.permutation(np.arange(n) % classes)
    z = means[labels] + rng.normal(size=(n, dim))
    images = np.clip(background + pixel_scale * z, 0.0, 1.0).reshape(n, *image_shape)
    n_test = int(round(n * test_fraction))
    splits = {"train": np.arange(n - n_test), "test": np.arange(n - n_test, n)}
    return Dataset(images, labels.astype(np.int64), classes, splits)
