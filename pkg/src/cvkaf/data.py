"""Dataset ingestion and the FFT complexification pipeline.

Images arrive as IDX files (optionally gzip-compressed). Each image is
mapped through an unnormalized 2-D DFT; coefficients are ranked by their
mean absolute value over the training split only, the top K are kept as
the complex feature vector, and features are standardized per coefficient
with constants fit on the training split. The resulting dataset, including
split membership and standardization constants, round-trips bit-exactly
through a versioned binary cache.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import container
from .errors import CacheError, DataFormatError, ParameterError

__all__ = [
    "RawImageSet",
    "ComplexDataset",
    "load_idx",
    "fft2",
    "naive_dft2",
    "rank_and_select",
    "build_complex_dataset",
    "cache_dataset",
    "load_cached",
    "load_named_dataset",
    "DATASET_FILES",
]

_IMAGE_MAGIC = 2051
_LABEL_MAGIC = 2049
_CACHE_MAGIC = b"CVKC"
_CACHE_VERSION = 1
_CHUNK = 2048  # images per FFT batch; bounds peak memory


@dataclass
class RawImageSet:
    images: np.ndarray  # (N, H, W) uint8
    labels: np.ndarray  # (N,) int64
    class_count: int

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise DataFormatError(
                f"{self.images.shape[0]} images but {self.labels.shape[0]} labels"
            )

    @property
    def count(self) -> int:
        return self.images.shape[0]


def _open_maybe_gzip(path: Path):
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_idx(path, expected_magic: int) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"no such file: {path}")
    with _open_maybe_gzip(path) as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise DataFormatError(f"{path}: truncated before magic number (offset 0)")
    magic = struct.unpack(">i", raw[:4])[0]
    if magic != expected_magic:
        raise DataFormatError(
            f"{path}: bad magic {magic} at offset 0, expected {expected_magic}"
        )
    ndim = magic % 256
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise DataFormatError(f"{path}: truncated in dimension header (offset {len(raw)})")
    dims = struct.unpack(f">{ndim}i", raw[4:header_end])
    expected = int(np.prod(dims))
    payload = raw[header_end:]
    if len(payload) != expected:
        raise DataFormatError(
            f"{path}: payload has {len(payload)} bytes at offset {header_end}, "
            f"expected {expected} for dims {dims}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims).copy()


def load_idx(images_path, labels_path) -> RawImageSet:
    """Decode an images/labels IDX pair (gzip handled transparently)."""
    images = _read_idx(images_path, _IMAGE_MAGIC)
    labels = _read_idx(labels_path, _LABEL_MAGIC).astype(np.int64)
    if images.ndim != 3:
        raise DataFormatError(f"{images_path}: expected 3 dimensions, got {images.ndim}")
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"count mismatch: {images.shape[0]} images vs {labels.shape[0]} labels"
        )
    return RawImageSet(images=images, labels=labels,
                       class_count=int(labels.max()) + 1 if labels.size else 0)


def fft2(image: np.ndarray) -> np.ndarray:
    """Unnormalized forward 2-D DFT; the DC term equals the pixel sum."""
    return np.fft.fft2(np.asarray(image, dtype=np.float64))


def naive_dft2(image: np.ndarray) -> np.ndarray:
    """Quadratic-time DFT used as the independent oracle for :func:`fft2`."""
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape
    out = np.zeros((h, w), dtype=np.complex128)
    for u in range(h):
        for v in range(w):
            s = 0.0 + 0.0j
            for m in range(h):
                for n in range(w):
                    s += img[m, n] * np.exp(-2j * np.pi * (u * m / h + v * n / w))
            out[u, v] = s
    return out


def rank_and_select(train_images: np.ndarray, k: int) -> np.ndarray:
    """Top-k flat coefficient indices by training-set mean |DFT coefficient|.

    Ordering is strictly decreasing in the mean magnitude with ties broken
    by ascending flat index, so the selection is fully deterministic.
    """
    imgs = np.asarray(train_images)
    n, h, w = imgs.shape
    if not 1 <= k <= h * w:
        raise ParameterError(f"k must lie in [1, {h * w}], got {k}")
    total = np.zeros(h * w, dtype=np.float64)
    for lo in range(0, n, _CHUNK):
        coeffs = np.fft.fft2(imgs[lo:lo + _CHUNK].astype(np.float64))
        total += np.abs(coeffs).reshape(-1, h * w).sum(axis=0)
    means = total / n
    order = np.lexsort((np.arange(h * w), -means))
    return order[:k].astype(np.int64)


@dataclass
class ComplexDataset:
    """Complex features with split bookkeeping and scaling constants.

    ``features`` holds only the rows that belong to some split; the three
    index arrays address rows of ``features``. ``source_indices`` maps each
    row back to its image in the original set.
    """

    features: np.ndarray  # (N_used, K) complex128, standardized
    labels: np.ndarray  # (N_used,) int64
    class_count: int
    selected_indices: np.ndarray  # (K,) int64 flat DFT indices
    idx_train: np.ndarray
    idx_val: np.ndarray
    idx_test: np.ndarray
    feature_mean: np.ndarray  # (K,) complex128, fit on train
    feature_std: np.ndarray  # (K,) float64, fit on train
    image_dims: tuple[int, int]
    source_indices: np.ndarray
    seed: int

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def _xy(self, rows: np.ndarray):
        return self.features[rows], self.labels[rows]

    def train_xy(self):
        return self._xy(self.idx_train)

    def val_xy(self):
        return self._xy(self.idx_val)

    def test_xy(self):
        return self._xy(self.idx_test)


def _split_sizes(n: int, split, split_counts) -> tuple[int, int, int]:
    if split_counts is not None:
        counts = tuple(int(c) for c in split_counts)
        if len(counts) != 3 or any(c < 1 for c in counts):
            raise ParameterError(f"need three positive split counts, got {split_counts}")
        if sum(counts) > n:
            raise ParameterError(f"split counts {counts} exceed dataset size {n}")
        return counts
    fracs = tuple(float(f) for f in split)
    if len(fracs) != 3 or any(f <= 0 for f in fracs) or sum(fracs) > 1 + 1e-12:
        raise ParameterError(f"split fractions must be positive and sum to <= 1, got {split}")
    counts = tuple(int(n * f) for f in fracs)
    if any(c < 1 for c in counts):
        raise ParameterError(f"split fractions {split} give an empty split for n={n}")
    return counts


def build_complex_dataset(
    raw: RawImageSet,
    k: int = 100,
    split=(0.8, 0.1, 0.1),
    seed: int = 0,
    split_counts=None,
) -> ComplexDataset:
    """FFT, rank on the training split, select top-k, standardize, split.

    The coefficient ranking and the standardization constants see training
    images only; validation and test reuse them unchanged.
    """
    n = raw.count
    n_train, n_val, n_test = _split_sizes(n, split, split_counts)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    src = perm[: n_train + n_val + n_test]
    train_src = src[:n_train]

    selected = rank_and_select(raw.images[train_src], k)

    h, w = raw.images.shape[1], raw.images.shape[2]
    features = np.empty((src.shape[0], k), dtype=np.complex128)
    for lo in range(0, src.shape[0], _CHUNK):
        chunk = raw.images[src[lo:lo + _CHUNK]].astype(np.float64)
        coeffs = np.fft.fft2(chunk).reshape(chunk.shape[0], h * w)
        features[lo:lo + chunk.shape[0]] = coeffs[:, selected]

    train_rows = np.arange(n_train)
    mean = features[train_rows].mean(axis=0)
    centered = features[train_rows] - mean
    std = np.sqrt((centered.real**2 + centered.imag**2).mean(axis=0))
    std = np.where(std < 1e-12, 1.0, std)
    features -= mean
    features /= std

    return ComplexDataset(
        features=features,
        labels=raw.labels[src].astype(np.int64),
        class_count=raw.class_count,
        selected_indices=selected,
        idx_train=train_rows.astype(np.int64),
        idx_val=np.arange(n_train, n_train + n_val, dtype=np.int64),
        idx_test=np.arange(n_train + n_val, n_train + n_val + n_test, dtype=np.int64),
        feature_mean=mean,
        feature_std=std,
        image_dims=(h, w),
        source_indices=src.astype(np.int64),
        seed=seed,
    )


def cache_dataset(ds: ComplexDataset, path) -> None:
    meta = {
        "k": ds.feature_dim,
        "image_dims": list(ds.image_dims),
        "class_count": ds.class_count,
        "seed": ds.seed,
    }
    arrays = {
        "features": ds.features,
        "labels": ds.labels,
        "selected_indices": ds.selected_indices,
        "idx_train": ds.idx_train,
        "idx_val": ds.idx_val,
        "idx_test": ds.idx_test,
        "feature_mean": ds.feature_mean,
        "feature_std": ds.feature_std,
        "source_indices": ds.source_indices,
    }
    container.write_container(path, _CACHE_MAGIC, _CACHE_VERSION, meta, arrays)


def load_cached(path) -> ComplexDataset:
    meta, arrays = container.read_container(path, _CACHE_MAGIC, _CACHE_VERSION)
    try:
        return ComplexDataset(
            features=arrays["features"],
            labels=arrays["labels"],
            class_count=int(meta["class_count"]),
            selected_indices=arrays["selected_indices"],
            idx_train=arrays["idx_train"],
            idx_val=arrays["idx_val"],
            idx_test=arrays["idx_test"],
            feature_mean=arrays["feature_mean"],
            feature_std=arrays["feature_std"],
            image_dims=tuple(meta["image_dims"]),
            source_indices=arrays["source_indices"],
            seed=int(meta["seed"]),
        )
    except KeyError as exc:
        raise CacheError(f"{path} is missing field {exc}; rebuild the cache") from exc


# Conventional file names per dataset, resolved under <data_dir>/<dataset>/.
# Gzipped variants (same name + .gz) are found automatically. The latin_ocr
# corpus is not redistributable; the loader accepts any IDX pair placed
# under its directory.
DATASET_FILES: dict[str, tuple[str, str]] = {
    "mnist": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "fashion_mnist": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "emnist_digits": (
        "emnist-digits-train-images-idx3-ubyte",
        "emnist-digits-train-labels-idx1-ubyte",
    ),
    "latin_ocr": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
}


def _find_file(directory: Path, stem: str) -> Path | None:
    for candidate in (directory / stem, directory / (stem + ".gz")):
        if candidate.exists():
            return candidate
    return None


def load_named_dataset(name: str, data_dir) -> RawImageSet:
    """Load a benchmark dataset by name from a data directory.

    ``digits`` is the built-in desk-scale set (bundled with scikit-learn,
    1797 8x8 grayscale digits) and needs no files on disk.
    """
    if name == "digits":
        return _load_sklearn_digits()
    if name not in DATASET_FILES:
        raise ParameterError(
            f"unknown dataset {name!r}; choose from {('digits', *DATASET_FILES)}"
        )
    base = Path(data_dir) / name
    img_stem, lbl_stem = DATASET_FILES[name]
    img = _find_file(base, img_stem)
    lbl = _find_file(base, lbl_stem)
    if img is None or lbl is None:
        raise DataFormatError(
            f"dataset {name!r} not found: expected {base / img_stem}[.gz] and "
            f"{base / lbl_stem}[.gz]"
        )
    return load_idx(img, lbl)


def _load_sklearn_digits() -> RawImageSet:
    try:
        from sklearn.datasets import load_digits
    except ImportError as exc:
        raise DataFormatError(
            "the 'digits' dataset needs scikit-learn (pip install scikit-learn)"
        ) from exc
    bunch = load_digits()
    images = np.round(bunch.images * (255.0 / 16.0)).astype(np.uint8)
    return RawImageSet(images=images, labels=bunch.target.astype(np.int64), class_count=10)
