"""Dataset ingestion: IDX files, synthetic generators, and batching.

IDX layout (big-endian throughout): magic 0x00000803 for image files (three
u32 dims: count, rows, cols) and 0x00000801 for label files (one u32 dim),
then raw unsigned bytes.  Pixels are normalized to [-1, 1] via x / 127.5 - 1.
Paths ending in .gz are decompressed/compressed transparently.
"""

import gzip
import struct
from dataclasses import dataclass

import numpy as np

from .validation import as_real_matrix, check_positive_int

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
SYNTHETIC_KINDS = ("isotropic_gaussian", "low_rank", "separable_classification")


class IdxFormatError(ValueError):
    """Malformed IDX payload."""


class IdxMagicError(IdxFormatError):
    """Wrong magic number for the requested file kind."""


class IdxTruncatedError(IdxFormatError):
    """File ends before the declared payload."""


class IdxCountMismatchError(IdxFormatError):
    """Image and label files disagree on the sample count."""


@dataclass(frozen=True)
class Dataset:
    """Immutable sample matrix plus labels.

    images is (N, dim) float64; pixel datasets are normalized to [-1, 1],
    synthetic kinds keep their natural scale.  labels is (N,) int64 in
    [0, num_classes).
    """

    images: np.ndarray
    labels: np.ndarray
    split: str = ""

    def __post_init__(self):
        images = as_real_matrix(self.images, "images")
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1:
            raise ValueError(f"labels must be 1-dimensional, got shape {labels.shape}")
        if images.shape[0] != labels.shape[0]:
            raise ValueError(
                f"images have {images.shape[0]} rows but labels have {labels.shape[0]}"
            )
        if labels.size and labels.min() < 0:
            raise ValueError("labels must be nonnegative")
        images = images.copy()
        labels = labels.copy()
        images.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    @property
    def num_samples(self):
        return self.images.shape[0]

    @property
    def dim(self):
        return self.images.shape[1]

    @property
    def num_classes(self):
        return int(self.labels.max()) + 1 if self.labels.size else 0


def _open(path, mode):
    if str(path).endswith(".gz"):
        return gzip.open(path, mode)
    return open(path, mode)


def _read_exact(f, count, path):
    data = f.read(count)
    if len(data) != count:
        raise IdxTruncatedError(f"{path}: expected {count} more bytes, got {len(data)}")
    return data


def _read_idx_bytes(path, expected_magic, what):
    with _open(path, "rb") as f:
        magic = struct.unpack(">I", _read_exact(f, 4, path))[0]
        if magic != expected_magic:
            raise IdxMagicError(
                f"{path}: magic 0x{magic:08x} does not match 0x{expected_magic:08x} for {what}"
            )
        ndims = magic & 0xFF
        dims = struct.unpack(f">{ndims}I", _read_exact(f, 4 * ndims, path))
        count = int(np.prod(dims, dtype=np.int64))
        payload = _read_exact(f, count, path)
        if f.read(1):
            raise IdxFormatError(f"{path}: trailing bytes after declared payload")
    return dims, np.frombuffer(payload, dtype=np.uint8)


def load_idx(images_path, labels_path, split=""):
    """Load an IDX image/label file pair into a normalized Dataset."""
    image_dims, image_bytes = _read_idx_bytes(images_path, IMAGES_MAGIC, "images")
    label_dims, label_bytes = _read_idx_bytes(labels_path, LABELS_MAGIC, "labels")
    n = image_dims[0]
    if label_dims[0] != n:
        raise IdxCountMismatchError(
            f"{images_path} holds {n} images but {labels_path} holds {label_dims[0]} labels"
        )
    dim = int(np.prod(image_dims[1:], dtype=np.int64))
    images = image_bytes.astype(np.float64).reshape(n, dim) / 127.5 - 1.0
    return Dataset(images=images, labels=label_bytes.astype(np.int64), split=split)


def write_idx(dataset, images_path, labels_path):
    """Write a Dataset whose images lie in [-1, 1] back to an IDX pair.

    The affine map is inverted with rounding so a load/write/load cycle
    reproduces the normalized tensor bit for bit.
    """
    if np.abs(dataset.images).max() > 1.0:
        raise ValueError("images must lie in [-1, 1] to serialize as bytes")
    raw = np.rint((dataset.images + 1.0) * 127.5).astype(np.uint8)
    n, dim = raw.shape
    side = int(np.sqrt(dim))
    rows, cols = (side, side) if side * side == dim else (1, dim)
    with _open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGES_MAGIC, n, rows, cols))
        f.write(raw.tobytes())
    labels = dataset.labels
    if labels.size and labels.max() > 255:
        raise ValueError("labels above 255 cannot be serialized as bytes")
    with _open(labels_path, "wb") as f:
        f.write(struct.pack(">II", LABELS_MAGIC, n))
        f.write(labels.astype(np.uint8).tobytes())


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a deterministic synthetic dataset.

    kind is one of isotropic_gaussian, low_rank, separable_classification.
    rank applies to low_rank only; axis_aligned pins the low-rank subspace to
    the first rank coordinate axes instead of a random subspace.
    """

    kind: str
    dim: int
    num_samples: int
    seed: int = 0
    rank: int = 0
    axis_aligned: bool = False

    def __post_init__(self):
        if self.kind not in SYNTHETIC_KINDS:
            raise ValueError(f"kind must be one of {SYNTHETIC_KINDS}, got {self.kind!r}")
        check_positive_int(self.dim, "dim")
        check_positive_int(self.num_samples, "num_samples")
        if self.kind == "low_rank":
            check_positive_int(self.rank, "rank")
            if self.rank > self.dim:
                raise ValueError(f"rank {self.rank} exceeds dim {self.dim}")


def generate_synthetic(spec):
    """Draw the dataset described by spec, deterministic given spec.seed."""
    rng = np.random.Generator(np.random.Philox(key=spec.seed))
    n, d = spec.num_samples, spec.dim
    if spec.kind == "isotropic_gaussian":
        images = rng.standard_normal((n, d))
        labels = np.zeros(n, dtype=np.int64)
    elif spec.kind == "low_rank":
        if spec.axis_aligned:
            basis = np.eye(d)[:, : spec.rank]
        else:
            gauss = rng.standard_normal((d, spec.rank))
            basis = np.linalg.qr(gauss)[0]
        factors = rng.standard_normal((n, spec.rank))
        # noise at 1% relative scale keeps the top-rank variance share > 0.99
        images = factors @ basis.T + 0.01 * rng.standard_normal((n, d))
        labels = np.zeros(n, dtype=np.int64)
    else:
        direction = rng.standard_normal(d)
        direction /= np.linalg.norm(direction)
        labels = (np.arange(n) % 2).astype(np.int64)
        centers = np.where(labels[:, None] == 1, 3.0, -3.0) * direction[None, :]
        images = centers + rng.standard_normal((n, d))
        order = rng.permutation(n)
        images, labels = images[order], labels[order]
    return Dataset(images=images, labels=labels, split=f"synthetic:{spec.kind}")


def batches(dataset, batch_size, seed=0):
    """Yield (images, labels) minibatches in a seeded shuffled order.

    The final partial batch is included.
    """
    batch_size = check_positive_int(batch_size, "batch_size")
    rng = np.random.Generator(np.random.Philox(key=seed))
    order = rng.permutation(dataset.num_samples)
    for start in range(0, dataset.num_samples, batch_size):
        idx = order[start:start + batch_size]
        yield dataset.images[idx], dataset.labels[idx]
