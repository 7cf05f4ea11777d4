"""Dataset representation, ingestion and sharding.

Two ingestion paths ship: the IDX binary format (big-endian magic, dimension
sizes, then unsigned bytes) and a seeded synthetic linear-regression
generator. Sharding assigns contiguous index blocks either one-per-worker
(disjoint, redundancy 1) or one-per-group (each group's shard replicated on
all of its workers, redundancy equal to the group size).

All objects here are immutable after construction and safe to share
read-only across threads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ConsistencyError, DataFormatError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

PER_WORKER_DISJOINT = "per-worker-disjoint"
PER_GROUP_REPLICATED = "per-group-replicated"


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (n x d) with one real label per row."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] < 1:
            raise ConsistencyError("features must be a non-empty 2-D matrix")
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise ConsistencyError(
                f"label count {labels.shape[0]} != sample count {features.shape[0]}"
            )
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def with_bias_column(self) -> "Dataset":
        """Copy with a constant-1 column appended (intercept term)."""
        ones = np.ones((self.n, 1))
        return Dataset(np.hstack([self.features, ones]), self.labels)


@dataclass(frozen=True)
class Shard:
    """A block of sample indices and the workers that store it."""

    owners: frozenset[int]
    indices: np.ndarray

    def __post_init__(self):
        indices = np.asarray(self.indices, dtype=np.int64)
        if indices.size == 0:
            raise ConsistencyError("shard must hold at least one sample")
        object.__setattr__(self, "owners", frozenset(self.owners))
        object.__setattr__(self, "indices", indices)

    @property
    def size(self) -> int:
        return int(self.indices.size)


@dataclass(frozen=True)
class ShardingPlan:
    shards: tuple[Shard, ...]
    redundancy: int
    mode: str
    owner_of: dict[int, int] = field(repr=False, default_factory=dict)

    def shard_of_worker(self, worker: int) -> Shard:
        return self.shards[self.owner_of[worker]]


def _read_header(raw: bytes, path, expected_magic: int, n_dims: int) -> tuple[int, ...]:
    header_len = 4 * (1 + n_dims)
    if len(raw) < header_len:
        raise DataFormatError(f"{path}: truncated IDX header")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic != expected_magic:
        raise DataFormatError(
            f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}"
        )
    return struct.unpack(f">{n_dims}I", raw[4:header_len])


def load_idx(image_path, label_path, limit: int | None = None) -> Dataset:
    """Load an IDX image/label file pair.

    Pixels are flattened row-major to d = rows*cols features and scaled to
    [0, 1] by dividing by 255; labels become their digit value as a real.
    ``limit`` keeps only the first ``limit`` samples.
    """
    with open(image_path, "rb") as fh:
        raw_images = fh.read()
    with open(label_path, "rb") as fh:
        raw_labels = fh.read()

    n_images, rows, cols = _read_header(raw_images, image_path, IDX_IMAGE_MAGIC, 3)
    (n_labels,) = _read_header(raw_labels, label_path, IDX_LABEL_MAGIC, 1)
    if n_images != n_labels:
        raise ConsistencyError(
            f"image count {n_images} != label count {n_labels}"
        )

    n = n_images if limit is None else min(n_images, limit)
    if n < 1:
        raise ConsistencyError("empty dataset after applying limit")
    pixel_bytes = n * rows * cols
    body = raw_images[16:16 + pixel_bytes]
    if len(body) < pixel_bytes:
        raise DataFormatError(f"{image_path}: pixel data shorter than header claims")
    if len(raw_labels) - 8 < n:
        raise DataFormatError(f"{label_path}: label data shorter than header claims")

    features = np.frombuffer(body, dtype=np.uint8).astype(np.float64) / 255.0
    features = features.reshape(n, rows * cols)
    labels = np.frombuffer(raw_labels[8:8 + n], dtype=np.uint8).astype(np.float64)
    return Dataset(features, labels)


def write_idx(pixels: np.ndarray, labels: np.ndarray, image_path, label_path) -> None:
    """Write uint8 images (n x rows x cols) and labels to an IDX file pair."""
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    if pixels.ndim != 3:
        raise ConsistencyError("pixels must have shape (n, rows, cols)")
    if labels.shape != (pixels.shape[0],):
        raise ConsistencyError("one label per image required")
    n, rows, cols = pixels.shape
    with open(image_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols))
        fh.write(pixels.tobytes())
    with open(label_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABEL_MAGIC, n))
        fh.write(labels.tobytes())


def synth_ground_truth(d: int, seed: int) -> np.ndarray:
    """The coefficient vector synth_regression(seed) builds its labels from."""
    return np.random.default_rng(seed).standard_normal(d)


def synth_regression(n: int, d: int, noise_sd: float, seed: int) -> Dataset:
    """Seeded linear-regression data: x ~ N(0, I), y = x.theta + noise.

    The same seed reproduces the dataset bit for bit; the underlying
    coefficients are recoverable via synth_ground_truth(d, seed).
    """
    if n < 1 or d < 1:
        raise ConfigurationError("need n >= 1 and d >= 1")
    if noise_sd < 0:
        raise ConfigurationError("noise sd must be non-negative")
    rng = np.random.default_rng(seed)
    theta = rng.standard_normal(d)
    features = rng.standard_normal((n, d))
    labels = features @ theta
    if noise_sd > 0:
        labels = labels + noise_sd * rng.standard_normal(n)
    return Dataset(features, labels)


def shard(dataset: Dataset, workers: int, groups: int = 1,
          mode: str = PER_WORKER_DISJOINT) -> ShardingPlan:
    """Split the dataset into contiguous index blocks.

    per-worker-disjoint: one block per worker, redundancy 1 (needs M | N).
    per-group-replicated: one block per group, owned by every worker of
    that group, redundancy M/G (needs G | M and G | N). Workers are grouped
    contiguously: group g holds workers [g*M_G, (g+1)*M_G).
    """
    n, m = dataset.n, workers
    if m < 1:
        raise ConfigurationError("need at least one worker")
    if mode == PER_WORKER_DISJOINT:
        if n % m != 0:
            raise ConfigurationError(f"sample count {n} not divisible by workers {m}")
        block = n // m
        shards = tuple(
            Shard(owners={w}, indices=np.arange(w * block, (w + 1) * block))
            for w in range(m)
        )
        owner_of = {w: w for w in range(m)}
        return ShardingPlan(shards, redundancy=1, mode=mode, owner_of=owner_of)
    if mode == PER_GROUP_REPLICATED:
        g = groups
        if g < 1 or m % g != 0:
            raise ConfigurationError(f"workers {m} not divisible by groups {g}")
        if n % g != 0:
            raise ConfigurationError(f"sample count {n} not divisible by groups {g}")
        group_size = m // g
        block = n // g
        shards = []
        owner_of = {}
        for gid in range(g):
            members = range(gid * group_size, (gid + 1) * group_size)
            shards.append(Shard(owners=set(members),
                                indices=np.arange(gid * block, (gid + 1) * block)))
            for w in members:
                owner_of[w] = gid
        return ShardingPlan(tuple(shards), redundancy=group_size, mode=mode,
                            owner_of=owner_of)
    raise ConfigurationError(f"unknown sharding mode {mode!r}")
