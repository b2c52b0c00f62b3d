"""Datasets, partitions, binary file formats and population initialisation."""

from __future__ import annotations

import io
import itertools
import json
import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from . import snn
from .errors import ConfigError, CorruptFileError, SizingError, SpecMismatchError
from .evolution import spawn_seeds
from .toydata import ToyConfig, generate


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # (N, C, H, W) float32 in [0, 1]
    labels: np.ndarray  # (N,) int64 in [0, num_classes)
    num_classes: int
    split: str = "train"

    def __post_init__(self):
        images = np.ascontiguousarray(self.images, dtype=np.float32)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if images.ndim != 4 or len(images) != len(labels):
            raise SizingError(f"images {images.shape} and labels {labels.shape} do not match")
        if len(labels) and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise SizingError("labels outside [0, num_classes)")
        images.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.labels)

    def subset(self, index, split=None):
        index = np.asarray(index, dtype=np.int64)
        return Dataset(self.images[index], self.labels[index], self.num_classes, split or self.split)

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.num_classes)


@dataclass(frozen=True)
class Splits:
    train: Dataset
    eval: Dataset
    test: Dataset


def make_toy_dataset(config: ToyConfig, n, rng, split="train") -> Dataset:
    images, labels = generate(config, n, rng)
    return Dataset(images, labels, config.num_classes, split)


def make_splits(config: ToyConfig, n_train, n_eval, n_test, seed) -> Splits:
    """Train/eval/test sets rendered from independent streams derived from ``seed``."""
    s_train, s_eval, s_test = spawn_seeds(seed, 3)
    return Splits(
        make_toy_dataset(config, n_train, np.random.default_rng(s_train), "train"),
        make_toy_dataset(config, n_eval, np.random.default_rng(s_eval), "eval"),
        make_toy_dataset(config, n_test, np.random.default_rng(s_test), "test"),
    )


def partition(dataset: Dataset, parts, rng) -> list:
    """Split into ``parts`` disjoint, label-stratified subsets that cover the dataset.

    Each class is shuffled and dealt round-robin; the dealing position carries
    over between classes so part sizes differ by at most one.
    """
    if parts < 1:
        raise ConfigError("parts must be >= 1", "parts")
    if parts > len(dataset):
        raise SizingError(f"cannot split {len(dataset)} samples into {parts} parts")
    buckets = [[] for _ in range(parts)]
    offset = 0
    for k in range(dataset.num_classes):
        idx = rng.permutation(np.flatnonzero(dataset.labels == k))
        for j, i in enumerate(idx):
            buckets[(offset + j) % parts].append(int(i))
        offset += len(idx)
    return [dataset.subset(np.sort(np.array(b, dtype=np.int64))) for b in buckets]


# --------------------------------------------------------------------------
# binary formats

GENOME_MAGIC = b"CADEGNM\x00"
POPULATION_MAGIC = b"CADEPOP\x00"
DATASET_MAGIC = b"CADEDS\x00\x00"
FORMAT_VERSION = 1
_GENOME_HEADER = struct.Struct("<8sHH32sQ")  # magic, version, reserved, spec digest, dim
_POP_HEADER = struct.Struct("<8sHH32sIQ")  # magic, version, reserved, spec digest, count, dim
_DS_HEADER = struct.Struct("<8sHIHHHHI")  # magic, version, N, C, H, W, K, metadata length


def _float32_exact(genome):
    g = np.asarray(genome)
    g32 = g.astype("<f4")
    if not np.all(np.isfinite(g32)):
        raise SizingError("genome contains non-finite values")
    if np.issubdtype(g.dtype, np.floating) and g.dtype != np.float32:
        if not np.array_equal(g32.astype(g.dtype), g):
            raise SizingError("genome is not exactly representable as float32")
    return g32


def _check_header(magic, version, want_magic, path):
    if magic != want_magic:
        raise CorruptFileError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise CorruptFileError(f"{path}: unsupported format version {version}")


def _check_digest(digest, expected, path):
    if expected is not None and digest != expected:
        raise SpecMismatchError(f"{path}: genome was written for a different network spec")


def save_checkpoint(path, genome, spec_digest: bytes):
    g = _float32_exact(genome)
    if g.ndim != 1:
        raise SizingError("a checkpoint holds one flat genome")
    header = _GENOME_HEADER.pack(GENOME_MAGIC, FORMAT_VERSION, 0, spec_digest, g.size)
    Path(path).write_bytes(header + g.tobytes())


def load_checkpoint(path, spec_digest: bytes | None = None) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _GENOME_HEADER.size:
        raise CorruptFileError(f"{path}: truncated header")
    magic, version, _, digest, dim = _GENOME_HEADER.unpack_from(raw)
    _check_header(magic, version, GENOME_MAGIC, path)
    body = raw[_GENOME_HEADER.size:]
    if len(body) != 4 * dim:
        raise CorruptFileError(f"{path}: expected {4 * dim} payload bytes, found {len(body)}")
    _check_digest(digest, spec_digest, path)
    return np.frombuffer(body, dtype="<f4").astype(np.float32)


def save_population(path, genomes, spec_digest: bytes):
    g = _float32_exact(genomes)
    if g.ndim != 2:
        raise SizingError("a population file holds a (count, dim) array")
    header = _POP_HEADER.pack(POPULATION_MAGIC, FORMAT_VERSION, 0, spec_digest, g.shape[0], g.shape[1])
    Path(path).write_bytes(header + g.tobytes())


def load_population(path, spec_digest: bytes | None = None) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _POP_HEADER.size:
        raise CorruptFileError(f"{path}: truncated header")
    magic, version, _, digest, count, dim = _POP_HEADER.unpack_from(raw)
    _check_header(magic, version, POPULATION_MAGIC, path)
    body = raw[_POP_HEADER.size:]
    if len(body) != 4 * count * dim:
        raise CorruptFileError(f"{path}: expected {4 * count * dim} payload bytes, found {len(body)}")
    _check_digest(digest, spec_digest, path)
    return np.frombuffer(body, dtype="<f4").astype(np.float32).reshape(count, dim)


def save_dataset(path, dataset: Dataset, metadata: dict | None = None):
    """Raw-binary dataset: header, 8-bit pixels, 8-bit labels. Pixels are quantised to 1/255."""
    n, c, h, w = dataset.images.shape
    meta = json.dumps(metadata or {}, sort_keys=True).encode()
    header = _DS_HEADER.pack(DATASET_MAGIC, FORMAT_VERSION, n, c, h, w, dataset.num_classes, len(meta))
    pixels = np.round(np.clip(dataset.images, 0, 1) * 255).astype(np.uint8)
    Path(path).write_bytes(header + meta + pixels.tobytes() + dataset.labels.astype(np.uint8).tobytes())


def load_dataset(path, split="train"):
    """Returns ``(dataset, metadata)``."""
    raw = Path(path).read_bytes()
    if len(raw) < _DS_HEADER.size:
        raise CorruptFileError(f"{path}: truncated header")
    magic, version, n, c, h, w, k, meta_len = _DS_HEADER.unpack_from(raw)
    _check_header(magic, version, DATASET_MAGIC, path)
    pos = _DS_HEADER.size
    npx = n * c * h * w
    if len(raw) != pos + meta_len + npx + n:
        raise CorruptFileError(f"{path}: payload size does not match header")
    try:
        meta = json.loads(raw[pos:pos + meta_len] or b"{}")
    except ValueError as exc:
        raise CorruptFileError(f"{path}: unreadable metadata") from exc
    pos += meta_len
    pixels = np.frombuffer(raw, dtype=np.uint8, count=npx, offset=pos).reshape(n, c, h, w)
    labels = np.frombuffer(raw, dtype=np.uint8, count=n, offset=pos + npx)
    return Dataset(pixels.astype(np.float32) / 255.0, labels.astype(np.int64), k, split), meta


# --------------------------------------------------------------------------
# population initialisation

class InitKind(str, Enum):
    TIME_RATIO = "time_ratio"
    PARTITION = "partition"
    TRANSFER = "transfer"
    LAST_EPOCHS = "last_epochs"


DEFAULT_RATIOS = (0.2, 0.4, 0.6, 0.8, 1.0)


def transfer_grid(base_lr):
    """Fine-tuning variants cycled over a TRANSFER population (learning rate varies fastest)."""
    return [
        dict(lr=base_lr * m, label_smoothing=eps, mixup_alpha=mix)
        for mix, eps, m in itertools.product((0.0, 0.2), (0.0, 0.1), (0.5, 1.0, 2.0))
    ]


@dataclass(frozen=True)
class InitStrategy:
    kind: InitKind
    ratios: tuple = DEFAULT_RATIOS
    parts: int | None = None  # PARTITION; defaults to the population size

    def __post_init__(self):
        object.__setattr__(self, "kind", InitKind(self.kind))


@dataclass
class Pretrainer:
    """Everything ``init_population`` needs to produce fine-tuned genomes.

    ``source`` is only used by TRANSFER. Non-transfer strategies fine-tune
    from a shared random initialisation.
    """

    spec: snn.NetworkSpec
    target: Dataset
    finetune: snn.TrainConfig
    source: Dataset | None = None
    pretrain: snn.TrainConfig | None = None
    source_genome: np.ndarray | None = None  # reuse an existing source-pretrained model
    log: list = field(default_factory=list)

    @property
    def source_spec(self):
        k = self.source.num_classes if self.source is not None else self.spec.num_classes
        return replace(self.spec, num_classes=k)

    def pretrain_source(self, seed):
        if self.source_genome is not None:
            return self.source_genome
        if self.source is None or self.pretrain is None:
            raise ConfigError("TRANSFER needs a source dataset and pretraining config", "init.strategy")
        rng = np.random.default_rng(seed)
        res = snn.surrogate_backward_train(
            self.source_spec, self.source.images, self.source.labels, self.pretrain, rng
        )
        self.source_genome = res.params
        return res.params

    def transfer_body(self, source_genome, seed):
        """Copy every non-head weight; re-initialise the head when class counts differ."""
        if self.source_spec == self.spec:
            return np.array(source_genome, dtype=np.float32)
        src = snn.unflatten(self.source_spec, np.asarray(source_genome))
        fresh = snn.unflatten(self.spec, snn.init_params(self.spec, np.random.default_rng(seed)))
        merged = {k: (fresh[k] if k.startswith("head.") else src[k]) for k in fresh}
        return snn.flatten(self.spec, merged)

    def train(self, init, dataset, config, seed):
        rng = np.random.default_rng(seed)
        self.log.append((len(dataset), config))
        return snn.surrogate_backward_train(self.spec, dataset.images, dataset.labels, config, rng, init=init)


def init_population(strategy: InitStrategy, population_size, hooks: Pretrainer, rng) -> np.ndarray:
    """Genomes ``(population_size, dim)`` produced by the chosen initialisation strategy."""
    if population_size < 1:
        raise ConfigError("must be >= 1", "population_size")
    spec = hooks.spec
    base_seed = int(rng.integers(2**63))
    seeds = spawn_seeds(base_seed, population_size + 2)
    start = snn.init_params(spec, np.random.default_rng(seeds[-1]))
    ft = hooks.finetune
    members = []
    try:
        if strategy.kind is InitKind.TIME_RATIO:
            ratios = tuple(strategy.ratios)
            if len(ratios) < population_size:
                ratios = tuple(np.linspace(1.0 / population_size, 1.0, population_size))
            for i in range(population_size):
                epochs = max(1, int(round(ratios[i] * ft.epochs)))
                cfg = replace(ft, epochs=epochs, keep_last=1)
                members.append(hooks.train(start, hooks.target, cfg, seeds[i]).params)
        elif strategy.kind is InitKind.PARTITION:
            parts = strategy.parts or population_size
            chunks = partition(hooks.target, parts, np.random.default_rng(seeds[-2]))
            for i in range(population_size):
                cfg = replace(ft, keep_last=1)
                members.append(hooks.train(start, chunks[i % parts], cfg, seeds[i]).params)
        elif strategy.kind is InitKind.TRANSFER:
            source = hooks.pretrain_source(seeds[-2])
            body = hooks.transfer_body(source, seeds[-1])
            grid = transfer_grid(ft.lr)
            for i in range(population_size):
                cfg = replace(ft, keep_last=1, **grid[i % len(grid)])
                members.append(hooks.train(body, hooks.target, cfg, seeds[i]).params)
        elif strategy.kind is InitKind.LAST_EPOCHS:
            cfg = replace(ft, epochs=max(ft.epochs, population_size), keep_last=population_size)
            members = list(hooks.train(start, hooks.target, cfg, seeds[0]).checkpoints)
    except (ConfigError, SizingError):
        raise
    except Exception as exc:
        raise RuntimeError(f"{strategy.kind.value} initialisation failed: {exc}") from exc
    out = np.stack(members).astype(np.float32)
    if out.shape != (population_size, spec.dim):
        raise SizingError(f"initialisation produced {out.shape}, expected ({population_size}, {spec.dim})")
    return out


def genome_bytes(genome) -> bytes:
    """The exact payload bytes a checkpoint would hold (handy for equality checks)."""
    buf = io.BytesIO()
    buf.write(_float32_exact(genome).tobytes())
    return buf.getvalue()
