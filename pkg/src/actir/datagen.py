"""Seedable generators for the shift domains.

Three families are provided: the anti-causal synthetic process, the
non-anti-causal counterexample, and Color MNIST built from raw IDX files.

Randomness comes from numpy's Philox counter-based generator. Each domain gets
its own stream keyed by SHA-256 of ``"{seed}:{domain_id}"``, so a domain's
samples do not depend on which other domains were generated or in what order.
"""

from __future__ import annotations

import gzip
import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}
_MAX_IDX_ITEMS = 1 << 31


class IdxFormatError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledExample:
    x: np.ndarray
    y: int
    z: Optional[int] = None


@dataclass
class DomainDataset:
    """All examples of one domain, stored column-wise.

    ``x`` has shape (n, d), ``y`` holds class indices and ``z`` (when the
    generator exposes it) the unstable factor of each example.
    """

    domain_id: str
    beta: float
    x: np.ndarray
    y: np.ndarray
    z: Optional[np.ndarray] = None
    n_classes: int = 2

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim != 2 or self.x.shape[0] != self.y.shape[0]:
            raise ValueError(f"x {self.x.shape} and y {self.y.shape} are not aligned")
        if self.z is not None:
            self.z = np.asarray(self.z, dtype=np.int64)
            if self.z.shape != self.y.shape:
                raise ValueError("z must have one entry per example")

    def __len__(self) -> int:
        return self.y.shape[0]

    def __getitem__(self, i: int) -> LabeledExample:
        z = None if self.z is None else int(self.z[i])
        return LabeledExample(self.x[i], int(self.y[i]), z)

    def __iter__(self) -> Iterator[LabeledExample]:
        return (self[i] for i in range(len(self)))

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    def subset(self, idx) -> "DomainDataset":
        idx = np.asarray(idx, dtype=np.int64)
        z = None if self.z is None else self.z[idx]
        return DomainDataset(self.domain_id, self.beta, self.x[idx], self.y[idx], z, self.n_classes)


@dataclass
class GeneratorSpec:
    kind: str
    betas: dict[str, float]
    n: dict[str, int] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("synthetic", "counterexample", "color_mnist"):
            raise ValueError(f"unknown generator kind {self.kind!r}")
        for dom, b in self.betas.items():
            _check_beta(b)
        for dom, n in self.n.items():
            if n < 0:
                raise ValueError(f"domain {dom}: n must be >= 0")


def domain_rng(seed: int, domain_id: str) -> np.random.Generator:
    """Independent Philox stream for ``(seed, domain_id)``."""
    digest = hashlib.sha256(f"{int(seed)}:{domain_id}".encode()).digest()
    key = int.from_bytes(digest[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))


def _check_beta(beta: float) -> None:
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")


def rad_sample(beta: float, rng: np.random.Generator, size=None):
    """Random sign: +1 with probability ``beta``, else -1."""
    _check_beta(beta)
    u = rng.random(size)
    return np.where(u < beta, 1, -1) if size is not None else (1 if u < beta else -1)


def bern_sample(p: float, rng: np.random.Generator, size=None):
    _check_beta(p)
    u = rng.random(size)
    return (u < p).astype(np.int64) if size is not None else int(u < p)


def gen_synthetic_domain(beta: float, n: int, rng: np.random.Generator, domain_id: str = "") -> DomainDataset:
    """Anti-causal process: Y -> X_perp (stable) and Y -> Z -> X_z (unstable).

    Features are ``(X_z, X_perp)`` in {-1, +1}; labels map -1 -> 0 and +1 -> 1.
    """
    _check_beta(beta)
    if n < 0:
        raise ValueError("n must be >= 0")
    y = rad_sample(0.5, rng, n)
    x_perp = y * rad_sample(0.75, rng, n)
    z = y * rad_sample(beta, rng, n)
    x_z = z
    x = np.stack([x_z, x_perp], axis=1).astype(np.float64).reshape(n, 2)
    return DomainDataset(domain_id, beta, x, (y + 1) // 2, z)


def gen_counterexample_domain(beta: float, n: int, rng: np.random.Generator, domain_id: str = "") -> DomainDataset:
    """Process where X_y drives both Y and X_z, breaking g(X) _||_ h(X) | Y.

    Features are ``(X_y, X_z)`` in {0, 1}.
    """
    _check_beta(beta)
    if n < 0:
        raise ValueError("n must be >= 0")
    x_y = bern_sample(0.5, rng, n)
    u = bern_sample(0.75, rng, n)
    y = x_y ^ u
    u_z = bern_sample(beta, rng, n)
    z = y ^ u_z
    x_z = z ^ x_y
    x = np.stack([x_y, x_z], axis=1).astype(np.float64).reshape(n, 2)
    return DomainDataset(domain_id, beta, x, y, z)


# --------------------------------------------------------------------------
# MNIST


@dataclass(frozen=True)
class IdxImages:
    count: int
    rows: int
    cols: int
    pixels: np.ndarray  # uint8, (count, rows, cols)


@dataclass(frozen=True)
class IdxLabels:
    count: int
    labels: np.ndarray  # uint8, (count,)


def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def read_idx(path):
    """Parse an IDX image (magic 0x803) or label (magic 0x801) file.

    Gzipped files are accepted transparently.
    """
    raw = _read_bytes(path)
    if len(raw) < 8:
        raise IdxFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, count = struct.unpack(">II", raw[:8])
    if magic == LABEL_MAGIC:
        if count > _MAX_IDX_ITEMS:
            raise IdxFormatError(f"{path}: dimension overflow (count={count})")
        body = raw[8:]
        if len(body) < count:
            raise IdxFormatError(f"{path}: truncated, expected {count} labels, found {len(body)}")
        return IdxLabels(count, np.frombuffer(body, dtype=np.uint8, count=count).copy())
    if magic == IMAGE_MAGIC:
        if len(raw) < 16:
            raise IdxFormatError(f"{path}: truncated header ({len(raw)} bytes)")
        rows, cols = struct.unpack(">II", raw[8:16])
        total = count * rows * cols
        if total > _MAX_IDX_ITEMS:
            raise IdxFormatError(f"{path}: dimension overflow ({count}x{rows}x{cols})")
        body = raw[16:]
        if len(body) < total:
            raise IdxFormatError(f"{path}: truncated, expected {total} pixel bytes, found {len(body)}")
        pixels = np.frombuffer(body, dtype=np.uint8, count=total).reshape(count, rows, cols).copy()
        return IdxImages(count, rows, cols, pixels)
    raise IdxFormatError(f"{path}: bad magic 0x{magic:08x}")


def write_idx(path, data: np.ndarray) -> None:
    """Write a uint8 array as IDX: 1-D -> label file, 3-D -> image file."""
    data = np.ascontiguousarray(data, dtype=np.uint8)
    if data.ndim == 1:
        header = struct.pack(">II", LABEL_MAGIC, data.shape[0])
    elif data.ndim == 3:
        header = struct.pack(">IIII", IMAGE_MAGIC, *data.shape)
    else:
        raise ValueError("IDX writer supports 1-D labels or 3-D images")
    Path(path).write_bytes(header + data.tobytes())


def find_mnist_files(mnist_dir) -> dict[str, Path]:
    """Locate the four standard MNIST files (plain or ``.gz``)."""
    root = Path(mnist_dir)
    found, missing = {}, []
    for key, name in MNIST_FILES.items():
        for cand in (root / name, root / (name + ".gz")):
            if cand.is_file():
                found[key] = cand
                break
        else:
            missing.append(str(root / name))
    if missing:
        raise FileNotFoundError("missing MNIST files: " + ", ".join(missing))
    return found


def _downsample(images: np.ndarray, side: int) -> np.ndarray:
    n, rows, cols = images.shape
    if rows % side or cols % side:
        raise ValueError(f"cannot average-pool {rows}x{cols} images to {side}x{side}")
    fr, fc = rows // side, cols // side
    return images.reshape(n, side, fr, side, fc).mean(axis=(2, 4))


def build_color_mnist(
    images: np.ndarray,
    labels: np.ndarray,
    beta: float,
    rng: np.random.Generator,
    downsample: int = 14,
    label_noise: float = 0.25,
    domain_id: str = "",
) -> DomainDataset:
    """Binary, label-noised, two-colour MNIST domain.

    Digits 0-4 map to label 0 and 5-9 to label 1; the label is then flipped
    with probability ``label_noise``. The colour bit equals the (noisy) label
    with probability ``beta``. The image goes into the channel picked by the
    colour; the other channel is zero. Features are ``2 * downsample**2``.
    """
    _check_beta(beta)
    images = np.asarray(images)
    labels = np.asarray(labels)
    if images.ndim != 3 or images.shape[0] != labels.shape[0]:
        raise ValueError(f"images {images.shape} and labels {labels.shape} are not aligned")
    n = labels.shape[0]
    y = (labels >= 5).astype(np.int64)
    y = y ^ bern_sample(label_noise, rng, n)
    z = y ^ bern_sample(1.0 - beta, rng, n)
    gray = _downsample(images.astype(np.float64) / 255.0, downsample).reshape(n, -1)
    x = np.zeros((n, 2 * gray.shape[1]))
    width = gray.shape[1]
    red = z == 0
    x[red, :width] = gray[red]
    x[~red, width:] = gray[~red]
    return DomainDataset(domain_id, beta, x, y, z)


def load_mnist(mnist_dir):
    files = find_mnist_files(mnist_dir)
    tr_img, tr_lab = read_idx(files["train_images"]), read_idx(files["train_labels"])
    te_img, te_lab = read_idx(files["test_images"]), read_idx(files["test_labels"])
    if tr_img.count != tr_lab.count or te_img.count != te_lab.count:
        raise IdxFormatError(f"{mnist_dir}: image and label counts differ")
    return (tr_img.pixels, tr_lab.labels), (te_img.pixels, te_lab.labels)


# --------------------------------------------------------------------------


def generate_domains(
    kind: str,
    betas: dict[str, float],
    n: dict[str, int] | int,
    seed: int,
    mnist_dir=None,
    downsample: int = 14,
    test_domains: Sequence[str] = ("test",),
) -> dict[str, DomainDataset]:
    """Build every domain named in ``betas`` from one seed.

    For Color MNIST, non-test domains are carved from disjoint slices of the
    shuffled training file and test domains from the t10k file.
    """
    sizes = {d: (n if isinstance(n, int) else n[d]) for d in betas}
    GeneratorSpec(kind, dict(betas), sizes, seed)
    out = {}
    if kind in ("synthetic", "counterexample"):
        gen = gen_synthetic_domain if kind == "synthetic" else gen_counterexample_domain
        for dom, beta in betas.items():
            out[dom] = gen(beta, sizes[dom], domain_rng(seed, dom), dom)
        return out
    if mnist_dir is None:
        raise ValueError("color_mnist needs an MNIST directory")
    (tr_x, tr_y), (te_x, te_y) = load_mnist(mnist_dir)
    order = {
        "train": domain_rng(seed, "mnist-train-order").permutation(len(tr_y)),
        "test": domain_rng(seed, "mnist-test-order").permutation(len(te_y)),
    }
    cursor = {"train": 0, "test": 0}
    for dom, beta in betas.items():
        pool = "test" if dom in test_domains else "train"
        imgs, labs = (te_x, te_y) if pool == "test" else (tr_x, tr_y)
        start = cursor[pool]
        stop = start + sizes[dom]
        if stop > len(labs):
            raise ValueError(f"not enough MNIST {pool} images for domain {dom}")
        idx = order[pool][start:stop]
        cursor[pool] = stop
        out[dom] = build_color_mnist(imgs[idx], labs[idx], beta, domain_rng(seed, dom), downsample, domain_id=dom)
    return out
