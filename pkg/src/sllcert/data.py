"""Datasets: IDX and CSV readers, synthetic blobs/spirals, and the 5k MNIST subset.

Every loader maps inputs into the unit l2 ball, the input space the
certificates and bounds assume.
"""

import gzip
import struct
from dataclasses import dataclass

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class DataFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray  # (n, d), each row has norm <= 1
    labels: np.ndarray  # (n,) ints in [0, n_classes)
    n_classes: int

    def __post_init__(self):
        X = np.asarray(self.inputs, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.intp)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError(f"inputs {X.shape} and labels {y.shape} do not line up")
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise ValueError("label outside [0, n_classes)")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.labels.shape[0]

    def subset(self, index):
        return Dataset(self.inputs[index], self.labels[index], self.n_classes)

    def split(self, n_first):
        return self.subset(slice(0, n_first)), self.subset(slice(n_first, None))


def normalize_rows(X):
    """Scale each row to unit l2 norm (zero rows stay zero)."""
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    out = np.divide(X, norms, out=np.zeros_like(X), where=norms > 0)
    # rounding can leave a norm a hair above one
    over = np.linalg.norm(out, axis=1) > 1.0
    out[over] /= np.nextafter(np.linalg.norm(out[over], axis=1, keepdims=True), np.inf)
    return out


def _open(path):
    with open(path, "rb") as fh:
        head = fh.read(2)
    return gzip.open(path, "rb") if head == b"\x1f\x8b" else open(path, "rb")


def _read_idx(path, expected_magic, what):
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise DataFormatError(f"{path}: too short for an IDX header")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic != expected_magic:
        raise DataFormatError(f"{path}: bad magic 0x{magic:08x} for {what} (want 0x{expected_magic:08x})")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = int(np.prod(dims))
    if len(raw) - header != size:
        raise DataFormatError(f"{path}: header promises {size} bytes, file has {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(images_path, labels_path, limit=None, n_classes=10):
    images = _read_idx(images_path, IMAGES_MAGIC, "images")
    labels = _read_idx(labels_path, LABELS_MAGIC, "labels")
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    n = images.shape[0] if limit is None else min(limit, images.shape[0])
    X = images[:n].reshape(n, int(np.prod(images.shape[1:]))).astype(np.float64) / 255.0
    return Dataset(normalize_rows(X), labels[:n].astype(np.intp), n_classes)


def save_idx(images, labels, images_path, labels_path):
    """Write uint8 images ``(n, rows, cols)`` and labels ``(n,)`` as IDX files."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGES_MAGIC, *images.shape))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", LABELS_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


def load_csv(path, limit=None, n_classes=None):
    """One sample per row, integer label first. Inputs are row-normalized."""
    raw = np.loadtxt(path, delimiter=",", ndmin=2, max_rows=limit)
    if raw.size == 0:
        return Dataset(np.zeros((0, 0)), np.zeros(0, dtype=np.intp), n_classes or 1)
    labels = raw[:, 0]
    if np.any(labels != np.round(labels)) or np.any(labels < 0):
        raise DataFormatError(f"{path}: first column must hold non-negative integer labels")
    labels = labels.astype(np.intp)
    C = n_classes if n_classes is not None else int(labels.max()) + 1
    return Dataset(normalize_rows(raw[:, 1:]), labels, C)


def save_csv(data, path):
    rows = np.column_stack([data.labels.astype(np.float64), data.inputs])
    fmt = ["%d"] + ["%.17g"] * data.inputs.shape[1]
    np.savetxt(path, rows, delimiter=",", fmt=fmt)


def synth_data(kind, n, n_classes=2, seed=0, dim=2):
    """Reproducible toy classification data inside the unit ball.

    ``blobs`` puts Gaussian clusters at evenly spaced directions; ``spiral``
    is the classic interleaved arms. Classes are assigned round-robin, so
    counts differ by at most one.
    """
    rng = np.random.default_rng(seed)
    y = np.arange(n) % n_classes
    if kind == "blobs":
        angles = 2 * np.pi * np.arange(n_classes) / n_classes
        centers = np.zeros((n_classes, dim))
        centers[:, 0], centers[:, 1 % dim] = np.cos(angles), np.sin(angles)
        X = 0.6 * centers[y] + 0.1 * rng.standard_normal((n, dim))
    elif kind == "spiral":
        r = rng.uniform(0.05, 1.0, n)
        theta = 3.0 * r + 2 * np.pi * y / n_classes + 0.15 * rng.standard_normal(n)
        X = np.zeros((n, dim))
        X[:, 0], X[:, 1 % dim] = r * np.cos(theta), r * np.sin(theta)
    else:
        raise ValueError(f"unknown synthetic dataset {kind!r}")
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    X = np.where(norms > 1.0, X / np.maximum(norms, 1.0) * (1 - 1e-12), X)
    return Dataset(X, y, n_classes)


def mnist_subset_raw():
    """The 5000-sample MNIST subset bundled with ``mlxtend`` as uint8 arrays."""
    try:
        from mlxtend.data import mnist_data
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise RuntimeError("the MNIST subset needs the optional 'mlxtend' package") from exc
    X, y = mnist_data()
    return X.astype(np.uint8).reshape(-1, 28, 28), y.astype(np.intp)


def load_mnist_subset():
    images, labels = mnist_subset_raw()
    X = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(normalize_rows(X), labels, 10)
