"""Feedforward ReLU networks: container, traced forward pass, margin, reduction, model files."""

import json
from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix, as_vector, index_set, spectral_norm, submatrix

FORMAT_VERSION = 1


class ParseError(ValueError):
    """Model file is not valid JSON or is truncated."""


class SchemaError(ValueError):
    """Model file parses but its contents have the wrong shape."""


@dataclass(frozen=True)
class Layer:
    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        W = as_matrix(self.W, "layer weight")
        b = as_vector(self.b, "layer bias")
        if b.shape[0] != W.shape[0]:
            raise ValueError(f"bias length {b.shape[0]} != weight rows {W.shape[0]}")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class Network:
    """``h(x) = A relu(W^K ... relu(W^1 x + b^1) ... + b^K)``."""

    layers: tuple
    classifier: np.ndarray

    def __post_init__(self):
        layers = tuple(l if isinstance(l, Layer) else Layer(*l) for l in self.layers)
        if not layers:
            raise ValueError("a network needs at least one hidden layer")
        for k in range(1, len(layers)):
            if layers[k].W.shape[1] != layers[k - 1].W.shape[0]:
                raise ValueError(
                    f"layer {k + 1} expects input size {layers[k].W.shape[1]}, "
                    f"layer {k} produces {layers[k - 1].W.shape[0]}"
                )
        A = as_matrix(self.classifier, "classifier")
        if A.shape[1] != layers[-1].W.shape[0]:
            raise ValueError(
                f"classifier expects {A.shape[1]} features, last layer has {layers[-1].W.shape[0]}"
            )
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "classifier", A)

    @classmethod
    def from_weights(cls, weights, classifier, biases=None):
        if biases is None:
            biases = [np.zeros(np.shape(W)[0]) for W in weights]
        return cls(tuple(Layer(W, b) for W, b in zip(weights, biases)), classifier)

    @property
    def depth(self):
        return len(self.layers)

    @property
    def dims(self):
        """``(d^0, d^1, ..., d^K, C)``."""
        return (self.layers[0].W.shape[1],) + tuple(l.W.shape[0] for l in self.layers) + (
            self.classifier.shape[0],
        )

    @property
    def n_classes(self):
        return self.classifier.shape[0]

    @property
    def has_bias(self):
        return any(np.any(l.b != 0) for l in self.layers)

    def weights(self):
        return [l.W for l in self.layers]

    def classifier_norm(self):
        return spectral_norm(self.classifier)

    def __call__(self, x):
        return forward(self, x).logits


@dataclass(frozen=True)
class ForwardTrace:
    """Everything the certification code needs from one forward pass.

    Lists are indexed by hidden layer ``k - 1``; ``reps[k]`` is the
    representation after layer ``k`` with ``reps[0] = x``.
    """

    pre: list
    q: list
    reps: list
    inactive: list
    logits: np.ndarray
    label: int
    margin: float

    @property
    def x(self):
        return self.reps[0]


def predicted_label(logits):
    # np.argmax returns the first maximal index, which is the tie rule we want
    return int(np.argmax(logits))


def margin(logits, label):
    """``logits[label] - max_{j != label} logits[j]``; negative if misclassified."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1 or logits.shape[0] < 2:
        raise ValueError("margin needs at least two logits")
    if not 0 <= label < logits.shape[0]:
        raise ValueError(f"label {label} out of range")
    others = np.delete(logits, label)
    return float(logits[label] - others.max())


def normalized_preactivations(W, z):
    """``z_i / ||w_i||``; zero rows map to -inf when inactive and +inf otherwise."""
    norms = np.linalg.norm(W, axis=1)
    q = np.empty_like(z)
    live = norms > 0
    q[live] = z[live] / norms[live]
    q[~live] = np.where(z[~live] <= 0, -np.inf, np.inf)
    return q


def forward(net, x):
    x = as_vector(x, "input")
    if x.shape[0] != net.dims[0]:
        raise ValueError(f"input has length {x.shape[0]}, network expects {net.dims[0]}")
    pre, q, reps, inactive = [], [], [x], []
    t = x
    for layer in net.layers:
        z = layer.W @ t + layer.b
        pre.append(z)
        q.append(normalized_preactivations(layer.W, z))
        inactive.append(np.flatnonzero(z <= 0))
        t = np.maximum(z, 0.0)
        reps.append(t)
    logits = net.classifier @ t
    label = predicted_label(logits)
    return ForwardTrace(pre, q, reps, inactive, logits, label, margin(logits, label))


def forward_batch(net, X):
    """Logits for a batch of inputs stacked as rows."""
    T = np.asarray(X, dtype=np.float64)
    for layer in net.layers:
        T = np.maximum(T @ layer.W.T + layer.b, 0.0)
    return T @ net.classifier.T


def representation(net, x):
    t = np.asarray(x, dtype=np.float64)
    for layer in net.layers:
        t = np.maximum(layer.W @ t + layer.b, 0.0)
    return t


@dataclass(frozen=True)
class ReducedNetwork:
    """Sub-network on retained index sets ``J^0..J^K``.

    Methods take a full-length input and restrict it to ``J^0`` first.
    """

    layers: tuple
    classifier: np.ndarray
    retained: tuple
    full_width: int

    def representation(self, x):
        t = np.asarray(x, dtype=np.float64)[self.retained[0]]
        for layer in self.layers:
            t = np.maximum(layer.W @ t + layer.b, 0.0)
        return t

    def logits(self, x):
        return self.classifier @ self.representation(x)

    def embed(self, t):
        """Scatter a reduced representation back into the full last-layer width."""
        full = np.zeros(self.full_width)
        full[self.retained[-1]] = t
        return full


def reduce(net, retained):
    """Restrict ``net`` to rows ``J^k`` of each layer and the matching columns."""
    dims = net.dims
    if len(retained) != net.depth + 1:
        raise ValueError(f"need {net.depth + 1} index sets, got {len(retained)}")
    sets = tuple(index_set(J, dims[k]) for k, J in enumerate(retained))
    layers = tuple(
        Layer(submatrix(layer.W, sets[k], sets[k - 1]), layer.b[sets[k]])
        for k, layer in enumerate(net.layers, start=1)
    )
    A = submatrix(net.classifier, np.arange(net.n_classes), sets[-1])
    return ReducedNetwork(layers, A, sets, dims[-2])


def _matrix_json(M):
    return {"rows": int(M.shape[0]), "cols": int(M.shape[1]), "weights": M.ravel().tolist()}


def network_to_dict(net):
    return {
        "format_version": FORMAT_VERSION,
        "dims": list(net.dims),
        "layers": [dict(_matrix_json(l.W), bias=l.b.tolist()) for l in net.layers],
        "classifier": _matrix_json(net.classifier),
    }


def save_network(net, path):
    # json writes floats with repr(), the shortest string that round-trips
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(network_to_dict(net), fh)
        fh.write("\n")


def _matrix_from_json(obj, where):
    try:
        rows, cols, data = int(obj["rows"]), int(obj["cols"]), obj["weights"]
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: needs integer rows, cols and a weights array") from exc
    if not isinstance(data, list) or len(data) != rows * cols:
        raise SchemaError(f"{where}: expected {rows}x{cols}={rows * cols} weights")
    try:
        M = np.array(data, dtype=np.float64).reshape(rows, cols)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: weights must be numbers") from exc
    if not np.all(np.isfinite(M)):
        raise SchemaError(f"{where}: non-finite weight")
    return M


def network_from_dict(obj):
    if not isinstance(obj, dict):
        raise SchemaError("model file must hold a JSON object")
    if obj.get("format_version") != FORMAT_VERSION:
        raise SchemaError(f"unsupported format_version {obj.get('format_version')!r}")
    for key in ("dims", "layers", "classifier"):
        if key not in obj:
            raise SchemaError(f"missing field {key!r}")
    layers = []
    for k, lobj in enumerate(obj["layers"], start=1):
        W = _matrix_from_json(lobj, f"layer {k}")
        bias = lobj.get("bias") if isinstance(lobj, dict) else None
        if not isinstance(bias, list) or len(bias) != W.shape[0]:
            raise SchemaError(f"layer {k}: bias must have {W.shape[0]} entries")
        layers.append(Layer(W, np.array(bias, dtype=np.float64)))
    A = _matrix_from_json(obj["classifier"], "classifier")
    try:
        net = Network(tuple(layers), A)
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc
    if list(obj["dims"]) != list(net.dims):
        raise SchemaError(f"dims header {obj['dims']} does not match weights {list(net.dims)}")
    return net


def load_network(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}, column {exc.colno} (offset {exc.pos}): {exc.msg}") from exc
    return network_from_dict(obj)
