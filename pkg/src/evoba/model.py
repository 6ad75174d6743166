"""A small trainable MLP classifier used as the attack target.

Architecture: flatten -> ReLU hidden layer(s) -> softmax. Pure numpy, no
autograd framework; the analytic backprop is cross-checked against finite
differences by :func:`gradient_check`. Training is fully deterministic
given the seed, down to bitwise-identical weight files.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from .errors import ContractViolationError
from .oracle import PredictionResult
from .tensor import ImageTensor, TensorShape

WEIGHTS_MAGIC = b"EVOBA-MLP\x00"


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


class MlpModel:
    """Immutable feed-forward net with ReLU hidden layers and softmax output.

    weights[i] has shape (dims[i], dims[i+1]) and the forward pass is
    x @ W + b per layer; dims[0] must equal the flattened input size.
    """

    def __init__(self, weights, biases, input_shape: TensorShape, meta=None):
        if len(weights) != len(biases) or not weights:
            raise ContractViolationError("need one bias vector per weight matrix")
        self.weights = []
        self.biases = []
        dim = input_shape.element_count
        for i, (w, b) in enumerate(zip(weights, biases)):
            w = np.array(w, dtype=np.float64)
            b = np.array(b, dtype=np.float64)
            if w.ndim != 2 or b.ndim != 1 or w.shape != (dim, b.size):
                raise ContractViolationError(
                    f"layer {i}: expected weights ({dim}, n) with matching bias, "
                    f"got weights {w.shape} and bias {b.shape}"
                )
            w.setflags(write=False)
            b.setflags(write=False)
            self.weights.append(w)
            self.biases.append(b)
            dim = b.size
        if dim < 2:
            raise ContractViolationError("output layer must have at least 2 classes")
        self.input_shape = input_shape
        self.meta = dict(meta or {})

    @property
    def arch(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def num_classes(self) -> int:
        return self.weights[-1].shape[1]

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Probabilities for a flat input vector or an (n, d) batch."""
        a = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.maximum(a @ w + b, 0.0)
        return _softmax(a @ self.weights[-1] + self.biases[-1])

    def predict(self, img: ImageTensor) -> PredictionResult:
        if img.shape != self.input_shape:
            raise ContractViolationError(
                f"model expects input shape {self.input_shape.as_tuple()}, "
                f"got {img.shape.as_tuple()}"
            )
        return PredictionResult.from_probabilities(self.forward(img.flat))

    def accuracy(self, images, labels) -> float:
        x = np.stack([img.flat for img in images])
        pred = np.argmax(self.forward(x), axis=1)
        return float(np.mean(pred == np.asarray(labels)))

    def save(self, path) -> None:
        """Binary weight file: magic, u32-le header length, JSON header, then
        raw little-endian float64 arrays (W then b, per layer, row-major)."""
        header = {
            "arch": self.arch,
            "input_shape": list(self.input_shape.as_tuple()),
            "meta": self.meta,
        }
        blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
        with open(path, "wb") as f:
            f.write(WEIGHTS_MAGIC)
            f.write(struct.pack("<I", len(blob)))
            f.write(blob)
            for w, b in zip(self.weights, self.biases):
                f.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
                f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "MlpModel":
        with open(path, "rb") as f:
            magic = f.read(len(WEIGHTS_MAGIC))
            if magic != WEIGHTS_MAGIC:
                raise ContractViolationError(
                    f"not a model weights file (magic {magic!r})"
                )
            (hlen,) = struct.unpack("<I", f.read(4))
            header = json.loads(f.read(hlen).decode())
            arch = header["arch"]
            weights = []
            biases = []
            for din, dout in zip(arch[:-1], arch[1:]):
                w = np.frombuffer(f.read(din * dout * 8), dtype="<f8")
                weights.append(w.reshape(din, dout))
                biases.append(np.frombuffer(f.read(dout * 8), dtype="<f8"))
        shape = TensorShape(*header["input_shape"])
        return cls(weights, biases, shape, meta=header.get("meta"))


def _init_layers(arch, rng):
    # He init on hidden layers, smaller fan-in scaling on the output layer.
    weights, biases = [], []
    for i, (din, dout) in enumerate(zip(arch[:-1], arch[1:])):
        scale = np.sqrt(2.0 / din) if i < len(arch) - 2 else np.sqrt(1.0 / din)
        weights.append(rng.normal(0.0, scale, size=(din, dout)))
        biases.append(np.zeros(dout))
    return weights, biases


def train_sgd(
    dataset,
    arch,
    epochs: int,
    lr: float,
    seed: int,
    eval_dataset=None,
    batch_size: int = 32,
) -> MlpModel:
    """Minibatch SGD on softmax cross-entropy. Deterministic given seed.

    arch is the full layer-width chain [input, hidden..., classes] and must
    match the dataset's flattened image size and class count.
    """
    if len(dataset) == 0:
        raise ContractViolationError("cannot train on an empty dataset")
    if lr <= 0:
        raise ContractViolationError(f"learning rate must be positive, got {lr}")
    if epochs < 0:
        raise ContractViolationError(f"epochs must be non-negative, got {epochs}")
    arch = [int(a) for a in arch]
    if len(arch) < 2:
        raise ContractViolationError("arch needs at least input and output widths")
    shape = dataset.shape
    if arch[0] != shape.element_count:
        raise ContractViolationError(
            f"arch input width {arch[0]} != image size {shape.element_count}"
        )
    if arch[-1] != dataset.num_classes:
        raise ContractViolationError(
            f"arch output width {arch[-1]} != class count {dataset.num_classes}"
        )

    rng = np.random.default_rng(seed)
    weights, biases = _init_layers(arch, rng)
    x = np.stack([img.flat for img in dataset.images])
    y = np.asarray(dataset.labels)
    onehot = np.eye(arch[-1])[y]
    n = len(dataset)

    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            xb, yb = x[idx], onehot[idx]
            # forward, keeping activations for backprop
            acts = [xb]
            for w, b in zip(weights[:-1], biases[:-1]):
                acts.append(np.maximum(acts[-1] @ w + b, 0.0))
            probs = _softmax(acts[-1] @ weights[-1] + biases[-1])
            # backward
            delta = (probs - yb) / len(idx)
            for layer in range(len(weights) - 1, -1, -1):
                grad_w = acts[layer].T @ delta
                grad_b = delta.sum(axis=0)
                if layer > 0:
                    delta = (delta @ weights[layer].T) * (acts[layer] > 0.0)
                weights[layer] = weights[layer] - lr * grad_w
                biases[layer] = biases[layer] - lr * grad_b

    meta = {"arch": arch, "seed": int(seed), "epochs": int(epochs), "lr": float(lr)}
    model = MlpModel(weights, biases, shape, meta=meta)
    model.meta["train_accuracy"] = model.accuracy(dataset.images, dataset.labels)
    if eval_dataset is not None:
        model.meta["test_accuracy"] = model.accuracy(
            eval_dataset.images, eval_dataset.labels
        )
    return model


def loss_gradients(model: MlpModel, img: ImageTensor, label: int):
    """Analytic gradient of -log p_label(img) w.r.t. every weight and bias."""
    x = img.flat
    acts = [x]
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        acts.append(np.maximum(acts[-1] @ w + b, 0.0))
    probs = _softmax(acts[-1] @ model.weights[-1] + model.biases[-1])
    delta = probs.copy()
    delta[label] -= 1.0
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.weights)
    for layer in range(len(model.weights) - 1, -1, -1):
        grads_w[layer] = np.outer(acts[layer], delta)
        grads_b[layer] = delta.copy()
        if layer > 0:
            delta = (delta @ model.weights[layer].T) * (acts[layer] > 0.0)
    return grads_w, grads_b


def _loss_at(weights, biases, x, label):
    a = x
    for w, b in zip(weights[:-1], biases[:-1]):
        a = np.maximum(a @ w + b, 0.0)
    probs = _softmax(a @ weights[-1] + biases[-1])
    return -np.log(max(float(probs[label]), 1e-300))


def gradient_check(
    model: MlpModel,
    img: ImageTensor,
    label: int,
    step: float = 1e-5,
    samples_per_layer: int = 25,
    seed: int = 0,
    kink_margin: float = 1e-3,
) -> float:
    """Max relative error between backprop and central finite differences.

    Weight coordinates are sampled per layer. Coordinates whose finite
    difference would straddle a ReLU kink (pre-activation within
    kink_margin of zero, in the directly affected unit or anywhere
    downstream) are excluded; the analytic gradient is only defined away
    from the kinks.
    """
    x = img.flat
    pre_acts = []
    a = x
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        z = a @ w + b
        pre_acts.append(z)
        a = np.maximum(z, 0.0)
    min_abs_pre = [float(np.min(np.abs(z))) for z in pre_acts]

    grads_w, _ = loss_gradients(model, img, label)
    rng = np.random.default_rng(seed)
    n_hidden = len(model.weights) - 1
    max_err = 0.0
    for layer, w in enumerate(model.weights):
        # layers strictly after `layer` whose kinks the perturbation crosses
        downstream_risky = any(m < kink_margin for m in min_abs_pre[layer + 1 :])
        if downstream_risky:
            continue
        rows = rng.integers(0, w.shape[0], size=samples_per_layer)
        cols = rng.integers(0, w.shape[1], size=samples_per_layer)
        for i, j in zip(rows, cols):
            if layer < n_hidden and abs(pre_acts[layer][j]) < kink_margin:
                continue
            wp = [m.copy() for m in model.weights]
            wp[layer][i, j] += step
            up = _loss_at(wp, model.biases, x, label)
            wp[layer][i, j] -= 2 * step
            down = _loss_at(wp, model.biases, x, label)
            numeric = (up - down) / (2 * step)
            analytic = grads_w[layer][i, j]
            denom = max(abs(analytic), abs(numeric), 1e-6)
            max_err = max(max_err, abs(analytic - numeric) / denom)
    return max_err
