import math

import numpy as np
import pytest

import evoba.model
from evoba import (
    ContractViolationError,
    ImageTensor,
    LabeledDataset,
    MlpModel,
    TensorShape,
    gradient_check,
    loss_gradients,
    train_sgd,
)


def seeded_model(seed=0, arch=(8, 6, 3), shape=TensorShape(2, 4, 1)):
    rng = np.random.default_rng(seed)
    weights = [rng.normal(0, 0.5, size=(a, b)) for a, b in zip(arch, arch[1:])]
    biases = [rng.normal(0, 0.1, size=b) for b in arch[1:]]
    return MlpModel(weights, biases, shape)


def naive_forward(model, flat):
    """Independent nested-loop forward pass, no numpy matmul."""
    a = list(flat)
    n_layers = len(model.weights)
    for layer, (w, b) in enumerate(zip(model.weights, model.biases)):
        out = []
        for j in range(w.shape[1]):
            z = b[j]
            for i in range(w.shape[0]):
                z += a[i] * w[i, j]
            out.append(z)
        if layer < n_layers - 1:
            a = [max(z, 0.0) for z in out]
        else:
            a = out
    m = max(a)
    exps = [math.exp(z - m) for z in a]
    total = sum(exps)
    return [e / total for e in exps]


def blob_dataset(seed=0, n=200):
    """Two well-separated Gaussian blobs as 1x2x1 images."""
    rng = np.random.default_rng(seed)
    images, labels = [], []
    centers = [(0.25, 0.25), (0.75, 0.75)]
    for i in range(n):
        label = i % 2
        point = np.clip(
            np.array(centers[label]) + rng.normal(0, 0.05, 2), 0.0, 1.0
        )
        images.append(ImageTensor(point.reshape(1, 2, 1)))
        labels.append(label)
    return LabeledDataset(images, labels, num_classes=2)


def nearest_centroid_accuracy(ds):
    """Brute-force separability check: classify by nearest class mean."""
    x = np.stack([img.flat for img in ds.images])
    y = np.asarray(ds.labels)
    centroids = np.stack([x[y == k].mean(axis=0) for k in range(ds.num_classes)])
    pred = np.argmin(
        ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2), axis=1
    )
    return float(np.mean(pred == y))


class TestForward:
    def test_uniform_single_layer_gives_uniform_probabilities(self):
        shape = TensorShape(2, 2, 1)
        model = MlpModel(
            [np.full((4, 5), 0.3)], [np.full(5, 0.1)], shape
        )
        img = ImageTensor(np.random.default_rng(0).random((2, 2, 1)))
        result = model.predict(img)
        assert np.allclose(result.probabilities, 0.2, atol=1e-12)

    def test_hand_built_linear_model_prefers_class_one(self):
        shape = TensorShape(1, 3, 1)
        w = np.array([[0.0, 1.0], [0.0, 1.0], [0.0, 1.0]])
        model = MlpModel([w], [np.zeros(2)], shape)
        result = model.predict(ImageTensor(np.ones((1, 3, 1))))
        assert result.predicted_class == 1

    def test_matches_nested_loop_oracle(self):
        model = seeded_model(seed=3)
        rng = np.random.default_rng(4)
        for _ in range(5):
            img = ImageTensor(rng.random((2, 4, 1)))
            got = model.predict(img).probabilities
            want = naive_forward(model, img.flat.tolist())
            assert np.allclose(got, want, atol=1e-9)

    def test_probabilities_sum_to_one_on_random_inputs(self):
        model = seeded_model(seed=5)
        rng = np.random.default_rng(6)
        for _ in range(50):
            img = ImageTensor(rng.random((2, 4, 1)))
            p = model.predict(img).probabilities
            assert abs(p.sum() - 1.0) < 1e-6
            assert p.min() >= 0.0

    def test_shape_mismatch_rejected(self):
        model = seeded_model()
        with pytest.raises(ContractViolationError):
            model.predict(ImageTensor(np.zeros((4, 2, 1))))

    def test_layer_dimension_chain_validated(self):
        with pytest.raises(ContractViolationError):
            MlpModel(
                [np.zeros((4, 6)), np.zeros((5, 3))],
                [np.zeros(6), np.zeros(3)],
                TensorShape(2, 2, 1),
            )


class TestTraining:
    def test_blobs_reach_95_percent(self):
        ds = blob_dataset(seed=0, n=200)
        assert nearest_centroid_accuracy(ds) >= 0.95  # separability first
        train = ds.subset(range(150))
        test = ds.subset(range(150, 200))
        model = train_sgd(train, [2, 8, 2], epochs=40, lr=0.5, seed=1,
                          eval_dataset=test)
        assert model.meta["test_accuracy"] >= 0.95

    def test_zero_epochs_returns_initialized_model(self):
        ds = blob_dataset(seed=2, n=20)
        trained = train_sgd(ds, [2, 4, 2], epochs=0, lr=0.1, seed=9)
        rng = np.random.default_rng(9)
        init_w, init_b = evoba.model._init_layers([2, 4, 2], rng)
        for got, want in zip(trained.weights, init_w):
            assert np.array_equal(got, want)
        for got, want in zip(trained.biases, init_b):
            assert np.array_equal(got, want)

    def test_training_deterministic_bitwise_weight_files(self, tmp_path):
        ds = blob_dataset(seed=3, n=60)
        a = train_sgd(ds, [2, 6, 2], epochs=5, lr=0.3, seed=11)
        b = train_sgd(ds, [2, 6, 2], epochs=5, lr=0.3, seed=11)
        pa, pb = tmp_path / "a.mlp", tmp_path / "b.mlp"
        a.save(pa)
        b.save(pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_arch_dataset_mismatch(self):
        ds = blob_dataset(seed=4, n=10)
        with pytest.raises(ContractViolationError):
            train_sgd(ds, [3, 4, 2], epochs=1, lr=0.1, seed=0)
        with pytest.raises(ContractViolationError):
            train_sgd(ds, [2, 4, 5], epochs=1, lr=0.1, seed=0)

    def test_bad_lr_rejected(self):
        ds = blob_dataset(seed=5, n=10)
        with pytest.raises(ContractViolationError):
            train_sgd(ds, [2, 2], epochs=1, lr=0.0, seed=0)


class TestWeightsFile:
    def test_save_load_roundtrip(self, tmp_path):
        model = seeded_model(seed=21)
        model.meta["note"] = "fixture"
        path = tmp_path / "m.mlp"
        model.save(path)
        loaded = MlpModel.load(path)
        assert loaded.arch == model.arch
        assert loaded.input_shape == model.input_shape
        assert loaded.meta["note"] == "fixture"
        for got, want in zip(loaded.weights, model.weights):
            assert np.array_equal(got, want)
        for got, want in zip(loaded.biases, model.biases):
            assert np.array_equal(got, want)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.mlp"
        path.write_bytes(b"NOT-A-MODEL-FILE" + b"\x00" * 64)
        with pytest.raises(ContractViolationError):
            MlpModel.load(path)


class TestGradientCheck:
    def test_correct_backprop_small_error(self):
        model = seeded_model(seed=31)
        rng = np.random.default_rng(32)
        img = ImageTensor(rng.random((2, 4, 1)))
        err = gradient_check(model, img, label=1, seed=0)
        assert err < 1e-4

    def test_sign_flip_detected(self, monkeypatch):
        model = seeded_model(seed=33)
        rng = np.random.default_rng(34)
        img = ImageTensor(rng.random((2, 4, 1)))

        def flipped(model, img, label):
            gw, gb = loss_gradients(model, img, label)
            gw[0] = -gw[0]  # corrupt the first layer
            return gw, gb

        monkeypatch.setattr(evoba.model, "loss_gradients", flipped)
        err = gradient_check(model, img, label=1, seed=0)
        assert err > 1e-1

    def test_zero_weight_model_degenerate_case(self):
        shape = TensorShape(1, 4, 1)
        model = MlpModel(
            [np.zeros((4, 3)), np.zeros((3, 2))],
            [np.zeros(3), np.zeros(2)],
            shape,
        )
        img = ImageTensor(np.full((1, 4, 1), 0.5))
        err = gradient_check(model, img, label=0, seed=0)
        assert math.isfinite(err)
        assert err < 1e-4
