#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Unit tests for the neural toolkit: forward passes, hand-written gradients,
the optimiser and checkpoints.
"""

import tempfile
import unittest
from pathlib import Path

import numpy as np

from backend.base.custom_exceptions import (CheckpointError, InvalidSettingValue,
                                            ShapeMismatchError)
from backend.features.nn import (MlpSpec, ParamStore, add_mlp,
                                 attention, attention_backward,
                                 bce_with_logits, load_checkpoint,
                                 mlp_backward, mlp_forward,
                                 positional_encoding, positional_encodings,
                                 save_checkpoint, sgd_step, sigmoid)

STEP = 1e-6
TOLERANCE = 1e-4


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic = np.asarray(analytic, dtype=float).ravel()
    numeric = np.asarray(numeric, dtype=float).ravel()
    scale = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


def numeric_gradient(func, value: np.ndarray, step: float = STEP) -> np.ndarray:
    """Central differences of a scalar function with respect to `value`, in place."""
    grad = np.zeros_like(value)
    flat = value.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        up = func()
        flat[i] = keep - step
        down = func()
        flat[i] = keep
        out[i] = (up - down) / (2.0 * step)
    return grad


class TestParamStore(unittest.TestCase):
    """Test the parameter store."""

    def test_deterministic_init(self):
        """Test that the same seed gives the same values."""
        a, b = ParamStore(5), ParamStore(5)
        np.testing.assert_array_equal(a.add("w", (3, 4)), b.add("w", (3, 4)))

    def test_uniform_bound(self):
        """Test the initialisation range."""
        store = ParamStore(1)
        value = store.add("w", (16, 8))
        self.assertTrue(np.all(np.abs(value) <= 0.25))

    def test_unique_names(self):
        """Test that a name cannot be added twice."""
        store = ParamStore()
        store.add("w", (2,))
        with self.assertRaises(KeyError):
            store.add("w", (2,))

    def test_set_checks_shape(self):
        """Test that assigning a value of another shape fails."""
        store = ParamStore()
        store.add("w", (2, 2))
        with self.assertRaises(ShapeMismatchError):
            store["w"] = np.zeros(3)

    def test_zeros_like(self):
        """Test that gradient buffers match every parameter."""
        store = ParamStore(2)
        store.add("w", (2, 3))
        store.add("b", (3,), zero=True)
        grads = store.zeros_like()
        self.assertEqual(list(grads), ["w", "b"])
        self.assertEqual(grads["w"].shape, (2, 3))
        self.assertFalse(np.any(grads["w"]))


class TestMlp(unittest.TestCase):
    """Test mlp_forward and mlp_backward."""

    def setUp(self):
        """Set up test fixtures."""
        self.spec = MlpSpec("m", (5, 7, 3))
        self.params = ParamStore(3)
        add_mlp(self.params, self.spec)

    def test_zero_params(self):
        """Test that zero weights and biases give zero output."""
        self.params.zero_()
        out, _ = mlp_forward(self.params, np.ones((4, 5)), self.spec)
        np.testing.assert_array_equal(out, 0.0)

    def test_identity_layer(self):
        """Test a single identity linear layer."""
        spec = MlpSpec("id", (4, 4))
        params = ParamStore()
        add_mlp(params, spec)
        params["id.w0"] = np.eye(4)
        params["id.b0"] = np.zeros(4)
        x = np.arange(8.0).reshape(2, 4)
        np.testing.assert_array_equal(mlp_forward(params, x, spec)[0], x)

    def test_input_shape_checked(self):
        """Test that a wrong input width fails."""
        with self.assertRaises(ShapeMismatchError):
            mlp_forward(self.params, np.ones((2, 4)), self.spec)

    def test_gradients(self):
        """Test input and parameter gradients against finite differences."""
        rng = np.random.default_rng(0)
        for trial in range(20):
            params = ParamStore(trial)
            add_mlp(params, self.spec)
            x = rng.normal(size=(4, 5))
            weights = rng.normal(size=(4, 3))

            def loss():
                return float(np.sum(mlp_forward(params, x, self.spec)[0] * weights))

            out, inputs = mlp_forward(params, x, self.spec)
            grads = {}
            grad_x = mlp_backward(params, self.spec, inputs, weights, grads)

            self.assertLess(relative_error(grad_x, numeric_gradient(loss, x)), TOLERANCE)
            for name in params:
                numeric = numeric_gradient(loss, params[name])
                self.assertLess(relative_error(grads[name], numeric), TOLERANCE, name)

    def test_deterministic(self):
        """Test that repeated forward passes are bit-identical."""
        x = np.random.default_rng(1).normal(size=(3, 5))
        a = mlp_forward(self.params, x, self.spec)[0]
        b = mlp_forward(self.params, x, self.spec)[0]
        np.testing.assert_array_equal(a, b)


class TestAttention(unittest.TestCase):
    """Test single-head scaled dot-product attention."""

    def test_single_key(self):
        """Test that one key returns its value regardless of the query."""
        rng = np.random.default_rng(0)
        v = rng.normal(size=(1, 4))
        out, _ = attention(rng.normal(size=4), rng.normal(size=(1, 4)), v)
        np.testing.assert_allclose(out, v[0])

    def test_identical_keys_average(self):
        """Test that identical keys give the mean of the values."""
        rng = np.random.default_rng(1)
        k = np.tile(rng.normal(size=4), (5, 1))
        v = rng.normal(size=(5, 4))
        out, _ = attention(rng.normal(size=4), k, v)
        np.testing.assert_allclose(out, v.mean(axis=0))

    def test_weights_form_distribution(self):
        """Test non-negative weights summing to one per query."""
        rng = np.random.default_rng(2)
        _, cache = attention(rng.normal(size=(6, 8)), rng.normal(size=(6, 5, 8)), rng.normal(size=(6, 5, 8)))
        self.assertTrue(np.all(cache.weights >= 0))
        np.testing.assert_allclose(cache.weights.sum(axis=-1), 1.0, atol=1e-9)

    def test_shape_mismatch(self):
        """Test that inconsistent shapes fail."""
        with self.assertRaises(ShapeMismatchError):
            attention(np.ones(4), np.ones((3, 5)), np.ones((3, 5)))
        with self.assertRaises(ShapeMismatchError):
            attention(np.ones(4), np.ones((3, 4)), np.ones((2, 4)))

    def test_gradients(self):
        """Test q, k and v gradients against finite differences."""
        rng = np.random.default_rng(3)
        for _ in range(20):
            n, t, d = rng.integers(1, 4), rng.integers(1, 6), rng.integers(2, 6)
            q = rng.normal(size=(n, d))
            k = rng.normal(size=(n, t, d))
            v = rng.normal(size=(n, t, d))
            weights = rng.normal(size=(n, d))

            def loss():
                return float(np.sum(attention(q, k, v)[0] * weights))

            _, cache = attention(q, k, v)
            grad_q, grad_k, grad_v = attention_backward(cache, weights)
            self.assertLess(relative_error(grad_q, numeric_gradient(loss, q)), TOLERANCE)
            self.assertLess(relative_error(grad_k, numeric_gradient(loss, k)), TOLERANCE)
            self.assertLess(relative_error(grad_v, numeric_gradient(loss, v)), TOLERANCE)


class TestPositionalEncoding(unittest.TestCase):
    """Test the sinusoidal positional encoding."""

    def test_zero_step(self):
        """Test that t = 0 alternates sin 0 and cos 0."""
        np.testing.assert_array_equal(positional_encoding(0, 6), [0, 1, 0, 1, 0, 1])

    def test_bounded(self):
        """Test that every entry lies in [-1, 1]."""
        for t in range(50):
            self.assertTrue(np.all(np.abs(positional_encoding(t, 8)) <= 1.0))

    def test_distinct_steps(self):
        """Test that the steps of a horizon get pairwise distinct encodings."""
        rows = np.stack([positional_encoding(t, 8) for t in range(9)])
        dist = np.linalg.norm(rows[:, None] - rows[None], axis=-1)
        self.assertGreater(dist[~np.eye(9, dtype=bool)].min(), 0.0)

    def test_odd_width(self):
        """Test that an odd width is refused."""
        with self.assertRaises(InvalidSettingValue):
            positional_encoding(1, 5)

    def test_future_steps(self):
        """Test that the stacked rows start at step 1."""
        np.testing.assert_array_equal(positional_encodings(3, 4)[0], positional_encoding(1, 4))


class TestLosses(unittest.TestCase):
    """Test sigmoid and the logit cross-entropy."""

    def test_sigmoid_stable(self):
        """Test sigmoid at extreme logits."""
        out = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
        np.testing.assert_allclose(out, [0.0, 0.5, 1.0])
        self.assertTrue(np.all(np.isfinite(out)))

    def test_bce_gradient(self):
        """Test the logit gradient of the cross-entropy."""
        z = np.array([-2.0, 0.3, 4.0])
        target = np.array([0.0, 1.0, 1.0])

        def loss():
            return float(np.sum(bce_with_logits(z, target)[0]))

        _, grad = bce_with_logits(z, target)
        self.assertLess(relative_error(grad, numeric_gradient(loss, z)), TOLERANCE)


class TestSgd(unittest.TestCase):
    """Test the optimiser step."""

    def test_zero_grads(self):
        """Test that zero gradients leave parameters unchanged."""
        store = ParamStore(0)
        before = store.add("w", (3,)).copy()
        sgd_step(store, {"w": np.zeros(3)}, 0.1)
        np.testing.assert_array_equal(store["w"], before)

    def test_scalar_step(self):
        """Test p = 1, g = 2, lr = 0.1."""
        store = ParamStore()
        store["p"] = np.array(1.0)
        sgd_step(store, {"p": np.array(2.0)}, 0.1)
        self.assertAlmostEqual(float(store["p"]), 0.8)

    def test_quadratic_converges(self):
        """Test descent on p^2 / 2 from p = 1."""
        store = ParamStore()
        store["p"] = np.array(1.0)
        for _ in range(200):
            sgd_step(store, {"p": store["p"].copy()}, 0.1)
        self.assertLess(abs(float(store["p"])), 1e-3)

    def test_shape_mismatch(self):
        """Test that a misshaped gradient fails."""
        store = ParamStore()
        store["p"] = np.zeros(2)
        with self.assertRaises(ShapeMismatchError):
            sgd_step(store, {"p": np.zeros(3)}, 0.1)
        with self.assertRaises(ShapeMismatchError):
            sgd_step(store, {"q": np.zeros(2)}, 0.1)

    def test_non_positive_rate(self):
        """Test that the learning rate must be positive."""
        with self.assertRaises(InvalidSettingValue):
            sgd_step(ParamStore(), {}, 0.0)


class TestCheckpoint(unittest.TestCase):
    """Test checkpoint files."""

    def test_round_trip(self):
        """Test that values and config survive a save and load, at float32 precision."""
        store = ParamStore(4)
        store.add("a", (3, 2))
        store.add("b", (5,))
        with tempfile.TemporaryDirectory() as folder:
            path = Path(folder) / "model"
            save_checkpoint(store, path, {"width": 3})
            loaded, config = load_checkpoint(path)
        self.assertEqual(config, {"width": 3})
        self.assertEqual(loaded.names(), store.names())
        for name in store:
            np.testing.assert_array_equal(loaded[name], store[name].astype(np.float32))

    def test_missing(self):
        """Test that a missing checkpoint is reported."""
        with tempfile.TemporaryDirectory() as folder:
            with self.assertRaises(CheckpointError):
                load_checkpoint(Path(folder) / "nothing")


if __name__ == "__main__":
    unittest.main()
