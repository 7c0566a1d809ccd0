import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sentipanel.gradcheck import grad_check, grad_check_detail
from sentipanel.optim import MissingGradientError, OptimizerState, clip_gradients, optimizer_step
from sentipanel.params import ParameterStore
from sentipanel.tensor import (
    ShapeError,
    Tensor,
    cross_entropy,
    matmul,
    mul,
    softmax,
    softmax_cross_entropy,
    square,
    total,
)

finite = st.floats(min_value=-50, max_value=50, allow_nan=False)


class TestMatmul:
    def test_identity(self):
        B = np.arange(12.0).reshape(3, 4)
        assert np.array_equal(matmul(np.eye(3), B).data, B)

    def test_hand_product(self):
        out = matmul([[1.0, 2.0], [3.0, 4.0]], [[1.0], [1.0]])
        assert out.data.tolist() == [[3.0], [7.0]]

    def test_zeros(self):
        out = matmul(np.zeros((2, 3)), np.ones((3, 5)))
        assert np.all(out.data == 0.0)

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_gradients_both_sides(self):
        rng = np.random.default_rng(1)
        a, b = Tensor(rng.normal(size=(3, 4))), Tensor(rng.normal(size=(4, 2)))
        total(matmul(a, b)).backward()
        assert np.allclose(a.grad, np.ones((3, 2)) @ b.data.T)
        assert np.allclose(b.grad, a.data.T @ np.ones((3, 2)))


class TestSoftmax:
    def test_symmetric(self):
        assert np.allclose(softmax([0.0, 0.0]).data, [0.5, 0.5])

    def test_ln2(self):
        assert np.allclose(softmax([math.log(2.0), 0.0]).data, [2 / 3, 1 / 3], atol=1e-15)

    def test_empty(self):
        with pytest.raises(ShapeError):
            softmax(np.zeros(0))

    @given(st.lists(finite, min_size=1, max_size=12), finite)
    def test_simplex_and_shift_invariance(self, xs, c):
        p = softmax(np.array(xs)).data
        assert np.all(p > 0) or len(xs) > 1
        assert abs(p.sum() - 1.0) < 1e-9
        q = softmax(np.array(xs) + c).data
        assert np.allclose(p, q, atol=1e-12)

    def test_mask_zeroes_padding(self):
        p = softmax(np.array([[1.0, 2.0, 3.0]]), mask=np.array([[True, True, False]])).data
        assert p[0, 2] == 0.0
        assert abs(p.sum() - 1.0) < 1e-12


class TestCrossEntropy:
    def test_uniform_8(self):
        assert abs(float(cross_entropy(np.full(8, 1 / 8), 3).data) - math.log(8)) < 1e-12
        assert round(float(cross_entropy(np.full(8, 1 / 8), 3).data), 4) == 2.0794

    def test_onehot_zero(self):
        assert float(cross_entropy(np.eye(4)[2], 2).data) == 0.0

    def test_quarter(self):
        assert abs(float(cross_entropy(np.array([0.25, 0.75]), 0).data) - math.log(4)) < 1e-12

    def test_floor(self):
        assert abs(float(cross_entropy(np.array([0.0, 1.0]), 0).data) + math.log(1e-12)) < 1e-9

    def test_bad_index(self):
        with pytest.raises(IndexError):
            cross_entropy(np.full(3, 1 / 3), 3)

    def test_logit_gradient_is_p_minus_onehot(self):
        z = Tensor(np.array([[0.3, -1.2, 2.0]]))
        loss, p = softmax_cross_entropy(z, [1])
        loss.backward()
        assert np.allclose(z.grad, p - np.eye(3)[1])

    def test_composed_matches_fused(self):
        z = Tensor(np.array([0.3, -1.2, 2.0]))
        cross_entropy(softmax(z), 2).backward()
        p = softmax(np.array([0.3, -1.2, 2.0])).data
        assert np.allclose(z.grad, p - np.eye(3)[2], atol=1e-12)


class TestOptimizer:
    def test_sgd(self):
        store = ParameterStore()
        p = store.add("theta", np.array([1.0]))
        p.grad = np.array([0.5])
        optimizer_step(store, OptimizerState("sgd", 0.1))
        assert abs(p.data[0] - 0.95) < 1e-15
        assert p.grad is None

    def test_zero_grad_no_move(self):
        for kind in ("sgd", "adam"):
            store = ParameterStore()
            p = store.add("theta", np.array([1.0, -2.0]))
            p.grad = np.zeros(2)
            optimizer_step(store, OptimizerState(kind, 0.1))
            assert p.data.tolist() == [1.0, -2.0]

    def test_adam_first_step(self):
        # t=1: m_hat = g, v_hat = g^2, step = lr * g / (|g| + eps)
        lr, g = 1e-3, 0.7
        store = ParameterStore()
        p = store.add("theta", np.array([1.0]))
        p.grad = np.array([g])
        optimizer_step(store, OptimizerState("adam", lr))
        expected = 1.0 - lr * g / (g + 1e-8)
        assert abs(p.data[0] - expected) < 1e-15
        assert abs((1.0 - p.data[0]) - lr) < 1e-10

    def test_missing_gradient_names_parameter(self):
        store = ParameterStore()
        store.add("head.w", np.ones(2))
        with pytest.raises(MissingGradientError, match="head.w"):
            optimizer_step(store, OptimizerState("sgd", 0.1))

    def test_bad_config(self):
        with pytest.raises(ValueError):
            OptimizerState("rmsprop", 0.1)
        with pytest.raises(ValueError):
            OptimizerState("sgd", 0.0)

    def test_step_counter_monotonic(self):
        store = ParameterStore()
        p = store.add("w", np.ones(3))
        st_ = OptimizerState("adam", 0.01)
        for k in range(3):
            p.grad = np.ones(3)
            optimizer_step(store, st_)
            assert st_.step == k + 1
        assert st_.m["w"].shape == p.shape


class TestClipGradients:
    def store(self):
        s = ParameterStore()
        s.add("a", np.zeros(2)).grad = np.array([3.0, 0.0])
        s.add("b", np.zeros(1)).grad = np.array([4.0])
        s.add("c", np.zeros(1))
        return s

    def test_scales_to_joint_norm(self):
        s = self.store()
        assert clip_gradients(s, ["a", "b", "c"], 1.0) == 5.0
        assert np.allclose(s["a"].grad, [0.6, 0.0]) and np.allclose(s["b"].grad, [0.8])
        assert s["c"].grad is None

    def test_below_threshold_untouched(self):
        s = self.store()
        assert clip_gradients(s, ["a", "b"], 5.0) == 5.0
        assert s["a"].grad.tolist() == [3.0, 0.0] and s["b"].grad.tolist() == [4.0]

    def test_only_named_parameters(self):
        s = self.store()
        clip_gradients(s, ["a"], 1.0)
        assert np.allclose(s["a"].grad, [1.0, 0.0]) and s["b"].grad.tolist() == [4.0]

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=10), st.floats(1e-3, 10.0))
    def test_norm_bounded(self, values, max_norm):
        s = ParameterStore()
        s.add("w", np.zeros(len(values))).grad = np.array(values)
        clip_gradients(s, ["w"], max_norm)
        assert np.linalg.norm(s["w"].grad) <= max_norm * (1 + 1e-12)


class TestParameterStore:
    def test_sorted_iteration(self):
        s = ParameterStore(3)
        s.create("b", (2, 2))
        s.create("a", (2,))
        assert list(s) == ["a", "b"]

    def test_seed_determines_values_independent_of_order(self):
        s1, s2 = ParameterStore(7), ParameterStore(7)
        s1.create("x", (4, 3))
        s1.create("y", (3, 3))
        s2.create("y", (3, 3))
        s2.create("x", (4, 3))
        assert np.array_equal(s1["x"].data, s2["x"].data)
        assert not np.array_equal(ParameterStore(8).create("x", (4, 3)).data, s1["x"].data)

    def test_glorot_bounds_and_zero_bias(self):
        s = ParameterStore(0)
        w = s.create("w", (10, 30))
        assert np.abs(w.data).max() <= math.sqrt(6 / 40)
        assert np.all(s.create("b", (5,), init="zeros").data == 0)

    def test_duplicate_name(self):
        s = ParameterStore()
        s.create("w", (2,))
        with pytest.raises(KeyError):
            s.create("w", (2,))


class TestGradCheck:
    def test_quadratic(self):
        store = ParameterStore()
        store.add("theta", np.ones(100))
        err = grad_check(lambda s: total(square(s["theta"])), store)
        assert err < 1e-6

    def test_constant(self):
        store = ParameterStore()
        store.add("theta", np.ones(5))
        detail = grad_check_detail(lambda s: Tensor(3.0), store)
        assert detail == {"theta": 0.0}

    def test_detects_wrong_gradient(self):
        store = ParameterStore()
        store.add("theta", np.linspace(0.5, 2.0, 10))

        def bad(s):
            t = s["theta"]
            out = total(mul(t, t))
            true_bw = out._backward

            def wrong(g, pending):
                true_bw(g * 1.5, pending)

            out._backward = wrong
            return out

        assert grad_check(bad, store) > 0.1

    def test_nonfinite(self):
        store = ParameterStore()
        store.add("theta", np.ones(2))
        with pytest.raises(FloatingPointError):
            grad_check(lambda s: Tensor(np.inf), store)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_softmax_ce_chain(self, seed):
        rng = np.random.default_rng(seed)
        store = ParameterStore(seed)
        store.create("w", (5, 4))
        x = rng.normal(size=(3, 5))
        y = rng.integers(0, 4, size=3)
        err = grad_check(lambda s: softmax_cross_entropy(matmul(x, s["w"]), y)[0], store)
        assert err < 1e-4
