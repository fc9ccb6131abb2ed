import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mhrstyle.errors import ArgumentError, ConfigurationError, DimensionError
from mhrstyle.numeric import (ParamStore, adam_step, cross_entropy_loss, cross_entropy_with_grad,
                              finite_diff_check, log_softmax, matmul, softmax)

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


class TestMatmul:
    def test_identity(self):
        m = np.array([[1.5, -2.0], [0.25, 7.0]])
        np.testing.assert_array_equal(matmul(np.eye(2), m), m)

    def test_small_case(self):
        np.testing.assert_array_equal(matmul(np.array([[1, 2], [3, 4]]), np.array([[0], [1]])), [[2], [4]])

    def test_triple_loop_oracle(self):
        g = np.random.default_rng(0)
        a, b = g.standard_normal((7, 5)), g.standard_normal((5, 3))
        want = np.zeros((7, 3))
        for i in range(7):
            for j in range(3):
                for k in range(5):
                    want[i, j] += a[i, k] * b[k, j]
        np.testing.assert_allclose(matmul(a, b), want, rtol=1e-6)

    def test_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(np.ones((2, 3)), np.ones((2, 3)))


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(softmax(np.zeros(4)), [0.25] * 4)

    def test_ln3(self):
        np.testing.assert_allclose(softmax(np.array([np.log(3), 0.0])), [0.75, 0.25], atol=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ArgumentError):
            softmax(np.array([]))

    def test_extreme_logits_stay_finite(self):
        p = softmax(np.array([1e4, 0.0, -1e4]))
        assert np.all(np.isfinite(p)) and p[0] == 1.0

    @given(arrays(np.float64, st.integers(1, 12), elements=finite), finite)
    def test_sums_to_one_and_shift_invariant(self, z, c):
        p = softmax(z)
        assert abs(p.sum() - 1) < 1e-6 and np.all(p >= 0)
        np.testing.assert_allclose(softmax(z + c), p, atol=1e-9)

    def test_log_softmax_consistent(self):
        z = np.random.default_rng(1).standard_normal((5, 9))
        np.testing.assert_allclose(np.exp(log_softmax(z)), softmax(z), atol=1e-12)


class TestCrossEntropy:
    def test_confident_true_class(self):
        logits = np.zeros((3, 9))
        labels = np.array([0, 4, 8])
        logits[np.arange(3), labels] = 20.0
        assert 0 <= cross_entropy_loss(logits, labels) <= 1e-5

    def test_uniform_is_ln9(self):
        assert cross_entropy_loss(np.zeros((6, 9)), np.arange(6)) == pytest.approx(np.log(9), abs=1e-12)

    def test_per_sample_oracle(self):
        g = np.random.default_rng(2)
        logits, labels = g.standard_normal((32, 9)) * 3, g.integers(0, 9, 32)
        oracle = np.mean([np.log(np.sum(np.exp(r))) - r[y] for r, y in zip(logits, labels)])
        assert cross_entropy_loss(logits, labels) == pytest.approx(oracle, rel=1e-10)

    def test_out_of_range_label(self):
        with pytest.raises(ArgumentError):
            cross_entropy_loss(np.zeros((2, 9)), [0, 9])

    def test_gradient_matches_finite_difference(self):
        g = np.random.default_rng(3)
        logits, labels = g.standard_normal((4, 9)), g.integers(0, 9, 4)
        _, d = cross_entropy_with_grad(logits, labels)
        num = np.zeros_like(logits)
        for idx in np.ndindex(*logits.shape):
            e = np.zeros_like(logits)
            e[idx] = 1e-6
            num[idx] = (cross_entropy_loss(logits + e, labels) - cross_entropy_loss(logits - e, labels)) / 2e-6
        np.testing.assert_allclose(d, num, atol=1e-8)

    def test_weights_generalize_mean(self):
        g = np.random.default_rng(4)
        logits, labels = g.standard_normal((8, 9)), g.integers(0, 9, 8)
        a = cross_entropy_with_grad(logits, labels)
        b = cross_entropy_with_grad(logits, labels, np.full(8, 1 / 8))
        assert a[0] == pytest.approx(b[0])
        np.testing.assert_allclose(a[1], b[1])


def _store(value=0.0, group="base", trainable=True):
    s = ParamStore()
    s.add("p", np.array([value]), group, trainable)
    return s


class TestAdam:
    lr = {"base": 0.1, "adapter": 0.1, "routing": 0.1}

    def test_zero_grad_leaves_params(self):
        s = _store(1.0)
        adam_step(s, {"p": np.zeros(1)}, self.lr)
        assert s["p"][0] == 1.0

    def test_first_step_hand_trace(self):
        s = _store(0.0)
        adam_step(s, {"p": np.ones(1)}, self.lr)
        # m_hat = 1, v_hat = 1 -> step = lr / (1 + eps)
        assert s["p"][0] == pytest.approx(-0.1 / (1 + 1e-8), abs=1e-12)

    def test_second_step_hand_trace(self):
        s = _store(0.0)
        adam_step(s, {"p": np.ones(1)}, self.lr)
        adam_step(s, {"p": np.array([-2.0])}, self.lr)
        m = 0.9 * 0.1 + 0.1 * -2.0
        v = 0.999 * 0.001 + 0.001 * 4.0
        mh, vh = m / (1 - 0.9**2), v / (1 - 0.999**2)
        want = -0.1 / (1 + 1e-8) - 0.1 * mh / (np.sqrt(vh) + 1e-8)
        assert s["p"][0] == pytest.approx(want, abs=1e-12)

    def test_frozen_param_unchanged(self):
        s = _store(2.0, trainable=False)
        adam_step(s, {"p": np.array([5.0])}, self.lr)
        assert s["p"][0] == 2.0

    def test_group_rates_are_separate(self):
        s = ParamStore()
        s.add("a", np.zeros(1), "adapter")
        s.add("r", np.zeros(1), "routing")
        adam_step(s, {"a": np.ones(1), "r": np.ones(1)}, {"base": 0.0, "adapter": 1e-3, "routing": 1e-2})
        assert s["r"][0] == pytest.approx(10 * s["a"][0])

    def test_missing_group_rate(self):
        s = _store(group="routing")
        with pytest.raises(ConfigurationError):
            adam_step(s, {"p": np.ones(1)}, {"base": 0.1})

    def test_row_mask_only_updates_listed_rows(self):
        s = ParamStore()
        s.add("Z", np.zeros((3, 2)), "routing", trainable=np.array([1]))
        adam_step(s, {"Z": np.ones((3, 2))}, self.lr)
        assert np.all(s["Z"][[0, 2]] == 0) and np.all(s["Z"][1] < 0)


class TestFiniteDiff:
    def test_quadratic(self):
        s = _store(3.0)
        seen = {}

        def f(st_):
            seen.setdefault("grad", 2 * st_["p"].copy())
            return float(st_["p"][0] ** 2), {"p": 2 * st_["p"]}

        rep = finite_diff_check(f, s)
        assert seen["grad"][0] == 6.0 and rep.passed and rep.max_rel_error < 1e-8

    def test_constant_function(self):
        s = _store(1.0)
        rep = finite_diff_check(lambda st_: (4.0, {"p": np.zeros(1)}), s)
        assert rep.passed and rep.max_rel_error == 0.0

    def test_detects_wrong_gradient(self):
        s = _store(3.0)
        rep = finite_diff_check(lambda st_: (float(st_["p"][0] ** 2), {"p": 3 * st_["p"]}), s)
        assert not rep.passed and rep.worst_param == "p"

    @settings(max_examples=20, deadline=None)
    @given(st.floats(-5, 5), st.floats(-5, 5))
    def test_bilinear(self, a, b):
        s = ParamStore()
        s.add("x", np.array([a]), "base")
        s.add("y", np.array([b]), "adapter")

        def f(st_):
            x, y = st_["x"][0], st_["y"][0]
            return float(x * y + np.sin(x)), {"x": np.array([y + np.cos(x)]), "y": np.array([x])}

        assert finite_diff_check(f, s).passed
