"""Primitive-level checks for the autodiff substrate: analytic values,
per-primitive gradient checks, and tape behavior."""

import math

import numpy as np
import pytest
import scipy.sparse as sp

from metapoi import autodiff as ad
from metapoi.autodiff import NonFiniteError, ShapeError, Tape, Tensor, grad_check


def leaf(values) -> Tensor:
    return Tensor(np.asarray(values, dtype=np.float64))


class TestForwardValues:
    def test_sigmoid_at_zero(self):
        assert ad.sigmoid(leaf([[0.0]])).item() == 0.5

    def test_sigmoid_gradient_at_zero(self):
        x = leaf([[0.0]])
        with Tape() as tape:
            out = ad.sigmoid(x)
            tape.backward(out)
        assert x.grad[0, 0] == pytest.approx(0.25, abs=1e-15)

    def test_row_softmax_of_zeros_is_uniform(self):
        out = ad.row_softmax(leaf([[0.0, 0.0, 0.0]]))
        np.testing.assert_allclose(out.value, [[1 / 3, 1 / 3, 1 / 3]], atol=1e-15)

    def test_cross_entropy_uniform_two_logits(self):
        out = ad.cross_entropy_with_logits(leaf([[0.0, 0.0]]), [0])
        assert out.item() == pytest.approx(math.log(2), abs=1e-15)

    def test_leaky_relu_negative_side(self):
        out = ad.leaky_relu(leaf([[-2.0, 3.0]]), slope=0.01)
        np.testing.assert_allclose(out.value, [[-0.02, 3.0]])

    def test_relu_is_slope_zero(self):
        out = ad.relu(leaf([[-2.0, 3.0]]))
        np.testing.assert_allclose(out.value, [[0.0, 3.0]])

    def test_matmul_shape_mismatch_reports_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(1, 2\).*\(3, 1\)"):
            ad.matmul(leaf([[1.0, 2.0]]), leaf([[1.0], [2.0], [3.0]]))

    def test_non_finite_output_reports_op(self):
        with np.errstate(over="ignore"), pytest.raises(NonFiniteError, match="scale"):
            ad.scale(leaf([[1e308]]), 1e308)

    def test_weighted_sum_is_convex_combination(self):
        w = leaf([[0.25, 0.75]])
        rows = leaf([[1.0, 0.0], [0.0, 1.0]])
        np.testing.assert_allclose(ad.weighted_sum(w, rows).value, [[0.25, 0.75]])


class TestGradients:
    """Every primitive's backward rule against central differences."""

    def check(self, build, tensors, tol=1e-6):
        err = grad_check(build, tensors, eps=1e-5)
        assert err < tol, f"grad check failed: {err}"

    def test_matmul(self):
        rng = np.random.default_rng(0)
        a, b = leaf(rng.normal(size=(3, 4))), leaf(rng.normal(size=(4, 2)))
        self.check(lambda: ad.cross_entropy_with_logits(ad.matmul(a, b), [1, 0, 1]), [a, b])

    def test_sparse_apply_symmetric(self):
        rng = np.random.default_rng(1)
        m = rng.normal(size=(4, 4))
        sym = sp.csr_matrix((m + m.T) / 2)
        x = leaf(rng.normal(size=(4, 3)))
        self.check(lambda: ad.cross_entropy_with_logits(ad.sparse_apply(sym, x), [0, 1, 2, 0]), [x])

    def test_add_and_scale(self):
        rng = np.random.default_rng(2)
        a, b = leaf(rng.normal(size=(2, 3))), leaf(rng.normal(size=(2, 3)))
        self.check(lambda: ad.cross_entropy_with_logits(ad.add(ad.scale(a, 1.7), b), [2, 0]), [a, b])

    def test_add_bias(self):
        rng = np.random.default_rng(3)
        x, bias = leaf(rng.normal(size=(3, 4))), leaf(rng.normal(size=(1, 4)))
        self.check(lambda: ad.cross_entropy_with_logits(ad.add_bias(x, bias), [0, 3, 1]), [x, bias])

    def test_concat_rows_and_cols(self):
        rng = np.random.default_rng(4)
        a, b = leaf(rng.normal(size=(2, 2))), leaf(rng.normal(size=(2, 2)))

        def build():
            stacked = ad.concat([a, b], axis=0)  # 4 x 2
            wide = ad.concat([stacked, stacked], axis=1)  # 4 x 4
            return ad.cross_entropy_with_logits(wide, [0, 1, 2, 3])

        self.check(build, [a, b])

    def test_gather_rows_with_repeats(self):
        rng = np.random.default_rng(5)
        x = leaf(rng.normal(size=(4, 3)))
        self.check(
            lambda: ad.cross_entropy_with_logits(ad.gather_rows(x, [0, 2, 2, 1]), [0, 1, 2, 0]),
            [x],
        )

    def test_transpose(self):
        rng = np.random.default_rng(6)
        x = leaf(rng.normal(size=(2, 3)))
        self.check(lambda: ad.cross_entropy_with_logits(ad.transpose(x), [0, 1, 0]), [x])

    def test_sigmoid_leaky_softmax_chain(self):
        rng = np.random.default_rng(7)
        x = leaf(rng.normal(size=(2, 4)))

        def build():
            h = ad.leaky_relu(ad.sigmoid(x), slope=0.01)
            return ad.cross_entropy_with_logits(ad.row_softmax(h), [1, 3])

        self.check(build, [x])

    def test_cross_entropy(self):
        rng = np.random.default_rng(8)
        x = leaf(rng.normal(size=(3, 5)))
        self.check(lambda: ad.cross_entropy_with_logits(x, [4, 0, 2]), [x])

    def test_constant_function_has_zero_gradient(self):
        x = leaf([[1.0, 2.0]])
        c = leaf([[3.0, 4.0]])
        with Tape() as tape:
            out = ad.cross_entropy_with_logits(c, [0])
            tape.backward(out)
        assert x.grad is None

    def test_quadratic_grad_check_is_tight(self):
        rng = np.random.default_rng(9)
        x = leaf(rng.normal(size=(1, 6)))

        def build():
            return ad.matmul(x, ad.transpose(x))  # ||x||^2

        assert grad_check(build, [x], eps=1e-5) < 1e-9


class TestTape:
    def test_no_tape_means_no_recording(self):
        x = leaf([[1.0]])
        out = ad.scale(x, 2.0)
        assert out.grad is None and x.grad is None

    def test_backward_requires_scalar(self):
        x = leaf([[1.0, 2.0]])
        with Tape() as tape:
            out = ad.scale(x, 2.0)
            with pytest.raises(ShapeError):
                tape.backward(out)

    def test_gradient_accumulation_is_additive(self):
        x = leaf([[1.0, -1.0]])
        with Tape() as tape:
            l1 = ad.cross_entropy_with_logits(ad.scale(x, 1.0), [0])
            l2 = ad.cross_entropy_with_logits(ad.scale(x, 1.0), [1])
            tape.backward(ad.add(l1, l2))
        combined = x.grad.copy()

        x.grad = None
        parts = []
        for target in (0, 1):
            x.grad = None
            with Tape() as tape:
                loss = ad.cross_entropy_with_logits(ad.scale(x, 1.0), [target])
                tape.backward(loss)
            parts.append(x.grad.copy())
        np.testing.assert_allclose(combined, parts[0] + parts[1], atol=1e-15)

    def test_sparse_apply_matches_dense_matmul(self):
        rng = np.random.default_rng(10)
        for n in (5, 50, 200):
            m = rng.normal(size=(n, n)) * (rng.random((n, n)) < 0.1)
            m = (m + m.T) / 2
            a = sp.csr_matrix(m)
            x = leaf(rng.normal(size=(n, 7)))
            dense = leaf(a.toarray())
            np.testing.assert_allclose(
                ad.sparse_apply(a, x).value,
                ad.matmul(dense, x).value,
                atol=1e-12,
            )
