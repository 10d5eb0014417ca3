import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from multimcd import autodiff as ad
from multimcd.autodiff import ParamBlock, Tensor

from gradcheck import RTOL, numerical_grad, relative_error


class TestForwardOps:
    def test_relu(self):
        out = ad.forward_op("relu", Tensor([-1.0, 0.0, 2.0]))
        np.testing.assert_array_equal(out.values, [0, 0, 2])

    def test_softmax_symmetric_row(self):
        out = ad.forward_op("softmax-rows", Tensor([[0.0, 0.0]]))
        np.testing.assert_array_equal(out.values, [[0.5, 0.5]])

    def test_softmax_is_overflow_safe(self):
        out = ad.softmax_rows(Tensor([[1000.0, 0.0], [-1000.0, -1000.0]]))
        assert np.all(np.isfinite(out.values))
        np.testing.assert_allclose(out.values, [[1, 0], [0.5, 0.5]])

    def test_matmul_zero(self):
        rng = np.random.default_rng(0)
        out = ad.matmul(Tensor(np.zeros((2, 3))), Tensor(rng.normal(size=(3, 4))))
        assert out.shape == (2, 4)
        assert not out.values.any()

    @pytest.mark.parametrize("kind,x,expected", [
        ("abs", [-2.0, 0.0, 3.0], [2, 0, 3]),
        ("negate", [1.0, -2.0], [-1, 2]),
        ("sum", [[1.0, 2.0], [3.0, 4.0]], 10.0),
        ("mean", [1.0, 2.0, 3.0, 6.0], 3.0),
        ("log", [1.0, np.e], [0.0, 1.0]),
    ])
    def test_unary_definitions(self, kind, x, expected):
        np.testing.assert_allclose(ad.forward_op(kind, Tensor(x)).values, expected)

    def test_scale_add_sub(self):
        a, b = Tensor([1.0, 2.0]), Tensor([3.0, 5.0])
        np.testing.assert_array_equal(ad.scale(a, 3).values, [3, 6])
        np.testing.assert_array_equal(ad.add(a, b).values, [4, 7])
        np.testing.assert_array_equal(ad.sub(a, b).values, [-2, -3])

    def test_matmul_shape_mismatch_names_op_and_shapes(self):
        with pytest.raises(ad.ShapeError, match=r"matmul.*\(2, 3\).*\(2, 3\)"):
            ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_add_shape_mismatch(self):
        with pytest.raises(ad.ShapeError):
            ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones(4)))

    def test_log_domain_error(self):
        with pytest.raises(ad.DomainError):
            ad.log(Tensor([1.0, 0.0]))
        with pytest.raises(ad.DomainError):
            ad.log(Tensor([-1.0]))

    def test_unknown_op(self):
        with pytest.raises(ad.ContractError):
            ad.forward_op("conv2d", Tensor([1.0]))

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (3, 4), elements=st.floats(-50, 50)))
    def test_outputs_finite_on_finite_inputs(self, x):
        t = Tensor(x, requires_grad=True)
        p = ad.softmax_rows(t)
        loss = ad.mean(ad.abs(ad.sub(p, ad.relu(t))))
        assert np.all(np.isfinite(p.values))
        np.testing.assert_allclose(p.values.sum(axis=1), 1.0, atol=1e-12)
        assert np.isfinite(loss.item())


class TestGraph:
    def test_trace_is_topological(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        w = Tensor(np.ones((2, 2)), requires_grad=True)
        loss = ad.mean(ad.relu(ad.matmul(x, w)))
        g = ad.trace(loss)
        assert g.ops() == ["matmul", "relu", "sum", "scale"]
        position = {n.id: i for i, n in enumerate(g.nodes)}
        for node in g.nodes:
            for inp in node.inputs:
                if inp.node is not None:
                    assert position[inp.node.id] < position[node.id]

    def test_constants_record_nothing(self):
        out = ad.relu(Tensor([1.0, -1.0]))
        assert out.node is None and not out.requires_grad


class TestBackward:
    def test_mean(self):
        x = Tensor([1.0, 2.0, 3.0, 4.0], requires_grad=True)
        grads = ad.backward(ad.mean(x))
        np.testing.assert_array_equal(grads[x], [0.25] * 4)
        np.testing.assert_array_equal(x.grad, [0.25] * 4)

    def test_sum_abs(self):
        x = Tensor([3.0, -2.0], requires_grad=True)
        ad.backward(ad.sum(ad.abs(x)))
        np.testing.assert_array_equal(x.grad, [1, -1])

    def test_abs_subgradient_at_zero(self):
        x = Tensor([0.0, 1.0], requires_grad=True)
        ad.backward(ad.sum(ad.abs(x)))
        np.testing.assert_array_equal(x.grad, [0, 1])

    def test_non_scalar_loss(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ad.ContractError):
            ad.backward(ad.relu(x))

    def test_unreachable_params_get_zero(self):
        x = Tensor([1.0], requires_grad=True)
        y = Tensor([[1.0, 2.0]], requires_grad=True)
        block = ParamBlock("b", [x, y])
        grads = ad.backward(ad.sum(ad.scale(x, 3)), [block])
        np.testing.assert_array_equal(grads[x], [3.0])
        np.testing.assert_array_equal(grads[y], [[0.0, 0.0]])

    def test_reused_tensor_accumulates(self):
        x = Tensor([2.0], requires_grad=True)
        ad.backward(ad.sum(ad.mul(x, x)))
        np.testing.assert_allclose(x.grad, [4.0])

    def test_bias_broadcast_gradient(self):
        h = Tensor(np.ones((5, 3)), requires_grad=True)
        b = Tensor(np.zeros(3), requires_grad=True)
        ad.backward(ad.sum(ad.add(h, b)))
        np.testing.assert_array_equal(b.grad, [5, 5, 5])

    def test_two_layer_mlp_matches_finite_differences(self):
        rng = np.random.default_rng(1234)
        x = rng.normal(size=(6, 4))
        w1, b1 = rng.normal(size=(4, 5)), rng.normal(size=5)
        w2, b2 = rng.normal(size=(5, 3)), rng.normal(size=3)
        labels = np.array([0, 2, 1, 1, 0, 2])

        # plain numpy forward, independent of the autodiff path
        def oracle():
            h = np.maximum(x @ w1 + b1, 0)
            z = h @ w2 + b2
            z = z - z.max(axis=1, keepdims=True)
            logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
            return -logp[np.arange(6), labels].mean()

        params = [Tensor(a, requires_grad=True) for a in (w1, b1, w2, b2)]
        h = ad.relu(ad.add(ad.matmul(Tensor(x), params[0]), params[1]))
        p = ad.softmax_rows(ad.add(ad.matmul(h, params[2]), params[3]))
        onehot = np.eye(3)[labels]
        loss = ad.negate(ad.mean(ad.sum(ad.mul(ad.log(p), onehot), axis=1)))
        assert loss.item() == pytest.approx(oracle(), rel=1e-12)

        grads = ad.backward(loss)
        numeric = numerical_grad(oracle, [w1, b1, w2, b2])
        assert relative_error([grads[t] for t in params], numeric) < RTOL


class TestSgdStep:
    def test_one_step(self):
        t = Tensor([1.0], requires_grad=True)
        ad.sgd_step([ParamBlock("p", [t])], {t: np.array([0.5])}, lr=0.1)
        assert t.values[0] == pytest.approx(0.95)

    def test_frozen_block_unchanged(self):
        t = Tensor([1.0, 2.0], requires_grad=True)
        block = ParamBlock("p", [t], trainable=False)
        before = block.snapshot()
        ad.sgd_step([block], {t: np.array([10.0, -3.0])}, lr=0.5)
        assert block.matches(before)

    def test_zero_lr(self):
        t = Tensor([1.0, 2.0], requires_grad=True)
        block = ParamBlock("p", [t])
        before = block.snapshot()
        ad.sgd_step([block], {t: np.array([1.0, 1.0])}, lr=0.0)
        assert block.matches(before)

    def test_shape_mismatch(self):
        t = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ad.ContractError):
            ad.sgd_step([ParamBlock("p", [t])], {t: np.ones(3)}, lr=0.1)

    def test_negative_lr(self):
        with pytest.raises(ad.ContractError):
            ad.sgd_step([], {}, lr=-1.0)

    def test_flipping_trainable_keeps_values(self):
        t = Tensor([1.0, 2.0], requires_grad=True)
        block = ParamBlock("p", [t])
        before = block.snapshot()
        block.trainable = False
        block.trainable = True
        assert block.matches(before)

    def test_freeze_after_backward(self):
        rng = np.random.default_rng(3)
        a = ParamBlock("a", [Tensor(rng.normal(size=(3, 2)), requires_grad=True)])
        b = ParamBlock("b", [Tensor(rng.normal(size=(2, 1)), requires_grad=True)], trainable=False)
        loss = ad.mean(ad.matmul(ad.matmul(Tensor(rng.normal(size=(4, 3))), a.tensors[0]), b.tensors[0]))
        before_a, before_b = a.snapshot(), b.snapshot()
        ad.sgd_step([a, b], ad.backward(loss, [a, b]), lr=0.1)
        assert b.matches(before_b)
        assert not a.matches(before_a)
