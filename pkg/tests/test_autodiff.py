"""Tensor library: forward semantics, backward rules, tape behavior."""

import numpy as np
import pytest

from stockbench import autodiff as ad
from stockbench.autodiff import ComputationTape, Tensor, finite_diff_check
from stockbench.errors import ContractError, DegenerateMaskError, DimensionMismatchError


def _rng(seed=0):
    return np.random.default_rng(seed)


# -- forward semantics --------------------------------------------------------


def test_matmul_identity():
    eye = Tensor(np.eye(2))
    b = Tensor([[3.0, 4.0], [5.0, 6.0]])
    np.testing.assert_array_equal(ad.matmul(eye, b).data, b.data)


def test_matmul_hand_case():
    a = Tensor([[1.0, 2.0]])
    b = Tensor([[3.0], [4.0]])
    np.testing.assert_array_equal(ad.matmul(a, b).data, [[11.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionMismatchError, match=r"\(2, 3\).*\(2, 2\)"):
        ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 2))))


def test_softmax_uniform():
    out = ad.softmax_lastdim(Tensor([0.0, 0.0, 0.0]))
    np.testing.assert_allclose(out.data, [1 / 3] * 3, atol=1e-15)


@pytest.mark.parametrize("x", [-3.0, 0.0, 7.5])
def test_softmax_masked_position_is_exactly_zero(x):
    out = ad.softmax_lastdim(Tensor([x, -np.inf]))
    assert out.data[0] == 1.0
    assert out.data[1] == 0.0


def test_softmax_matches_naive_formula():
    x = _rng(1).normal(size=8)
    naive = np.exp(x) / np.exp(x).sum()
    out = ad.softmax_lastdim(Tensor(x))
    np.testing.assert_allclose(out.data, naive, atol=1e-12)


def test_softmax_rows_sum_to_one_and_nonnegative():
    rng = _rng(2)
    for _ in range(50):
        x = Tensor(rng.normal(scale=10.0, size=(4, 6)))
        out = ad.softmax_lastdim(x).data
        assert (out >= 0).all()
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-12)


def test_softmax_fully_masked_slice_raises():
    with pytest.raises(DegenerateMaskError):
        ad.softmax_lastdim(Tensor([-np.inf, -np.inf]))


def test_layer_norm_constant_slice_collapses_to_bias():
    out = ad.layer_norm(
        Tensor([5.0, 5.0, 5.0]), Tensor(np.ones(3)), Tensor(np.zeros(3)), eps=1e-5
    )
    np.testing.assert_allclose(out.data, [0.0, 0.0, 0.0], atol=1e-12)


def test_layer_norm_standardized_input_is_fixed_point():
    out = ad.layer_norm(
        Tensor([1.0, -1.0]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-14
    )
    np.testing.assert_allclose(out.data, [1.0, -1.0], atol=1e-7)


def test_layer_norm_statistics():
    rng = _rng(3)
    x = Tensor(rng.normal(size=(5, 16)))
    out = ad.layer_norm(x, Tensor(np.ones(16)), Tensor(np.zeros(16)), eps=1e-12).data
    np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-9)
    np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-6)


def test_relu_and_sigmoid_values():
    np.testing.assert_array_equal(ad.relu(Tensor([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])
    assert ad.sigmoid(Tensor(0.0)).data == 0.5


def test_elementwise_dispatcher():
    x = Tensor([1.0, -2.0])
    np.testing.assert_array_equal(ad.elementwise(x, "relu").data, [1.0, 0.0])
    np.testing.assert_array_equal(ad.elementwise(x, "add", x).data, [2.0, -4.0])
    np.testing.assert_array_equal(ad.elementwise(x, "mul", x).data, [1.0, 4.0])
    np.testing.assert_array_equal(ad.elementwise(x, "scale", -3.0).data, [-3.0, 6.0])
    with pytest.raises(ContractError):
        ad.elementwise(x, "cosh")
    with pytest.raises(ContractError):
        ad.elementwise(x, "add")


# -- backward rules -----------------------------------------------------------


def test_backward_sum_gives_ones():
    x = Tensor(_rng(4).normal(size=(3, 2)), requires_grad=True)
    with ComputationTape() as tape:
        loss = ad.tsum(x)
    tape.backward(loss)
    np.testing.assert_array_equal(x.grad, np.ones((3, 2)))


def test_backward_quadratic():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    with ComputationTape() as tape:
        loss = ad.tsum(ad.mul(x, x))
    tape.backward(loss)
    np.testing.assert_allclose(x.grad, [2.0, 4.0, 6.0])


def test_backward_requires_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with ComputationTape() as tape:
        y = ad.mul(x, x)
        with pytest.raises(ContractError):
            tape.backward(y)


def test_backward_accumulates_across_calls():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with ComputationTape() as tape:
        loss = ad.tsum(x)
    tape.backward(loss)
    tape.backward(loss)
    np.testing.assert_array_equal(x.grad, [2.0, 2.0])


def test_backward_shared_input_counted_once_per_use():
    x = Tensor([3.0], requires_grad=True)
    with ComputationTape() as tape:
        y = ad.add(x, x)  # dy/dx = 2
        loss = ad.tsum(y)
    tape.backward(loss)
    np.testing.assert_array_equal(x.grad, [2.0])


def test_backward_is_deterministic():
    rng = _rng(5)
    data = rng.normal(size=(4, 4))
    grads = []
    for _ in range(2):
        x = Tensor(data.copy(), requires_grad=True)
        with ComputationTape() as tape:
            y = ad.softmax_lastdim(ad.matmul(x, x))
            loss = ad.tsum(ad.mul(y, y))
        tape.backward(loss)
        grads.append(x.grad.copy())
    assert grads[0].tobytes() == grads[1].tobytes()


def test_no_tape_no_recording():
    x = Tensor([1.0], requires_grad=True)
    y = ad.mul(x, x)
    assert y.requires_grad is False
    with pytest.raises(ContractError):
        ad.backward(y)


# -- finite-difference checks (the oracle, then the ops against it) ------------


def test_finite_diff_check_on_sum_is_exact():
    # linear function: only float rounding separates the two gradients
    report = finite_diff_check(ad.tsum, Tensor(_rng(6).normal(size=(3, 3))))
    assert report.passed
    assert report.max_rel_err < 1e-9


def test_finite_diff_check_softmax_sum_uses_absolute_fallback():
    # softmax rows sum to 1 regardless of input: true gradient is ~0.
    report = finite_diff_check(
        lambda t: ad.tsum(ad.softmax_lastdim(t)), Tensor(_rng(7).normal(size=6))
    )
    assert report.passed
    assert report.max_abs_err <= 1e-7


def test_finite_diff_check_reports_nonfinite():
    def bad(t):
        return ad.tsum(ad.scale(t, np.inf))

    report = finite_diff_check(bad, Tensor([1.0]))
    assert not report.passed
    assert "non-finite" in report.failure


GRAD_CASES = {
    "matmul": lambda t: ad.tsum(ad.matmul(t, Tensor(_rng(8).normal(size=(4, 3))))),
    "matmul_batched": lambda t: ad.tsum(
        ad.mul(m := ad.matmul(t, Tensor(_rng(9).normal(size=(2, 3, 3)))), m)
    ),
    "add_broadcast": lambda t: ad.tsum(ad.mul(s := ad.add(t, Tensor(_rng(10).normal(size=4))), s)),
    "mul": lambda t: ad.tsum(ad.mul(t, Tensor(_rng(11).normal(size=t.shape)))),
    "scale": lambda t: ad.tsum(ad.scale(t, -2.5)),
    "relu": lambda t: ad.tsum(ad.mul(r := ad.relu(t), r)),
    "gelu": lambda t: ad.tsum(ad.mul(g := ad.gelu(t), g)),
    "tanh": lambda t: ad.tsum(ad.mul(h := ad.tanh(t), h)),
    "sigmoid": lambda t: ad.tsum(ad.mul(s := ad.sigmoid(t), s)),
    "softmax": lambda t: ad.tsum(ad.mul(s := ad.softmax_lastdim(t), Tensor(np.arange(float(t.shape[-1]))))),
    "layer_norm": lambda t: ad.tsum(
        ad.mul(
            y := ad.layer_norm(t, Tensor(np.linspace(0.5, 2.0, t.shape[-1])), Tensor(np.linspace(-1, 1, t.shape[-1])), eps=1e-5),
            y,
        )
    ),
    "mean_axis": lambda t: ad.tsum(ad.mul(m := ad.tmean(t, axis=-1), m)),
    "reshape_transpose": lambda t: ad.tsum(
        ad.mul(r := ad.transpose(ad.reshape(t, (t.size // 2, 2)), (1, 0)), r)
    ),
    "concat": lambda t: ad.tsum(ad.mul(c := ad.concat([t, ad.scale(t, 2.0)], axis=-1), c)),
    "getitem": lambda t: ad.tsum(ad.mul(g := t[1:, :2], g)),
}


@pytest.mark.parametrize("name", sorted(GRAD_CASES))
def test_gradients_match_finite_differences(name):
    rng = _rng(hash(name) % 2**31)
    f = GRAD_CASES[name]
    for trial in range(20):
        if name in ("matmul", "add_broadcast"):
            shape = (3, 4)
        elif name == "matmul_batched":
            shape = (2, 4, 3)
        elif name in ("softmax",):
            shape = (6,)
        elif name == "relu":
            # keep points away from the kink, where finite differences lie
            shape = (3, 4)
        else:
            shape = (3, 4)
        x = rng.normal(size=shape)
        if name == "relu":
            x = np.where(np.abs(x) < 1e-3, x + 0.01, x)
        report = finite_diff_check(f, Tensor(x), tol=1e-4)
        assert report.passed, f"{name} trial {trial}: {report}"


def test_layer_norm_gradient_on_4x8_input():
    rng = _rng(12)
    gain = Tensor(rng.normal(size=8), requires_grad=True)
    bias = Tensor(rng.normal(size=8), requires_grad=True)

    report = finite_diff_check(
        lambda t: ad.tsum(ad.mul(y := ad.layer_norm(t, gain, bias, eps=1e-5), y)),
        Tensor(rng.normal(size=(4, 8))),
        tol=1e-4,
    )
    assert report.passed, str(report)


def test_gain_bias_gradients_via_finite_differences():
    rng = _rng(13)
    x_fixed = Tensor(rng.normal(size=(4, 8)))

    def wrt_gain(g):
        return ad.tsum(ad.mul(y := ad.layer_norm(x_fixed, g, Tensor(np.zeros(8)), 1e-5), y))

    def wrt_bias(b):
        return ad.tsum(ad.mul(y := ad.layer_norm(x_fixed, Tensor(np.ones(8)), b, 1e-5), y))

    assert finite_diff_check(wrt_gain, Tensor(rng.normal(size=8))).passed
    assert finite_diff_check(wrt_bias, Tensor(rng.normal(size=8))).passed
