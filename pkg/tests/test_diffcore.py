import numpy as np
import pytest

from gradcheck import check, tape_grads
from mmdsculpt import diffcore as dc
from mmdsculpt.diffcore import DimensionError, Tape, Tensor


def _rng(seed):
    return np.random.default_rng(seed)


def _away_from_zero(x):
    # keep relu inputs off the kink so central differences stay one-sided-free
    return np.where(np.abs(x) < 0.1, x + 0.3 * np.sign(x + 1e-12), x)


# ------------------------------------------------------------------ examples

def test_matmul_examples():
    eye = Tensor(np.eye(2))
    m = Tensor([[1, 2], [3, 4]])
    np.testing.assert_array_equal(dc.matmul(eye, m).data, [[1, 2], [3, 4]])
    np.testing.assert_array_equal(dc.matmul(Tensor([[1, 2]]), Tensor([[3], [4]])).data, [[11]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        dc.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_elementwise_examples():
    np.testing.assert_array_equal(dc.exp(Tensor([0.0])).data, [1.0])
    np.testing.assert_array_equal(dc.relu(Tensor([-1.0, 2.0])).data, [0.0, 2.0])
    np.testing.assert_array_equal(dc.elementwise("relu", Tensor([-1.0, 2.0])).data, [0.0, 2.0])
    (g,) = tape_grads(lambda x: dc.reduce_sum(dc.exp(x)), np.array([0.0, 1.0]))
    np.testing.assert_allclose(g, [1.0, np.e], rtol=1e-15)


def test_elementwise_incompatible_shapes():
    with pytest.raises(DimensionError):
        dc.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))
    with pytest.raises(DimensionError):
        dc.mul(Tensor(np.ones(4)), Tensor(np.ones(3)))


def test_reduction_examples():
    assert dc.reduce_sum(Tensor([1.0, 2.0, 3.0])).item() == 6.0
    np.testing.assert_array_equal(dc.reduce_mean(Tensor([[1.0, 2.0], [3.0, 4.0]]), axis=0).data, [2.0, 3.0])
    (g,) = tape_grads(dc.reduce_mean, np.arange(4.0))
    np.testing.assert_array_equal(g, [0.25] * 4)


def test_reduction_bad_axis():
    with pytest.raises(ValueError):
        dc.reduce_sum(Tensor(np.ones((2, 2))), axis=2)


def test_pairwise_examples():
    a = Tensor([[0.0], [2.0]])
    np.testing.assert_array_equal(dc.pairwise_sq_dists(a, a).data, [[0, 4], [4, 0]])
    np.testing.assert_array_equal(dc.pairwise_sq_dists(Tensor([[1.0, 0.0]]), Tensor([[0.0, 1.0]])).data, [[2.0]])


def test_pairwise_sum_gradient():
    for seed in range(20):
        rng = _rng(seed)
        err = check(lambda a, b: dc.reduce_sum(dc.pairwise_sq_dists(a, b)),
                    rng.normal(size=(5, 3)), rng.normal(size=(4, 3)))
        assert err <= 1e-5


def test_pairwise_dim_mismatch():
    with pytest.raises(DimensionError):
        dc.pairwise_sq_dists(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 2))))


def test_backward_examples():
    x = Tensor(3.0, requires_grad=True)
    with Tape() as tape:
        pass
    dc.backward(tape, x)
    assert x.grad == 1.0
    (g,) = tape_grads(lambda t: dc.reduce_sum(dc.square(t)), np.array([1.0, 2.0]))
    np.testing.assert_array_equal(g, [2.0, 4.0])


def test_backward_rejects_non_scalar_and_foreign_loss():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = dc.exp(x)
    with pytest.raises(ValueError):
        dc.backward(tape, y)
    z = dc.reduce_sum(dc.exp(x))  # computed outside any tape
    with pytest.raises(ValueError, match="tape"):
        dc.backward(tape, z)


def test_nothing_recorded_outside_tape():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        dc.reduce_sum(x)
    n = len(tape)
    dc.reduce_sum(dc.exp(x))
    assert len(tape) == n == 1


def test_unreached_leaf_gets_zero_grad():
    x = Tensor(np.ones(2), requires_grad=True)
    y = Tensor(np.ones(2), requires_grad=True)
    with Tape() as tape:
        dead = dc.exp(y)  # noqa: F841  recorded but not part of the loss
        loss = dc.reduce_sum(x) + dc.reduce_sum(y) * 0.0
    dc.backward(tape, loss)
    np.testing.assert_array_equal(x.grad, [1.0, 1.0])
    np.testing.assert_array_equal(y.grad, [0.0, 0.0])


def test_broadcast_row_vector_gradient():
    (gm, gb) = tape_grads(lambda m, b: dc.reduce_sum(dc.square(m + b)),
                          np.arange(6.0).reshape(3, 2), np.array([0.5, -1.0]))
    np.testing.assert_allclose(gb, 2 * (np.arange(6.0).reshape(3, 2) + [0.5, -1.0]).sum(axis=0))
    assert gm.shape == (3, 2)


# ------------------------------------------------- finite-difference property

def _op_cases():
    """(name, builder, input generator) for every registered op."""
    def mat(rng, *shape):
        return rng.normal(size=shape)

    def spd(rng, k):
        a = rng.normal(size=(k, k))
        return a @ a.T + k * np.eye(k)

    return [
        ("add", lambda a, b: dc.reduce_sum(dc.square(a + b)), lambda r: (mat(r, 3, 4), mat(r, 3, 4))),
        ("add_row", lambda a, b: dc.reduce_sum(dc.square(a + b)), lambda r: (mat(r, 3, 4), mat(r, 4))),
        ("add_scalar", lambda a, b: dc.reduce_sum(dc.square(a + b)), lambda r: (mat(r, 2, 3), mat(r))),
        ("sub", lambda a, b: dc.reduce_sum(dc.square(a - b)), lambda r: (mat(r, 3, 2), mat(r, 1, 2))),
        ("mul", lambda a, b: dc.reduce_sum(a * b * a), lambda r: (mat(r, 4, 2), mat(r, 4, 2))),
        ("neg", lambda a: dc.reduce_sum(dc.square(-a)), lambda r: (mat(r, 5),)),
        ("exp", lambda a: dc.reduce_sum(dc.exp(a)), lambda r: (mat(r, 3, 3),)),
        ("relu", lambda a: dc.reduce_sum(dc.square(dc.relu(a))), lambda r: (_away_from_zero(mat(r, 4, 3)),)),
        ("square", lambda a: dc.reduce_sum(dc.square(a)), lambda r: (mat(r, 6),)),
        ("sigmoid", lambda a: dc.reduce_sum(dc.sigmoid(a) * a), lambda r: (mat(r, 3, 2),)),
        ("matmul", lambda a, b: dc.reduce_sum(dc.square(a @ b)), lambda r: (mat(r, 3, 4), mat(r, 4, 2))),
        ("transpose", lambda a, b: dc.reduce_sum(dc.square(a.T @ b)), lambda r: (mat(r, 3, 2), mat(r, 3, 4))),
        ("logdet", lambda a: dc.logdet(a), lambda r: (spd(r, 3),)),
        ("trace", lambda a: dc.trace(a @ a), lambda r: (mat(r, 3, 3),)),
        ("reduce_sum_axis", lambda a: dc.reduce_sum(dc.square(dc.reduce_sum(a, axis=0))), lambda r: (mat(r, 4, 3),)),
        ("reduce_mean_axis", lambda a: dc.reduce_sum(dc.square(dc.reduce_mean(a, axis=1))), lambda r: (mat(r, 4, 3),)),
        ("pairwise", lambda a, b: dc.reduce_sum(dc.exp(dc.pairwise_sq_dists(a, b) * -0.5)),
         lambda r: (mat(r, 4, 3), mat(r, 5, 3))),
    ]


@pytest.mark.parametrize("name,build,gen", _op_cases(), ids=[c[0] for c in _op_cases()])
def test_op_gradients_match_finite_differences(name, build, gen):
    for seed in range(20):
        err = check(build, *gen(_rng(seed)))
        assert err <= 1e-4, f"{name} seed {seed}: relative error {err:.2e}"


def test_pairwise_self_gradient_through_shared_input():
    # a is b: both vjp contributions land on the same leaf
    for seed in range(20):
        a = _rng(seed).normal(size=(5, 2))
        err = check(lambda t: dc.reduce_sum(dc.exp(dc.pairwise_sq_dists(t, t) * -0.5)), a)
        assert err <= 1e-4


# --------------------------------------------------------------- invariants

def test_pairwise_self_has_exact_zero_diagonal():
    for seed in range(20):
        a = Tensor(_rng(seed).normal(size=(30, 4)) * 1e3)
        d = dc.pairwise_sq_dists(a, a).data
        assert np.all(np.diag(d) == 0.0)
        assert np.all(d >= 0.0)


def test_backward_is_bit_deterministic():
    rng = _rng(7)
    a, b = rng.normal(size=(6, 3)), rng.normal(size=(3, 2))

    def run():
        return tape_grads(lambda x, w: dc.reduce_mean(dc.sigmoid(x @ w)), a, b)

    g1, g2 = run(), run()
    for x, y in zip(g1, g2):
        assert np.array_equal(x, y)


def test_logdet_rejects_non_positive_determinant():
    with pytest.raises(np.linalg.LinAlgError):
        dc.logdet(Tensor(-np.eye(1)))
