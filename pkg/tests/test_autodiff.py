import numpy as np
import pytest

from learning_diagrams import autodiff as ad
from learning_diagrams.autodiff import SGD, Adam, ParamStore, Tape, backward, optimizer_step
from learning_diagrams.errors import NonScalarOutput, ShapeMismatch, UnknownKey


def numeric_grad(fn, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = fn(x)
        x[idx] = old - h
        down = fn(x)
        x[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def check_vjp(op, *shapes, seed=0, positive=False):
    """Reverse-mode gradient of ``sum(w * op(inputs))`` against finite differences."""
    rng = np.random.default_rng(seed)
    inputs = [rng.uniform(0.5, 2.0, s) if positive else rng.standard_normal(s) for s in shapes]
    out_shape = op(*[ad.constant(x) for x in inputs]).shape
    weights = rng.standard_normal(out_shape)

    def scalar(*arrays):
        return float(np.sum(weights * op(*[ad.constant(a) for a in arrays]).value))

    tape = Tape()
    leaves = [tape.leaf(x) for x in inputs]
    total = ad.sum_(ad.mul(op(*leaves), ad.constant(weights)))
    grads = backward(tape, total)
    for i, x in enumerate(inputs):
        def partial(xi, i=i):
            args = list(inputs)
            args[i] = xi
            return scalar(*args)
        expected = numeric_grad(partial, x.copy())
        got = grads[leaves[i].node]
        denom = np.maximum(np.maximum(np.abs(got), np.abs(expected)), 1e-8)
        assert np.max(np.abs(got - expected) / denom) < 1e-6, (op, i)


@pytest.mark.parametrize("seed", range(3))
def test_binary_primitive_vjps(seed):
    rng = np.random.default_rng(seed)
    n, d, k = (int(v) for v in rng.integers(1, 5, size=3))
    check_vjp(ad.add, (n, d), (n, d), seed=seed)
    check_vjp(ad.sub, (n, d), (n, d), seed=seed)
    check_vjp(ad.mul, (n, d), (n, d), seed=seed)
    check_vjp(ad.matmul, (n, d), (d, k), seed=seed)
    check_vjp(ad.add_bias, (n, d), (d,), seed=seed)
    check_vjp(lambda a, b: ad.concat([a, b]), (n, d), (n, k), seed=seed)


@pytest.mark.parametrize("seed", range(3))
def test_unary_primitive_vjps(seed):
    rng = np.random.default_rng(10 + seed)
    n, d = (int(v) for v in rng.integers(1, 5, size=2))
    d += 1
    check_vjp(ad.relu, (n, d), seed=seed)
    check_vjp(ad.abs_, (n, d), seed=seed)
    check_vjp(lambda x: ad.softmax(x, 1.0), (n, d), seed=seed)
    check_vjp(lambda x: ad.softmax(x, 2.5), (n, d), seed=seed)
    check_vjp(lambda x: ad.log_softmax(x, 0.7), (n, d), seed=seed)
    check_vjp(ad.log, (n, d), seed=seed, positive=True)
    check_vjp(ad.exp, (n, d), seed=seed)
    check_vjp(ad.sqrt, (n, d), seed=seed, positive=True)
    check_vjp(lambda x: ad.scale(x, -1.7), (n, d), seed=seed)
    check_vjp(lambda x: ad.sum_(x, axis=1), (n, d), seed=seed)
    check_vjp(lambda x: ad.sum_(x, axis=0), (n, d), seed=seed)
    check_vjp(ad.sum_, (n, d), seed=seed)
    check_vjp(lambda x: ad.slice_(x, 1, d), (n, d), seed=seed)
    check_vjp(lambda x: ad.take_rows(x, np.array([0, 0, n - 1])), (n, d), seed=seed)


def test_primitive_examples():
    one = ad.constant(np.ones((1, 2)))
    assert ad.matmul(one, ad.constant(np.ones((2, 1)))).value.tolist() == [[2.0]]
    assert ad.relu(ad.constant([-1.0, 0.0, 3.0])).value.tolist() == [0.0, 0.0, 3.0]
    assert ad.softmax(ad.constant([[0.0, 0.0]])).value.tolist() == [[0.5, 0.5]]


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        ad.add(ad.constant(np.ones(2)), ad.constant(np.ones(3)))
    with pytest.raises(ShapeMismatch):
        ad.matmul(ad.constant(np.ones((2, 3))), ad.constant(np.ones((2, 3))))


def test_sum_gradient_is_ones():
    tape = Tape()
    x = tape.leaf(np.arange(6.0).reshape(2, 3))
    grads = backward(tape, ad.sum_(x))
    assert np.array_equal(grads[x.node], np.ones((2, 3)))


def test_softmax_cross_entropy_gradient():
    rng = np.random.default_rng(1)
    logits = rng.standard_normal((1, 4))
    target = np.eye(4)[[2]]
    tape = Tape()
    x = tape.leaf(logits)
    loss = -ad.sum_(ad.mul(ad.constant(target), ad.log(ad.softmax(x))))
    grads = backward(tape, loss)
    expected = np.exp(logits) / np.exp(logits).sum() - target
    assert np.allclose(grads[x.node], expected, rtol=1e-12, atol=1e-14)


def test_shared_leaf_accumulates():
    tape = Tape()
    w = tape.leaf(np.array([[0.5, -1.0]]))
    a = ad.constant(np.array([[2.0, 3.0]]))
    y = ad.sum_(ad.mul(w, a)) + ad.sum_(ad.mul(w, w))
    grads = backward(tape, y)
    assert np.allclose(grads[w.node], a.value + 2 * w.value)


def test_untouched_leaf_gets_zero_and_tape_cleared():
    tape = Tape()
    x = tape.leaf(np.ones(3))
    unused = tape.leaf(np.ones((2, 2)))
    grads = backward(tape, ad.sum_(x))
    assert np.array_equal(grads[unused.node], np.zeros((2, 2)))
    assert len(tape) == 0


def test_non_scalar_output():
    tape = Tape()
    x = tape.leaf(np.ones(3))
    with pytest.raises(NonScalarOutput):
        backward(tape, ad.relu(x))


def test_replay_is_bit_identical():
    rng = np.random.default_rng(2)
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))

    def run():
        tape = Tape()
        x, w = tape.leaf(a), tape.leaf(b)
        y = ad.sum_(ad.log_softmax(ad.relu(x @ w), 1.5))
        g = backward(tape, y)
        return y.value, g[x.node], g[w.node]

    first, second = run(), run()
    assert all(np.array_equal(p, q) for p, q in zip(first, second))


def test_sgd_step():
    store = ParamStore()
    store.set("k", {"w": np.array([1.0])})
    optimizer_step(store, {"k": {"w": np.array([2.0])}}, SGD(0.1))
    assert store["k"]["w"][0] == pytest.approx(0.8, abs=1e-15)


def test_adam_first_step_moves_by_lr():
    store = ParamStore()
    store.set("k", {"w": np.array([1.0, -3.0])})
    optimizer_step(store, {"k": {"w": np.array([0.7, 0.7])}}, Adam(0.01))
    # with m, v starting at zero the bias-corrected step is lr * g / (|g| + eps)
    assert np.allclose(store["k"]["w"], [1.0 - 0.01, -3.0 - 0.01], atol=1e-9)


def test_zero_gradient_leaves_params():
    for opt in (SGD(0.5), Adam(0.5)):
        store = ParamStore()
        store.set("k", {"w": np.array([1.0, 2.0])})
        optimizer_step(store, {"k": {"w": np.zeros(2)}}, opt)
        assert np.array_equal(store["k"]["w"], [1.0, 2.0])


def test_unknown_key():
    with pytest.raises(UnknownKey):
        optimizer_step(ParamStore(), {"missing": {"w": np.zeros(1)}}, SGD())
    with pytest.raises(UnknownKey):
        ParamStore()["missing"]


def test_aliases_share_storage():
    store = ParamStore()
    store.set("m", {"W0": np.zeros((2, 2))})
    via_one, via_two = store["m"], store["m"]
    optimizer_step(store, {"m": {"W0": np.ones((2, 2))}}, SGD(1.0))
    assert via_one["W0"] is via_two["W0"]
    assert np.array_equal(via_two["W0"], -np.ones((2, 2)))
