import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mscale_stokes.autodiff import Jet2, Tape, Var, backprop, jet_seed
from mscale_stokes.errors import DomainError, UsageError


def scalar_jet(val, grad, hess=None):
    f = np.float64
    return Jet2(f(val), tuple(map(f, grad)), None if hess is None else tuple(map(f, hess)))


def test_seed_second_order():
    j0, _ = jet_seed((0.3, 0.7), 2)
    assert j0.val == 0.3
    assert j0.grad == (1.0, 0.0)
    assert j0.hess == (0.0, 0.0, 0.0)


def test_seed_first_order_has_no_hessian():
    _, j1 = jet_seed((0.0, 0.0), 1)
    assert j1.val == 0.0
    assert j1.grad == (0.0, 1.0)
    assert j1.hess is None


def test_seed_gradients_form_identity_for_batches():
    pts = np.random.default_rng(0).normal(size=(7, 2))
    jets = jet_seed(pts, 1)
    for i in range(2):
        for j in range(2):
            np.testing.assert_array_equal(jets[i].grad[j], np.full(7, float(i == j)))


def test_sin_at_zero():
    out = scalar_jet(0, (1, 0), (0, 0, 0)).sin()
    assert out.val == 0 and out.grad == (1, 0) and out.hess == (0, 0, 0)


def test_square_of_x():
    x = jet_seed((3.0, 0.0), 2)[0]
    y = x * x
    assert y.val == 9 and y.grad == (6, 0) and y.hess == (2, 0, 0)


def test_exp_chain_rule_hand_values():
    out = scalar_jet(1, (2, 0), (4, 0, 0)).exp()
    e = math.e
    assert out.val == pytest.approx(e, rel=1e-15)
    assert out.grad[0] == pytest.approx(2 * e, rel=1e-15)
    assert out.hess[0] == pytest.approx(8 * e, rel=1e-15)


def test_exp_chain_rule_against_finite_differences():
    # inner g(x) = 1 + 2(x - 1/2) + 2(x - 1/2)^2 has value 1, slope 2, curvature 4 at 1/2
    def f(x):
        return math.exp(1 + 2 * (x - 0.5) + 2 * (x - 0.5) ** 2)

    x0, h = 0.5, 1e-4
    d1 = (f(x0 + h) - f(x0 - h)) / (2 * h)
    d2 = (f(x0 + h) - 2 * f(x0) + f(x0 - h)) / h ** 2
    out = scalar_jet(1, (2, 0), (4, 0, 0)).exp()
    assert out.grad[0] == pytest.approx(d1, rel=1e-7)
    assert out.hess[0] == pytest.approx(d2, rel=1e-6)


def test_division_by_zero_value_is_domain_error():
    a = scalar_jet(1, (1, 0))
    with pytest.raises(DomainError):
        a / scalar_jet(0, (1, 0))
    with pytest.raises(DomainError):
        a / 0.0


def test_mixed_orders_rejected():
    with pytest.raises(ValueError):
        scalar_jet(1, (1, 0)) + scalar_jet(1, (1, 0), (0, 0, 0))


# ---- random compositions vs Richardson-extrapolated finite differences ----

LEAVES = st.sampled_from(["x1", "x2", "c"])
UNARY = ("sin", "cos", "exp", "scale")
BINARY = ("add", "sub", "mul", "div")


def trees(max_leaves=8):
    def extend(children):
        return st.one_of(
            st.tuples(st.sampled_from(UNARY), children),
            st.tuples(st.sampled_from(BINARY), children, children),
        )
    return st.recursive(LEAVES, extend, max_leaves=max_leaves)


def evaluate(tree, x1, x2, const=0.7):
    """Evaluate a tree on floats or on jets with the same code path."""
    if tree == "x1":
        return x1
    if tree == "x2":
        return x2
    if tree == "c":
        return x1 * 0.0 + const
    op = tree[0]
    if op in UNARY:
        a = evaluate(tree[1], x1, x2)
        if op == "scale":
            return a * 1.3
        # squash the argument so exp stays bounded
        a = a * 0.5
        if op == "exp":
            return a.sin().exp() if isinstance(a, Jet2) else math.exp(math.sin(a))
        return getattr(a, op)() if isinstance(a, Jet2) else getattr(math, op)(a)
    a, b = evaluate(tree[1], x1, x2), evaluate(tree[2], x1, x2)
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    # denominator bounded away from zero
    den = (b * 0.5).sin() * 0.5 + 2.0 if isinstance(b, Jet2) else math.sin(b * 0.5) * 0.5 + 2.0
    return a / den


def richardson_first(f, x, h):
    d = lambda s: (f(x + s) - f(x - s)) / (2 * s)  # noqa: E731
    return (4 * d(h / 2) - d(h)) / 3


def richardson_second(f, x, h):
    d = lambda s: (f(x + s) - 2 * f(x) + f(x - s)) / (s * s)  # noqa: E731
    return (4 * d(h / 2) - d(h)) / 3


def close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(b))


@settings(max_examples=200, deadline=None)
@given(tree=trees(), x1=st.floats(-1.5, 1.5), x2=st.floats(-1.5, 1.5))
def test_random_compositions_match_finite_differences(tree, x1, x2):
    j1, j2 = jet_seed((x1, x2), 2)
    out = evaluate(tree, j1, j2)
    f = lambda a, b: evaluate(tree, a, b)  # noqa: E731

    g0 = richardson_first(lambda s: f(s, x2), x1, 1e-3)
    g1 = richardson_first(lambda s: f(x1, s), x2, 1e-3)
    assert close(float(out.grad[0]), g0, 1e-7)
    assert close(float(out.grad[1]), g1, 1e-7)

    h00 = richardson_second(lambda s: f(s, x2), x1, 1e-2)
    h11 = richardson_second(lambda s: f(x1, s), x2, 1e-2)
    # mixed partial: central difference of the x2-slope along x1
    h01 = richardson_first(lambda s: richardson_first(lambda t: f(s, t), x2, 1e-3), x1, 1e-2)
    assert close(float(out.hess[0]), h00, 1e-5)
    assert close(float(out.hess[2]), h11, 1e-5)
    assert close(float(out.hess[1]), h01, 1e-5)


def test_jets_are_deterministic():
    pts = np.random.default_rng(3).uniform(-1, 1, size=(50, 2))

    def run():
        x1, x2 = jet_seed(pts, 2)
        return ((x1 * x2).sin() / (x2.exp() + 1.0)).cos()

    a, b = run(), run()
    for u, v in zip((a.val, *a.grad, *a.hess), (b.val, *b.grad, *b.hess)):
        assert np.array_equal(u, v)


# ---- tape ----

def test_backprop_square():
    tape = Tape()
    theta = tape.param(np.array([3.0]))
    loss = (theta * theta).sum()
    np.testing.assert_array_equal(backprop(loss), [6.0])


def test_unused_parameter_gets_exact_zero():
    tape = Tape()
    params = [tape.param(np.array([float(k)])) for k in range(6)]
    loss = (params[1] * params[2] + params[0]).sum()
    grad = backprop(loss)
    assert grad[5] == 0.0
    np.testing.assert_array_equal(grad, [1.0, 2.0, 1.0, 0.0, 0.0, 0.0])


def test_backprop_on_empty_tape_is_usage_error():
    with pytest.raises(UsageError):
        backprop(1.0)
    tape = Tape()
    vec = tape.param(np.ones(3))
    with pytest.raises(UsageError):
        backprop(vec * 2.0)


def test_numpy_arrays_defer_to_var():
    tape = Tape()
    v = tape.param(np.array([1.0, 2.0]))
    out = np.array([3.0, 4.0]) * v
    assert isinstance(out, Var)
    np.testing.assert_array_equal(backprop(out.sum()), [3.0, 4.0])


def test_broadcast_gradients_reduce_to_parameter_shape():
    tape = Tape()
    b = tape.param(np.array([1.0, -1.0]))
    x = np.arange(6.0).reshape(3, 2)
    loss = ((x + b) * (x + b)).mean()
    expected = 2 * (x + [1.0, -1.0]).sum(axis=0) / 6
    np.testing.assert_allclose(backprop(loss), expected, rtol=1e-15)


def test_tape_gradient_of_jet_expression_matches_fd():
    rng = np.random.default_rng(1)
    w0 = rng.normal(size=3)
    pts = rng.uniform(-1, 1, size=(5, 2))

    def loss_value(w, tape=None):
        wv = tape.param(w) if tape is not None else w
        x1, x2 = jet_seed(pts, 2)
        y = (x1 * wv[0] + x2 * wv[1]).sin() * wv[2]
        lap = y.hess[0] + y.hess[2]
        r = lap * lap + y.grad[0] * y.grad[1]
        return r.mean() if tape is not None else float(np.mean(r))

    tape = Tape()
    grad = backprop(loss_value(w0, tape))
    fd = np.empty(3)
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1e-6
        fd[k] = (loss_value(w0 + e) - loss_value(w0 - e)) / 2e-6
    np.testing.assert_allclose(grad, fd, rtol=1e-6)
