import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mscale_stokes.autodiff import Tape, backprop, jet_seed, stack_jets
from mscale_stokes.errors import ConfigError
from mscale_stokes.net import (DenseParams, FieldSet, MLPArch, MscaleNet, init_params,
                               mlp_forward, mscale_forward, parse_scales)


def fd_grad(f, x, h=1e-5):
    """Fourth-order central differences of a scalar function of a 2-vector."""
    out = np.empty(2)
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        out[j] = (-f(x + 2 * e) + 8 * f(x + e) - 8 * f(x - e) + f(x - 2 * e)) / (12 * h)
    return out


def test_init_is_deterministic():
    arch = MLPArch(2, 2, 50)
    a = init_params(arch, np.random.default_rng(7))
    b = init_params(arch, np.random.default_rng(7))
    assert np.array_equal(a.flat, b.flat)


def test_init_respects_glorot_bound_and_zero_biases():
    arch = MLPArch(2, 2, 50)
    params = init_params(arch, np.random.default_rng(0))
    W0, b0 = params.layers[0]
    assert W0.shape == (50, 2)
    assert np.abs(W0).max() <= np.sqrt(6 / 52)
    assert np.abs(W0).max() > 0.9 * np.sqrt(6 / 52)
    for _, b in params.layers:
        assert np.all(b == 0.0)


def test_layer_shapes_chain():
    arch = MLPArch(3, 4, 10)
    assert arch.layer_shapes == [(10, 2), (10, 10), (10, 10), (10, 10), (3, 10)]
    assert arch.num_params == 30 + 3 * 110 + 33


def test_zero_weights_output_bias():
    arch = MLPArch(1, 2, 5)
    params = DenseParams(arch)
    params.layers[-1][1][:] = 2.5
    (out,) = mlp_forward(params, jet_seed((0.3, -0.4), 2))
    assert out.val == 2.5
    assert out.grad == (0.0, 0.0)


def test_single_neuron_sine():
    params = DenseParams(MLPArch(1, 1, 1))
    params.layers[0][0][:] = [[1.0, 0.0]]
    params.layers[1][0][:] = [[1.0]]
    x1 = 0.8
    (out,) = mlp_forward(params, jet_seed((x1, 0.1), 2))
    assert out.val == pytest.approx(np.sin(x1), rel=1e-15)
    assert out.grad[0] == pytest.approx(np.cos(x1), rel=1e-15)
    assert out.grad[1] == 0.0
    assert out.hess[0] == pytest.approx(-np.sin(x1), rel=1e-15)


def test_random_mlp_gradient_matches_fd(rng):
    params = init_params(MLPArch(1, 1, 16), rng)
    net = MscaleNet(params.arch, [1.0], params.flat)
    f = lambda p: float(net.values(p[None])[0, 0])  # noqa: E731
    for x in rng.uniform(-1, 1, size=(5, 2)):
        (out,) = mlp_forward(params, jet_seed(x, 1))
        np.testing.assert_allclose(out.grad, fd_grad(f, x), rtol=1e-7, atol=1e-9)


@pytest.mark.parametrize("order", [1, 2])
def test_stacked_pass_matches_primitive_pass(rng, order):
    # reference: the same network written with generic jet primitives
    params = init_params(MLPArch(3, 2, 6), rng)
    params.flat[:] += 0.1 * rng.normal(size=params.flat.size)
    x = rng.uniform(-1, 1, size=(7, 2))

    def run(generic):
        tape = Tape()
        jets = jet_seed(x, order)
        if generic:
            layers = tape.watch(params)
            h = stack_jets(jets)
            for W, b in layers[:-1]:
                h = h.affine(W, b).sin()
            h = h.affine(*layers[-1])
            outs = [h[..., k] for k in range(3)]
        else:
            outs = mlp_forward(params, jets, tape)
        parts = [p for o in outs for p in (o.val, *o.grad, *(o.hess or ()))]
        weights = np.linspace(0.5, 1.5, len(parts))
        loss = sum(w * (p * p).sum() for w, p in zip(weights, parts))
        values = [np.asarray(getattr(p, "value", p)) for p in parts]
        return values, backprop(loss)[tape.slots(params)]

    fused_vals, fused_grad = run(False)
    prim_vals, prim_grad = run(True)
    for a, b in zip(fused_vals, prim_vals):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(fused_grad, prim_grad, rtol=1e-10, atol=1e-12)


def test_single_scale_one_reduces_to_mlp(rng):
    arch = MLPArch(2, 2, 8)
    net = MscaleNet.create(arch, [1.0], rng)
    pts = rng.uniform(-1, 1, size=(6, 2))
    a = mscale_forward(net, jet_seed(pts, 2))
    b = mlp_forward(net.subnets[0], jet_seed(pts, 2))
    for ja, jb in zip(a, b):
        assert np.array_equal(ja.val, jb.val)
        assert all(np.array_equal(u, v) for u, v in zip(ja.grad + ja.hess, jb.grad + jb.hess))


def test_two_identical_subnets_double(rng):
    arch = MLPArch(1, 2, 8)
    single = MscaleNet.create(arch, [1.0], rng)
    double = MscaleNet(arch, [1.0, 1.0], np.concatenate([single.flat, single.flat]))
    pts = rng.uniform(-1, 1, size=(6, 2))
    (a,) = single(pts, order=2)
    (b,) = double(pts, order=2)
    np.testing.assert_array_equal(b.val, 2 * a.val)
    for u, v in zip(b.grad + b.hess, a.grad + a.hess):
        np.testing.assert_array_equal(u, 2 * v)


@settings(max_examples=25, deadline=None)
@given(alpha=st.floats(0.25, 8.0), seed=st.integers(0, 2 ** 16))
def test_scale_chain_rule(alpha, seed):
    rng = np.random.default_rng(seed)
    arch = MLPArch(1, 2, 6)
    sub = MscaleNet.create(arch, [1.0], rng)
    scaled = MscaleNet(arch, [alpha], sub.flat)
    x = rng.uniform(-0.5, 0.5, size=2)
    (out,) = scaled(x, order=2)
    (base,) = sub(alpha * x, order=2)
    assert out.val == pytest.approx(float(base.val), rel=1e-13, abs=1e-14)
    g = lambda p: float(sub.values(p[None])[0, 0])  # noqa: E731
    np.testing.assert_allclose(out.grad, alpha * fd_grad(g, alpha * x, h=1e-4), rtol=1e-7, atol=1e-8)
    np.testing.assert_allclose(out.hess, alpha ** 2 * np.array(base.hess), rtol=1e-12, atol=1e-12)


def test_scale_two_value_and_gradient(rng):
    arch = MLPArch(1, 2, 8)
    g = MscaleNet.create(arch, [1.0], rng)
    net = MscaleNet(arch, [2.0], g.flat)
    x = np.array([0.3, -0.2])
    (out,) = net(x)
    gv = lambda p: float(g.values(p[None])[0, 0])  # noqa: E731
    assert out.val == pytest.approx(gv(2 * x), rel=1e-14)
    np.testing.assert_allclose(out.grad, 2 * fd_grad(gv, 2 * x), rtol=1e-7)


def test_output_layer_linearity(rng):
    arch = MLPArch(2, 2, 8)
    net = MscaleNet.create(arch, [1.0, 2.0], rng)
    pts = rng.uniform(-1, 1, size=(4, 2))
    before = net(pts, order=2)
    for sub in net.subnets:
        sub.layers[-1][0][...] *= 4.0
        sub.layers[-1][1][...] *= 4.0
    after = net(pts, order=2)
    for a, b in zip(after, before):
        for u, v in zip((a.val,) + a.grad + a.hess, (b.val,) + b.grad + b.hess):
            np.testing.assert_array_equal(u, 4.0 * v)


def test_parameter_count_matches_independent_mlps():
    arch = MLPArch(2, 3, 32)
    net = MscaleNet(arch, parse_scales("pow2:6"))
    assert net.num_params == 6 * arch.num_params
    # neuron budget of the comparison network: one MLP of width M*w
    assert MLPArch(2, 3, 6 * 32).hidden_width * 3 == 6 * 3 * 32


def test_parse_scales():
    assert parse_scales("pow2:4") == (1.0, 2.0, 4.0, 8.0)
    assert parse_scales("linear:3") == (1.0, 2.0, 3.0)
    assert parse_scales([1, 2.5]) == (1.0, 2.5)
    for bad in ([], [1, -1], "pow2:0", "cubic:3", "pow2:x"):
        with pytest.raises(ConfigError):
            parse_scales(bad)


def test_empty_scales_rejected():
    with pytest.raises(ConfigError):
        MscaleNet(MLPArch(1, 1, 4), [])


def test_shape_mismatch_is_config_error():
    params = DenseParams(MLPArch(1, 1, 4))
    with pytest.raises(ConfigError):
        mlp_forward(params, jet_seed((0.0, 0.0), 1)[:1])
    with pytest.raises(ConfigError):
        DenseParams(MLPArch(1, 1, 4), np.zeros(3))
    with pytest.raises(ConfigError):
        MLPArch(1, 0, 4)


def test_fieldset_checks_variant(rng):
    u = MscaleNet.create(MLPArch(2, 1, 4), [1.0], rng)
    p = MscaleNet.create(MLPArch(1, 1, 4), [1.0], rng)
    FieldSet(u, p).check("VP")
    with pytest.raises(ConfigError):
        FieldSet(u, p).check("wVP")
    with pytest.raises(ConfigError):
        FieldSet(p, u).check("VP")
