"""Sine-activated dense networks and their multi-scale sums."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .autodiff import Jet2, Tape, jet_seed, record, stack_jets
from .errors import ConfigError

__all__ = [
    "MLPArch",
    "DenseParams",
    "MscaleNet",
    "FieldSet",
    "init_params",
    "mlp_forward",
    "mscale_forward",
    "parse_scales",
]


@dataclass(frozen=True)
class MLPArch:
    out_dim: int
    hidden_layers: int
    hidden_width: int
    in_dim: int = 2
    activation: str = "sine"

    def __post_init__(self):
        if self.in_dim != 2:
            raise ConfigError(f"in_dim must be 2, got {self.in_dim}")
        if self.hidden_layers < 1 or self.hidden_width < 1 or self.out_dim < 1:
            raise ConfigError(f"invalid network size {self}")
        if self.activation != "sine":
            raise ConfigError(f"unsupported activation {self.activation!r}")

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        """Weight shapes ``(fan_out, fan_in)`` from input to output."""
        widths = [self.in_dim] + [self.hidden_width] * self.hidden_layers + [self.out_dim]
        return [(widths[k + 1], widths[k]) for k in range(len(widths) - 1)]

    @property
    def num_params(self) -> int:
        return sum(m * k + m for m, k in self.layer_shapes)


class DenseParams:
    """Weights and biases of one MLP stored as views into a flat float64 buffer.

    The flat layout is ``W0, b0, W1, b1, ...`` with row-major weights.
    """

    def __init__(self, arch: MLPArch, flat: np.ndarray | None = None):
        if flat is None:
            flat = np.zeros(arch.num_params)
        if flat.shape != (arch.num_params,) or flat.dtype != np.float64:
            raise ConfigError(
                f"parameter buffer of shape {flat.shape} does not match {arch.num_params} slots"
            )
        self.arch = arch
        self.flat = flat
        self.layers: list[tuple[np.ndarray, np.ndarray]] = []
        pos = 0
        for m, k in arch.layer_shapes:
            W = flat[pos:pos + m * k].reshape(m, k)
            pos += m * k
            b = flat[pos:pos + m]
            pos += m
            self.layers.append((W, b))


def init_params(arch: MLPArch, rng: np.random.Generator, out: np.ndarray | None = None,
                scheme: str = "glorot-uniform") -> DenseParams:
    """Glorot-uniform weights, zero biases."""
    if scheme != "glorot-uniform":
        raise ConfigError(f"unknown init scheme {scheme!r}")
    params = DenseParams(arch, out)
    for W, b in params.layers:
        fan_out, fan_in = W.shape
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        W[...] = rng.uniform(-limit, limit, size=W.shape)
        b[...] = 0.0
    return params


def _check_inputs(x_jets: Sequence[Jet2], arch: MLPArch):
    if len(x_jets) != arch.in_dim:
        raise ConfigError(f"network expects {arch.in_dim} input jets, got {len(x_jets)}")


# Stacked jet layout along axis 0: value, d1, d2 and optionally d11, d12, d22.
_PAIRS = ((1, 1), (1, 2), (2, 2))


def _stacked_forward(layers, Z: np.ndarray):
    """Sine MLP on stacked jet components ``Z`` of shape ``(C, ..., k)``.

    One matmul per layer covers every component; the bias touches the value only.
    Returns the stacked output and the per-layer cache used by the backward pass.
    """
    cache = []
    h = Z
    for W, b in layers[:-1]:
        A = h @ W.T
        A[0] += b
        s, c = np.sin(A[0]), np.cos(A[0])
        out = np.empty_like(A)
        out[0] = s
        out[1:] = c * A[1:]
        if len(A) == 6:
            for k, (i, j) in enumerate(_PAIRS):
                out[3 + k] -= s * A[i] * A[j]
        cache.append((h, A, s, c))
        h = out
    W, b = layers[-1]
    Y = h @ W.T
    Y[0] += b
    cache.append(h)
    return Y, cache


def _stacked_backward(layers, cache, dY: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Parameter gradients ``(dW, db)`` per layer for an output cotangent ``dY``."""
    grads = [None] * len(layers)

    def param_grads(dA, h):
        m, k = dA.shape[-1], h.shape[-1]
        return dA.reshape(-1, m).T @ h.reshape(-1, k), dA[0].reshape(-1, m).sum(axis=0)

    grads[-1] = param_grads(dY, cache[-1])
    dh = dY @ layers[-1][0]
    for layer in range(len(layers) - 2, -1, -1):
        h, A, s, c = cache[layer]
        dA = c * dh
        if len(A) > 1:
            dA[0] -= s * (A[1] * dh[1] + A[2] * dh[2])
        if len(A) == 6:
            for k, (i, j) in enumerate(_PAIRS):
                dA[0] -= s * A[3 + k] * dh[3 + k] + c * A[i] * A[j] * dh[3 + k]
                dA[i] -= s * A[j] * dh[3 + k]
                dA[j] -= s * A[i] * dh[3 + k]
        grads[layer] = param_grads(dA, h)
        if layer:
            dh = dA @ layers[layer][0]
    return grads


def _stacked_mlp(params: DenseParams, Z: np.ndarray, tape: Tape | None):
    """Stacked forward pass, recorded on ``tape`` as a single node when given."""
    Y, cache = _stacked_forward(params.layers, Z)
    if tape is None:
        return Y
    leaves = tape.watch(params)
    memo = {}

    def vjp(layer, which):
        def f(g):
            # every parent sees the same cotangent; run the backward pass once
            if memo.get("g") is not g:
                memo["g"], memo["grads"] = g, _stacked_backward(params.layers, cache, g)
            return memo["grads"][layer][which]
        return f

    parents = [(leaf, vjp(layer, which))
               for layer, pair in enumerate(leaves) for which, leaf in enumerate(pair)]
    return record(Y, parents)


def mlp_forward(params: DenseParams, x_jets: Sequence[Jet2], tape: Tape | None = None) -> list[Jet2]:
    """Evaluate one MLP on constant coordinate jets; returns one jet per output."""
    _check_inputs(x_jets, params.arch)
    h = stack_jets(x_jets)
    comps = [h.val, *h.grad, *(h.hess or ())]
    Y = _stacked_mlp(params, np.stack(comps), tape)
    jets = []
    for k in range(params.arch.out_dim):
        col = [Y[c, ..., k] for c in range(len(comps))]
        jets.append(Jet2(col[0], (col[1], col[2]), tuple(col[3:]) if len(col) == 6 else None))
    return jets


def mlp_values(params: DenseParams, x, tape: Tape | None = None):
    """Plain forward pass on points ``(N, 2)``; no spatial derivatives."""
    return _stacked_mlp(params, np.asarray(x, dtype=np.float64)[None], tape)[0]


def _sum_jets(parts: list[list[Jet2]]) -> list[Jet2]:
    total = parts[0]
    for more in parts[1:]:
        total = [a + b for a, b in zip(total, more)]
    return total


def mscale_forward(net: "MscaleNet", x_jets: Sequence[Jet2], tape: Tape | None = None) -> list[Jet2]:
    """Sum of sub-network outputs, sub-network ``i`` seeing ``scales[i] * x``."""
    if not net.scales:
        raise ConfigError("multi-scale network needs at least one scale")
    parts = []
    for alpha, sub in zip(net.scales, net.subnets):
        scaled = [j.scale(alpha) for j in x_jets]
        parts.append(mlp_forward(sub, scaled, tape))
    return _sum_jets(parts)


def parse_scales(spec) -> tuple[float, ...]:
    """Scales from a list of numbers or ``"pow2:M"`` / ``"linear:M"``."""
    if isinstance(spec, str):
        kind, _, count = spec.partition(":")
        try:
            m = int(count)
        except ValueError:
            raise ConfigError(f"bad scale spec {spec!r}") from None
        if m < 1:
            raise ConfigError(f"scale count must be positive in {spec!r}")
        if kind == "pow2":
            return tuple(float(2 ** i) for i in range(m))
        if kind == "linear":
            return tuple(float(i + 1) for i in range(m))
        raise ConfigError(f"bad scale spec {spec!r}")
    scales = tuple(float(s) for s in spec)
    if not scales or any(s <= 0 for s in scales):
        raise ConfigError(f"scales must be a non-empty list of positive reals, got {spec!r}")
    return scales


class MscaleNet:
    """``x -> sum_i f_i(scales[i] * x)`` with identically shaped sine MLPs ``f_i``.

    All sub-network parameters live in one contiguous buffer ``flat``.
    """

    def __init__(self, arch: MLPArch, scales: Sequence[float], flat: np.ndarray | None = None):
        self.arch = arch
        self.scales = tuple(float(s) for s in scales)
        if not self.scales:
            raise ConfigError("multi-scale network needs at least one scale")
        size = arch.num_params
        if flat is None:
            flat = np.zeros(size * len(self.scales))
        if flat.shape != (size * len(self.scales),):
            raise ConfigError(f"buffer of shape {flat.shape} does not fit {len(self.scales)} subnets")
        self.flat = flat
        self.subnets = [DenseParams(arch, flat[i * size:(i + 1) * size])
                        for i in range(len(self.scales))]

    @classmethod
    def create(cls, arch: MLPArch, scales: Sequence[float], rng: np.random.Generator) -> "MscaleNet":
        net = cls(arch, scales)
        for sub in net.subnets:
            init_params(arch, rng, out=sub.flat)
        return net

    @property
    def out_dim(self) -> int:
        return self.arch.out_dim

    @property
    def num_params(self) -> int:
        return self.flat.size

    def __call__(self, x, order: int = 1, tape: Tape | None = None) -> list[Jet2]:
        return mscale_forward(self, jet_seed(x, order), tape)

    def values(self, x, tape: Tape | None = None):
        x = np.asarray(x, dtype=np.float64)
        out = None
        for alpha, sub in zip(self.scales, self.subnets):
            y = mlp_values(sub, alpha * x, tape)
            out = y if out is None else out + y
        return out

    def gradient(self, tape: Tape, grad: np.ndarray) -> np.ndarray:
        """Slice of a tape gradient belonging to this network (zeros if unused)."""
        parts = []
        for sub in self.subnets:
            s = tape.slots(sub)
            parts.append(np.zeros(sub.flat.size) if s is None else grad[s])
        return np.concatenate(parts)


# Components of the auxiliary field per formulation.
AUX_DIMS = {"wVP": 1, "wVP_noPoisson": 1, "VSP": 3, "VgVP": 4}


@dataclass
class FieldSet:
    """Networks (or exact-solution stand-ins) for the fields of one formulation."""

    u: object
    p: object
    q: object | None = None
    aux: object | None = None

    def items(self) -> Iterator[tuple[str, object]]:
        for name in ("u", "p", "q", "aux"):
            net = getattr(self, name)
            if net is not None:
                yield name, net

    def trainable(self) -> Iterator[tuple[str, MscaleNet]]:
        for name, net in self.items():
            if isinstance(net, MscaleNet):
                yield name, net

    def check(self, variant: str):
        """Raise :class:`ConfigError` unless the fields match ``variant``."""
        if self.u.out_dim != 2 or self.p.out_dim != 1:
            raise ConfigError("u must have 2 outputs and p 1 output")
        if variant == "VP":
            if self.q is not None or self.aux is not None:
                raise ConfigError("VP uses only the u and p networks")
            return
        if variant not in AUX_DIMS:
            raise ConfigError(f"unknown loss variant {variant!r}")
        if self.aux is None or self.aux.out_dim != AUX_DIMS[variant]:
            raise ConfigError(f"{variant} needs an auxiliary network with {AUX_DIMS[variant]} outputs")
        if variant == "wVP_noPoisson":
            if self.q is not None:
                raise ConfigError("wVP_noPoisson drops the pressure-gradient network")
        elif self.q is None or self.q.out_dim != 2:
            raise ConfigError(f"{variant} needs a pressure-gradient network with 2 outputs")
