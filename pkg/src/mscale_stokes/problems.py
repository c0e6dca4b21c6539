"""Manufactured Stokes benchmarks with exact velocity and pressure.

All three benchmarks are sums of Kovasznay-type waves

    u1 = K - sum_k e^{lam x1} cos(phi_k)
    u2 = sum_k (lam / (2 m_k pi)) e^{lam x1} sin(phi_k) + (n_k / m_k) e^{lam x1} cos(phi_k)
    p  = e^{2 lam x1} / 2,      phi_k = 2 n_k pi x1 + 2 m_k pi x2,

with K the number of waves.  The Kovasznay flow is the single wave
``(n, m) = (0, 1)``.  The exact fields are written with jet arithmetic so the
forcing ``-nu Lap u + grad p`` comes out of second-order jets instead of
hand-derived formulas.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autodiff import Jet2, jet_seed
from .errors import DomainError
from .geometry import RectWithHoles, rectangle_domain, six_hole_domain
from .net import FieldSet

__all__ = [
    "FlowParams",
    "StokesProblem",
    "OracleField",
    "lambda_re",
    "kovasznay",
    "two_freq",
    "multi_freq",
    "forcing",
    "div_forcing",
    "make_problem",
    "oracle_fieldset",
]

MULTI_FREQS = ((35, 30), (40, 45))


def lambda_re(Re: float) -> float:
    """``Re/2 - sqrt(Re^2/4 + 4 pi^2)``, evaluated without cancellation."""
    if not Re > 0:
        raise DomainError(f"Reynolds number must be positive, got {Re}")
    return -4 * math.pi ** 2 / (Re / 2 + math.sqrt(Re ** 2 / 4 + 4 * math.pi ** 2))


@dataclass(frozen=True)
class FlowParams:
    Re: float
    freqs: tuple[tuple[int, int], ...] = ((0, 1),)
    lam: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "lam", lambda_re(self.Re))
        object.__setattr__(self, "freqs", tuple((int(n), int(m)) for n, m in self.freqs))
        for n, m in self.freqs:
            if m == 0:
                raise DomainError("wave number m must be non-zero")


def wave_flow(x_jets: Sequence[Jet2], params: FlowParams) -> tuple[Jet2, Jet2, Jet2]:
    x1, x2 = x_jets
    lam = params.lam
    e = x1.scale(lam).exp()
    u1 = None
    u2 = None
    for n, m in params.freqs:
        phase = x1.scale(2 * n * math.pi) + x2.scale(2 * m * math.pi)
        ec, es = e * phase.cos(), e * phase.sin()
        t1 = -ec
        t2 = es.scale(lam / (2 * m * math.pi)) + ec.scale(n / m)
        u1 = t1 if u1 is None else u1 + t1
        u2 = t2 if u2 is None else u2 + t2
    u1 = u1 + float(len(params.freqs))
    p = x1.scale(2 * lam).exp().scale(0.5)
    return u1, u2, p


def _as_jets(x, order=2):
    if isinstance(x, (list, tuple)) and x and isinstance(x[0], Jet2):
        return list(x)
    return jet_seed(x, order)


def kovasznay(x, params: FlowParams | None = None):
    """Kovasznay velocity and pressure jets; ``x`` is points or coordinate jets."""
    params = params or FlowParams(10.0)
    return wave_flow(_as_jets(x), FlowParams(params.Re, ((0, 1),)))


def two_freq(x, params: FlowParams):
    if len(params.freqs) != 1:
        raise ValueError("two_freq takes exactly one (n, m) pair")
    return wave_flow(_as_jets(x), params)


def multi_freq(x, params: FlowParams | None = None):
    params = params or FlowParams(10.0)
    return wave_flow(_as_jets(x), FlowParams(params.Re, MULTI_FREQS))


ExactFn = Callable[[list], tuple]


@dataclass(frozen=True)
class StokesProblem:
    """Viscosity, domain and exact solution ``exact(x_jets) -> (u1, u2, p)``."""

    name: str
    nu: float
    exact: ExactFn
    domain: RectWithHoles
    flow: FlowParams | None = None

    def exact_jets(self, x, order: int = 2):
        return self.exact(jet_seed(x, order))

    def velocity(self, x) -> np.ndarray:
        u1, u2, _ = self.exact_jets(x, 1)
        return np.stack([u1.val, u2.val], axis=-1)

    def pressure(self, x) -> np.ndarray:
        return self.exact_jets(x, 1)[2].val

    def g(self, x) -> np.ndarray:
        """Dirichlet data: trace of the exact velocity."""
        return self.velocity(x)

    def forcing(self, x) -> np.ndarray:
        return forcing(self, x)

    def div_forcing(self, x) -> np.ndarray:
        return div_forcing(self, x)


def forcing(problem: StokesProblem, x) -> np.ndarray:
    """``f = -nu Lap u + grad p`` from second-order jets of the exact fields."""
    u1, u2, p = problem.exact_jets(x, 2)
    lap = [u.hess[0] + u.hess[2] for u in (u1, u2)]
    return np.stack([-problem.nu * lap[0] + p.grad[0], -problem.nu * lap[1] + p.grad[1]], axis=-1)


def div_forcing(problem: StokesProblem, x) -> np.ndarray:
    """``div f = Lap p``; exact because the benchmark velocities are solenoidal."""
    p = problem.exact_jets(x, 2)[2]
    return p.hess[0] + p.hess[2]


def make_problem(name: str, nu: float = 0.1, freqs=None, domain: RectWithHoles | None = None) -> StokesProblem:
    """Benchmark by name: ``kovasznay``, ``two_freq`` or ``multi_freq``."""
    if not nu > 0:
        raise DomainError(f"viscosity must be positive, got {nu}")
    Re = 1.0 / nu
    if name == "kovasznay":
        flow = FlowParams(Re, ((0, 1),))
        domain = domain or rectangle_domain()
    elif name == "two_freq":
        flow = FlowParams(Re, tuple(freqs or ((50, 55),)))
        if len(flow.freqs) != 1:
            raise ValueError("two_freq takes exactly one (n, m) pair")
        domain = domain or six_hole_domain()
    elif name == "multi_freq":
        flow = FlowParams(Re, tuple(freqs or MULTI_FREQS))
        domain = domain or six_hole_domain()
    else:
        raise ValueError(f"unknown problem {name!r}")
    return StokesProblem(name, nu, lambda xj: wave_flow(xj, flow), domain, flow)


class OracleField:
    """Exact-solution stand-in for a network, with the same call interface."""

    def __init__(self, fn: Callable[[np.ndarray], list], out_dim: int, max_order: int = 1):
        self._fn = fn
        self.out_dim = out_dim
        self.max_order = max_order

    def __call__(self, x, order: int = 1, tape=None) -> list[Jet2]:
        if order > self.max_order:
            raise ValueError(f"oracle field only provides order-{self.max_order} jets")
        jets = self._fn(x)
        return [j.truncate() for j in jets] if order == 1 else jets

    def values(self, x, tape=None) -> np.ndarray:
        return np.stack([j.val for j in self(x, 1)], axis=-1)


def oracle_fieldset(problem: StokesProblem, variant: str) -> FieldSet:
    """Exact u, p plus derived q = grad p and the variant's auxiliary field."""
    nu = problem.nu

    def exact(x):
        return problem.exact_jets(x, 2)

    def u(x):
        return list(exact(x)[:2])

    def p(x):
        return [exact(x)[2]]

    def q(x):
        pj = exact(x)[2]
        return [pj.d(0), pj.d(1)]

    def omega(x):
        u1, u2, _ = exact(x)
        return [u2.d(0) - u1.d(1)]

    def stress(x):
        u1, u2, _ = exact(x)
        c = math.sqrt(2 * nu) / 2
        return [u1.d(0).scale(2 * c), (u1.d(1) + u2.d(0)).scale(c), u2.d(1).scale(2 * c)]

    def vel_grad(x):
        u1, u2, _ = exact(x)
        return [u1.d(0), u1.d(1), u2.d(0), u2.d(1)]

    fields = FieldSet(OracleField(u, 2, max_order=2), OracleField(p, 1, max_order=2))
    if variant == "VP":
        return fields
    aux = {"wVP": (omega, 1), "wVP_noPoisson": (omega, 1), "VSP": (stress, 3), "VgVP": (vel_grad, 4)}
    if variant not in aux:
        raise ValueError(f"unknown loss variant {variant!r}")
    fields.aux = OracleField(*aux[variant])
    if variant != "wVP_noPoisson":
        fields.q = OracleField(q, 2)
    return fields
