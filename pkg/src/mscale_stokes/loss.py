"""Least-squares residual losses for the first-order Stokes systems.

Every norm is a mean over the batch of the squared pointwise residual, so
the penalty weights do not depend on batch size.  Component conventions:

* vorticity ``w = d1 u2 - d2 u1`` and ``curl w = (d2 w, -d1 w)``;
* stress ``T`` is symmetric with outputs ``(T11, T12, T22)``;
* velocity gradient ``U`` has outputs ``(U11, U12, U21, U22)`` with
  ``Uij = dj ui``, and ``(div U)_i = sum_j dj Uij``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields as dc_fields

import numpy as np

from .autodiff import Tape, Var, mean, value_of
from .errors import ConfigError
from .net import FieldSet
from .problems import StokesProblem

__all__ = [
    "VARIANTS",
    "TERMS",
    "PenaltyParams",
    "ResidualBundle",
    "interior_residuals",
    "boundary_residual",
    "loss_terms",
    "total_loss",
]

VARIANTS = ("VP", "wVP", "VSP", "VgVP", "wVP_noPoisson")
TERMS = ("momentum", "poisson_div", "constitutive", "incompressibility",
         "pressure_gradient", "boundary")


@dataclass(frozen=True)
class PenaltyParams:
    alpha: float = 1.0
    beta: float = 100.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("penalty weights must be non-negative")


@dataclass
class ResidualBundle:
    momentum: object = None
    poisson_div: object = None
    constitutive: object = None
    incompressibility: object = None
    pressure_gradient: object = None
    boundary: object = None
    total: object = None

    def values(self) -> dict[str, float | None]:
        """Plain floats for every term (``None`` where the term is absent)."""
        out = {}
        for f in dc_fields(self):
            v = getattr(self, f.name)
            out[f.name] = None if v is None else float(np.asarray(value_of(v)))
        return out


def _sq(*parts):
    total = parts[0] * parts[0]
    for r in parts[1:]:
        total = total + r * r
    return mean(total)


def interior_residuals(kind: str, fields: FieldSet, problem: StokesProblem, pts,
                       tape: Tape | None = None, f=None, div_f=None) -> ResidualBundle:
    """Interior mean-square terms of the chosen formulation.

    ``f`` and ``div_f`` may be passed precomputed at ``pts``.
    """
    if kind not in VARIANTS:
        raise ConfigError(f"unknown loss variant {kind!r}")
    fields.check(kind)
    pts = np.asarray(pts, dtype=np.float64)
    nu = problem.nu
    if f is None:
        f = problem.forcing(pts)
    f1, f2 = f[:, 0], f[:, 1]
    out = ResidualBundle()

    u1, u2 = fields.u(pts, 2 if kind == "VP" else 1, tape)
    (p,) = fields.p(pts, 1, tape)
    out.incompressibility = _sq(u1.grad[0] + u2.grad[1])

    if kind == "VP":
        lap1 = u1.hess[0] + u1.hess[2]
        lap2 = u2.hess[0] + u2.hess[2]
        out.momentum = _sq(nu * lap1 - p.grad[0] + f1, nu * lap2 - p.grad[1] + f2)
        return out

    aux = fields.aux(pts, 1, tape)
    if fields.q is not None:
        if div_f is None:
            div_f = problem.div_forcing(pts)
        q1, q2 = fields.q(pts, 1, tape)
        out.poisson_div = _sq(q1.grad[0] + q2.grad[1] - div_f)
        out.pressure_gradient = _sq(p.grad[0] - q1.val, p.grad[1] - q2.val)
        g1, g2 = q1.val, q2.val
    else:
        g1, g2 = p.grad

    if kind in ("wVP", "wVP_noPoisson"):
        (w,) = aux
        out.momentum = _sq(nu * w.grad[1] + g1 - f1, -nu * w.grad[0] + g2 - f2)
        out.constitutive = _sq(u2.grad[0] - u1.grad[1] - w.val)
    elif kind == "VSP":
        T11, T12, T22 = aux
        s = math.sqrt(2 * nu)
        c = s / 2
        out.momentum = _sq(s * (T11.grad[0] + T12.grad[1]) - g1 + f1,
                           s * (T12.grad[0] + T22.grad[1]) - g2 + f2)
        d12 = c * (u1.grad[1] + u2.grad[0]) - T12.val
        # Frobenius norm of the symmetric mismatch counts the off-diagonal twice
        out.constitutive = _sq(2 * c * u1.grad[0] - T11.val, d12, d12, 2 * c * u2.grad[1] - T22.val)
    else:  # VgVP
        U11, U12, U21, U22 = aux
        out.momentum = _sq(nu * (U11.grad[0] + U12.grad[1]) - g1 + f1,
                           nu * (U21.grad[0] + U22.grad[1]) - g2 + f2)
        out.constitutive = _sq(u1.grad[0] - U11.val, u1.grad[1] - U12.val,
                               u2.grad[0] - U21.val, u2.grad[1] - U22.val)
    return out


def boundary_residual(fields: FieldSet, problem: StokesProblem, pts,
                      tape: Tape | None = None, g=None):
    """Mean of ``|u(x) - g(x)|^2`` over boundary points."""
    pts = np.asarray(pts, dtype=np.float64)
    if g is None:
        g = problem.g(pts)
    u = fields.u.values(pts, tape)
    if isinstance(u, Var):
        return _sq(u[:, 0] - g[:, 0], u[:, 1] - g[:, 1])
    return float(np.mean(np.sum((u - g) ** 2, axis=-1)))


def loss_terms(kind: str, fields: FieldSet, problem: StokesProblem, interior_pts, boundary_pts,
               penalties: PenaltyParams, tape: Tape | None = None, f=None, div_f=None,
               g=None) -> ResidualBundle:
    """All terms of the variant's loss plus their weighted ``total``."""
    out = interior_residuals(kind, fields, problem, interior_pts, tape, f=f, div_f=div_f)
    out.boundary = boundary_residual(fields, problem, boundary_pts, tape, g=g)
    total = out.momentum
    if out.poisson_div is not None:
        total = total + penalties.alpha * out.poisson_div
    for name in ("constitutive", "incompressibility", "pressure_gradient"):
        term = getattr(out, name)
        if term is not None:
            total = total + term
    out.total = total + penalties.beta * out.boundary
    return out


def total_loss(kind: str, fields: FieldSet, problem: StokesProblem, interior_pts, boundary_pts,
               penalties: PenaltyParams, tape: Tape | None = None, **precomputed):
    return loss_terms(kind, fields, problem, interior_pts, boundary_pts, penalties, tape,
                      **precomputed).total
