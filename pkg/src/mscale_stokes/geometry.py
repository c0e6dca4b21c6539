"""Rectangle-minus-disks domains: membership, sampling, boundary quadrature."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError

__all__ = [
    "Disk",
    "RectWithHoles",
    "BoundarySamples",
    "rectangle_domain",
    "six_hole_domain",
    "contains",
    "sample_interior",
    "sample_boundary",
    "boundary_point",
    "compatibility_flux",
    "acceptance_rate",
]

# Outer edges in counter-clockwise order; hole k has component id 4 + k.
BOTTOM, RIGHT, TOP, LEFT = range(4)


@dataclass(frozen=True)
class Disk:
    cx: float
    cy: float
    r: float


@dataclass(frozen=True)
class RectWithHoles:
    xmin: float
    xmax: float
    ymin: float
    ymax: float
    holes: tuple[Disk, ...] = ()

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ConfigError("rectangle bounds must satisfy xmin < xmax and ymin < ymax")
        object.__setattr__(self, "holes", tuple(
            h if isinstance(h, Disk) else Disk(*map(float, h)) for h in self.holes))
        for k, d in enumerate(self.holes):
            if d.r <= 0:
                raise ConfigError(f"hole {k} has non-positive radius {d.r}")
            if not (self.xmin < d.cx - d.r and d.cx + d.r < self.xmax
                    and self.ymin < d.cy - d.r and d.cy + d.r < self.ymax):
                raise ConfigError(f"hole {k} is not strictly inside the rectangle")
            for j, e in enumerate(self.holes[:k]):
                if math.hypot(d.cx - e.cx, d.cy - e.cy) <= d.r + e.r:
                    raise ConfigError(f"holes {j} and {k} intersect")

    @property
    def rect_area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    @property
    def fluid_area(self) -> float:
        return self.rect_area - math.pi * sum(d.r ** 2 for d in self.holes)

    def component_lengths(self) -> np.ndarray:
        w, h = self.xmax - self.xmin, self.ymax - self.ymin
        return np.array([w, h, w, h] + [2 * math.pi * d.r for d in self.holes])

    def in_hole(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        inside = np.zeros(x.shape[:-1], dtype=bool)
        for d in self.holes:
            # closed disk: the circle itself is excluded from the fluid
            inside |= (x[..., 0] - d.cx) ** 2 + (x[..., 1] - d.cy) ** 2 <= d.r ** 2
        return inside

    def contains(self, x):
        """Open fluid region test for a point ``(2,)`` or points ``(N, 2)``."""
        x = np.asarray(x, dtype=np.float64)
        ok = ((x[..., 0] > self.xmin) & (x[..., 0] < self.xmax)
              & (x[..., 1] > self.ymin) & (x[..., 1] < self.ymax)
              & ~self.in_hole(x))
        return bool(ok) if ok.ndim == 0 else ok


def rectangle_domain(xmin=0.0, xmax=2.0, ymin=-0.5, ymax=1.5) -> RectWithHoles:
    return RectWithHoles(xmin, xmax, ymin, ymax)


SIX_HOLES = (
    Disk(0.5, 0.0, 0.2),
    Disk(1.25, -0.2, 0.15),
    Disk(1.3, 0.4, 0.18),
    Disk(0.5, 1.1, 0.2),
    Disk(1.2, 0.9, 0.18),
    Disk(1.6, 1.0, 0.15),
)


def six_hole_domain() -> RectWithHoles:
    """[0, 2] x [-0.5, 1.5] with the six cylindrical voids of the oscillatory benchmarks."""
    return RectWithHoles(0.0, 2.0, -0.5, 1.5, SIX_HOLES)


def contains(domain: RectWithHoles, x):
    return domain.contains(x)


def sample_interior(domain: RectWithHoles, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` i.i.d. uniform fluid points by rejection from the bounding rectangle."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    lo = np.array([domain.xmin, domain.ymin])
    hi = np.array([domain.xmax, domain.ymax])
    rate = domain.fluid_area / domain.rect_area
    chunks, have = [], 0
    while have < n:
        m = int((n - have) / rate * 1.05) + 16
        prop = rng.uniform(lo, hi, size=(m, 2))
        keep = prop[domain.contains(prop)]
        chunks.append(keep)
        have += len(keep)
    return np.concatenate(chunks)[:n]


def acceptance_rate(domain: RectWithHoles, proposals: int, rng: np.random.Generator) -> float:
    """Fraction of uniform rectangle proposals that land in the fluid."""
    lo = np.array([domain.xmin, domain.ymin])
    hi = np.array([domain.xmax, domain.ymax])
    accepted = 0
    for start in range(0, proposals, 200_000):
        m = min(200_000, proposals - start)
        accepted += int(np.count_nonzero(domain.contains(rng.uniform(lo, hi, size=(m, 2)))))
    return accepted / proposals


@dataclass(frozen=True)
class BoundarySamples:
    points: np.ndarray       # (N, 2)
    normals: np.ndarray      # (N, 2), unit, pointing out of the fluid
    component: np.ndarray    # (N,) component ids

    def __len__(self):
        return len(self.points)

    def __getitem__(self, idx) -> "BoundarySamples":
        return BoundarySamples(self.points[idx], self.normals[idx], self.component[idx])


def boundary_point(domain: RectWithHoles, component, t):
    """Point and outward normal at parameter ``t`` in [0, 1) along a component.

    Edges are traversed counter-clockwise; hole ``k`` (component ``4 + k``) is
    parametrized by angle ``2*pi*t`` from the positive x axis.
    """
    component = np.asarray(component)
    t = np.asarray(t, dtype=np.float64)
    component, t = np.broadcast_arrays(component, t)
    pts = np.empty(t.shape + (2,))
    nrm = np.zeros(t.shape + (2,))
    x0, x1, y0, y1 = domain.xmin, domain.xmax, domain.ymin, domain.ymax
    for cid, (px, py, nx, ny) in {
        BOTTOM: (x0 + t * (x1 - x0), np.full_like(t, y0), 0.0, -1.0),
        RIGHT: (np.full_like(t, x1), y0 + t * (y1 - y0), 1.0, 0.0),
        TOP: (x1 - t * (x1 - x0), np.full_like(t, y1), 0.0, 1.0),
        LEFT: (np.full_like(t, x0), y1 - t * (y1 - y0), -1.0, 0.0),
    }.items():
        sel = component == cid
        pts[sel, 0], pts[sel, 1] = px[sel], py[sel]
        nrm[sel] = (nx, ny)
    for k, d in enumerate(domain.holes):
        sel = component == 4 + k
        theta = 2 * np.pi * t[sel]
        c, s = np.cos(theta), np.sin(theta)
        pts[sel, 0] = d.cx + d.r * c
        pts[sel, 1] = d.cy + d.r * s
        # out of the fluid means into the disk
        nrm[sel, 0], nrm[sel, 1] = -c, -s
    return pts, nrm


def sample_boundary(domain: RectWithHoles, n: int, rng: np.random.Generator) -> BoundarySamples:
    """Length-weighted component choice, then a uniform position on it."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    lengths = domain.component_lengths()
    comp = rng.choice(len(lengths), size=n, p=lengths / lengths.sum())
    t = rng.uniform(size=n)
    pts, nrm = boundary_point(domain, comp, t)
    return BoundarySamples(pts, nrm, comp)


def compatibility_flux(domain: RectWithHoles, g: Callable[[np.ndarray], np.ndarray],
                       nodes: int | None = None, nodes_per_length: float = 100.0) -> float:
    """Composite midpoint rule for the net flux of ``g`` through the whole boundary.

    ``nodes`` (total) overrides ``nodes_per_length``; each component gets at
    least four nodes.
    """
    lengths = domain.component_lengths()
    if nodes is not None:
        nodes_per_length = nodes / lengths.sum()
    total = 0.0
    for cid, length in enumerate(lengths):
        m = max(4, int(round(length * nodes_per_length)))
        t = (np.arange(m) + 0.5) / m
        pts, nrm = boundary_point(domain, np.full(m, cid), t)
        vals = np.asarray(g(pts), dtype=np.float64)
        total += float(np.sum(vals * nrm)) * length / m
    return total
