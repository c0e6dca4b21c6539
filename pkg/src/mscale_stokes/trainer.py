"""Dataset construction, the minibatch training loop and error evaluation."""
from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape, Var, backprop
from .config import EvalSet, RunConfig
from .errors import UsageError
from .geometry import RectWithHoles, sample_boundary, sample_interior
from .loss import TERMS, PenaltyParams, loss_terms
from .net import AUX_DIMS, FieldSet, MLPArch, MscaleNet
from .optim import AdamState, AlphaAdapter, adam_step
from .problems import StokesProblem, make_problem

__all__ = [
    "Datasets",
    "TrainState",
    "EpochRecord",
    "TrainingDiverged",
    "problem_from_config",
    "build_datasets",
    "eval_points",
    "init_state",
    "run_epoch",
    "evaluate_errors",
    "train",
    "profile_line",
]

log = logging.getLogger(__name__)

OUT_DIMS = {"u": 2, "p": 1, "q": 2}


class TrainingDiverged(RuntimeError):
    """Raised when the loss becomes non-finite; ``record`` holds the diagnostics."""

    def __init__(self, message: str, record: dict):
        super().__init__(message)
        self.record = record


@dataclass
class Datasets:
    interior: np.ndarray
    interior_f: np.ndarray
    interior_div_f: np.ndarray
    boundary: np.ndarray
    boundary_normals: np.ndarray
    boundary_g: np.ndarray
    eval: np.ndarray


@dataclass
class TrainState:
    fields: FieldSet
    adam: dict[str, AdamState]
    epoch: int = 0          # completed epochs
    alpha: float = 1.0


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    alpha: float
    loss_total: float
    terms: dict[str, float | None] = field(default_factory=dict)
    err_u: float | None = None
    err_p: float | None = None
    wall_seconds: float | None = None


def deterministic_mode(config: RunConfig) -> bool:
    return config.training.deterministic or os.environ.get("DETERMINISTIC") == "1"


def problem_from_config(config: RunConfig) -> StokesProblem:
    p = config.problem
    return make_problem(p.name, nu=p.nu, freqs=p.freqs, domain=config.domain.build())


def eval_points(domain: RectWithHoles, spec: EvalSet, seed: int) -> np.ndarray:
    """Cell-centred ``nx`` x ``ny`` grid (fluid cells only) or a random fluid sample."""
    if spec.kind == "grid":
        xs = domain.xmin + (np.arange(spec.nx) + 0.5) * (domain.xmax - domain.xmin) / spec.nx
        ys = domain.ymin + (np.arange(spec.ny) + 0.5) * (domain.ymax - domain.ymin) / spec.ny
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
        return pts[domain.contains(pts)]
    return sample_interior(domain, spec.count, np.random.default_rng(seed))


def build_datasets(config: RunConfig, problem: StokesProblem) -> Datasets:
    """Sample the fixed training sets once and precompute forcing and boundary data."""
    tr = config.training
    rng = np.random.default_rng(tr.seeds.sampling)
    domain = problem.domain
    interior = sample_interior(domain, tr.interior_points, rng)
    boundary = sample_boundary(domain, tr.boundary_points, rng)
    return Datasets(
        interior=interior,
        interior_f=problem.forcing(interior),
        interior_div_f=problem.div_forcing(interior),
        boundary=boundary.points,
        boundary_normals=boundary.normals,
        boundary_g=problem.g(boundary.points),
        eval=eval_points(domain, tr.eval_set, tr.seeds.evaluation),
    )


def build_fields(config: RunConfig, rng: np.random.Generator) -> FieldSet:
    variant = config.loss.variant
    dims = dict(OUT_DIMS)
    if variant in AUX_DIMS:
        dims["aux"] = AUX_DIMS[variant]
    nets = {}
    for name in ("u", "p", "q", "aux"):
        spec = config.networks.get(name)
        if spec is None or name not in dims:
            continue
        if name == "q" and variant in ("VP", "wVP_noPoisson"):
            continue
        arch = MLPArch(dims[name], spec.hidden_layers, spec.hidden_width)
        nets[name] = MscaleNet.create(arch, spec.scales, rng)
    fields = FieldSet(**nets)
    fields.check(variant)
    return fields


def init_state(config: RunConfig) -> TrainState:
    rng = np.random.default_rng(config.training.seeds.init)
    fields = build_fields(config, rng)
    a = config.training.adam
    adam = {name: AdamState.zeros(net.num_params, beta1=a.beta1, beta2=a.beta2, eps=a.eps)
            for name, net in fields.trainable()}
    return TrainState(fields, adam, 0, config.loss.alpha)


def run_epoch(state: TrainState, data: Datasets, config: RunConfig,
              problem: StokesProblem) -> dict[str, float | None]:
    """One pass over the interior set; returns epoch-mean loss terms.

    The interior set is reshuffled every epoch (leftover points beyond the
    last full batch are skipped); each step draws an independent boundary
    batch with replacement.  Shuffling is seeded by ``(seed, epoch)`` so a
    resumed run replays exactly.
    """
    tr = config.training
    lr = tr.schedule.lr_at(state.epoch)
    penalties = PenaltyParams(state.alpha, config.loss.beta)
    rng = np.random.default_rng([tr.seeds.shuffling, state.epoch])
    order = rng.permutation(len(data.interior))
    steps = len(data.interior) // tr.interior_batch
    sums = dict.fromkeys(TERMS + ("total",), 0.0)
    present = set()
    for step in range(steps):
        idx = order[step * tr.interior_batch:(step + 1) * tr.interior_batch]
        bidx = rng.integers(0, len(data.boundary), size=tr.boundary_batch)
        tape = Tape()
        bundle = loss_terms(config.loss.variant, state.fields, problem,
                            data.interior[idx], data.boundary[bidx], penalties, tape,
                            f=data.interior_f[idx], div_f=data.interior_div_f[idx],
                            g=data.boundary_g[bidx])
        values = bundle.values()
        if not math.isfinite(values["total"]):
            raise TrainingDiverged(
                f"non-finite loss at epoch {state.epoch + 1}, step {step}",
                {"epoch": state.epoch + 1, "step": step, **values})
        for k, v in values.items():
            if v is not None:
                sums[k] += v
                present.add(k)
        if isinstance(bundle.total, Var):
            grad = backprop(bundle.total)
            for name, net in state.fields.trainable():
                adam_step(state.adam[name], net.flat, net.gradient(tape, grad), lr)
        tape.release()
    state.epoch += 1
    return {k: (sums[k] / steps if k in present else None) for k in sums}


def evaluate_errors(fields: FieldSet, problem: StokesProblem, pts) -> tuple[float, float]:
    """Root-mean-square velocity (Euclidean) and pressure errors over ``pts``."""
    pts = np.asarray(pts, dtype=np.float64)
    if pts.ndim != 2 or len(pts) == 0:
        raise UsageError("evaluation needs a non-empty set of points")
    du = fields.u.values(pts) - problem.velocity(pts)
    dp = fields.p.values(pts)[:, 0] - problem.pressure(pts)
    return (float(np.sqrt(np.mean(np.sum(du * du, axis=1)))),
            float(np.sqrt(np.mean(dp * dp))))


def train(config: RunConfig, state: TrainState | None = None, problem: StokesProblem | None = None,
          data: Datasets | None = None, stop_at: int | None = None, on_epoch=None):
    """Train until ``config.training.epochs`` (or ``stop_at``) epochs are complete.

    Returns ``(history, state)``.  Passing a restored ``state`` resumes.
    """
    problem = problem or problem_from_config(config)
    data = data or build_datasets(config, problem)
    state = state or init_state(config)
    tr = config.training
    adapter = AlphaAdapter(alpha=state.alpha) if config.loss.alpha_adaptation else None
    deterministic = deterministic_mode(config)
    last = tr.epochs if stop_at is None else min(stop_at, tr.epochs)
    history: list[EpochRecord] = []
    while state.epoch < last:
        t0 = time.perf_counter()
        lr = tr.schedule.lr_at(state.epoch)
        alpha = state.alpha
        terms = run_epoch(state, data, config, problem)
        k = state.epoch
        rec = EpochRecord(k, lr, alpha, terms.pop("total"), terms)
        check = adapter is not None and adapter.is_check_epoch(k)
        if k % tr.eval_every == 0 or check:
            rec.err_u, rec.err_p = evaluate_errors(state.fields, problem, data.eval)
        if check:
            state.alpha = adapter.adapt(rec.err_u, rec.err_p)
        if not deterministic:
            rec.wall_seconds = time.perf_counter() - t0
        history.append(rec)
        log.info("epoch %d lr %.3g loss %.6g err_u %s err_p %s", k, lr, rec.loss_total,
                 rec.err_u, rec.err_p)
        if on_epoch is not None:
            on_epoch(rec, state)
    return history, state


def profile_line(fields: FieldSet, problem: StokesProblem, y: float, n: int):
    """Fields along the horizontal line at height ``y``.

    Returns ``(rows, excluded)``: rows of ``(x1, u1, u1_exact, u2, u2_exact, p, p_exact)``
    and the abscissae dropped because they fall inside a hole.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    d = problem.domain
    xs = np.linspace(d.xmin, d.xmax, n)
    pts = np.stack([xs, np.full(n, float(y))], axis=-1)
    bad = d.in_hole(pts)
    pts = pts[~bad]
    u, ue = fields.u.values(pts), problem.velocity(pts)
    p, pe = fields.p.values(pts)[:, 0], problem.pressure(pts)
    rows = np.column_stack([pts[:, 0], u[:, 0], ue[:, 0], u[:, 1], ue[:, 1], p, pe])
    return rows, xs[bad]
