"""Run configuration: YAML documents, presets and validation."""
from __future__ import annotations

import copy
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .geometry import SIX_HOLES, Disk, RectWithHoles
from .loss import VARIANTS
from .net import parse_scales
from .optim import LRSchedule

__all__ = ["RunConfig", "PRESETS", "parse_config", "config_from_dict", "EvalSet"]


@dataclass(frozen=True)
class ProblemConfig:
    name: str = "kovasznay"
    nu: float = 0.1
    freqs: tuple | None = None


@dataclass(frozen=True)
class DomainConfig:
    rect: tuple[float, float, float, float] = (0.0, 2.0, -0.5, 1.5)
    holes: tuple[tuple[float, float, float], ...] = ()

    def build(self) -> RectWithHoles:
        return RectWithHoles(*self.rect, holes=tuple(Disk(*h) for h in self.holes))


@dataclass(frozen=True)
class NetConfig:
    scales: tuple[float, ...] = (1.0,)
    hidden_layers: int = 4
    hidden_width: int = 50


@dataclass(frozen=True)
class LossConfig:
    variant: str = "wVP"
    alpha: float = 1.0
    beta: float = 100.0
    alpha_adaptation: bool = False


@dataclass(frozen=True)
class EvalSet:
    kind: str = "grid"   # "grid" or "random"
    nx: int = 200
    ny: int = 200
    count: int = 34072

    @classmethod
    def parse(cls, text: str) -> "EvalSet":
        kind, _, rest = str(text).partition(":")
        try:
            if kind == "grid":
                nx, ny = (int(v) for v in rest.split(","))
                out = cls("grid", nx=nx, ny=ny)
            elif kind == "random":
                out = cls("random", count=int(rest))
            else:
                raise ValueError
        except ValueError:
            raise ConfigError(f"eval_set must be 'grid:NX,NY' or 'random:N', got {text!r}") from None
        if min(out.nx, out.ny, out.count) < 1:
            raise ConfigError(f"eval_set sizes must be positive in {text!r}")
        return out

    def __str__(self):
        return f"grid:{self.nx},{self.ny}" if self.kind == "grid" else f"random:{self.count}"


@dataclass(frozen=True)
class Seeds:
    init: int = 0
    sampling: int = 1
    shuffling: int = 2
    evaluation: int = 3


@dataclass(frozen=True)
class AdamConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 300
    interior_points: int = 50000
    boundary_points: int = 10000
    interior_batch: int = 1000
    boundary_batch: int = 400
    schedule: LRSchedule = field(default_factory=LRSchedule)
    adam: AdamConfig = field(default_factory=AdamConfig)
    seeds: Seeds = field(default_factory=Seeds)
    eval_every: int = 1
    eval_set: EvalSet = field(default_factory=EvalSet)
    deterministic: bool = False


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "runs/out"
    precision: int = 17


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    domain: DomainConfig = field(default_factory=DomainConfig)
    networks: dict = field(default_factory=dict)   # field name -> NetConfig
    loss: LossConfig = field(default_factory=LossConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    preset: str | None = None

    def to_dict(self) -> dict:
        """Self-contained document (no preset reference) that parses back to ``self``."""
        d = asdict(self)
        d.pop("preset")
        d["training"]["eval_set"] = str(self.training.eval_set)
        d["domain"]["rect"] = list(self.domain.rect)
        d["domain"]["holes"] = [list(h) for h in self.domain.holes]
        d["networks"] = {k: {"scales": list(v.scales), "hidden_layers": v.hidden_layers,
                             "hidden_width": v.hidden_width} for k, v in self.networks.items()}
        if self.problem.freqs is not None:
            d["problem"]["freqs"] = [list(f) for f in self.problem.freqs]
        return d


_RECT = [0.0, 2.0, -0.5, 1.5]
_HOLES = [[d.cx, d.cy, d.r] for d in SIX_HOLES]


def _nets(u, p, aux=None, q=None):
    return {"u": u, "p": p, "aux": aux or u, "q": q or p}


def _s5(problem, u_net, variant="wVP", interior=850621):
    pq = {"scales": "pow2:6", "hidden_layers": 8, "hidden_width": 50}
    return {
        "problem": problem,
        "domain": {"rect": _RECT, "holes": _HOLES},
        "networks": _nets(u_net, pq),
        "loss": {"variant": variant, "alpha": 2000.0, "beta": 100.0, "alpha_adaptation": True},
        "training": {"epochs": 1500, "interior_points": interior, "boundary_points": 140000,
                     "interior_batch": 10000, "boundary_batch": 2000,
                     "schedule": {"base_lr": 1e-3, "drop_every": 500, "drop_factor": 0.1},
                     "eval_every": 50,
                     "eval_set": "random:34072"},
    }


_S52 = _s5({"name": "multi_freq", "nu": 0.1},
           {"scales": "pow2:10", "hidden_layers": 8, "hidden_width": 120}, interior=425290)
_S52["training"]["interior_batch"] = 5000

PRESETS: dict[str, dict] = {
    "kovasznay-s4": {
        "problem": {"name": "kovasznay", "nu": 0.1},
        "domain": {"rect": _RECT, "holes": []},
        "networks": _nets({"scales": "pow2:6", "hidden_layers": 4, "hidden_width": 50},
                          {"scales": "pow2:6", "hidden_layers": 4, "hidden_width": 50}),
        "loss": {"variant": "wVP", "alpha": 1.0, "beta": 100.0, "alpha_adaptation": False},
        "training": {"epochs": 300, "interior_points": 50000, "boundary_points": 10000,
                     "interior_batch": 1000, "boundary_batch": 400,
                     "schedule": {"base_lr": 1e-3, "drop_every": 100, "drop_factor": 0.1},
                     "eval_every": 1,
                     "eval_set": "grid:200,200"},
    },
    "two-freq-s51": _s5({"name": "two_freq", "nu": 0.1, "freqs": [[50, 55]]},
                        {"scales": "pow2:11", "hidden_layers": 8, "hidden_width": 150}),
    "multi-freq-s52": _S52,
    "ablation-s53": {**copy.deepcopy(_S52), "loss": {**_S52["loss"], "variant": "wVP_noPoisson"}},
}

_FIELDS_FOR = {"VP": ("u", "p"), "wVP_noPoisson": ("u", "p", "aux")}
_SECTIONS = {
    "problem": ProblemConfig, "domain": DomainConfig, "loss": LossConfig,
    "training": TrainingConfig, "output": OutputConfig,
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _known(section: str, cls, raw) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(f"{section}: expected a mapping, got {type(raw).__name__}")
    allowed = set(cls.__dataclass_fields__)
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"{section}.{key}: unknown key")
    return dict(raw)


def _positive(path: str, value, integer=True):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    if value <= 0:
        raise ConfigError(f"{path}: must be positive, got {value!r}")


def config_from_dict(raw: dict) -> RunConfig:
    """Validate a raw document (after preset expansion) into a :class:`RunConfig`."""
    if not isinstance(raw, dict):
        raise ConfigError("config document must be a mapping")
    raw = dict(raw)
    preset = raw.pop("preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"preset: unknown preset {preset!r} (known: {', '.join(PRESETS)})")
        raw = _merge(PRESETS[preset], raw)
    for key in raw:
        if key not in _SECTIONS and key != "networks":
            raise ConfigError(f"{key}: unknown section")

    prob_raw = dict(raw.get("problem", {}) or {})
    if "Re" in prob_raw:
        if "nu" in prob_raw and preset is None:
            raise ConfigError("problem: give either nu or Re, not both")
        _positive("problem.Re", prob_raw["Re"], integer=False)
        prob_raw["nu"] = 1.0 / float(prob_raw.pop("Re"))
        raw["problem"] = prob_raw

    parts = {name: _known(name, cls, raw.get(name, {})) for name, cls in _SECTIONS.items()}

    prob = parts["problem"]
    if prob.get("name", "kovasznay") not in ("kovasznay", "two_freq", "multi_freq"):
        raise ConfigError(f"problem.name: unknown problem {prob['name']!r}")
    _positive("problem.nu", prob.get("nu", 0.1), integer=False)
    if prob.get("freqs") is not None:
        try:
            prob["freqs"] = tuple((int(n), int(m)) for n, m in prob["freqs"])
        except (TypeError, ValueError):
            raise ConfigError("problem.freqs: expected a list of [n, m] pairs") from None
    problem = ProblemConfig(**prob)

    dom = parts["domain"]
    try:
        rect = tuple(float(v) for v in dom.get("rect", _RECT))
        holes = tuple(tuple(float(v) for v in h) for h in dom.get("holes", ()))
    except (TypeError, ValueError):
        raise ConfigError("domain: rect must be 4 numbers and holes a list of [cx, cy, r]") from None
    if len(rect) != 4 or any(len(h) != 3 for h in holes):
        raise ConfigError("domain: rect must be 4 numbers and holes a list of [cx, cy, r]")
    domain = DomainConfig(rect, holes)
    domain.build()

    loss = LossConfig(**parts["loss"])
    if loss.variant not in VARIANTS:
        raise ConfigError(f"loss.variant: unknown variant {loss.variant!r}")
    if loss.alpha < 0 or loss.beta < 0:
        raise ConfigError("loss.alpha/loss.beta: must be non-negative")

    tr = parts["training"]
    if "eval_set" in tr and not isinstance(tr["eval_set"], EvalSet):
        tr["eval_set"] = EvalSet.parse(tr["eval_set"])
    for key, cls in (("schedule", LRSchedule), ("adam", AdamConfig), ("seeds", Seeds)):
        if key in tr and not isinstance(tr[key], cls):
            tr[key] = cls(**_known(f"training.{key}", cls, tr[key]))
    training = TrainingConfig(**tr)
    for key in ("interior_points", "boundary_points", "interior_batch", "boundary_batch",
                "eval_every"):
        _positive(f"training.{key}", getattr(training, key))
    if isinstance(training.epochs, bool) or not isinstance(training.epochs, int) or training.epochs < 0:
        raise ConfigError("training.epochs: must be an integer >= 0")
    _positive("training.schedule.drop_every", training.schedule.drop_every)
    _positive("training.schedule.base_lr", training.schedule.base_lr, integer=False)
    _positive("training.schedule.drop_factor", training.schedule.drop_factor, integer=False)
    for key, value in asdict(training.seeds).items():
        if isinstance(value, bool) or not isinstance(value, int) or value < 0:
            raise ConfigError(f"training.seeds.{key}: expected a non-negative integer")
    if training.interior_batch > training.interior_points:
        raise ConfigError("training.interior_batch exceeds training.interior_points")
    if training.boundary_batch > training.boundary_points:
        raise ConfigError("training.boundary_batch exceeds training.boundary_points")

    output = OutputConfig(**parts["output"])
    if output.precision < 15:
        raise ConfigError("output.precision: need at least 15 significant digits")

    nets_raw = raw.get("networks", {})
    if not isinstance(nets_raw, dict):
        raise ConfigError("networks: expected a mapping")
    needed = _FIELDS_FOR.get(loss.variant, ("u", "p", "q", "aux"))
    networks = {}
    for name in nets_raw:
        if name not in ("u", "p", "q", "aux"):
            raise ConfigError(f"networks.{name}: unknown network")
    for name in needed:
        spec = nets_raw.get(name)
        if spec is None:
            raise ConfigError(f"networks.{name}: missing (required by variant {loss.variant})")
        spec = _known(f"networks.{name}", NetConfig, spec)
        scales = parse_scales(spec.get("scales", (1.0,)))
        for key in ("hidden_layers", "hidden_width"):
            if key in spec:
                _positive(f"networks.{name}.{key}", spec[key])
        networks[name] = NetConfig(scales, int(spec.get("hidden_layers", 4)),
                                   int(spec.get("hidden_width", 50)))
    return RunConfig(problem, domain, networks, loss, training, output, preset)


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads exponent floats without a dot, e.g. ``1e-3``."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"),
    list("-+0123456789"),
)


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: malformed YAML: {exc}") from None
    return config_from_dict(raw if raw is not None else {})
