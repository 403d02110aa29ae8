"""JSON experiment configuration with explicit seeds."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from .optim import KINDS


class ConfigError(ValueError):
    pass


@dataclass
class ProblemConfig:
    kind: str = "least_squares"
    m: int = 2048
    d: int = 20
    l2_reg: float = 1e-3
    noise: float = 0.1
    csv: str | None = None


@dataclass
class AlgorithmConfig:
    scheme: str = "dpsgd"
    mode: str = "nonblocking"
    N: int = 4
    B: int = 32
    eta: float = 0.1
    lr_decay_epochs: list[int] = field(default_factory=list)
    lr_decay_factor: float = 0.1
    scaling: str = "proportional"
    abandonment: str = "immediate"
    shuffle: bool = True
    budget_cb: float = 1.0
    comm_cost: float = 0.0
    dpsgd_order: str = "mix_then_step"


@dataclass
class DelayConfig:
    kind: str = "exponential"
    rate: float = 1.0
    base: float = 1.0
    shift: float = 0.0
    slowdown: str = "none"
    factors: list[float] = field(default_factory=list)
    lo: float = 1.0
    hi: float = 2.0
    granularity: str = "minibatch"


@dataclass
class TopologyConfig:
    kind: str = "erdos_renyi"
    p: float = 0.35
    edges_path: str | None = None


@dataclass
class Seeds:
    data: int
    delays: int
    topology: int
    init: int
    shuffle: int


@dataclass
class OutputConfig:
    dir: str = "runs"
    name: str = "run"


@dataclass
class ExperimentConfig:
    seeds: Seeds
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    workers: int = 8
    algorithm: AlgorithmConfig = field(default_factory=AlgorithmConfig)
    delay: DelayConfig = field(default_factory=DelayConfig)
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    iterations: int | None = None
    epochs: int | None = None
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def validate(self, base_dir: Path | None = None) -> "ExperimentConfig":
        p = self.problem
        if p.kind not in KINDS:
            raise ConfigError(f"problem.kind: unknown kind {p.kind!r}")
        if p.csv is None and (p.m < 1 or p.d < 1):
            raise ConfigError("problem.m and problem.d must be >= 1")
        if p.l2_reg < 0:
            raise ConfigError("problem.l2_reg must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        a = self.algorithm
        if a.N < 1 or a.B < 1 or a.B % a.N:
            raise ConfigError(f"algorithm.B={a.B} must be a positive multiple of algorithm.N={a.N}")
        if p.csv is None and a.B * self.workers > p.m:
            raise ConfigError(f"B*P = {a.B}*{self.workers} = {a.B * self.workers} exceeds problem.m = {p.m}")
        if p.csv is None and p.m % self.workers:
            raise ConfigError(f"problem.m = {p.m} is not divisible by workers = {self.workers}")
        if (self.iterations is None) == (self.epochs is None):
            raise ConfigError("exactly one of iterations and epochs must be set")
        if (self.iterations or 0) < 0 or (self.epochs or 0) < 0:
            raise ConfigError("iterations/epochs must be >= 0")
        for name, path in (("problem.csv", p.csv), ("topology.edges_path", self.topology.edges_path)):
            if path is not None and not resolve(path, base_dir).exists():
                raise ConfigError(f"{name}: file {path!r} does not exist")
        return self


def resolve(path: str, base_dir: Path | None) -> Path:
    p = Path(path)
    if not p.is_absolute() and base_dir is not None:
        p = base_dir / p
    return p


_NESTED = {
    "seeds": Seeds,
    "problem": ProblemConfig,
    "algorithm": AlgorithmConfig,
    "delay": DelayConfig,
    "topology": TopologyConfig,
    "output": OutputConfig,
}


def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(unknown)}")
    kwargs = {}
    for name, f in known.items():
        path = f"{where}.{name}" if where else name
        if name not in data:
            if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                raise ConfigError(f"{path}: required field missing")
            continue
        value = data[name]
        if cls is ExperimentConfig and name in _NESTED:
            value = _build(_NESTED[name], value, path)
        else:
            value = _coerce(value, f.type, path)
        kwargs[name] = value
    return cls(**kwargs)


def _coerce(value: Any, annotation: str, path: str) -> Any:
    ann = str(annotation).replace(" ", "")
    optional = ann.endswith("|None")
    ann = ann.removesuffix("|None")
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{path}: must not be null")
    if ann == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if ann == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if ann == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if ann == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if ann.startswith("list["):
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        inner = ann[5:-1]
        return [_coerce(v, inner, f"{path}[{i}]") for i, v in enumerate(value)]
    raise ConfigError(f"{path}: unsupported field type {annotation}")


def config_from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data, "")


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    try:
        return config_from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    cfg = parse_config(text, str(path))
    try:
        return cfg.validate(path.parent)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
