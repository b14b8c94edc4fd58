"""Run configuration: nested dataclasses, key=value files and overrides."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .crf import CRFParams
from .descriptors import DescriptorParams
from .features import KernelParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetParams:
    cell: int = 16
    num_classes: int = 0  # 0 = infer from the training labels

    def __post_init__(self):
        if self.cell < 1:
            raise ValueError("dataset.cell must be >= 1")
        if self.num_classes < 0:
            raise ValueError("dataset.num_classes must be >= 0")


@dataclass(frozen=True)
class SamplerParams:
    cap: int = 2500
    seed: int = 0
    sigma_d_sample: float = 0.5

    def __post_init__(self):
        if self.cap < 1:
            raise ValueError("sampler.cap must be >= 1")
        if not self.sigma_d_sample > 0:
            raise ValueError("sampler.sigma_d_sample must be positive")


@dataclass(frozen=True)
class PipelineParams:
    no_crf: bool = False
    ideal_ranking: bool = False
    precision: str = "float32"

    def __post_init__(self):
        if self.precision not in ("float32", "float64"):
            raise ValueError("pipeline.precision must be float32 or float64")


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetParams = field(default_factory=DatasetParams)
    descriptors: DescriptorParams = field(default_factory=DescriptorParams)
    sampler: SamplerParams = field(default_factory=SamplerParams)
    kernel: KernelParams = field(default_factory=KernelParams)
    crf: CRFParams = field(default_factory=CRFParams)
    pipeline: PipelineParams = field(default_factory=PipelineParams)


def _coerce(text: str, like):
    if isinstance(like, bool):
        low = text.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    return text.strip()


def items(config: RunConfig) -> list[tuple[str, object]]:
    """Flattened ``(section.key, value)`` pairs in declaration order."""
    out = []
    for sec in fields(config):
        part = getattr(config, sec.name)
        out.extend((f"{sec.name}.{f.name}", getattr(part, f.name)) for f in fields(part))
    return out


def apply(config: RunConfig, overrides: dict[str, str]) -> RunConfig:
    """Return ``config`` with string-valued ``section.key`` overrides applied."""
    sections = {sec.name: dict() for sec in fields(config)}
    for key, text in overrides.items():
        sec, _, name = key.partition(".")
        if sec not in sections or not name:
            raise ConfigError(f"unknown config key {key!r}")
        part = getattr(config, sec)
        if name not in {f.name for f in fields(part)}:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            sections[sec][name] = _coerce(str(text), getattr(part, name))
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    try:
        return replace(config, **{s: replace(getattr(config, s), **kv) for s, kv in sections.items() if kv})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_text(text: str, origin: str = "<config>") -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{origin}:{lineno}: expected key=value")
        out[key.strip()] = value.strip()
    return out


def load(path, base: RunConfig | None = None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: config file not found")
    return apply(base or RunConfig(), parse_text(path.read_text(), str(path)))


def dump(config: RunConfig) -> str:
    def fmt(v):
        return str(v).lower() if isinstance(v, bool) else str(v)
    return "".join(f"{k} = {fmt(v)}\n" for k, v in items(config))
