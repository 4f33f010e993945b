"""Run configuration and the flat ``key = value`` config file format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping, Optional

from mzsr.network import ArchDescriptor


@dataclass(frozen=True)
class RunConfig:
    # network
    depth: int = 8
    features: int = 64
    kernel_size: int = 3
    init_output_gain: float = 1.0
    # meta-transfer learning
    alpha: float = 0.01
    beta: float = 1e-4
    unroll_steps: int = 5
    patch: int = 64
    scale: int = 2
    mode: str = "direct"
    task_batch: int = 4
    pairs_per_split: int = 4
    meta_iters: int = 1000
    weight_decay_frac: float = 0.5
    first_order: bool = False
    scale_min: int = 0
    scale_max: int = 0
    blur_size: int = 15
    # bicubic pretraining
    pretrain_iters: int = 1000
    pretrain_batch: int = 4
    pretrain_lr: float = 1e-4
    # meta-test
    adapt_steps: int = 1
    baseline_lr: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if self.init_output_gain < 0:
            raise ValueError("init_output_gain must be >= 0")
        if self.unroll_steps < 1:
            raise ValueError(f"unroll_steps must be >= 1, got {self.unroll_steps}")
        for s in self.scales():
            if self.patch % s:
                raise ValueError(f"patch {self.patch} is not divisible by scale {s}")
        if self.mode not in ("direct", "bicubic"):
            raise ValueError(f"mode must be direct or bicubic, got {self.mode!r}")
        if not 0 <= self.weight_decay_frac <= 1:
            raise ValueError("weight_decay_frac must be within [0, 1]")
        if min(self.task_batch, self.pairs_per_split, self.pretrain_batch) < 1:
            raise ValueError("batch sizes must be >= 1")
        if self.meta_iters < 0 or self.pretrain_iters < 0:
            raise ValueError("iteration counts must be >= 0")

    @property
    def arch(self) -> ArchDescriptor:
        return ArchDescriptor(self.depth, self.features, self.kernel_size)

    @property
    def multi_scale(self) -> bool:
        return self.scale_max > 0

    def scales(self) -> range:
        if self.multi_scale:
            if not 1 <= self.scale_min <= self.scale_max:
                raise ValueError(f"bad scale range [{self.scale_min}, {self.scale_max}]")
            return range(self.scale_min, self.scale_max + 1)
        return range(self.scale, self.scale + 1)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_lines(self) -> list[str]:
        return [f"{f.name} = {_format(getattr(self, f.name))}" for f in fields(self)]


def _format(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def _coerce(name: str, raw: str, kind: type) -> Any:
    raw = raw.strip()
    if kind is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    try:
        return kind(raw)
    except ValueError:
        raise ValueError(f"{name}: cannot parse {raw!r} as {kind.__name__}") from None


_TYPES = {"int": int, "float": float, "bool": bool, "str": str}


def coerce_overrides(values: Mapping[str, Any]) -> dict[str, Any]:
    """Check keys against RunConfig and convert string values to field types."""
    known = {f.name: _TYPES[f.type] if isinstance(f.type, str) else f.type for f in fields(RunConfig)}
    out = {}
    for key, value in values.items():
        if key not in known:
            raise KeyError(f"unknown config key {key!r}")
        out[key] = _coerce(key, value, known[key]) if isinstance(value, str) else value
    return out


def parse_config_text(text: str) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def load_config(path: Optional[Path] = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """Defaults, then the file, then ``overrides`` (highest precedence)."""
    merged: dict[str, Any] = {}
    if path is not None:
        merged.update(coerce_overrides(parse_config_text(Path(path).read_text(encoding="utf-8"))))
    if overrides:
        merged.update(coerce_overrides(overrides))
    return RunConfig(**merged)
