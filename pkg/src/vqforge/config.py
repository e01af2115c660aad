"""Pipeline configuration: one INI-style key/value file with a section per stage.

Unknown sections or keys are rejected. ``format_defaults()`` renders every key
with its default value.
"""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace

from .cleaning import CleaningConfig
from .errors import ConfigError
from .features import LM_ELONGATION, LM_SCALES, TEMPORAL_SCALES
from .patchgen import MAX_ATTEMPTS, MAX_OVERLAP, SCALE
from .screening import ScreeningConfig
from .simulate import PopulationSpec, WorldModel


@dataclass(frozen=True)
class FeatureConfig:
    lm_scales: tuple = LM_SCALES
    lm_elongation: float = LM_ELONGATION
    temporal_scales: tuple = TEMPORAL_SCALES


@dataclass(frozen=True)
class SamplerConfig:
    target_size: int = 100
    bins: int = 10
    mode: str = "heuristic"
    restarts: int = 10
    # 0 means the default cap of 50 * number of candidates
    max_swaps: int = 0
    # "group:min:max, group:min:max"; empty for no quotas
    quotas: str = ""

    def quota_map(self):
        out = {}
        for part in self.quotas.split(","):
            part = part.strip()
            if not part:
                continue
            try:
                name, lo, hi = part.rsplit(":", 2)
                out[name.strip()] = (int(lo), int(hi))
            except ValueError as exc:
                raise ConfigError(f"bad quota entry {part!r}; expected group:min:max") from exc
        return out or None


@dataclass(frozen=True)
class PatchConfig:
    scale: float = SCALE
    max_overlap: float = MAX_OVERLAP
    max_attempts: int = MAX_ATTEMPTS


@dataclass(frozen=True)
class AnalysisConfig:
    kind: str = "video"
    n_splits: int = 50
    histogram_bins: int = 20
    min_golden_ratings: int = 3


SECTIONS = {
    "features": FeatureConfig,
    "sampler": SamplerConfig,
    "patches": PatchConfig,
    "screening": ScreeningConfig,
    "cleaning": CleaningConfig,
    "analysis": AnalysisConfig,
    "world": WorldModel,
    "population": PopulationSpec,
}


@dataclass(frozen=True)
class PipelineConfig:
    features: FeatureConfig = field(default_factory=FeatureConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    patches: PatchConfig = field(default_factory=PatchConfig)
    screening: ScreeningConfig = field(default_factory=ScreeningConfig)
    cleaning: CleaningConfig = field(default_factory=CleaningConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    world: WorldModel = field(default_factory=WorldModel)
    population: PopulationSpec = field(default_factory=PopulationSpec)


def _parse(raw, default, key):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            if default and isinstance(default[0], (int, float)):
                return tuple(float(s) for s in items)
            return tuple(items)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def _render(value):
    if isinstance(value, tuple):
        return ", ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(text):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from exc
    cfg = PipelineConfig()
    for section in parser.sections():
        cls = SECTIONS.get(section)
        if cls is None:
            raise ConfigError(f"unknown config section [{section}]")
        current = getattr(cfg, section)
        known = {f.name for f in fields(cls)}
        updates = {}
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            updates[key] = _parse(raw, getattr(current, key), f"{section}.{key}")
        try:
            cfg = replace(cfg, **{section: replace(current, **updates)})
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"[{section}]: {exc}") from exc
    return cfg


def load_config(path=None):
    if path is None:
        return PipelineConfig()
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc


def format_config(cfg=None):
    cfg = cfg or PipelineConfig()
    out = io.StringIO()
    for i, section in enumerate(SECTIONS):
        if i:
            out.write("\n")
        out.write(f"[{section}]\n")
        block = getattr(cfg, section)
        for f in fields(block):
            out.write(f"{f.name} = {_render(getattr(block, f.name))}\n")
    return out.getvalue()


def format_defaults():
    return format_config(PipelineConfig())
