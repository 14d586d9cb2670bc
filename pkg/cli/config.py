"""
ViBE - Run configuration
INI file with one section per module config. Every key maps to a dataclass
field; unknown sections or keys are rejected. The config path comes from
--config, else the VIBE_CONFIG environment variable, else built-in defaults.
"""

import configparser
import dataclasses
import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, Union

from models.records import SyntheticSpec
from pipelines.evaluation import DEFAULT_QUANTILES
from pipelines.experiment import METHODS
from pipelines.train_cf import CFTrainConfig
from pipelines.train_vibe import ViBETrainConfig

CONFIG_ENV = 'VIBE_CONFIG'


class ConfigError(ValueError):
    """Raised for unknown sections or keys and unparseable values"""
    pass


@dataclass
class PathsConfig:
    catalog: str = 'data/catalog.txt'
    output_dir: str = 'output'
    clustering: str = 'output/clustering.txt'
    checkpoint: str = 'output/checkpoints/model.ckpt'
    metrics: str = 'output/metrics.txt'
    # empty: no results warehouse
    db: str = ''


@dataclass
class ClusteringConfig:
    k: int = 5
    seed: int = 0
    max_iter: int = 100
    restarts: int = 10


@dataclass
class SplitConfig:
    body_holdout: float = 0.2
    garment_holdout: float = 0.2


@dataclass
class EvalConfig:
    runs: int = 10
    quantiles: Tuple[int, ...] = DEFAULT_QUANTILES
    methods: Tuple[str, ...] = METHODS
    jobs: int = 1


@dataclass
class ExplainConfig:
    m: int = 400
    top_k: int = 5
    ridge: float = 0.001


@dataclass
class RunSettings:
    method: str = 'vibe'
    seed: int = 0


# section -> (attribute on RunConfig, factory taking field overrides)
SECTIONS: Dict[str, Tuple[str, Callable[..., Any]]] = {
    'paths': ('paths', PathsConfig),
    'synthetic': ('synthetic', SyntheticSpec),
    'clustering': ('clustering', ClusteringConfig),
    'split': ('split', SplitConfig),
    'vibe': ('vibe', ViBETrainConfig),
    'agnostic_embed': ('agnostic_embed', ViBETrainConfig.agnostic),
    'cf_agnostic': ('cf_agnostic', lambda **kw: CFTrainConfig(**{**kw, 'variant': 'agnostic'})),
    'cf_aware': ('cf_aware', lambda **kw: CFTrainConfig(**{**kw, 'variant': 'aware'})),
    'eval': ('eval', EvalConfig),
    'explain': ('explain', ExplainConfig),
    'run': ('run', RunSettings),
}
# fields a section may not set
FIXED_KEYS = {'cf_agnostic': {'variant'}, 'cf_aware': {'variant'}}


@dataclass
class RunConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    vibe: ViBETrainConfig = field(default_factory=ViBETrainConfig)
    agnostic_embed: ViBETrainConfig = field(default_factory=ViBETrainConfig.agnostic)
    cf_agnostic: CFTrainConfig = field(default_factory=lambda: CFTrainConfig(variant='agnostic'))
    cf_aware: CFTrainConfig = field(default_factory=lambda: CFTrainConfig(variant='aware'))
    eval: EvalConfig = field(default_factory=EvalConfig)
    explain: ExplainConfig = field(default_factory=ExplainConfig)
    run: RunSettings = field(default_factory=RunSettings)
    source: Optional[str] = field(default=None, compare=False)

    def method_config(self, method: str) -> Union[ViBETrainConfig, CFTrainConfig]:
        if method not in METHODS:
            raise ConfigError(f"unknown method '{method}' (expected one of {', '.join(METHODS)})")
        return getattr(self, method.replace('-', '_'))

    def method_configs(self) -> Dict[str, Union[ViBETrainConfig, CFTrainConfig]]:
        return {method: self.method_config(method) for method in METHODS}

    def validate(self):
        errors = []
        if self.run.method not in METHODS:
            errors.append(f"[run] method '{self.run.method}' is not one of {', '.join(METHODS)}")
        unknown = [m for m in self.eval.methods if m not in METHODS]
        if unknown:
            errors.append(f"[eval] unknown methods {unknown}")
        if self.eval.runs < 1 or self.eval.jobs < 1:
            errors.append("[eval] runs and jobs must be at least 1")
        if any(not 0 < q <= 100 for q in self.eval.quantiles):
            errors.append("[eval] quantiles must lie in (0, 100]")
        if not 0 < self.split.body_holdout < 1 or not 0 < self.split.garment_holdout < 1:
            errors.append("[split] holdout fractions must lie in (0, 1)")
        if self.clustering.k < 1:
            errors.append("[clustering] k must be positive")
        if self.explain.m < 0 or self.explain.top_k < 0:
            errors.append("[explain] m and top_k must be non-negative")
        if self.explain.ridge <= 0:
            errors.append("[explain] ridge must be positive")
        for section in ('vibe', 'agnostic_embed', 'cf_agnostic', 'cf_aware'):
            try:
                getattr(self, section).validate()
            except ValueError as e:
                errors.append(f"[{section}] {e}")
        try:
            self.synthetic.validate()
        except ValueError as e:
            errors.append(f"[synthetic] {e}")
        if errors:
            raise ConfigError(f"Invalid configuration: {errors}")


# Value conversion

def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if value is None:
        return ''
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ', '.join(f"{int(e)}:{float(m)!r}" for e, m in value)
        return ', '.join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(text: str, template: Any, where: str) -> Any:
    """Parse text to the type of the template (the field's default value)"""
    text = text.strip()
    try:
        if isinstance(template, bool):
            lowered = text.lower()
            if lowered in ('1', 'true', 'yes', 'on'):
                return True
            if lowered in ('0', 'false', 'no', 'off'):
                return False
            raise ValueError(f"not a boolean: '{text}'")
        if isinstance(template, int):
            return int(text)
        if isinstance(template, float):
            return float(text)
        if isinstance(template, tuple):
            items = [t.strip() for t in text.split(',') if t.strip()]
            if template and isinstance(template[0], tuple):
                pairs = []
                for item in items:
                    epoch, _, multiplier = item.partition(':')
                    pairs.append((int(epoch), float(multiplier)))
                return tuple(pairs)
            if template and isinstance(template[0], bool):
                return tuple(_parse_value(t, True, where) for t in items)
            if template and isinstance(template[0], int):
                return tuple(int(t) for t in items)
            if template and isinstance(template[0], float):
                return tuple(float(t) for t in items)
            return tuple(items)
        if template is None:
            return int(text) if text else None
        return text
    except ValueError as e:
        raise ConfigError(f"{where}: {e}") from None


def _section_fields(section: str) -> Dict[str, Any]:
    attribute, factory = SECTIONS[section]
    defaults = factory()
    return {
        f.name: getattr(defaults, f.name)
        for f in dataclasses.fields(defaults)
        if f.init and f.name not in FIXED_KEYS.get(section, ())
    }


def parse_config(text: str, source: str = '<config>') -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}") from None

    built = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"{source}: unknown section [{section}]")
        templates = _section_fields(section)
        overrides = {}
        for key, raw in parser.items(section):
            if key not in templates:
                raise ConfigError(f"{source}: unknown key '{key}' in [{section}]")
            overrides[key] = _parse_value(raw, templates[key], f"{source} [{section}] {key}")
        attribute, factory = SECTIONS[section]
        try:
            built[attribute] = factory(**overrides)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{source}: [{section}] {e}") from None

    config = RunConfig(**built, source=source)
    config.validate()
    return config


def resolve_config_path(explicit: Optional[str] = None) -> Optional[Path]:
    if explicit:
        return Path(explicit)
    env = os.environ.get(CONFIG_ENV)
    return Path(env) if env else None


def load_config(explicit: Optional[str] = None) -> RunConfig:
    path = resolve_config_path(explicit)
    if path is None:
        config = RunConfig()
        config.validate()
        return config
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    return parse_config(path.read_text(encoding='utf-8'), str(path))


def format_config(config: RunConfig) -> str:
    """Every section and key with its effective value, in a fixed order"""
    lines = []
    for section, (attribute, _) in SECTIONS.items():
        values = getattr(config, attribute)
        lines.append(f"[{section}]")
        for name in _section_fields(section):
            lines.append(f"{name} = {_format_value(getattr(values, name))}")
        lines.append('')
    return '\n'.join(lines)


def config_hash(config: RunConfig) -> str:
    return hashlib.sha256(format_config(config).encode('utf-8')).hexdigest()
