"""Experiment configuration: dataclass blocks read from an INI-style file.

Every key has a default and the defaults are the acceptance configuration.
Unknown sections or keys are errors.
"""

import configparser
from dataclasses import asdict, dataclass, field, fields, replace


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MetricConfig:
    kind: str = "vaidya_glued"
    mass: float = 1.0
    M_I: float = 0.5
    M_F: float = 0.5
    # mass-function knots for the outgoing Vaidya ramps
    v0: float = 0.0
    v1: float = 10.0
    r0: float = 10.0
    F: float = 1e4
    eps: float = 0.1
    decay: float = 1.0
    d: int = 1


@dataclass(frozen=True)
class GridConfig:
    fourier_T: float = 32.0
    fourier_n: int = 1024
    fourier_width: float = 3.0
    extent: float = 12.8
    h: float = 0.1
    h_fine: float = 0.05
    window: float = 0.5
    source_width: float = 1.0
    msq: float = 0.0
    a_amplitude: float = 0.0


@dataclass(frozen=True)
class LambdaConfig:
    re: float = 0.0
    im: float = 1.0

    @property
    def value(self):
        return complex(self.re, self.im)


@dataclass(frozen=True)
class RayConfig:
    t: float = 0.0
    r: float = 10.0
    direction: int = 1
    sheet: str = "+"
    msq: float = 0.0
    max_length: float = 400.0
    face: str = "nFf"


@dataclass(frozen=True)
class ThresholdConfig:
    N: tuple = (1.1, 2.0, 5.0, 10.0)
    bounds: float = 100.0
    variant: str = "future_weighted"


@dataclass(frozen=True)
class OutputConfig:
    dir: str = ""
    prefix: str = "desclab"


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    metric: MetricConfig = field(default_factory=MetricConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    lambda_: LambdaConfig = field(default_factory=LambdaConfig)
    ray: RayConfig = field(default_factory=RayConfig)
    thresholds: ThresholdConfig = field(default_factory=ThresholdConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    run: RunConfig = field(default_factory=RunConfig)

    @property
    def seed(self):
        return self.run.seed

    def as_dict(self):
        out = {}
        for f in fields(self):
            out[_section_name(f.name)] = asdict(getattr(self, f.name))
        return out


def _section_name(attr):
    return "lambda" if attr == "lambda_" else attr


def _attr_name(section):
    return "lambda_" if section == "lambda" else section


def _convert(raw, default, where):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(float(v) for v in raw.split(",") if v.strip())
        return raw.strip()
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {where}") from None


def _update(cfg, section, key, raw):
    attr = _attr_name(section)
    names = {f.name for f in fields(cfg)}
    if attr not in names:
        raise ConfigError(f"unknown config section [{section}]")
    block = getattr(cfg, attr)
    known = {f.name: getattr(block, f.name) for f in fields(block)}
    if key not in known:
        raise ConfigError(f"unknown key {key!r} in [{section}]; "
                          f"allowed: {sorted(known)}")
    value = _convert(raw, known[key], f"{section}.{key}")
    return replace(cfg, **{attr: replace(block, **{key: value})})


def parse_config(text, base=None):
    cfg = base or ExperimentConfig()
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(
        "#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    for section in cp.sections():
        for key, raw in cp.items(section):
            cfg = _update(cfg, section, key, raw)
    return cfg


def load_config(path=None, overrides=()):
    cfg = ExperimentConfig()
    if path:
        with open(path) as fh:
            cfg = parse_config(fh.read(), cfg)
    for item in overrides:
        lhs, sep, raw = item.partition("=")
        section, dot, key = lhs.partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r} must look like "
                              f"section.key=value")
        cfg = _update(cfg, section.strip(), key.strip(), raw)
    return cfg


def dump_config(cfg):
    lines = []
    for section, block in cfg.as_dict().items():
        lines.append(f"[{section}]")
        for k, v in block.items():
            if isinstance(v, tuple):
                v = ", ".join(f"{x:g}" for x in v)
            lines.append(f"{k} = {v}")
        lines.append("")
    return "\n".join(lines)
