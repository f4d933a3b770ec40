"""Scenario configuration: JSON loading, validation and named presets."""

import copy
import json
from dataclasses import asdict, dataclass, field, fields

from ..errors import ConfigError, ParseError

__all__ = ["ScenarioConfig", "PRESETS", "load_config", "parse_config", "preset",
           "SCENARIOS"]

SCENARIOS = ("ber-sweep", "divergence", "learn", "playback")

_PAPER_CHANNEL = {"kind": "static", "taps": [1.0, 0.9472, 0.4586, 0.4315, 0.1497]}


@dataclass
class ScenarioConfig:
    """Everything a scenario runner needs; all fields have defaults."""

    scenario: str = "ber-sweep"
    channel: dict = field(default_factory=lambda: copy.deepcopy(_PAPER_CHANNEL))
    n_receivers: int = 1
    dither: str = "m1_down"
    dithers: list = field(default_factory=lambda: ["m1_down", "m2_down", "m1_up", "m2_up"])
    equalizers: list = field(default_factory=lambda: ["zf", "mmse"])
    L_f: int = 20
    L_b: int = 4
    n0: int = 19
    snr_list: list = field(default_factory=lambda: [float(s) for s in range(5, 21)])
    n_bits: int = 100000
    n_symbols: int = 100000
    n_trials: int = 1
    training_length: int = 3000
    mu_list: list = field(default_factory=lambda: [0.001, 0.005])
    lam: float = 0.999
    delta: float = 0.01
    pll: str = "off"
    pll_gains: list = field(default_factory=lambda: [0.01, 0.0])
    window: int = 200
    codec: str = "uncoded"
    amplifier_alpha: float = None
    estimator_lambda: float = 0.95
    max_lag: int = 8
    seed: int = 0
    out: str = None

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if not self.snr_list:
            raise ConfigError("snr_list must be nonempty")
        if self.n_symbols < 1 or self.n_bits < 1:
            raise ConfigError("n_symbols and n_bits must be positive")
        if self.scenario == "learn" and self.n_symbols < self.training_length:
            raise ConfigError("n_symbols must be at least the training length")
        if self.L_f < 1 or self.L_b < 0 or self.n0 < 0:
            raise ConfigError("invalid equalizer structure")
        if self.codec not in ("uncoded", "convolutional"):
            raise ConfigError(f"unknown codec {self.codec!r}")
        if self.dither not in ("m1_up", "m1_down", "m2_up", "m2_down", "none"):
            raise ConfigError(f"unknown dither map {self.dither!r}")
        bad = [e for e in self.equalizers if e not in ("zf", "mmse", "lms", "rls")]
        if bad:
            raise ConfigError(f"unknown equalizers {bad}")
        if not 0 < self.lam <= 1 or not 0 < self.estimator_lambda <= 1:
            raise ConfigError("forgetting factors must lie in (0, 1]")
        if self.amplifier_alpha is not None and not self.amplifier_alpha > 1:
            raise ConfigError("amplifier_alpha must exceed 1")
        return self

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


_FIELDS = {f.name for f in fields(ScenarioConfig)}


PRESETS = {
    "fig7": {"scenario": "ber-sweep", "dither": "m1_down"},
    "fig8": {"scenario": "ber-sweep", "dither": "m2_down"},
    "fig9": {"scenario": "learn", "equalizers": ["lms"], "snr_list": [20.0],
             "n_symbols": 8000, "n_trials": 20, "window": 100},
    "table2": {"scenario": "divergence", "snr_list": [18.0], "n_symbols": 1000000},
    "fig12-analog": {
        "scenario": "learn", "equalizers": ["rls"], "snr_list": [30.0],
        "channel": {"kind": "sinusoidal_fade",
                    "taps": [0.8, 0.5, 0.3], "doppler": 0.002, "n_paths": 16, "seed": 7},
        "n_receivers": 4, "L_f": 6, "L_b": 2, "n0": 5, "lam": 0.99,
        "n_symbols": 6000, "training_length": 6000, "estimator_lambda": 0.998,
        "window": 200,
    },
    "fig14-15-analog": {
        "scenario": "playback", "equalizers": ["rls"], "snr_list": [30.0],
        "channel": {"kind": "sinusoidal_fade",
                    "taps": [0.8, 0.5, 0.3], "doppler": 0.008, "n_paths": 16, "seed": 7},
        "n_receivers": 4, "L_f": 6, "L_b": 2, "n0": 5, "lam": 0.99,
        "n_symbols": 6000, "training_length": 6000, "estimator_lambda": 0.99,
        "window": 500,
    },
}


def _build(dct):
    unknown = sorted(set(dct) - _FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return ScenarioConfig(**copy.deepcopy(dct)).validate()


def preset(name, **overrides):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    dct = copy.deepcopy(PRESETS[name])
    dct.update(overrides)
    return _build(dct)


def parse_config(text, base=None, defaults=None):
    """Parse JSON text into a validated config.

    ``base`` (a preset name) supplies defaults that the text overrides.
    A ``"preset"`` key in the text does the same. ``defaults`` is a dict
    applied beneath both.
    """
    try:
        dct = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(dct, dict):
        raise ConfigError("config must be a JSON object")
    base = dct.pop("preset", base)
    if base and base not in PRESETS:
        raise ConfigError(f"unknown preset {base!r}")
    merged = dict(defaults or {})
    merged.update(copy.deepcopy(PRESETS[base]) if base else {})
    merged.update(dct)
    return _build(merged)


def load_config(path, base=None, defaults=None):
    with open(path) as fh:
        return parse_config(fh.read(), base, defaults)
