"""Pipeline configuration: one INI file, overridable from the environment.

Every key is addressed as ``section.key``. An environment variable named
``AXRL_<SECTION>_<KEY>`` (upper case, dots as underscores) replaces the file's
value, e.g. ``AXRL_TRAIN_EPISODES=5`` or ``AXRL_PROTOTYPE_OPENNESS_LAM=2``.

Sections and keys
-----------------
``[run]``        seed, out, workers
``[data]``       source (synth|csv), synth_seed, months, start,
                 stocks_csv, property_csv, interest_csv, luxury_csv,
                 macd_fast, macd_slow, rsi_period
``[env]``        monthly_contribution, horizon, initial_holdings, mortgage_spread,
                 rate_scale, luxury_seed, luxury_drift, luxury_vol
``[train]``      every TrainConfig field (lam, gamma, tau, lr_actor, lr_critic,
                 batch_size, buffer_size, sigma, sigma_final, episodes, hidden,
                 optimizer, grad_clip, dtype)
``[prototype.<label>]``  prior (5 comma-separated weights), plus any [train] key
``[bins]``       rsi_edges, macd_edges, maturity_bins, action_bins, macd_feature, rsi_feature
``[explain]``    dot_states, min_prob, sample_seeds, smoothing
"""

import configparser
import dataclasses
import os
from dataclasses import dataclass, field

from .ddpg import DEFAULT_PRIORS, PROTOTYPES, AffinityPrior, TrainConfig
from .discretize import BinSpec
from .env import EnvConfig
from .exceptions import ConfigError

ENV_PREFIX = "AXRL_"
PRICE_KEYS = ("stocks_csv", "property_csv", "interest_csv", "luxury_csv")

DEFAULTS = {
    "run": {"seed": "0", "out": "runs/default", "workers": "1"},
    "data": {
        "source": "synth", "synth_seed": "0", "months": "362", "start": "1991-11",
        "stocks_csv": "", "property_csv": "", "interest_csv": "", "luxury_csv": "",
        "macd_fast": "12", "macd_slow": "26", "rsi_period": "14",
    },
    "env": {
        "monthly_contribution": "1.0", "horizon": "336", "initial_holdings": "1,0,0,0,0",
        "mortgage_spread": "0.015", "rate_scale": "0.01",
        "luxury_seed": "7", "luxury_drift": "0.004", "luxury_vol": "0.03",
    },
    "train": {},
    "bins": {
        "rsi_edges": "0.3,0.7", "macd_edges": "0.0", "maturity_bins": "28", "action_bins": "5",
        "macd_feature": "macd_p", "rsi_feature": "rsi_s",
    },
    "explain": {"dot_states": "16", "min_prob": "0.0", "sample_seeds": "20", "smoothing": "0.0"},
}

_TRAIN_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}


def _floats(text):
    text = text.strip()
    return tuple(float(x) for x in text.split(",")) if text else ()


def _convert(field_type, default, text):
    if isinstance(default, bool):
        return text.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        return tuple(int(x) for x in text.split(",")) if text.strip() else ()
    return text.strip()


@dataclass
class Prototype:
    label: str
    prior: AffinityPrior
    train: TrainConfig


@dataclass
class PipelineConfig:
    seed: int = 0
    out: str = "runs/default"
    workers: int = 1
    data: dict = field(default_factory=lambda: dict(DEFAULTS["data"]))
    env: EnvConfig = field(default_factory=EnvConfig)
    luxury: tuple = (7, 0.004, 0.03)
    prototypes: list = field(default_factory=list)
    bins: BinSpec = field(default_factory=BinSpec)
    dot_states: int = 16
    min_prob: float = 0.0
    sample_seeds: int = 20
    smoothing: float = 0.0
    source_path: str = None

    @property
    def labels(self):
        return [p.label for p in self.prototypes]


def _read(path):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    for section, values in DEFAULTS.items():
        parser[section] = dict(values)
    if path is not None:
        if not os.path.isfile(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            try:
                parser.read_file(fh)
            except configparser.Error as exc:
                raise ConfigError(f"cannot parse {path}: {exc}") from None
    return parser


def _env_name(section, key):
    return ENV_PREFIX + f"{section}_{key}".upper().replace(".", "_").replace("-", "_")


def _apply_env(parser, environ):
    """Overlay ``AXRL_*`` variables on every known ``section.key``."""
    candidates = {}
    for section in parser.sections():
        keys = set(parser[section])
        if section == "train" or section.startswith("prototype."):
            keys |= set(_TRAIN_FIELDS) - {"seed"}
            keys.add("seed")
        if section.startswith("prototype."):
            keys.add("prior")
        for key in keys:
            candidates[_env_name(section, key)] = (section, key)
    for name, value in environ.items():
        if name in candidates:
            section, key = candidates[name]
            parser[section][key] = value


def _train_config(section, base, label):
    values = dataclasses.asdict(base)
    for key, text in section.items():
        if key in ("prior",):
            continue
        if key not in _TRAIN_FIELDS:
            raise ConfigError(f"unknown training key '{section.name}.{key}' for {label}")
        try:
            values[key] = _convert(_TRAIN_FIELDS[key].type, values[key], text)
        except ValueError:
            raise ConfigError(f"bad value for '{section.name}.{key}': {text!r}") from None
    return TrainConfig(**values)


def load_config(path=None, environ=None, seed=None, out=None, workers=None):
    """Parse, overlay environment overrides and validate a pipeline config."""
    parser = _read(path)
    _apply_env(parser, os.environ if environ is None else environ)

    def get(section, key, conv=str):
        text = parser[section][key]
        try:
            return conv(text)
        except ValueError:
            raise ConfigError(f"bad value for '{section}.{key}': {text!r}") from None

    cfg = PipelineConfig(source_path=path)
    cfg.seed = get("run", "seed", int) if seed is None else int(seed)
    cfg.out = get("run", "out") if out is None else out
    cfg.workers = get("run", "workers", int) if workers is None else int(workers)
    if cfg.workers < 1:
        raise ConfigError("'run.workers' must be >= 1")

    cfg.data = dict(parser["data"])
    source = cfg.data["source"].strip()
    if source not in ("synth", "csv"):
        raise ConfigError(f"'data.source' must be synth or csv, got {source!r}")
    if source == "csv":
        base = os.path.dirname(os.path.abspath(path)) if path else os.getcwd()
        for key in PRICE_KEYS:
            value = cfg.data[key].strip()
            if not value:
                if key == "luxury_csv":
                    continue
                raise ConfigError(f"'data.{key}' is required when data.source = csv")
            full = value if os.path.isabs(value) else os.path.join(base, value)
            if not os.path.isfile(full):
                raise ConfigError(f"'data.{key}' points to a missing file: {value}")
            cfg.data[key] = full
    for key in ("synth_seed", "months", "macd_fast", "macd_slow", "rsi_period"):
        get("data", key, int)

    try:
        cfg.env = EnvConfig(
            monthly_contribution=get("env", "monthly_contribution", float),
            horizon=get("env", "horizon", int),
            initial_holdings=get("env", "initial_holdings", _floats),
            mortgage_spread=get("env", "mortgage_spread", float),
            rate_scale=get("env", "rate_scale", float),
        )
        cfg.luxury = (get("env", "luxury_seed", int), get("env", "luxury_drift", float),
                      get("env", "luxury_vol", float))
        cfg.bins = BinSpec(
            rsi_edges=get("bins", "rsi_edges", _floats),
            macd_edges=get("bins", "macd_edges", _floats),
            maturity_bins=get("bins", "maturity_bins", int),
            action_bins=get("bins", "action_bins", int),
            macd_feature=get("bins", "macd_feature").strip(),
            rsi_feature=get("bins", "rsi_feature").strip(),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    cfg.dot_states = get("explain", "dot_states", int)
    cfg.min_prob = get("explain", "min_prob", float)
    cfg.sample_seeds = get("explain", "sample_seeds", int)
    cfg.smoothing = get("explain", "smoothing", float)

    base_train = _train_config(parser["train"], TrainConfig(), "train")
    sections = [s for s in parser.sections() if s.startswith("prototype.")]
    labels = [s.split(".", 1)[1] for s in sections] or list(PROTOTYPES)
    if len(labels) != 5 or len(set(labels)) != 5:
        raise ConfigError(f"exactly five distinct prototypes are required, got {labels}")
    for k, label in enumerate(labels):
        section = parser[f"prototype.{label}"] if sections else {}
        if "prior" in section:
            weights = get(f"prototype.{label}", "prior", _floats)
        elif label in DEFAULT_PRIORS:
            weights = DEFAULT_PRIORS[label]
        else:
            raise ConfigError(f"'prototype.{label}.prior' is required for a non-default label")
        seeded = dataclasses.replace(base_train, seed=cfg.seed * 1000 + k)
        if sections:
            train = _train_config(section, seeded, label)
        else:
            train = seeded
        try:
            prior = AffinityPrior(label, tuple(weights))
        except ValueError as exc:
            raise ConfigError(f"'prototype.{label}.prior': {exc}") from None
        cfg.prototypes.append(Prototype(label, prior, train))
    return cfg
