"""JSON run-configs: one document with sim, arch, train, condition, bench and plot sections.

Every section is optional and falls back to defaults.  Unknown sections and
unknown keys inside a section are rejected, so a typo never silently turns
into a default.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields

from .augment import AugmentConfig
from .dataio import DataCondition
from .errors import ConfigError
from .losses import Form, as_form
from .netcore import ArchConfig
from .sigsim import SimConfig
from .trainer import TrainConfig

SEED_ENV = "SSCSR_SEED"
SECTIONS = ("sim", "arch", "train", "condition", "bench", "plot")


@dataclass(frozen=True)
class BenchConfig:
    forms: tuple = tuple(f.value for f in Form)
    conditions: tuple = ("10+500",)
    # None means EMA off for that cell
    gammas: tuple = (0.9,)
    trials: int = 5
    good_threshold: float = 0.5
    # per-form consistency weight, e.g. {"MSE": 10.0}; other forms use train.lam
    lam_by_form: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "forms", tuple(as_form(f).value for f in self.forms))
        lams = {as_form(k).value: float(v) for k, v in dict(self.lam_by_form).items()}
        if any(v < 0 for v in lams.values()):
            raise ConfigError("bench lam_by_form values must be >= 0")
        object.__setattr__(self, "lam_by_form", lams)
        object.__setattr__(self, "conditions", tuple(str(DataCondition.parse(c)) for c in self.conditions))
        gammas = tuple(None if g is None else float(g) for g in self.gammas)
        if any(g is not None and not 0 <= g <= 1 for g in gammas):
            raise ConfigError("bench gammas must lie in [0, 1] or be null")
        object.__setattr__(self, "gammas", gammas)
        if not self.forms or not self.conditions or not self.gammas:
            raise ConfigError("bench needs at least one form, condition and gamma")
        if self.trials < 1:
            raise ConfigError("bench trials must be >= 1")

    def cells(self):
        return [(f, c, g) for f in self.forms for c in self.conditions for g in self.gammas]


@dataclass(frozen=True)
class PlotConfig:
    alphas: tuple = (0.0, 1.0, 2.0, 3.0, 4.0)
    num_classes: int = 10
    points: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if not self.alphas or min(self.alphas) < 0:
            raise ConfigError("plot alphas must be a non-empty list of non-negative numbers")
        if self.num_classes < 2:
            raise ConfigError("plot num_classes must be >= 2")
        if self.points < 2:
            raise ConfigError("plot points must be >= 2")


@dataclass(frozen=True)
class RunConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    arch: ArchConfig = field(default_factory=ArchConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    condition: DataCondition = field(default_factory=lambda: DataCondition(10, 500))
    bench: BenchConfig = field(default_factory=BenchConfig)
    plot: PlotConfig = field(default_factory=PlotConfig)

    def to_dict(self):
        return {
            "sim": self.sim.to_dict(),
            "arch": self.arch.to_dict(),
            "train": self.train.to_dict(),
            "condition": str(self.condition),
            "bench": {
                "forms": list(self.bench.forms),
                "conditions": list(self.bench.conditions),
                "gammas": list(self.bench.gammas),
                "trials": self.bench.trials,
                "good_threshold": self.bench.good_threshold,
                "lam_by_form": dict(self.bench.lam_by_form),
            },
            "plot": {
                "alphas": list(self.plot.alphas),
                "num_classes": self.plot.num_classes,
                "points": self.plot.points,
            },
        }


def _build(cls, section, data):
    if not isinstance(data, dict):
        raise ConfigError(f"section {section!r} must be an object")
    known = {f.name for f in fields(cls) if f.init}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {section!r}: {', '.join(unknown)}")
    try:
        return cls(**data)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value in {section!r}: {exc}") from None


def _train(data):
    data = dict(data)
    if isinstance(data.get("augment"), dict):
        data["augment"] = _build(AugmentConfig, "train.augment", data["augment"])
    return _build(TrainConfig, "train", data)


def _arch(data, shape):
    # the network shape follows the data unless stated otherwise
    data = {"input_len": shape[0], "num_classes": shape[1], **data}
    if data.pop("preset", None) == "toy":
        toy = ArchConfig.toy(data["input_len"], data["num_classes"]).to_dict()
        data = {**toy, **data}
    return _build(ArchConfig, "arch", data)


def _condition(value):
    if isinstance(value, str):
        return DataCondition.parse(value)
    return _build(DataCondition, "condition", value)


def parse_run_config(doc, seed=None, data_shape=None):
    """Validate a decoded JSON document; ``seed`` overrides both sim and train seeds.

    ``data_shape = (sample_len, num_classes)`` describes an existing dataset
    and replaces the simulator's values as the default network shape.
    """
    if not isinstance(doc, dict):
        raise ConfigError("a run-config must be a JSON object")
    unknown = sorted(set(doc) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    for name in ("sim", "arch", "train", "bench", "plot"):
        if not isinstance(doc.get(name, {}), dict):
            raise ConfigError(f"section {name!r} must be an object")
    sim_d = dict(doc.get("sim", {}))
    train_d = dict(doc.get("train", {}))
    if seed is not None:
        sim_d["seed"] = train_d["seed"] = int(seed)
    sim = _build(SimConfig, "sim", sim_d)
    return RunConfig(
        sim=sim,
        arch=_arch(dict(doc.get("arch", {})), data_shape or (sim.sample_len, sim.num_devices)),
        train=_train(train_d),
        condition=_condition(doc.get("condition", "10+500")),
        bench=_build(BenchConfig, "bench", doc.get("bench", {})),
        plot=_build(PlotConfig, "plot", doc.get("plot", {})),
    )


def resolve_seed(cli_seed=None, environ=None):
    """The ``--seed`` flag wins, then the environment variable, else None."""
    if cli_seed is not None:
        return int(cli_seed)
    env = (os.environ if environ is None else environ).get(SEED_ENV)
    if env in (None, ""):
        return None
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def load_run_config(path=None, seed=None, data_shape=None):
    if path is None:
        return parse_run_config({}, seed, data_shape)
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return parse_run_config(doc, seed, data_shape)
