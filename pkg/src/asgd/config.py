"""Strict flat config files: dotted keys, one `key = value` per line.

Unknown keys are errors (typos in sweep configs should fail loudly), values
are typed per key, and the config hash is the sha256 of the canonicalized
text (sorted `key=value` lines), so formatting and comments never change it.

Vectors are comma-separated ("1,0,2.5"), matrices semicolon-separated rows
("0,0;4,4"), integer lists comma-separated ("1,2").
"""

from __future__ import annotations

import hashlib

import numpy as np

from .datagen import DistributionSpec
from .errors import ConfigError
from .estimator import DEFAULT_CLIP_RADIUS, StepSchedule
from .harness import (DEFAULT_BURN_IN, DEFAULT_PER_DECADE, ExperimentConfig,
                      geometric_checkpoints)
from .objectives import (CoshLogisticObjective, GeometricQuantileObjective,
                         LogisticObjective, QuadraticObjective)


def _int(text: str) -> int:
    try:
        val = float(text)
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}") from None
    if not val.is_integer():
        raise ConfigError(f"expected an integer, got {text!r}")
    return int(val)


def _float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}") from None


def _bool(text: str) -> bool:
    if text.lower() in ("true", "1", "yes"):
        return True
    if text.lower() in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected true/false, got {text!r}")


def _vector(text: str) -> np.ndarray:
    try:
        return np.array([float(t) for t in text.split(",")])
    except ValueError:
        raise ConfigError(f"expected a comma-separated vector, got {text!r}") from None


def _matrix(text: str) -> np.ndarray:
    try:
        return np.array([[float(t) for t in row.split(",")] for row in text.split(";")])
    except ValueError:
        raise ConfigError(f"expected semicolon-separated rows, got {text!r}") from None


def _int_list(text: str) -> tuple:
    return tuple(_int(t) for t in text.split(","))


def _str(text: str) -> str:
    return text


SCHEMA = {
    "objective.kind": _str,
    "objective.dim": _int,
    "objective.direction": _vector,
    "objective.m_true": _vector,
    "objective.sigma": _float,
    "objective.init": _str,
    "distribution.family": _str,
    "distribution.center": _vector,
    "distribution.scale": _vector,
    "distribution.dof": _float,
    "distribution.means": _matrix,
    "distribution.weights": _vector,
    "distribution.radius": _float,
    "distribution.teacher": _vector,
    "distribution.noise": _float,
    "schedule.c_gamma": _float,
    "schedule.alpha": _float,
    "schedule.allow_alpha_one": _bool,
    "experiment.n_max": _int,
    "experiment.replicates": _int,
    "experiment.p": _int_list,
    "experiment.seed": _int,
    "experiment.checkpoint_first": _int,
    "experiment.per_decade": _int,
    "experiment.burn_in": _float,
    "experiment.clip_radius": _float,
    "ground_truth.mode": _str,
    "ground_truth.n_oracle": _int,
    "ground_truth.tol": _float,
    "oracle.tol": _float,
    "oracle.max_iter": _int,
    "oracle.n": _int,
    "check.radius": _float,
    "check.probes": _int,
    "check.n_mc": _int,
    "check.moments": _int_list,
    "gen.n": _int,
}


class Config:
    """Parsed config: typed values plus the canonical text hash."""

    def __init__(self, values: dict, raw: dict):
        self.values = values
        self.raw = raw
        canon = "\n".join(f"{k}={raw[k]}" for k in sorted(raw)) + "\n"
        self.hash = hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def get(self, key, default=None):
        return self.values.get(key, default)

    def __contains__(self, key):
        return key in self.values

    def require(self, key):
        if key not in self.values:
            raise ConfigError(f"missing required config key {key!r}")
        return self.values[key]

    def override(self, key: str, raw_value: str) -> "Config":
        """New Config with one key replaced (CLI flag overrides)."""
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        raw = dict(self.raw)
        raw[key] = raw_value
        values = dict(self.values)
        values[key] = SCHEMA[key](raw_value)
        return Config(values, raw)


def parse_text(text: str) -> Config:
    values, raw = {}, {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate config key {key!r}")
        if not value:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        values[key] = SCHEMA[key](value)
        raw[key] = value
    return Config(values, raw)


def parse_file(path) -> Config:
    try:
        with open(path, "r") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse_text(text)


_OBJECTIVE_KINDS = ("quadratic", "geometric_quantile", "cosh_logistic", "logistic")


def build_objective(cfg: Config):
    kind = cfg.require("objective.kind")
    if kind == "quadratic":
        m_true = cfg.require("objective.m_true")
        return QuadraticObjective(m_true, sigma=cfg.get("objective.sigma", 1.0))
    if kind == "geometric_quantile":
        dim = cfg.require("objective.dim")
        return GeometricQuantileObjective(dim, cfg.get("objective.direction"))
    if kind in ("cosh_logistic", "logistic"):
        dim = cfg.require("objective.dim")
        init = cfg.get("objective.init", "zero")
        cls = CoshLogisticObjective if kind == "cosh_logistic" else LogisticObjective
        return cls(dim, init_mode=init)
    raise ConfigError(f"objective.kind must be one of {_OBJECTIVE_KINDS}, got {kind!r}")


def build_spec(cfg: Config, dim: int) -> DistributionSpec:
    family = cfg.require("distribution.family")
    kw = dict(family=family, dim=dim)
    if "distribution.center" in cfg:
        kw["center"] = cfg.get("distribution.center")
    if "distribution.scale" in cfg:
        kw["scale"] = cfg.get("distribution.scale")
    if "distribution.dof" in cfg:
        kw["dof"] = cfg.get("distribution.dof")
    if "distribution.means" in cfg:
        kw["means"] = cfg.get("distribution.means")
    if "distribution.weights" in cfg:
        kw["weights"] = cfg.get("distribution.weights")
    if "distribution.radius" in cfg:
        kw["radius"] = cfg.get("distribution.radius")
    if "distribution.teacher" in cfg:
        kw["teacher"] = cfg.get("distribution.teacher")
    if "distribution.noise" in cfg:
        kw["noise"] = cfg.get("distribution.noise")
    try:
        return DistributionSpec(**kw)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"invalid distribution: {e}") from None


def build_schedule(cfg: Config) -> StepSchedule:
    try:
        return StepSchedule(
            c_gamma=cfg.get("schedule.c_gamma", 1.0),
            alpha=cfg.get("schedule.alpha", 2.0 / 3.0),
            allow_alpha_one=cfg.get("schedule.allow_alpha_one", False),
        )
    except ValueError as e:
        raise ConfigError(f"invalid schedule: {e}") from None


def build_experiment(cfg: Config) -> ExperimentConfig:
    objective = build_objective(cfg)
    spec = build_spec(cfg, objective.dim)
    schedule = build_schedule(cfg)
    n_max = cfg.require("experiment.n_max")
    checkpoints = geometric_checkpoints(
        n_max,
        first=cfg.get("experiment.checkpoint_first", 1000),
        per_decade=cfg.get("experiment.per_decade", DEFAULT_PER_DECADE),
    )
    return ExperimentConfig(
        objective=objective,
        spec=spec,
        schedule=schedule,
        n_max=n_max,
        n_replicates=cfg.require("experiment.replicates"),
        checkpoints=checkpoints,
        p_orders=cfg.get("experiment.p", (1,)),
        seed=cfg.get("experiment.seed", 0),
        gt_mode=cfg.get("ground_truth.mode", "analytic"),
        n_oracle=cfg.get("ground_truth.n_oracle", 10 ** 6),
        oracle_tol=cfg.get("ground_truth.tol", 1e-10),
        clip_radius=cfg.get("experiment.clip_radius", DEFAULT_CLIP_RADIUS),
        burn_in_fraction=cfg.get("experiment.burn_in", DEFAULT_BURN_IN),
        config_hash=cfg.hash,
    )
