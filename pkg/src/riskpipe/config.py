"""Pipeline configuration: one JSON document plus ``--set key=value`` overrides."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .behavior import ActivityRules
from .errors import ValidationError
from .skills import TrainConfig
from .trajectory import ScenarioConfig


@dataclass(frozen=True)
class TrainingSpec:
    episodes: int = 200
    holdout: int = 20
    v_max_range: tuple[float, float] = (0.2, 2.0)
    duration_jitter: float = 0.5
    hidden: tuple[int, int] = (32, 16)
    epochs: int = 50
    batch: int = 32
    learning_rate: float = 0.01


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    training: TrainingSpec = field(default_factory=TrainingSpec)
    window: int = 20
    stride: int = 10
    smooth: int = 5
    min_duration: float = 0.3
    activity: ActivityRules = field(default_factory=ActivityRules)
    risk_data: str | None = None

    def seeds(self):
        """Independent 64-bit seeds for: episode, training corpus, holdout corpus, weight init."""
        children = np.random.SeedSequence(self.seed).spawn(4)
        return [int(c.generate_state(1, np.uint64)[0]) for c in children]

    def episode_config(self):
        return replace(self.scenario, seed=self.seeds()[0])

    def train_config(self):
        t = self.training
        return TrainConfig(tuple(t.hidden), t.epochs, t.batch, t.learning_rate, self.seeds()[3])

    def to_dict(self):
        scenario = self.scenario.to_dict()
        scenario.pop("seed")
        training = asdict(self.training)
        training["v_max_range"] = list(self.training.v_max_range)
        training["hidden"] = list(self.training.hidden)
        return {
            "seed": self.seed,
            "scenario": scenario,
            "training": training,
            "window": self.window,
            "stride": self.stride,
            "smooth": self.smooth,
            "min_duration": self.min_duration,
            "activity": self.activity.to_dict(),
            "risk_data": self.risk_data,
        }

    def dumps(self):
        return (json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n").encode("utf-8")


def _int(d, key, lo):
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise ValidationError(f"{key} must be an integer >= {lo}, got {v!r}")
    return v


def config_from_dict(d):
    if not isinstance(d, dict):
        raise ValidationError("config must be a JSON object")
    known = {f.name for f in fields(PipelineConfig)}
    extra = set(d) - known
    if extra:
        raise ValidationError(f"config: unknown fields {sorted(extra)}")
    kw = {}
    if "seed" in d:
        kw["seed"] = _int(d, "seed", 0)
        if kw["seed"] >= 2**64:
            raise ValidationError("seed must fit in 64 bits")
    if "scenario" in d:
        if "seed" in d["scenario"]:
            raise ValidationError("scenario.seed is derived from the top-level seed; set seed instead")
        kw["scenario"] = ScenarioConfig.from_dict(d["scenario"])
    if "training" in d:
        t = d["training"]
        if not isinstance(t, dict):
            raise ValidationError("training must be an object")
        extra = set(t) - {f.name for f in fields(TrainingSpec)}
        if extra:
            raise ValidationError(f"training: unknown fields {sorted(extra)}")
        for key in ("episodes", "holdout", "epochs", "batch"):
            if key in t:
                _int(t, key, 1 if key in ("episodes", "batch") else 0)
        t = dict(t)
        for key in ("v_max_range", "hidden"):
            if key in t:
                if not isinstance(t[key], (list, tuple)) or len(t[key]) != 2:
                    raise ValidationError(f"training.{key} must be a pair")
                t[key] = tuple(t[key])
        kw["training"] = TrainingSpec(**t)
    for key, lo in (("window", 1), ("stride", 1), ("smooth", 1)):
        if key in d:
            kw[key] = _int(d, key, lo)
    if kw.get("smooth", 1) % 2 == 0:
        raise ValidationError("smooth must be odd")
    if "min_duration" in d:
        v = d["min_duration"]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0:
            raise ValidationError("min_duration must be a number >= 0")
        kw["min_duration"] = float(v)
    if "activity" in d:
        kw["activity"] = ActivityRules.from_dict(d["activity"])
    if "risk_data" in d:
        if d["risk_data"] is not None and not isinstance(d["risk_data"], str):
            raise ValidationError("risk_data must be a path string or null")
        kw["risk_data"] = d["risk_data"]
    return PipelineConfig(**kw)


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(d, overrides):
    """Apply ``key.sub=value`` strings to a raw config dict; values are JSON when they parse as JSON."""
    d = json.loads(json.dumps(d))
    for item in overrides:
        if "=" not in item:
            raise ValidationError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        node = d
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ValidationError(f"--set {key}: {p} is not an object")
        node[parts[-1]] = _parse_value(value)
    return d


def load_config(path=None, overrides=(), seed=None):
    raw = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {path} is not JSON: {exc.msg}") from None
    raw = apply_overrides(raw, overrides)
    if seed is not None:
        raw["seed"] = seed
    return config_from_dict(raw)
