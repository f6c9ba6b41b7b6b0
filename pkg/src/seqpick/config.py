"""Experiment configuration: one strict JSON document for every run."""

from __future__ import annotations

import dataclasses
import json

from .agents import DqlConfig
from .env import SceneConfig
from .ursfo import Schedule, ShapingConfig


class ConfigError(ValueError):
    pass


_SECTIONS = ("scene", "dql", "shaping", "bc", "expert", "theory", "seeds")

_EXPERT_KEYS = {"n_episodes": 10, "noise_std": 0.5, "include_actions": False,
                "dataset": None}
_BC_KEYS = {"steps": 10_000, "learning_rate": 1e-4}
_THEORY_KEYS = {"n_instances": 1000, "seed": 0, "max_states": 10,
                "max_actions": 5, "gammas": [0.5, 0.9, 0.95],
                "n_pinsker": 1000, "n_lsgan": 100}


def _strict_fill(section, raw, defaults):
    unknown = set(raw) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in '{section}': {sorted(unknown)}")
    out = dict(defaults)
    out.update(raw)
    return out


def _dataclass_fill(section, raw, cls, **extra):
    fields = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - fields
    if unknown:
        raise ConfigError(f"unknown keys in '{section}': {sorted(unknown)}")
    try:
        return cls(**{**raw, **extra})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{section}' config: {exc}") from exc


def _parse_schedule(raw):
    raw = dict(raw)
    kind = raw.pop("kind", "v1")
    if kind not in ("constant", "v1", "v2"):
        raise ConfigError(f"unknown schedule kind {kind!r}")
    fields = {f.name for f in dataclasses.fields(Schedule)} - {"kind"}
    unknown = set(raw) - fields
    if unknown:
        raise ConfigError(f"unknown keys in 'shaping.schedule': {sorted(unknown)}")
    if kind == "constant":
        base = Schedule.constant(float(raw.pop("value", 0.0)))
    else:
        ctor = Schedule.v1 if kind == "v1" else Schedule.v2
        base = ctor(ramp_steps=raw.pop("ramp_steps", None))
        raw.pop("value", None)
    # remaining keys come from a fully-resolved document; they must agree
    for key, value in raw.items():
        if value != getattr(base, key):
            raise ConfigError(
                f"'shaping.schedule.{key}' conflicts with kind {kind!r}")
    return base


class ExperimentConfig:
    """Validated aggregate of scene/trainer/shaping/expert settings."""

    def __init__(self, doc):
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        unknown = set(doc) - set(_SECTIONS)
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        self.scene = _dataclass_fill("scene", doc.get("scene", {}), SceneConfig)
        self.dql = _dataclass_fill("dql", doc.get("dql", {}), DqlConfig)
        shaping_raw = dict(doc.get("shaping", {}))
        schedule_raw = shaping_raw.pop("schedule", {})
        self.shaping = _dataclass_fill(
            "shaping", shaping_raw, ShapingConfig,
            schedule=_parse_schedule(schedule_raw))
        if "lsgan_labels" in shaping_raw:
            labels = tuple(shaping_raw["lsgan_labels"])
            self.shaping = dataclasses.replace(self.shaping, lsgan_labels=labels)
        self.bc = _strict_fill("bc", doc.get("bc", {}), _BC_KEYS)
        self.expert = _strict_fill("expert", doc.get("expert", {}), _EXPERT_KEYS)
        self.theory = _strict_fill("theory", doc.get("theory", {}), _THEORY_KEYS)
        seeds = doc.get("seeds", [0])
        if (not isinstance(seeds, list) or not seeds
                or not all(isinstance(s, int) for s in seeds)):
            raise ConfigError("'seeds' must be a non-empty list of integers")
        self.seeds = seeds

    @classmethod
    def from_file(cls, path):
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls(doc)

    def resolved(self):
        """Fully default-filled document, sufficient to reproduce the run."""
        return {
            "scene": dataclasses.asdict(self.scene),
            "dql": dataclasses.asdict(self.dql),
            "shaping": {**dataclasses.asdict(self.shaping),
                        "schedule": dataclasses.asdict(self.shaping.schedule)},
            "bc": self.bc,
            "expert": self.expert,
            "theory": self.theory,
            "seeds": self.seeds,
        }
