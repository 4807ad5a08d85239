"""Experiment configuration: strict JSON loading, dataclass binding,
canonical hashing, and provenance echo for output artifacts.

Unknown keys anywhere in the config are a hard error (typos must not
silently fall back to defaults).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json

from .data import ExpertConfig, ScenarioSpec
from .dynamics import DynamicsVariant
from .learning import TrainConfig
from .sampler import SamplerConfig
from .types import ControlBounds


class UnknownConfigKeys(ValueError):
    def __init__(self, section: str, keys):
        self.keys = sorted(keys)
        super().__init__(f"unknown config keys in {section!r}: {', '.join(self.keys)}")


def _bind(cls, section: str, d: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise UnknownConfigKeys(section, unknown)
    coerced = {}
    for f in dataclasses.fields(cls):
        if f.name in d:
            v = d[f.name]
            coerced[f.name] = tuple(v) if isinstance(v, list) else v
    return cls(**coerced)


_SECTIONS = {
    "data": ScenarioSpec,
    "expert": ExpertConfig,
    "train": TrainConfig,
    "sampler": SamplerConfig,
    "bounds": ControlBounds,
    "dynamics": DynamicsVariant,
}

_EXTRA_SECTIONS = {"cost", "eval"}
_COST_KEYS = {"hidden_dim", "hidden_layers"}
_EVAL_KEYS = {"samples", "horizons"}


class ExperimentConfig:
    """All tunables for a pipeline run, addressable per section."""

    def __init__(self, raw: dict | None = None):
        raw = dict(raw or {})
        unknown = set(raw) - set(_SECTIONS) - _EXTRA_SECTIONS
        if unknown:
            raise UnknownConfigKeys("<top level>", unknown)
        train_raw = dict(raw.get("train", {}))
        sampler_raw = dict(raw.get("sampler", {}))
        if "sampler" in train_raw:
            raise UnknownConfigKeys("train", {"sampler (configure the top-level section)"})
        self.sampler = _bind(SamplerConfig, "sampler", sampler_raw)
        train_raw["sampler"] = self.sampler
        names = {f.name for f in dataclasses.fields(TrainConfig)}
        unknown = set(train_raw) - names
        if unknown:
            raise UnknownConfigKeys("train", unknown)
        self.train = TrainConfig(**train_raw)
        self.data = _bind(ScenarioSpec, "data", dict(raw.get("data", {})))
        self.expert = _bind(ExpertConfig, "expert", dict(raw.get("expert", {})))
        self.bounds = _bind(ControlBounds, "bounds", dict(raw.get("bounds", {})))
        self.dynamics = _bind(DynamicsVariant, "dynamics", dict(raw.get("dynamics", {})))
        cost_raw = dict(raw.get("cost", {}))
        unknown = set(cost_raw) - _COST_KEYS
        if unknown:
            raise UnknownConfigKeys("cost", unknown)
        self.cost = {"hidden_dim": int(cost_raw.get("hidden_dim", 64)),
                     "hidden_layers": int(cost_raw.get("hidden_layers", 2))}
        eval_raw = dict(raw.get("eval", {}))
        unknown = set(eval_raw) - _EVAL_KEYS
        if unknown:
            raise UnknownConfigKeys("eval", unknown)
        self.eval = {"samples": int(eval_raw.get("samples", 10)),
                     "horizons": list(eval_raw.get("horizons", [1.0, 2.0, 3.0, 4.0]))}
        self.raw = raw

    def with_overrides(self, **sections) -> "ExperimentConfig":
        raw = json.loads(canonical_json(self.raw))
        for name, patch in sections.items():
            section = dict(raw.get(name, {}))
            section.update(patch)
            raw[name] = section
        return ExperimentConfig(raw)

    def echo(self) -> dict:
        """Fully resolved settings, for embedding into output artifacts."""
        out = {}
        for name, obj in (("data", self.data), ("expert", self.expert),
                          ("sampler", self.sampler), ("bounds", self.bounds),
                          ("dynamics", self.dynamics)):
            out[name] = dataclasses.asdict(obj)
        train = dataclasses.asdict(self.train)
        train.pop("sampler", None)
        out["train"] = train
        out["cost"] = dict(self.cost)
        out["eval"] = dict(self.eval)
        return out

    def hash(self) -> str:
        return hashlib.sha256(canonical_json(self.echo()).encode()).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def load_config(path) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig({})
    with open(path) as f:
        return ExperimentConfig(json.load(f))


def write_sidecar_meta(artifact_path, config: ExperimentConfig, extra: dict | None = None):
    """Provenance for JSONL/CSV artifacts that cannot embed a config."""
    meta = {"config": config.echo(), "config_hash": config.hash()}
    if extra:
        meta.update(extra)
    with open(str(artifact_path) + ".meta.json", "w") as f:
        json.dump(meta, f, sort_keys=True, indent=2)
        f.write("\n")


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(path, model, generator=None, config: ExperimentConfig | None = None):
    config = config or ExperimentConfig({})
    payload = {
        "cost": model.to_dict(),
        "generator": generator.to_dict() if generator is not None else None,
        "config": config.echo(),
        "config_hash": config.hash(),
    }
    with open(path, "w") as f:
        json.dump(payload, f, sort_keys=True)
        f.write("\n")


def load_checkpoint(path):
    from .cost import model_from_dict
    from .generator import PolicyGenerator

    with open(path) as f:
        payload = json.load(f)
    model = model_from_dict(payload["cost"])
    generator = None
    if payload.get("generator"):
        generator = PolicyGenerator.from_dict(payload["generator"])
    return model, generator, payload
