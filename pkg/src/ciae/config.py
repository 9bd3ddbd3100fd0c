"""JSON run configuration with strict key checking."""

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import ConfigError, InfeasibleConfig
from .fusion import ProposalSimConfig
from .loss import LossConfig
from .scene import SceneGenConfig
from .trainer import TrainConfig


@dataclass
class FusionConfig:
    min_stuff_area: int = None  # None: 0.64% of the image area
    oob_score: str = "zero"  # or "neg_inf"
    instance_categories: str = "box"  # or "embedding"

    def validate(self):
        if self.oob_score not in ("zero", "neg_inf"):
            raise ValueError(f"unknown oob_score {self.oob_score!r}")
        if self.instance_categories not in ("box", "embedding"):
            raise ValueError(f"unknown instance_categories {self.instance_categories!r}")
        if self.min_stuff_area is not None and self.min_stuff_area < 0:
            raise ValueError("min_stuff_area must be >= 0")
        return self


SECTIONS = {
    "scene": SceneGenConfig,
    "loss": LossConfig,
    "train": TrainConfig,
    "proposals": ProposalSimConfig,
    "fusion": FusionConfig,
}


@dataclass
class RunConfig:
    scene: SceneGenConfig = field(default_factory=SceneGenConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    proposals: ProposalSimConfig = field(default_factory=ProposalSimConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)

    def validate(self):
        try:
            self.scene.validate()
            for name in ("loss", "train", "proposals", "fusion"):
                getattr(self, name).validate()
        except (InfeasibleConfig, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def with_seed(self, seed):
        """Copy with every rng seed set to ``seed``."""
        return RunConfig(
            dataclasses.replace(self.scene, seed=seed),
            dataclasses.replace(self.loss),
            dataclasses.replace(self.train, seed=seed),
            dataclasses.replace(self.proposals, seed=seed),
            dataclasses.replace(self.fusion),
        )

    def to_json(self):
        return {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}

    def dumps(self):
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"


def _section(cls, name, values):
    if not isinstance(values, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {name!r}: {', '.join(unknown)}")
    if "size_range" in values:
        values = dict(values, size_range=tuple(values["size_range"]))
    return cls(**values)


def run_config_from_dict(data):
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(data) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    parts = {name: _section(cls, name, data.get(name, {})) for name, cls in SECTIONS.items()}
    return RunConfig(**parts).validate()


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def load_run_config(path=None):
    if path is None:
        return RunConfig().validate()
    return run_config_from_dict(load_json(path))


def set_dotted(cfg, dotted, value):
    """Return a copy of ``cfg`` with ``section.key`` replaced."""
    try:
        section, key = dotted.split(".")
    except ValueError as exc:
        raise ConfigError(f"parameter must look like 'section.key', got {dotted!r}") from exc
    if section not in SECTIONS:
        raise ConfigError(f"unknown section {section!r}")
    sub = getattr(cfg, section)
    if key not in {f.name for f in dataclasses.fields(sub)}:
        raise ConfigError(f"unknown key {key!r} in section {section!r}")
    if key == "size_range":
        value = tuple(value)
    new = dataclasses.replace(cfg, **{section: dataclasses.replace(sub, **{key: value})})
    return new.validate()


@dataclass
class SweepConfig:
    base: RunConfig
    parameter: str
    values: list
    seeds: int = 5
    seed_offset: int = 0

    def to_json(self):
        return {"base": self.base.to_json(), "parameter": self.parameter, "values": self.values,
                "seeds": self.seeds, "seed_offset": self.seed_offset}


def load_sweep_config(path):
    data = load_json(path)
    if not isinstance(data, dict):
        raise ConfigError("sweep configuration must be a JSON object")
    unknown = sorted(set(data) - {"base", "parameter", "values", "seeds", "seed_offset"})
    if unknown:
        raise ConfigError(f"unknown sweep key(s): {', '.join(unknown)}")
    for key in ("parameter", "values"):
        if key not in data:
            raise ConfigError(f"sweep config needs {key!r}")
    if not isinstance(data["values"], list) or not data["values"]:
        raise ConfigError("'values' must be a non-empty list")
    sweep = SweepConfig(run_config_from_dict(data.get("base", {})), data["parameter"], data["values"],
                        int(data.get("seeds", 5)), int(data.get("seed_offset", 0)))
    if sweep.seeds < 1:
        raise ConfigError("'seeds' must be >= 1")
    for v in sweep.values:
        set_dotted(sweep.base, sweep.parameter, v)
    return sweep
