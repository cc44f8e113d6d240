"""Experiment configuration: YAML file with nested key-value sections.

Validation errors always name the offending field path so the CLI can
surface actionable line-level diagnostics.
"""

import hashlib
from dataclasses import dataclass

import yaml

from .channel import ArrayConfig, CarrierConfig, Rectangle, SceneConfig


class ConfigError(ValueError):
    """Invalid or missing experiment configuration field."""


def derive_seed(master_seed, stream_name):
    """Stable named-stream seed derivation from the master seed."""
    digest = hashlib.sha256(f"{master_seed}:{stream_name}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _section(mapping, key, path=""):
    where = f"{path}.{key}" if path else key
    if key not in mapping:
        raise ConfigError(f"missing required section '{where}'")
    value = mapping[key]
    if not isinstance(value, dict):
        raise ConfigError(f"section '{where}' must be a mapping")
    return value


def _require(mapping, key, path):
    if key not in mapping:
        raise ConfigError(f"missing required field '{path}.{key}'")
    return mapping[key]


def _number(mapping, key, path, default=None, minimum=None):
    if key not in mapping:
        if default is None:
            raise ConfigError(f"missing required field '{path}.{key}'")
        return default
    value = mapping[key]
    if isinstance(value, str):
        # YAML 1.1 reads "3.5e9" (no sign) as a string; accept it anyway
        try:
            value = float(value)
        except ValueError:
            pass
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"field '{path}.{key}' must be a number")
    if minimum is not None and value < minimum:
        raise ConfigError(f"field '{path}.{key}' must be >= {minimum}")
    return value


def _rectangle(raw, path):
    try:
        x_min, x_max, y_min, y_max = (float(v) for v in raw)
        return Rectangle(x_min, x_max, y_min, y_max)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"field '{path}' must be [x_min, x_max, y_min, y_max]: {err}") from None


@dataclass
class ExperimentConfig:
    seed: int
    scene_fields: dict  # everything for SceneConfig except rng_seed
    array: ArrayConfig
    ul_carrier: CarrierConfig
    dl_carrier: CarrierConfig
    o_v: int
    o_h: int
    calibration_fraction: float
    chart: dict
    train: dict
    backends: list
    tasks: list
    top_k: list

    def scene(self, rng_seed):
        return SceneConfig(rng_seed=rng_seed, **self.scene_fields)


def _carrier(raw, path):
    return CarrierConfig(
        center_frequency=float(_number(raw, "center_frequency", path, minimum=1.0)),
        bandwidth=float(_number(raw, "bandwidth", path, minimum=1.0)),
        n_subcarriers=int(_number(raw, "n_subcarriers", path, minimum=1)),
    )


def load_config(path):
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config file: {err}") from None
    except yaml.YAMLError as err:
        raise ConfigError(f"invalid YAML in {path}: {err}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    return parse_config(raw)


def parse_config(raw):
    scene_raw = _section(raw, "scene")
    bs_positions = _require(scene_raw, "bs_positions", "scene")
    try:
        bs_positions = tuple(tuple(float(c) for c in p) for p in bs_positions)
        if any(len(p) != 3 for p in bs_positions):
            raise ValueError("positions must be 3D")
    except (TypeError, ValueError) as err:
        raise ConfigError(f"field 'scene.bs_positions' must be a list of [x, y, z]: {err}") from None
    orientations = _require(scene_raw, "bs_orientations", "scene")
    if len(orientations) != len(bs_positions):
        raise ConfigError("field 'scene.bs_orientations' must match bs_positions length")

    scene_fields = dict(
        bs_positions=bs_positions,
        bs_orientations=tuple(float(a) for a in orientations),
        ue_area=_rectangle(_require(scene_raw, "ue_area", "scene"), "scene.ue_area"),
        n_ue=int(_number(scene_raw, "n_ue", "scene", minimum=1)),
        n_scatterers=int(_number(scene_raw, "n_scatterers", "scene", minimum=0)),
        scatterer_area=_rectangle(
            _require(scene_raw, "scatterer_area", "scene"), "scene.scatterer_area"
        ),
        ue_height=float(_number(scene_raw, "ue_height", "scene", default=1.5)),
        scatterer_height=float(_number(scene_raw, "scatterer_height", "scene", default=5.0)),
    )

    array_raw = _section(raw, "array")
    array = ArrayConfig(
        n_v=int(_number(array_raw, "n_v", "array", minimum=1)),
        n_h=int(_number(array_raw, "n_h", "array", minimum=1)),
    )

    ul = _carrier(_section(raw, "uplink"), "uplink")
    dl = _carrier(_section(raw, "downlink"), "downlink")

    cb = raw.get("codebook", {})
    split = raw.get("split", {})
    chart_raw = raw.get("chart", {})
    chart = dict(
        n_neighbors=int(_number(chart_raw, "n_neighbors", "chart", default=15, minimum=2)),
        n_components=int(_number(chart_raw, "target_dim", "chart", default=2, minimum=1)),
        oos_neighbors=(
            int(chart_raw["oos_neighbors"]) if "oos_neighbors" in chart_raw else None
        ),
    )
    train_raw = raw.get("train", {})
    train = dict(
        n_frequencies=int(_number(train_raw, "n_frequencies", "train", default=200, minimum=1)),
        hidden_size=int(_number(train_raw, "hidden_size", "train", default=64, minimum=1)),
        sigma=float(_number(train_raw, "sigma", "train", default=1.0)),
        epochs=int(_number(train_raw, "epochs", "train", default=150, minimum=1)),
        batch_size=int(_number(train_raw, "batch_size", "train", default=64, minimum=1)),
        learning_rate=float(_number(train_raw, "learning_rate", "train", default=1e-3)),
    )
    eval_raw = raw.get("evaluate", {})
    backends = list(eval_raw.get("backends", ["rff", "mlp", "nn1"]))
    for b in backends:
        if b not in ("rff", "mlp", "nn1"):
            raise ConfigError(f"field 'evaluate.backends' has unknown backend '{b}'")
    tasks = list(eval_raw.get("tasks", ["classification", "regression"]))
    for t in tasks:
        if t not in ("classification", "regression"):
            raise ConfigError(f"field 'evaluate.tasks' has unknown task '{t}'")
    top_k = [int(k) for k in eval_raw.get("top_k", [1, 3])]

    return ExperimentConfig(
        seed=int(_number(raw, "seed", "", default=0)),
        scene_fields=scene_fields,
        array=array,
        ul_carrier=ul,
        dl_carrier=dl,
        o_v=int(_number(cb, "o_v", "codebook", default=2, minimum=1)),
        o_h=int(_number(cb, "o_h", "codebook", default=2, minimum=1)),
        calibration_fraction=float(
            _number(split, "calibration_fraction", "split", default=0.8)
        ),
        chart=chart,
        train=train,
        backends=backends,
        tasks=tasks,
        top_k=top_k,
    )
