"""Run configuration: a YAML tree validated against built-in defaults.

Every key a run may use appears in :data:`DEFAULTS`; unknown keys are
rejected. ``--set a.b=value`` overrides parse ``value`` as YAML, so numbers,
booleans, lists and ``null`` work as expected.
"""
from __future__ import annotations

import copy
from pathlib import Path
from typing import Iterable, Optional

import yaml

from .chirp import ChirpSpec
from .errors import ConfigError

COMMANDS = ("simulate", "preprocess", "train", "eval", "activate")

DEFAULTS: dict = {
    "seed": 0,
    "chirp": ChirpSpec().to_dict(),
    "scene": {
        "speaker_pos": [0.0, 0.0, 0.07],
        "mic_radius_m": 0.045,
        "mic_height_m": 0.03,
        "surface_plane_enabled": True,
        "noise_snr_db": None,
        "audible_noise_snr_db": None,
        "ultrasound_gain_db": 0.0,
        "start_offset_samples": 0,
        "room_id": "room0",
        "clutter_objects": 4,
        "static_scatterers": [],  # [{position: [x, y, z], reflectivity: r}, ...]
        "reflectivity_per_joint": 0.02,
    },
    "simulate": {
        "kind": "mixed",
        "duration_s": 120.0,
        "session_id": None,  # default: <subject>_<kind>_<seed>
        "subject_id": "s0",
        "hand_scale": None,  # default: derived from subject id and seed
        "template_every": 0,
    },
    "preprocess": {
        "manifests": [],
        "stride": 50,
        "augment": 0,
        "cutoff_hz": 17000.0,
    },
    "train": {
        "manifests": [],
        "val_manifests": [],
        "val_fraction": 0.1,
        "curriculum": True,
        "model": {
            "conv_channels": [16, 32],
            "hidden": 128,
            "learning_rate": 1e-3,
            "batch_size": 32,
            "epochs_per_stage": 1.0,
            "steps_per_stage": 0,
            "bn_momentum": 0.1,
            "clip_norm": 5.0,
        },
    },
    "eval": {
        "checkpoint": None,
        "manifests": [],
        "cv": "none",  # none | subject | room
    },
    "activate": {
        "poses": None,  # pose CSV; null simulates a mixed stream with template insertions
        "duration_s": 60.0,
        "template_every": 3,
        "threshold": None,  # null uses the built-in default
        "debounce": 3,
        "pose_noise_mm": 0.0,
    },
}


def _merge(base: dict, update: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in (update or {}).items():
        key = f"{path}{k}"
        if k not in base:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"config key {key!r} must be a mapping")
            out[k] = _merge(base[k], v, key + ".")
        else:
            out[k] = v
    return out


def parse_override(item: str) -> tuple:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    try:
        value = yaml.safe_load(raw) if raw != "" else ""
    except yaml.YAMLError as exc:
        raise ConfigError(f"override {item!r}: {exc}") from exc
    return key.strip(), value


def apply_override(cfg: dict, key: str, value) -> None:
    parts = key.split(".")
    node = cfg
    for i, p in enumerate(parts[:-1]):
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(f"unknown config key {'.'.join(parts[: i + 1])!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key {key!r}")
    if isinstance(node[parts[-1]], dict):
        raise ConfigError(f"config key {key!r} is a section; set its fields instead")
    node[parts[-1]] = value


def load_config(path: Optional[str], overrides: Iterable[str] = (), seed: Optional[int] = None) -> dict:
    user = {}
    if path is not None:
        try:
            user = yaml.safe_load(Path(path).read_text()) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"config {path} must hold a mapping")
    cfg = _merge(DEFAULTS, user)
    for item in overrides:
        apply_override(cfg, *parse_override(item))
    if seed is not None:
        cfg["seed"] = int(seed)
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    ChirpSpec.from_dict(cfg["chirp"])
    if not isinstance(cfg["seed"], int):
        raise ConfigError("seed must be an integer")
    if cfg["eval"]["cv"] not in ("none", "subject", "room"):
        raise ConfigError(f"eval.cv must be none, subject or room, got {cfg['eval']['cv']!r}")
    if int(cfg["preprocess"]["stride"]) < 1:
        raise ConfigError("preprocess.stride must be >= 1")
    if int(cfg["preprocess"]["augment"]) not in range(0, 7):
        raise ConfigError("preprocess.augment must be between 0 and 6")
    for s in cfg["scene"]["static_scatterers"]:
        if not isinstance(s, dict) or set(s) - {"position", "reflectivity"} or "position" not in s:
            raise ConfigError("scene.static_scatterers entries need 'position' and optional 'reflectivity'")


def dump_config(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=True)
