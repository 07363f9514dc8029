"""Settings manager to load, validate, and persist calibration settings."""
from __future__ import annotations

import json
import os
from typing import Any, Optional

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

import config
from errors import InvalidParams


class FeatureSettings(BaseModel):
    min_plane_points: int = Field(default=config.MIN_PLANE_POINTS, ge=3)
    planarity_ratio: float = Field(default=config.PLANARITY_RATIO, ge=1.0)
    tangent_step: float = Field(default=config.TANGENT_STEP, gt=0.0)
    plane_pair_max_angle: float = Field(default=config.PLANE_PAIR_MAX_ANGLE, gt=0.0)


class AssociationSettings(BaseModel):
    match_max_dist: float = Field(default=config.MATCH_MAX_DIST, gt=0.0)
    candidate_gate: float = Field(default=config.CANDIDATE_GATE, gt=0.0)
    candidate_cap: int = Field(default=config.CANDIDATE_CAP, ge=1)
    wedge_margin: float = Field(default=config.WEDGE_MARGIN, ge=0.0)
    consensus_bin: float = Field(default=config.CONSENSUS_BIN, gt=0.0)
    consensus_min_support: int = Field(default=config.CONSENSUS_MIN_SUPPORT, ge=1)
    # "A|B" -> (center azimuth, half width), radians, vehicle frame
    wedge_overrides: dict[str, tuple[float, float]] = Field(default_factory=dict)

    @field_validator('wedge_overrides')
    @classmethod
    def validate_overrides(cls, v):
        for key, (_, half_width) in v.items():
            if key.count("|") != 1:
                raise ValueError(f"wedge override key must look like 'A|B', got '{key}'")
            if half_width <= 0:
                raise ValueError(f"wedge override {key}: half width must be positive")
        return v


class YawSettings(BaseModel):
    tol: float = Field(default=config.YAW_TOL, gt=0.0)
    max_iters: int = Field(default=config.YAW_MAX_ITERS, ge=1)
    grid_samples: int = Field(default=config.YAW_GRID_SAMPLES, ge=8)
    local_search: float = Field(default=config.YAW_LOCAL_SEARCH, gt=0.0)
    local_samples: int = Field(default=config.YAW_LOCAL_SAMPLES, ge=3)
    min_excitation: float = Field(default=config.MIN_YAW_EXCITATION, ge=0.0)
    workers: int = Field(default=1, ge=1)


class MipSettings(BaseModel):
    lam: float = Field(default=config.MIP_LAMBDA, gt=0.0)
    gamma: float = Field(default=config.MIP_GAMMA, gt=0.0)
    rho: float = Field(default=config.MIP_RHO, ge=0.0)
    gap_tol: float = Field(default=config.MIP_GAP_TOL, ge=0.0)
    node_limit: int = Field(default=config.MIP_NODE_LIMIT, ge=1)
    time_limit: Optional[float] = Field(default=config.MIP_TIME_LIMIT or None, gt=0.0)
    consensus_radius: float = Field(default=config.MIP_CONSENSUS_RADIUS, gt=0.0)
    core_cap: int = Field(default=config.MIP_CORE_CAP, ge=1)
    big_m: Optional[float] = None

    @model_validator(mode='after')
    def validate_big_m(self):
        if self.big_m is not None and self.big_m <= self.lam:
            raise ValueError(f"big_m ({self.big_m}) must exceed lambda ({self.lam})")
        return self


class RefineSettings(BaseModel):
    w_reg: float = Field(default=config.REFINE_WEIGHT_REG, ge=0.0)
    w_pole: float = Field(default=config.REFINE_WEIGHT_POLE, ge=0.0)
    w_plane: float = Field(default=config.REFINE_WEIGHT_PLANE, ge=0.0)
    w_angle: float = Field(default=config.REFINE_WEIGHT_ANGLE, ge=0.0)
    max_iters: int = Field(default=config.REFINE_MAX_ITERS, ge=1)
    robust_scale: float = Field(default=config.REFINE_ROBUST_SCALE, gt=0.0)
    anchor_sensor: str = config.ANCHOR_SENSOR
    align_egomotion: bool = True

    @field_validator('align_egomotion', mode='before')
    @classmethod
    def validate_bool_from_string(cls, v):
        """Strict boolean parsing so the string "false" is not truthy."""
        if isinstance(v, bool):
            return v
        if isinstance(v, int):
            return bool(v)
        if isinstance(v, str):
            lower = v.lower().strip()
            if lower in ('true', '1', 'yes', 'on'):
                return True
            if lower in ('false', '0', 'no', 'off'):
                return False
            raise ValueError(f"Invalid boolean string: '{v}'")
        raise TypeError(f"Cannot convert {type(v).__name__} to bool")


class OnlineSettings(BaseModel):
    window: int = Field(default=config.ONLINE_WINDOW, ge=2)
    alpha: float = Field(default=config.ONLINE_ALPHA, gt=0.0, le=1.0)
    pair_gate: float = Field(default=config.ONLINE_PAIR_GATE, gt=0.0)
    yaw_search: float = Field(default=config.ONLINE_YAW_SEARCH, gt=0.0)
    rho_xy: float = Field(default=config.ONLINE_RHO_XY, ge=0.0)
    rho_yaw: float = Field(default=config.ONLINE_RHO_YAW, ge=0.0)
    min_travel: float = Field(default=config.ONLINE_MIN_TRAVEL, ge=0.0)
    yaw_samples: int = Field(default=config.ONLINE_YAW_SAMPLES, ge=3)
    refine_iters: int = Field(default=config.ONLINE_REFINE_ITERS, ge=1)


class IoSettings(BaseModel):
    sync_tol: float = Field(default=config.SYNC_TOL, ge=0.0)


class CalibrationSettings(BaseModel):
    """All tunables of the offline and online pipelines, defaults from config."""
    features: FeatureSettings = Field(default_factory=FeatureSettings)
    association: AssociationSettings = Field(default_factory=AssociationSettings)
    yaw: YawSettings = Field(default_factory=YawSettings)
    mip: MipSettings = Field(default_factory=MipSettings)
    refine: RefineSettings = Field(default_factory=RefineSettings)
    online: OnlineSettings = Field(default_factory=OnlineSettings)
    io: IoSettings = Field(default_factory=IoSettings)

    model_config = {"frozen": False}


SECTIONS = tuple(CalibrationSettings.model_fields.keys())

# CLI flag (argparse dest) -> dotted settings key
CLI_OVERRIDES = {
    "lam": "mip.lam",
    "gamma": "mip.gamma",
    "anchor_sensor": "refine.anchor_sensor",
    "window": "online.window",
    "alpha": "online.alpha",
}


def _merge(base: dict, updates: dict) -> dict:
    merged = dict(base)
    for key, value in updates.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict) and key != "wedge_overrides":
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _expand_dotted(updates: dict) -> dict:
    """Turn {"mip.lam": 0.3} into {"mip": {"lam": 0.3}}."""
    nested: dict[str, Any] = {}
    for key, value in updates.items():
        if "." in key:
            section, name = key.split(".", 1)
            nested.setdefault(section, {})[name] = value
        else:
            nested[key] = value
    return nested


class SettingsManager:
    """Holds the active CalibrationSettings; JSON file and CLI overrides on top of config defaults."""

    def __init__(self, path: Optional[str] = None):
        self.path = path
        self.state = CalibrationSettings()
        if path:
            self.load(path)

    @property
    def settings(self) -> CalibrationSettings:
        return self.state

    def snapshot(self) -> dict:
        return self.state.model_dump(mode="json")

    def load(self, path: str):
        """Apply a JSON override file. A missing file is an error; an unknown section is too."""
        if not os.path.exists(path):
            raise InvalidParams(f"settings file not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise InvalidParams(f"settings file {path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise InvalidParams(f"settings file {path} must contain a JSON object")
        self.apply_updates(data)

    def save(self, path: Optional[str] = None):
        path = path or self.path
        if not path:
            return
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.snapshot(), f, indent=2, sort_keys=True)

    def apply_updates(self, updates: dict):
        """Merge nested or dotted-key updates and re-validate the whole model."""
        updates = _expand_dotted(updates)
        unknown = set(updates) - set(SECTIONS)
        if unknown:
            raise InvalidParams(f"unknown settings sections: {sorted(unknown)}")
        current = _merge(self.state.model_dump(), updates)
        try:
            self.state = CalibrationSettings(**current)
        except ValidationError as e:
            raise InvalidParams(f"settings validation failed: {e}") from e

    def apply_cli(self, args: Any):
        """Apply argparse values that were actually given (None means not set)."""
        updates = {}
        for dest, key in CLI_OVERRIDES.items():
            value = getattr(args, dest, None)
            if value is not None:
                updates[key] = value
        if updates:
            self.apply_updates(updates)


def resolve(settings: Optional[CalibrationSettings]) -> CalibrationSettings:
    return settings if settings is not None else CalibrationSettings()
