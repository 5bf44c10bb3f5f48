"""Experiment configuration: JSON loading, validation and hashing.

A config file is a JSON object with the sections shown in the packaged
``default_config.json``. Any section or key left out takes the packaged
default, so a user file only needs the values it changes. Units are part
of the key names.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Any

from .detection import CollectionGeometry, SourceRates, VisibilityTable
from .errors import ConfigError, InvalidArgumentError, SellmeierRangeError
from .interferometer import ControllerParams, NoiseModel, PathGeometry
from .phasematching import CrystalSpec, SellmeierSet, load_sellmeier, parse_sellmeier

DEFAULT_CONFIG_FILE = "default_config.json"


def _packaged_text(name: str) -> str:
    return resources.files("dualspdc.data").joinpath(name).read_text(encoding="utf-8")


def default_config_dict() -> dict:
    return json.loads(_packaged_text(DEFAULT_CONFIG_FILE))


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key != "visibility_table":
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def config_hash(raw: dict) -> str:
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _filter_bandwidth(key: str) -> float | None:
    if key == "none":
        return None
    if key.endswith("nm"):
        try:
            return float(key[:-2])
        except ValueError:
            pass
    raise ConfigError(f"filter must be 'none' or like '3nm', got {key!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict
    hash: str
    seed: int
    output_dir: Path
    crystal: CrystalSpec
    sellmeier: SellmeierSet
    source: SourceRates
    collection: CollectionGeometry
    visibility_table: VisibilityTable
    target_phase: float  # rad
    lock_geometry: PathGeometry
    lock_noise: NoiseModel
    lock_controller: ControllerParams
    lock_duration: float
    lock_threshold: float

    def section(self, name: str) -> dict[str, Any]:
        return self.raw[name]

    def geometry(self, iris_diameter_mm: float | None = None, filter_key: str | None = None) -> CollectionGeometry:
        return _geometry(self.raw["collection"], iris_diameter_mm, filter_key)

    def source_at(self, pump_power_mw: float | None) -> SourceRates:
        if pump_power_mw is None:
            return self.source
        return replace(self.source, pump_power_mw=float(pump_power_mw))


def _geometry(c: dict, iris_diameter_mm: float | None = None, filter_key: str | None = None) -> CollectionGeometry:
    return CollectionGeometry(
        iris_diameter_mm=float(c["iris_diameter_mm"] if iris_diameter_mm is None else iris_diameter_mm),
        filter_bandwidth_nm=_filter_bandwidth(c["filter"] if filter_key is None else filter_key),
        solid_angle_sr_at_1mm=float(c["solid_angle_sr_at_1mm"]),
        calibration_diameter_mm=float(c["calibration_diameter_mm"]),
        saturation_diameter_mm=float(c["saturation_diameter_mm"]),
    )


def _resolve_sellmeier(name: str, base_dir: Path | None) -> SellmeierSet:
    if base_dir is not None and (base_dir / name).is_file():
        return load_sellmeier(base_dir / name)
    if Path(name).is_absolute() and Path(name).is_file():
        return load_sellmeier(name)
    try:
        text = _packaged_text(name)
    except (FileNotFoundError, OSError):
        raise ConfigError(f"Sellmeier file {name!r} not found") from None
    return parse_sellmeier(json.loads(text), source=name)


def build_config(raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
    """Validate a merged config dict and construct the typed objects."""
    try:
        cr, src, lock = raw["crystal"], raw["source"], raw["lock"]
        crystal = CrystalSpec(
            length_mm=float(cr["length_mm"]),
            grating_period_um=float(cr["grating_period_um"]),
            pump_wavelength_nm=float(cr["pump_wavelength_nm"]),
            temperature_offset_C=float(cr["temperature_offset_C"]),
        )
        sellmeier = _resolve_sellmeier(str(raw["sellmeier_file"]), base_dir)
        source = SourceRates(
            pair_rate_per_mw=float(src["pair_rate_per_mW"]),
            pump_power_mw=float(src["pump_power_mW"]),
            eta1=float(src["eta1"]),
            eta2=float(src["eta2"]),
            dark1=float(src["dark1_per_s"]),
            dark2=float(src["dark2_per_s"]),
            window=float(src["window_ns"]) * 1e-9,
        )
        table = VisibilityTable.from_dict(raw["visibility_table"])
        lock_geometry = PathGeometry(
            L_A=float(lock["L_A_m"]),
            L_B=float(lock["L_B_m"]),
            Lp_A=float(lock["Lp_A_m"]),
            Lp_B=float(lock["Lp_B_m"]),
            hwp_offset=math.radians(float(lock["hwp_offset_deg"])),
        )
        noise = NoiseModel(step_rms=float(lock["noise_step_rms_rad"]), drift_per_s=float(lock["drift_rad_per_s"]))
        controller = ControllerParams(
            gain=float(lock["gain"]),
            sample_rate_hz=float(lock["sample_rate_hz"]),
            fringe_visibility=float(lock["fringe_visibility"]),
            pump_power_mw=source.pump_power_mw,
            tap=float(lock["tap"]),
            travel_m=float(lock["travel_um"]) * 1e-6,
        )
        cfg = ExperimentConfig(
            raw=raw,
            hash=config_hash(raw),
            seed=int(raw["seed"]),
            output_dir=Path(raw["output_dir"]),
            crystal=crystal,
            sellmeier=sellmeier,
            source=source,
            collection=_geometry(raw["collection"]),
            visibility_table=table,
            target_phase=math.radians(float(raw["state"]["target_phase_deg"])),
            lock_geometry=lock_geometry,
            lock_noise=noise,
            lock_controller=controller,
            lock_duration=float(lock["duration_s"]),
            lock_threshold=float(lock["residual_threshold_rad"]),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, InvalidArgumentError, SellmeierRangeError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    if cfg.collection.filter_key not in table.curves:
        raise ConfigError(f"visibility table has no curve for filter {cfg.collection.filter_key!r}")
    if not (0 < controller.fringe_visibility <= 1 and 0 < controller.tap <= 1):
        raise ConfigError("lock fringe_visibility and tap must lie in (0, 1]")
    if cfg.lock_duration <= 0 or controller.sample_rate_hz <= 0:
        raise ConfigError("lock duration and sample rate must be positive")
    return cfg


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Read a JSON config, fill in packaged defaults, validate."""
    raw = default_config_dict()
    base_dir = None
    if path is not None:
        path = Path(path)
        try:
            user = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config root must be a JSON object")
        raw = _merge(raw, user)
        base_dir = path.parent
    if overrides:
        raw = _merge(raw, overrides)
    return build_config(raw, base_dir)
