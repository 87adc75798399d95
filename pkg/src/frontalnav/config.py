"""Run configuration: one JSON file, overridable from the command line.

Schema (all keys optional unless noted; relative paths resolve against the
config file's directory)::

    {
      "episodes": ["episodes/"],          # required: episode files or directories
      "worlds_dir": "worlds",             # default: <first episode dir>/../worlds
      "provider": {"kind": "scripted", "script": "script.json"}
               | {"kind": "remote", "endpoint": ..., "model": ..., "temperature": 0,
                  "timeout": 60, "max_retries": 3, "api_key_env": "OPENAI_API_KEY",
                  "max_tokens": null, "max_concurrent": 2},
      "thresholds": {"d_close": 0.5, "d_mid": 4.0},
      "render": {"frontal": {"width": 128, "height": 96, "hfov": 60},
                 "panoramic": {"width": 256, "height": 192, "hfov": 90},
                 "max_range": 10.0},
      "navigator": {"max_steps": 25, "safety_margin": 0.3, "collision_margin": 0.2,
                    "shift_turn": -30, "shift_forward": 0.25, "center_crop_fraction": 0.8,
                    "tagger_range": 8.0, "geodesic_resolution": 0.1,
                    "attach_images": true, "max_reprompts": 2},
      "tagger": "fixture",
      "out": "runs/latest",
      "parallel": 1,
      "seed": 0
    }

API keys are read from the environment variable named by ``api_key_env``
and are rejected if they appear in the file.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from .backend import ProviderConfig
from .navigator import NavConfig
from .perception import CameraIntrinsics, Thresholds
from .simworld import RenderSettings


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, Any] = {
    "episodes": [],
    "worlds_dir": None,
    "provider": {"kind": "scripted", "script": None},
    "thresholds": {"d_close": 0.5, "d_mid": 4.0},
    "render": {
        "frontal": {"width": 128, "height": 96, "hfov": 60.0},
        "panoramic": {"width": 256, "height": 192, "hfov": 90.0},
        "max_range": 10.0,
    },
    "navigator": {
        "max_steps": 25,
        "safety_margin": 0.3,
        "collision_margin": 0.2,
        "shift_turn": -30.0,
        "shift_forward": 0.25,
        "center_crop_fraction": 0.8,
        "tagger_range": 8.0,
        "geodesic_resolution": 0.1,
        "attach_images": True,
        "max_reprompts": 2,
    },
    "tagger": "fixture",
    "out": "runs/latest",
    "parallel": 1,
    "seed": 0,
}

_PROVIDER_KEYS = {
    "endpoint",
    "model",
    "temperature",
    "timeout",
    "max_retries",
    "api_key_env",
    "max_tokens",
    "max_concurrent",
    "backoff_base",
    "backoff_cap",
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base and path not in ("provider",):
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(value, dict) and isinstance(base.get(key), dict) and key != "provider":
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path

    @classmethod
    def load(cls, path: Optional[Path] = None, overrides: Optional[dict] = None) -> "RunConfig":
        raw: dict = {}
        base = Path.cwd()
        if path is not None:
            path = Path(path)
            try:
                raw = json.loads(path.read_text(encoding="utf-8"))
            except FileNotFoundError:
                raise ConfigError(f"config file {path} not found") from None
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
            if not isinstance(raw, dict):
                raise ConfigError(f"{path}: config must be a JSON object")
            base = path.resolve().parent
        merged = _merge(DEFAULTS, raw)
        # file-relative paths become absolute before command-line overrides apply
        merged["episodes"] = [str((base / p).resolve()) for p in merged["episodes"]]
        for key in ("worlds_dir", "out"):
            if merged[key] is not None:
                merged[key] = str((base / merged[key]).resolve())
        if merged["provider"].get("script"):
            merged["provider"]["script"] = str((base / merged["provider"]["script"]).resolve())
        for key, value in (overrides or {}).items():
            if value is None:
                continue
            if key == "max_steps":
                merged["navigator"]["max_steps"] = value
            elif key == "provider_kind":
                merged["provider"]["kind"] = value
            elif key == "script":
                merged["provider"]["script"] = str(Path(value).resolve())
            elif key == "episodes":
                merged["episodes"] = [str(Path(p).resolve()) for p in value]
            elif key in ("out", "worlds_dir"):
                merged[key] = str(Path(value).resolve())
            else:
                merged[key] = value
        cfg = cls(merged, base)
        cfg.validate()
        return cfg

    # ------------------------------------------------------------------

    def validate(self) -> None:
        r = self.raw
        if not r["episodes"]:
            raise ConfigError("no episodes given (config 'episodes' or --episodes)")
        for p in r["episodes"]:
            if not Path(p).exists():
                raise ConfigError(f"episode path {p} does not exist")
        if not isinstance(r["parallel"], int) or r["parallel"] < 1:
            raise ConfigError("parallel must be an integer >= 1")
        prov = r["provider"]
        if "api_key" in prov:
            raise ConfigError("API keys belong in the environment, not the config file")
        kind = prov.get("kind")
        if kind == "scripted":
            script = prov.get("script")
            if not script or not Path(script).exists():
                raise ConfigError(f"scripted provider needs an existing script file (got {script})")
        elif kind == "remote":
            unknown = set(prov) - _PROVIDER_KEYS - {"kind", "script"}
            if unknown:
                raise ConfigError(f"unknown provider keys: {sorted(unknown)}")
        else:
            raise ConfigError(f"provider kind must be 'scripted' or 'remote', got {kind!r}")
        if r["tagger"] != "fixture":
            raise ConfigError(f"unknown tagger {r['tagger']!r}")
        if self.worlds_dir is not None and not self.worlds_dir.is_dir():
            raise ConfigError(f"worlds directory {self.worlds_dir} does not exist")
        try:
            self.nav_config()
            if kind == "remote":
                self.provider_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid setting: {exc}") from None

    # ------------------------------------------------------------------

    @property
    def episode_files(self) -> list[Path]:
        files: list[Path] = []
        for p in map(Path, self.raw["episodes"]):
            files.extend(sorted(p.glob("*.json")) if p.is_dir() else [p])
        return files

    @property
    def worlds_dir(self) -> Optional[Path]:
        if self.raw["worlds_dir"]:
            return Path(self.raw["worlds_dir"])
        files = self.episode_files
        return files[0].parent.parent / "worlds" if files else None

    @property
    def out_dir(self) -> Path:
        return Path(self.raw["out"])

    @property
    def parallel(self) -> int:
        return self.raw["parallel"]

    def nav_config(self) -> NavConfig:
        rd = self.raw["render"]
        render = RenderSettings(
            frontal=CameraIntrinsics.from_fov(**rd["frontal"]),
            panoramic=CameraIntrinsics.from_fov(**rd["panoramic"]),
            max_range=float(rd["max_range"]),
        )
        nav = dict(self.raw["navigator"])
        return NavConfig(thresholds=Thresholds(**self.raw["thresholds"]), render=render, **nav)

    def provider_config(self) -> ProviderConfig:
        prov = {k: v for k, v in self.raw["provider"].items() if k in _PROVIDER_KEYS}
        return ProviderConfig(**prov)

    def effective(self) -> dict:
        return copy.deepcopy(self.raw)
