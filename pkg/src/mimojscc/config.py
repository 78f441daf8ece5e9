"""Experiment configuration files: flat INI-style key=value with sections.

Every key is schema-checked and unknown keys or sections are rejected
outright, so a config file is a complete, diffable record of an experiment.
All derived quantities (channel uses, sequence length, patch width) are
validated as integers before anything runs.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from fractions import Fraction

from .frontend import CsiMode
from .model import ConfigError, ModelConfig, PAPER_PROFILE, TINY_PROFILE
from .pipeline import TrainSettings

__all__ = ["ExperimentConfig", "ConfigError", "load_config"]

_PROFILES = {"tiny": TINY_PROFILE, "paper": PAPER_PROFILE}

# section -> key -> parser
_SCHEMA = {
    "experiment": {
        "mode": str,
        "m": int,
        "bandwidth_ratio": str,
        "image_height": int,
        "image_width": int,
        "adaptive_m": "bool",
        "allow_csit_estimation_error": "bool",
    },
    "model": {
        "profile": str,
        "patch_grid": int,
        "embed_dim": int,
        "depth": int,
        "heads": int,
        "mlp_width": int,
        "sentinel": float,
    },
    "train": {
        "snr_db": float,
        "snr_range_db": "floatlist",
        "steps": int,
        "batch_size": int,
        "lr": float,
        "eval_every": int,
        "patience": int,
        "min_improvement_db": float,
        "val_snr_db": float,
        "val_draws": int,
        "sigma_e2": float,
        "seed": int,
    },
    "data": {
        "source": str,
        "n_images": int,
        "directory": str,
        "seed": int,
    },
    "eval": {
        "snr_list": "floatlist",
        "sigma_e2_list": "floatlist",
        "m_list": "intlist",
        "seeds": "intlist",
        "n_channel_draws": int,
        "split": str,
        "psnr_peak": str,
    },
    "baseline": {
        "codec": str,
        "compress_cmd": str,
        "decode_cmd": str,
        "qualities": "intlist",
    },
    "output": {
        "dir": str,
    },
}

_DEFAULTS = {
    "experiment": {
        "mode": "csit",
        "m": 2,
        "bandwidth_ratio": "1/12",
        "image_height": 8,
        "image_width": 8,
        "adaptive_m": False,
        "allow_csit_estimation_error": False,
    },
    "model": {
        "profile": "tiny",
        "patch_grid": None,
        "embed_dim": None,
        "depth": None,
        "heads": None,
        "mlp_width": 0,
        "sentinel": 1e3,
    },
    "train": {
        "snr_db": None,
        "snr_range_db": None,
        "steps": 2000,
        "batch_size": 8,
        "lr": 5e-5,
        "eval_every": 200,
        "patience": 10,
        "min_improvement_db": 0.01,
        "val_snr_db": None,
        "val_draws": 4,
        "sigma_e2": 0.0,
        "seed": 1,
    },
    "data": {
        "source": "synthetic",
        "n_images": 256,
        "directory": "",
        "seed": 7,
    },
    "eval": {
        "snr_list": [0.0, 10.0, 20.0],
        "sigma_e2_list": [0.0],
        "m_list": [],
        "seeds": [1],
        "n_channel_draws": 10,
        "split": "val",
        "psnr_peak": "fixed",
    },
    "baseline": {
        "codec": "toy",
        "compress_cmd": "",
        "decode_cmd": "",
        "qualities": [],
    },
    "output": {
        "dir": "runs/default",
    },
}


def _parse_value(section: str, key: str, raw: str):
    kind = _SCHEMA[section][key]
    raw = raw.strip()
    try:
        if kind is str:
            return raw
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: {raw}")
        if kind == "floatlist":
            return [float(tok) for tok in raw.split(",") if tok.strip()]
        if kind == "intlist":
            return [int(tok) for tok in raw.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from exc
    raise AssertionError(f"unhandled schema kind {kind}")  # pragma: no cover


@dataclass
class ExperimentConfig:
    """Validated contents of one experiment file."""

    values: dict = field(default_factory=dict)
    path: str = ""

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    # -- derived objects ---------------------------------------------------

    @property
    def mode(self) -> CsiMode:
        return CsiMode(self.values["experiment"]["mode"])

    @property
    def bandwidth_ratio(self) -> Fraction:
        return Fraction(self.values["experiment"]["bandwidth_ratio"])

    @property
    def k(self) -> int:
        exp = self.values["experiment"]
        n = 3 * exp["image_height"] * exp["image_width"]
        k = self.bandwidth_ratio * n
        if k.denominator != 1:
            raise ConfigError(
                f"bandwidth_ratio {self.bandwidth_ratio} gives non-integral channel uses for n={n}"
            )
        return int(k)

    def model_config(self) -> ModelConfig:
        exp = self.values["experiment"]
        mdl = self.values["model"]
        trn = self.values["train"]
        profile = dict(_PROFILES[mdl["profile"]])
        cfg = dict(
            mode=self.mode,
            m_max=exp["m"],
            k=self.k,
            p=mdl["patch_grid"] if mdl["patch_grid"] is not None else profile["p"],
            d=mdl["embed_dim"] if mdl["embed_dim"] is not None else profile["d"],
            n_heads=mdl["heads"] if mdl["heads"] is not None else profile["n_heads"],
            depth=mdl["depth"] if mdl["depth"] is not None else profile["depth"],
            h=exp["image_height"],
            w=exp["image_width"],
            adaptive_m=exp["adaptive_m"],
            d_mlp=mdl["mlp_width"],
            sentinel=mdl["sentinel"],
        )
        if trn["snr_range_db"] is not None:
            if trn["snr_db"] is not None:
                raise ConfigError("[train] give either snr_db or snr_range_db, not both")
            rng = trn["snr_range_db"]
            if len(rng) != 2:
                raise ConfigError("[train] snr_range_db must be two comma-separated values")
            cfg["snr_lo"], cfg["snr_hi"] = rng
        else:
            snr = trn["snr_db"] if trn["snr_db"] is not None else 10.0
            cfg["snr_lo"] = cfg["snr_hi"] = snr
        model_cfg = ModelConfig(**cfg)
        model_cfg.validate()
        return model_cfg

    def train_settings(self) -> TrainSettings:
        trn = self.values["train"]
        return TrainSettings(
            steps=trn["steps"],
            batch_size=trn["batch_size"],
            lr=trn["lr"],
            eval_every=trn["eval_every"],
            patience=trn["patience"],
            min_improvement_db=trn["min_improvement_db"],
            val_snr_db=trn["val_snr_db"],
            val_draws=trn["val_draws"],
            sigma_e2=trn["sigma_e2"],
        )

    def eval_m_list(self) -> list[int]:
        exp = self.values["experiment"]
        ms = self.values["eval"]["m_list"] or [exp["m"]]
        if exp["adaptive_m"]:
            bad = [m for m in ms if not 2 <= m <= exp["m"]]
        else:
            bad = [m for m in ms if m != exp["m"]]
        if bad:
            raise ConfigError(f"[eval] m_list entries {bad} invalid for this model")
        return ms

    def validate(self) -> "ExperimentConfig":
        exp = self.values["experiment"]
        if exp["mode"] not in ("csir", "csit"):
            raise ConfigError(f"[experiment] mode must be csir or csit, got {exp['mode']}")
        self.model_config()  # validates all derived dimensions
        sig_train = self.values["train"]["sigma_e2"]
        sig_eval = self.values["eval"]["sigma_e2_list"]
        if self.mode is CsiMode.CSIT and not exp["allow_csit_estimation_error"]:
            if sig_train > 0 or any(s > 0 for s in sig_eval):
                raise ConfigError(
                    "estimation error in the closed loop requires "
                    "[experiment] allow_csit_estimation_error = true"
                )
        if self.values["data"]["source"] not in ("synthetic", "directory"):
            raise ConfigError("[data] source must be synthetic or directory")
        if self.values["data"]["source"] == "directory" and not self.values["data"]["directory"]:
            raise ConfigError("[data] directory is required when source = directory")
        if self.values["eval"]["split"] not in ("val", "train", "all"):
            raise ConfigError("[eval] split must be val, train or all")
        if self.values["eval"]["psnr_peak"] not in ("fixed", "per_image"):
            raise ConfigError("[eval] psnr_peak must be fixed or per_image")
        if self.values["baseline"]["codec"] not in ("toy", "external"):
            raise ConfigError("[baseline] codec must be toy or external")
        self.eval_m_list()
        return self

    def load_dataset(self) -> list:
        from .data import load_images, synth_dataset

        data = self.values["data"]
        exp = self.values["experiment"]
        if data["source"] == "synthetic":
            return synth_dataset(data["n_images"], exp["image_height"], exp["image_width"], data["seed"])
        return load_images(data["directory"], exp["image_height"], exp["image_width"])


def load_config(path: str) -> ExperimentConfig:
    """Parse and validate an experiment file; any unknown key is an error."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    values = {sec: dict(defaults) for sec, defaults in _DEFAULTS.items()}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}] in {path}")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key '{key}' in section [{section}] of {path}")
            values[section][key] = _parse_value(section, key, raw)
    cfg = ExperimentConfig(values=values, path=path)
    return cfg.validate()
