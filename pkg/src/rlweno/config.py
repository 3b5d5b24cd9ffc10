"""Versioned JSON experiment configuration with strict validation: unknown
keys are rejected and every violation is reported with its field path.
Seeds are split into named streams so changing one component's seed leaves
the others untouched.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .core import FLUXES
from .sl import SlConfig
from .td3 import Td3Config

SCHEMA_VERSION = 1
SETTINGS = ("inviscid", "forcing", "viscous")
METHODS = ("weno", "rl", "sl")


class ConfigValidationError(ValueError):
    def __init__(self, violations: List[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


@dataclass
class SeedStreams:
    init: int = 0
    ic: int = 1000
    forcing: int = 2000
    buffer: int = 3000
    noise: int = 4000
    eval: int = 5000


@dataclass
class EvalOptions:
    theta: float = 10.0        # singularity gradient threshold
    halo: int = 2
    repetitions: int = 20      # timing benchmark repeats


@dataclass
class ExperimentConfig:
    setting: str = "inviscid"
    flux: str = "burgers_half_u2"
    domain: Tuple[float, float] = (-1.0, 1.0)
    grids: List[Tuple[float, float]] = field(
        default_factory=lambda: [(0.02, 0.002), (0.04, 0.004), (0.05, 0.005)])
    train_grids: List[Tuple[float, float]] = field(
        default_factory=lambda: [(0.02, 0.002), (0.04, 0.004)])
    etas: List[float] = field(default_factory=lambda: [0.0])
    train_eta: float = 0.0
    n_train: int = 25
    n_test: int = 25
    c_train: List[int] = field(default_factory=lambda: [8])
    c_test: List[int] = field(default_factory=lambda: [4, 6])
    test_T: float = 0.9
    train_T_range: Tuple[float, float] = (0.25, 1.0)
    method: str = "weno"
    checkpoint: Optional[str] = None
    seeds: SeedStreams = field(default_factory=SeedStreams)
    td3: Td3Config = field(default_factory=Td3Config)
    sl: SlConfig = field(default_factory=SlConfig)
    eval: EvalOptions = field(default_factory=EvalOptions)
    out_dir: str = "out"

    def test_seed_list(self) -> List[int]:
        return [self.seeds.ic + 500 + i for i in range(self.n_test)]

    def train_seed_list(self) -> List[int]:
        return [self.seeds.ic + i for i in range(self.n_train)]


def default_config(setting: str) -> ExperimentConfig:
    cfg = ExperimentConfig(setting=setting)
    if setting == "forcing":
        cfg.domain = (0.0, 2.0 * np.pi)
        cfg.grids = [(0.02 * np.pi, 0.002 * np.pi), (0.04 * np.pi, 0.004 * np.pi),
                     (0.05 * np.pi, 0.005 * np.pi)]
        cfg.train_grids = [(0.02 * np.pi, 0.002 * np.pi), (0.04 * np.pi, 0.004 * np.pi)]
        cfg.etas = [0.01, 0.02, 0.04]
        cfg.train_eta = 0.01
        cfg.test_T = 0.9 * np.pi
        cfg.train_T_range = (0.25 * np.pi, np.pi)
    elif setting == "viscous":
        cfg.etas = [0.01, 0.02, 0.04]
        cfg.train_eta = 0.01
        cfg.c_train = [4, 6]
    return cfg


def _update_dataclass(obj, data: dict, path: str, errors: List[str]):
    fields = {f.name: f for f in obj.__dataclass_fields__.values()}
    for key, value in data.items():
        if key not in fields:
            errors.append(f"{path}{key}: unknown key")
            continue
        current = getattr(obj, key)
        if hasattr(current, "__dataclass_fields__"):
            if not isinstance(value, dict):
                errors.append(f"{path}{key}: expected an object")
            else:
                _update_dataclass(current, value, f"{path}{key}.", errors)
        else:
            setattr(obj, key, _coerce(value))
    return obj


def _coerce(value):
    if isinstance(value, list):
        return [tuple(v) if isinstance(v, list) else v for v in value]
    return value


def _normalize(cfg: ExperimentConfig) -> None:
    """Coerce JSON collections to the dataclass's canonical types so
    parse(serialize(cfg)) round-trips to an equal config."""
    cfg.domain = tuple(float(v) for v in cfg.domain)
    cfg.train_T_range = tuple(float(v) for v in cfg.train_T_range)
    cfg.grids = [tuple(float(v) for v in g) for g in cfg.grids]
    cfg.train_grids = [tuple(float(v) for v in g) for g in cfg.train_grids]
    cfg.etas = [float(v) for v in cfg.etas]
    cfg.c_train = [int(v) for v in cfg.c_train]
    cfg.c_test = [int(v) for v in cfg.c_test]


def validate(cfg: ExperimentConfig) -> List[str]:
    errs: List[str] = []
    if cfg.setting not in SETTINGS:
        errs.append(f"setting: must be one of {SETTINGS}")
    if cfg.flux not in FLUXES:
        errs.append(f"flux: unknown tag {cfg.flux!r}")
    if cfg.method not in METHODS:
        errs.append(f"method: must be one of {METHODS}")
    if not cfg.grids:
        errs.append("grids: must be nonempty")
    for i, g in enumerate(cfg.grids):
        if len(g) != 2 or g[0] <= 0 or g[1] <= 0:
            errs.append(f"grids[{i}]: expected positive [dx, dt]")
    for i, eta in enumerate(cfg.etas):
        if eta < 0:
            errs.append(f"etas[{i}]: must be nonnegative")
    if cfg.train_eta < 0:
        errs.append("train_eta: must be nonnegative")
    if cfg.test_T <= 0:
        errs.append("test_T: must be positive")
    if cfg.setting == "inviscid" and any(eta != 0.0 for eta in cfg.etas):
        errs.append("etas: inviscid setting requires eta = 0")
    if cfg.setting == "forcing":
        lo, hi = cfg.domain
        if abs(lo) > 1e-12 or abs(hi - 2.0 * np.pi) > 1e-9:
            errs.append("domain: forcing setting requires [0, 2*pi]")
    if cfg.setting != "inviscid" and all(eta == 0.0 for eta in cfg.etas):
        errs.append("etas: viscous/forcing settings need a positive eta")
    errs += [f"td3.{e}" for e in cfg.td3.validate()]
    errs += [f"sl.{e}" for e in cfg.sl.validate()]
    if cfg.eval.theta <= 0:
        errs.append("eval.theta: must be positive")
    if cfg.eval.halo < 0:
        errs.append("eval.halo: must be nonnegative")
    return errs


def parse_config_dict(data: dict) -> ExperimentConfig:
    errors: List[str] = []
    data = dict(data)
    version = data.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        errors.append(f"schema_version: unsupported {version!r}")
    cfg = default_config(data.get("setting", "inviscid"))
    _update_dataclass(cfg, data, "", errors)
    try:
        _normalize(cfg)
        errors += validate(cfg)
    except (TypeError, ValueError) as exc:
        errors.append(f"malformed field: {exc}")
    if errors:
        raise ConfigValidationError(errors)
    return cfg


def parse_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        data = json.load(fh)
    return parse_config_dict(data)


def serialize_config(cfg: ExperimentConfig) -> dict:
    data = {"schema_version": SCHEMA_VERSION}
    data.update(asdict(cfg))
    return data


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(serialize_config(cfg), sort_keys=True, default=float)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def load_seed_file(path: str, cfg: ExperimentConfig) -> None:
    """Override named seed streams from a JSON file."""
    with open(path) as fh:
        data = json.load(fh)
    errors: List[str] = []
    _update_dataclass(cfg.seeds, data, "seeds.", errors)
    if errors:
        raise ConfigValidationError(errors)
