"""Experiment configuration: INI files, profiles and ``key=value`` overrides.

A config file has one ``[experiment]`` section, for example::

    [experiment]
    experiment = ex2
    profile = desk
    Lambda = 1, 1000

Precedence (highest first): command-line overrides, file values, profile
values, built-in defaults.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, fields
from pathlib import Path

__all__ = ["ExperimentConfig", "ConfigError", "EXPERIMENTS", "PROFILES", "load_config",
           "build_config", "parse_overrides", "config_keys", "describe_schema"]

EXPERIMENTS = ("ex1", "ex2", "ex3", "ex4", "truncation")


class ConfigError(ValueError):
    pass


def _floats(text):
    return tuple(float(t) for t in str(text).replace(";", ",").split(",") if t.strip())


def _ints(text):
    return tuple(int(t) for t in str(text).replace(";", ",").split(",") if t.strip())


def _strs(text):
    return tuple(t.strip() for t in str(text).replace(";", ",").split(",") if t.strip())


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_int(text):
    t = str(text).strip().lower()
    return None if t in ("", "none", "auto") else int(t)


def _opt_float(text):
    t = str(text).strip().lower()
    return None if t in ("", "none", "auto") else float(t)


@dataclass(frozen=True)
class ExperimentConfig:
    """All run parameters.  ``None`` means "derive from the experiment"."""

    experiment: str = "ex2"
    profile: str = "desk"
    Lambda: tuple = (1.0, 1000.0)
    spaces: tuple = ("cr",)
    # mesh family
    coarse_n: int = 4
    n_crossed: int = 0
    perturb: float = 0.1
    mesh_seed: int = 3
    levels: int = 3
    quad_degree: int = 4
    # random fields
    decay_alpha: float = 2.0
    n_diag: int = 11
    s1: int | None = None
    s2: int | None = None
    M: int = 64
    M_grad: int = 128
    c0_threshold: float | None = None
    # QMC
    interlace: int = 2
    m_list: tuple = (4, 5, 6, 7)
    m_ref: int = 9
    node_mode: str = "single"        # single | combined | tensor
    mc_baseline: bool = False
    mc_replicates: int = 16
    mc_seed: int = 2024
    # truncation study
    s_list: tuple = (3, 6, 10, 15, 21, 28)
    trunc_m: int = 8
    # solver
    solver: str = "pcg"              # pcg | direct
    tol: float = 1e-10
    max_iter: int = 500
    # execution
    workers: int = 1
    out: str = "results"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if not self.Lambda or any(L < 1 for L in self.Lambda):
            raise ConfigError("every Lambda must be >= 1")
        for s in self.spaces:
            if s not in ("cr", "p1"):
                raise ConfigError(f"unknown space {s!r}")
        if self.levels < 1 or self.coarse_n < 1:
            raise ConfigError("levels and coarse_n must be >= 1")
        if not 0 <= self.perturb < 0.3:
            raise ConfigError("perturb must lie in [0, 0.3)")
        if list(self.m_list) != sorted(set(self.m_list)) or not self.m_list:
            raise ConfigError("m_list must be strictly increasing")
        if self.m_ref <= max(self.m_list):
            raise ConfigError("m_ref must exceed every entry of m_list")
        if self.node_mode not in ("single", "combined", "tensor"):
            raise ConfigError("node_mode must be single, combined or tensor")
        if self.solver not in ("pcg", "direct"):
            raise ConfigError("solver must be pcg or direct")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.interlace not in (2, 3):
            raise ConfigError("bundled rules exist for interlace 2 and 3 only")

    # derived ------------------------------------------------------------------
    @property
    def s_default(self) -> int:
        return self.n_diag * (self.n_diag + 1) // 2

    @property
    def n_list(self) -> tuple:
        return tuple(2**m for m in self.m_list)

    @property
    def n_ref(self) -> int:
        return 2**self.m_ref

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v, tuple) else v)
                for f in fields(self) for v in [getattr(self, f.name)]}

    def digest(self) -> str:
        """Hash of everything that influences results (not workers or paths)."""
        d = self.to_dict()
        d.pop("workers")
        d.pop("out")
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_PARSERS = {
    "experiment": str, "profile": str, "Lambda": _floats, "spaces": _strs,
    "coarse_n": int, "n_crossed": int, "perturb": float, "mesh_seed": int, "levels": int,
    "quad_degree": int, "decay_alpha": float, "n_diag": int, "s1": _opt_int, "s2": _opt_int,
    "M": int, "M_grad": int, "c0_threshold": _opt_float, "interlace": int, "m_list": _ints,
    "m_ref": int, "node_mode": str, "mc_baseline": _bool, "mc_replicates": int,
    "mc_seed": int, "s_list": _ints, "trunc_m": int, "solver": str, "tol": float,
    "max_iter": int, "workers": int, "out": str,
}

_HELP = {
    "experiment": "ex1 | ex2 | ex3 | ex4 | truncation",
    "profile": "desk | paper (parameter presets)",
    "Lambda": "comma-separated list of Lambda values",
    "spaces": "cr and/or p1",
    "coarse_n": "cells per side of the coarse mesh",
    "n_crossed": "coarse cells split into four around a centre vertex",
    "perturb": "interior vertex jitter as a fraction of the cell size",
    "mesh_seed": "seed for jitter and crossed-cell choice",
    "levels": "meshes in the uniform refinement family",
    "quad_degree": "triangle quadrature degree (2..6)",
    "decay_alpha": "basis decay exponent alpha",
    "n_diag": "number of anti-diagonals n; s = n(n+1)/2",
    "s1": "dimension of y (default n(n+1)/2 when mu is random, else 0)",
    "s2": "dimension of z (default n(n+1)/2 when lambda is random, else 0)",
    "M": "grid size for field values",
    "M_grad": "grid size for mu gradients",
    "c0_threshold": "gradient smallness threshold (auto: mu_min/(1+2B^2))",
    "interlace": "interlacing order of the bundled rules",
    "m_list": "QMC exponents, N = 2^m",
    "m_ref": "exponent of the reference rule",
    "node_mode": "single | combined | tensor (two random fields)",
    "mc_baseline": "also run the seeded Monte Carlo baseline",
    "mc_replicates": "independent Monte Carlo replicates (RMS error)",
    "mc_seed": "base seed of the Monte Carlo baseline",
    "s_list": "truncation dimensions for the truncation study",
    "trunc_m": "QMC exponent used by the truncation study",
    "solver": "pcg | direct",
    "tol": "PCG relative preconditioned residual tolerance",
    "max_iter": "PCG iteration cap",
    "workers": "worker processes",
    "out": "output directory",
}

# profile -> experiment -> values;  "*" applies to every experiment
PROFILES: dict[str, dict[str, dict]] = {
    "desk": {
        "*": {},
        "ex1": {"coarse_n": 16, "n_crossed": 51, "perturb": 0.1, "levels": 4,
                "spaces": ("cr", "p1"), "solver": "direct"},
        "ex2": {"mc_baseline": True},
        "ex3": {},
        "ex4": {"node_mode": "combined", "m_ref": 10},
        "truncation": {"Lambda": (1.0,)},
    },
    "paper": {
        "*": {"M": 256, "M_grad": 512, "coarse_n": 8, "levels": 4},
        "ex1": {"coarse_n": 16, "n_crossed": 51, "perturb": 0.1, "levels": 5,
                "spaces": ("cr", "p1"), "solver": "direct"},
        "ex2": {"n_diag": 22, "mc_baseline": True},
        "ex3": {"n_diag": 22},
        "ex4": {"n_diag": 15, "node_mode": "combined", "m_ref": 10},
        "truncation": {"n_diag": 22, "Lambda": (1.0,),
                       "s_list": (6, 15, 28, 45, 66, 91, 120)},
    },
}


def config_keys() -> list[str]:
    return [f.name for f in fields(ExperimentConfig)]


def describe_schema() -> str:
    defaults = ExperimentConfig()
    rows = []
    for f in fields(ExperimentConfig):
        rows.append(f"{f.name:14s} {_HELP[f.name]}  [default: {getattr(defaults, f.name)}]")
    return "\n".join(rows)


def _parse_pairs(pairs: dict, origin: str) -> dict:
    out = {}
    valid = config_keys()
    lower = {k.lower(): k for k in valid}
    for raw_key, raw in pairs.items():
        key = lower.get(raw_key.strip().lower())
        if key is None:
            raise ConfigError(f"{origin}: unknown key {raw_key!r}; valid keys: {', '.join(valid)}")
        try:
            out[key] = _PARSERS[key](raw)
        except ValueError as exc:
            raise ConfigError(f"{origin}: bad value for {key}: {raw!r} ({exc})") from None
    return out


def parse_overrides(items) -> dict:
    """``["key=value", ...]`` to typed values."""
    pairs = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        k, v = item.split("=", 1)
        pairs[k] = v
    return _parse_pairs(pairs, "--set")


def read_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if cp.sections() != ["experiment"]:
        raise ConfigError(f"{path}: expected exactly one [experiment] section, "
                          f"found {cp.sections()}")
    return _parse_pairs(dict(cp["experiment"]), str(path))


def build_config(file_values: dict | None = None, overrides: dict | None = None,
                 profile: str | None = None) -> ExperimentConfig:
    """Merge defaults, profile, file values and overrides (in that order)."""
    file_values = dict(file_values or {})
    overrides = dict(overrides or {})
    experiment = overrides.get("experiment", file_values.get("experiment", "ex2"))
    prof = profile or overrides.get("profile") or file_values.get("profile") or "desk"
    if prof not in PROFILES:
        raise ConfigError(f"unknown profile {prof!r}; choose from {sorted(PROFILES)}")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {experiment!r}")
    values = {}
    values.update(PROFILES[prof]["*"])
    values.update(PROFILES[prof].get(experiment, {}))
    values.update(file_values)
    values.update(overrides)
    values["profile"] = prof
    values["experiment"] = experiment
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:  # pragma: no cover - keys are validated above
        raise ConfigError(str(exc)) from None


def load_config(path=None, overrides=None, profile: str | None = None) -> ExperimentConfig:
    file_values = read_config_file(path) if path is not None else {}
    if isinstance(overrides, (list, tuple)):
        overrides = parse_overrides(overrides)
    return build_config(file_values, overrides, profile)


def replace(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    return dataclasses.replace(cfg, **changes)
