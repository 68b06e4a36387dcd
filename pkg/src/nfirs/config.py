"""Scenario configuration: a sectioned TOML file plus ``section.key=value`` overrides.

Sections and keys (see ``scenario_schema.toml`` at the repository root):

``[geometry]``  carrier_frequency_hz, M, zeta_bs, N_u, N_v, zeta_irs,
irs_center, allow_even
``[users]``     positions, noise_dbm
``[fading]``    kappa_db
``[run]``       experiment, p_max_dbm, mc_samples, seed, sweep,
sparsity_pairs, irs_sizes, max_outer, epsilon, phase_samples
"""

from __future__ import annotations

import copy
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import tomli
import tomli_w

from .geometry import SystemGeometry


class ConfigError(Exception):
    """Configuration could not be loaded or failed validation."""


class Experiment(enum.Enum):
    GJK_SWEEP = "GjkSweep"
    EDOF_SWEEP = "EdofSweep"
    RATE_VS_POWER = "RateVsPower"
    RATE_VS_KAPPA = "RateVsKappa"
    CONVERGENCE = "Convergence"
    EDOF_VS_IRS_SIZE = "EdofVsIrsSize"
    FLOOR_SWEEP = "FloorSweep"


PAPER_USERS = [[10.0, 70.0, 0.0], [30.0, 60.0, 0.0], [20.0, 50.0, 0.0], [45.0, 45.0, 0.0]]

DEFAULTS: dict = {
    "geometry": {
        "carrier_frequency_hz": 60e9,
        "M": 128,
        "zeta_bs": 3.0,
        "N_u": 20,
        "N_v": 20,
        "zeta_irs": 6.0,
        "irs_center": [-0.72, 0.51, 0.51],
        "allow_even": True,
    },
    "users": {"positions": PAPER_USERS, "noise_dbm": -115.0},
    "fading": {"kappa_db": 10.0},
    "run": {
        "experiment": "RateVsKappa",
        "p_max_dbm": 15.0,
        "mc_samples": 10000,
        "seed": 1,
        "sweep": [],
        "sparsity_pairs": [],
        "irs_sizes": [],
        "max_outer": 200,
        "epsilon": 1e-4,
        "phase_samples": 1000,
    },
}

_TYPES = {
    ("geometry", "carrier_frequency_hz"): float,
    ("geometry", "M"): int,
    ("geometry", "zeta_bs"): float,
    ("geometry", "N_u"): int,
    ("geometry", "N_v"): int,
    ("geometry", "zeta_irs"): float,
    ("geometry", "irs_center"): list,
    ("geometry", "allow_even"): bool,
    ("users", "positions"): list,
    ("users", "noise_dbm"): (float, list),
    ("fading", "kappa_db"): (float, list),
    ("run", "experiment"): str,
    ("run", "p_max_dbm"): float,
    ("run", "mc_samples"): int,
    ("run", "seed"): int,
    ("run", "sweep"): list,
    ("run", "sparsity_pairs"): list,
    ("run", "irs_sizes"): list,
    ("run", "max_outer"): int,
    ("run", "epsilon"): float,
    ("run", "phase_samples"): int,
}

OVERRIDE_KEYS = sorted(f"{s}.{k}" for s, k in _TYPES)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    geometry: SystemGeometry
    rician_kappas_db: tuple[float, ...]
    noise_dbm: tuple[float, ...]
    p_max_dbm: float
    mc_samples: int
    seed: int
    experiment: Experiment
    sweep: tuple[float, ...] = ()
    sparsity_pairs: tuple[tuple[float, float], ...] = ()
    irs_sizes: tuple[int, ...] = ()
    max_outer: int = 200
    epsilon: float = 1e-4
    phase_samples: int = 1000
    raw: dict = field(default_factory=dict, compare=False, repr=False)
    defaults_used: tuple[str, ...] = field(default=(), compare=False)

    @property
    def kappas(self) -> list[float]:
        return [db_to_linear(k) for k in self.rician_kappas_db]

    @property
    def noise_watts(self) -> list[float]:
        return [dbm_to_watts(n) for n in self.noise_dbm]

    @property
    def p_max_watts(self) -> float:
        return dbm_to_watts(self.p_max_dbm)


def _check_type(section, key, value):
    expected = _TYPES[(section, key)]
    expected = expected if isinstance(expected, tuple) else (expected,)
    if float in expected and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if int in expected and isinstance(value, float) and value.is_integer() and bool not in expected:
        return int(value)
    if not isinstance(value, expected) or (isinstance(value, bool) and bool not in expected):
        names = "/".join(t.__name__ for t in expected)
        raise ConfigError(f"{section}.{key}: expected {names}, got {type(value).__name__}")
    return value


def _parse_override(item: str):
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form section.key=value")
    dotted, text = item.split("=", 1)
    dotted = dotted.strip()
    if "." not in dotted:
        raise ConfigError(f"override key {dotted!r} must be section.key")
    section, key = dotted.split(".", 1)
    if (section, key) not in _TYPES:
        raise ConfigError(f"unknown override key {dotted!r}")
    try:
        value = tomli.loads(f"v = {text.strip()}")["v"]
    except tomli.TOMLDecodeError:
        value = text.strip()  # bare strings such as experiment names
    return section, key, value


def merge(data: dict, overrides=()) -> tuple[dict, list[str]]:
    """Validate sections/keys, apply overrides and fill defaults."""
    merged: dict = {}
    for section, body in data.items():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, value in body.items():
            if (section, key) not in _TYPES:
                raise ConfigError(f"unknown key {section}.{key}")
            merged.setdefault(section, {})[key] = _check_type(section, key, value)
    for item in overrides:
        section, key, value = _parse_override(item)
        merged.setdefault(section, {})[key] = _check_type(section, key, value)
    used = []
    for section, body in DEFAULTS.items():
        for key, value in body.items():
            if key not in merged.get(section, {}):
                merged.setdefault(section, {})[key] = copy.deepcopy(value)
                used.append(f"{section}.{key}")
    return merged, used


def _per_user(value, K: int, name: str) -> tuple[float, ...]:
    if isinstance(value, list):
        if len(value) != K:
            raise ConfigError(f"{name}: expected {K} values, got {len(value)}")
        vals = tuple(float(v) for v in value)
    else:
        vals = (float(value),) * K
    if not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"{name}: values must be finite")
    return vals


def from_dict(data: dict, overrides=()) -> ScenarioConfig:
    merged, used = merge(data, overrides)
    g, u, f, r = merged["geometry"], merged["users"], merged["fading"], merged["run"]
    positions = u["positions"]
    if not positions or any(not isinstance(p, list) or len(p) != 3 for p in positions):
        raise ConfigError("users.positions: expected a non-empty list of [x, y, z]")
    try:
        geometry = SystemGeometry(
            carrier_frequency=g["carrier_frequency_hz"],
            M=g["M"],
            zeta_bs=g["zeta_bs"],
            N_u=g["N_u"],
            N_v=g["N_v"],
            zeta_irs=g["zeta_irs"],
            irs_center=tuple(g["irs_center"]),
            user_positions=tuple(tuple(p) for p in positions),
            allow_even=g["allow_even"],
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"geometry: {exc}") from exc
    K = len(positions)
    try:
        experiment = Experiment(r["experiment"])
    except ValueError:
        names = ", ".join(e.value for e in Experiment)
        raise ConfigError(f"run.experiment: unknown experiment {r['experiment']!r} ({names})")
    if r["mc_samples"] < 100:
        raise ConfigError("run.mc_samples must be >= 100")
    # -inf is accepted as a zero budget; the optimizer reports it as infeasible
    if math.isnan(r["p_max_dbm"]) or r["p_max_dbm"] == math.inf:
        raise ConfigError("run.p_max_dbm must be finite or -inf")
    pairs = r["sparsity_pairs"]
    if any(not isinstance(pq, list) or len(pq) != 2 for pq in pairs):
        raise ConfigError("run.sparsity_pairs: expected a list of [zeta_bs, zeta_irs]")
    return ScenarioConfig(
        geometry=geometry,
        rician_kappas_db=_per_user(f["kappa_db"], K, "fading.kappa_db"),
        noise_dbm=_per_user(u["noise_dbm"], K, "users.noise_dbm"),
        p_max_dbm=float(r["p_max_dbm"]),
        mc_samples=int(r["mc_samples"]),
        seed=int(r["seed"]),
        experiment=experiment,
        sweep=tuple(float(v) for v in r["sweep"]),
        sparsity_pairs=tuple((float(a), float(b)) for a, b in pairs),
        irs_sizes=tuple(int(v) for v in r["irs_sizes"]),
        max_outer=int(r["max_outer"]),
        epsilon=float(r["epsilon"]),
        phase_samples=int(r["phase_samples"]),
        raw=merged,
        defaults_used=tuple(used),
    )


def load_config(path, overrides=()) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = tomli.loads(path.read_text())
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from exc
    return from_dict(data, overrides)


def dump_config(config: ScenarioConfig) -> str:
    return tomli_w.dumps(config.raw)


def default_config(**run_overrides) -> ScenarioConfig:
    return from_dict({}, [f"run.{k}={_toml_value(v)}" for k, v in run_overrides.items()])


def _toml_value(value) -> str:
    return tomli_w.dumps({"v": value}).split("=", 1)[1].strip()
