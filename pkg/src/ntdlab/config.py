"""
Experiment configuration files.

Configs are TOML: flat ``key = value`` lines plus region tables.  Potentials
are a ``base`` constant with repeatable ``[[q1.region]]`` override blocks;
named geometric regions (``B``, ``outside``, ``V``) live under ``[region.*]``.
See README.md for the full grammar.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .assembly import SIDES
from .mesh import Region

EXPERIMENTS = (
    "ntd-convergence",
    "monotonicity-identity",
    "localized-sweep",
    "theorem-test",
    "inclusion-sweep",
    "self-adjoint-audit",
    "duality-audit",
)

KNOWN_KEYS = {
    "experiment", "n", "levels", "modes", "gamma", "seed", "output", "instances",
    "q_range", "deltas", "contrast", "contrast_range", "radius_range", "eig_tol",
    "grid", "grid_radius", "true_cell", "dump_field", "q1", "q2", "region",
}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class PotentialSpec:
    base: float = 1.0
    overrides: tuple = ()

    def describe(self):
        if not self.overrides:
            return f"const({self.base!r})"
        parts = [f"{r.kind}{list(r.params)}={v!r}" for r, v in self.overrides]
        return f"const({self.base!r})+" + "+".join(parts)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    n: int = 16
    levels: tuple = (8, 16, 32)
    modes: tuple = (1, 2)
    gamma: object = "bottom"
    seed: int = 0
    output: str | None = None
    instances: int = 0
    q_range: tuple = (0.5, 5.0)
    deltas: tuple = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
    contrast: float = 1.0
    contrast_range: tuple = (0.5, 4.0)
    radius_range: tuple = (0.05, 0.15)
    eig_tol: float = 1e-10
    grid: int = 8
    grid_radius: float = 0.06
    true_cell: tuple | None = None
    dump_field: bool = False
    q1: PotentialSpec = field(default_factory=PotentialSpec)
    q2: PotentialSpec = field(default_factory=PotentialSpec)
    regions: dict = field(default_factory=dict)
    source_hash: str = ""

    def region(self, name):
        if name not in self.regions:
            raise ConfigError(f"region.{name}", f"experiment {self.experiment!r} requires this region")
        return self.regions[name]


def _positive_int(name, value):
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(name, f"expected a positive integer, got {value!r}")
    return value


def _real(name, value, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(name, f"expected a finite number, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(name, f"must be positive, got {value!r}")
    return float(value)


def _pair(name, value, positive=False):
    if not isinstance(value, list) or len(value) != 2:
        raise ConfigError(name, f"expected [low, high], got {value!r}")
    lo, hi = (_real(name, v, positive) for v in value)
    if lo > hi:
        raise ConfigError(name, f"low {lo!r} exceeds high {hi!r}")
    return lo, hi


def parse_region(name, table):
    if not isinstance(table, dict):
        raise ConfigError(name, "region must be a table")
    kind = table.get("kind")
    if kind == "disk":
        center = table.get("center")
        if not isinstance(center, list) or len(center) != 2:
            raise ConfigError(f"{name}.center", "expected [x, y]")
        return Region.disk([_real(f"{name}.center", c) for c in center],
                           _real(f"{name}.radius", table.get("radius"), positive=True))
    if kind == "rectangle":
        b = table.get("bounds")
        if not isinstance(b, list) or len(b) != 4:
            raise ConfigError(f"{name}.bounds", "expected [xmin, xmax, ymin, ymax]")
        b = [_real(f"{name}.bounds", v) for v in b]
        if b[0] > b[1] or b[2] > b[3]:
            raise ConfigError(f"{name}.bounds", f"empty rectangle {b}")
        return Region.rectangle(*b)
    if kind == "triangles":
        idx = table.get("indices")
        if not isinstance(idx, list) or not all(isinstance(i, int) and i >= 0 for i in idx):
            raise ConfigError(f"{name}.indices", "expected a list of nonnegative integers")
        return Region.triangle_set(idx)
    raise ConfigError(f"{name}.kind", f"expected 'disk', 'rectangle' or 'triangles', got {kind!r}")


def _positive_potential_value(name, value):
    v = _real(name, value)
    if v <= 0:
        raise ConfigError(name, f"potential values must be positive (q in L-infinity-plus), got {value!r}")
    return v


def parse_potential(name, table):
    if table is None:
        return PotentialSpec()
    if isinstance(table, (int, float)) and not isinstance(table, bool):
        return PotentialSpec(_positive_potential_value(name, table))
    if not isinstance(table, dict):
        raise ConfigError(name, "expected a number or a table with 'base' and [[region]] blocks")
    unknown = set(table) - {"base", "region"}
    if unknown:
        raise ConfigError(name, f"unknown keys {sorted(unknown)}")
    base = _positive_potential_value(f"{name}.base", table.get("base", 1.0))
    overrides = []
    for i, block in enumerate(table.get("region", [])):
        tag = f"{name}.region[{i}]"
        overrides.append((parse_region(tag, {k: v for k, v in block.items() if k != "value"}),
                          _positive_potential_value(f"{tag}.value", block.get("value"))))
    return PotentialSpec(base, tuple(overrides))


def _gamma(value):
    if isinstance(value, str):
        for part in value.split(","):
            if part.strip() not in SIDES + ("all",):
                raise ConfigError("gamma", f"unknown side {part.strip()!r}; use {', '.join(SIDES)} or all")
        return value
    if isinstance(value, list) and len(value) == 2:
        return tuple(_real("gamma", v) for v in value)
    raise ConfigError("gamma", f"expected side name(s) or [s0, s1], got {value!r}")


def parse_config(data, source_hash=""):
    unknown = set(data) - KNOWN_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    kind = data.get("experiment")
    if kind not in EXPERIMENTS:
        raise ConfigError("experiment", f"expected one of {', '.join(EXPERIMENTS)}, got {kind!r}")
    kw = {"experiment": kind, "source_hash": source_hash}
    if "n" in data:
        kw["n"] = _positive_int("n", data["n"])
    if "levels" in data:
        lv = data["levels"]
        if not isinstance(lv, list) or not lv:
            raise ConfigError("levels", "expected a non-empty list of subdivisions")
        kw["levels"] = tuple(_positive_int("levels", v) for v in lv)
    if "modes" in data:
        md = data["modes"]
        if not isinstance(md, list) or not md:
            raise ConfigError("modes", "expected a non-empty list of mode numbers")
        kw["modes"] = tuple(_positive_int("modes", v) for v in md)
    if "gamma" in data:
        kw["gamma"] = _gamma(data["gamma"])
    if "seed" in data:
        s = data["seed"]
        if isinstance(s, bool) or not isinstance(s, int) or s < 0:
            raise ConfigError("seed", f"expected a nonnegative integer, got {s!r}")
        kw["seed"] = s
    if "output" in data:
        if not isinstance(data["output"], str):
            raise ConfigError("output", "expected a path string")
        kw["output"] = data["output"]
    if "instances" in data:
        v = data["instances"]
        if isinstance(v, bool) or not isinstance(v, int) or v < 0:
            raise ConfigError("instances", f"expected a nonnegative integer, got {v!r}")
        kw["instances"] = v
    if "q_range" in data:
        kw["q_range"] = _pair("q_range", data["q_range"], positive=True)
    if "contrast_range" in data:
        kw["contrast_range"] = _pair("contrast_range", data["contrast_range"], positive=True)
    if "radius_range" in data:
        kw["radius_range"] = _pair("radius_range", data["radius_range"], positive=True)
    if "deltas" in data:
        d = data["deltas"]
        if not isinstance(d, list) or not d:
            raise ConfigError("deltas", "expected a non-empty list")
        d = tuple(_real("deltas", v, positive=True) for v in d)
        if any(a <= b for a, b in zip(d, d[1:])):
            raise ConfigError("deltas", "must be strictly decreasing")
        kw["deltas"] = d
    for key in ("contrast", "eig_tol", "grid_radius"):
        if key in data:
            kw[key] = _real(key, data[key], positive=True)
    if "grid" in data:
        kw["grid"] = _positive_int("grid", data["grid"])
    if "true_cell" in data:
        tc = data["true_cell"]
        if not isinstance(tc, list) or len(tc) != 2 or not all(isinstance(v, int) for v in tc):
            raise ConfigError("true_cell", "expected [i, j]")
        kw["true_cell"] = tuple(tc)
    if "dump_field" in data:
        if not isinstance(data["dump_field"], bool):
            raise ConfigError("dump_field", "expected true or false")
        kw["dump_field"] = data["dump_field"]
    kw["q1"] = parse_potential("q1", data.get("q1"))
    kw["q2"] = parse_potential("q2", data.get("q2"))
    regions = data.get("region", {})
    if not isinstance(regions, dict):
        raise ConfigError("region", "expected named region tables, e.g. [region.B]")
    kw["regions"] = {name: parse_region(f"region.{name}", t) for name, t in regions.items()}
    cfg = ExperimentConfig(**kw)
    if cfg.true_cell is not None and not all(0 <= v < cfg.grid for v in cfg.true_cell):
        raise ConfigError("true_cell", f"cell {cfg.true_cell} outside the {cfg.grid}x{cfg.grid} grid")
    return cfg


def load_config(path):
    raw = Path(path).read_bytes()
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError("<file>", f"cannot parse {path}: {exc}") from exc
    return parse_config(data, hashlib.sha256(raw).hexdigest())
