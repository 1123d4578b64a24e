"""Experiment configuration files (INI syntax) and their translation into objects.

See ``README.md`` for the full schema.  Parsing is strict: unknown sections or
keys, bad numbers and dangling region/goodness references are all rejected
before anything is simulated.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import goodness as gd
from .controller import CycleConfig, OptimizerSpec
from .dynamics import ControlAffineSystem, ControlSpace, make_aircraft, make_linear, make_vanderpol

PLANTS = ("vanderpol", "aircraft", "linear")
GOODNESS = ("vanderpol", "aircraft", "slope", "distance_rate", "zone", "mixed", "linear", "sequential")
REGION_KINDS = ("halfspace", "ball", "box", "slab")
METRICS = ("first_bad_time", "reach_time", "gap_trace")
SWEEP_PARAMS = ("epsilon", "delta", "cycle_period")

_KEYS = {
    "plant": {"name", "a", "b", "lower", "upper", "m0", "m1"},
    "goodness": {"name", "region", "interior", "target", "bad", "d_bad_max", "probe_dt", "weights", "stages", "lipschitz"},
    "region": {"kind", "normal", "offset", "center", "radius", "lower", "upper", "axis"},
    "controller": {"mode", "epsilon", "delta", "learn_window", "cycle_period", "step", "hold_step", "optimizer", "grid_points", "tie_break"},
    "run": {"x0", "t_end", "seed"},
    "metrics": {"first_bad_time", "reach_time", "gap_trace", "oracle_grid", "lipschitz"},
    "output": {"dir", "trajectory", "cycles", "summary", "stride"},
}

BUNDLED_DIR = Path(__file__).with_name("configs")


class ConfigError(ValueError):
    """Schema violation in an experiment file."""


class UnknownNameError(ConfigError):
    """A plant, goodness function, region or metric name that does not exist."""


@dataclass
class ExperimentConfig:
    plant: ControlAffineSystem
    space: ControlSpace
    goodness: gd.GoodnessFunction
    cycle: CycleConfig
    x0: np.ndarray
    t_end: float
    seed: int = 0
    regions: dict = field(default_factory=dict)
    first_bad_time: list = field(default_factory=list)
    reach_time: list = field(default_factory=list)
    gap_trace: bool = False
    oracle_grid: int = 101
    lipschitz: float | None = None
    out_dir: Path = Path(".")
    trajectory_file: str = "trajectory.csv"
    cycles_file: str = "cycles.csv"
    summary_file: str = "summary.json"
    stride: int = 1
    name: str = "experiment"

    def with_param(self, param: str, value: float) -> "ExperimentConfig":
        if param not in SWEEP_PARAMS:
            raise ConfigError(f"cannot sweep {param!r}; choose from {', '.join(SWEEP_PARAMS)}")
        try:
            cycle = replace(self.cycle, **{param: value})
        except ValueError as err:
            raise ConfigError(str(err)) from err
        return replace(self, cycle=cycle)


def resolve_path(path) -> Path:
    """The file itself, or a bundled config of that name when the file is absent."""
    p = Path(path)
    if p.exists():
        return p
    for cand in (BUNDLED_DIR / p.name, BUNDLED_DIR / f"{p.name}.cfg"):
        if cand.exists():
            return cand
    raise FileNotFoundError(f"config file not found: {path}")


def bundled_configs() -> list[str]:
    return sorted(p.name for p in BUNDLED_DIR.glob("*.cfg"))


# ---------------------------------------------------------------------------
# value parsing


def _float(sec, key, raw):
    try:
        val = float(raw)
    except ValueError:
        raise ConfigError(f"[{sec}] {key}: expected a number, got {raw!r}") from None
    if not math.isfinite(val):
        raise ConfigError(f"[{sec}] {key}: must be finite")
    return val


def _positive(sec, key, raw):
    val = _float(sec, key, raw)
    if val <= 0:
        raise ConfigError(f"[{sec}] {key}: must be positive, got {val}")
    return val


def _int(sec, key, raw, minimum=None):
    try:
        val = int(raw)
    except ValueError:
        raise ConfigError(f"[{sec}] {key}: expected an integer, got {raw!r}") from None
    if minimum is not None and val < minimum:
        raise ConfigError(f"[{sec}] {key}: must be at least {minimum}")
    return val


def _vector(sec, key, raw):
    parts = [p for p in raw.replace(",", " ").split()]
    if not parts:
        raise ConfigError(f"[{sec}] {key}: empty vector")
    return np.array([_float(sec, key, p) for p in parts])


def _matrix(sec, key, raw):
    rows = [r for r in raw.split(";") if r.strip()]
    mat = [_vector(sec, key, r) for r in rows]
    if len({r.size for r in mat}) != 1:
        raise ConfigError(f"[{sec}] {key}: rows have different lengths")
    return np.vstack(mat)


def _bool(sec, key, raw):
    low = raw.strip().lower()
    if low in ("1", "yes", "true", "on"):
        return True
    if low in ("0", "no", "false", "off", ""):
        return False
    raise ConfigError(f"[{sec}] {key}: expected yes/no, got {raw!r}")


def _names(raw):
    return [n.strip() for n in raw.split(",") if n.strip()]


def _require(section, sec_name, key):
    if key not in section:
        raise ConfigError(f"[{sec_name}] missing required key {key!r}")
    return section[key]


# ---------------------------------------------------------------------------
# builders


def _build_region(name, sec):
    kind = _require(sec, f"region.{name}", "kind").strip()
    where = f"region.{name}"
    if kind == "halfspace":
        normal = _vector(where, "normal", _require(sec, where, "normal"))
        return gd.half_space(normal, _float(where, "offset", sec.get("offset", "0")), label=name)
    if kind == "ball":
        center = _vector(where, "center", _require(sec, where, "center"))
        return gd.ball(center, _float(where, "radius", _require(sec, where, "radius")), label=name)
    if kind == "box":
        lo = _vector(where, "lower", _require(sec, where, "lower"))
        hi = _vector(where, "upper", _require(sec, where, "upper"))
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ConfigError(f"[{where}] lower/upper mismatch")
        return gd.box(lo, hi, label=name)
    if kind == "slab":
        axis = _int(where, "axis", _require(sec, where, "axis"), minimum=1) - 1
        lo = _float(where, "lower", _require(sec, where, "lower"))
        hi = _float(where, "upper", _require(sec, where, "upper"))
        if lo > hi:
            raise ConfigError(f"[{where}] lower exceeds upper")
        return gd.slab(axis, lo, hi, label=name)
    raise UnknownNameError(f"[{where}] unknown region kind {kind!r}")


def _region(regions, sec_name, key, sec):
    name = _require(sec, sec_name, key).strip()
    if name not in regions:
        raise UnknownNameError(f"[{sec_name}] {key}: no region named {name!r}")
    return regions[name]


def _build_goodness(sec_name, sec, regions, cp, depth=0):
    name = _require(sec, sec_name, "name").strip()
    probe_dt = _positive(sec_name, "probe_dt", sec.get("probe_dt", str(gd.DEFAULT_PROBE_DT)))
    if name == "vanderpol":
        G = gd.vanderpol_goodness()
    elif name == "aircraft":
        G = gd.aircraft_goodness()
    elif name == "slope":
        G = gd.slope_goodness()
    elif name == "distance_rate":
        G = gd.distance_rate_goodness(_region(regions, sec_name, "region", sec), probe_dt)
    elif name == "zone":
        G = gd.zone_goodness(
            _region(regions, sec_name, "interior", sec), _region(regions, sec_name, "target", sec), probe_dt
        )
    elif name == "mixed":
        G = gd.mixed_goodness(
            _region(regions, sec_name, "bad", sec),
            _region(regions, sec_name, "target", sec),
            _positive(sec_name, "d_bad_max", _require(sec, sec_name, "d_bad_max")),
            probe_dt,
        )
    elif name == "linear":
        G = gd.linear_goodness(_vector(sec_name, "weights", _require(sec, sec_name, "weights")))
    elif name == "sequential":
        if depth > 0:
            raise ConfigError(f"[{sec_name}] sequential stages cannot nest")
        stages = []
        for item in _names(_require(sec, sec_name, "stages")):
            if ":" not in item:
                raise ConfigError(f"[{sec_name}] stages: expected target:goodness, got {item!r}")
            target, stage = (s.strip() for s in item.split(":", 1))
            if target not in regions:
                raise UnknownNameError(f"[{sec_name}] stages: no region named {target!r}")
            stage_sec = f"goodness.{stage}"
            if not cp.has_section(stage_sec):
                raise UnknownNameError(f"[{sec_name}] stages: no section [{stage_sec}]")
            _check_keys(stage_sec, cp[stage_sec], _KEYS["goodness"])
            stages.append((regions[target], _build_goodness(stage_sec, cp[stage_sec], regions, cp, depth + 1)))
        if not stages:
            raise ConfigError(f"[{sec_name}] stages: at least one stage required")
        G = gd.sequential_goodness(stages)
    else:
        raise UnknownNameError(f"[{sec_name}] unknown goodness function {name!r}")
    if "lipschitz" in sec:
        G = replace(G, lipschitz=_positive(sec_name, "lipschitz", sec["lipschitz"]))
    return G


def _build_plant(sec):
    name = _require(sec, "plant", "name").strip()
    if name == "vanderpol":
        return make_vanderpol()
    if name == "aircraft":
        return make_aircraft()
    if name == "linear":
        A = _matrix("plant", "A", _require(sec, "plant", "a"))
        B = _matrix("plant", "B", _require(sec, "plant", "b"))
        if A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
            raise ConfigError("[plant] A must be n x n and B n x m")
        m = B.shape[1]
        lo = _vector("plant", "lower", sec.get("lower", " ".join(["-1"] * m)))
        hi = _vector("plant", "upper", sec.get("upper", " ".join(["1"] * m)))
        if lo.size != m or hi.size != m or np.any(lo >= hi):
            raise ConfigError("[plant] lower/upper must have one entry per input, lower < upper")
        kwargs = {}
        if "m0" in sec:
            kwargs["bound_norm"] = _float("plant", "M0", sec["m0"])
        if "m1" in sec:
            kwargs["bound_lipschitz"] = _float("plant", "M1", sec["m1"])
        return make_linear(A, B, **kwargs), ControlSpace(lo, hi)
    raise UnknownNameError(f"[plant] unknown plant {name!r}")


def _build_cycle(sec):
    mode = sec.get("mode", "coupled").strip()
    if mode not in ("coupled", "decoupled"):
        raise UnknownNameError(f"[controller] unknown mode {mode!r}")
    opt_mode = sec.get("optimizer", "vertex").strip()
    tie = sec.get("tie_break", "lexicographic").strip()
    try:
        optimizer = OptimizerSpec(
            mode=opt_mode,
            grid_points_per_axis=_int("controller", "grid_points", sec.get("grid_points", "33"), minimum=2),
            tie_break=tie,
        )
    except ValueError as err:
        raise UnknownNameError(f"[controller] {err}") from None
    delta = _positive("controller", "delta", _require(sec, "controller", "delta"))
    if delta > 1:
        raise ConfigError("[controller] delta must lie in (0, 1]")
    kwargs = dict(
        epsilon=_positive("controller", "epsilon", _require(sec, "controller", "epsilon")),
        delta=delta,
        optimizer=optimizer,
    )
    if "step" in sec:
        kwargs["integrator_step"] = _positive("controller", "step", sec["step"])
    if "hold_step" in sec:
        kwargs["hold_step"] = _positive("controller", "hold_step", sec["hold_step"])
    if mode == "decoupled":
        kwargs["learn_window"] = _positive("controller", "learn_window", _require(sec, "controller", "learn_window"))
        kwargs["cycle_period"] = _positive("controller", "cycle_period", _require(sec, "controller", "cycle_period"))
    try:
        return CycleConfig(**kwargs)
    except ValueError as err:
        raise ConfigError(f"[controller] {err}") from None


def _check_keys(name, sec, allowed):
    extra = set(sec.keys()) - allowed
    if extra:
        raise ConfigError(f"[{name}] unknown keys: {', '.join(sorted(extra))}")


def parse_overrides(items):
    """``["controller.delta=1e-3", ...]`` -> ``{("controller", "delta"): "1e-3"}``."""
    out = {}
    for item in items or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        lhs, value = item.split("=", 1)
        section, key = lhs.rsplit(".", 1)
        out[(section.strip(), key.strip().lower())] = value.strip()
    return out


def load_config(path, overrides=None) -> ExperimentConfig:
    """Parse and validate an experiment file.

    Raises ``FileNotFoundError`` for a missing file, :class:`UnknownNameError`
    for names outside the catalogue and :class:`ConfigError` otherwise.
    """
    path = resolve_path(path)
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except configparser.Error as err:
        raise ConfigError(f"cannot parse {path}: {err}") from None
    for (section, key), value in parse_overrides(overrides).items():
        if not cp.has_section(section):
            cp.add_section(section)
        cp[section][key] = value
    return _from_parser(cp, path)


def _from_parser(cp, path) -> ExperimentConfig:
    for name in cp.sections():
        base = name.split(".", 1)[0]
        if base not in _KEYS or (base in ("region",) and "." not in name):
            raise ConfigError(f"unknown section [{name}]")
        if base == "goodness" and "." in name:
            continue  # checked when referenced
        _check_keys(name, cp[name], _KEYS[base])
    for required in ("plant", "goodness", "controller", "run"):
        if not cp.has_section(required):
            raise ConfigError(f"missing section [{required}]")

    regions = {
        name.split(".", 1)[1]: _build_region(name.split(".", 1)[1], cp[name])
        for name in cp.sections()
        if name.startswith("region.")
    }
    plant, space = _build_plant(cp["plant"])
    G = _build_goodness("goodness", cp["goodness"], regions, cp)
    cycle = _build_cycle(cp["controller"])
    run = cp["run"]
    x0 = _vector("run", "x0", _require(run, "run", "x0"))
    if x0.size != plant.state_dim:
        raise ConfigError(f"[run] x0 must have {plant.state_dim} entries")
    t_end = _positive("run", "t_end", _require(run, "run", "t_end"))
    m = plant.input_dim
    period = cycle.cycle_period if cycle.decoupled else (m + 1) * cycle.epsilon
    if cycle.decoupled and not (m + 1) * cycle.learn_window < cycle.cycle_period:
        raise ConfigError("[controller] (m+1) * learn_window must be shorter than cycle_period")
    if t_end < period:
        raise ConfigError("[run] t_end shorter than one learn-control cycle")

    cfg = ExperimentConfig(
        plant=plant,
        space=space,
        goodness=G,
        cycle=cycle,
        x0=x0,
        t_end=t_end,
        seed=_int("run", "seed", run.get("seed", "0")),
        regions=regions,
        name=Path(path).stem,
    )
    if cp.has_section("metrics"):
        met = cp["metrics"]
        for key in ("first_bad_time", "reach_time"):
            names = _names(met.get(key, ""))
            for n in names:
                if n not in regions:
                    raise UnknownNameError(f"[metrics] {key}: no region named {n!r}")
            setattr(cfg, key, names)
        cfg.gap_trace = _bool("metrics", "gap_trace", met.get("gap_trace", "no"))
        cfg.oracle_grid = _int("metrics", "oracle_grid", met.get("oracle_grid", "101"), minimum=0)
        if "lipschitz" in met:
            cfg.lipschitz = _positive("metrics", "lipschitz", met["lipschitz"])
    if cp.has_section("output"):
        out = cp["output"]
        cfg.out_dir = Path(out.get("dir", "."))
        cfg.trajectory_file = out.get("trajectory", cfg.trajectory_file)
        cfg.cycles_file = out.get("cycles", cfg.cycles_file)
        cfg.summary_file = out.get("summary", cfg.summary_file)
        cfg.stride = _int("output", "stride", out.get("stride", "1"), minimum=1)
    return cfg
