"""Scenario configuration: loading, validation and a canonical echo for manifests.

Config files are YAML mappings (JSON is accepted too, being a YAML subset).
Every key is checked; unknown keys are rejected so a typo cannot silently fall
back to a default. See ``docs/config.md`` for the schema.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

import yaml

from ..core import ConfigurationError, Eos, MaterialParams
from ..shear1d import BoundarySpec, SingularBoundaryError

SHEAR_SCENARIOS = ("shear-xi-sweep", "shear-stokes", "shear-energy-audit")
MULTID_SCENARIOS = ("multid-xi-sweep", "multid-audits")
SCENARIOS = SHEAR_SCENARIOS + MULTID_SCENARIOS

_TOP_KEYS = {"scenario", "grid", "domain", "T", "params", "xi_list", "bc", "initial",
             "cfl", "outputs", "output_dir", "seed", "threads"}
_PARAM_KEYS = {"G", "c0", "eos"}
_BC_KEYS = {"kind", "c_u", "c_tau", "g"}


class ConfigError(ConfigurationError):
    """Invalid scenario configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    grid: tuple
    domain: tuple
    T: float
    params: MaterialParams
    eos: Eos
    xi_list: tuple
    bc: Optional[tuple] = None
    initial: dict = field(default_factory=dict)
    cfl: float = 1.0
    outputs: int = 100
    output_dir: str = "maxlab-output"
    seed: int = 0
    threads: int = 1

    @property
    def is_shear(self) -> bool:
        return self.scenario in SHEAR_SCENARIOS

    @property
    def dim(self) -> int:
        return len(self.grid)

    def with_overrides(self, output_dir=None, threads=None, seed=None) -> "ScenarioConfig":
        changes = {}
        if output_dir is not None:
            changes["output_dir"] = str(output_dir)
        if threads is not None:
            _check_int("threads", threads, minimum=1)
            changes["threads"] = int(threads)
        if seed is not None:
            _check_int("seed", seed, minimum=0)
            changes["seed"] = int(seed)
        return replace(self, **changes)

    def echo(self) -> dict:
        """Canonical, fully defaulted form.

        Execution-only settings (``threads``, ``output_dir``) are left out so that
        outputs do not depend on them; feeding the echo back to
        :func:`parse_config` reproduces the run.
        """
        out: dict[str, Any] = {
            "scenario": self.scenario,
            "grid": list(self.grid) if self.dim > 1 else self.grid[0],
            "domain": [list(b) for b in self.domain] if self.dim > 1 else list(self.domain[0]),
            "T": self.T,
            "params": {"G": self.params.G, "c0": self.eos.c0, "eos": self.eos.kind},
            "xi_list": list(self.xi_list),
            "initial": dict(self.initial),
            "outputs": self.outputs,
            "seed": self.seed,
        }
        if self.is_shear:
            out["cfl"] = self.cfl
            out["bc"] = {bc.side: _bc_echo(bc) for bc in self.bc}
        else:
            out["bc"] = "periodic"
        return out


def _bc_echo(bc: BoundarySpec) -> dict:
    if bc.kind == "periodic":
        return {"kind": "periodic"}
    if bc.kind == "dirichlet_velocity":
        return {"kind": bc.kind, "g": bc.g}
    return {"kind": bc.kind, "c_u": bc.c_u, "c_tau": bc.c_tau, "g": bc.g}


# -- field checks -----------------------------------------------------------------

def _check_number(name, value, positive=False, nonneg=False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(name, f"expected a number, got {value!r}")
    v = float(value)
    if not math.isfinite(v):
        raise ConfigError(name, "must be finite")
    if positive and not v > 0:
        raise ConfigError(name, f"must be positive, got {v!r}")
    if nonneg and v < 0:
        raise ConfigError(name, f"must be non-negative, got {v!r}")
    return v


def _check_int(name, value, minimum=None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(name, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(name, f"must be at least {minimum}, got {value}")
    return value


def _check_keys(name, mapping, allowed):
    if not isinstance(mapping, dict):
        raise ConfigError(name, f"expected a mapping, got {type(mapping).__name__}")
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        prefix = f"{name}." if name != "<config>" else ""
        raise ConfigError(prefix + str(unknown[0]), f"unknown key (allowed: {', '.join(sorted(allowed))})")


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def _grid(raw, scenario) -> tuple:
    want = 1 if scenario in SHEAR_SCENARIOS else 2
    if want == 2 and isinstance(raw, int) and not isinstance(raw, bool):
        raw = [raw, raw]
    cells = [raw] if want == 1 else raw
    if not isinstance(cells, list) or len(cells) != want:
        shape = "an integer N" if want == 1 else "[Nx, Ny] (or one integer for a square grid)"
        raise ConfigError("grid", f"expected {shape}, got {raw!r}")
    for k, n in enumerate(cells):
        label = "grid" if want == 1 else f"grid[{k}]"
        _check_int(label, n, minimum=2)
        if not _is_pow2(n):
            raise ConfigError(label, f"must be a power of two, got {n}")
    return tuple(cells)


def _interval(name, raw) -> tuple:
    if not isinstance(raw, list) or len(raw) != 2:
        raise ConfigError(name, f"expected [lower, upper], got {raw!r}")
    lo = _check_number(f"{name}[0]", raw[0])
    hi = _check_number(f"{name}[1]", raw[1])
    if not hi > lo:
        raise ConfigError(name, "upper bound must exceed lower bound")
    return (lo, hi)


def _domain(raw, dim) -> tuple:
    if raw is None:
        return ((0.0, 1.0),) * dim
    if dim == 1:
        return (_interval("domain", raw),)
    if not isinstance(raw, list) or len(raw) != dim:
        raise ConfigError("domain", f"expected {dim} intervals, got {raw!r}")
    return tuple(_interval(f"domain[{k}]", b) for k, b in enumerate(raw))


def _xi_list(raw) -> tuple:
    if not isinstance(raw, list) or not raw:
        raise ConfigError("xi_list", "expected a non-empty list of numbers")
    xs = tuple(_check_number(f"xi_list[{k}]", x, nonneg=True) for k, x in enumerate(raw))
    for k in range(1, len(xs)):
        if not xs[k] < xs[k - 1]:
            raise ConfigError("xi_list", f"must be strictly decreasing (entry {k} is {xs[k]!r} after {xs[k - 1]!r})")
    return xs


def _boundary(side, raw, G) -> BoundarySpec:
    name = f"bc.{side}"
    _check_keys(name, raw, _BC_KEYS)
    kind = raw.get("kind")
    if kind == "periodic":
        extra = set(raw) - {"kind"}
        if extra:
            raise ConfigError(f"{name}.{sorted(extra)[0]}", "not used by a periodic boundary")
        return BoundarySpec.periodic(side)
    if kind == "dirichlet_velocity":
        if {"c_u", "c_tau"} & set(raw):
            raise ConfigError(name, "dirichlet_velocity takes only g")
        return BoundarySpec.dirichlet_velocity(side, _check_number(f"{name}.g", raw.get("g", 0.0)))
    if kind == "dissipative":
        for key in ("c_u", "c_tau"):
            if key not in raw:
                raise ConfigError(f"{name}.{key}", "required for a dissipative boundary")
        spec = BoundarySpec.dissipative(side, _check_number(f"{name}.c_u", raw["c_u"]),
                                        _check_number(f"{name}.c_tau", raw["c_tau"]),
                                        _check_number(f"{name}.g", raw.get("g", 0.0)))
        try:
            spec.validate(G)
        except (ValueError, SingularBoundaryError) as exc:
            raise ConfigError(name, str(exc)) from None
        return spec
    raise ConfigError(f"{name}.kind", f"expected periodic, dirichlet_velocity or dissipative, got {kind!r}")


def _shear_bc(raw, scenario, G) -> tuple:
    if raw is None:
        if scenario == "shear-stokes":
            raw = {"left": {"kind": "dirichlet_velocity", "g": 1.0},
                   "right": {"kind": "dissipative", "c_u": 1.0, "c_tau": 1.0}}
        else:
            raw = {"left": {"kind": "periodic"}, "right": {"kind": "periodic"}}
    _check_keys("bc", raw, {"left", "right"})
    for side in ("left", "right"):
        if side not in raw:
            raise ConfigError(f"bc.{side}", "missing")
    left = _boundary("left", raw["left"], G)
    right = _boundary("right", raw["right"], G)
    if (left.kind == "periodic") != (right.kind == "periodic"):
        raise ConfigError("bc", "periodic must be used on both sides or neither")
    if scenario == "shear-stokes" and left.kind != "dirichlet_velocity":
        raise ConfigError("bc.left.kind", "shear-stokes needs a dirichlet_velocity left wall")
    return (left, right)


_INITIAL_SHEAR = {"kind": "sine", "amplitude": 1.0, "mode": 1}
_INITIAL_MULTID = {"kind": "density-bump", "amplitude": 0.1, "compatible": False}


def _initial(raw, scenario) -> dict:
    if scenario == "shear-stokes":
        base = {"kind": "rest"}
    elif scenario in SHEAR_SCENARIOS:
        base = dict(_INITIAL_SHEAR)
    else:
        base = dict(_INITIAL_MULTID)
    if raw is None:
        return base
    if not isinstance(raw, dict):
        raise ConfigError("initial", "expected a mapping")
    kind = raw.get("kind", base["kind"])
    if scenario in SHEAR_SCENARIOS:
        if kind == "rest":
            _check_keys("initial", raw, {"kind"})
            out = {"kind": "rest"}
        elif kind == "sine":
            _check_keys("initial", raw, {"kind", "amplitude", "mode"})
            out = dict(_INITIAL_SHEAR)
            if "amplitude" in raw:
                out["amplitude"] = _check_number("initial.amplitude", raw["amplitude"])
            if "mode" in raw:
                out["mode"] = _check_int("initial.mode", raw["mode"], minimum=1)
        else:
            raise ConfigError("initial.kind", f"expected sine or rest, got {kind!r}")
        if scenario == "shear-stokes" and out["kind"] != "rest":
            raise ConfigError("initial.kind", "shear-stokes starts from rest")
        return out
    if kind != "density-bump":
        raise ConfigError("initial.kind", f"expected density-bump, got {kind!r}")
    _check_keys("initial", raw, {"kind", "amplitude", "compatible"})
    out = dict(_INITIAL_MULTID)
    if "amplitude" in raw:
        amp = _check_number("initial.amplitude", raw["amplitude"], nonneg=True)
        if amp >= 0.5:
            raise ConfigError("initial.amplitude", "must be below 0.5 to keep the density positive")
        out["amplitude"] = amp
    if "compatible" in raw:
        if not isinstance(raw["compatible"], bool):
            raise ConfigError("initial.compatible", "expected true or false")
        out["compatible"] = raw["compatible"]
    return out


def parse_config(raw: Any) -> ScenarioConfig:
    """Validate a decoded mapping and build the config, raising :class:`ConfigError`."""
    _check_keys("<config>", raw, _TOP_KEYS)
    for key in ("scenario", "grid", "T", "xi_list"):
        if key not in raw:
            raise ConfigError(key, "required")
    scenario = raw["scenario"]
    if scenario not in SCENARIOS:
        raise ConfigError("scenario", f"expected one of {', '.join(SCENARIOS)}, got {scenario!r}")
    grid = _grid(raw["grid"], scenario)
    domain = _domain(raw.get("domain"), len(grid))
    T = _check_number("T", raw["T"], positive=True)

    praw = raw.get("params", {})
    _check_keys("params", praw, _PARAM_KEYS)
    G = _check_number("params.G", praw.get("G", 1.0), positive=True)
    c0 = _check_number("params.c0", praw.get("c0", 1.0), positive=True)
    kind = praw.get("eos", "isothermal")
    if kind != "isothermal":
        raise ConfigError("params.eos", f"only 'isothermal' is available, got {kind!r}")
    params = MaterialParams(G=G, xi=0.0, c0=c0)
    eos = Eos(c0=c0, kind=kind)

    xi_list = _xi_list(raw["xi_list"])
    if scenario in ("shear-xi-sweep", "multid-xi-sweep") and len(xi_list) < 2:
        raise ConfigError("xi_list", "a sweep needs the reference entry and at least one other")

    if scenario in SHEAR_SCENARIOS:
        bc = _shear_bc(raw.get("bc"), scenario, G)
    else:
        if raw.get("bc", "periodic") != "periodic":
            raise ConfigError("bc", "multi-dimensional scenarios are periodic only")
        bc = None

    cfl = 1.0
    if "cfl" in raw:
        if scenario not in SHEAR_SCENARIOS:
            raise ConfigError("cfl", "only used by shear scenarios (multi-D steps are fixed by the wavespeed)")
        cfl = _check_number("cfl", raw["cfl"], positive=True)
        if cfl > 1:
            raise ConfigError("cfl", f"must not exceed 1, got {cfl}")

    outputs = _check_int("outputs", raw.get("outputs", 100 if scenario in SHEAR_SCENARIOS else 10), minimum=1)
    output_dir = raw.get("output_dir", "maxlab-output")
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("output_dir", "expected a non-empty path string")
    seed = _check_int("seed", raw.get("seed", 0), minimum=0)
    threads = _check_int("threads", raw.get("threads", 1), minimum=1)

    return ScenarioConfig(scenario=scenario, grid=grid, domain=domain, T=T, params=params, eos=eos,
                          xi_list=xi_list, bc=bc, initial=_initial(raw.get("initial"), scenario),
                          cfl=cfl, outputs=outputs, output_dir=output_dir, seed=seed, threads=threads)


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"not valid YAML: {exc}") from None
    if isinstance(raw, dict) and "config" in raw and "scenario" not in raw:
        raw = raw["config"]  # a run manifest
    return parse_config(raw)
