"""Scenario and sweep configuration files (YAML, unit-suffixed keys)."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .astro import EARTH, Flavor, OrbitalElements, RoeState, osc_to_mean
from .closed_loop import LoopConfig, NoiseModel, initial_deputy
from .dynamics import (
    TimeGrid,
    build_grid,
    build_grid_segments,
    build_grid_with_windows,
    coast_time_for_slew,
)
from .guidance import GuidanceSpec
from .sweep import SweepConfig

ARCSEC = math.pi / (180.0 * 3600.0)
BUNDLED = ("table1", "fig6_scenario1", "fig6_scenario2", "table2_benchmark", "sweep")


class ScenarioError(ValueError):
    """Invalid scenario document; the message names the key and line."""


_CHIEF_KEYS = ("a_km", "u_deg", "ex", "ey", "i_deg", "raan_deg")
_NOISE_KEYS = ("sigma_r_c_m", "sigma_v_c_m_s", "sigma_r_d_m", "sigma_v_d_m_s", "sigma_y_m",
               "zeta_pe_arcsec")
_SCENARIO_KEYS = {
    "name": False, "description": False, "chief_osculating": True, "y0_m": True, "yf_m": True,
    "horizon_orbits": True, "tf_orbits": False, "segments": False, "tn_s": False,
    "omega_max_deg_s": False, "t_safety_s": False, "no_thrust_windows_orbits": False,
    "n_dir": False, "gamma_first_deg": False, "mass_kg": True, "f_max_mN": True,
    "noise": False, "epsilon_m": False, "seed": False,
}
_SWEEP_KEYS = {
    "name": False, "description": False, "chief_osculating": True, "tf_orbits_values": True,
    "tn_s_values": True, "samples_per_cell": True, "fast_samples_per_cell": False,
    "y0_ranges_m": True, "yf_m": False, "horizon_orbits": True, "mass_kg": True,
    "f_max_mN": True, "n_dir": False, "gamma_first_deg": False, "seed": False,
}


def _lines(text: str) -> dict[tuple[str, ...], int]:
    """1-based line of every mapping key path in the document."""
    out: dict[tuple[str, ...], int] = {}

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = path + (str(k.value),)
                out[key] = k.start_mark.line + 1
                walk(v, key)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                out.setdefault(path + (str(i),), v.start_mark.line + 1)
                walk(v, path + (str(i),))

    try:
        walk(yaml.compose(text), ())
    except yaml.YAMLError:
        pass
    return out


class _Reader:
    def __init__(self, data: dict, lines: dict, source: str):
        self.data, self.lines, self.source = data, lines, source

    def fail(self, path: tuple[str, ...], msg: str):
        line = self.lines.get(path)
        where = f"{self.source}:{line}" if line else self.source
        raise ScenarioError(f"{where}: key '{'.'.join(path)}': {msg}")

    def check_keys(self, mapping: dict, allowed, path=()):
        if not isinstance(mapping, dict):
            self.fail(path, "expected a mapping")
        for k in mapping:
            if k not in allowed:
                self.fail(path + (str(k),), "unknown key")
        required = allowed if isinstance(allowed, (list, tuple)) else [k for k, r in allowed.items() if r]
        for k in required:
            if k not in mapping:
                self.fail(path + (k,), "missing required key")

    def number(self, value, path, positive=False, nonneg=False) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(path, f"expected a number, got {value!r}")
        v = float(value)
        if not math.isfinite(v):
            self.fail(path, "must be finite")
        if positive and v <= 0.0:
            self.fail(path, "must be positive")
        if nonneg and v < 0.0:
            self.fail(path, "must be non-negative")
        return v

    def integer(self, value, path, minimum=None) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(path, f"expected an integer, got {value!r}")
        if minimum is not None and value < minimum:
            self.fail(path, f"must be at least {minimum}")
        return int(value)

    def vector(self, value, path, n=None) -> list[float]:
        if not isinstance(value, list) or (n is not None and len(value) != n):
            self.fail(path, f"expected a list of {n} numbers" if n else "expected a list")
        return [self.number(v, path + (str(i),)) for i, v in enumerate(value)]

    def pairs(self, value, path) -> list[tuple[float, float]]:
        if not isinstance(value, list):
            self.fail(path, "expected a list of [start, end] pairs")
        return [tuple(self.vector(v, path + (str(i),), 2)) for i, v in enumerate(value)]


def _parse_text(text: str, source: str) -> tuple[dict, dict]:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f":{mark.line + 1}" if mark is not None else ""
        raise ScenarioError(f"{source}{line}: YAML syntax error: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError(f"{source}: document must be a mapping")
    return data, _lines(text)


def _chief(r: _Reader, raw) -> dict[str, float]:
    r.check_keys(raw, _CHIEF_KEYS, ("chief_osculating",))
    out = {k: r.number(raw[k], ("chief_osculating", k)) for k in _CHIEF_KEYS}
    if out["a_km"] <= 0.0:
        r.fail(("chief_osculating", "a_km"), "must be positive")
    return out


def chief_from_dict(c: dict[str, float]) -> OrbitalElements:
    return OrbitalElements(c["a_km"] * 1e3, math.radians(c["u_deg"]), c["ex"], c["ey"],
                           math.radians(c["i_deg"]), math.radians(c["raan_deg"]), Flavor.OSCULATING)


@dataclass
class Scenario:
    """One guidance / closed-loop scenario in file units."""

    chief_osculating: dict[str, float]
    y0_m: list[float]
    yf_m: list[float]
    horizon_orbits: float
    mass_kg: float
    f_max_mN: float
    tf_orbits: float | None = None
    segments: list[dict[str, float]] | None = None
    tn_s: float | None = None
    omega_max_deg_s: float | None = None
    t_safety_s: float | None = None
    no_thrust_windows_orbits: list[tuple[float, float]] | None = None
    n_dir: int = 12
    gamma_first_deg: float = 0.0
    noise: dict[str, float] | None = None
    epsilon_m: float | None = None
    seed: int = 0
    name: str = ""
    description: str = ""

    # -- derived objects -------------------------------------------------
    def chief_osc(self) -> OrbitalElements:
        return chief_from_dict(self.chief_osculating)

    def chief_mean(self) -> OrbitalElements:
        return osc_to_mean(self.chief_osc())

    def period(self) -> float:
        """Chief orbit period [s] from the mean semi-major axis."""
        return self.chief_mean().period(EARTH)

    def coast_time(self) -> float:
        if self.tn_s is not None:
            return self.tn_s
        return coast_time_for_slew(self.omega_max_deg_s, self.t_safety_s)

    def grid(self) -> TimeGrid:
        chief = self.chief_mean()
        period = chief.period(EARTH)
        tf_end = self.horizon_orbits * period
        tn = self.coast_time()
        if self.segments:
            segs = [(s["until_orbits"] * period, s["tf_orbits"] * period) for s in self.segments]
            return build_grid_segments(0.0, segs, tn, chief)
        if self.no_thrust_windows_orbits:
            wins = [(a * period, b * period) for a, b in self.no_thrust_windows_orbits]
            return build_grid_with_windows(0.0, tf_end, self.tf_orbits * period, wins, tn, chief)
        return build_grid(0.0, tf_end, self.tf_orbits * period, tn, chief)

    def guidance_spec(self) -> GuidanceSpec:
        return GuidanceSpec(self.grid(), RoeState.from_array(self.y0_m),
                            RoeState.from_array(self.yf_m), self.f_max_mN * 1e-3, self.mass_kg,
                            self.n_dir, math.radians(self.gamma_first_deg))

    def noise_model(self, seed: int | None = None) -> NoiseModel:
        n = self.noise or {}
        return NoiseModel(n.get("sigma_r_c_m", 0.0), n.get("sigma_v_c_m_s", 0.0),
                          n.get("sigma_r_d_m", 0.0), n.get("sigma_v_d_m_s", 0.0),
                          n.get("sigma_y_m", 0.0), n.get("zeta_pe_arcsec", 0.0) * ARCSEC,
                          self.seed if seed is None else seed)

    def loop_config(self) -> LoopConfig:
        if self.epsilon_m is None:
            raise ScenarioError("closed-loop runs need 'epsilon_m'")
        return LoopConfig(self.grid(), RoeState.from_array(self.yf_m), self.epsilon_m,
                          self.f_max_mN * 1e-3, self.mass_kg, self.n_dir,
                          math.radians(self.gamma_first_deg))

    def deputy_osc(self) -> OrbitalElements:
        return initial_deputy(self.chief_osc(), RoeState.from_array(self.y0_m))

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        out = {}
        for k in _SCENARIO_KEYS:
            v = d.get(k)
            if v is None or (k in ("name", "description") and v == ""):
                continue
            if k == "no_thrust_windows_orbits":
                v = [list(p) for p in v]
            out[k] = v
        return out

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_dict(cls, data: dict, lines: dict | None = None, source: str = "<scenario>") -> "Scenario":
        r = _Reader(data, lines or {}, source)
        r.check_keys(data, _SCENARIO_KEYS)
        kw: dict[str, Any] = {
            "chief_osculating": _chief(r, data["chief_osculating"]),
            "y0_m": r.vector(data["y0_m"], ("y0_m",), 6),
            "yf_m": r.vector(data["yf_m"], ("yf_m",), 6),
            "horizon_orbits": r.number(data["horizon_orbits"], ("horizon_orbits",), positive=True),
            "mass_kg": r.number(data["mass_kg"], ("mass_kg",), positive=True),
            "f_max_mN": r.number(data["f_max_mN"], ("f_max_mN",), positive=True),
        }
        for key in ("tf_orbits", "tn_s", "omega_max_deg_s", "t_safety_s", "epsilon_m"):
            if key in data:
                nonneg = key == "t_safety_s"
                kw[key] = r.number(data[key], (key,), positive=not nonneg, nonneg=nonneg)
        if "gamma_first_deg" in data:
            kw["gamma_first_deg"] = r.number(data["gamma_first_deg"], ("gamma_first_deg",))
        if "n_dir" in data:
            kw["n_dir"] = r.integer(data["n_dir"], ("n_dir",), 3)
        if "seed" in data:
            kw["seed"] = r.integer(data["seed"], ("seed",), 0)
        for key in ("name", "description"):
            if key in data:
                if not isinstance(data[key], str):
                    r.fail((key,), "expected a string")
                kw[key] = data[key]
        if "segments" in data:
            segs = data["segments"]
            if not isinstance(segs, list) or not segs:
                r.fail(("segments",), "expected a nonempty list")
            parsed = []
            for i, s in enumerate(segs):
                path = ("segments", str(i))
                r.check_keys(s, ("until_orbits", "tf_orbits"), path)
                parsed.append({k: r.number(s[k], path + (k,), positive=True)
                               for k in ("until_orbits", "tf_orbits")})
            kw["segments"] = parsed
        if "no_thrust_windows_orbits" in data:
            kw["no_thrust_windows_orbits"] = r.pairs(data["no_thrust_windows_orbits"],
                                                     ("no_thrust_windows_orbits",))
        if "noise" in data:
            r.check_keys(data["noise"], {k: False for k in _NOISE_KEYS}, ("noise",))
            kw["noise"] = {k: r.number(v, ("noise", k), nonneg=True) for k, v in data["noise"].items()}
        if ("tf_orbits" in kw) == ("segments" in kw):
            r.fail(("tf_orbits",), "give exactly one of 'tf_orbits' or 'segments'")
        if "segments" in kw and "no_thrust_windows_orbits" in kw:
            r.fail(("segments",), "'segments' cannot be combined with no-thrust windows")
        if "tn_s" not in kw and not ("omega_max_deg_s" in kw and "t_safety_s" in kw):
            r.fail(("tn_s",), "give 'tn_s' or both 'omega_max_deg_s' and 't_safety_s'")
        return cls(**kw)


@dataclass
class SweepFile:
    chief_osculating: dict[str, float]
    tf_orbits_values: list[float]
    tn_s_values: list[float]
    samples_per_cell: int
    y0_ranges_m: list[tuple[float, float]]
    horizon_orbits: float
    mass_kg: float
    f_max_mN: float
    yf_m: list[float] = field(default_factory=lambda: [0.0] * 6)
    fast_samples_per_cell: int = 10
    n_dir: int = 12
    gamma_first_deg: float = 0.0
    seed: int = 0
    name: str = ""
    description: str = ""

    @classmethod
    def from_dict(cls, data: dict, lines: dict | None = None, source: str = "<sweep>") -> "SweepFile":
        r = _Reader(data, lines or {}, source)
        r.check_keys(data, _SWEEP_KEYS)
        kw: dict[str, Any] = {
            "chief_osculating": _chief(r, data["chief_osculating"]),
            "tf_orbits_values": r.vector(data["tf_orbits_values"], ("tf_orbits_values",)),
            "tn_s_values": r.vector(data["tn_s_values"], ("tn_s_values",)),
            "samples_per_cell": r.integer(data["samples_per_cell"], ("samples_per_cell",), 1),
            "y0_ranges_m": r.pairs(data["y0_ranges_m"], ("y0_ranges_m",)),
            "horizon_orbits": r.number(data["horizon_orbits"], ("horizon_orbits",), positive=True),
            "mass_kg": r.number(data["mass_kg"], ("mass_kg",), positive=True),
            "f_max_mN": r.number(data["f_max_mN"], ("f_max_mN",), positive=True),
        }
        if len(kw["y0_ranges_m"]) != 6:
            r.fail(("y0_ranges_m",), "expected six [low, high] pairs")
        if not kw["tf_orbits_values"] or not kw["tn_s_values"]:
            r.fail(("tf_orbits_values",), "Tf and Tn grids must be nonempty")
        if "yf_m" in data:
            kw["yf_m"] = r.vector(data["yf_m"], ("yf_m",), 6)
        if "fast_samples_per_cell" in data:
            kw["fast_samples_per_cell"] = r.integer(data["fast_samples_per_cell"],
                                                    ("fast_samples_per_cell",), 1)
        if "n_dir" in data:
            kw["n_dir"] = r.integer(data["n_dir"], ("n_dir",), 3)
        if "gamma_first_deg" in data:
            kw["gamma_first_deg"] = r.number(data["gamma_first_deg"], ("gamma_first_deg",))
        if "seed" in data:
            kw["seed"] = r.integer(data["seed"], ("seed",), 0)
        for key in ("name", "description"):
            if key in data:
                kw[key] = str(data[key])
        return cls(**kw)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["y0_ranges_m"] = [list(p) for p in self.y0_ranges_m]
        return {k: v for k, v in d.items() if not (k in ("name", "description") and v == "")}

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def sweep_config(self, fast: bool = False) -> SweepConfig:
        return SweepConfig(
            chief_from_dict(self.chief_osculating), tuple(self.tf_orbits_values),
            tuple(self.tn_s_values),
            self.fast_samples_per_cell if fast else self.samples_per_cell,
            tuple(tuple(p) for p in self.y0_ranges_m), tuple(self.yf_m), self.horizon_orbits,
            self.mass_kg, self.f_max_mN * 1e-3, self.n_dir, math.radians(self.gamma_first_deg),
            self.seed)


def _read(path_or_name: str | Path) -> tuple[str, str]:
    p = Path(path_or_name)
    if p.exists():
        return p.read_text(), str(p)
    name = str(path_or_name)
    if name in BUNDLED:
        res = resources.files("roeguide") / "scenarios" / f"{name}.yaml"
        return res.read_text(), f"<bundled {name}>"
    raise ScenarioError(f"{path_or_name}: no such file or bundled scenario")


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    data, lines = _parse_text(text, source)
    return Scenario.from_dict(data, lines, source)


def load_scenario(path_or_name: str | Path) -> Scenario:
    """Load a scenario from a path or a bundled name (e.g. ``table1``)."""
    return parse_scenario(*_read(path_or_name))


def load_sweep(path_or_name: str | Path = "sweep") -> SweepFile:
    text, source = _read(path_or_name)
    data, lines = _parse_text(text, source)
    return SweepFile.from_dict(data, lines, source)
