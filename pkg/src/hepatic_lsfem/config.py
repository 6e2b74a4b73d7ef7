"""Scenario configuration files.

A configuration is an INI file with the sections below; every key is
optional and falls back to the defaults shown by :func:`resolved_text`.

``[scenario]``
    ``kind`` (capillary | lobule | manufactured), ``case`` and
    ``subdivisions`` (manufactured only), ``target_length`` (rescale the
    geometry so its largest extent equals this value, or ``none``).
``[geometry]``
    fields of :class:`CapillaryGeometryConfig` or :class:`LobuleGeometryConfig`,
    including the boundary pressures.
``[material]``
    ``mu``, ``mu_F``, ``K``, ``K_M``, ``eps`` in SI units.
``[weights]``
    ``mode`` (auto | unit | manual); with ``manual`` the seven term weights.
``[adaptive]``
    ``levels``, ``theta``, ``uniform``.
``[solver]``
    ``method`` (auto | direct | cg), ``tol``.
``[output]``
    ``directory``.

Sections whose name starts with ``derived.`` are written by the resolved
echo and ignored on input, so an echo can be fed back as a configuration.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Union

from .assembly import TERMS, LsTermWeights, MaterialParams
from .geometry import CapillaryGeometryConfig, LobuleGeometryConfig

KINDS = ("capillary", "lobule", "manufactured")
CASES = ("darcy_trig", "stokes_polynomial", "coupled_uniform")
WEIGHT_MODES = ("auto", "unit", "manual")
METHODS = ("auto", "direct", "cg")
_GEOMETRY = {"capillary": CapillaryGeometryConfig, "lobule": LobuleGeometryConfig}
_SECTIONS = ("scenario", "geometry", "material", "weights", "adaptive", "solver", "output")


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists every issue found."""

    def __init__(self, problems: list):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


@dataclass
class ScenarioConfig:
    kind: str = "capillary"
    case: str = "darcy_trig"
    subdivisions: int = 4
    target_length: Optional[float] = 2.0
    geometry: Union[CapillaryGeometryConfig, LobuleGeometryConfig, None] = field(
        default_factory=CapillaryGeometryConfig)
    material: MaterialParams = field(default_factory=MaterialParams)
    weight_mode: str = "auto"
    weights: Optional[LsTermWeights] = None
    levels: int = 5
    theta: float = 0.5
    uniform: bool = False
    method: str = "auto"
    tol: float = 1e-10
    output_dir: str = "results"


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_optional_float(s: str) -> Optional[float]:
    return None if s.strip().lower() in ("none", "") else float(s)


def _convert(default, text: str):
    if isinstance(default, bool):
        return _parse_bool(text)
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float) or default is None:
        return _parse_optional_float(text)
    return text.strip()


def _read(path=None, text=None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str  # keep mu_F / K_M case
    cp.read_string(Path(path).read_text() if text is None else text)
    return cp


def parse_config(path=None, text=None, **overrides) -> ScenarioConfig:
    """Parse and fully validate a configuration file (or INI ``text``).

    ``overrides`` replace fields after parsing (``levels``, ``theta``,
    ``uniform``, ``output_dir``); ``None`` values are ignored.  Raises
    :class:`ConfigError` listing every problem.
    """
    problems = []
    try:
        cp = _read(path, text)
    except (OSError, configparser.Error) as exc:
        raise ConfigError([f"cannot read configuration: {exc}"]) from None

    for sec in cp.sections():
        if sec not in _SECTIONS and not sec.startswith("derived."):
            problems.append(f"unknown section [{sec}]")

    def section(name):
        return cp[name] if cp.has_section(name) else {}

    def get(sec, key, default, target=None):
        src = section(sec)
        if key not in src:
            return default
        try:
            return _convert(default if target is None else target, src[key])
        except ValueError as exc:
            problems.append(f"[{sec}] {key}: {exc}")
            return default

    def unknown(sec, allowed):
        for key in section(sec):
            if key not in allowed:
                problems.append(f"[{sec}] unknown key {key!r}")

    cfg = ScenarioConfig()
    unknown("scenario", {"kind", "case", "subdivisions", "target_length"})
    kind = get("scenario", "kind", "capillary").lower()
    if kind not in KINDS:
        problems.append(f"[scenario] kind must be one of {', '.join(KINDS)}, got {kind!r}")
        kind = "capillary"
    manufactured = kind == "manufactured"
    cfg.kind = kind
    cfg.case = get("scenario", "case", "darcy_trig")
    if manufactured and cfg.case not in CASES:
        problems.append(f"[scenario] case must be one of {', '.join(CASES)}, got {cfg.case!r}")
    cfg.subdivisions = get("scenario", "subdivisions", 4)
    if cfg.subdivisions < 1:
        problems.append("[scenario] subdivisions must be at least 1")
    cfg.target_length = get("scenario", "target_length", None if manufactured else 2.0, 0.0)
    if cfg.target_length is not None and not cfg.target_length > 0:
        problems.append("[scenario] target_length must be positive or 'none'")

    # geometry
    if manufactured:
        cfg.geometry = None
        if section("geometry"):
            problems.append("[geometry] is not used by manufactured scenarios")
    else:
        gcls = _GEOMETRY[kind]
        base = gcls()
        unknown("geometry", {f.name for f in fields(gcls)})
        vals = {f.name: get("geometry", f.name, getattr(base, f.name),
                            0.0 if f.name in ("h_axial", "ring_width") else None)
                for f in fields(gcls)}
        cfg.geometry = gcls(**vals)

    # material
    mdef = MaterialParams.unit() if manufactured else MaterialParams()
    unknown("material", {f.name for f in fields(MaterialParams)})
    mvals = {f.name: get("material", f.name, getattr(mdef, f.name)) for f in fields(MaterialParams)}
    bad = [k for k, v in mvals.items() if v is None or not v > 0]
    for k in bad:
        problems.append(f"[material] {k} must be positive, got {mvals[k]}")
    cfg.material = mdef if bad else MaterialParams(**mvals)

    # weights
    unknown("weights", {"mode", *TERMS})
    mode = get("weights", "mode", "unit" if manufactured else "auto").lower()
    if mode not in WEIGHT_MODES:
        problems.append(f"[weights] mode must be one of {', '.join(WEIGHT_MODES)}, got {mode!r}")
        mode = "auto"
    cfg.weight_mode = mode
    given = [t for t in TERMS if t in section("weights")]
    if mode == "manual":
        missing = [t for t in TERMS if t not in given]
        if missing:
            problems.append(f"[weights] manual mode needs all term weights; missing {', '.join(missing)}")
        w = {t: get("weights", t, 1.0) for t in TERMS}
        neg = [t for t, v in w.items() if v is None or not v > 0]
        for t in neg:
            problems.append(f"[weights] {t} must be positive, got {w[t]}")
        if not missing and not neg:
            cfg.weights = LsTermWeights(**w)
    elif given:
        problems.append(f"[weights] term weights are only read with mode = manual ({', '.join(given)})")
    elif mode == "unit":
        cfg.weights = LsTermWeights()

    # adaptive and solver
    unknown("adaptive", {"levels", "theta", "uniform"})
    cfg.levels = get("adaptive", "levels", 5)
    cfg.theta = get("adaptive", "theta", 0.5)
    cfg.uniform = get("adaptive", "uniform", False)
    unknown("solver", {"method", "tol"})
    cfg.method = get("solver", "method", "auto").lower()
    cfg.tol = get("solver", "tol", 1e-10)
    unknown("output", {"directory"})
    cfg.output_dir = get("output", "directory", "results")

    for key, val in overrides.items():
        if val is not None:
            setattr(cfg, key, val)
    problems += check(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def check(cfg: ScenarioConfig) -> list:
    """Value checks that do not depend on the file layout, including a dry build of the mesh."""
    problems = []
    if cfg.levels is None or cfg.levels < 1:
        problems.append(f"[adaptive] levels must be at least 1, got {cfg.levels}")
    if cfg.theta is None or not 0 < cfg.theta <= 1:
        problems.append(f"[adaptive] theta must lie in (0, 1], got {cfg.theta}")
    if cfg.method not in METHODS:
        problems.append(f"[solver] method must be one of {', '.join(METHODS)}, got {cfg.method!r}")
    if cfg.tol is None or not 0 < cfg.tol < 1:
        problems.append(f"[solver] tol must lie in (0, 1), got {cfg.tol}")
    if cfg.kind == "manufactured" and cfg.target_length is not None:
        problems.append("[scenario] manufactured cases are solved in their own coordinates; use target_length = none")
    if cfg.kind == "manufactured" and cfg.case == "coupled_uniform" and cfg.subdivisions % 2:
        problems.append("[scenario] coupled_uniform needs an even number of subdivisions")
    if cfg.geometry is not None:
        from .scenario import initial_mesh
        try:
            initial_mesh(cfg)
        except ValueError as exc:
            problems.append(f"[geometry] {exc}")
    return problems


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def resolved_text(cfg: ScenarioConfig, derived: Optional[dict] = None) -> str:
    """The configuration with every default spelled out, in input format.

    ``derived`` maps extra section names (written as ``[derived.<name>]``) to
    key/value dicts, e.g. the scale map and the nondimensional parameters.
    """
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp["scenario"] = {"kind": cfg.kind, "target_length": _fmt(cfg.target_length)}
    if cfg.kind == "manufactured":
        cp["scenario"].update({"case": cfg.case, "subdivisions": str(cfg.subdivisions)})
    else:
        cp["geometry"] = {f.name: _fmt(getattr(cfg.geometry, f.name)) for f in fields(cfg.geometry)}
    cp["material"] = {f.name: _fmt(getattr(cfg.material, f.name)) for f in fields(MaterialParams)}
    cp["weights"] = {"mode": cfg.weight_mode}
    if cfg.weight_mode == "manual":
        cp["weights"].update({t: _fmt(getattr(cfg.weights, t)) for t in TERMS})
    cp["adaptive"] = {"levels": str(cfg.levels), "theta": _fmt(float(cfg.theta)), "uniform": _fmt(cfg.uniform)}
    cp["solver"] = {"method": cfg.method, "tol": _fmt(float(cfg.tol))}
    cp["output"] = {"directory": str(cfg.output_dir)}
    for name, values in (derived or {}).items():
        cp[f"derived.{name}"] = {k: _fmt(v) for k, v in values.items()}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def with_overrides(cfg: ScenarioConfig, **kw) -> ScenarioConfig:
    out = replace(cfg, **{k: v for k, v in kw.items() if v is not None})
    problems = check(out)
    if problems:
        raise ConfigError(problems)
    return out
