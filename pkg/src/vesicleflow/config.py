"""Run configuration: YAML documents with environment overrides.

Every key is optional; unknown keys are errors.  Environment variables named
``VESICLEFLOW_<SECTION>__<KEY>`` (or ``VESICLEFLOW_<KEY>`` for top-level
keys) override the document; their values are parsed as YAML scalars.
"""

from __future__ import annotations

import copy
import dataclasses
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import numpy as np
import yaml

from . import initial as ic
from .diagnostics import CriterionSpec, InvalidCriterion
from .dynamics import SCHEMES, StepConfig, zero_velocity
from .energy import ModelParams, a_functional, b_functional
from .spectral import Grid

logger = logging.getLogger(__name__)

ENV_PREFIX = "VESICLEFLOW_"

INITIAL_KINDS = {
    "tanh_disk": {"center": None, "radius": 0.25},
    "tanh_ellipse": {"center": None, "axes": None},
    "constant": {"c": 1.0},
    "from_checkpoint": {"path": None},
    "random": {"seed": 0, "band": 8, "amplitude": 0.5, "offset": 0.0},
}
VELOCITY_KINDS = {
    "zero": {},
    "taylor_green": {"amplitude": 1.0},
    "random_solenoidal": {"seed": 0, "amplitude": 1.0, "band": 8},
}

DEFAULTS = {
    "model": {k: v for k, v in dataclasses.asdict(ModelParams()).items() if k not in ("alpha", "beta")},
    "grid": {"dim": 2, "resolution": 128, "box_length": 1.0},
    "step": {"dt": 1e-4, "scheme": "imex_euler", "dealias": True},
    "initial_condition": {"kind": "tanh_disk"},
    "initial_velocity": {"kind": "zero"},
    "t_end": 0.01,
    "record_every": 10,
    "checkpoint_every": 0,
    "output_dir": "run",
    "on_hash_mismatch": "warn",
    "criteria": [],
    "minimize": {"tol": 1e-6, "max_steps": 20000},
    "stability": {"sigmas": [1e-3, 1e-2, 1e-1], "t_end": 0.05, "dt": 1e-4, "seed": 0},
}


class ConfigError(ValueError):
    """A configuration value is missing, unknown or out of range."""


@dataclass
class RunConfig:
    model: ModelParams
    grid: Grid
    step: StepConfig
    initial_condition: dict
    initial_velocity: dict
    t_end: float
    record_every: int
    output_dir: Path
    checkpoint_every: int = 0
    on_hash_mismatch: str = "warn"
    criteria: list = field(default_factory=list)
    minimize: dict = field(default_factory=dict)
    stability: dict = field(default_factory=dict)
    # which of alpha/beta were filled in from the initial field
    auto_targets: tuple = ()

    def initial_phi(self) -> np.ndarray:
        return build_initial_phi(self.grid, self.model.epsilon, self.initial_condition)

    def initial_u(self) -> np.ndarray:
        return build_initial_u(self.grid, self.initial_velocity)

    def to_dict(self) -> dict:
        """Plain-data form that :func:`parse_config` maps back to an equal config."""
        return {
            "model": self.model.as_dict(),
            "grid": {"dim": self.grid.dim, "resolution": list(self.grid.resolution),
                     "box_length": list(self.grid.box_length)},
            "step": {"dt": self.step.dt, "scheme": self.step.scheme, "dealias": self.step.dealias},
            "initial_condition": _plain(self.initial_condition),
            "initial_velocity": _plain(self.initial_velocity),
            "t_end": self.t_end,
            "record_every": self.record_every,
            "checkpoint_every": self.checkpoint_every,
            "output_dir": str(self.output_dir),
            "on_hash_mismatch": self.on_hash_mismatch,
            "criteria": [{"kind": c.kind, "p": c.p, "s": c.s} for c in self.criteria],
            "minimize": dict(self.minimize),
            "stability": _plain(self.stability),
        }

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def _plain(d):
    if isinstance(d, dict):
        return {k: _plain(v) for k, v in d.items()}
    if isinstance(d, (list, tuple)):
        return [_plain(v) for v in d]
    if isinstance(d, Path):
        return str(d)
    if isinstance(d, np.generic):
        return d.item()
    return d


# field construction --------------------------------------------------------


def build_initial_phi(grid: Grid, epsilon: float, spec: Mapping) -> np.ndarray:
    kind = spec["kind"]
    if kind == "tanh_disk":
        return ic.tanh_disk(grid, epsilon, radius=spec["radius"], center=spec["center"])
    if kind == "tanh_ellipse":
        kw = {} if spec["axes"] is None else {"axes": tuple(spec["axes"])}
        return ic.tanh_ellipse(grid, epsilon, center=spec["center"], **kw)
    if kind == "constant":
        return ic.constant(grid, spec["c"])
    if kind == "random":
        return ic.random_phase(grid, seed=spec["seed"], band=spec["band"], amplitude=spec["amplitude"],
                               offset=spec["offset"])
    if kind == "from_checkpoint":
        from .persistence import load_checkpoint

        state, header = load_checkpoint(spec["path"], with_header=True)
        if header.grid != grid:
            raise ConfigError(f"initial_condition.path: checkpoint grid {header.grid} differs from grid {grid}")
        return state.phi
    raise ConfigError(f"initial_condition.kind: unknown kind {kind!r}")


def build_initial_u(grid: Grid, spec: Mapping) -> np.ndarray:
    kind = spec["kind"]
    if kind == "zero":
        return zero_velocity(grid)
    if kind == "taylor_green":
        return ic.taylor_green(grid, spec["amplitude"])
    if kind == "random_solenoidal":
        return ic.random_solenoidal(grid, seed=spec["seed"], amplitude=spec["amplitude"], band=spec["band"])
    raise ConfigError(f"initial_velocity.kind: unknown kind {kind!r}")


# parsing -------------------------------------------------------------------


def _merge(base: dict, over: Mapping, where: str) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        key = f"{where}{k}"
        if k not in base:
            raise ConfigError(f"{key}: unknown key")
        if isinstance(base[k], dict) and k not in ("initial_condition", "initial_velocity"):
            if not isinstance(v, Mapping):
                raise ConfigError(f"{key}: must be a mapping")
            out[k] = _merge(base[k], v, key + ".")
        else:
            out[k] = v
    return out


def env_overrides(environ: Optional[Mapping[str, str]] = None) -> dict:
    """Nested override mapping built from ``VESICLEFLOW_*`` variables."""
    environ = os.environ if environ is None else environ
    out: dict = {}
    for name in sorted(environ):
        if not name.startswith(ENV_PREFIX):
            continue
        path = name[len(ENV_PREFIX):].lower().split("__")
        node = out
        for part in path[:-1]:
            node = node.setdefault(part, {})
        node[path[-1]] = yaml.safe_load(environ[name])
    return out


def _deep_update(base: dict, over: Mapping) -> dict:
    for k, v in over.items():
        if isinstance(v, Mapping) and isinstance(base.get(k), dict):
            _deep_update(base[k], v)
        else:
            base[k] = v
    return base


def _number(value, key, kind=float, positive=False, nonneg=False):
    if isinstance(value, str):
        # YAML 1.1 reads forms like 1e-4 as strings
        try:
            value = float(value)
        except ValueError:
            pass
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: must be a number (got {value!r})")
    if kind is int and int(value) != value:
        raise ConfigError(f"{key}: must be an integer (got {value!r})")
    value = kind(value)
    if not np.isfinite(value):
        raise ConfigError(f"{key}: must be finite (got {value!r})")
    if positive and not value > 0:
        raise ConfigError(f"{key}: must be positive (got {value!r})")
    if nonneg and value < 0:
        raise ConfigError(f"{key}: must be non-negative (got {value!r})")
    return value


def _kind_block(raw, kinds: dict, where: str, base_dir: Path) -> dict:
    if isinstance(raw, str):
        raw = {"kind": raw}
    if not isinstance(raw, Mapping):
        raise ConfigError(f"{where}: must be a mapping with a 'kind' (one of {sorted(kinds)})")
    raw = {"kind": DEFAULTS[where]["kind"], **raw}
    kind = raw["kind"]
    if kind not in kinds:
        raise ConfigError(f"{where}.kind: must be one of {sorted(kinds)} (got {kind!r})")
    out = {"kind": kind, **kinds[kind]}
    for k, v in raw.items():
        if k == "kind":
            continue
        if k not in kinds[kind]:
            raise ConfigError(f"{where}.{k}: unknown key for kind {kind!r}")
        out[k] = v
    for k in ("radius", "amplitude"):
        if k in out:
            _number(out[k], f"{where}.{k}", positive=(k == "radius"), nonneg=True)
    for k in ("seed", "band"):
        if k in out:
            out[k] = _number(out[k], f"{where}.{k}", int, nonneg=True)
    if kind == "from_checkpoint":
        if out["path"] is None:
            raise ConfigError(f"{where}.path: required for from_checkpoint")
        path = Path(out["path"])
        path = path if path.is_absolute() else base_dir / path
        if not path.is_file():
            raise ConfigError(f"{where}.path: file not found: {path}")
        out["path"] = path
    return out


def parse_config(text: str = "", base_dir=None, environ: Optional[Mapping[str, str]] = None,
                 overrides: Optional[Mapping] = None, seed: Optional[int] = None) -> RunConfig:
    """Validate a YAML document (empty means all defaults) into a :class:`RunConfig`.

    Precedence: defaults < document < environment < ``overrides``.  ``seed``
    replaces every seed (random initial data and the stability perturbation).
    Missing ``model.alpha``/``model.beta`` are computed from the initial field.
    """
    base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
    try:
        doc = yaml.safe_load(text) if text and text.strip() else {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"document: not valid YAML ({exc})") from None
    if doc is None:
        doc = {}
    if not isinstance(doc, Mapping):
        raise ConfigError("document: top level must be a mapping")
    layered = _deep_update(copy.deepcopy(dict(doc)), env_overrides(environ))
    if overrides:
        layered = _deep_update(layered, overrides)
    base = copy.deepcopy(DEFAULTS)
    base["model"].update(alpha=None, beta=None)
    raw = _merge(base, layered, "")

    m = raw["model"]
    for name, v in m.items():
        if v is None:
            continue
        v = _number(v, f"model.{name}")
        try:
            ModelParams(**{name: v})
        except ValueError as exc:
            raise ConfigError(f"model.{name}: {exc}") from None
        m[name] = v

    g = raw["grid"]
    dim = _number(g["dim"], "grid.dim", int)
    if dim not in (2, 3):
        raise ConfigError(f"grid.dim: must be 2 or 3 (got {dim})")
    res = g["resolution"] if isinstance(g["resolution"], list) else [g["resolution"]] * dim
    box = g["box_length"] if isinstance(g["box_length"], list) else [g["box_length"]] * dim
    res = [_number(r, "grid.resolution", int, positive=True) for r in res]
    box = [_number(b, "grid.box_length", positive=True) for b in box]
    try:
        grid = Grid(dim, tuple(res), tuple(box))
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None

    st = raw["step"]
    dt = _number(st["dt"], "step.dt", positive=True)
    if st["scheme"] not in SCHEMES:
        raise ConfigError(f"step.scheme: must be one of {list(SCHEMES)} (got {st['scheme']!r})")
    if not isinstance(st["dealias"], bool):
        raise ConfigError(f"step.dealias: must be true or false (got {st['dealias']!r})")
    step = StepConfig(dt=dt, scheme=st["scheme"], dealias=st["dealias"])

    icond = _kind_block(raw["initial_condition"], INITIAL_KINDS, "initial_condition", base_dir)
    ivel = _kind_block(raw["initial_velocity"], VELOCITY_KINDS, "initial_velocity", base_dir)
    if seed is not None:
        seed = _number(seed, "seed", int, nonneg=True)
        for block in (icond, ivel):
            if "seed" in block:
                block["seed"] = seed
    t_end = _number(raw["t_end"], "t_end", positive=True)
    record_every = _number(raw["record_every"], "record_every", int, positive=True)
    checkpoint_every = _number(raw["checkpoint_every"], "checkpoint_every", int, nonneg=True)
    if raw["on_hash_mismatch"] not in ("warn", "fail"):
        raise ConfigError(f"on_hash_mismatch: must be 'warn' or 'fail' (got {raw['on_hash_mismatch']!r})")
    out_dir = Path(raw["output_dir"])
    out_dir = out_dir if out_dir.is_absolute() else base_dir / out_dir

    criteria = []
    if not isinstance(raw["criteria"], list):
        raise ConfigError("criteria: must be a list of {kind, p, s}")
    for i, c in enumerate(raw["criteria"]):
        try:
            criteria.append(parse_criterion(c))
        except (InvalidCriterion, ConfigError, TypeError, ValueError) as exc:
            raise ConfigError(f"criteria[{i}]: {exc}") from None

    mn = raw["minimize"]
    minimize = {"tol": _number(mn["tol"], "minimize.tol", positive=True),
                "max_steps": _number(mn["max_steps"], "minimize.max_steps", int, positive=True)}
    sb = raw["stability"]
    sigmas = sb["sigmas"]
    if not isinstance(sigmas, list) or not sigmas:
        raise ConfigError("stability.sigmas: must be a non-empty list")
    stability = {"sigmas": [_number(s, "stability.sigmas", nonneg=True) for s in sigmas],
                 "t_end": _number(sb["t_end"], "stability.t_end", positive=True),
                 "dt": _number(sb["dt"], "stability.dt", positive=True),
                 "seed": _number(sb["seed"] if seed is None else seed, "stability.seed", int, nonneg=True)}

    auto = tuple(k for k in ("alpha", "beta") if m[k] is None)
    params = ModelParams(**{k: v for k, v in m.items() if v is not None})
    if auto:
        try:
            phi0 = build_initial_phi(grid, params.epsilon, icond)
        except ValueError as exc:
            raise ConfigError(f"initial_condition: {exc}") from None
        filled = {"alpha": a_functional(grid, phi0), "beta": b_functional(grid, phi0, params)}
        params = params.replace(**{k: filled[k] for k in auto})
        for k in auto:
            logger.info("%s = %.17g computed from the initial phase field", k, getattr(params, k))

    return RunConfig(params, grid, step, icond, ivel, t_end, record_every, out_dir, checkpoint_every,
                     raw["on_hash_mismatch"], criteria, minimize, stability, auto)


def parse_criterion(c) -> CriterionSpec:
    """``{kind, p, s}`` mapping or ``"kind:p:s"`` string to a :class:`CriterionSpec`."""
    if isinstance(c, str):
        parts = c.split(":")
        if len(parts) != 3:
            raise ConfigError(f"criterion {c!r}: expected kind:p:s")
        c = {"kind": parts[0], "p": yaml.safe_load(parts[1]), "s": yaml.safe_load(parts[2])}
    if not isinstance(c, Mapping) or set(c) != {"kind", "p", "s"}:
        raise ConfigError(f"criterion {c!r}: needs exactly the keys kind, p, s")
    p = float("inf") if str(c["p"]).lower() in ("inf", ".inf") else float(c["p"])
    return CriterionSpec(c["kind"], p, float(c["s"]))


def load_config(path, environ=None, overrides=None, seed=None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config: file not found: {path}")
    return parse_config(path.read_text(), base_dir=path.parent, environ=environ, overrides=overrides, seed=seed)
