"""Run configuration: TOML or JSON files validated against a JSON schema.

Layout (TOML)::

    seed = 7
    method = "pds"              # pds | pds-effective | mc | all
    quantities = ["x", "xdot", "xddot"]
    frames = ["relative", "absolute"]

    [system]
    topology = "seat2dof"       # or "deckseat3dof" (adds m_h, lambda_h, k_h)
    m_s = 1.0
    lambda_s = 0.01
    k_s = 1.0

    [system.attachment]
    m_a = 0.05
    lambda_a = 0.021
    spring = { kind = "cubic", c = 3.461 }

    [forcing]
    q = 1.582e-4
    shift = 1.0
    T_alpha = 5000.0
    mu_alpha = 0.1              # or beta = 7.0
    sigma_alpha = 0.0141
    pattern = "primary_only"

Optional sections ``[rare]``, ``[montecarlo]``, ``[frequency]`` and
``[optimize]`` override numerical defaults.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .errors import ConfigError
from .montecarlo import ForcingModel, MCOptions
from .optimize import Axis, DesignGrid, FAMILY_AXES
from .rare import RareOptions
from .spectra import BackgroundSpectrum, FrequencyGrid
from .systems import Attachment, ImpulsePattern, Quantity, SpringLaw, SystemModel

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["SCHEMA", "RunConfig", "load_config", "parse_config"]

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_POSINT = {"type": "integer", "minimum": 1}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_SPRING = _obj({
    "kind": {"enum": ["linear", "cubic", "piecewise"]},
    "k": _NONNEG, "c": _NONNEG, "k_o": _NONNEG,
    "alpha_pos": _NONNEG, "alpha_neg": _NONNEG, "delta": _POS,
}, ["kind"])

_AXIS = _obj({"name": {"type": "string"}, "lo": _NONNEG, "hi": _POS, "count": {
    "type": "integer", "minimum": 2}, "spacing": {"enum": ["log", "linear"]}},
    ["name", "lo", "hi", "count"])

SCHEMA = _obj({
    "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
    "method": {"enum": ["pds", "pds-effective", "mc", "all"]},
    "quantities": {"type": "array", "items": {"type": "string"}, "minItems": 1},
    "frames": {"type": "array", "items": {"enum": ["relative", "absolute"]}, "minItems": 1},
    "output": {"type": "string"},
    "system": _obj({
        "topology": {"enum": ["seat2dof", "deckseat3dof"]},
        "m_s": _POS, "lambda_s": _NONNEG, "k_s": _POS,
        "m_h": _POS, "lambda_h": _NONNEG, "k_h": _POS,
        "attachment": _obj({"m_a": _POS, "lambda_a": _NONNEG, "spring": _SPRING},
                           ["m_a", "lambda_a", "spring"]),
    }, ["topology"]),
    "forcing": _obj({
        "q": _POS, "shift": _NONNEG, "T_alpha": _POS, "mu_alpha": _NUM, "beta": _POS,
        "sigma_alpha": _NONNEG, "pattern": {"enum": [p.value for p in ImpulsePattern]},
    }, ["q", "T_alpha"]),
    "frequency": _obj({"width": _POS, "lower_gap": _POS, "rtol": _POS}),
    "rare": _obj({
        "n_eta": {"type": "integer", "minimum": 3}, "eta_width": _POS, "rho_c": _POS,
        "dt_out": _POS, "rtol": _POS, "atol": _POS, "cap": _POS, "check_every": _POS,
        "local_bins": _POSINT, "bins": _POSINT, "n_effective": {"type": "integer",
                                                                  "minimum": 2},
    }),
    "montecarlo": _obj({
        "n_realizations": _POSINT, "n_impulses": {"type": "integer", "minimum": 0},
        "n_bins_freq": _POSINT, "dt_out": _POS, "rtol": _POS, "atol": _POS, "trim": _NONNEG,
        "duration": _POS, "hist_bins": _POSINT, "min_count": _POSINT,
    }),
    "optimize": _obj({
        "family": {"enum": list(FAMILY_AXES)},
        "m_a": _POS, "quantities": {"type": "array", "items": {"type": "string"},
                                    "minItems": 1},
        "order": _POSINT, "axes": {"type": "array", "items": _AXIS, "minItems": 2,
                                   "maxItems": 2},
        "refine": {"type": "boolean"},
        "k_o": _NONNEG, "lambda_a": _NONNEG, "n_sigma": _POS, "sigma_zeta": _POS,
    }, ["family"]),
}, ["system", "forcing"])


@dataclass
class RunConfig:
    """Validated configuration plus the objects built from it."""

    raw: dict
    seed: int
    method: str
    model: SystemModel
    forcing: ForcingModel
    quantities: list
    frames: tuple
    rare: RareOptions
    montecarlo: MCOptions
    frequency: FrequencyGrid
    n_effective: int = 21
    min_count: int = 50
    optimize: dict = field(default_factory=dict)

    def design_grid(self) -> DesignGrid:
        """Design grid of the ``[optimize]`` section (family defaults if no axes given)."""
        from .optimize import default_grid, piecewise_grid

        opt = self.optimize
        if not opt:
            raise ConfigError("configuration has no [optimize] section")
        family = opt["family"]
        quantities = tuple(opt.get("quantities", ("x",) if family == "piecewise"
                                   else ("x", "xdot")))
        order = opt.get("order", 4)
        if "axes" in opt:
            axes = tuple(Axis(a["name"], a["lo"], a["hi"], a["count"],
                              a.get("spacing", "log")) for a in opt["axes"])
        else:
            axes = (piecewise_grid() if family == "piecewise" else default_grid(family)).axes
        if tuple(a.name for a in axes) != FAMILY_AXES[family]:
            raise ConfigError(f"{family} axes must be named {FAMILY_AXES[family]}")
        for q in quantities:
            _quantity(q, self.model)
        return DesignGrid(axes, quantities, order)


def _spring(d: dict) -> SpringLaw:
    kind = d["kind"]
    allowed = {"linear": {"k"}, "cubic": {"k", "c"},
               "piecewise": {"k_o", "alpha_pos", "alpha_neg", "delta"}}[kind]
    extra = set(d) - allowed - {"kind"}
    if extra:
        raise ConfigError(f"{kind} spring does not take {sorted(extra)}")
    if kind == "linear":
        return SpringLaw.linear(d.get("k", 0.0))
    if kind == "cubic":
        return SpringLaw.cubic(d.get("c", 0.0), d.get("k", 0.0))
    missing = allowed - set(d)
    if missing:
        raise ConfigError(f"piecewise spring needs {sorted(missing)}")
    return SpringLaw.piecewise(d["k_o"], d["alpha_pos"], d["alpha_neg"], d["delta"])


def _system(d: dict) -> SystemModel:
    topo = d["topology"]
    host_keys = {"m_h", "lambda_h", "k_h"}
    if topo == "seat2dof" and host_keys & set(d):
        raise ConfigError("seat2dof takes no host-deck parameters")
    att = None
    if "attachment" in d:
        a = d["attachment"]
        att = Attachment(a["m_a"], a["lambda_a"], _spring(a["spring"]))
    if topo == "seat2dof":
        return SystemModel(topo, d.get("m_s", 1.0), d.get("lambda_s", 0.01), d.get("k_s", 1.0),
                           attachment=att)
    return SystemModel(topo, d.get("m_s", 0.05), d.get("lambda_s", 0.1), d.get("k_s", 1.0),
                       m_h=d.get("m_h", 1.0), lambda_h=d.get("lambda_h", 0.01),
                       k_h=d.get("k_h", 1.0), attachment=att)


def _forcing(d: dict, grid: FrequencyGrid) -> ForcingModel:
    spec = BackgroundSpectrum(d["q"], d.get("shift", 1.0))
    pattern = d.get("pattern", ImpulsePattern.PRIMARY_ONLY.value)
    if ("mu_alpha" in d) == ("beta" in d):
        raise ConfigError("forcing needs exactly one of mu_alpha or beta")
    if "beta" in d:
        return ForcingModel.from_beta(spec, d["T_alpha"], d["beta"], d.get("sigma_alpha"),
                                      pattern, grid)
    if "sigma_alpha" not in d:
        raise ConfigError("forcing with mu_alpha also needs sigma_alpha")
    return ForcingModel(spec, d["T_alpha"], d["mu_alpha"], d["sigma_alpha"], pattern)


def _quantity(tag: str, model: SystemModel) -> Quantity:
    try:
        q = Quantity.parse(tag)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"unknown quantity {tag!r}") from exc
    if q.dof not in model.dofs:
        raise ConfigError(f"quantity {tag!r} does not belong to {model.topology}")
    return q


def parse_config(raw: dict) -> RunConfig:
    """Validate ``raw`` against :data:`SCHEMA` and build the run objects."""
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid configuration at {where}: {exc.message}") from None
    model = _system(raw["system"])
    fq = raw.get("frequency", {})
    spec = BackgroundSpectrum(raw["forcing"]["q"], raw["forcing"].get("shift", 1.0))
    grid = FrequencyGrid.for_spectrum(spec, **{k: fq[k] for k in ("width", "lower_gap")
                                               if k in fq},
                                      **({"rtol": fq["rtol"]} if "rtol" in fq else {}))
    forcing = _forcing(raw["forcing"], grid)
    if not math.isfinite(forcing.mu_alpha):
        raise ConfigError("impulse mean is not finite")
    rare_d = dict(raw.get("rare", {}))
    n_eff = rare_d.pop("n_effective", 21)
    mc_d = dict(raw.get("montecarlo", {}))
    min_count = mc_d.pop("min_count", 50)
    qs = [_quantity(t, model) for t in raw.get("quantities", [q.tag for q in
                                                               model.quantities()])]
    return RunConfig(raw=raw, seed=int(raw.get("seed", 0)), method=raw.get("method", "pds"),
                     model=model, forcing=forcing, quantities=qs,
                     frames=tuple(raw.get("frames", ("relative", "absolute"))),
                     rare=RareOptions(**rare_d), montecarlo=MCOptions(**mc_d),
                     frequency=grid, n_effective=n_eff, min_count=min_count,
                     optimize=dict(raw.get("optimize", {})))


def load_config(path) -> RunConfig:
    """Read a ``.toml`` or ``.json`` file and validate it."""
    p = Path(path)
    try:
        text = p.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {p}: {exc}") from None
    try:
        if p.suffix.lower() == ".json":
            raw = json.loads(text)
        else:
            raw = tomllib.loads(text.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a table")
    return parse_config(raw)
