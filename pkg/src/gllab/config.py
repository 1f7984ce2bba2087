"""Run configuration: a TOML file with one table per concern.

Example::

    pipeline = "eigen"
    seed = 0
    output = "half-flux"

    [domain]
    shape = "annulus"
    box = [-1.0, -1.0, 1.0, 1.0]
    resolution = 32
    radius = 1.0
    inner_radius = 0.3
    inner_center = [0.25, 0.0]

    [field]
    profile = "uniform-in-hole"
    fluxes = [0.5]

    [parameters]
    kappa = 1.0

Unknown keys anywhere are errors; validation collects every problem before
reporting.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from dataclasses import field as _field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

PIPELINES = ("eigen", "minimize", "branch", "reduced-branch", "nodal",
             "phase-diagram", "check", "convert")

TOP_KEYS = {"pipeline", "seed", "output", "domain", "field", "parameters", "solver", "physical"}
DOMAIN_KEYS = {"shape", "box", "resolution", "center", "radius", "inner_radius",
               "inner_center", "holes"}
HOLE_KEYS = {"kind", "center", "size"}
FIELD_KEYS = {"profile", "fluxes", "value", "r_in", "r_out", "center"}
PARAM_KEYS = {"lambda", "lambda_factor", "kappa", "kappa_factor", "kappas", "alphas",
              "epsilons", "lambdas"}
SOLVER_KEYS = {"tol", "maxiter", "eigen_k", "eigen_tol", "lambda_tol", "newton_tol"}
PHYS_KEYS = {"a", "b", "m", "e", "c_light", "hbar", "H_tilde"}
PROFILES = {"uniform-in-hole", "uniform-everywhere", "annular-ring", "zero"}

NEEDS_DOMAIN = set(PIPELINES) - {"convert"}


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass
class RunConfig:
    pipeline: str
    seed: int = 0
    output: str | None = None
    domain: dict = _field(default_factory=dict)
    field: dict = _field(default_factory=dict)
    parameters: dict = _field(default_factory=dict)
    solver: dict = _field(default_factory=dict)
    physical: dict = _field(default_factory=dict)
    source: str | None = None

    def to_dict(self) -> dict:
        return {"pipeline": self.pipeline, "seed": self.seed, "output": self.output,
                "domain": self.domain, "field": self.field, "parameters": self.parameters,
                "solver": self.solver, "physical": self.physical}


def _unknown(where: str, got: dict, allowed: set, errors: list[str]):
    for k in sorted(set(got) - allowed):
        errors.append(f"{where}: unknown key {k!r}")


def _positive(where, d, key, errors, integer=False):
    if key in d:
        v = d[key]
        ok = isinstance(v, int) if integer else isinstance(v, (int, float))
        if not ok or isinstance(v, bool) or not (math.isfinite(v) and v > 0):
            errors.append(f"{where}.{key} must be a positive {'integer' if integer else 'number'}")


def validate(raw: dict) -> RunConfig:
    """Check a parsed configuration; raises :class:`ConfigError` listing
    every offending field."""
    errors: list[str] = []
    _unknown("config", raw, TOP_KEYS, errors)
    pipeline = raw.get("pipeline")
    if pipeline not in PIPELINES:
        errors.append(f"pipeline must be one of {', '.join(PIPELINES)}; got {pipeline!r}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        errors.append("seed must be a non-negative integer")
    sections = {}
    for name, keys in (("domain", DOMAIN_KEYS), ("field", FIELD_KEYS),
                       ("parameters", PARAM_KEYS), ("solver", SOLVER_KEYS),
                       ("physical", PHYS_KEYS)):
        sec = raw.get(name, {})
        if not isinstance(sec, dict):
            errors.append(f"[{name}] must be a table")
            sec = {}
        _unknown(f"[{name}]", sec, keys, errors)
        sections[name] = sec

    dom, fld, par, sol, phys = (sections[k] for k in ("domain", "field", "parameters",
                                                          "solver", "physical"))
    if pipeline in NEEDS_DOMAIN:
        for key in ("shape", "box", "resolution"):
            if key not in dom:
                errors.append(f"[domain].{key} is required for pipeline {pipeline}")
        if "box" in dom and (not isinstance(dom["box"], list) or len(dom["box"]) != 4):
            errors.append("[domain].box must be [xmin, ymin, xmax, ymax]")
        _positive("[domain]", dom, "resolution", errors, integer=True)
        for i, hole in enumerate(dom.get("holes", [])):
            _unknown(f"[domain].holes[{i}]", hole, HOLE_KEYS, errors)
        prof = fld.get("profile")
        if prof not in PROFILES:
            errors.append(f"[field].profile must be one of {sorted(PROFILES)}; got {prof!r}")
        if prof == "uniform-in-hole" and "fluxes" not in fld:
            errors.append("[field].fluxes is required for profile uniform-in-hole")
        if prof in ("uniform-everywhere", "annular-ring") and "value" not in fld:
            errors.append(f"[field].value is required for profile {prof}")
        if prof == "annular-ring" and not {"r_in", "r_out"} <= set(fld):
            errors.append("[field].r_in and r_out are required for profile annular-ring")
    if pipeline in ("reduced-branch", "nodal"):
        if fld.get("profile") not in ("uniform-in-hole", "zero"):
            errors.append(f"pipeline {pipeline} requires the half-flux hypotheses: "
                          "field must vanish on Omega (profile uniform-in-hole)")
        for k, phi in enumerate(fld.get("fluxes", [])):
            if abs((phi - 0.5) - round(phi - 0.5)) > 1e-6:
                errors.append(f"pipeline {pipeline} requires half-integer hole fluxes "
                              f"(half-flux precondition); hole_{k} has flux {phi}")
    if pipeline in ("minimize", "check"):
        if "lambda" not in par and "lambda_factor" not in par:
            errors.append(f"[parameters].lambda or lambda_factor is required for {pipeline}")
    if pipeline in ("minimize", "check", "branch", "reduced-branch", "nodal"):
        if "kappa" not in par and "kappa_factor" not in par:
            errors.append(f"[parameters].kappa is required for {pipeline}")
    if pipeline == "phase-diagram" and "kappas" not in par:
        errors.append("[parameters].kappas is required for phase-diagram")
    for key in ("lambda", "lambda_factor", "kappa", "kappa_factor"):
        _positive("[parameters]", par, key, errors)
    for key in ("tol", "eigen_tol", "lambda_tol", "newton_tol"):
        _positive("[solver]", sol, key, errors)
    _positive("[solver]", sol, "maxiter", errors, integer=True)
    if "eigen_k" in sol and (not isinstance(sol["eigen_k"], int) or sol["eigen_k"] < 2):
        errors.append("[solver].eigen_k must be an integer >= 2")
    if pipeline == "convert":
        for key in ("a", "b", "m", "e", "c_light", "hbar"):
            if key not in phys:
                errors.append(f"[physical].{key} is required for convert")
        if "a" in phys and not phys["a"] < 0:
            errors.append("[physical].a must be negative (below the critical temperature)")
        for key in ("b", "m", "e", "c_light", "hbar"):
            _positive("[physical]", phys, key, errors)
    for eps in par.get("epsilons", []):
        if not 0 < eps < 0.5:
            errors.append(f"[parameters].epsilons entries must lie in (0, 0.5); got {eps}")
    if errors:
        raise ConfigError(errors)
    return RunConfig(pipeline, seed, raw.get("output"), dict(dom), dict(fld), dict(par),
                     dict(sol), dict(phys))


def load(path: str | Path) -> RunConfig:
    path = Path(path)
    with path.open("rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError([f"{path}: {exc}"]) from exc
    cfg = validate(raw)
    cfg.source = str(path)
    return cfg
