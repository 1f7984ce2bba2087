"""Normal/superconducting threshold ``lambda_opt(kappa)`` and unit conversion.

``lambda_opt(kappa)`` is the largest ``lambda`` for which the normal state
``(0, A_e)`` is a global minimiser.  Global minimality is judged by the
fixed multi-start portfolio of :func:`gllab.functional.multi_start`; this is
an approximation and every report says so.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .domain import Domain, area
from .functional import GLParameters, GLState, MinimizeOptions, energy, multi_start
from .gauge import GaugeData
from .spectra import Spectrum

logger = logging.getLogger(__name__)

MAX_PROBES = 20
OPTIMALITY_NOTE = "global minimality approximated by a fixed multi-start portfolio"


def energy_tol(lam: float, domain: Domain) -> float:
    return 1e-9 * lam * area(domain, "omega")


@dataclass
class ProbeResult:
    lam: float
    best_energy: float
    best_start: str
    condensed: bool
    energies: dict[str, float] = field(default_factory=dict)


@dataclass
class PhasePoint:
    kappa: float
    lambda_opt: float
    bracket: tuple[float, float]
    verdicts: list[ProbeResult]
    lambda1: float
    flagged: bool = False
    note: str = OPTIMALITY_NOTE

    @property
    def saturated(self) -> bool:
        return self.bracket[1] >= self.lambda1

    def to_dict(self) -> dict:
        return {"kappa": self.kappa, "lambda_opt": self.lambda_opt,
                "lambda_lo": self.bracket[0], "lambda_hi": self.bracket[1],
                "lambda1": self.lambda1, "flagged": self.flagged, "note": self.note,
                "probes": [{"lambda": v.lam, "best_energy": v.best_energy,
                            "best_start": v.best_start, "condensed": v.condensed,
                            "energies": v.energies} for v in self.verdicts]}


def probe(lam: float, kappa: float, domain: Domain, gauge: GaugeData,
          u1: np.ndarray | None = None, opts: MinimizeOptions | None = None,
          seed: int = 0) -> ProbeResult:
    """Multi-start minimisation at one ``(lam, kappa)``; condensed when the
    best energy is below ``-energy_tol``.  Starts stop early once they cross
    that level, since the verdict is then settled."""
    etol = energy_tol(lam, domain)
    base = opts or MinimizeOptions()
    o = MinimizeOptions(tol=base.tol, maxiter=base.maxiter, energy_floor=-etol,
                        project_every=base.project_every, armijo=base.armijo)
    results = multi_start(GLParameters(lam, kappa), gauge, domain, u1, o, seed=seed)
    st, rep = results[0]
    energies = {r.start: r.energy for _, r in results}
    return ProbeResult(lam, rep.energy, rep.start, rep.energy < -etol, energies)


def lambda_opt(kappa: float, domain: Domain, gauge: GaugeData, spectrum: Spectrum,
               tol: float | None = None, opts: MinimizeOptions | None = None,
               seed: int = 0, max_probes: int = MAX_PROBES) -> PhasePoint:
    """Bisection for ``lambda_opt`` on ``(0, lambda1]``.

    The first probe sits at ``lambda1 - tol/2``: if the normal state wins
    there the point is saturated.  ``tol`` defaults to ``1e-3 lambda1``.
    """
    l1 = spectrum.lambda1
    if l1 <= 1e-10 * max(1.0, spectrum.lambda2):
        raise ValueError(f"lambda_opt needs a positive lowest eigenvalue, got {l1:.3e}")
    tol = tol if tol is not None else 1e-3 * l1
    verdicts = []

    def run(lam):
        v = probe(lam, kappa, domain, gauge, spectrum.u1, opts, seed)
        verdicts.append(v)
        logger.debug("kappa=%g lambda=%g condensed=%s E=%.3e", kappa, lam, v.condensed, v.best_energy)
        return v.condensed

    top = max(l1 - 0.5 * tol, 0.5 * l1)
    if not run(top):
        lo, hi = top, l1
    else:
        lo, hi = 0.0, top
        while hi - lo > tol and len(verdicts) < max_probes:
            mid = 0.5 * (lo + hi)
            if run(mid):
                hi = mid
            else:
                lo = mid
    normal = [v.lam for v in verdicts if not v.condensed]
    cond = [v.lam for v in verdicts if v.condensed]
    flagged = bool(normal and cond and max(normal) > min(cond)) or (hi - lo > tol)
    return PhasePoint(kappa, 0.5 * (lo + hi), (lo, hi), verdicts, l1, flagged)


@dataclass
class Sweep:
    points: list[PhasePoint]
    lambda1: float
    kappa_c: float
    tol: float

    def monotone(self) -> bool:
        lo = [p.bracket[0] for p in self.points]
        hi = [p.bracket[1] for p in self.points]
        return all(hi[i + 1] >= lo[i] - self.tol for i in range(len(lo) - 1))

    def bounded(self) -> bool:
        return all(0 < p.lambda_opt <= self.lambda1 + self.tol for p in self.points)

    def saturation_kappa(self) -> float:
        """Smallest swept kappa from which every point is saturated (nan if none)."""
        sat = [p.saturated for p in self.points]
        for i in range(len(sat)):
            if all(sat[i:]):
                return self.points[i].kappa
        return float("nan")

    def rows(self) -> list[dict]:
        return [{"kappa": p.kappa, "lambda_lo": p.bracket[0], "lambda_hi": p.bracket[1],
                 "lambda_opt": p.lambda_opt, "lambda1": self.lambda1, "kappa_c": self.kappa_c}
                for p in self.points]


def sweep(kappas, domain: Domain, gauge: GaugeData, spectrum: Spectrum, kappa_c: float,
          tol: float | None = None, opts: MinimizeOptions | None = None, seed: int = 0) -> Sweep:
    tol = tol if tol is not None else 1e-3 * spectrum.lambda1
    pts = [lambda_opt(k, domain, gauge, spectrum, tol, opts, seed) for k in sorted(kappas)]
    return Sweep(pts, spectrum.lambda1, kappa_c, tol)


def field_ratio(domain: Domain, gauge: GaugeData) -> float:
    """``(|Omega| / (2 int_{filled} H_e^2))^(1/2)``."""
    h2 = float(np.sum(gauge.H**2) * domain.cell_area)
    return math.sqrt(area(domain, "omega") / (2.0 * h2)) if h2 > 0 else math.inf


@dataclass
class ProbeVerdict:
    winner: str
    competitor_energy: float
    best_energy: float
    best_start: str
    witness: GLState

    def to_dict(self) -> dict:
        return {"winner": self.winner, "competitor_energy": self.competitor_energy,
                "best_energy": self.best_energy, "best_start": self.best_start,
                "note": OPTIMALITY_NOTE}


def normal_vs_condensed_probe(p: GLParameters, domain: Domain, gauge: GaugeData,
                              u1: np.ndarray | None = None,
                              opts: MinimizeOptions | None = None, seed: int = 0) -> ProbeVerdict:
    """Compare the normal state with the screening competitor and the
    multi-start minimiser.

    The competitor is ``u = 1`` with total potential zero (``a = -A_e``):
    no kinetic energy, the whole applied field paid as field energy, so
    ``G = -(lam/2)|Omega| + (kappa^2/lam) int H_e^2``.
    """
    comp = GLState(np.ones(domain.n_omega, complex), -gauge.A_e.copy(), gauge, domain)
    e_comp = energy(comp, p)
    results = multi_start(p, gauge, domain, u1, opts, seed=seed)
    st, rep = results[0]
    etol = energy_tol(p.lam, domain)
    best_e, best_s, witness = rep.energy, rep.start, st
    if e_comp < best_e:
        best_e, best_s, witness = e_comp, "competitor", comp
    winner = "condensed" if best_e < -etol else "normal"
    if winner == "normal":
        witness = GLState.normal(gauge, domain)
    return ProbeVerdict(winner, e_comp, best_e, best_s, witness)


# ----------------------------------------------------------------- scaling
@dataclass(frozen=True)
class PhysicalParameters:
    """Physical GL coefficients in any consistent unit system; ``a < 0``
    below the critical temperature."""

    a: float
    b: float
    m: float
    e: float
    c_light: float
    hbar: float
    H_tilde: float = 1.0

    def __post_init__(self):
        if not self.a < 0:
            raise ValueError("a must be negative")
        for name in ("b", "m", "e", "c_light", "hbar"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class Conversion:
    params: GLParameters
    field_scale: float
    energy_scale: float
    H_e: float

    def to_dict(self) -> dict:
        return {"lambda": self.params.lam, "kappa": self.params.kappa,
                "field_scale": self.field_scale, "energy_scale": self.energy_scale,
                "H_e": self.H_e}


def scaling_convert(phys: PhysicalParameters) -> Conversion:
    """``lambda = 4 m |a| / hbar^2``, ``kappa = (m c / (e hbar)) (b / 8 pi)^(1/2)``,
    ``H_e = (2 e / (hbar c)) H_tilde``; physical energy = ``energy_scale * G``."""
    lam = 4.0 * phys.m * abs(phys.a) / phys.hbar**2
    kappa = phys.m * phys.c_light / (phys.e * phys.hbar) * math.sqrt(phys.b / (8.0 * math.pi))
    fs = 2.0 * phys.e / (phys.hbar * phys.c_light)
    es = abs(phys.a) * phys.hbar**2 / (4.0 * phys.m * phys.b)
    return Conversion(GLParameters(lam, kappa), fs, es, fs * phys.H_tilde)


def physical_energy(conv: Conversion, G: float) -> float:
    return conv.energy_scale * G


def dimensionless_energy(conv: Conversion, F: float) -> float:
    return F / conv.energy_scale


def hat_rescale(p: GLParameters, domain: Domain, field_amplitude: float | None = None) -> dict:
    """Bookkeeping for ``x = (kappa / sqrt(lam)) x_hat``: rescaled area,
    diameter and field amplitude (``H_hat = (kappa^2 / lam) H``)."""
    s = math.sqrt(p.lam) / p.kappa
    xmin, ymin, xmax, ymax = domain.spec.box
    if domain.spec.shape in ("disk", "annulus"):
        diam = 2.0 * domain.spec.radius
    else:
        diam = math.hypot(xmax - xmin, ymax - ymin)
    out = {"length_factor": s, "area": s * s * area(domain, "omega"),
           "diameter": s * diam, "field_factor": p.kappa**2 / p.lam}
    if field_amplitude is not None:
        out["field_amplitude"] = field_amplitude * p.kappa**2 / p.lam
    return out
