"""Ready-made domains and fields used by the tests, the CLI and the examples.

* ``unit_square``: simply connected, no field (lowest eigenvalue 0)
* ``half_flux_annulus``: disk with one off-centre disk hole carrying flux
  1/2, field zero on Omega.  The hole is off-centre on purpose: a concentric
  annulus with half flux has a two-fold degenerate ground state (angular
  momenta 0 and 1 tie), which rules out the simple-eigenvalue analysis.
* ``field_disk``: simply connected disk in a uniform field
"""

from __future__ import annotations

from dataclasses import dataclass

from . import gauge as gauge_mod
from .domain import Domain, DomainSpec, build_domain


@dataclass
class Scenario:
    name: str
    domain: Domain
    field: gauge_mod.ExternalField
    gauge: gauge_mod.GaugeData


def _make(name, spec, profile, **params) -> Scenario:
    domain = build_domain(spec)
    f = gauge_mod.make_field(domain, profile, **params)
    return Scenario(name, domain, f, gauge_mod.external_potential(f, domain))


def unit_square(n: int = 16) -> Scenario:
    spec = DomainSpec(box=(0.0, 0.0, 1.0, 1.0), shape="rectangle", resolution=n)
    return _make("unit-square", spec, "zero")


def half_flux_annulus(n: int = 32, flux: float = 0.5, hole_center=(0.25, 0.0),
                      hole_radius: float = 0.3) -> Scenario:
    spec = DomainSpec(box=(-1.0, -1.0, 1.0, 1.0), shape="annulus", resolution=n,
                      radius=1.0, inner_radius=hole_radius, inner_center=tuple(hole_center))
    return _make("half-flux-annulus", spec, "uniform-in-hole", fluxes=[flux])


def field_disk(n: int = 32, H0: float = 1.0) -> Scenario:
    spec = DomainSpec(box=(-1.0, -1.0, 1.0, 1.0), shape="disk", resolution=n, radius=1.0)
    return _make("field-disk", spec, "uniform-everywhere", value=H0)


SCENARIOS = {
    "unit-square": unit_square,
    "half-flux-annulus": half_flux_annulus,
    "field-disk": field_disk,
}
