import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gllab import bifurcation as B
from gllab import phasediagram as P
from gllab.domain import area
from gllab.functional import GLParameters, GLState, energy

pos = st.floats(1e-3, 1e3)


@given(pos, pos, pos, pos, pos, pos, st.floats(-1e2, 1e2))
def test_scaling_roundtrip(a, b, m, e, c, hbar, G):
    conv = P.scaling_convert(P.PhysicalParameters(-a, b, m, e, c, hbar))
    assert conv.params.lam == 4 * m * a / hbar**2
    assert conv.params.kappa == m * c / (e * hbar) * math.sqrt(b / (8 * math.pi))
    F = P.physical_energy(conv, G)
    assert P.dimensionless_energy(conv, F) == pytest.approx(G, rel=1e-12, abs=1e-300)


def test_physical_parameters_validated():
    with pytest.raises(ValueError, match="a must be negative"):
        P.PhysicalParameters(1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError, match="b must be positive"):
        P.PhysicalParameters(-1.0, 0.0, 1.0, 1.0, 1.0, 1.0)


def test_hat_rescale(disk):
    p = GLParameters(4.0, 0.5)
    r = P.hat_rescale(p, disk.domain, field_amplitude=2.0)
    assert r["length_factor"] == pytest.approx(4.0)
    assert r["area"] == pytest.approx(16 * area(disk.domain))
    assert r["field_amplitude"] == pytest.approx(2.0 * 0.25 / 4.0)


def test_field_ratio(disk, annulus):
    # uniform unit field on a filled domain that coincides with Omega
    d = disk.domain
    expected = math.sqrt(area(d) / (2 * d.n_vertices * d.cell_area))
    assert P.field_ratio(d, disk.gauge) == pytest.approx(expected)
    assert P.field_ratio(annulus.domain, annulus.gauge) > 0


def test_competitor_energy_and_verdict(disk, disk_spectrum):
    d = disk.domain
    p = GLParameters(0.5 * disk_spectrum.lambda1, 0.01)
    v = P.normal_vs_condensed_probe(p, d, disk.gauge, disk_spectrum.u1)
    expected = -0.5 * p.lam * area(d) + p.field_weight * float(np.sum(disk.gauge.H**2)) * d.cell_area
    assert v.competitor_energy == pytest.approx(expected, rel=1e-10)
    assert v.winner == "condensed"
    assert energy(v.witness, p) < 0


def test_probe_normal_below_threshold(disk, disk_spectrum):
    v = P.normal_vs_condensed_probe(GLParameters(0.3 * disk_spectrum.lambda1, 1.0), disk.domain,
                                    disk.gauge, disk_spectrum.u1)
    assert v.winner == "normal"
    assert "multi-start" in v.to_dict()["note"]


def test_lambda_opt_saturates_near_kappa_c(disk, disk_spectrum):
    kc = B.coefficients(disk_spectrum, disk.gauge, GLParameters(disk_spectrum.lambda1, 1.0)).kappa_c
    sw = P.sweep([f * kc for f in (0.7, 0.85, 1.05, 1.15, 1.3)], disk.domain, disk.gauge,
                 disk_spectrum, kc)
    assert sw.monotone()
    assert sw.bounded()
    assert not any(p.flagged for p in sw.points)
    ks = sw.saturation_kappa()
    assert abs(ks - kc) <= 0.15 * kc
    assert not sw.points[0].saturated


def test_lambda_opt_bracket(disk, disk_spectrum):
    pt = P.lambda_opt(0.1, disk.domain, disk.gauge, disk_spectrum)
    lo, hi = pt.bracket
    assert hi - lo <= 1e-3 * disk_spectrum.lambda1
    assert lo < pt.lambda_opt < hi
    cond = [v.lam for v in pt.verdicts if v.condensed]
    normal = [v.lam for v in pt.verdicts if not v.condensed]
    assert max(normal) < min(cond)


def test_lambda_opt_rejects_nonpositive(square):
    from gllab import spectra
    sp_ = spectra.ground_state(spectra.assemble(square.gauge, square.domain))
    with pytest.raises(ValueError):
        P.lambda_opt(1.0, square.domain, square.gauge, sp_)
