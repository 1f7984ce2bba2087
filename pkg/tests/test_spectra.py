import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gllab import scenarios, spectra


def _op(sc):
    return spectra.assemble(sc.gauge, sc.domain)


def test_unit_square_neumann_eigenvalues():
    sc = scenarios.unit_square(16)
    sp_ = spectra.ground_state(_op(sc), k=4)
    h = sc.domain.h
    mu = 4 * math.sin(math.pi * h / 2) ** 2 / h**2
    # closed-form spectrum of the cell-centred Neumann Laplacian: 0, mu, mu, 2 mu
    assert sp_.eigenvalues == pytest.approx([0.0, mu, mu, 2 * mu], abs=1e-9)
    assert sp_.simple


@pytest.mark.parametrize("make", [lambda: scenarios.unit_square(12),
                                  lambda: scenarios.half_flux_annulus(24),
                                  lambda: scenarios.field_disk(24)])
def test_iterative_matches_dense(make):
    op = _op(make())
    it = spectra.ground_state(op, k=3)
    de = spectra.dense_spectrum(op, k=3)
    assert np.allclose(it.eigenvalues, de.eigenvalues, rtol=1e-9, atol=1e-12)
    assert np.abs(it.u1 - de.u1).max() < 1e-7 * np.abs(de.u1).max()
    assert it.residuals.max() < 1e-9 * max(1.0, it.lambda2)


def test_u1_normalised(annulus_spectrum, annulus):
    d = annulus.domain
    assert np.vdot(annulus_spectrum.u1, annulus_spectrum.u1).real * d.cell_area == pytest.approx(1.0)


def test_dense_refuses_large():
    op = _op(scenarios.half_flux_annulus(96))
    with pytest.raises(ValueError, match="refused"):
        spectra.dense_spectrum(op)


def test_k_must_be_two():
    with pytest.raises(ValueError):
        spectra.ground_state(_op(scenarios.unit_square(8)), k=1)


def test_near_degenerate_flag():
    sp_ = spectra.ground_state(_op(scenarios.unit_square(8)), k=3)
    deg = spectra.Spectrum(sp_.eigenvalues[1:], sp_.vectors[:, 1:], sp_.residuals[1:], 1,
                           "test", sp_.domain)
    assert not deg.simple
    assert deg.flag == "near-degenerate"


def test_quadratic_form_matches_rayleigh(disk, disk_spectrum):
    op = _op(disk)
    assert op.quadratic_form(disk_spectrum.u1) == pytest.approx(disk_spectrum.lambda1, rel=1e-10)


@given(st.floats(-1.5, 1.5))
def test_flux_criterion_predicts_sign(flux):
    sc = scenarios.half_flux_annulus(16, flux=flux)
    lam1 = spectra.ground_state(_op(sc)).lambda1
    verdict = spectra.flux_criterion(sc.gauge, sc.field, sc.domain)
    if abs(flux - round(flux)) < 1e-6:
        assert not verdict
        assert abs(lam1) < 1e-9
    elif abs(flux - round(flux)) > 1e-2:
        assert verdict
        assert lam1 > 1e-6


def test_flux_criterion_reasons(square, disk, annulus):
    v = spectra.flux_criterion(square.gauge, square.field, square.domain)
    assert not v and "integer" in v.reason
    assert spectra.flux_criterion(disk.gauge, disk.field, disk.domain).reason == "field in Omega"
    assert "hole_0" in spectra.flux_criterion(annulus.gauge, annulus.field, annulus.domain).reason
