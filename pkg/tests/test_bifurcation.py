import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gllab import bifurcation as B
from gllab import calculus, scenarios, spectra
from gllab.functional import GLParameters, GLState


@pytest.fixture(scope="module")
def disk_coeffs(disk, disk_spectrum):
    return B.coefficients(disk_spectrum, disk.gauge, GLParameters(disk_spectrum.lambda1, 1.0))


def test_reduced_resolvent(disk, disk_spectrum):
    d = disk.domain
    op = spectra.assemble(disk.gauge, d).matrix
    u1, l1 = disk_spectrum.u1, disk_spectrum.lambda1
    f = np.random.default_rng(0).standard_normal(d.n_omega) + 0j
    w = B.reduced_resolvent(op, l1, u1, d, f)
    Pf = f - u1 * calculus.inner(d, u1, f)
    assert abs(calculus.inner(d, u1, w)) < 1e-12
    assert np.abs(op @ w - l1 * w - Pf).max() < 1e-9 * np.abs(Pf).max()


def test_coefficient_identities(disk_coeffs):
    c = disk_coeffs
    assert c.I0 > 0
    assert c.K0 > 0
    assert c.K0_pairing == pytest.approx(c.K0, rel=1e-8)
    assert abs(c.K0_pairing_imag) < 1e-12
    assert c.c(c.kappa) == pytest.approx(c.c_kappa)
    assert c.c(c.kappa_c) == pytest.approx(0.0, abs=1e-14)
    assert c.kappa_c == pytest.approx(math.sqrt(2 * c.K0 / c.I0))


def test_I0_lower_bound(disk, disk_coeffs):
    # Cauchy-Schwarz: 1 = (int |u1|^2)^2 <= |Omega| int |u1|^4
    assert disk_coeffs.I0 * disk.domain.n_omega * disk.domain.cell_area >= 1.0


def test_zero_field_current_vanishes():
    sc = scenarios.unit_square(12)
    sp_ = spectra.ground_state(spectra.assemble(sc.gauge, sc.domain), 3)
    J = B.supercurrent(sp_.u1, sc.gauge, sc.domain)
    assert np.abs(J).max() < 1e-12


def test_degenerate_spectrum_refused(disk, disk_spectrum):
    deg = spectra.Spectrum(np.array([1.0, 1.0]), disk_spectrum.vectors[:, :2],
                           np.zeros(2), 1, "test", disk.domain)
    with pytest.raises(B.DegenerateSpectrumError):
        B.coefficients(deg, disk.gauge, GLParameters(1.0, 1.0))


@given(st.floats(-2, 2), st.floats(-5, 5))
def test_fit_branch_recovers_polynomial(c, dd):
    alphas = [0.0, 0.05, 0.1, 0.2]
    lams = [0.3 + c * a**2 + dd * a**4 for a in alphas]
    fc, fd = B.fit_branch(alphas, lams, 0.3)
    assert fc == pytest.approx(c, abs=1e-9)
    assert fd == pytest.approx(dd, abs=1e-6)


def test_branch_energy_sign(disk_coeffs):
    p_lo = GLParameters(1.0, 0.5 * disk_coeffs.kappa_c)
    p_hi = GLParameters(1.0, 2.0 * disk_coeffs.kappa_c)
    assert B.branch_energy(disk_coeffs, 0.1, p_lo) > 0
    assert B.branch_energy(disk_coeffs, 0.1, p_hi) < 0


def test_predictor_kappa_mismatch(disk, disk_coeffs):
    with pytest.raises(ValueError):
        B.predictor(disk_coeffs, disk.gauge, disk.domain, 0.1, kappa=3.0)


def test_trace_branch_small(disk, disk_spectrum):
    p = GLParameters(disk_spectrum.lambda1, 1.0)
    br = B.trace_branch(disk_spectrum, disk.gauge, p, [0.0, 0.05, 0.1])
    assert not br.truncated
    assert br.samples[0].lam == disk_spectrum.lambda1
    for s in br.samples[1:]:
        assert s.converged
        assert s.el_residual < 1e-8
        assert calculus.inner(disk.domain, disk_spectrum.u1, s.state.u).real == pytest.approx(s.alpha)
    assert br.fit_c == pytest.approx(br.meta["c_kappa"], rel=0.05)


def test_stability_requires_critical_point(disk):
    st_ = GLState(np.full(disk.domain.n_omega, 0.3 + 0j), np.zeros(disk.domain.n_edges),
                  disk.gauge, disk.domain)
    with pytest.raises(ValueError, match="critical"):
        B.strict_stability(st_, GLParameters(1.0, 1.0))


def test_normal_state_stability_verdicts(disk, disk_spectrum):
    l1 = disk_spectrum.lambda1
    normal = GLState.normal(disk.gauge, disk.domain)
    below = B.strict_stability(normal, GLParameters(0.8 * l1, 1.0), lambda1=l1)
    above = B.strict_stability(normal, GLParameters(1.2 * l1, 1.0), lambda1=l1)
    assert below.verdict == "strictly-stable"
    assert above.verdict == "unstable"
    # the lowest Hessian eigenvalue at the normal state is lambda1 - lambda
    assert above.eigenvalues[0] == pytest.approx(-0.2 * l1, rel=1e-8)
