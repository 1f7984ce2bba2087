"""Acceptance criteria; each test records one PASS/FAIL line (shown in the
terminal summary)."""

import math

import numpy as np
import pytest

from gllab import bifurcation as B
from gllab import calculus, scenarios, spectra
from gllab import functional as F
from gllab import phasediagram as P
from gllab import symmetry as S
from gllab.domain import area


def _spec(sc, k=4):
    return spectra.ground_state(spectra.assemble(sc.gauge, sc.domain), k)


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def test_01_zero_field_baseline(criterion):
    sc = scenarios.unit_square(16)
    sp_ = _spec(sc)
    u1 = sp_.u1
    spread = np.abs(u1 - u1.mean()).max()
    verdict = spectra.flux_criterion(sc.gauge, sc.field, sc.domain)
    criterion(1, abs(sp_.lambda1) <= 1e-10 and spread <= 1e-8 and not verdict,
              f"lambda1={sp_.lambda1:.2e}, u1 spread={spread:.2e}, flux_criterion={verdict.positive}")


def test_02_half_flux_positivity(criterion):
    lams = [_spec(scenarios.half_flux_annulus(n)).lambda1 for n in (32, 64, 128)]
    d1, d2 = abs(lams[1] - lams[0]), abs(lams[2] - lams[1])
    criterion(2, min(lams) > 0 and d2 <= 2 * d1,
              f"lambda1(n=32,64,128)={[round(x, 6) for x in lams]}, changes {d1:.2e} -> {d2:.2e}")


def test_03_eigensolver_oracle(criterion):
    worst = 0.0
    for make, n in [(scenarios.unit_square, 8), (scenarios.unit_square, 16),
                    (scenarios.unit_square, 24), (scenarios.half_flux_annulus, 16),
                    (scenarios.half_flux_annulus, 24), (scenarios.field_disk, 16),
                    (scenarios.field_disk, 24)]:
        sc = make(n)
        op = spectra.assemble(sc.gauge, sc.domain)
        it = spectra.ground_state(op, k=4)
        de = spectra.dense_spectrum(op, k=4)
        scale = max(1.0, de.eigenvalues.max())
        worst = max(worst, np.abs(it.eigenvalues - de.eigenvalues).max() / scale)
        if it.simple:
            worst = max(worst, np.abs(it.u1 - de.u1).max() / np.abs(de.u1).max())
    criterion(3, worst <= 1e-9, f"max relative deviation from dense = {worst:.2e}")


def test_04_gauge_invariance(criterion):
    worst = 0.0
    for sc in (scenarios.field_disk(24), scenarios.half_flux_annulus(24)):
        d = sc.domain
        rng = np.random.default_rng(42)
        theta = rng.uniform(-10, 10, d.n_tilde)
        g2 = sc.gauge.gauge_transform(d, theta)
        phase = np.exp(1j * theta[d.omega_in_tilde])
        p = F.GLParameters(1.7, 0.9)
        u = rng.standard_normal(d.n_omega) + 1j * rng.standard_normal(d.n_omega)
        a = rng.standard_normal(d.n_edges)
        e1 = F.energy(F.GLState(u, a, sc.gauge, d), p)
        e2 = F.energy(F.GLState(u * phase, a, g2, d), p)
        s1 = spectra.ground_state(spectra.assemble(sc.gauge, d), 4)
        s2 = spectra.ground_state(spectra.assemble(g2, d), 4)
        c1 = B.coefficients(s1, sc.gauge, p)
        c2 = B.coefficients(s2, g2, p)
        devs = [_rel(e1, e2), np.abs(s1.eigenvalues - s2.eigenvalues).max() / s1.eigenvalues.max(),
                _rel(c1.I0, c2.I0), _rel(c1.c_kappa, c2.c_kappa)]
        # K0 vanishes on the half-flux annulus; compare it against its natural scale I0
        devs.append(abs(c1.K0 - c2.K0) / max(c1.K0, c2.K0, 1e-12 * c1.I0))
        worst = max(worst, max(devs))
    criterion(4, worst <= 1e-10, f"max relative change (E, spectrum, I0, c, K0) = {worst:.2e}")


def test_05_gradient_fidelity(criterion):
    sc = scenarios.field_disk(24)
    d = sc.domain
    rng = np.random.default_rng(5)
    st_ = F.GLState(0.7 * (rng.standard_normal(d.n_omega) + 1j * rng.standard_normal(d.n_omega)),
                    0.3 * rng.standard_normal(d.n_edges), sc.gauge, d)
    p = F.GLParameters(1.3, 0.8)
    gu, ga = F.gradient(st_, p)
    worst = 0.0
    t = 1e-5
    for _ in range(20):
        du = rng.standard_normal(d.n_omega) + 1j * rng.standard_normal(d.n_omega)
        da = rng.standard_normal(d.n_edges)
        fd = (F.energy(st_.copy(u=st_.u + t * du, a=st_.a + t * da), p)
              - F.energy(st_.copy(u=st_.u - t * du, a=st_.a - t * da), p)) / (2 * t)
        an = calculus.inner(d, gu, du).real + d.cell_area * float(ga @ da)
        worst = max(worst, _rel(fd, an))
    criterion(5, worst < 1e-6, f"max relative error over 20 directions = {worst:.2e}")


def test_06_maximum_principle(criterion):
    sc = scenarios.field_disk(24)
    l1 = _spec(sc).lambda1
    sp_ = _spec(sc)
    worst, count = 0.0, 0
    for lf in (1.5, 5.0, 20.0):
        for kappa in (0.3, 1.0, 3.0):
            for st_, rep in F.multi_start(F.GLParameters(lf * l1, kappa), sc.gauge, sc.domain, sp_.u1):
                if rep.converged:
                    count += 1
                    worst = max(worst, rep.max_modulus)
    criterion(6, count > 0 and worst <= 1 + 1e-6,
              f"max |u| over {count} converged minimisers = {worst:.8f}")


def test_07_normal_state_energy_identities(criterion):
    ok, details = True, []
    for sc in (scenarios.field_disk(32), scenarios.half_flux_annulus(32)):
        d = sc.domain
        p = F.GLParameters(0.8, 1.3)
        e0 = F.energy(F.GLState.normal(sc.gauge, d), p)
        e1 = F.energy(F.GLState(np.ones(d.n_omega, complex), -sc.gauge.A_e, sc.gauge, d), p)
        expected = -0.5 * p.lam * area(d) + p.field_weight * sc.field.l2_squared(d)
        ok &= abs(e0) <= 1e-12 and _rel(e1, expected) <= 1e-10
        details.append(f"{sc.name}: G(0,A_e)={e0:.1e}, rel dev {_rel(e1, expected):.1e}")
    criterion(7, ok, "; ".join(details))


def test_08_small_lambda_global_minimality(criterion):
    sc = scenarios.half_flux_annulus(32)
    sp_ = _spec(sc)
    res = F.multi_start(F.GLParameters(0.1 * sp_.lambda1, 1.0), sc.gauge, sc.domain, sp_.u1)
    lowest = min(r.energy for _, r in res)
    criterion(8, all(r.energy >= -1e-9 for _, r in res),
              f"lowest multi-start energy = {lowest:.2e} ({len(res)} starts)")


def _slope(coeffs, sc, alphas):
    r = [B.predictor_residual(coeffs, sc.gauge, sc.domain, a) for a in alphas]
    return np.polyfit(np.log(alphas), np.log(r), 1)[0]


def test_09_bifurcation_coefficients(criterion):
    details, ok = [], True
    alphas = [0.05, 0.1, 0.2]
    for sc in (scenarios.field_disk(32), scenarios.half_flux_annulus(32)):
        sp_ = _spec(sc)
        p = F.GLParameters(sp_.lambda1, 1.0)
        co = B.coefficients(sp_, sc.gauge, p)
        br = B.trace_branch(sp_, sc.gauge, p, alphas, co)
        dev = _rel(br.fit_c, co.c_kappa)
        slope = _slope(co, sc, [0.0125, 0.025, 0.05, 0.1])
        ok &= (not br.truncated) and dev <= 0.05 and slope >= 3.5
        details.append(f"{sc.name}: fit c={br.fit_c:.5g} vs c={co.c_kappa:.5g} ({dev:.1e}), slope {slope:.2f}")
    criterion(9, ok, "; ".join(details))


def test_10_half_flux_current_degeneracy(criterion):
    sc = scenarios.half_flux_annulus(32)
    sp_ = _spec(sc)
    d = sc.domain
    c_lo = B.coefficients(sp_, sc.gauge, F.GLParameters(sp_.lambda1, 0.5))
    c_hi = B.coefficients(sp_, sc.gauge, F.GLParameters(sp_.lambda1, 5.0))
    jn = math.sqrt(d.cell_area * float(c_lo.J1 @ c_lo.J1))
    dc = _rel(c_lo.c_kappa, c_hi.c_kappa)
    criterion(10, jn <= 1e-6 and c_lo.K0 <= 1e-10 and c_lo.kappa_c <= 1e-5 and dc <= 1e-10,
              f"|J1|={jn:.1e}, K0={c_lo.K0:.1e}, kappa_c={c_lo.kappa_c:.1e}, c(0.5) vs c(5) rel {dc:.1e}")


def test_11_K0_positivity(criterion):
    sc = scenarios.field_disk(32)
    sp_ = _spec(sc)
    co = B.coefficients(sp_, sc.gauge, F.GLParameters(sp_.lambda1, 1.0))
    dev = _rel(co.K0, co.K0_pairing)
    criterion(11, sp_.lambda1 > 0 and co.K0 > 0 and dev <= 1e-8,
              f"lambda1={sp_.lambda1:.5g}, K0={co.K0:.6g}, two formulas rel dev {dev:.1e}")


def test_12_stability_threshold(criterion):
    sc = scenarios.field_disk(32)
    sp_ = _spec(sc)
    l1 = sp_.lambda1
    kc = B.coefficients(sp_, sc.gauge, F.GLParameters(l1, 1.0)).kappa_c
    alpha = 0.05
    energies = {}
    for f in (0.8, 1.25):
        br = B.trace_branch(sp_, sc.gauge, F.GLParameters(l1, f * kc), [alpha])
        energies[f] = br.samples[0].energy
    br2 = B.trace_branch(sp_, sc.gauge, F.GLParameters(l1, 2 * kc), [alpha])
    s = br2.samples[0]
    stab = B.strict_stability(s.state, F.GLParameters(s.lam, 2 * kc), lambda1=l1)
    normal = B.strict_stability(F.GLState.normal(sc.gauge, sc.domain),
                                F.GLParameters(1.1 * l1, 2 * kc), lambda1=l1)
    ok = (energies[0.8] > 0 > energies[1.25] and stab.verdict == "strictly-stable"
          and normal.verdict == "unstable")
    criterion(12, ok, f"kappa_c={kc:.5g}, E(0.8 kc)={energies[0.8]:.2e}, E(1.25 kc)={energies[1.25]:.2e}, "
                      f"branch at 2 kc: {stab.verdict}, normal at 1.1 lambda1: {normal.verdict}")


SWEEP_KAPPAS = [0.02, 0.04, 0.06, 0.08, 0.1, 0.15, 0.2, 0.5]


@pytest.fixture(scope="module")
def half_flux_sweep():
    sc = scenarios.half_flux_annulus(32)
    sp_ = _spec(sc)
    kc = B.coefficients(sp_, sc.gauge, F.GLParameters(sp_.lambda1, 1.0)).kappa_c
    return sc, P.sweep(SWEEP_KAPPAS, sc.domain, sc.gauge, sp_, kc)


def test_13_phase_diagram_structure(criterion, half_flux_sweep):
    sc, sw = half_flux_sweep
    ratio = P.field_ratio(sc.domain, sc.gauge)
    sat = [p.saturated for p in sw.points]
    k_sat = sw.saturation_kappa()
    # saturation is measured on the sweep: a non-empty tail of saturated points
    saturates = sat[-1] and sat == sorted(sat)
    lower = all(p.lambda_opt / p.kappa >= ratio - sw.tol / p.kappa for p in sw.points)
    ok = sw.monotone() and sw.bounded() and saturates and lower and not any(p.flagged for p in sw.points)
    lo = [round(p.lambda_opt, 5) for p in sw.points]
    criterion(13, ok, f"lambda_opt={lo}, lambda1={sw.lambda1:.5g}, measured saturation kappa={k_sat}, "
                      f"bifurcation kappa_c={sw.kappa_c:.1e}, lower-bound ratio={ratio:.4f}")


def test_small_kappa_upper_bound(half_flux_sweep):
    # the competitor (u = 1, a = -A_e) caps lambda_opt / kappa by 1 / field_ratio
    sc, sw = half_flux_sweep
    cap = 1.0 / P.field_ratio(sc.domain, sc.gauge)
    for p in sw.points:
        if not p.saturated:
            assert p.bracket[0] / p.kappa <= cap + sw.tol / p.kappa


def test_14_K_algebra(criterion):
    sc = scenarios.half_flux_annulus(32)
    d = sc.domain
    ph = S.half_flux_phase(sc.gauge, d)
    H = spectra.assemble(sc.gauge, d).matrix
    rng = np.random.default_rng(14)
    inv = comm = 0.0
    for _ in range(10):
        u = rng.standard_normal(d.n_omega) + 1j * rng.standard_normal(d.n_omega)
        inv = max(inv, np.abs(S.K_apply(S.K_apply(u, ph), ph) - u).max() / np.abs(u).max())
        c = H @ S.K_apply(u, ph) - S.K_apply(H @ u, ph)
        comm = max(comm, calculus.norm(d, c) / calculus.norm(d, u))
    sp_ = _spec(sc)
    v = S.K_real_ground_state(sp_, ph)
    eig = calculus.norm(d, H @ v - sp_.lambda1 * v) / calculus.norm(d, v)
    criterion(14, inv <= 1e-14 and comm <= 1e-8 and eig <= 1e-7,
              f"|K^2 u - u|={inv:.1e}, |[K,H]u|/|u|={comm:.1e}, projected eigen-residual={eig:.1e}")


def test_15_nodal_slitting(criterion):
    sc = scenarios.half_flux_annulus(96)
    sp_ = _spec(sc)
    ph = S.half_flux_phase(sc.gauge, sc.domain)
    br = S.reduced_branch(sp_, sc.gauge, ph, F.GLParameters(sp_.lambda1, 1.0), [0.1])
    u = br.samples[0].state.u
    ok, parts = br.samples[0].converged, []
    for eps in (0.02, 0.05, 0.1, 0.2):
        r = S.nodal_set(u, sc.domain, eps, ph)
        ok &= r.curve_components == 1 and r.touches == [{"outer", "hole_0"}] and r.slits
        parts.append(f"eps={eps}: {r.curve_components} comp, touches {sorted(r.touches[0]) if r.touches else []}, "
                     f"slits={r.slits}")
    criterion(15, ok, "; ".join(parts))


def test_16_scaling_conversion(criterion):
    worst_formula = worst_round = 0.0
    for a, b, m, e, c, hb in [(-1.0, 2.0, 0.5, 1.0, 1.0, 1.0), (-3.7e-2, 1.1e3, 9.1e-1, 4.8, 3e2, 1.05),
                              (-250.0, 0.02, 7.0, 0.3, 1.0, 2.5)]:
        conv = P.scaling_convert(P.PhysicalParameters(a, b, m, e, c, hb))
        lam = 4 * m * abs(a) / hb**2
        kap = (m * c / (e * hb)) * math.sqrt(b / (8 * math.pi))
        worst_formula = max(worst_formula, _rel(conv.params.lam, lam), _rel(conv.params.kappa, kap))
        for G in (-3.2, 0.0, 1e-4, 17.0):
            back = P.dimensionless_energy(conv, P.physical_energy(conv, G))
            worst_round = max(worst_round, abs(back - G) / max(abs(G), 1.0))
    criterion(16, worst_formula == 0.0 and worst_round <= 1e-12,
              f"formula deviation {worst_formula:.1e}, energy roundtrip {worst_round:.1e}")
