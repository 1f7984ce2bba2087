"""Small-amplitude expansion of the superconducting branch at ``lambda1``.

Near the lowest eigenvalue the bifurcating solutions read::

    u = alpha u1 + alpha^3 u3 + ...,   a = alpha^2 a2 + ...,
    lambda = lambda1 + c(kappa) alpha^2 + ...

with ``c(kappa) = lambda1 (I0 - 2 K0 / kappa^2)``, ``I0 = int |u1|^4``,
``K0 = <L^{-1} J1, J1>`` and ``J1`` the supercurrent of ``u1``.  On the grid
these identities hold exactly (not only up to discretisation error), so the
coefficients can be checked against a numerically traced branch.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import calculus
from . import gauge as gauge_mod
from .domain import Domain
from .functional import (GLParameters, GLState, el_residual, energy, field_derivative,
                         jacobian, residual_norms)
from .gauge import GaugeData
from .spectra import Spectrum

logger = logging.getLogger(__name__)

DENSE_HESSIAN_LIMIT = 4000


class DegenerateSpectrumError(ValueError):
    """The lowest eigenvalue is not simple; the expansion does not apply."""


def supercurrent(u: np.ndarray, gauge: GaugeData, domain: Domain) -> np.ndarray:
    """``Im(conj(u) (grad - i A_e) u)`` on the edges of the filled domain,
    zero outside Omega."""
    return calculus.current(domain, u, gauge.links(domain))


@dataclass
class BifurcationCoefficients:
    lambda1: float
    kappa: float
    I0: float
    J1: np.ndarray
    b2: np.ndarray
    a2: np.ndarray
    K0: float
    K0_pairing: float
    K0_pairing_imag: float
    c_kappa: float
    kappa_c: float
    u3: np.ndarray
    u1: np.ndarray

    def c(self, kappa: float) -> float:
        return self.lambda1 * (self.I0 - 2.0 * self.K0 / kappa**2)

    def to_dict(self) -> dict:
        return {
            "lambda1": self.lambda1,
            "kappa": self.kappa,
            "I0": self.I0,
            "K0": self.K0,
            "K0_pairing": self.K0_pairing,
            "K0_pairing_imag": self.K0_pairing_imag,
            "c_kappa": self.c_kappa,
            "kappa_c": self.kappa_c,
        }


def reduced_resolvent(op_matrix: sp.spmatrix, lambda1: float, u1: np.ndarray,
                      domain: Domain, f: np.ndarray) -> np.ndarray:
    """``R0 f``: the solution ``w`` of ``(H - lambda1) w = P f`` with
    ``<u1, w> = 0``, where ``P`` projects out ``u1``.

    Solved as one bordered sparse system ``[[H - lambda1, u1], [u1^*, 0]]``,
    which is nonsingular when ``lambda1`` is simple.
    """
    w = domain.cell_area
    n = op_matrix.shape[0]
    f = f - u1 * calculus.inner(domain, u1, f)
    col = sp.csc_matrix(u1.reshape(-1, 1))
    row = sp.csc_matrix((w * np.conj(u1)).reshape(1, -1))
    M = sp.bmat([[op_matrix - lambda1 * sp.identity(n), col], [row, None]], format="csc")
    sol = spla.splu(M).solve(np.concatenate([f, [0.0]]).astype(complex))
    out = sol[:n]
    return out - u1 * calculus.inner(domain, u1, out)


def coefficients(spectrum: Spectrum, gauge: GaugeData, p: GLParameters,
                 op_matrix: sp.spmatrix | None = None) -> BifurcationCoefficients:
    """Expansion coefficients at ``lambda1`` for the GL parameter ``p.kappa``."""
    if not spectrum.simple:
        raise DegenerateSpectrumError(
            f"lowest eigenvalue not simple (gap {spectrum.gap:.3e}); expansion refused")
    d = spectrum.domain
    w = d.cell_area
    l1 = spectrum.lambda1
    u1 = spectrum.u1
    links = gauge.links(d)
    H = calculus.magnetic_laplacian(d, links) if op_matrix is None else op_matrix

    I0 = w * float(np.sum(np.abs(u1) ** 4))
    J1 = calculus.current(d, u1, links)
    # L^{-1} J1 = rot* psi with -Delta chi = rot J1, -Delta psi = chi
    chi = gauge_mod.solve_dirichlet(d, calculus.curl(d, J1))
    b2 = calculus.curl_adjoint(d, gauge_mod.solve_dirichlet(d, chi))
    K0 = w * float(chi @ chi)
    # second route: -<i b2 . D u1, u1>, pairing each edge with its tail cell
    Du = calculus.covariant_derivative(d, u1, links)
    z = -w * np.sum(1j * b2[d.omega_edge_ids] * Du * np.conj(u1[d.omega_tail]))
    a2 = (l1 / p.kappa**2) * b2
    c = l1 * (I0 - 2.0 * K0 / p.kappa**2)
    # order alpha^3 of the first equation:
    # (H - l1) u3 + (dH . a2) u1 + l1 |u1|^2 u1 - c u1 = 0
    rhs = -(l1 * np.abs(u1) ** 2 * u1 + field_derivative(d, links, u1, a2))
    u3 = reduced_resolvent(H, l1, u1, d, rhs)
    return BifurcationCoefficients(
        lambda1=l1, kappa=p.kappa, I0=I0, J1=J1, b2=b2, a2=a2, K0=K0,
        K0_pairing=float(z.real), K0_pairing_imag=float(z.imag), c_kappa=c,
        kappa_c=kappa_c_from(I0, K0), u3=u3, u1=u1.copy())


def kappa_c_from(I0: float, K0: float) -> float:
    if I0 <= 0:
        raise RuntimeError("I0 must be positive for a normalised eigenvector")
    return math.sqrt(2.0 * max(K0, 0.0) / I0)


def kappa_c(coeffs: BifurcationCoefficients) -> float:
    """``sqrt(2 K0 / I0)``: the branch energy is negative exactly above it."""
    return kappa_c_from(coeffs.I0, coeffs.K0)


def branch_energy(coeffs: BifurcationCoefficients, alpha: float, p: GLParameters) -> float:
    """Leading quartic term ``-alpha^4 (lambda1/2) (I0 - 2 K0 / kappa^2)``."""
    return -alpha**4 * 0.5 * coeffs.lambda1 * (coeffs.I0 - 2.0 * coeffs.K0 / p.kappa**2)


def predictor(coeffs: BifurcationCoefficients, gauge: GaugeData, domain: Domain,
              alpha: float, kappa: float | None = None) -> tuple[GLState, float]:
    """``(alpha u1 + alpha^3 u3, alpha^2 a2)`` and ``lambda1 + c alpha^2``.

    ``coeffs`` must have been computed for the same ``kappa``."""
    if kappa is not None and not math.isclose(kappa, coeffs.kappa):
        raise ValueError("coefficients were computed for a different kappa")
    u = alpha * coeffs.u1 + alpha**3 * coeffs.u3
    a = alpha**2 * coeffs.a2
    return GLState(u, a, gauge, domain), coeffs.lambda1 + coeffs.c_kappa * alpha**2


def predictor_residual(coeffs: BifurcationCoefficients, gauge: GaugeData, domain: Domain,
                       alpha: float) -> float:
    """Combined L2 norm of the EL residual of the predictor at ``lambda(alpha)``."""
    st, lam = predictor(coeffs, gauge, domain, alpha)
    ru, ra = residual_norms(st, GLParameters(lam, coeffs.kappa))
    return math.hypot(ru, ra)


# -------------------------------------------------------------- continuation
@dataclass
class BranchSample:
    alpha: float
    lam: float
    state: GLState
    energy: float
    newton_residual: float
    el_residual: float
    iterations: int
    converged: bool

    def to_row(self) -> dict:
        return {"alpha": self.alpha, "lambda": self.lam, "energy": self.energy,
                "newton_residual": self.newton_residual, "el_residual": self.el_residual,
                "iterations": self.iterations, "converged": self.converged}


@dataclass
class Branch:
    samples: list[BranchSample]
    lambda1: float
    fit_c: float = float("nan")
    fit_d: float = float("nan")
    truncated: bool = False
    kind: str = "full"
    meta: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        return [s.to_row() for s in self.samples]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lambda1": self.lambda1, "fit_c": self.fit_c,
                "fit_d": self.fit_d, "truncated": self.truncated, "samples": self.rows(),
                **self.meta}


def fit_branch(alphas, lams, lambda1: float) -> tuple[float, float]:
    """Least-squares fit ``lambda - lambda1 = c alpha^2 + d alpha^4``."""
    a = np.asarray(alphas, float)
    y = np.asarray(lams, float) - lambda1
    mask = a != 0
    a, y = a[mask], y[mask]
    if len(a) == 0:
        return float("nan"), float("nan")
    if len(np.unique(np.abs(a))) < 2:
        return float(np.mean(y / a**2)), 0.0
    A = np.stack([a**2, a**4], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(coef[0]), float(coef[1])


class _BorderedSystem:
    """Newton system for a branch point at fixed amplitude ``alpha``.

    Unknowns ``(Re u, Im u, psi, b, lambda, mu)`` with ``a = rot* psi`` (the
    Coulomb slice) and equations::

        r_u(u, a, lambda) + i mu u1 = 0
        -Delta psi - b = 0
        -Delta b - (lambda/kappa^2) rot J = 0
        Re <u1, u> = alpha,   Im <u1, u> = 0

    ``mu`` is the multiplier of the phase condition; it vanishes at
    solutions with ``alpha != 0``.
    """

    def __init__(self, domain: Domain, gauge: GaugeData, kappa: float, u1: np.ndarray):
        self.d = domain
        self.gauge = gauge
        self.kappa = kappa
        self.u1 = u1
        self.n = domain.n_omega
        self.nv = domain.n_vertices
        self.G = domain.rot_adjoint_matrix
        self.GT = domain.rot_matrix
        self.Lv = domain.vertex_laplacian

    def pack(self, u, psi, b, lam, mu):
        return np.concatenate([u.real, u.imag, psi, b, [lam, mu]])

    def unpack(self, x):
        n, nv = self.n, self.nv
        u = x[:n] + 1j * x[n:2 * n]
        psi = x[2 * n:2 * n + nv]
        b = x[2 * n + nv:2 * n + 2 * nv]
        return u, psi, b, x[-2], x[-1]

    def state(self, x) -> GLState:
        u, psi, *_ = self.unpack(x)
        return GLState(u, self.G @ psi, self.gauge, self.d)

    def residual(self, x, alpha):
        u, psi, b, lam, mu = self.unpack(x)
        st = GLState(u, self.G @ psi, self.gauge, self.d)
        p = GLParameters(lam, self.kappa)
        r_u, _ = el_residual(st, p)
        r_u = r_u + 1j * mu * self.u1
        J = calculus.current(self.d, u, st.links)
        F2 = self.Lv @ psi - b
        F3 = self.Lv @ b - p.coupling * (self.GT @ J)
        ip = calculus.inner(self.d, self.u1, u)
        return np.concatenate([r_u.real, r_u.imag, F2, F3, [ip.real - alpha, ip.imag]])

    def matrix(self, x):
        u, psi, b, lam, mu = self.unpack(x)
        st = GLState(u, self.G @ psi, self.gauge, self.d)
        p = GLParameters(lam, self.kappa)
        n, nv, ne = self.n, self.nv, self.d.n_edges
        Jf = jacobian(st, p).tocsr()
        Juu = Jf[:2 * n, :2 * n]
        Jua = Jf[:2 * n, 2 * n:]
        Jau = Jf[2 * n:, :2 * n]
        # the a-a block minus rot* rot is the diagonal current derivative
        Daa = Jf[2 * n:, 2 * n:] - self.G @ self.GT
        dl_u = (np.abs(u) ** 2 - 1.0) * u
        J = calculus.current(self.d, u, st.links)
        w = self.d.cell_area
        col_lam = np.concatenate([dl_u.real, dl_u.imag, np.zeros(nv),
                                  -(self.GT @ J) / self.kappa**2])
        iu1 = 1j * self.u1
        col_mu = np.concatenate([iu1.real, iu1.imag, np.zeros(2 * nv)])
        u1 = self.u1
        row_re = np.concatenate([w * u1.real, w * u1.imag, np.zeros(2 * nv + 2)])
        row_im = np.concatenate([-w * u1.imag, w * u1.real, np.zeros(2 * nv + 2)])
        I = sp.identity(nv)
        top = sp.hstack([Juu, Jua @ self.G, sp.csr_matrix((2 * n, nv))])
        mid = sp.hstack([sp.csr_matrix((nv, 2 * n)), self.Lv, -I])
        bot = sp.hstack([self.GT @ Jau, self.GT @ Daa @ self.G, self.Lv])
        core = sp.vstack([top, mid, bot])
        core = sp.hstack([core, sp.csr_matrix(col_lam.reshape(-1, 1)),
                          sp.csr_matrix(col_mu.reshape(-1, 1))])
        full = sp.vstack([core, sp.csr_matrix(row_re), sp.csr_matrix(row_im)])
        return full.tocsc()

    def solve(self, x0, alpha, tol=1e-11, maxit=30):
        x = x0.copy()
        F = self.residual(x, alpha)
        hist = [float(np.linalg.norm(F))]
        for it in range(1, maxit + 1):
            dx = spla.splu(self.matrix(x)).solve(-F)
            x = x + dx
            F = self.residual(x, alpha)
            hist.append(float(np.linalg.norm(F)))
            if hist[-1] <= tol or np.linalg.norm(dx) <= 1e-14 * max(1.0, np.linalg.norm(x)):
                return x, hist, it, hist[-1] <= max(tol, 1e-9)
            if not np.isfinite(hist[-1]) or hist[-1] > 1e6 * hist[0] + 1.0:
                return x, hist, it, False
        return x, hist, maxit, False


def trace_branch(spectrum: Spectrum, gauge: GaugeData, p: GLParameters, alphas,
                 coeffs: BifurcationCoefficients | None = None, tol: float = 1e-11,
                 maxit: int = 30) -> Branch:
    """Solve the full GL system at each amplitude ``alpha = Re<u1, u>``.

    Each Newton solve starts from the predictor; ``lambda`` is an unknown.
    ``alpha = 0`` returns the normal state at ``lambda1``.  A divergent
    sample truncates the branch.
    """
    d = spectrum.domain
    coeffs = coeffs or coefficients(spectrum, gauge, p)
    sys_ = _BorderedSystem(d, gauge, p.kappa, spectrum.u1)
    samples: list[BranchSample] = []
    truncated = False
    for alpha in alphas:
        alpha = float(alpha)
        if alpha == 0.0:
            st = GLState.normal(gauge, d)
            samples.append(BranchSample(0.0, spectrum.lambda1, st, 0.0, 0.0, 0.0, 0, True))
            continue
        st0, lam0 = predictor(coeffs, gauge, d, alpha)
        psi0 = alpha**2 * (spectrum.lambda1 / p.kappa**2) * \
            gauge_mod.solve_dirichlet(d, gauge_mod.solve_dirichlet(d, calculus.curl(d, coeffs.J1)))
        x0 = sys_.pack(st0.u, psi0, d.vertex_laplacian @ psi0, lam0, 0.0)
        x, hist, its, ok = sys_.solve(x0, alpha, tol, maxit)
        st = sys_.state(x)
        lam = float(x[-2])
        pp = GLParameters(lam, p.kappa) if lam > 0 else p
        el = math.hypot(*residual_norms(st, pp))
        samples.append(BranchSample(alpha, lam, st, energy(st, pp), hist[-1], el, its, ok))
        if not ok:
            logger.warning("Newton failed at alpha=%g (residual %.2e)", alpha, hist[-1])
            truncated = True
            break
    good = [s for s in samples if s.converged]
    c_fit, d_fit = fit_branch([s.alpha for s in good], [s.lam for s in good], spectrum.lambda1)
    return Branch(samples, spectrum.lambda1, c_fit, d_fit, truncated, "full",
                  {"kappa": p.kappa, "c_kappa": coeffs.c_kappa})


# ----------------------------------------------------------------- stability
@dataclass
class StabilityVerdict:
    verdict: str
    eigenvalues: np.ndarray
    phase_eigenvalue: float | None
    stab_tol: float

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "eigenvalues": [float(e) for e in self.eigenvalues],
                "phase_eigenvalue": self.phase_eigenvalue, "stab_tol": self.stab_tol}


def strict_stability(state: GLState, p: GLParameters, k: int = 8,
                     stab_tol: float = 1e-6, lambda1: float | None = None,
                     residual_tol: float = 1e-6) -> StabilityVerdict:
    """Lowest Hessian eigenvalues on the Coulomb slice and a stability verdict.

    The perturbation ``a`` is parametrised as ``rot* psi``; the eigenproblem
    ``T^T W Jac T y = mu T^T W T y`` (``W`` the pairing metric) is solved
    densely for small problems and by shift-invert Lanczos otherwise.
    The phase direction ``(i u, 0)`` is identified by overlap.  The
    tolerance is ``stab_tol * lambda1`` when ``lambda1`` is given.
    """
    d = state.domain
    res = math.hypot(*residual_norms(state, p))
    scale = max(1.0, float(np.sqrt(d.cell_area) * np.linalg.norm(state.u)) * p.lam)
    if res > residual_tol * scale:
        raise ValueError(f"state is not a critical point (EL residual {res:.2e})")
    tol = stab_tol * (lambda1 if lambda1 else 1.0)
    n, nv, ne = d.n_omega, d.n_vertices, d.n_edges
    w = d.cell_area
    Jf = jacobian(state, p)
    T = sp.block_diag([sp.identity(2 * n), d.rot_adjoint_matrix]).tocsr()
    Wd = sp.diags(np.concatenate([np.full(2 * n, w), np.full(ne, w * p.field_weight)]))
    A = (T.T @ Wd @ Jf @ T).tocsr()
    A = 0.5 * (A + A.T)
    B = (T.T @ Wd @ T).tocsc()
    dim = A.shape[0]
    k = min(k, dim - 1)
    if dim <= DENSE_HESSIAN_LIMIT:
        vals, vecs = sla.eigh(A.toarray(), B.toarray(), subset_by_index=[0, k - 1])
    else:
        sigma = -10.0 * (p.lam + 1.0)
        vals, vecs = spla.eigsh(A.tocsc(), k=k, M=B, sigma=sigma, which="LM")
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    phase_ev = None
    others = vals
    if np.any(state.u != 0):
        iu = 1j * state.u
        ph = np.concatenate([iu.real, iu.imag, np.zeros(nv)])
        ov = np.abs(vecs.T @ (B @ ph)) / np.sqrt(np.einsum("ij,ij->j", vecs, B @ vecs))
        j = int(np.argmax(ov))
        phase_ev = float(vals[j])
        others = np.delete(vals, j)
    if np.any(others < -tol):
        verdict = "unstable"
    elif np.all(others > tol) and (phase_ev is None or abs(phase_ev) <= tol):
        verdict = "strictly-stable"
    else:
        verdict = "marginal"
    return StabilityVerdict(verdict, vals, phase_ev, tol)
