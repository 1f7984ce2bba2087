"""Ginzburg-Landau energy, its gradient and Hessian, and a minimizer.

The discrete energy of a state ``(u, a)`` with total potential ``A = A_e + a``
is::

    G = h^2 sum_Omega lam (-|u|^2 + |u|^4 / 2)
      + h^2 sum_{Omega edges} |(U_e u_head - u_tail) / h|^2
      + (kappa^2 / lam) h^2 sum_{vertices} (rot a)^2

With the weighted inner product ``<f, g> = h^2 sum conj(f) g`` the first
variation is ``dG = 2 Re<r_u, du> + 2 (kappa^2/lam) <r_a, da>`` where::

    r_u = H_A u + lam (|u|^2 - 1) u
    r_a = rot* rot a - (lam / kappa^2) J(u, A)

and ``J`` is the supercurrent on Omega edges (zero on hole edges).
``(r_u, r_a)`` is what :func:`el_residual` returns; :func:`gradient` carries
the factors.  :func:`hessian_apply` is the derivative of ``(r_u, r_a)``; it
is self-adjoint for the pairing ``Re<du, du'> + (kappa^2/lam) <da, da'>``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import calculus
from . import gauge as gauge_mod
from .domain import Domain
from .gauge import GaugeData

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GLParameters:
    """``lam`` is the condensation parameter (lambda), ``kappa`` the GL parameter."""

    lam: float
    kappa: float

    def __post_init__(self):
        for name in ("lam", "kappa"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")

    @property
    def field_weight(self) -> float:
        """kappa^2 / lambda, the weight of the field energy."""
        return self.kappa**2 / self.lam

    @property
    def coupling(self) -> float:
        """lambda / kappa^2, the current coupling in the second equation."""
        return self.lam / self.kappa**2


@dataclass
class GLState:
    """Order parameter on Omega cells and perturbation ``a`` on the edges of
    the filled domain; the total potential is ``gauge.A_e + a``."""

    u: np.ndarray
    a: np.ndarray
    gauge: GaugeData
    domain: Domain

    @classmethod
    def normal(cls, gauge: GaugeData, domain: Domain) -> "GLState":
        return cls(np.zeros(domain.n_omega, complex), np.zeros(domain.n_edges), gauge, domain)

    def copy(self, u=None, a=None) -> "GLState":
        return GLState(self.u.copy() if u is None else np.asarray(u, complex),
                       self.a.copy() if a is None else np.asarray(a, float),
                       self.gauge, self.domain)

    @property
    def links(self) -> np.ndarray:
        return self.gauge.links(self.domain, self.a)


@dataclass
class BoundCheck:
    name: str
    value: float
    bound: float | None
    passed: bool | None
    note: str = ""


@dataclass
class SolutionReport:
    energy: float
    el_residual_norms: tuple[float, float]
    max_modulus: float
    bound_checks: list[BoundCheck] = field(default_factory=list)
    hole_field_constants: list[float] = field(default_factory=list)
    converged: bool = True
    iterations: int = 0
    flag: str | None = None
    energy_trace: list[float] = field(default_factory=list)
    start: str = ""

    def to_dict(self) -> dict:
        return {
            "energy": self.energy,
            "el_residual_norms": list(self.el_residual_norms),
            "max_modulus": self.max_modulus,
            "bound_checks": [vars(b) for b in self.bound_checks],
            "hole_field_constants": self.hole_field_constants,
            "converged": self.converged,
            "iterations": self.iterations,
            "flag": self.flag,
            "start": self.start,
        }


# ------------------------------------------------------------------ energy
def energy_terms(state: GLState, p: GLParameters) -> dict[str, float]:
    d = state.domain
    w = d.cell_area
    m2 = np.abs(state.u) ** 2
    pot = p.lam * w * float(np.sum(-m2 + 0.5 * m2 * m2))
    kin = calculus.kinetic_energy(d, state.u, state.links)
    fld = p.field_weight * w * float(np.sum(calculus.curl(d, state.a) ** 2))
    return {"potential": pot, "kinetic": kin, "field": fld}


def energy(state: GLState, p: GLParameters) -> float:
    t = energy_terms(state, p)
    return t["potential"] + t["kinetic"] + t["field"]


def el_residual(state: GLState, p: GLParameters) -> tuple[np.ndarray, np.ndarray]:
    """Euler-Lagrange residuals ``(r_u, r_a)``; zero exactly at critical points."""
    d = state.domain
    links = state.links
    H = calculus.magnetic_laplacian(d, links)
    u = state.u
    r_u = H @ u + p.lam * (np.abs(u) ** 2 - 1.0) * u
    J = calculus.current(d, u, links)
    r_a = d.rot_adjoint_matrix @ (d.rot_matrix @ state.a) - p.coupling * J
    return r_u, r_a


def gradient(state: GLState, p: GLParameters) -> tuple[np.ndarray, np.ndarray]:
    """L2 gradient ``(g_u, g_a)``: ``dG = Re<g_u, du> + <g_a, da>``."""
    r_u, r_a = el_residual(state, p)
    return 2.0 * r_u, 2.0 * p.field_weight * r_a


def residual_norms(state: GLState, p: GLParameters) -> tuple[float, float]:
    r_u, r_a = el_residual(state, p)
    d = state.domain
    return calculus.norm(d, r_u), calculus.norm(d, r_a)


def pairing(p: GLParameters, domain: Domain, x, y) -> float:
    """The pairing in which :func:`hessian_apply` is self-adjoint."""
    return float(calculus.inner(domain, x[0], y[0]).real
                 + p.field_weight * domain.cell_area * np.dot(x[1], y[1]))


# ----------------------------------------------------------------- Hessian
def field_derivative(domain: Domain, links: np.ndarray, u: np.ndarray, da: np.ndarray) -> np.ndarray:
    """Derivative of ``H_A u`` with respect to ``A`` along ``da``."""
    t, hd, eids = domain.omega_tail, domain.omega_head, domain.omega_edge_ids
    dae = da[eids]
    out = np.zeros(domain.n_omega, complex)
    np.add.at(out, t, 1j * links * u[hd] * dae / domain.h)
    np.add.at(out, hd, -1j * np.conj(links) * u[t] * dae / domain.h)
    return out


def hessian_apply(state: GLState, p: GLParameters, delta) -> tuple[np.ndarray, np.ndarray]:
    """Derivative of ``(r_u, r_a)`` at ``state`` along ``delta = (du, da)``.

    At the normal state this is ``((H_{A_e} - lam) du, rot* rot da)``.
    """
    du, da = delta
    d = state.domain
    u = state.u
    links = state.links
    t, hd, eids = d.omega_tail, d.omega_head, d.omega_edge_ids
    h = d.h
    H = calculus.magnetic_laplacian(d, links)

    out_u = H @ du + p.lam * ((2 * np.abs(u) ** 2 - 1.0) * du + u * u * np.conj(du))
    out_u += field_derivative(d, links, u, da)
    dae = da[eids]
    w = links * u[hd]

    dJ = np.zeros(d.n_edges)
    dJ[eids] = (np.imag(np.conj(du[t]) * w + np.conj(u[t]) * links * du[hd]) / h
                - np.real(np.conj(u[t]) * w) * dae)
    out_a = d.rot_adjoint_matrix @ (d.rot_matrix @ da) - p.coupling * dJ
    return out_u, out_a


def jacobian(state: GLState, p: GLParameters) -> sp.csr_matrix:
    """Sparse real Jacobian of ``(Re r_u, Im r_u, r_a)`` with respect to
    ``(Re u, Im u, a)``; the matrix form of :func:`hessian_apply`."""
    d = state.domain
    n, ne = d.n_omega, d.n_edges
    u = state.u
    links = state.links
    t, hd, eids = d.omega_tail, d.omega_head, d.omega_edge_ids
    h = d.h
    H = calculus.magnetic_laplacian(d, links)
    Hr, Hi = H.real, H.imag

    m2 = np.abs(u) ** 2
    s = u * u
    base = p.lam * (2 * m2 - 1.0)
    Dpp = sp.diags(base + p.lam * s.real)
    Dqq = sp.diags(base - p.lam * s.real)
    Dpq = sp.diags(p.lam * s.imag)
    Juu = sp.bmat([[Hr + Dpp, -Hi + Dpq], [Hi + Dpq, Hr + Dqq]])

    w = links * u[hd]
    v_t = 1j * w / h
    v_h = -1j * np.conj(links) * u[t] / h
    rows = np.concatenate([t, hd, n + t, n + hd])
    cols = np.concatenate([eids, eids, eids, eids])
    vals = np.concatenate([v_t.real, v_h.real, v_t.imag, v_h.imag])
    Jua = sp.csr_matrix((vals, (rows, cols)), shape=(2 * n, ne))

    c = np.conj(u[t]) * links
    k = p.coupling / h
    rows = np.concatenate([eids] * 4)
    cols = np.concatenate([hd, n + hd, t, n + t])
    vals = -k * np.concatenate([c.imag, c.real, w.imag, -w.real])
    Jau = sp.csr_matrix((vals, (rows, cols)), shape=(ne, 2 * n))

    diag_a = np.zeros(ne)
    diag_a[eids] = p.coupling * np.real(np.conj(u[t]) * w)
    Jaa = d.rot_adjoint_matrix @ d.rot_matrix + sp.diags(diag_a)
    return sp.bmat([[Juu, Jua], [Jau, Jaa]], format="csr")


# ------------------------------------------------------------- minimizer
@dataclass
class MinimizeOptions:
    tol: float = 1e-8
    maxiter: int = 20_000
    energy_floor: float | None = None  # stop as soon as energy < energy_floor
    project_every: int = 50
    armijo: float = 1e-4


def to_coulomb(state: GLState) -> GLState:
    """Gauge-equivalent state whose ``a`` lies in the Coulomb slice.

    With ``a -> a + grad(theta)`` and ``u -> u exp(i theta)`` the energy is
    unchanged; ``theta`` solves the Neumann problem that kills ``div a``.
    """
    d = state.domain
    theta = gauge_mod.solve_neumann(d, calculus.divergence(d, state.a))
    a = state.a + d.grad_matrix("tilde") @ theta
    u = state.u * np.exp(1j * theta[d.omega_in_tilde])
    return state.copy(u=u, a=a)


class _Preconditioner:
    """u-block ``(H_{A_e} + 1)^{-1}``, a-block ``L^{-1}`` on the Coulomb slice."""

    def __init__(self, gauge: GaugeData, domain: Domain):
        from .spectra import assemble

        self.op = assemble(gauge, domain)
        self.domain = domain

    def __call__(self, r_u, r_a):
        z_u = self.op.shifted_solve(r_u, 1.0)
        z_a = gauge_mod.laplace_inverse_coulomb(r_a, self.domain)
        return z_u, z_a


def minimize(p: GLParameters, init: GLState, opts: MinimizeOptions | None = None,
             start: str = "") -> tuple[GLState, SolutionReport]:
    """Preconditioned Polak-Ribiere nonlinear conjugate gradients.

    The step length starts from the minimiser of the local quadratic model
    along the search direction (one Hessian product) and is then backtracked
    until the Armijo condition holds.  Convergence: combined L2 residual norm
    ``<= tol * max(initial residual, lam)``.
    """
    opts = opts or MinimizeOptions()
    d = init.domain
    w = d.cell_area
    state = to_coulomb(init)
    P = _Preconditioner(state.gauge, d)

    def dot(x, y):
        return float(w * (np.vdot(x[0], y[0]).real + p.field_weight * np.dot(x[1], y[1])))

    E = energy(state, p)
    r = el_residual(state, p)
    res = math.hypot(calculus.norm(d, r[0]), calculus.norm(d, r[1]))
    target = opts.tol * max(res, p.lam)
    trace = [E]
    z = P(*r)
    direc = (-z[0], -z[1])
    rz = dot(r, z)
    converged = res <= target
    it = 0
    stalls = 0
    while not converged and it < opts.maxiter:
        it += 1
        if opts.energy_floor is not None and E < opts.energy_floor:
            break
        slope = 2.0 * dot(r, direc)  # dG along direc
        if slope >= 0:
            direc = (-z[0], -z[1])
            slope = 2.0 * dot(r, direc)
        hd = hessian_apply(state, p, direc)
        curv = 2.0 * dot(hd, direc)
        step = -slope / curv if curv > 0 else 1.0
        accepted = False
        for _ in range(40):
            trial = state.copy(u=state.u + step * direc[0], a=state.a + step * direc[1])
            Et = energy(trial, p)
            small = abs(step * slope) < 1e-13 * (abs(E) + p.lam * w * d.n_omega)
            if Et <= E + opts.armijo * step * slope or (small and Et <= E + 1e-14 * (abs(E) + 1)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            stalls += 1
            if stalls > 2:
                logger.debug("line search stalled at iteration %d", it)
                break
            direc = (-z[0], -z[1])
            continue
        stalls = 0
        state, E = trial, Et
        if it % opts.project_every == 0:
            state = state.copy(a=gauge_mod.coulomb_part(state.a, d))
            E = energy(state, p)
        trace.append(E)
        r_new = el_residual(state, p)
        res = math.hypot(calculus.norm(d, r_new[0]), calculus.norm(d, r_new[1]))
        if res <= target:
            converged = True
            r = r_new
            break
        z_new = P(*r_new)
        rz_new = dot(r_new, z_new)
        beta = max(0.0, (rz_new - dot(r_new, z)) / rz) if rz > 0 else 0.0
        direc = (-z_new[0] + beta * direc[0], -z_new[1] + beta * direc[1])
        r, z, rz = r_new, z_new, rz_new
    state = state.copy(a=gauge_mod.coulomb_part(state.a, d))
    report = check_bounds(state, p)
    report.converged = converged
    report.iterations = it
    report.energy_trace = trace
    report.start = start
    if not converged:
        report.flag = "early-stop" if (opts.energy_floor is not None and E < opts.energy_floor) \
            else "non-converged"
    return state, report


def seed_states(gauge: GaugeData, domain: Domain, u1: np.ndarray | None = None,
                alpha: float = 0.5, seed: int = 0) -> dict[str, GLState]:
    """The fixed multi-start portfolio.

    * ``normal``: ``(0, 0)``
    * ``constant``: ``(1, 0)``
    * ``screening``: ``u = 1`` with ``a = -A_e`` projected onto the Coulomb
      slice, i.e. the applied field cancelled as far as the slice allows
    * ``eigen``: ``alpha * u1`` (when ``u1`` is given)
    * ``random``: small random complex field from a fixed RNG seed
    """
    n = domain.n_omega
    seeds = {
        "normal": GLState.normal(gauge, domain),
        "constant": GLState(np.ones(n, complex), np.zeros(domain.n_edges), gauge, domain),
        "screening": GLState(np.ones(n, complex), -gauge_mod.coulomb_part(gauge.A_e, domain),
                             gauge, domain),
    }
    if u1 is not None:
        seeds["eigen"] = GLState(alpha * np.asarray(u1, complex), np.zeros(domain.n_edges),
                                 gauge, domain)
    rng = np.random.default_rng(seed)
    seeds["random"] = GLState(0.5 * (rng.standard_normal(n) + 1j * rng.standard_normal(n)),
                              np.zeros(domain.n_edges), gauge, domain)
    return seeds


def multi_start(p: GLParameters, gauge: GaugeData, domain: Domain,
                u1: np.ndarray | None = None, opts: MinimizeOptions | None = None,
                seed: int = 0) -> list[tuple[GLState, SolutionReport]]:
    """Minimise from every seed; results sorted by energy (best first)."""
    out = []
    for name, s in seed_states(gauge, domain, u1, seed=seed).items():
        st, rep = minimize(p, s, opts, start=name)
        logger.debug("start %s: energy %.3e (%s)", name, rep.energy, rep.flag)
        out.append((st, rep))
    out.sort(key=lambda sr: sr[1].energy)
    return out


# ------------------------------------------------------------ a priori bounds
def hole_field_constants(state: GLState) -> list[float]:
    """Mean of ``rot a`` over the vertices lying strictly inside each hole."""
    d = state.domain
    rot = calculus.curl(d, state.a)
    vi, vj = d.vertices.T
    lab = d.labels
    around = np.stack([lab[vi - 1, vj - 1], lab[vi, vj - 1], lab[vi - 1, vj], lab[vi, vj]], 1)
    out = []
    for k in range(d.n_holes):
        inside = np.all(around == k + 1, axis=1)
        out.append(float(rot[inside].mean()) if inside.any() else float("nan"))
    return out


def check_bounds(state: GLState, p: GLParameters, tol: float = 1e-6) -> SolutionReport:
    """Evaluate the a priori inequalities on a (candidate) solution.

    Bounds with explicit constants get a verdict; the others are reported as
    ratios (``bound`` and ``passed`` left as None).
    """
    d = state.domain
    w = d.cell_area
    E = energy(state, p)
    rn = residual_norms(state, p)
    mod = float(np.max(np.abs(state.u))) if state.u.size else 0.0
    omega_area = d.n_omega * w
    rot = calculus.curl(d, state.a)
    field_e = p.field_weight * w * float(np.sum(rot**2))
    La = d.rot_adjoint_matrix @ rot
    La_norm = calculus.norm(d, La)
    checks = [BoundCheck("max_modulus", mod, 1.0 + tol, mod <= 1.0 + tol)]
    if E <= 0:
        b = 0.5 * p.lam * omega_area
        checks.append(BoundCheck("field_energy", field_e, b, field_e <= b + tol))
    else:
        checks.append(BoundCheck("field_energy", field_e, None, None, "energy > 0: not applicable"))
    b = math.sqrt(omega_area) * p.lam**1.5 / p.kappa**2
    checks.append(BoundCheck("La_norm", La_norm, b, La_norm <= b + tol))
    scale = p.lam**1.5 / p.kappa**2
    a_sup = float(np.max(np.abs(state.a))) if state.a.size else 0.0
    checks.append(BoundCheck("a_sup_ratio", a_sup / scale, None, None, "sup|a| / (lam^1.5/kappa^2)"))
    h2 = math.sqrt(w * float(state.a @ state.a) + La_norm**2)
    checks.append(BoundCheck("a_H2_ratio", h2 / scale, None, None, "(|a|^2+|La|^2)^0.5 / (lam^1.5/kappa^2)"))
    rn_b = math.sqrt(w * float(np.sum(rot**2)))
    if rn_b > 0:
        checks.append(BoundCheck("a_H1_over_rot", gauge_mod.h1_norm(d, state.a) / rn_b, None, None,
                                 "|a|_H1 / |rot a|"))
    l4 = (w * float(np.sum(state.a**4))) ** 0.25
    checks.append(BoundCheck("a_L4_ratio", l4 / (p.lam / p.kappa), None, None, "|a|_L4 / (lam/kappa)"))
    return SolutionReport(E, rn, mod, checks, hole_field_constants(state))
