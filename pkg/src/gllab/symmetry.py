"""Antilinear symmetry of half-flux domains and nodal sets of real states.

When the applied field vanishes on Omega and every hole carries a flux in
``Z + 1/2`` (in units of ``2 pi``), the phase ``exp(i phi)`` with
``d phi = 2 A_e`` is single valued on Omega.  The map ``K u = exp(i phi)
conj(u)`` is then an antilinear involution commuting with the magnetic
Laplacian, and its fixed points ("K-real" fields) carry no supercurrent.

Sign convention: with the covariant derivative ``grad - i A`` it is
``exp(+i phi)`` that makes ``K`` commute with ``H_{A_e}``; the opposite sign
fails the commutation check in the tests.

A K-real field can be written ``u = s w`` with ``s^2 = exp(i phi)`` and ``w``
real.  ``s`` is built along a spanning tree of the Omega cell graph, so it
jumps by a sign across a "cut" of non-tree edges.  The per-edge sign
``sigma_e = conj(s_t) U_e s_h`` (``+-1``) records those jumps; sign changes
of ``w`` corrected by ``sigma`` locate genuine zeros of ``u``.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage

from . import calculus
from .bifurcation import Branch, BranchSample, fit_branch
from .domain import EXTERIOR, OMEGA, Domain, betti_numbers
from .functional import GLParameters, GLState, energy, residual_norms
from .gauge import GaugeData
from .spectra import Spectrum

logger = logging.getLogger(__name__)

HALF_FLUX_TOL = 1e-6
FIELD_TOL = 1e-10


class HalfFluxError(ValueError):
    """The gauge does not satisfy the half-flux hypotheses."""


@dataclass
class HalfFluxPhase:
    phase_factor: np.ndarray   # exp(i phi) per Omega cell
    half_factor: np.ndarray    # s with s^2 = exp(i phi)
    edge_sign: np.ndarray      # sigma_e per Omega edge (+-1 up to round-off)
    loop_defect: float
    tree_edges: np.ndarray     # bool per Omega edge
    domain: Domain = field(repr=False)

    def to_dict(self) -> dict:
        return {"loop_defect": self.loop_defect,
                "n_tree_edges": int(self.tree_edges.sum()),
                "n_sign_flips": int(np.sum(self.edge_sign < 0))}


def _spanning_tree(domain: Domain, root: int = 0):
    """BFS tree of the Omega cell graph: parent edge and direction per cell."""
    n = domain.n_omega
    t, hd = domain.omega_tail, domain.omega_head
    m = len(t)
    adj = sp.csr_matrix((np.arange(1, m + 1), (t, hd)), shape=(n, n))
    adj = adj + sp.csr_matrix((np.arange(1, m + 1), (hd, t)), shape=(n, n))
    order, parent_edge = [root], np.full(n, -1)
    seen = np.zeros(n, bool)
    seen[root] = True
    queue = deque([root])
    while queue:
        c = queue.popleft()
        lo, hi = adj.indptr[c], adj.indptr[c + 1]
        for nb, e1 in zip(adj.indices[lo:hi], adj.data[lo:hi]):
            if not seen[nb]:
                seen[nb] = True
                parent_edge[nb] = e1 - 1
                order.append(nb)
                queue.append(nb)
    if not seen.all():
        raise ValueError("Omega cell graph is disconnected")
    return order, parent_edge


def half_flux_phase(gauge: GaugeData, domain: Domain, tol: float = HALF_FLUX_TOL) -> HalfFluxPhase:
    """Build ``exp(i phi)`` with ``d phi = 2 A_e`` along a spanning tree."""
    H = np.asarray(gauge.H)
    if np.any(np.abs(H[domain.omega_vertex_mask]) > FIELD_TOL):
        raise HalfFluxError("applied field does not vanish on Omega")
    for k, phi in enumerate(gauge.hole_fluxes):
        if abs((phi - 0.5) - round(phi - 0.5)) > tol:
            raise HalfFluxError(f"hole_{k} flux {phi:.6g} is not in Z + 1/2")
    h = domain.h
    A = gauge.A_e[domain.omega_edge_ids]
    t, hd = domain.omega_tail, domain.omega_head
    order, parent = _spanning_tree(domain)
    theta = np.zeros(domain.n_omega)  # phi / 2
    tree = np.zeros(len(t), bool)
    for c in order[1:]:
        e = parent[c]
        tree[e] = True
        if hd[e] == c:
            theta[c] = theta[t[e]] + h * A[e]
        else:
            theta[c] = theta[hd[e]] - h * A[e]
    s = np.exp(1j * theta)
    U = calculus.link_phases(domain, gauge.A_e)
    sigma = np.conj(s[t]) * U * s[hd]
    inc = 2 * theta[hd] - 2 * theta[t] - 2 * h * A
    defect = float(np.max(np.abs(np.angle(np.exp(1j * inc))))) if len(inc) else 0.0
    if defect > 1e-6:
        raise HalfFluxError(f"phase is not single valued (loop defect {defect:.2e})")
    return HalfFluxPhase(s * s, s, sigma.real, defect, tree, domain)


def K_apply(u: np.ndarray, phase: HalfFluxPhase) -> np.ndarray:
    """``K u = exp(i phi) conj(u)``."""
    return phase.phase_factor * np.conj(u)


def project_K_real(u: np.ndarray, phase: HalfFluxPhase) -> np.ndarray:
    """``(u + K u) / 2``; raises when ``u`` is (nearly) K-imaginary."""
    out = 0.5 * (u + K_apply(u, phase))
    if np.linalg.norm(out) <= 1e-8 * np.linalg.norm(u):
        raise ValueError("projection vanishes: u is K-imaginary, rotate by i first")
    return out


def real_profile(u: np.ndarray, phase: HalfFluxPhase) -> np.ndarray:
    """Real ``w`` with ``u = e^{i c} s w`` for the best constant phase ``c``."""
    z = np.conj(phase.half_factor) * u
    c = 0.5 * np.angle(np.sum(z * z)) if np.any(z != 0) else 0.0
    return np.real(z * np.exp(-1j * c))


def K_real_ground_state(spectrum: Spectrum, phase: HalfFluxPhase) -> np.ndarray:
    """Canonical K-real, L2-normalised ``u1``; sign fixed by a positive
    weighted sum of its real profile."""
    d = spectrum.domain
    u1 = spectrum.u1
    try:
        v = project_K_real(u1, phase)
    except ValueError:
        v = project_K_real(1j * u1, phase)
    v = v / calculus.norm(d, v)
    w = np.real(np.conj(phase.half_factor) * v)
    ramp = 1.0 + np.arange(len(w)) / len(w)
    if ramp @ w < 0:
        v = -v
    return v


def reduced_matrix(spectrum_or_domain, gauge: GaugeData, phase: HalfFluxPhase) -> sp.csr_matrix:
    """``conj(s) H_{A_e} s`` as a real symmetric matrix on Omega cells."""
    d = phase.domain
    H = calculus.magnetic_laplacian(d, calculus.link_phases(d, gauge.A_e))
    S = sp.diags(phase.half_factor)
    M = (S.conj() @ H @ S).tocsr()
    imag = abs(M.imag).max() if M.nnz else 0.0
    if imag > 1e-8 * abs(M.real).max():
        raise HalfFluxError(f"reduced operator is not real (|Im| = {imag:.2e})")
    return M.real.tocsr()


def reduced_branch(spectrum: Spectrum, gauge: GaugeData, phase: HalfFluxPhase,
                   p: GLParameters, alphas, tol: float = 1e-12, maxit: int = 30) -> Branch:
    """Branch of the reduced equation ``H u = lam u (1 - |u|^2)`` with ``a = 0``.

    The unknown is the real profile ``w`` (``u = s w``), so every iterate is
    K-real by construction.  Newton on ``(w, lam)`` with the amplitude
    constraint ``<w1, w> = alpha``, started from ``alpha w1 + alpha^3 w3``.
    """
    if not spectrum.simple:
        raise ValueError("lowest eigenvalue not simple")
    d = spectrum.domain
    wgt = d.cell_area
    n = d.n_omega
    l1 = spectrum.lambda1
    s = phase.half_factor
    M = reduced_matrix(spectrum, gauge, phase)
    u1 = K_real_ground_state(spectrum, phase)
    w1 = np.real(np.conj(s) * u1)
    I0 = wgt * float(np.sum(w1**4))
    c = l1 * I0
    # order alpha^3: (M - l1) w3 = -l1 w1^3 projected, <w1, w3> = 0
    col = sp.csc_matrix(w1.reshape(-1, 1))
    B = sp.bmat([[M - l1 * sp.identity(n), col], [col.T * wgt, None]], format="csc")
    f = -l1 * w1**3
    f = f - w1 * wgt * (w1 @ f)
    w3 = spla.splu(B).solve(np.concatenate([f, [0.0]]))[:n]

    samples = []
    truncated = False
    for alpha in alphas:
        alpha = float(alpha)
        if alpha == 0.0:
            samples.append(BranchSample(0.0, l1, GLState.normal(gauge, d), 0.0, 0.0, 0.0, 0, True))
            continue
        w = alpha * w1 + alpha**3 * w3
        lam = l1 + c * alpha**2
        ok = False
        for it in range(1, maxit + 1):
            F = np.concatenate([M @ w - lam * w * (1 - w**2), [wgt * (w1 @ w) - alpha]])
            nrm = float(np.linalg.norm(F))
            if nrm <= tol:
                ok = True
                break
            Jm = sp.bmat([[M - sp.diags(lam * (1 - 3 * w**2)),
                           sp.csc_matrix((-w * (1 - w**2)).reshape(-1, 1))],
                          [sp.csc_matrix(wgt * w1.reshape(1, -1)), None]], format="csc")
            dx = spla.splu(Jm).solve(-F)
            w, lam = w + dx[:n], lam + dx[n]
        else:
            F = np.concatenate([M @ w - lam * w * (1 - w**2), [wgt * (w1 @ w) - alpha]])
            nrm = float(np.linalg.norm(F))
            ok = nrm <= max(tol, 1e-9)
        st = GLState(s * w, np.zeros(d.n_edges), gauge, d)
        pp = GLParameters(lam, p.kappa)
        el = math.hypot(*residual_norms(st, pp))
        samples.append(BranchSample(alpha, float(lam), st, energy(st, pp), nrm, el, it, ok))
        if not ok:
            truncated = True
            break
    good = [x for x in samples if x.converged]
    cf, df = fit_branch([x.alpha for x in good], [x.lam for x in good], l1)
    return Branch(samples, l1, cf, df, truncated, "reduced",
                  {"kappa": p.kappa, "c_kappa": c, "I0": I0})


# ------------------------------------------------------------------ nodal set
@dataclass
class NodalReport:
    zero_cells: np.ndarray
    curve_components: int
    touches: list[set]
    slits: bool
    epsilon: float
    complement_betti: tuple[int, int]
    criterion: str = "first Betti number of Omega minus zero cells is 0"

    def to_dict(self) -> dict:
        return {"n_zero_cells": int(len(self.zero_cells)),
                "curve_components": self.curve_components,
                "touches": [sorted(t) for t in self.touches],
                "slits": self.slits, "epsilon": self.epsilon,
                "complement_betti": list(self.complement_betti),
                "criterion": self.criterion}


def nodal_set(u: np.ndarray, domain: Domain, epsilon: float = 0.05,
              phase: HalfFluxPhase | None = None) -> NodalReport:
    """Zero line of a (K-)real field.

    A cell is a zero cell when ``|u| < epsilon max|u|`` and it is an endpoint
    of an edge across which the real profile changes sign (signs corrected
    by ``sigma_e``).  Without ``phase`` the field is treated as real up to a
    constant phase.  Components use 8-connectivity; a component touches a
    boundary when one of its cells has an 8-neighbour outside Omega.
    """
    if not 0.0 < epsilon < 0.5:
        raise ValueError(f"epsilon must lie in (0, 0.5), got {epsilon}")
    t, hd = domain.omega_tail, domain.omega_head
    if phase is None:
        c = 0.5 * np.angle(np.sum(u * u)) if np.any(u != 0) else 0.0
        w = np.real(u * np.exp(-1j * c))
        sigma = np.ones(len(t))
    else:
        w = real_profile(u, phase)
        sigma = np.sign(phase.edge_sign)
    mod = np.abs(u)
    small = mod < epsilon * mod.max() if mod.max() > 0 else np.zeros(len(u), bool)
    change = sigma * w[t] * w[hd] < 0
    near = np.zeros(domain.n_omega, bool)
    near[t[change]] = True
    near[hd[change]] = True
    zero = small & near

    zmask = np.zeros((domain.nx, domain.ny), bool)
    cells = domain.omega_cells[zero]
    zmask[cells[:, 0], cells[:, 1]] = True
    comp, ncomp = ndimage.label(zmask, structure=np.ones((3, 3), bool))
    lab = domain.labels
    padded = np.pad(lab, 1, constant_values=EXTERIOR)
    touches = []
    for k in range(1, ncomp + 1):
        ii, jj = np.nonzero(comp == k)
        found = set()
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                nb = padded[ii + 1 + di, jj + 1 + dj]
                if np.any(nb == EXTERIOR):
                    found.add("outer")
                for hk in np.unique(nb[nb > OMEGA]):
                    found.add(f"hole_{hk - 1}")
        touches.append(found)
    rest = domain.omega_mask & ~zmask
    b0, b1 = betti_numbers(rest)
    return NodalReport(cells, int(ncomp), touches, b1 == 0 and b0 >= 1, float(epsilon), (b0, b1))
