"""Discrete vector calculus and gauge-covariant differences on a :class:`Domain`.

Field conventions (plain numpy arrays):

* order parameter ``u``: complex, one value per Omega cell (``domain.n_omega``)
* vector fields: real, one tangential component per dual edge of the filled
  domain (``domain.n_edges``); the normal component on boundary faces is zero
* magnetic fields / stream functions: real, one value per interior vertex
  (``domain.n_vertices``)
* cell scalars: one value per cell of the filled domain (``domain.n_tilde``)

The covariant derivative uses link variables ``U_e = exp(-i h A_e)`` on the
Omega edges, so that ``(U_e u_head - u_tail) / h`` is gauge covariant exactly.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
import scipy.sparse as sp

from .domain import Domain


def inner(domain: Domain, f: np.ndarray, g: np.ndarray) -> complex:
    """Weighted L2 inner product, conjugate-linear in the first slot."""
    return domain.cell_area * np.vdot(f, g)


def norm(domain: Domain, f: np.ndarray) -> float:
    return float(np.sqrt(domain.cell_area * np.vdot(f, f).real))


# ---------------------------------------------------------------- sampling
def sample_vector_field(domain: Domain, fn: Callable) -> np.ndarray:
    """Sample ``fn(x, y) -> (A1, A2)`` at edge midpoints, keeping the
    component tangential to each dual edge."""
    x, y = domain.edge_midpoints.T
    a1, a2 = fn(x, y)
    a1 = np.broadcast_to(a1, x.shape)
    a2 = np.broadcast_to(a2, x.shape)
    return np.where(domain.edge_orient == 0, a1, a2).astype(float)


def sample_vertices(domain: Domain, fn: Callable) -> np.ndarray:
    x, y = domain.vertex_coords.T
    return np.broadcast_to(np.asarray(fn(x, y), dtype=float), x.shape).copy()


def sample_cells(domain: Domain, fn: Callable, region: str = "omega") -> np.ndarray:
    x, y = domain.cell_centers(region).T
    return np.broadcast_to(np.asarray(fn(x, y)), x.shape).copy()


def exact_gradient(domain: Domain, theta: np.ndarray, region: str = "tilde") -> np.ndarray:
    """Edge integrals of grad(theta) for a cell-sampled single-valued theta,
    i.e. a vector field whose link phases gauge ``u -> u exp(i theta)`` exactly.
    Returns a field on all edges of the filled domain; with ``region="omega"``
    ``theta`` is given on Omega cells and non-Omega edges are left at zero."""
    if region == "tilde":
        return domain.grad_matrix("tilde") @ theta
    out = np.zeros(domain.n_edges)
    out[domain.omega_edge_ids] = domain.grad_matrix("omega") @ theta
    return out


# ---------------------------------------------------------- vector calculus
def curl(domain: Domain, A: np.ndarray) -> np.ndarray:
    """rot A = d1 A2 - d2 A1 at interior vertices."""
    return domain.rot_matrix @ A


def curl_adjoint(domain: Domain, f: np.ndarray) -> np.ndarray:
    """rot* f = (d2 f, -d1 f) on edges; ``f`` vanishes on boundary vertices."""
    return domain.rot_adjoint_matrix @ f


def gradient(domain: Domain, theta: np.ndarray, region: str = "tilde") -> np.ndarray:
    return domain.grad_matrix(region) @ theta


def divergence(domain: Domain, A: np.ndarray, region: str = "tilde") -> np.ndarray:
    """Flux divergence at cells; boundary faces carry zero normal flux.

    ``A`` lives on the edges of the filled domain; with ``region="omega"`` only
    the Omega edges are used (divergence of ``A`` restricted to Omega)."""
    if region == "omega":
        return -(domain.grad_matrix("omega").T @ A[domain.omega_edge_ids])
    return -(domain.grad_matrix("tilde").T @ A)


def hole_flux(domain: Domain, H: np.ndarray, hole: int) -> float:
    """(1/2pi) times the flux of a vertex-sampled field through hole ``hole``."""
    if not 0 <= hole < domain.n_holes:
        raise KeyError(f"unknown hole id {hole}")
    mask = domain.hole_vertex_masks[hole]
    return float(H[mask].sum() * domain.cell_area / (2 * np.pi))


# ------------------------------------------------------------ link variables
def link_phases(domain: Domain, A: np.ndarray) -> np.ndarray:
    """Unit-modulus link variables ``exp(-i h A_e)`` on the Omega edges."""
    return np.exp(-1j * domain.h * A[domain.omega_edge_ids])


def plaquette_holonomy(domain: Domain, A: np.ndarray) -> np.ndarray:
    """Product of link phases around every interior vertex, counter-clockwise."""
    return np.exp(-1j * domain.cell_area * curl(domain, A))


def covariant_derivative(domain: Domain, u: np.ndarray, links: np.ndarray) -> np.ndarray:
    """``(U_e u_head - u_tail) / h`` on each Omega edge."""
    return (links * u[domain.omega_head] - u[domain.omega_tail]) / domain.h


def kinetic_energy(domain: Domain, u: np.ndarray, links: np.ndarray) -> float:
    """Sum over Omega edges of ``|D_A u|^2 h^2``."""
    d = covariant_derivative(domain, u, links)
    return float(domain.cell_area * np.vdot(d, d).real)


def current(domain: Domain, u: np.ndarray, links: np.ndarray) -> np.ndarray:
    """Supercurrent ``Im(conj(u) (grad - iA) u)`` on edges of the filled domain
    (zero off Omega, i.e. already multiplied by the indicator of Omega)."""
    J = np.zeros(domain.n_edges)
    t, hd = domain.omega_tail, domain.omega_head
    J[domain.omega_edge_ids] = np.imag(np.conj(u[t]) * links * u[hd]) / domain.h
    return J


def magnetic_laplacian(domain: Domain, links: np.ndarray) -> sp.csr_matrix:
    """Neumann realisation of ``-(grad - iA)^2`` on Omega cells.

    Faces towards non-Omega cells are simply absent, which is the zero
    covariant-flux boundary condition.  The matrix is Hermitian and its
    quadratic form equals :func:`kinetic_energy` divided by ``h^2``.
    """
    n = domain.n_omega
    t, hd = domain.omega_tail, domain.omega_head
    ih2 = 1.0 / domain.cell_area
    deg = np.bincount(t, minlength=n) + np.bincount(hd, minlength=n)
    rows = np.concatenate([np.arange(n), t, hd])
    cols = np.concatenate([np.arange(n), hd, t])
    vals = np.concatenate([deg * ih2 + 0j, -links * ih2, -np.conj(links) * ih2])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def to_csv_rows(points: np.ndarray, values: np.ndarray) -> list[tuple]:
    """(x, y, value...) rows for plotting; complex values are split."""
    values = np.asarray(values)
    if np.iscomplexobj(values):
        return [(x, y, v.real, v.imag, abs(v)) for (x, y), v in zip(points, values)]
    return [(x, y, v) for (x, y), v in zip(points, values)]
