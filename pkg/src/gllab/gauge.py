"""External potentials, Coulomb gauge fixing and curl inversion.

All potentials live on the filled domain (Omega plus its holes): the field
energy of the problem reduces to that set, so nothing outside it is
discretised.  Every potential built here has the form ``rot* psi`` with
``psi = 0`` on the boundary vertices, which puts it in the Coulomb slice
(divergence free, zero normal component) by construction.
"""

from __future__ import annotations

import logging
import weakref
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import RegularGridInterpolator

from . import calculus
from .domain import Domain

logger = logging.getLogger(__name__)

CG_TOL = 1e-10
CG_MAXITER = 100_000


class SolverError(RuntimeError):
    """A linear solve failed to converge; ``history`` holds residual norms."""

    def __init__(self, msg: str, history: list[float] | None = None):
        super().__init__(msg)
        self.history = history or []


# ------------------------------------------------------------ linear solves
_FACTORS: "weakref.WeakKeyDictionary[Domain, dict]" = weakref.WeakKeyDictionary()


def _cache(domain: Domain) -> dict:
    return _FACTORS.setdefault(domain, {})


def _cg(A, b, what: str) -> np.ndarray:
    history: list[float] = []
    bn = np.linalg.norm(b)
    if bn == 0:
        return np.zeros_like(b)

    def cb(xk):
        history.append(float(np.linalg.norm(A @ xk - b) / bn))

    x, info = spla.cg(A, b, rtol=CG_TOL, atol=0.0, maxiter=CG_MAXITER, callback=cb)
    if info != 0:
        raise SolverError(f"{what}: conjugate gradients did not converge", history)
    return x


def solve_dirichlet(domain: Domain, rhs: np.ndarray, method: str = "direct") -> np.ndarray:
    """Solve ``-Delta psi = rhs`` on interior vertices, ``psi = 0`` on the rest."""
    if domain.n_vertices == 0:
        return np.zeros(0)
    if method == "cg":
        return _cg(domain.vertex_laplacian, rhs, "Dirichlet Poisson")
    c = _cache(domain)
    if "dirichlet" not in c:
        c["dirichlet"] = spla.splu(domain.vertex_laplacian)
    return c["dirichlet"].solve(np.asarray(rhs, dtype=float))


def solve_neumann(domain: Domain, rhs: np.ndarray, region: str = "tilde",
                  method: str = "direct") -> np.ndarray:
    """Zero-mean solution of ``-Delta theta = rhs`` with zero normal flux.

    ``rhs`` is first made orthogonal to constants (the compatibility
    condition); the constant null space is fixed by the zero-mean constraint.
    """
    rhs = np.asarray(rhs, dtype=float)
    rhs = rhs - rhs.mean()
    L = domain.neumann_laplacian(region)
    n = L.shape[0]
    if method == "cg":
        theta = _cg(L, rhs, "Neumann Poisson")
        return theta - theta.mean()
    c = _cache(domain)
    key = f"neumann_{region}"
    if key not in c:
        ones = sp.csc_matrix(np.ones((n, 1)))
        bordered = sp.bmat([[L, ones], [ones.T, None]], format="csc")
        c[key] = spla.splu(bordered)
    sol = c[key].solve(np.concatenate([rhs, [0.0]]))
    return sol[:n]


# ----------------------------------------------------------------- fields
@dataclass
class ExternalField:
    """Applied magnetic field sampled at the interior vertices of the filled
    domain.  ``description`` records the named profile and its parameters."""

    H: np.ndarray
    description: dict = field(default_factory=dict)

    def flux(self, domain: Domain, hole: int) -> float:
        return calculus.hole_flux(domain, self.H, hole)

    def vanishes_in_omega(self, domain: Domain, tol: float = 1e-10) -> bool:
        return bool(np.all(np.abs(self.H[domain.omega_vertex_mask]) <= tol))

    def l2_squared(self, domain: Domain) -> float:
        """Quadrature of ``H**2`` over the filled domain."""
        return float(np.sum(self.H**2) * domain.cell_area)


def uniform_in_hole(domain: Domain, fluxes) -> ExternalField:
    """Field uniform inside each hole with flux ``2 pi * fluxes[k]``, zero on Omega."""
    fluxes = list(np.atleast_1d(fluxes).astype(float))
    if len(fluxes) != domain.n_holes:
        raise ValueError(f"expected {domain.n_holes} hole fluxes, got {len(fluxes)}")
    H = np.zeros(domain.n_vertices)
    for k, phi in enumerate(fluxes):
        mask = domain.hole_vertex_masks[k]
        H[mask] = 2 * np.pi * phi / (mask.sum() * domain.cell_area)
    return ExternalField(H, {"profile": "uniform-in-hole", "fluxes": fluxes})


def uniform_everywhere(domain: Domain, value: float) -> ExternalField:
    H = np.full(domain.n_vertices, float(value))
    return ExternalField(H, {"profile": "uniform-everywhere", "value": float(value)})


def annular_ring(domain: Domain, value: float, r_in: float, r_out: float,
                 center=(0.0, 0.0)) -> ExternalField:
    x, y = domain.vertex_coords.T
    r = np.hypot(x - center[0], y - center[1])
    H = np.where((r >= r_in) & (r <= r_out), float(value), 0.0)
    return ExternalField(H, {"profile": "annular-ring", "value": float(value),
                             "r_in": r_in, "r_out": r_out, "center": list(center)})


def custom_field(domain: Domain, values) -> ExternalField:
    """Field from a callable ``f(x, y)`` or from explicit vertex values."""
    if callable(values):
        H = calculus.sample_vertices(domain, values)
    else:
        H = np.asarray(values, dtype=float)
        if H.shape != (domain.n_vertices,):
            raise ValueError("custom field must have one value per interior vertex")
    return ExternalField(H, {"profile": "custom"})


def make_field(domain: Domain, profile: str, **params) -> ExternalField:
    """Build a named field profile (used by the configuration layer)."""
    if profile == "uniform-in-hole":
        return uniform_in_hole(domain, params["fluxes"])
    if profile == "uniform-everywhere":
        return uniform_everywhere(domain, params["value"])
    if profile == "annular-ring":
        return annular_ring(domain, params["value"], params["r_in"], params["r_out"],
                            tuple(params.get("center", (0.0, 0.0))))
    if profile == "zero":
        return ExternalField(np.zeros(domain.n_vertices), {"profile": "zero"})
    raise KeyError(f"unknown field profile {profile!r}")


@dataclass
class GaugeData:
    """External potential on the edges of the filled domain.

    ``hole_fluxes`` are circulations of ``A_e`` around each hole divided by
    ``2 pi``; ``coulomb_residuals`` = (||div A_e||, max |A_e . nu| on the
    boundary of the filled domain, ||rot A_e - H_e||).
    """

    A_e: np.ndarray
    H: np.ndarray
    hole_fluxes: list[float]
    coulomb_residuals: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def links(self, domain: Domain, a: np.ndarray | None = None) -> np.ndarray:
        A = self.A_e if a is None else self.A_e + a
        return calculus.link_phases(domain, A)

    def gauge_transform(self, domain: Domain, theta: np.ndarray) -> "GaugeData":
        """Potential ``A_e + grad(theta)`` for a cell-sampled ``theta`` on the
        filled domain (exact edge integrals; same field and fluxes)."""
        A = self.A_e + calculus.exact_gradient(domain, theta, "tilde")
        return GaugeData(A, self.H.copy(), list(self.hole_fluxes),
                         (float(np.linalg.norm(calculus.divergence(domain, A))), 0.0,
                          self.coulomb_residuals[2]))


def circulations(domain: Domain, A: np.ndarray) -> list[float]:
    """(1/2pi) circulation of ``A`` around each hole (discrete Stokes)."""
    rot = calculus.curl(domain, A)
    return [calculus.hole_flux(domain, rot, k) for k in range(domain.n_holes)]


def gauge_from_potential(domain: Domain, A: np.ndarray) -> GaugeData:
    """Wrap an arbitrary edge potential (e.g. a hand-built gauge) as GaugeData."""
    A = np.asarray(A, dtype=float)
    H = calculus.curl(domain, A)
    div = calculus.divergence(domain, A)
    return GaugeData(A, H, circulations(domain, A),
                     (float(np.sqrt(domain.cell_area) * np.linalg.norm(div)), 0.0, 0.0))


def external_potential(field_: ExternalField, domain: Domain, method: str = "direct") -> GaugeData:
    """Coulomb-gauge potential with ``rot A_e = H_e`` on the filled domain.

    ``A_e = rot* psi`` where ``-Delta psi = H_e`` with ``psi = 0`` on the
    boundary of the filled domain.
    """
    H = np.asarray(field_.H, dtype=float)
    psi = solve_dirichlet(domain, H, method)
    A = calculus.curl_adjoint(domain, psi)
    div = calculus.divergence(domain, A)
    rot_res = calculus.curl(domain, A) - H
    res = (float(np.sqrt(domain.cell_area) * np.linalg.norm(div)), 0.0,
           float(np.sqrt(domain.cell_area) * np.linalg.norm(rot_res)))
    logger.debug("external potential residuals %s", res)
    return GaugeData(A, H.copy(), circulations(domain, A), res)


def coulomb_project(A: np.ndarray, domain: Domain, region: str = "tilde",
                    method: str = "direct") -> np.ndarray:
    """Gauge-transform ``A`` into ``div A = 0`` with zero normal component.

    Solves ``Delta theta = -div A`` with zero Neumann data (mean of theta
    fixed to zero) and returns ``A + grad theta``.  For ``region="omega"``
    only the Omega edges are changed.
    """
    A = np.asarray(A, dtype=float)
    div = calculus.divergence(domain, A, region)
    theta = solve_neumann(domain, div, region, method)
    out = A.copy()
    if region == "omega":
        out[domain.omega_edge_ids] += domain.grad_matrix("omega") @ theta
    else:
        out += domain.grad_matrix("tilde") @ theta
    return out


def curl_inverse(b: np.ndarray, domain: Domain, method: str = "direct") -> np.ndarray:
    """The unique Coulomb-slice field with ``rot a = b`` on the filled domain."""
    return calculus.curl_adjoint(domain, solve_dirichlet(domain, b, method))


def laplace_inverse_coulomb(J: np.ndarray, domain: Domain) -> np.ndarray:
    """``L^{-1} P J`` where ``L = rot* rot`` on the Coulomb slice and ``P`` is
    the orthogonal projection onto that slice.

    With ``J = rot* chi + grad(.)`` one has ``rot J = -Delta chi``; the answer
    is ``rot* psi`` with ``-Delta psi = chi``.
    """
    chi = solve_dirichlet(domain, calculus.curl(domain, J))
    return calculus.curl_adjoint(domain, solve_dirichlet(domain, chi))


def coulomb_part(J: np.ndarray, domain: Domain) -> np.ndarray:
    """Orthogonal projection of an edge field onto the Coulomb slice."""
    chi = solve_dirichlet(domain, calculus.curl(domain, J))
    return calculus.curl_adjoint(domain, chi)


def h1_norm(domain: Domain, a: np.ndarray) -> float:
    """Discrete H1 norm ``(||a||^2 + ||rot a||^2 + ||div a||^2)^(1/2)``; for
    tangential fields this controls the full gradient."""
    w = domain.cell_area
    s = w * (a @ a)
    s += w * np.sum(calculus.curl(domain, a) ** 2)
    s += w * np.sum(calculus.divergence(domain, a) ** 2)
    return float(np.sqrt(s))


def transversal_gauge(b, domain: Domain, center=(0.0, 0.0), inner_radius: float = 0.0,
                      check_support: bool = True, order: int = 24) -> np.ndarray:
    """Radial-gauge potential ``a(x) = int_0^1 s b(c + s (x - c)) ds * (-(y-c_y), x-c_x)``.

    ``b`` is a callable ``b(x, y)`` or interior-vertex values (interpolated
    bilinearly, zero outside the filled domain).  When ``check_support`` is
    set, ``b`` must vanish on the disk of radius ``inner_radius`` about
    ``center``; the returned field then vanishes there too.
    """
    cx, cy = center
    if callable(b):
        fn = b
        vals_in_disk = None
    else:
        vals = np.asarray(b, dtype=float)
        grid = np.zeros((domain.nx + 1, domain.ny + 1))
        vi, vj = domain.vertices.T
        grid[vi, vj] = vals
        x0, y0 = domain.origin
        xs = x0 + np.arange(domain.nx + 1) * domain.h
        ys = y0 + np.arange(domain.ny + 1) * domain.h
        interp = RegularGridInterpolator((xs, ys), grid, bounds_error=False, fill_value=0.0)

        def fn(x, y):
            return interp(np.stack([x, y], axis=-1))

        vals_in_disk = vals
    if check_support and inner_radius > 0:
        x, y = domain.vertex_coords.T
        inside = np.hypot(x - cx, y - cy) < inner_radius
        bv = vals_in_disk if vals_in_disk is not None else calculus.sample_vertices(domain, fn)
        if np.any(np.abs(bv[inside]) > 1e-12):
            raise ValueError("b does not vanish on the inner disk")
    nodes, weights = leggauss(order)
    s = 0.5 * (nodes + 1.0)
    w = 0.5 * weights
    x, y = domain.edge_midpoints.T
    dx, dy = x - cx, y - cy
    radial = np.zeros_like(x)
    for sk, wk in zip(s, w):
        radial += wk * sk * np.asarray(fn(cx + sk * dx, cy + sk * dy), dtype=float)
    if check_support and inner_radius > 0:
        radial[np.hypot(dx, dy) < inner_radius] = 0.0
    return np.where(domain.edge_orient == 0, -dy * radial, dx * radial)


def field_callable(fn: Callable) -> Callable:
    return fn
