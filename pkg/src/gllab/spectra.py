"""Neumann magnetic Laplacian on Omega and its lowest eigenpairs."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import calculus
from .domain import Domain
from .gauge import ExternalField, GaugeData

logger = logging.getLogger(__name__)

GAP_TOL = 1e-6
FLUX_TOL = 1e-6
DENSE_LIMIT = 4096


class EigenSolverError(RuntimeError):
    def __init__(self, msg: str, residuals=None):
        super().__init__(msg)
        self.residuals = list(residuals) if residuals is not None else []


@dataclass
class MagneticOperator:
    """``-(grad - i A_e)^2`` on Omega cells with zero covariant flux on the boundary.

    ``matrix`` is the sparse Hermitian stencil; ``links`` are the link
    variables it was built from.
    """

    matrix: sp.csr_matrix
    links: np.ndarray
    domain: Domain
    gauge: GaugeData
    _factors: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.matrix @ u

    def quadratic_form(self, u: np.ndarray) -> float:
        return float(calculus.inner(self.domain, u, self.matrix @ u).real)

    def shifted_solve(self, b: np.ndarray, sigma: float) -> np.ndarray:
        """Solve ``(H + sigma) x = b``; factorisations are cached per shift."""
        if sigma not in self._factors:
            A = (self.matrix + sigma * sp.identity(self.n, format="csr")).tocsc()
            self._factors[sigma] = spla.splu(A)
        lu = self._factors[sigma]
        if b.ndim == 1:
            return lu.solve(np.asarray(b, dtype=complex))
        return lu.solve(np.ascontiguousarray(b, dtype=complex))

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def assemble(gauge: GaugeData, domain: Domain, a: np.ndarray | None = None) -> MagneticOperator:
    """Build the operator for ``A_e`` (plus an optional perturbation ``a``)."""
    links = gauge.links(domain, a)
    return MagneticOperator(calculus.magnetic_laplacian(domain, links), links, domain, gauge)


@dataclass
class Spectrum:
    """Lowest eigenpairs.  ``u1`` is L2-normalised with the quadrature weight;
    its global phase is fixed deterministically (see ``_normalise``)."""

    eigenvalues: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    iterations: int
    method: str
    domain: Domain = field(repr=False)
    gap_tol: float = GAP_TOL

    @property
    def lambda1(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda2(self) -> float:
        return float(self.eigenvalues[1])

    @property
    def u1(self) -> np.ndarray:
        return self.vectors[:, 0]

    @property
    def gap(self) -> float:
        return self.lambda2 - self.lambda1

    @property
    def simple(self) -> bool:
        return self.gap / max(self.lambda1, 1.0) > self.gap_tol

    @property
    def flag(self) -> str | None:
        return None if self.simple else "near-degenerate"

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "gap": self.gap,
            "simple": self.simple,
            "flag": self.flag,
            "residuals": [float(r) for r in self.residuals],
            "iterations": self.iterations,
            "method": self.method,
        }


def _normalise(domain: Domain, X: np.ndarray) -> np.ndarray:
    """L2-normalise columns and fix their phase so that ``sum_j r_j x_j`` is
    real positive for the ramp ``r_j = 1 + j/n``; the ramp breaks the ties a
    plain argmax would hit on symmetric domains."""
    X = X / (np.linalg.norm(X, axis=0) * domain.h)
    ramp = 1.0 + np.arange(X.shape[0]) / X.shape[0]
    for j in range(X.shape[1]):
        s = ramp @ X[:, j]
        if abs(s) < 1e-8 * np.sum(np.abs(X[:, j])):
            m = np.argmax(np.abs(X[:, j]))
            s = X[m, j]
        X[:, j] *= np.conj(s) / abs(s)
    return X


def _residuals(op: MagneticOperator, vals, X) -> np.ndarray:
    R = op.matrix @ X - X * vals
    return np.linalg.norm(R, axis=0) / np.linalg.norm(X, axis=0)


def dense_spectrum(op: MagneticOperator, k: int = 2) -> Spectrum:
    """Full dense eigensolve; the oracle for small grids."""
    if op.n > DENSE_LIMIT:
        raise ValueError(f"dense eigensolve refused for {op.n} unknowns (limit {DENSE_LIMIT})")
    vals, vecs = sla.eigh(op.dense(), subset_by_index=[0, k - 1])
    vecs = _normalise(op.domain, vecs)
    return Spectrum(vals, vecs, _residuals(op, vals, vecs), 1, "dense", op.domain)


def ground_state(op: MagneticOperator, k: int = 2, tol: float = 1e-11,
                 maxiter: int = 1000, sigma: float = 1.0, seed: int = 0,
                 method: str = "subspace") -> Spectrum:
    """Lowest ``k`` eigenpairs by subspace inverse iteration.

    Each sweep applies ``(H + sigma)^{-1}`` (sparse LU, factorised once) to a
    block of ``max(2k, k + 4)`` vectors, then performs a Rayleigh-Ritz step.
    ``H`` is positive semidefinite, so any ``sigma > 0`` keeps the shifted
    operator definite.  Converged when every wanted residual
    ``||H x - theta x|| / ||x||`` is below ``tol * max(1, theta)``.
    """
    if k < 2:
        raise ValueError("k must be >= 2 (the gap needs lambda2)")
    if method == "dense":
        return dense_spectrum(op, k)
    n = op.n
    m = min(max(2 * k, k + 4), n)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))
    X, _ = np.linalg.qr(X)
    res = np.full(k, np.inf)
    for it in range(1, maxiter + 1):
        Y = op.shifted_solve(X, sigma)
        Y, _ = np.linalg.qr(Y)
        HY = op.matrix @ Y
        S = Y.conj().T @ HY
        theta, V = np.linalg.eigh(0.5 * (S + S.conj().T))
        X = Y @ V
        HX = HY @ V
        res = np.linalg.norm(HX[:, :k] - X[:, :k] * theta[:k], axis=0)
        if np.all(res <= tol * np.maximum(1.0, np.abs(theta[:k]))):
            break
    else:
        raise EigenSolverError("inverse iteration did not converge", res)
    vecs = _normalise(op.domain, X[:, :k].copy())
    vals = theta[:k].copy()
    logger.debug("ground_state: %d sweeps, lambda=%s", it, vals)
    return Spectrum(vals, vecs, res, it, "subspace-inverse-iteration", op.domain)


@dataclass
class FluxVerdict:
    positive: bool
    reason: str

    def __bool__(self) -> bool:
        return self.positive


def flux_criterion(gauge: GaugeData, H: ExternalField, domain: Domain,
                   tol: float = FLUX_TOL) -> FluxVerdict:
    """Predict whether the lowest eigenvalue is positive.

    Positive exactly when the field does not vanish identically on Omega or
    the circulation of ``A_e`` around some hole, divided by ``2 pi``, is not
    an integer.
    """
    if np.any(np.abs(H.H[domain.omega_vertex_mask]) > tol):
        return FluxVerdict(True, "field in Omega")
    for k, phi in enumerate(gauge.hole_fluxes):
        if abs(phi - round(phi)) > tol:
            return FluxVerdict(True, f"non-integer circulation around hole_{k} ({phi:.6g})")
    return FluxVerdict(False, "no field in Omega and all hole circulations integer")
