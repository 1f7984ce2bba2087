"""Masked Cartesian geometry for bounded planar domains with holes.

The domain lives on a uniform grid of square cells.  Each cell is labelled as
belonging to the superconductor ``Omega``, to one of its holes, or to the
exterior.  The filled domain (``Omega`` plus its holes) carries the vector
potential; the order parameter lives on ``Omega`` cells only.

Grid layout (staggered, mimetic)::

    cell centres      scalars u, theta, div A
    dual edges        one per pair of 4-adjacent cells; carry the tangential
                      component of A (x-edges: A_1, y-edges: A_2)
    vertices          rot A, stream functions psi, magnetic fields H

With this placement ``div o rot* == 0`` and ``rot o grad == 0`` hold exactly,
and ``rot`` / ``rot*`` are adjoint with respect to the uniform ``h**2``
quadrature weights.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy import ndimage

EXTERIOR = -1
OMEGA = 0

_FOUR = ndimage.generate_binary_structure(2, 1)
_EIGHT = ndimage.generate_binary_structure(2, 2)


class DomainError(ValueError):
    """Raised when a domain description is geometrically invalid."""


@dataclass(frozen=True)
class HoleSpec:
    """A hole: ``kind`` is ``"disk"`` (size = radius) or ``"rectangle"``
    (size = (width, height)); ``center`` is its centre."""

    kind: str
    center: tuple[float, float]
    size: float | tuple[float, float]

    def contains(self, x, y):
        cx, cy = self.center
        if self.kind == "disk":
            return (x - cx) ** 2 + (y - cy) ** 2 < float(self.size) ** 2
        if self.kind == "rectangle":
            w, hh = self.size
            return (np.abs(x - cx) < w / 2) & (np.abs(y - cy) < hh / 2)
        raise DomainError(f"unknown hole kind {self.kind!r}")

    def area(self) -> float:
        if self.kind == "disk":
            return math.pi * float(self.size) ** 2
        w, hh = self.size
        return w * hh


@dataclass(frozen=True)
class DomainSpec:
    """Geometric description of the domain.

    Parameters
    ----------
    box : (xmin, ymin, xmax, ymax)
        Bounding box of the grid.
    shape : str
        ``"rectangle"`` (the box itself), ``"disk"``, ``"annulus"`` or
        ``"rectangle-with-rectangular-holes"``.
    resolution : int
        Cells along the x side of the box.
    center, radius : disk / annulus outer circle.
    inner_radius, inner_center : annulus hole (the hole is appended to
        ``holes`` as ``hole_0``).
    holes : extra holes.
    """

    box: tuple[float, float, float, float]
    shape: str
    resolution: int
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 1.0
    inner_radius: float | None = None
    inner_center: tuple[float, float] | None = None
    holes: tuple[HoleSpec, ...] = field(default_factory=tuple)

    def all_holes(self) -> tuple[HoleSpec, ...]:
        holes = tuple(self.holes)
        if self.shape == "annulus":
            if self.inner_radius is None:
                raise DomainError("annulus requires inner_radius")
            c = self.inner_center if self.inner_center is not None else self.center
            holes = (HoleSpec("disk", tuple(c), float(self.inner_radius)),) + holes
        return holes

    def outer_contains(self, x, y):
        xmin, ymin, xmax, ymax = self.box
        if self.shape in ("rectangle", "rectangle-with-rectangular-holes"):
            return (x > xmin) & (x < xmax) & (y > ymin) & (y < ymax)
        if self.shape in ("disk", "annulus"):
            cx, cy = self.center
            return (x - cx) ** 2 + (y - cy) ** 2 < self.radius**2
        raise DomainError(f"unknown shape {self.shape!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["holes"] = [asdict(hs) for hs in self.holes]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DomainSpec":
        d = dict(d)
        holes = tuple(
            HoleSpec(hs["kind"], tuple(hs["center"]),
                     tuple(hs["size"]) if isinstance(hs["size"], (list, tuple)) else float(hs["size"]))
            for hs in d.pop("holes", ())
        )
        for key in ("box", "center", "inner_center"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(holes=holes, **d)


def _hole_distance(a: HoleSpec, b: HoleSpec) -> float:
    """Positive if the closed holes are disjoint (a lower bound on the gap)."""
    ax, ay = a.center
    bx, by = b.center
    if a.kind == "disk" and b.kind == "disk":
        return math.hypot(ax - bx, ay - by) - float(a.size) - float(b.size)
    if a.kind == "rectangle" and b.kind == "rectangle":
        dx = abs(ax - bx) - (a.size[0] + b.size[0]) / 2
        dy = abs(ay - by) - (a.size[1] + b.size[1]) / 2
        return max(dx, dy)
    disk, rect = (a, b) if a.kind == "disk" else (b, a)
    dx = max(abs(disk.center[0] - rect.center[0]) - rect.size[0] / 2, 0.0)
    dy = max(abs(disk.center[1] - rect.center[1]) - rect.size[1] / 2, 0.0)
    return math.hypot(dx, dy) - float(disk.size)


def _hole_inside_outer(spec: DomainSpec, hole: HoleSpec) -> bool:
    cx, cy = hole.center
    if hole.kind == "disk":
        r = float(hole.size)
        pts = [(cx + r * math.cos(t), cy + r * math.sin(t)) for t in np.linspace(0, 2 * math.pi, 64)]
        reach = r
    else:
        w, hh = hole.size
        pts = [(cx + sx * w / 2, cy + sy * hh / 2) for sx in (-1, 1) for sy in (-1, 1)]
        reach = math.hypot(w, hh) / 2
    if spec.shape in ("disk", "annulus"):
        ox, oy = spec.center
        return math.hypot(cx - ox, cy - oy) + reach < spec.radius
    xmin, ymin, xmax, ymax = spec.box
    return all(xmin < x < xmax and ymin < y < ymax for x, y in pts)


class Domain:
    """Discretised domain built from a :class:`DomainSpec`.

    Attributes
    ----------
    nx, ny, h : grid size and spacing.
    labels : int array (nx, ny); ``EXTERIOR``, ``OMEGA`` or ``k + 1`` for hole k.
    n_omega, n_tilde : number of cells in Omega and in the filled domain.
    n_edges : number of dual edges of the filled domain (a-space dimension).
    n_vertices : number of interior vertices of the filled domain.
    """

    def __init__(self, spec: DomainSpec, labels: np.ndarray):
        self.spec = spec
        xmin, ymin, xmax, ymax = spec.box
        self.origin = (float(xmin), float(ymin))
        self.nx, self.ny = labels.shape
        self.h = (xmax - xmin) / self.nx
        self.labels = labels
        self.labels.flags.writeable = False
        self.n_holes = int(labels.max()) if labels.max() > 0 else 0

        omega = labels == OMEGA
        tilde = labels >= OMEGA
        self.omega_mask = omega
        self.tilde_mask = tilde
        self.omega_index = np.full(labels.shape, -1, dtype=np.int64)
        self.omega_index[omega] = np.arange(omega.sum())
        self.tilde_index = np.full(labels.shape, -1, dtype=np.int64)
        self.tilde_index[tilde] = np.arange(tilde.sum())
        self.n_omega = int(omega.sum())
        self.n_tilde = int(tilde.sum())
        ii, jj = np.nonzero(tilde)
        self.tilde_cells = np.stack([ii, jj], axis=1)
        ii, jj = np.nonzero(omega)
        self.omega_cells = np.stack([ii, jj], axis=1)
        # Omega cells inside the tilde numbering
        self.omega_in_tilde = self.tilde_index[omega]

        self._build_edges()
        self._build_vertices()

    # ------------------------------------------------------------------ edges
    def _build_edges(self):
        lab = self.labels
        tilde = self.tilde_mask
        xe = tilde[:-1, :] & tilde[1:, :]
        ye = tilde[:, :-1] & tilde[:, 1:]
        xi, xj = np.nonzero(xe)
        yi, yj = np.nonzero(ye)
        tail = np.concatenate([np.stack([xi, xj], 1), np.stack([yi, yj], 1)])
        head = np.concatenate([np.stack([xi + 1, xj], 1), np.stack([yi, yj + 1], 1)])
        orient = np.concatenate([np.zeros(len(xi), int), np.ones(len(yi), int)])
        self.edge_tail_cell = tail
        self.edge_head_cell = head
        self.edge_orient = orient
        self.n_edges = len(orient)
        x0, y0 = self.origin
        h = self.h
        mid = (tail + head + 1.0) * 0.5 * h
        self.edge_midpoints = mid + np.array([x0, y0])
        self.edge_tail_t = self.tilde_index[tail[:, 0], tail[:, 1]]
        self.edge_head_t = self.tilde_index[head[:, 0], head[:, 1]]

        om = (lab[tail[:, 0], tail[:, 1]] == OMEGA) & (lab[head[:, 0], head[:, 1]] == OMEGA)
        self.omega_edge_ids = np.nonzero(om)[0]
        self.omega_tail = self.omega_index[tail[om, 0], tail[om, 1]]
        self.omega_head = self.omega_index[head[om, 0], head[om, 1]]
        self.n_omega_edges = len(self.omega_edge_ids)

        # lookup (orient, i, j) -> edge id, for vertex stencils
        self._xedge_id = np.full((self.nx, self.ny), -1, dtype=np.int64)
        self._yedge_id = np.full((self.nx, self.ny), -1, dtype=np.int64)
        nxe = len(xi)
        self._xedge_id[xi, xj] = np.arange(nxe)
        self._yedge_id[yi, yj] = nxe + np.arange(len(yi))

    # --------------------------------------------------------------- vertices
    def _build_vertices(self):
        t = self.tilde_mask
        inner = t[:-1, :-1] & t[1:, :-1] & t[:-1, 1:] & t[1:, 1:]
        vi, vj = np.nonzero(inner)
        vi = vi + 1
        vj = vj + 1
        self.vertices = np.stack([vi, vj], axis=1)
        self.n_vertices = len(vi)
        x0, y0 = self.origin
        self.vertex_coords = np.stack([x0 + vi * self.h, y0 + vj * self.h], axis=1)
        self.vertex_index = np.full((self.nx + 1, self.ny + 1), -1, dtype=np.int64)
        self.vertex_index[vi, vj] = np.arange(self.n_vertices)

        lab = self.labels
        around = np.stack([lab[vi - 1, vj - 1], lab[vi, vj - 1], lab[vi - 1, vj], lab[vi, vj]], axis=1)
        self.omega_vertex_mask = np.all(around == OMEGA, axis=1)
        self.hole_vertex_masks = [np.any(around == k + 1, axis=1) for k in range(self.n_holes)]

    # ------------------------------------------------------------- operators
    @cached_property
    def rot_adjoint_matrix(self) -> sp.csr_matrix:
        """rot* : vertex scalars -> edges, ``(d_y f, -d_x f)``."""
        h = self.h
        rows, cols, vals = [], [], []
        tail = self.edge_tail_cell
        for e in range(self.n_edges):
            i, j = tail[e]
            if self.edge_orient[e] == 0:
                # x-edge between vertices (i+1, j) and (i+1, j+1)
                ends = ((i + 1, j + 1, 1.0), (i + 1, j, -1.0))
            else:
                # y-edge between vertices (i, j+1) and (i+1, j+1)
                ends = ((i, j + 1, 1.0), (i + 1, j + 1, -1.0))
            for vi, vj, s in ends:
                v = self.vertex_index[vi, vj]
                if v >= 0:
                    rows.append(e)
                    cols.append(v)
                    vals.append(s / h)
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n_edges, self.n_vertices))

    @cached_property
    def rot_matrix(self) -> sp.csr_matrix:
        """rot : edges -> interior vertices (exact discrete Stokes)."""
        return self.rot_adjoint_matrix.T.tocsr()

    def grad_matrix(self, region: str = "tilde") -> sp.csr_matrix:
        """Cell scalars -> edges, ``(theta_head - theta_tail) / h``."""
        if region == "tilde":
            t, hd, ncell, ne = self.edge_tail_t, self.edge_head_t, self.n_tilde, self.n_edges
        elif region == "omega":
            t, hd, ncell, ne = self.omega_tail, self.omega_head, self.n_omega, self.n_omega_edges
        else:
            raise KeyError(f"unknown region {region!r}")
        rows = np.concatenate([np.arange(ne), np.arange(ne)])
        cols = np.concatenate([hd, t])
        vals = np.concatenate([np.ones(ne), -np.ones(ne)]) / self.h
        return sp.csr_matrix((vals, (rows, cols)), shape=(ne, ncell))

    @cached_property
    def vertex_laplacian(self) -> sp.csc_matrix:
        """-Delta on interior vertices with homogeneous Dirichlet data (= rot rot*)."""
        return (self.rot_matrix @ self.rot_adjoint_matrix).tocsc()

    def neumann_laplacian(self, region: str = "tilde") -> sp.csc_matrix:
        """-Delta on cells with zero-flux faces (= grad^T grad)."""
        g = self.grad_matrix(region)
        return (g.T @ g).tocsc()

    # -------------------------------------------------------------- geometry
    @property
    def cell_area(self) -> float:
        return self.h * self.h

    def cell_centers(self, region: str = "omega") -> np.ndarray:
        cells = self.omega_cells if region == "omega" else self.tilde_cells
        x0, y0 = self.origin
        return (cells + 0.5) * self.h + np.array([x0, y0])

    def region_ids(self) -> list[str]:
        return ["omega", "omega_tilde"] + [f"hole_{k}" for k in range(self.n_holes)]

    def region_mask(self, region: str) -> np.ndarray:
        if region == "omega":
            return self.omega_mask
        if region in ("omega_tilde", "tilde"):
            return self.tilde_mask
        if region.startswith("hole_"):
            k = int(region.split("_", 1)[1])
            if 0 <= k < self.n_holes:
                return self.labels == k + 1
        raise KeyError(f"unknown region {region!r}")

    @cached_property
    def boundary_faces(self) -> list[tuple[tuple[int, int], tuple[int, int], str]]:
        """Faces of Omega cells with a non-Omega neighbour.

        Each entry is ``((i, j), normal, boundary_id)`` where ``normal`` is the
        outward unit normal ``(+-1, 0)`` or ``(0, +-1)`` and ``boundary_id`` is
        ``"outer"`` or ``"hole_k"``.
        """
        faces = []
        lab = self.labels
        for i, j in self.omega_cells:
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                a, b = i + di, j + dj
                if 0 <= a < self.nx and 0 <= b < self.ny:
                    nb = lab[a, b]
                    if nb == OMEGA:
                        continue
                    bid = "outer" if nb == EXTERIOR else f"hole_{nb - 1}"
                else:
                    bid = "outer"
                faces.append(((int(i), int(j)), (di, dj), bid))
        return faces

    def face_segments(self, boundary_id: str) -> np.ndarray:
        """Oriented boundary segments ``(n, 2, 2)``; the enclosed region
        (hole, or Omega itself for ``"outer"``) lies on the left."""
        segs = []
        h = self.h
        x0, y0 = self.origin
        for (i, j), (di, dj), bid in self.boundary_faces:
            if bid != boundary_id:
                continue
            cx, cy = x0 + (i + 0.5) * h, y0 + (j + 0.5) * h
            mx, my = cx + di * h / 2, cy + dj * h / 2
            if bid == "outer":
                tx, ty = -dj, di
            else:
                tx, ty = dj, -di
            segs.append([[mx - tx * h / 2, my - ty * h / 2], [mx + tx * h / 2, my + ty * h / 2]])
        return np.asarray(segs)

    # ---------------------------------------------------------------- output
    def to_manifest(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "nx": self.nx,
            "ny": self.ny,
            "h": self.h,
            "n_omega": self.n_omega,
            "n_tilde": self.n_tilde,
            "n_edges": self.n_edges,
            "n_vertices": self.n_vertices,
            "n_holes": self.n_holes,
            "areas": {r: area(self, r) for r in self.region_ids()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_manifest(), indent=2)


def betti_numbers(mask: np.ndarray) -> tuple[int, int]:
    """Betti numbers (b0, b1) of the cell complex spanned by ``mask``.

    Cells are nodes, 4-adjacent pairs are edges and full 2x2 blocks are faces.
    """
    mask = np.asarray(mask, dtype=bool)
    _, b0 = ndimage.label(mask, structure=_FOUR)
    v = int(mask.sum())
    e = int((mask[:-1, :] & mask[1:, :]).sum() + (mask[:, :-1] & mask[:, 1:]).sum())
    f = int((mask[:-1, :-1] & mask[1:, :-1] & mask[:-1, 1:] & mask[1:, 1:]).sum())
    return int(b0), int(b0 - (v - e + f))


def build_domain(spec: DomainSpec) -> Domain:
    """Rasterise ``spec`` onto its grid and validate the result."""
    n = int(spec.resolution)
    if n < 8:
        raise DomainError(f"grid_resolution must be >= 8, got {n}")
    xmin, ymin, xmax, ymax = map(float, spec.box)
    if not (xmax > xmin and ymax > ymin):
        raise DomainError(f"degenerate bounding box {spec.box}")
    h = (xmax - xmin) / n
    ny_f = (ymax - ymin) / h
    ny = int(round(ny_f))
    if abs(ny - ny_f) > 1e-9 * max(1.0, ny_f):
        raise DomainError("box height must be an integer multiple of the cell size")

    holes = spec.all_holes()
    if spec.shape == "rectangle" and holes:
        raise DomainError("shape 'rectangle' takes no holes; use 'rectangle-with-rectangular-holes'")
    if spec.shape == "rectangle-with-rectangular-holes" and any(hs.kind != "rectangle" for hs in holes):
        raise DomainError("rectangle-with-rectangular-holes only accepts rectangular holes")
    for k, hs in enumerate(holes):
        if not _hole_inside_outer(spec, hs):
            raise DomainError(f"hole_{k} touches or crosses the outer boundary")
        for m in range(k):
            if _hole_distance(hs, holes[m]) <= 0:
                raise DomainError(f"hole_{k} overlaps hole_{m}")

    xc = xmin + (np.arange(n) + 0.5) * h
    yc = ymin + (np.arange(ny) + 0.5) * h
    X, Y = np.meshgrid(xc, yc, indexing="ij")
    labels = np.full((n, ny), EXTERIOR, dtype=np.int64)
    labels[spec.outer_contains(X, Y)] = OMEGA
    for k, hs in enumerate(holes):
        inside = hs.contains(X, Y) & (labels >= OMEGA)
        labels[inside] = k + 1

    omega = labels == OMEGA
    for k in range(len(holes)):
        hmask = labels == k + 1
        if not hmask.any():
            raise DomainError(f"hole_{k} is not resolved by the grid (resolution too small)")
        grown = ndimage.binary_dilation(hmask, structure=_EIGHT)
        if np.any(grown & (labels != OMEGA) & ~hmask):
            raise DomainError(f"hole_{k} is not separated from the exterior or another hole by Omega cells")
        if hmask[0, :].any() or hmask[-1, :].any() or hmask[:, 0].any() or hmask[:, -1].any():
            raise DomainError(f"hole_{k} touches the grid boundary")
        _, ncomp = ndimage.label(hmask, structure=_FOUR)
        if ncomp != 1:
            raise DomainError(f"hole_{k} is rasterised into {ncomp} pieces (resolution too small)")
    _, ncomp = ndimage.label(omega, structure=_FOUR)
    if ncomp != 1:
        raise DomainError(f"Omega cell graph has {ncomp} connected components (resolution too small)")
    return Domain(spec, labels)


def area(domain: Domain, region: str = "omega") -> float:
    """Quadrature area of ``omega``, ``omega_tilde`` or ``hole_k``."""
    return float(domain.region_mask(region).sum()) * domain.cell_area
