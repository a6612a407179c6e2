"""Uniform rectangular meshes of an axis-aligned box.

Numbering is row-major and deterministic:

* vertex ``(i, j)`` -> ``j * (nx + 1) + i``
* element ``(i, j)`` -> ``j * nx + i``, vertices listed counterclockwise
  starting at the lower-left corner
* horizontal edges first (``j * nx + i``), then vertical edges
  (``nx * (ny + 1) + j * (nx + 1) + i``)

Local edge ``k`` of an element joins local vertices ``k`` and ``k + 1 (mod 4)``,
so local edges are ordered bottom, right, top, left.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# outward unit normals of the local edges (bottom, right, top, left)
LOCAL_EDGE_NORMALS = np.array([[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])


@dataclass(frozen=True)
class Domain:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate domain {self}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    @classmethod
    def square(cls, a: float, b: float) -> "Domain":
        return cls(a, b, a, b)


@dataclass(frozen=True, eq=False)
class Mesh:
    domain: Domain
    nx: int
    ny: int
    vertices: np.ndarray = field(repr=False)
    elements: np.ndarray = field(repr=False)
    edges: np.ndarray = field(repr=False)
    edge_is_boundary: np.ndarray = field(repr=False)
    element_edges: np.ndarray = field(repr=False)
    edge_elements: np.ndarray = field(repr=False)
    edge_sides: np.ndarray = field(repr=False)

    @property
    def hx(self) -> float:
        return (self.domain.x_max - self.domain.x_min) / self.nx

    @property
    def hy(self) -> float:
        return (self.domain.y_max - self.domain.y_min) / self.ny

    @property
    def h(self) -> float:
        """Largest element side length."""
        return max(self.hx, self.hy)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.elements].mean(axis=1)

    @property
    def element_area(self) -> float:
        return self.hx * self.hy

    def vertex_grid_index(self, v):
        v = np.asarray(v)
        return v % (self.nx + 1), v // (self.nx + 1)

    def locate(self, x, y):
        """Element index containing each point (points on shared edges go to the upper/right cell)."""
        d = self.domain
        i = np.clip(np.floor((np.asarray(x) - d.x_min) / self.hx).astype(int), 0, self.nx - 1)
        j = np.clip(np.floor((np.asarray(y) - d.y_min) / self.hy).astype(int), 0, self.ny - 1)
        return j * self.nx + i


def build_uniform_mesh(domain: Domain, nx: int, ny: int) -> Mesh:
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError(f"element counts must be positive integers, got nx={nx}, ny={ny}")
    nx, ny = int(nx), int(ny)

    xs = np.linspace(domain.x_min, domain.x_max, nx + 1)
    ys = np.linspace(domain.y_min, domain.y_max, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny))
    ii, jj = ii.ravel(), jj.ravel()
    v00 = jj * (nx + 1) + ii
    elements = np.column_stack([v00, v00 + 1, v00 + nx + 2, v00 + nx + 1])

    nh = nx * (ny + 1)
    hi, hj = np.meshgrid(np.arange(nx), np.arange(ny + 1))
    hv = (hj * (nx + 1) + hi).ravel()
    horizontal = np.column_stack([hv, hv + 1])
    vi, vj = np.meshgrid(np.arange(nx + 1), np.arange(ny))
    vv = (vj * (nx + 1) + vi).ravel()
    vertical = np.column_stack([vv, vv + nx + 1])
    edges = np.vstack([horizontal, vertical])

    h_boundary = ((hj == 0) | (hj == ny)).ravel()
    v_boundary = ((vi == 0) | (vi == nx)).ravel()
    edge_is_boundary = np.concatenate([h_boundary, v_boundary])

    bottom = jj * nx + ii
    top = (jj + 1) * nx + ii
    left = nh + jj * (nx + 1) + ii
    right = left + 1
    element_edges = np.column_stack([bottom, right, top, left])

    n_edges = edges.shape[0]
    edge_elements = -np.ones((n_edges, 2), dtype=int)
    edge_sides = -np.ones((n_edges, 2), dtype=int)
    count = np.zeros(n_edges, dtype=int)
    for k in range(4):
        e_idx = element_edges[:, k]
        slot = count[e_idx]
        edge_elements[e_idx, slot] = np.arange(nx * ny)
        edge_sides[e_idx, slot] = k
        count[e_idx] += 1

    return Mesh(
        domain=domain,
        nx=nx,
        ny=ny,
        vertices=vertices,
        elements=elements,
        edges=edges,
        edge_is_boundary=edge_is_boundary,
        element_edges=element_edges,
        edge_elements=edge_elements,
        edge_sides=edge_sides,
    )


def reference_map(mesh: Mesh, element, ref_point) -> np.ndarray:
    """Map a point of [-1, 1]^2 into a physical element (affine, Jacobian diag(hx/2, hy/2))."""
    element = np.asarray(element)
    if np.any(element < 0) or np.any(element >= mesh.n_elements):
        raise IndexError(f"element index out of range: {element}")
    ref = np.asarray(ref_point, dtype=float)
    c = mesh.vertices[mesh.elements[element]].mean(axis=-2)
    return c + ref * np.array([mesh.hx / 2.0, mesh.hy / 2.0])
