"""Conforming Q11 and nonconforming rotated-Q1 (EQ1rot) element spaces.

Reference element is [-1, 1]^2 with coordinates (xi, eta).

Q11 local DOFs are the four corners, counterclockwise from (-1, -1).
EQ1rot local DOFs are the edge means over bottom, right, top, left, followed by
the cell mean; the basis below is dual to those five functionals.

Homogeneous Dirichlet data are imposed by elimination: eliminated local DOFs
carry the marker -1 in ``DofMap.element_dofs`` and value 0.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from .mesh import Mesh

Field = np.ndarray  # complex coefficient vector over a DofMap


class SpaceKind(enum.Enum):
    CONFORMING_Q11 = "conforming"
    NONCONFORMING_EQ1ROT = "nonconforming"

    @classmethod
    def parse(cls, value) -> "SpaceKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {
            "conforming": cls.CONFORMING_Q11, "q11": cls.CONFORMING_Q11, "c": cls.CONFORMING_Q11,
            "nonconforming": cls.NONCONFORMING_EQ1ROT, "eq1rot": cls.NONCONFORMING_EQ1ROT,
            "nc": cls.NONCONFORMING_EQ1ROT,
        }
        if key not in aliases:
            raise ValueError(f"unknown space kind {value!r}")
        return aliases[key]

    @property
    def n_local(self) -> int:
        return 4 if self is SpaceKind.CONFORMING_Q11 else 5


# ---------------------------------------------------------------------------
# scalar fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalarField2D:
    """Vectorized complex field with optional analytic derivatives.

    ``grad(x, y)`` returns ``(f_x, f_y)``; ``hess(x, y)`` returns
    ``(f_xx, f_xy, f_yy)``. All callables must broadcast over arrays.
    """

    value: Callable
    grad: Optional[Callable] = None
    hess: Optional[Callable] = None
    laplacian: Optional[Callable] = None
    name: str = ""

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.broadcast_to(np.asarray(self.value(x, y)), np.broadcast(x, y).shape)

    def gradient(self, x, y):
        if self.grad is None:
            raise ValueError(f"field {self.name or self.value!r} has no gradient callable")
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast(x, y).shape
        gx, gy = self.grad(x, y)
        return np.broadcast_to(np.asarray(gx), shape), np.broadcast_to(np.asarray(gy), shape)

    def hessian(self, x, y):
        if self.hess is None:
            raise ValueError(f"field {self.name or self.value!r} has no Hessian callable")
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast(x, y).shape
        return tuple(np.broadcast_to(np.asarray(h), shape) for h in self.hess(x, y))

    def laplace(self, x, y):
        if self.laplacian is not None:
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            return np.broadcast_to(np.asarray(self.laplacian(x, y)), np.broadcast(x, y).shape)
        hxx, _, hyy = self.hessian(x, y)
        return hxx + hyy

    @classmethod
    def constant(cls, c: complex) -> "ScalarField2D":
        zero = lambda x, y: np.zeros(np.broadcast(x, y).shape)
        return cls(
            value=lambda x, y: np.full(np.broadcast(x, y).shape, c),
            grad=lambda x, y: (zero(x, y), zero(x, y)),
            hess=lambda x, y: (zero(x, y), zero(x, y), zero(x, y)),
            name=f"const({c})",
        )


def check_derivatives(f: ScalarField2D, points, step: float = 1e-6, tol: float = 1e-6) -> float:
    """Largest relative mismatch between analytic and central-difference derivatives.

    Raises ValueError if it exceeds ``tol``. Only the callables present are checked.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = pts[:, 0], pts[:, 1]
    worst = 0.0

    def rel(a, b):
        return np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b)))

    if f.grad is not None:
        gx, gy = f.gradient(x, y)
        fdx = (f(x + step, y) - f(x - step, y)) / (2 * step)
        fdy = (f(x, y + step) - f(x, y - step)) / (2 * step)
        worst = max(worst, rel(gx, fdx), rel(gy, fdy))
    if f.hess is not None and f.grad is not None:
        hxx, hxy, hyy = f.hessian(x, y)
        gxp, gyp = f.gradient(x + step, y)
        gxm, gym = f.gradient(x - step, y)
        gxq, gyq = f.gradient(x, y + step)
        gxr, gyr = f.gradient(x, y - step)
        worst = max(
            worst,
            rel(hxx, (gxp - gxm) / (2 * step)),
            rel(hxy, (gyp - gym) / (2 * step)),
            rel(hxy, (gxq - gxr) / (2 * step)),
            rel(hyy, (gyq - gyr) / (2 * step)),
        )
    if f.laplacian is not None and f.hess is not None:
        hxx, _, hyy = f.hessian(x, y)
        worst = max(worst, rel(f.laplace(x, y), hxx + hyy))
    if worst > tol:
        raise ValueError(f"derivative callables of {f.name or 'field'} inconsistent: mismatch {worst:.3e}")
    return worst


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Gauss-Legendre rule; ``points`` are (nq, 2) for cells and (nq,) for edges."""

    kind: str
    order: int
    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def degree(self) -> int:
        """Per-axis polynomial degree integrated exactly."""
        return 2 * self.order - 1

    @property
    def n_points(self) -> int:
        return self.weights.shape[0]


_SUPPORTED_ORDERS = (2, 3, 4, 5)


def quadrature(kind: str = "cell", order: int = 3) -> QuadratureRule:
    if order not in _SUPPORTED_ORDERS:
        raise ValueError(f"unsupported quadrature order {order}; choose from {_SUPPORTED_ORDERS}")
    t, w = np.polynomial.legendre.leggauss(order)
    if kind == "edge":
        return QuadratureRule("edge", order, t, w)
    if kind != "cell":
        raise ValueError(f"quadrature kind must be 'cell' or 'edge', got {kind!r}")
    # xi varies fastest
    xi, eta = np.meshgrid(t, t)
    wx, wy = np.meshgrid(w, w)
    return QuadratureRule("cell", order, np.column_stack([xi.ravel(), eta.ravel()]), (wx * wy).ravel())


# ---------------------------------------------------------------------------
# reference bases
# ---------------------------------------------------------------------------

_Q11_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


def basis_table(kind: SpaceKind, ref_points):
    """Values (npts, nb) and reference gradients (npts, nb, 2) of all local basis functions."""
    kind = SpaceKind.parse(kind)
    p = np.atleast_2d(np.asarray(ref_points, dtype=float))
    xi, eta = p[:, 0], p[:, 1]
    n = p.shape[0]
    if kind is SpaceKind.CONFORMING_Q11:
        cx, cy = _Q11_CORNERS[:, 0], _Q11_CORNERS[:, 1]
        fx = 1.0 + np.outer(xi, cx)
        fy = 1.0 + np.outer(eta, cy)
        val = 0.25 * fx * fy
        grad = np.empty((n, 4, 2))
        grad[..., 0] = 0.25 * cx * fy
        grad[..., 1] = 0.25 * fx * cy
        return val, grad

    xi2, eta2 = xi * xi, eta * eta
    val = np.column_stack([
        0.75 * eta2 - 0.5 * eta - 0.25,
        0.75 * xi2 + 0.5 * xi - 0.25,
        0.75 * eta2 + 0.5 * eta - 0.25,
        0.75 * xi2 - 0.5 * xi - 0.25,
        2.0 - 1.5 * xi2 - 1.5 * eta2,
    ])
    z = np.zeros(n)
    grad = np.empty((n, 5, 2))
    grad[:, :, 0] = np.column_stack([z, 1.5 * xi + 0.5, z, 1.5 * xi - 0.5, -3.0 * xi])
    grad[:, :, 1] = np.column_stack([1.5 * eta - 0.5, z, 1.5 * eta + 0.5, z, -3.0 * eta])
    return val, grad


def local_basis(kind: SpaceKind, local_index: int, ref_point):
    """Value and reference gradient of one local basis function at one point."""
    kind = SpaceKind.parse(kind)
    if not 0 <= local_index < kind.n_local:
        raise IndexError(f"local index {local_index} out of range for {kind.value} space")
    val, grad = basis_table(kind, np.asarray(ref_point, dtype=float).reshape(1, 2))
    return float(val[0, local_index]), grad[0, local_index].copy()


def edge_ref_points(side: int, t):
    """Reference-square points on local side ``side`` (bottom, right, top, left) at parameters t."""
    t = np.asarray(t, dtype=float)
    one = np.ones_like(t)
    return {
        0: np.column_stack([t, -one]),
        1: np.column_stack([one, t]),
        2: np.column_stack([t, one]),
        3: np.column_stack([-one, t]),
    }[side]


# ---------------------------------------------------------------------------
# DOF maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DofMap:
    """Global numbering with homogeneous Dirichlet elimination.

    Q11: interior vertices in vertex order. EQ1rot: interior edges in edge
    order, then every cell. ``entity_dof`` maps each vertex (Q11) or each edge
    (EQ1rot) to its global index or -1 when eliminated.
    """

    kind: SpaceKind
    mesh: Mesh
    n_dofs: int
    element_dofs: np.ndarray = field(repr=False)
    entity_dof: np.ndarray = field(repr=False)

    @property
    def eliminated(self) -> np.ndarray:
        return self.entity_dof < 0

    def cell_dof(self, element):
        if self.kind is not SpaceKind.NONCONFORMING_EQ1ROT:
            raise ValueError("cell DOFs exist only for the nonconforming space")
        return self.n_dofs - self.mesh.n_elements + np.asarray(element)


def build_dof_map(mesh: Mesh, kind: SpaceKind, dirichlet: bool = True) -> DofMap:
    """Global numbering; ``dirichlet=False`` keeps boundary entities (a free patch)."""
    kind = SpaceKind.parse(kind)
    if kind is SpaceKind.CONFORMING_Q11:
        vi, vj = mesh.vertex_grid_index(np.arange(mesh.n_vertices))
        interior = (vi > 0) & (vi < mesh.nx) & (vj > 0) & (vj < mesh.ny)
        if not dirichlet:
            interior = np.ones(mesh.n_vertices, dtype=bool)
        entity = -np.ones(mesh.n_vertices, dtype=int)
        entity[interior] = np.arange(int(interior.sum()))
        return DofMap(kind, mesh, int(interior.sum()), entity[mesh.elements], entity)

    interior = ~mesh.edge_is_boundary if dirichlet else np.ones(mesh.n_edges, dtype=bool)
    n_int = int(interior.sum())
    entity = -np.ones(mesh.n_edges, dtype=int)
    entity[interior] = np.arange(n_int)
    cells = n_int + np.arange(mesh.n_elements)
    elem_dofs = np.column_stack([entity[mesh.element_edges], cells])
    return DofMap(kind, mesh, n_int + mesh.n_elements, elem_dofs, entity)


# ---------------------------------------------------------------------------
# element quadrature data
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ElementQuadrature:
    """Basis tables and physical quadrature points shared by all assembly and diagnostics.

    ``x``, ``y`` are (E, nq); ``table`` (nq, nb); ``dx``, ``dy`` physical
    derivatives of the basis (nq, nb); ``cw`` weights times Jacobian (nq,).
    """

    dofs: DofMap
    rule: QuadratureRule
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    table: np.ndarray = field(repr=False)
    dx: np.ndarray = field(repr=False)
    dy: np.ndarray = field(repr=False)
    cw: np.ndarray = field(repr=False)

    def eval(self, coeffs):
        return kernels.gather_eval(coeffs, self.dofs.element_dofs, self.table)

    def eval_grad(self, coeffs):
        ed = self.dofs.element_dofs
        return kernels.gather_eval(coeffs, ed, self.dx), kernels.gather_eval(coeffs, ed, self.dy)

    def integrate(self, values) -> complex:
        return np.sum(np.asarray(values) * self.cw)


def element_quadrature(dofs: DofMap, rule: Optional[QuadratureRule] = None) -> ElementQuadrature:
    rule = rule or quadrature("cell", 3)
    mesh = dofs.mesh
    val, grad = basis_table(dofs.kind, rule.points)
    c = mesh.centroids
    x = c[:, 0:1] + 0.5 * mesh.hx * rule.points[None, :, 0]
    y = c[:, 1:2] + 0.5 * mesh.hy * rule.points[None, :, 1]
    return ElementQuadrature(
        dofs=dofs,
        rule=rule,
        x=x,
        y=y,
        table=val,
        dx=grad[..., 0] * (2.0 / mesh.hx),
        dy=grad[..., 1] * (2.0 / mesh.hy),
        cw=rule.weights * (0.25 * mesh.hx * mesh.hy),
    )


# ---------------------------------------------------------------------------
# interpolation and evaluation
# ---------------------------------------------------------------------------

def interpolate(f, dofs: DofMap, edge_rule: Optional[QuadratureRule] = None,
                cell_rule: Optional[QuadratureRule] = None) -> Field:
    """The canonical interpolant I_h f: vertex values (Q11) or edge/cell means (EQ1rot)."""
    mesh = dofs.mesh
    out = np.zeros(dofs.n_dofs, dtype=np.complex128)
    if dofs.kind is SpaceKind.CONFORMING_Q11:
        keep = dofs.entity_dof >= 0
        v = mesh.vertices[keep]
        out[dofs.entity_dof[keep]] = f(v[:, 0], v[:, 1])
        return out

    edge_rule = edge_rule or quadrature("edge", 3)
    cell_rule = cell_rule or quadrature("cell", 3)
    keep = np.flatnonzero(dofs.entity_dof >= 0)
    a = mesh.vertices[mesh.edges[keep, 0]]
    b = mesh.vertices[mesh.edges[keep, 1]]
    s = 0.5 * (edge_rule.points + 1.0)
    px = a[:, 0:1] + (b[:, 0:1] - a[:, 0:1]) * s
    py = a[:, 1:2] + (b[:, 1:2] - a[:, 1:2]) * s
    out[dofs.entity_dof[keep]] = 0.5 * (f(px, py) @ edge_rule.weights)

    c = mesh.centroids
    cx = c[:, 0:1] + 0.5 * mesh.hx * cell_rule.points[None, :, 0]
    cy = c[:, 1:2] + 0.5 * mesh.hy * cell_rule.points[None, :, 1]
    out[dofs.cell_dof(np.arange(mesh.n_elements))] = 0.25 * (f(cx, cy) @ cell_rule.weights)
    return out


def evaluate(coeffs: Field, dofs: DofMap, x, y, with_grad: bool = False):
    """Point evaluation of an FE function (points on shared edges use the upper/right cell)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    shape = np.broadcast(x, y).shape
    x, y = np.broadcast_to(x, shape).ravel(), np.broadcast_to(y, shape).ravel()
    mesh = dofs.mesh
    e = mesh.locate(x, y)
    c = mesh.centroids[e]
    xi = (x - c[:, 0]) * (2.0 / mesh.hx)
    eta = (y - c[:, 1]) * (2.0 / mesh.hy)
    val, grad = basis_table(dofs.kind, np.column_stack([xi, eta]))
    ed = dofs.element_dofs[e]
    local = np.where(ed >= 0, np.asarray(coeffs, dtype=np.complex128)[np.maximum(ed, 0)], 0.0)
    u = np.sum(local * val, axis=1).reshape(shape)
    if not with_grad:
        return u
    ux = np.sum(local * grad[..., 0], axis=1).reshape(shape) * (2.0 / mesh.hx)
    uy = np.sum(local * grad[..., 1], axis=1).reshape(shape) * (2.0 / mesh.hy)
    return u, ux, uy


def fe_function(coeffs: Field, dofs: DofMap) -> ScalarField2D:
    """Wrap FE coefficients as a ScalarField2D (piecewise gradient, no Hessian)."""
    coeffs = np.asarray(coeffs, dtype=np.complex128).copy()

    def grad(x, y):
        _, ux, uy = evaluate(coeffs, dofs, x, y, with_grad=True)
        return ux, uy

    return ScalarField2D(value=lambda x, y: evaluate(coeffs, dofs, x, y), grad=grad, name="fe")


def vertex_values(coeffs: Field, dofs: DofMap) -> np.ndarray:
    """Q11 values on the full vertex grid, shape (ny + 1, nx + 1), boundary zeros included."""
    if dofs.kind is not SpaceKind.CONFORMING_Q11:
        raise ValueError("vertex values are defined for the conforming space only")
    out = np.zeros(dofs.mesh.n_vertices, dtype=np.complex128)
    keep = dofs.entity_dof >= 0
    out[keep] = np.asarray(coeffs)[dofs.entity_dof[keep]]
    return out.reshape(dofs.mesh.ny + 1, dofs.mesh.nx + 1)


# ---------------------------------------------------------------------------
# biquadratic postprocessing on 2x2 macro-elements
# ---------------------------------------------------------------------------

def _lagrange3(s):
    return np.stack([0.5 * s * (s - 1.0), 1.0 - s * s, 0.5 * s * (s + 1.0)], axis=-1)


def _lagrange3_deriv(s):
    return np.stack([s - 0.5, -2.0 * s, s + 0.5], axis=-1)


@dataclass(frozen=True, eq=False)
class PostprocessedField:
    """Piecewise biquadratic I_2h u_h, evaluable at the quadrature points of any cell rule."""

    dofs: DofMap
    grid: np.ndarray = field(repr=False)  # vertex values (ny+1, nx+1)

    def at_quadrature(self, rule: Optional[QuadratureRule] = None):
        """Values and physical gradients, each (E, nq), ordered like ``element_quadrature``."""
        rule = rule or quadrature("cell", 3)
        mesh = self.dofs.mesh
        e = np.arange(mesh.n_elements)
        i, j = e % mesh.nx, e // mesh.nx
        a, b = i % 2, j % 2
        s = (rule.points[None, :, 0] + 2 * a[:, None] - 1.0) * 0.5
        r = (rule.points[None, :, 1] + 2 * b[:, None] - 1.0) * 0.5
        Ls, Lr = _lagrange3(s), _lagrange3(r)
        dLs, dLr = _lagrange3_deriv(s), _lagrange3_deriv(r)
        i0, j0 = i - a, j - b
        p = np.arange(3)
        # nodal values of each macro-element: (E, 3 [eta], 3 [xi])
        U = self.grid[(j0[:, None] + p)[:, :, None], (i0[:, None] + p)[:, None, :]]
        val = np.einsum("eqa,eqb,eab->eq", Lr, Ls, U)
        gx = np.einsum("eqa,eqb,eab->eq", Lr, dLs, U) / mesh.hx
        gy = np.einsum("eqa,eqb,eab->eq", dLr, Ls, U) / mesh.hy
        return val, gx, gy


def postprocess_I2h(coeffs: Field, dofs: DofMap) -> PostprocessedField:
    if dofs.kind is not SpaceKind.CONFORMING_Q11:
        raise ValueError("the macro-element postprocessing is implemented for the conforming space only")
    if dofs.mesh.nx % 2 or dofs.mesh.ny % 2:
        raise ValueError(f"postprocessing needs even element counts, got {dofs.mesh.nx}x{dofs.mesh.ny}")
    return PostprocessedField(dofs, vertex_values(coeffs, dofs))
