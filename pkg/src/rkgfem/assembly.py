"""Assembly of the bilinear and sesquilinear forms of the rotating model.

With real basis functions phi_j and D = x d_y - y d_x (so L_z = -i D):

    M_jk   = (phi_k, phi_j)
    A_jk   = sum_K (grad phi_k, grad phi_j)_K
    M_V    = (V phi_k, phi_j)
    A_L    = sum_K (L_z phi_k, L_z phi_j)_K  = (D phi_k, D phi_j)_h
    B_L    = sum_K (L_z phi_k, phi_j)_K      = -i (D phi_k, phi_j)_h
    J_jk   = sum_K int_{dK} phi_k phi_j (x . n_perp) ds,   n_perp = (n_y, -n_x)

Row index is the test function, column the trial function, so
``(B_L @ u)[j] = (L_z u_h, phi_j)_h``. Since int_K D(g) = int_{dK} g (x . n_perp),
``B_L - B_L^H = -i J`` holds exactly under exact quadrature.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from . import kernels
from .linalg import canonical
from .mesh import Domain
from .spaces import (DofMap, ElementQuadrature, QuadratureRule, ScalarField2D, SpaceKind, basis_table,
                     edge_ref_points, element_quadrature, quadrature)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelParams:
    epsilon: float
    lam: float
    omega: float
    potential: ScalarField2D
    domain: Optional[Domain] = None
    T: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.T < 0:
            raise ValueError(f"final time must be non-negative, got {self.T}")


class SparsityPattern:
    """Fixed CSR pattern of the global matrices with a map from element entries to CSR slots.

    Lets state-dependent matrices (e.g. weighted masses) be rebuilt by a single
    ``bincount`` without going through COO conversion.
    """

    def __init__(self, dofs: DofMap):
        ed = dofs.element_dofs
        nb = ed.shape[1]
        rows = np.repeat(ed, nb, axis=1).ravel()
        cols = np.tile(ed, (1, nb)).ravel()
        self.mask = (rows >= 0) & (cols >= 0)
        r, c = rows[self.mask], cols[self.mask]
        n = dofs.n_dofs
        key = r.astype(np.int64) * n + c
        uniq, self.slot = np.unique(key, return_inverse=True)
        self.indices = (uniq % n).astype(np.int32) if n else np.zeros(0, np.int32)
        counts = np.bincount((uniq // n).astype(np.int64), minlength=n) if n else np.zeros(0, int)
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        self.n = n
        self.nnz = uniq.size

    def build(self, local: np.ndarray) -> sp.csr_matrix:
        """Sum element matrices (E, nb, nb) into the global pattern."""
        vals = local.reshape(-1)[self.mask]
        if np.iscomplexobj(vals):
            data = np.bincount(self.slot, vals.real, self.nnz) + 1j * np.bincount(self.slot, vals.imag, self.nnz)
        else:
            data = np.bincount(self.slot, vals, self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=(self.n, self.n))


@dataclass(eq=False)
class OperatorSet:
    M: sp.csr_matrix
    A: sp.csr_matrix
    M_V: sp.csr_matrix
    A_L: sp.csr_matrix
    B_L: sp.csr_matrix
    J: sp.csr_matrix
    dofs: DofMap
    quad: ElementQuadrature
    pattern: SparsityPattern
    V_q: np.ndarray = field(repr=False)  # potential at quadrature points (E, nq)
    metadata: dict = field(default_factory=dict)

    @property
    def kind(self) -> SpaceKind:
        return self.dofs.kind

    @property
    def n(self) -> int:
        return self.dofs.n_dofs

    def weighted_mass(self, weight_q: np.ndarray) -> sp.csr_matrix:
        """Mass matrix weighted by real values given at the quadrature points (E, nq)."""
        return weighted_mass_from_values(self.quad, self.pattern, weight_q)


def _element_D(eq: ElementQuadrature) -> np.ndarray:
    """D phi at physical quadrature points, shape (E, nq, nb)."""
    return eq.x[..., None] * eq.dy[None] - eq.y[..., None] * eq.dx[None]


def _jump_local(dofs: DofMap, edge_rule: QuadratureRule) -> np.ndarray:
    """Per-element boundary integrals of phi_k phi_j (x . n_perp), shape (E, nb, nb)."""
    mesh = dofs.mesh
    c = mesh.centroids
    out = np.zeros((mesh.n_elements, dofs.kind.n_local, dofs.kind.n_local))
    t, w = edge_rule.points, edge_rule.weights
    for side in range(4):
        ref = edge_ref_points(side, t)
        val, _ = basis_table(dofs.kind, ref)
        x = c[:, 0:1] + 0.5 * mesh.hx * ref[None, :, 0]
        y = c[:, 1:2] + 0.5 * mesh.hy * ref[None, :, 1]
        # x . n_perp for bottom, right, top, left outward normals
        g = (-x, -y, x, y)[side]
        ds = 0.5 * (mesh.hx if side in (0, 2) else mesh.hy)
        out += np.einsum("eq,qj,qk->ejk", g * (w * ds), val, val)
    return out


def assemble_operator_set(dofs: DofMap, potential: ScalarField2D, quad: Optional[QuadratureRule] = None,
                          edge_quad: Optional[QuadratureRule] = None) -> OperatorSet:
    quad = quad or quadrature("cell", 3)
    edge_quad = edge_quad or quadrature("edge", 3)
    eq = element_quadrature(dofs, quad)
    pattern = SparsityPattern(dofs)
    E = dofs.mesh.n_elements

    V = np.asarray(potential(eq.x, eq.y))
    if np.iscomplexobj(V):
        if np.max(np.abs(V.imag)) > 0:
            raise ValueError("potential must be real-valued")
        V = V.real
    V = np.asarray(V, dtype=float)

    T, cw = eq.table, eq.cw
    M_loc = np.einsum("q,qj,qk->jk", cw, T, T)
    A_loc = np.einsum("q,qj,qk->jk", cw, eq.dx, eq.dx) + np.einsum("q,qj,qk->jk", cw, eq.dy, eq.dy)
    D = _element_D(eq)
    MV_loc = np.einsum("eq,qj,qk->ejk", V * cw, T, T)
    AL_loc = np.einsum("q,eqj,eqk->ejk", cw, D, D)
    BL_loc = -1j * np.einsum("q,qj,eqk->ejk", cw, T, D)
    J_loc = _jump_local(dofs, edge_quad)

    def build(local):
        if local.ndim == 2:
            local = np.broadcast_to(local, (E,) + local.shape)
        return canonical(pattern.build(np.ascontiguousarray(local)))

    ops = OperatorSet(
        M=build(M_loc),
        A=build(A_loc),
        M_V=build(MV_loc),
        A_L=build(AL_loc),
        B_L=build(BL_loc),
        J=build(J_loc),
        dofs=dofs,
        quad=eq,
        pattern=pattern,
        V_q=V,
        metadata={
            "space": dofs.kind.value,
            "cell_order": quad.order,
            "edge_order": edge_quad.order,
            "potential": potential.name,
            "tags": {"M": "real-symmetric", "A": "real-symmetric", "M_V": "real-symmetric",
                     "A_L": "real-symmetric", "B_L": "none", "J": "real-symmetric"},
        },
    )
    return ops


def weighted_mass_from_values(eq: ElementQuadrature, pattern: SparsityPattern, weight_q) -> sp.csr_matrix:
    w = np.asarray(weight_q, dtype=float)
    local = np.einsum("eq,qj,qk->ejk", w * eq.cw, eq.table, eq.table)
    return pattern.build(local)


def assemble_weighted_mass(dofs: DofMap, u, v, quad=None, pattern: Optional[SparsityPattern] = None,
                           eq: Optional[ElementQuadrature] = None) -> sp.csr_matrix:
    """Mass matrix with weight 0.5 (|u_h|^2 + |v_h|^2) at the quadrature points."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != (dofs.n_dofs,) or v.shape != (dofs.n_dofs,):
        raise ValueError(f"weight fields must both have {dofs.n_dofs} coefficients, got {u.shape} and {v.shape}")
    eq = eq or element_quadrature(dofs, quad)
    pattern = pattern or SparsityPattern(dofs)
    uq, vq = eq.eval(u), eq.eval(v)
    w = 0.5 * (uq.real ** 2 + uq.imag ** 2 + vq.real ** 2 + vq.imag ** 2)
    return weighted_mass_from_values(eq, pattern, w)


def assemble_load(dofs: DofMap, f: Callable, t: float = 0.0, quad=None,
                  eq: Optional[ElementQuadrature] = None) -> np.ndarray:
    """load_j = sum_K int_K f(x, t) phi_j dx.

    ``f`` is called as ``f(x, y, t)``; a ScalarField2D is called as ``f(x, y)``.
    """
    eq = eq or element_quadrature(dofs, quad)
    vals = f(eq.x, eq.y) if isinstance(f, ScalarField2D) else f(eq.x, eq.y, t)
    vals = np.broadcast_to(np.asarray(vals, dtype=np.complex128), eq.x.shape)
    return kernels.scatter_load(vals * eq.cw, dofs.element_dofs, eq.table, dofs.n_dofs)


def norm_equivalence_estimates(ops: OperatorSet, n_samples: int = 50, seed: int = 0) -> dict:
    """Largest sampled Rayleigh quotients x^H A_L x / x^H A x and x^H M x / x^H A x.

    The first estimates 1/C_U1^2 (so C_U1 ~ ratio^-1/2), the second C_U^2.
    Random sampling gives lower bounds on the true maxima.
    """
    rng = np.random.default_rng(seed)
    n = ops.n
    best_l, best_m = 0.0, 0.0
    for _ in range(n_samples):
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        a = np.vdot(x, ops.A @ x).real
        if a <= 0:
            continue
        best_l = max(best_l, np.vdot(x, ops.A_L @ x).real / a)
        best_m = max(best_m, np.vdot(x, ops.M @ x).real / a)
    c_u1 = best_l ** -0.5 if best_l > 0 else np.inf
    return {"AL_over_A": best_l, "M_over_A": best_m, "C_U1": c_u1, "C_U": best_m ** 0.5}


def check_epsilon_bound(params: ModelParams, ops: OperatorSet, **kw) -> dict:
    """Warn (never abort) when epsilon * |Omega| reaches the estimated C_U1."""
    est = norm_equivalence_estimates(ops, **kw)
    est["epsilon_omega"] = params.epsilon * abs(params.omega)
    est["violated"] = bool(est["epsilon_omega"] >= est["C_U1"])
    if est["violated"]:
        msg = (f"epsilon*|Omega| = {est['epsilon_omega']:.3g} exceeds the estimated norm-equivalence "
               f"constant {est['C_U1']:.3g}; the rotating energy may lose coercivity")
        log.warning(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return est
