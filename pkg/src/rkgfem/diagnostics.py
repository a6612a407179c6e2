"""Discrete energy and charge, error norms, convergence rates, vortex detection."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .assembly import ModelParams, OperatorSet
from .spaces import DofMap, QuadratureRule, ScalarField2D, SpaceKind, element_quadrature, interpolate, \
    postprocess_I2h, vertex_values


def _q(u, A, v=None):
    """v^H A u (sesquilinear, linear in u)."""
    v = u if v is None else v
    return np.vdot(v, A @ u)


def discrete_energy(psi_curr, psi_prev, ops: OperatorSet, params: ModelParams, tau: float) -> float:
    eps, lam, Om = params.epsilon, params.lam, params.omega
    c = np.asarray(psi_curr, dtype=np.complex128)
    b = np.asarray(psi_prev, dtype=np.complex128)
    d = (c - b) / tau
    quart = 0.0
    if lam != 0.0:
        ed, T, cw = ops.dofs.element_dofs, ops.quad.table, ops.quad.cw
        quart = kernels.quartic_sum(c, ed, T, cw) + kernels.quartic_sum(b, ed, T, cw)
    E = (eps ** 2 * _q(d, ops.M).real
         + 0.5 * (_q(c, ops.A).real + _q(b, ops.A).real)
         + (0.5 / eps ** 2) * (_q(c, ops.M).real + _q(b, ops.M).real)
         + 0.5 * (_q(c, ops.M_V).real + _q(b, ops.M_V).real)
         + 0.25 * lam * quart
         - 0.5 * Om ** 2 * eps ** 2 * (_q(c, ops.A_L).real + _q(b, ops.A_L).real))
    return float(E)


def discrete_charge(psi_curr, psi_prev, ops: OperatorSet, params: ModelParams, tau: float) -> float:
    """eps^2 Im(d_t Psi^{n-1}, Psi^{n-1}) - (Omega eps^2/2) [Im(i L_z Psi^n, Psi^n) + Im(i L_z Psi^{n-1}, Psi^{n-1})]."""
    eps, Om = params.epsilon, params.omega
    c = np.asarray(psi_curr, dtype=np.complex128)
    b = np.asarray(psi_prev, dtype=np.complex128)
    d = (c - b) / tau
    first = np.vdot(b, ops.M @ d).imag
    # Im(i z) = Re(z) with z = (L_z u, u)_h = u^H B_L u
    rot = _q(c, ops.B_L).real + _q(b, ops.B_L).real
    return float(eps ** 2 * first - 0.5 * Om * eps ** 2 * rot)


def broken_h1_norm(u, ops: OperatorSet) -> float:
    """||u||_{1,h} = ||u||_{L2} + |u|_{1,h}."""
    return math.sqrt(max(_q(u, ops.M).real, 0.0)) + math.sqrt(max(_q(u, ops.A).real, 0.0))


@dataclass
class DiagnosticsRecord:
    n: int
    t: float
    E_h: float
    Q_h: float
    rel_E_err: float
    rel_Q_err: float
    h1_norm: float
    fp_iters: int
    residual: float

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def row(self):
        return [getattr(self, c) for c in self.columns()]


def make_record(state, ops: OperatorSet, params: ModelParams, tau: float,
                first: Optional[DiagnosticsRecord]) -> DiagnosticsRecord:
    E = discrete_energy(state.psi_curr, state.psi_prev, ops, params, tau)
    Q = discrete_charge(state.psi_curr, state.psi_prev, ops, params, tau)
    if first is None:
        rel_e = rel_q = 0.0
    else:
        rel_e = abs(E - first.E_h) / abs(first.E_h) if first.E_h != 0 else abs(E - first.E_h)
        rel_q = abs(Q - first.Q_h) / max(abs(first.Q_h), params.epsilon ** 2)
    return DiagnosticsRecord(state.n, state.t, E, Q, rel_e, rel_q, broken_h1_norm(state.psi_curr, ops),
                             state.fp_iterations, state.solver_residual)


# ---------------------------------------------------------------------------
# errors against exact solutions
# ---------------------------------------------------------------------------

@dataclass
class ErrorReport:
    h: float
    tau: float
    l2: float
    h1: float
    superclose: float
    postprocessed: float = float("nan")

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def row(self):
        return [getattr(self, c) for c in self.columns()]


def error_norms(psi_h, exact: ScalarField2D, dofs: DofMap, quad: Optional[QuadratureRule] = None,
                tau: float = float("nan"), ops: Optional[OperatorSet] = None) -> ErrorReport:
    """L2 and broken H1 errors (||.|| + |.|_1 summed), superclose and postprocessed errors."""
    eq = ops.quad if (ops is not None and quad is None) else element_quadrature(dofs, quad)
    w = eq.cw
    u = exact(eq.x, eq.y)
    ux, uy = exact.gradient(eq.x, eq.y)
    uh = eq.eval(psi_h)
    uhx, uhy = eq.eval_grad(psi_h)

    def l2(v):
        return math.sqrt(float(np.sum(np.abs(v) ** 2 * w)))

    def semi(vx, vy):
        return math.sqrt(float(np.sum((np.abs(vx) ** 2 + np.abs(vy) ** 2) * w)))

    l2_err = l2(u - uh)
    h1_err = l2_err + semi(ux - uhx, uy - uhy)
    diff = interpolate(exact, dofs) - np.asarray(psi_h)
    dq = eq.eval(diff)
    dx, dy = eq.eval_grad(diff)
    sc = l2(dq) + semi(dx, dy)
    pp = float("nan")
    if dofs.kind is SpaceKind.CONFORMING_Q11 and dofs.mesh.nx % 2 == 0 and dofs.mesh.ny % 2 == 0:
        pv, px, py = postprocess_I2h(psi_h, dofs).at_quadrature(eq.rule)
        pp = l2(u - pv) + semi(ux - px, uy - py)
    return ErrorReport(dofs.mesh.h, tau, l2_err, h1_err, sc, pp)


def fit_rate(h: Sequence[float], err: Sequence[float]) -> float:
    """Least-squares slope of log(err) against log(h)."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    ok = (err > 0) & np.isfinite(err)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(h[ok]), np.log(err[ok]), 1)[0])


def fit_rates(reports: Sequence[ErrorReport]) -> dict:
    h = [r.h for r in reports]
    return {c: fit_rate(h, [getattr(r, c) for r in reports]) for c in ("l2", "h1", "superclose", "postprocessed")}


# ---------------------------------------------------------------------------
# vortices
# ---------------------------------------------------------------------------

@dataclass
class VortexReport:
    vortices: list          # [(x, y, winding)]
    indeterminate: list     # cell centers touching a (near-)zero vertex value

    @property
    def count(self) -> int:
        return len(self.vortices)

    @property
    def total_winding(self) -> int:
        return int(sum(w for _, _, w in self.vortices))


def count_vortices(psi_h, dofs: DofMap, zero_tol: float = 1e-12, density_floor: float = 0.0) -> VortexReport:
    """Phase winding of every mesh cell from the vertex values of a conforming field.

    Cells with a vertex value below ``zero_tol`` in modulus are reported as
    indeterminate. With ``density_floor > 0`` cells whose largest corner
    modulus is below ``density_floor * max|Psi|`` are skipped: there the phase
    is numerically meaningless (far field, boundary layer).
    """
    if dofs.kind is not SpaceKind.CONFORMING_Q11:
        raise ValueError("vortex detection works on conforming (vertex-valued) fields")
    mesh = dofs.mesh
    grid = vertex_values(psi_h, dofs)
    mod = np.abs(grid)
    wind = kernels.plaquette_winding(np.angle(grid))
    corner = np.stack([mod[:-1, :-1], mod[:-1, 1:], mod[1:, 1:], mod[1:, :-1]])
    tiny = corner.min(axis=0) < zero_tol
    faint = corner.max(axis=0) < density_floor * mod.max() if density_floor > 0 else np.zeros_like(tiny)
    cx = mesh.domain.x_min + (np.arange(mesh.nx) + 0.5) * mesh.hx
    cy = mesh.domain.y_min + (np.arange(mesh.ny) + 0.5) * mesh.hy
    vort, indet = [], []
    for j, i in zip(*np.nonzero(tiny & ~faint)):
        indet.append((float(cx[i]), float(cy[j])))
    for j, i in zip(*np.nonzero((wind != 0) & ~tiny & ~faint)):
        vort.append((float(cx[i]), float(cy[j]), int(wind[j, i])))
    return VortexReport(vort, indet)
