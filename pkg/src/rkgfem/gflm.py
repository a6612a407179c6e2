"""Normalized gradient flow with Lagrange multipliers for two-component bound states.

Minimizes

    E(z+, z-) = 1/2 sum (z^H A z + z^H M_V z) + lam/4 int (|z+|^2 + |z-|^2)^2
                - Omega Re sum z^H B_L z

on the conforming space under (z+, z+)_M = alpha and (z-, z-)_M = 1 - alpha.
Each iteration takes one semi-implicit step of the Euler-Lagrange flow

    ((1/tau + beta) M + A/2) z1 = (1/tau) M z + [beta M - M_V/2 + Omega B_L - lam/2 M_G + u M] z

per component (G+ = |z+|^2 + 2|z-|^2, G- symmetric) and projects back onto
the constraint.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .assembly import OperatorSet
from .linalg import Factorization, solve_iterative
from .spaces import SpaceKind, interpolate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GflmConfig:
    alpha: float = 0.5
    tau_flow: Optional[float] = None   # default 0.1 h^2
    tol: float = 1e-8
    lam: float = 0.0
    omega: float = 0.0
    max_iterations: int = 20000
    linear_tol: float = 1e-13

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.tau_flow is not None and not self.tau_flow > 0:
            raise ValueError("tau_flow must be positive")

    def tau_for(self, ops: OperatorSet) -> float:
        return self.tau_flow if self.tau_flow is not None else 0.1 * ops.dofs.mesh.h ** 2


@dataclass
class GflmState:
    z_plus: np.ndarray
    z_minus: np.ndarray
    iteration: int = 0
    energies: list = field(default_factory=list)
    potentials: list = field(default_factory=list)
    converged: bool = False
    rho: Optional[tuple] = field(default=None, repr=False)  # densities at quadrature points, cached

    def swapped(self) -> "GflmState":
        return GflmState(self.z_minus, self.z_plus, self.iteration, list(self.energies), list(self.potentials))


def _active(cfg: GflmConfig):
    """Which components carry mass (alpha in {0, 1} leaves one of them empty)."""
    return cfg.alpha > 0.0, cfg.alpha < 1.0


def _density(z, ops: OperatorSet):
    if not np.any(z):
        return np.zeros(ops.quad.x.shape)
    zq = ops.quad.eval(z)
    return zq.real ** 2 + zq.imag ** 2


def _densities(state: GflmState, ops: OperatorSet):
    return _density(state.z_plus, ops), _density(state.z_minus, ops)


def _quad_form(z, A) -> float:
    return float(np.vdot(z, A @ z).real)


def gflm_energy(state: GflmState, ops: OperatorSet, cfg: GflmConfig, rho=None) -> float:
    rho_p, rho_m = rho if rho is not None else _densities(state, ops)
    lin = 0.0
    for z in (state.z_plus, state.z_minus):
        lin += 0.5 * (_quad_form(z, ops.A) + _quad_form(z, ops.M_V)) - cfg.omega * _quad_form(z, ops.B_L)
    quart = float(np.sum((rho_p + rho_m) ** 2 * ops.quad.cw))
    return lin + 0.25 * cfg.lam * quart


def _hamiltonian_apply(z, G, ops: OperatorSet, cfg: GflmConfig):
    """(A/2 + M_V/2 + lam/2 M_G - Omega B_L) z."""
    out = 0.5 * (ops.A @ z) + 0.5 * (ops.M_V @ z) - cfg.omega * (ops.B_L @ z)
    if cfg.lam != 0.0:
        out = out + 0.5 * cfg.lam * kernels.weighted_load(G, z, ops.dofs.element_dofs, ops.quad.table,
                                                          ops.quad.cw, ops.n)
    return out


def chemical_potentials(state: GflmState, ops: OperatorSet, cfg: GflmConfig, normalized: bool = True, rho=None):
    """(u+, u-): z^H H z with the Euler-Lagrange operator H of each component.

    With ``normalized`` the value is divided by (z, z)_M, i.e. the Rayleigh
    quotient, which is the Lagrange multiplier for any constraint mass.
    Empty components give 0.
    """
    rho_p, rho_m = rho if rho is not None else _densities(state, ops)
    out = []
    for z, G in ((state.z_plus, rho_p + 2 * rho_m), (state.z_minus, rho_m + 2 * rho_p)):
        if not np.any(z):
            out.append(0.0)
            continue
        val = float(np.vdot(z, _hamiltonian_apply(z, G, ops, cfg)).real)
        if normalized:
            mass = _quad_form(z, ops.M)
            val = val / mass if mass > 0 else 0.0
        out.append(val)
    return tuple(out)


def euler_lagrange_residuals(state: GflmState, ops: OperatorSet, cfg: GflmConfig):
    """For each component: (||H z - u M z||_2, ||M z||_2)."""
    rho_p, rho_m = _densities(state, ops)
    u = chemical_potentials(state, ops, cfg)
    res = []
    for z, G, uu in ((state.z_plus, rho_p + 2 * rho_m, u[0]), (state.z_minus, rho_m + 2 * rho_p, u[1])):
        Mz = ops.M @ z
        res.append((float(np.linalg.norm(_hamiltonian_apply(z, G, ops, cfg) - uu * Mz)), float(np.linalg.norm(Mz))))
    return res


def project(z, target: float, ops: OperatorSet):
    """Scale z so that (z, z)_M = target."""
    if target == 0.0:
        return np.zeros_like(z)
    nrm2 = _quad_form(z, ops.M)
    if not nrm2 > 0:
        raise ValueError("cannot normalize a component with zero norm")
    return z * math.sqrt(target / nrm2)


class GflmSolver:
    def __init__(self, ops: OperatorSet, cfg: GflmConfig):
        if ops.kind is not SpaceKind.CONFORMING_Q11:
            raise ValueError("the gradient flow is set up on the conforming space")
        self.ops, self.cfg = ops, cfg
        self.tau = cfg.tau_for(ops)
        self._fac = {}

    def _solve(self, beta: float, rhs):
        ops = self.ops
        if self.cfg.lam == 0.0:
            # beta is fixed by V alone: one factorization serves all iterations
            fac = self._fac.get(beta)
            if fac is None:
                self._fac.clear()
                fac = self._fac[beta] = Factorization((1.0 / self.tau + beta) * ops.M + 0.5 * ops.A)
            return fac.solve(rhs)
        mat = ((1.0 / self.tau + beta) * ops.M + 0.5 * ops.A).tocsr()
        x, _ = solve_iterative(mat, rhs, tol=self.cfg.linear_tol, max_iter=5000)
        return x

    def step(self, state: GflmState) -> GflmState:
        ops, cfg, tau = self.ops, self.cfg, self.tau
        rho_p, rho_m = state.rho if state.rho is not None else _densities(state, ops)
        u = state.potentials[-1] if state.potentials else chemical_potentials(state, ops, cfg, rho=(rho_p, rho_m))
        act_p, act_m = _active(cfg)
        new = []
        for z, G, uu, active, target in ((state.z_plus, rho_p + 2 * rho_m, u[0], act_p, cfg.alpha),
                                          (state.z_minus, rho_m + 2 * rho_p, u[1], act_m, 1.0 - cfg.alpha)):
            if not active:
                new.append(np.zeros_like(z))
                continue
            Gt = ops.V_q + cfg.lam * G
            beta = 0.5 * (float(Gt.max()) + float(Gt.min()))
            Mz = ops.M @ z
            rhs = (1.0 / tau + beta + uu) * Mz - 0.5 * (ops.M_V @ z) + cfg.omega * (ops.B_L @ z)
            if cfg.lam != 0.0:
                rhs = rhs - 0.5 * cfg.lam * kernels.weighted_load(G, z, ops.dofs.element_dofs, ops.quad.table,
                                                                  ops.quad.cw, ops.n)
            new.append(project(self._solve(beta, rhs), target, ops))
        out = GflmState(new[0], new[1], state.iteration + 1, state.energies, state.potentials)
        _record(out, ops, cfg)
        return out


def initial_state(z_plus, z_minus, ops: OperatorSet, cfg: GflmConfig) -> GflmState:
    """Project coefficient vectors (or fields, interpolated first) onto the constraint."""
    def coeffs(z):
        if callable(z):
            return interpolate(z, ops.dofs)
        return np.asarray(z, dtype=np.complex128).copy()

    zp, zm = coeffs(z_plus), coeffs(z_minus)
    act_p, act_m = _active(cfg)
    zp = project(zp, cfg.alpha, ops) if act_p else np.zeros_like(zp)
    zm = project(zm, 1.0 - cfg.alpha, ops) if act_m else np.zeros_like(zm)
    st = GflmState(zp, zm)
    _record(st, ops, cfg)
    return st


def _record(st: GflmState, ops: OperatorSet, cfg: GflmConfig):
    rho = st.rho = _densities(st, ops)
    st.energies.append(gflm_energy(st, ops, cfg, rho=rho))
    st.potentials.append(chemical_potentials(st, ops, cfg, rho=rho))


def gflm_step(state: GflmState, ops: OperatorSet, cfg: GflmConfig) -> GflmState:
    return GflmSolver(ops, cfg).step(state)


def gflm_solve(initial, cfg: GflmConfig, ops: OperatorSet, callback=None) -> GflmState:
    """Iterate until |E^{n+1} - E^n| <= tol or ``max_iterations``.

    ``initial`` is a pair of fields or coefficient vectors. On non-convergence
    the last state is returned with ``converged = False``.
    """
    state = initial_state(initial[0], initial[1], ops, cfg)
    solver = GflmSolver(ops, cfg)
    while state.iteration < cfg.max_iterations:
        state = solver.step(state)
        if callback is not None:
            callback(state)
        if abs(state.energies[-1] - state.energies[-2]) <= cfg.tol:
            state.converged = True
            break
    if not state.converged:
        log.warning("gradient flow stopped after %d iterations without meeting |dE| <= %g", state.iteration, cfg.tol)
    return state
