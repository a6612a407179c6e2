"""Three-level energy- and charge-conserving time stepper for the rotating Klein-Gordon model.

With Psi^{n-1} = b, Psi^n = c and the unknown Psi^{n+1} = a, every step solves

    eps^2/tau^2 M (a - 2c + b) + K (a + b)/2 + lam W(a, b) (a + b)/2
        - (i Omega eps^2 / tau) B_L (a - b) + S(a, b) = f(t_n)

with K = A + M/eps^2 + M_V - Omega^2 eps^2 A_L and W(a, b) the mass matrix
weighted by (|a|^2 + |b|^2)/2. ``S`` is the boundary correction of the broken
space, built from the jump form J (zero for the conforming space).

The nonlinear equation is solved by the lagged-weight fixed point
(L + lam/2 W(a^k, b)) a^{k+1} = R - lam/2 W(a^k, b) b, written in correction
form and solved on the real 2N block system.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import kernels
from .assembly import ModelParams, OperatorSet, assemble_load
from .linalg import ConvergenceError, Factorization, RealBlockSystem, solve_iterative
from .spaces import DofMap, Field, ScalarField2D, check_derivatives, interpolate

log = logging.getLogger(__name__)

STABILIZATION_MODES = ("auto", "on", "off", "split")


class FixedPointError(RuntimeError):
    def __init__(self, iterations: int, residual: float):
        super().__init__(f"fixed-point iteration did not converge in {iterations} iterations "
                         f"(last relative update {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InitialData:
    """psi0 needs gradient and Hessian callables, psi1 a gradient callable.

    Both are checked against central differences at ``n_check`` points drawn
    (with a fixed seed) from [-1, 1]^2; a mismatch above 1e-6 raises ValueError.
    """

    psi0: ScalarField2D
    psi1: ScalarField2D
    n_check: int = 20

    def __post_init__(self):
        if self.psi0.grad is None or self.psi0.hess is None:
            raise ValueError("psi0 needs gradient and Hessian callables")
        if self.psi1.grad is None:
            raise ValueError("psi1 needs a gradient callable")
        if self.n_check > 0:
            pts = np.random.default_rng(0).uniform(-1.0, 1.0, size=(self.n_check, 2))
            for name, f in (("psi0", self.psi0), ("psi1", self.psi1)):
                try:
                    check_derivatives(f, pts)
                except ValueError as exc:
                    raise ValueError(f"{name}: {exc}") from None


@dataclass(frozen=True)
class StepConfig:
    tau: float
    fixedpoint_tol: float = 1e-12
    fixedpoint_max: int = 50
    solver: str = "direct"
    stabilization: str = "auto"
    K0: Optional[float] = None
    debug: bool = False
    linear_tol: float = 1e-10

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.solver not in ("direct", "iterative"):
            raise ValueError(f"solver must be 'direct' or 'iterative', got {self.solver!r}")
        if self.stabilization not in STABILIZATION_MODES:
            raise ValueError(f"stabilization must be one of {STABILIZATION_MODES}, got {self.stabilization!r}")
        if self.fixedpoint_tol <= 0 or self.fixedpoint_max < 1:
            raise ValueError("fixed-point tolerance and iteration cap must be positive")


@dataclass
class StepperState:
    psi_prev: Field
    psi_curr: Field
    n: int
    tau: float
    fp_iterations: int = 0
    fp_residual: float = 0.0
    solver_residual: float = 0.0
    safeguard_hits: int = 0
    info: dict = field(default_factory=dict, repr=False)

    @property
    def t(self) -> float:
        return self.n * self.tau


def resolve_stabilization(mode: str, dofs: DofMap) -> str:
    if mode == "auto":
        return "off" if dofs.kind.value == "conforming" else "on"
    return mode


# ---------------------------------------------------------------------------
# truncation utilities
# ---------------------------------------------------------------------------

def cutoff_chi(x):
    """Even cutoff: 1 on |x| < 1, exp(1 + 1/((|x|-1)^2 - 1)) on [1, 2), 0 beyond.

    Flat to all orders at |x| = 2 but only C^1 at |x| = 1, where the second
    derivative jumps from 0 to -2.
    """
    x = np.abs(np.asarray(x, dtype=float))
    out = np.zeros_like(x)
    out[x < 1.0] = 1.0
    mid = (x >= 1.0) & (x < 2.0)
    d = (x[mid] - 1.0) ** 2 - 1.0
    with np.errstate(divide="ignore", over="ignore"):
        out[mid] = np.exp(1.0 + 1.0 / d)
    return out if out.ndim else float(out)


def cutoff_mu(s, K0: float):
    """mu(s) = s chi(s / K0^2)."""
    if not K0 > 0:
        raise ValueError("K0 must be positive")
    s = np.asarray(s, dtype=float)
    out = s * cutoff_chi(s / K0 ** 2)
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def _D(x, y, gx, gy):
    return x * gy - y * gx


def _D2(x, y, gx, gy, hxx, hxy, hyy):
    return x * x * hyy + y * y * hxx - 2.0 * x * y * hxy - x * gx - y * gy


def second_derivative_bracket(data: InitialData, params: ModelParams, source: Optional[Callable] = None):
    """Callable (x, y) for eps^2 Psi_tt(0), built from the initial data and the model."""
    eps, lam, Om = params.epsilon, params.lam, params.omega
    V = params.potential

    def bracket(x, y):
        p0 = data.psi0(x, y)
        g0x, g0y = data.psi0.gradient(x, y)
        hxx, hxy, hyy = data.psi0.hessian(x, y)
        g1x, g1y = data.psi1.gradient(x, y)
        val = (hxx + hyy) - p0 / eps ** 2 - (V(x, y) + lam * np.abs(p0) ** 2) * p0
        # 2 i Omega L_z psi1 = 2 Omega D psi1;  Omega^2 eps^2 L_z^2 psi0 = -Omega^2 eps^2 D^2 psi0
        val = val + 2.0 * Om * _D(x, y, g1x, g1y) - Om ** 2 * eps ** 2 * _D2(x, y, g0x, g0y, hxx, hxy, hyy)
        if source is not None:
            val = val + source(x, y, 0.0)
        return val

    return bracket


def initialize(data: InitialData, params: ModelParams, dofs: DofMap, tau: float,
               source: Optional[Callable] = None, order: int = 2) -> StepperState:
    """Psi^0 = I_h psi0 and the Taylor start Psi^1.

    ``order=2`` is the full second-order start. Its last term scales like
    tau^2/eps^4, so for tau >> eps^2 it swamps Psi^1; ``order=1`` keeps only
    psi0 + (tau/eps^2) psi1 for that regime.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    eps = params.epsilon
    bracket = second_derivative_bracket(data, params, source) if order == 2 else None

    def start(x, y):
        v = data.psi0(x, y) + (tau / eps ** 2) * data.psi1(x, y)
        if bracket is not None:
            v = v + (tau ** 2 / (2 * eps ** 2)) * bracket(x, y)
        return v

    psi0 = interpolate(data.psi0, dofs)
    psi1 = interpolate(ScalarField2D(start), dofs)
    return StepperState(psi0, psi1, 1, tau)


def initialize_discrete(psi0: Field, psi1: Field, ops: OperatorSet, params: ModelParams, tau: float) -> StepperState:
    """Taylor start for data already in the FE space; the Laplacian and L_z terms act weakly.

    Psi^1 = psi0 + tau/eps^2 psi1 + tau^2/(2 eps^2) M^{-1} r with
    r = -A psi0 - M psi0/eps^2 - M_V psi0 - lam W(psi0, psi0) psi0 + 2i Omega B_L psi1 + Omega^2 eps^2 A_L psi0.
    """
    eps, lam, Om = params.epsilon, params.lam, params.omega
    psi0 = np.asarray(psi0, dtype=np.complex128)
    psi1 = np.asarray(psi1, dtype=np.complex128)
    g, _ = kernels.nonlinear_load(psi0, psi0, ops.dofs.element_dofs, ops.quad.table, ops.quad.cw, ops.n)
    # nonlinear_load(u, u) = (|u|^2 u, phi)
    r = (-(ops.A @ psi0) - (ops.M @ psi0) / eps ** 2 - ops.M_V @ psi0 - lam * g
         + 2j * Om * (ops.B_L @ psi1) + Om ** 2 * eps ** 2 * (ops.A_L @ psi0))
    acc = Factorization(ops.M).solve(r)
    return StepperState(psi0.copy(), psi0 + (tau / eps ** 2) * psi1 + (tau ** 2 / (2 * eps ** 2)) * acc, 1, tau)


def default_K0(state: StepperState, ops: OperatorSet) -> float:
    m = max(np.abs(ops.quad.eval(state.psi_prev)).max(initial=0.0),
            np.abs(ops.quad.eval(state.psi_curr)).max(initial=0.0))
    return 2.0 * m if m > 0 else 1.0


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

class Stepper:
    """Precomputed linear part of the scheme for fixed (ops, params, cfg)."""

    # refresh the cached factorization when a preconditioned correction solve needs more iterations
    refactor_iterations = 4
    krylov_max = 8

    def __init__(self, ops: OperatorSet, params: ModelParams, cfg: StepConfig):
        self.ops, self.params, self.cfg = ops, params, cfg
        self.mode = resolve_stabilization(cfg.stabilization, ops.dofs)
        eps, Om, tau = params.epsilon, params.omega, cfg.tau
        self.n = ops.n
        self.K = (ops.A + ops.M / eps ** 2 + ops.M_V - (Om ** 2 * eps ** 2) * ops.A_L).tocsr()
        self.mass_term = (eps ** 2 / tau ** 2) * ops.M
        cor = (1j * Om * eps ** 2 / tau) * ops.B_L
        L = self.mass_term + 0.5 * self.K - cor
        self.R_b = -0.5 * self.K - cor
        s = Om * eps ** 2 / (2.0 * tau)
        self.split_J = None
        if self.mode == "on":
            L = L + s * ops.J
            self.R_b = self.R_b + s * ops.J
        blocks = RealBlockSystem.from_complex(L)
        if self.mode == "split":
            # literal real-part / imaginary-part correction: real equation gets s J (a_r - b_r),
            # imaginary equation gets 2 s J a_i
            blocks.rr = (blocks.rr + s * ops.J).tocsr()
            blocks.ii = (blocks.ii + 2.0 * s * ops.J).tocsr()
            self.split_J = s * ops.J
        self.L = L.tocsr()
        self.blocks = blocks
        self.L_real = blocks.matrix().tocsr()
        self._fac: Optional[Factorization] = None
        self._fac_nonlinear = False
        self.lam = params.lam
        self.factorizations = 0

    # -- real-block helpers -------------------------------------------------

    def _block_matrix(self, W):
        if W is None:
            return self.L_real
        Wd = (0.5 * self.lam) * W
        return (self.L_real + sp.block_diag([Wd, Wd], format="csr")).tocsr()

    def _apply(self, Lr, z):
        return RealBlockSystem.unstack(Lr @ RealBlockSystem.stack(z))

    def _factorize(self, Lr):
        self._fac = Factorization(Lr)
        self.factorizations += 1

    def _solve(self, Lr, rhs, nonlinear: bool):
        """Solve Lr x = rhs (complex rhs, real-block operator); returns (x, relative residual)."""
        b = RealBlockSystem.stack(rhs)
        bnorm = np.linalg.norm(b)
        if bnorm == 0.0:
            return np.zeros(self.n, dtype=np.complex128), 0.0
        if self.cfg.solver == "iterative":
            x, _ = solve_iterative(Lr, b, tol=self.cfg.linear_tol, max_iter=20 * self.n + 100)
        elif not nonlinear:
            if self._fac is None or self._fac_nonlinear:
                self._factorize(Lr)
                self._fac_nonlinear = False
            x = self._fac.solve(b)
        else:
            if self._fac is None:
                self._factorize(Lr)
                self._fac_nonlinear = True
            try:
                x, its = _precond_solve(Lr, b, self._fac, self.cfg.linear_tol, self.krylov_max)
                if its > self.refactor_iterations:
                    self._factorize(Lr)
            except ConvergenceError:
                self._factorize(Lr)
                x = self._fac.solve(b)
        res = np.linalg.norm(b - Lr @ x) / bnorm
        return RealBlockSystem.unstack(x), float(res)

    # -- one step -----------------------------------------------------------

    def rhs(self, state: StepperState, source: Optional[Callable] = None):
        b, c = state.psi_prev, state.psi_curr
        r = self.mass_term @ (2.0 * c - b) + self.R_b @ b
        if source is not None:
            r = r + assemble_load(self.ops.dofs, source, state.t, eq=self.ops.quad)
        if self.split_J is not None:
            r = r + self.split_J @ b.real
        return r

    def weight_matrix(self, a, b):
        aq, bq = self.ops.quad.eval(a), self.ops.quad.eval(b)
        w = 0.5 * (aq.real ** 2 + aq.imag ** 2 + bq.real ** 2 + bq.imag ** 2)
        return self.ops.weighted_mass(w), float((aq.real ** 2 + aq.imag ** 2).max(initial=0.0))

    def step(self, state: StepperState, source: Optional[Callable] = None) -> StepperState:
        cfg = self.cfg
        b, c = state.psi_prev, state.psi_curr
        R = self.rhs(state, source)
        M = self.ops.M

        if self.lam == 0.0:
            a, res = self._solve(self.L_real, R, nonlinear=False)
            amax = float(np.abs(self.ops.quad.eval(a)).max(initial=0.0) ** 2)
            new = StepperState(c, a, state.n + 1, state.tau, 1, 0.0, res, state.safeguard_hits)
            return self._finish(state, new, amax)

        a = 2.0 * c - b
        rel = np.inf
        res = 0.0
        for k in range(1, cfg.fixedpoint_max + 1):
            W, _ = self.weight_matrix(a, b)
            Lr = self._block_matrix(W)
            # residual of the lagged system at the current iterate, then the correction
            r = R - self._apply(Lr, a) - (0.5 * self.lam) * (W @ b)
            d, res = self._solve(Lr, r, nonlinear=True)
            a = a + d
            na = math.sqrt(max(np.vdot(a, M @ a).real, 0.0))
            nd = math.sqrt(max(np.vdot(d, M @ d).real, 0.0))
            rel = nd / na if na > 0 else nd
            if rel <= cfg.fixedpoint_tol:
                break
        else:
            raise FixedPointError(cfg.fixedpoint_max, rel)
        amax = float((np.abs(self.ops.quad.eval(a)) ** 2).max(initial=0.0))
        new = StepperState(c, a, state.n + 1, state.tau, k, rel, res, state.safeguard_hits)
        return self._finish(state, new, amax)

    def _finish(self, old: StepperState, new: StepperState, amax: float) -> StepperState:
        K0 = self.cfg.K0
        if K0 is not None and amax > K0 ** 2:
            new.safeguard_hits += 1
            if new.safeguard_hits == 1:
                log.warning("step %d: |Psi|^2 = %.3e exceeds the truncation level K0^2 = %.3e "
                            "(further hits are counted silently)", new.n, amax, K0 ** 2)
        if self.cfg.debug:
            self.last_identity_defect = telescoping_defects(old.psi_prev, old.psi_curr, new.psi_curr,
                                                            self.ops.M, self.cfg.tau)
        return new


def _precond_solve(Lr, b, fac: Factorization, tol: float, max_iter: int):
    return solve_iterative(Lr, b, tol=tol, max_iter=max_iter, x0=fac.solve(b), preconditioner=fac)


def telescoping_defects(u_prev, u_curr, u_next, M, tau: float) -> tuple[float, float]:
    """Relative defects of the two three-level identities in the M inner product.

    Re(d_tt U, d_hat U) = (|d_t U^n|^2 - |d_t U^{n-1}|^2) / (2 tau)
    Re(U_tilde, d_hat U) = (|U^{n+1}|^2 - |U^{n-1}|^2) / (4 tau)
    """
    def ip(u, v):
        return np.vdot(v, M @ u)

    def nrm2(u):
        return ip(u, u).real

    dtt = (u_next - 2.0 * u_curr + u_prev) / tau ** 2
    dhat = (u_next - u_prev) / (2.0 * tau)
    tilde = 0.5 * (u_next + u_prev)
    fwd, bwd = (u_next - u_curr) / tau, (u_curr - u_prev) / tau
    lhs1, rhs1 = ip(dtt, dhat).real, (nrm2(fwd) - nrm2(bwd)) / (2.0 * tau)
    lhs2, rhs2 = ip(tilde, dhat).real, (nrm2(u_next) - nrm2(u_prev)) / (4.0 * tau)
    s1 = max(abs(lhs1), abs(rhs1), nrm2(fwd) / (2 * tau), nrm2(bwd) / (2 * tau), 1e-300)
    s2 = max(abs(lhs2), abs(rhs2), nrm2(u_next) / (4 * tau), nrm2(u_prev) / (4 * tau), 1e-300)
    return abs(lhs1 - rhs1) / s1, abs(lhs2 - rhs2) / s2


def step(state: StepperState, ops: OperatorSet, params: ModelParams, cfg: StepConfig,
         source: Optional[Callable] = None) -> StepperState:
    """One step from scratch (builds the linear part each call; use ``Stepper`` for loops)."""
    if not math.isclose(state.tau, cfg.tau, rel_tol=1e-12):
        raise ValueError(f"state was initialized with tau={state.tau}, config has tau={cfg.tau}")
    return Stepper(ops, params, cfg).step(state, source)


def resolve_steps(T: float, tau: float) -> tuple[int, float]:
    """Number of steps and the (possibly shrunk) step so that N tau = T."""
    if T == 0:
        return 0, tau
    ratio = T / tau
    N = int(round(ratio))
    if N >= 1 and abs(ratio - N) <= 1e-9 * max(1.0, ratio):
        return N, T / N
    N = math.ceil(ratio)
    new_tau = T / N
    msg = f"T/tau = {ratio:.6g} is not an integer; using tau = {new_tau:.6g} ({N} steps)"
    log.warning(msg)
    warnings.warn(msg, RuntimeWarning, stacklevel=3)
    return N, new_tau


def run(data: Optional[InitialData], params: ModelParams, dofs: DofMap, cfg: StepConfig,
        source: Optional[Callable] = None, callbacks: Sequence[Callable] = (), ops: Optional[OperatorSet] = None,
        snapshot_times: Sequence[float] = (), initial_state: Optional[StepperState] = None,
        record_every: int = 1):
    """Initialize (unless ``initial_state`` is given) and advance to ``params.T``.

    Returns ``(state, records, snapshots)`` where records are DiagnosticsRecord
    objects (one per ``record_every`` steps plus the first and last) and
    snapshots maps each requested time to the coefficient vector at the
    nearest time level.
    """
    from .assembly import assemble_operator_set
    from .diagnostics import make_record

    N, tau = resolve_steps(params.T, cfg.tau)
    if tau != cfg.tau:
        cfg = replace(cfg, tau=tau)
    if ops is None:
        ops = assemble_operator_set(dofs, params.potential)
    if initial_state is None:
        if data is None:
            raise ValueError("either initial data or an initial state is required")
        state = initialize(data, params, dofs, tau, source)
    else:
        state = initial_state
        if not math.isclose(state.tau, tau, rel_tol=1e-12):
            raise ValueError("initial state tau does not match the step size")
    if cfg.K0 is None:
        cfg = replace(cfg, K0=default_K0(state, ops))

    stepper = Stepper(ops, params, cfg)
    snap_levels = {}
    for ts in snapshot_times:
        snap_levels.setdefault(min(max(int(round(ts / tau)), 0), N), []).append(ts)
    snapshots = {}

    def take_snapshot(st):
        levels = ((st.n - 1, st.psi_prev), (st.n, st.psi_curr)) if st is state0 else ((st.n, st.psi_curr),)
        for level, psi in levels:
            for ts in snap_levels.get(level, ()):
                snapshots[ts] = psi.copy()

    state0 = state
    first = make_record(state, ops, params, tau, None)
    records = [first]
    take_snapshot(state)
    for cb in callbacks:
        cb(state, first)
    max_defect = (0.0, 0.0)
    for _ in range(state.n, N):
        state = stepper.step(state, source)
        if cfg.debug:
            d = stepper.last_identity_defect
            max_defect = (max(max_defect[0], d[0]), max(max_defect[1], d[1]))
        if (state.n - 1) % record_every == 0 or state.n == N or callbacks:
            rec = make_record(state, ops, params, tau, first)
            if (state.n - 1) % record_every == 0 or state.n == N:
                records.append(rec)
            for cb in callbacks:
                cb(state, rec)
        take_snapshot(state)
    state.info = {"factorizations": stepper.factorizations, "identity_defects": max_defect,
                  "stabilization": stepper.mode, "tau": tau, "steps": N, "K0": cfg.K0}
    return state, records, snapshots
