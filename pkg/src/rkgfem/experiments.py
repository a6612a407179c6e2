"""Named experiments with their published parameter sets, and the drivers that run them.

Every experiment is a flat dict of defaults (see ``EXPERIMENTS``). A run is
described by an :class:`ExperimentConfig` built from those defaults plus
``key=value`` overrides. Drivers push results into a sink as they are
produced, so a failing run still leaves its partial output behind.
"""
from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import fields as F
from .assembly import ModelParams, OperatorSet, assemble_operator_set
from .diagnostics import DiagnosticsRecord, ErrorReport, count_vortices, error_norms, fit_rates
from .gflm import GflmConfig, GflmState, euler_lagrange_residuals, gflm_solve
from .mesh import Domain, build_uniform_mesh
from .rkg import InitialData, StepConfig, initialize, initialize_discrete, run
from .spaces import DofMap, ScalarField2D, SpaceKind, build_dof_map, interpolate

log = logging.getLogger(__name__)

POTENTIALS: dict[str, Callable[[], ScalarField2D]] = {
    "zero": F.zero_field,
    "harmonic": lambda: F.harmonic_potential(1.0),        # x^2 + y^2
    "harmonic_half": lambda: F.harmonic_potential(0.5),   # (x^2 + y^2)/2
    "damped": F.damped_harmonic_potential,                # (x^2 + y^2)/2 exp(-(x^2 + y^2))
}

# Reference parameter sets. Mesh sizes, step counts and anything marked "chosen"
# are not given in the source and are documented substitutes.
EXPERIMENTS: dict[str, dict] = {
    "convergence_smooth": dict(
        description="manufactured smooth solution (t+1)^3 sin(pi x) sin(pi y), mesh sweep h = tau",
        domain="-1,1,-1,1", T=1.0, lam=1.0, omega=0.8, epsilon="0.01", potential="damped",
        space="conforming", h="1/4,1/8,1/16,1/32", tau_factor=1.0),
    "convergence_nonsmooth": dict(
        description="manufactured solution (t+1)^3 (1-(2x-1)^2)^s (1-(2y-1)^2)^s, mesh sweep",
        domain="0,1,0,1", T=0.1, lam=1.0, omega=0.8, epsilon="0.001", potential="damped",
        space="conforming", h="1/4,1/8,1/16,1/32", tau_factor=0.1, s=0.6),
    "conservation": dict(
        description="energy and charge drift of a rotating vortex-like pulse",
        domain="-8,8,-8,8", T=10.0, lam=0.5, omega=0.8, epsilon="1e-3,1e-4,1e-5", potential="damped",
        space="nonconforming", n=128, steps=2000, omega_freq=1e-3, start="linear"),
    "vortex_generation": dict(
        description="vortex nucleation from a phase-imprinted Gaussian, relativistic regime",
        domain="-5,5,-5,5", T=7.0, lam=2.0, omega=1.0, epsilon="1", potential="harmonic",
        space="conforming", n=128, steps=2000, N0="2,3", snapshot_times="0,1.5,2.9,5.9"),
    "bound_state_relativistic": dict(
        description="two-component bound state by gradient flow, then Klein-Gordon evolution",
        domain="-8,8,-8,8", T=6.0, lam=50.0, omega=0.9, epsilon="1,0.125,0.03125", potential="harmonic_half",
        space="conforming", n=128, steps=2000, alpha=0.5, gflm_tol=1e-8, snapshot_times="0,3,6"),
    "vortex_pairs": dict(
        description="interaction of two vortex pairs",
        domain="-8,8,-8,8", T=3.15, lam=10.0, omega=0.5, epsilon="0.25,0.125,0.03125", potential="harmonic_half",
        space="conforming", n=128, steps=2000, c0=1.32, snapshot_times="0.79,1.58,2.37,3.15"),
    "gflm_only": dict(
        description="gradient-flow bound state only",
        domain="-8,8,-8,8", lam=50.0, omega=0.9, epsilon="1", potential="harmonic_half",
        space="conforming", n=128, alpha=0.5, gflm_tol=1e-8, initial="paired_vortex"),
    "custom": dict(
        description="free-form run: choose domain, parameters, potential and an initial profile",
        domain="-8,8,-8,8", T=1.0, lam=0.0, omega=0.0, epsilon="1", potential="harmonic_half",
        space="conforming", n=64, steps=200, initial="lorentz_gaussian", omega_freq=1.0),
}

# Taylor order of the two-level start
START_ORDERS = {"taylor": 2, "linear": 1}

_COMMON = dict(seed=0, stabilization="auto", solver="direct", fixedpoint_tol=1e-12, fixedpoint_max=50,
               record_every=1, workers=1, snapshot_times="", tau="", tau_flow="", gflm_max_iterations=200000,
               N0="2", c0=1.32, s=0.6, alpha=0.5, gflm_tol=1e-8, omega_freq=1e-3, initial="", output="out",
               h="", n="", steps="", tau_factor=1.0, T=1.0, vortex_floor=0.01, start="taylor")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def parse_key_values(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _num(v) -> float:
    """Float from '0.25', '1e-3' or a fraction such as '1/32'."""
    if isinstance(v, (int, float)):
        return float(v)
    s = str(v).strip()
    if "/" in s:
        a, b = s.split("/", 1)
        return float(a) / float(b)
    return float(s)


def _list(v, conv=_num) -> tuple:
    if isinstance(v, (list, tuple)):
        return tuple(conv(x) for x in v)
    s = str(v).strip()
    return tuple(conv(x) for x in s.split(",") if x.strip()) if s else ()


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    space: SpaceKind
    mesh_sizes: tuple                 # cells per side, one entry per sweep level
    domain: Domain
    T: float
    epsilons: tuple
    lam: float
    omega: float
    potential: str
    output_dir: Path
    tau: Optional[float] = None       # explicit step; otherwise steps or tau_factor * h
    steps: Optional[int] = None
    tau_factor: float = 1.0
    snapshot_times: tuple = ()
    seed: int = 0                     # reserved; all drivers are deterministic
    stabilization: str = "auto"
    solver: str = "direct"
    fixedpoint_tol: float = 1e-12
    fixedpoint_max: int = 50
    record_every: int = 1
    workers: int = 1
    extra: dict = field(default_factory=dict)

    def params(self, epsilon: float) -> ModelParams:
        return ModelParams(epsilon, self.lam, self.omega, POTENTIALS[self.potential](), self.domain, self.T)

    def step_size(self, n: int) -> float:
        if self.tau is not None:
            return self.tau
        if self.steps is not None:
            return self.T / self.steps if self.T > 0 else 1.0
        h = (self.domain.x_max - self.domain.x_min) / n
        return self.tau_factor * h

    def step_config(self, tau: float, **kw) -> StepConfig:
        return StepConfig(tau=tau, fixedpoint_tol=self.fixedpoint_tol, fixedpoint_max=self.fixedpoint_max,
                          solver=self.solver, stabilization=self.stabilization, **kw)


def make_config(experiment: str, overrides: Optional[dict] = None) -> ExperimentConfig:
    if experiment not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {experiment!r}; known: {', '.join(EXPERIMENTS)}")
    vals = dict(_COMMON)
    vals.update({k: v for k, v in EXPERIMENTS[experiment].items() if k != "description"})
    overrides = dict(overrides or {})
    overrides.pop("experiment", None)
    unknown = set(overrides) - set(vals)
    if unknown:
        raise ValueError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
    vals.update(overrides)

    dom = _list(vals["domain"])
    if len(dom) != 4:
        raise ValueError("domain must be x_min,x_max,y_min,y_max")
    domain = Domain(*dom)
    width = domain.x_max - domain.x_min
    if str(vals["n"]).strip():
        sizes = tuple(int(x) for x in _list(vals["n"]))
    else:
        sizes = tuple(int(round(width / h)) for h in _list(vals["h"]))
    if not sizes or any(s < 1 for s in sizes):
        raise ValueError("need at least one mesh size (keys n or h)")
    if vals["potential"] not in POTENTIALS:
        raise ValueError(f"unknown potential {vals['potential']!r}; known: {', '.join(POTENTIALS)}")

    def opt(key, conv):
        v = vals[key]
        return None if str(v).strip() == "" else conv(v)

    extra = {
        "N0": tuple(int(x) for x in _list(vals["N0"])),
        "c0": _num(vals["c0"]),
        "s": _num(vals["s"]),
        "alpha": _num(vals["alpha"]),
        "gflm_tol": _num(vals["gflm_tol"]),
        "tau_flow": opt("tau_flow", _num),
        "gflm_max_iterations": int(_num(vals["gflm_max_iterations"])),
        "omega_freq": _num(vals["omega_freq"]),
        "initial": str(vals["initial"]),
        "vortex_floor": _num(vals["vortex_floor"]),
        "start": str(vals["start"]),
    }
    if extra["start"] not in START_ORDERS:
        raise ValueError(f"start must be one of {', '.join(START_ORDERS)}, got {extra['start']!r}")
    return ExperimentConfig(
        experiment=experiment,
        space=SpaceKind.parse(vals["space"]),
        mesh_sizes=sizes,
        domain=domain,
        T=_num(vals["T"]),
        epsilons=_list(vals["epsilon"]),
        lam=_num(vals["lam"]),
        omega=_num(vals["omega"]),
        potential=vals["potential"],
        output_dir=Path(vals["output"]),
        tau=opt("tau", _num),
        steps=opt("steps", lambda v: int(_num(v))),
        tau_factor=_num(vals["tau_factor"]),
        snapshot_times=_list(vals["snapshot_times"]),
        seed=int(_num(vals["seed"])),
        stabilization=str(vals["stabilization"]),
        solver=str(vals["solver"]),
        fixedpoint_tol=_num(vals["fixedpoint_tol"]),
        fixedpoint_max=int(_num(vals["fixedpoint_max"])),
        record_every=max(1, int(_num(vals["record_every"]))),
        workers=max(1, int(_num(vals["workers"]))),
        extra=extra,
    )


# ---------------------------------------------------------------------------
# result sinks
# ---------------------------------------------------------------------------

class Sink:
    """Receives results as they are produced. The base class keeps them in memory."""

    def __init__(self):
        self.records: dict[str, list] = {}
        self.errors: dict[str, list] = {}
        self.snapshots: dict[str, list] = {}
        self.gflm: dict[str, list] = {}
        self.summary: dict[str, dict] = {}

    def record(self, case: str, rec: DiagnosticsRecord):
        self.records.setdefault(case, []).append(rec)

    def error_row(self, case: str, rep: ErrorReport):
        self.errors.setdefault(case, []).append(rep)

    def snapshot(self, case: str, label: str, psi, dofs: DofMap, t: float):
        self.snapshots.setdefault(case, []).append((label, np.asarray(psi).copy(), dofs, t))

    def gflm_row(self, case: str, row: tuple):
        self.gflm.setdefault(case, []).append(row)

    def summarize(self, case: str, key: str, value):
        self.summary.setdefault(case, {})[key] = value

    def close(self):
        pass


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------

def lorentz_gaussian_pulse() -> ScalarField2D:
    """(x + iy)/(1 + r^2) exp(-(2x^2 + 1.5y^2)/2)."""
    return F.product(F.product(F.linear(1.0, 1j), F.lorentzian()), F.gaussian(1.0, 0.75), name="pulse")


def imprinted_gaussian(winding: int) -> ScalarField2D:
    """exp(-2x^2 - 1.5y^2) exp(i N theta)."""
    return F.product(F.gaussian(2.0, 1.5), F.angular_phase(winding), name=f"imprinted N={winding}")


def vortex_pair_profile(c0: float) -> ScalarField2D:
    """((x-c0)+iy)((x+c0)+iy)(x+i(y-c0))(x+i(y+c0)) exp(-r^2/2)."""
    f = F.product(F.linear(1.0, 1j, -c0), F.linear(1.0, 1j, c0))
    f = F.product(f, F.linear(1.0, 1j, -1j * c0))
    f = F.product(f, F.linear(1.0, 1j, 1j * c0))
    return F.product(f, F.gaussian(0.5, 0.5), name=f"vortex pairs c0={c0}")


def paired_vortex_guess(omega: float):
    """z+ = (1 - Omega) phi_g + Omega phi_g (x - iy) and z- = conj(z+), phi_g = exp(-r^2/2)/sqrt(pi)."""
    phig = F.gaussian(0.5, 0.5, 1.0 / math.sqrt(math.pi))
    zp = F.product(phig, F.linear(omega, -1j * omega, 1.0 - omega), name="z+ guess")
    zm = F.product(phig, F.linear(omega, 1j * omega, 1.0 - omega), name="z- guess")
    return zp, zm


def oscillator_guess():
    """Gaussian start for the single-component linear check."""
    return F.gaussian(0.5, 0.5, 1.0 / math.sqrt(math.pi)), F.zero_field()


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------

def _case_label(**kw) -> str:
    return "_".join(f"{k}={v:g}" if isinstance(v, float) else f"{k}={v}" for k, v in kw.items())


def _space(cfg: ExperimentConfig, n: int):
    mesh = build_uniform_mesh(cfg.domain, n, n)
    return build_dof_map(mesh, cfg.space)


def _h1_growth(records) -> float:
    base = records[0].h1_norm if records else 0.0
    top = max((r.h1_norm for r in records), default=0.0)
    return top / base if base > 0 else float("inf") if top > 0 else 1.0


def _evolve(case: str, cfg: ExperimentConfig, sink: Sink, params: ModelParams, dofs: DofMap, ops: OperatorSet,
            state=None, data: Optional[InitialData] = None, source=None, K0=None, vortices=False):
    """Shared time loop: stream diagnostics and snapshots, then summarize drifts."""
    n = dofs.mesh.nx
    tau = cfg.step_size(n)
    step_cfg = cfg.step_config(tau, K0=K0)
    recs = []

    def cb(st, rec):
        if rec.n == 1 or (rec.n - 1) % cfg.record_every == 0 or rec.n == round(params.T / st.tau):
            sink.record(case, rec)
            recs.append(rec)

    if state is not None and not math.isclose(state.tau, tau, rel_tol=1e-12):
        raise ValueError("initial state step size does not match the configuration")
    final, _, snaps = run(data, params, dofs, step_cfg, source=source, callbacks=[cb], ops=ops,
                          snapshot_times=cfg.snapshot_times, initial_state=state,
                          record_every=max(cfg.record_every, 10 ** 9))
    for ts in sorted(snaps):
        sink.snapshot(case, f"t={ts:g}", snaps[ts], dofs, ts)
        if vortices and dofs.kind is SpaceKind.CONFORMING_Q11:
            rep = count_vortices(snaps[ts], dofs, density_floor=cfg.extra["vortex_floor"])
            sink.summarize(case, f"vortices(t={ts:g})", rep.count)
            sink.summarize(case, f"winding(t={ts:g})", rep.total_winding)
    sink.summarize(case, "steps", final.info["steps"])
    sink.summarize(case, "tau", final.info["tau"])
    sink.summarize(case, "stabilization", final.info["stabilization"])
    sink.summarize(case, "max_rel_E_err", max((r.rel_E_err for r in recs), default=0.0))
    sink.summarize(case, "max_rel_Q_err", max((r.rel_Q_err for r in recs), default=0.0))
    sink.summarize(case, "h1_growth", _h1_growth(recs))
    sink.summarize(case, "safeguard_hits", final.safeguard_hits)
    return final, recs


def run_convergence(cfg: ExperimentConfig, sink: Sink, nonsmooth: bool):
    pot = POTENTIALS[cfg.potential]()
    if nonsmooth:
        prof_1d = F.bump_profile(cfg.extra["s"])
    else:
        prof_1d = F.sine_profile()
    profile = F.Separable(prof_1d, prof_1d, name="profile")
    for eps in cfg.epsilons:
        case = _case_label(eps=eps)
        params = cfg.params(eps)
        ms = F.ManufacturedSolution(profile, eps, cfg.lam, cfg.omega, pot)
        data = InitialData(ms.psi0(), ms.psi1())
        # safeguard level from the known solution: 2 sup_t |Psi|
        K0 = 2.0 * ms.g(cfg.T) * 1.0

        def level(n):
            dofs = _space(cfg, n)
            ops = assemble_operator_set(dofs, pot)
            tau = cfg.step_size(n)
            final, recs, _ = run(data, params, dofs, cfg.step_config(tau, K0=K0), source=ms.source, ops=ops,
                                 record_every=cfg.record_every)
            rep = error_norms(final.psi_curr, ms.exact(final.t), dofs, ops=ops, tau=final.tau)
            return rep, recs, final

        if cfg.workers > 1:
            with ThreadPoolExecutor(cfg.workers) as pool:
                results = list(pool.map(level, cfg.mesh_sizes))
        else:
            results = [level(n) for n in cfg.mesh_sizes]
        reports = []
        for rep, recs, final in results:
            sink.error_row(case, rep)
            reports.append(rep)
        # per-step diagnostics of the finest level
        for rec in results[-1][1]:
            sink.record(case, rec)
        for k, v in fit_rates(reports).items():
            sink.summarize(case, f"rate_{k}", v)
        sink.summarize(case, "finest_l2", reports[-1].l2)
        sink.summarize(case, "h1_growth", _h1_growth(results[-1][1]))
        sink.summarize(case, "safeguard_hits", sum(r[2].safeguard_hits for r in results))


def run_conservation(cfg: ExperimentConfig, sink: Sink):
    n = cfg.mesh_sizes[0]
    dofs = _space(cfg, n)
    pot = POTENTIALS[cfg.potential]()
    ops = assemble_operator_set(dofs, pot)
    psi0 = lorentz_gaussian_pulse()
    data = InitialData(psi0, F.scaled(psi0, 1j * cfg.extra["omega_freq"]))
    order = START_ORDERS[cfg.extra["start"]]
    for eps in cfg.epsilons:
        params = cfg.params(eps)
        state = initialize(data, params, dofs, cfg.step_size(n), order=order)
        _evolve(_case_label(eps=eps), cfg, sink, params, dofs, ops, state=state)


def run_vortex_generation(cfg: ExperimentConfig, sink: Sink):
    n = cfg.mesh_sizes[0]
    dofs = _space(cfg, n)
    ops = assemble_operator_set(dofs, POTENTIALS[cfg.potential]())
    for eps, N0 in itertools.product(cfg.epsilons, cfg.extra["N0"]):
        params = cfg.params(eps)
        # the imprinted phase is singular at the origin: the Taylor start acts weakly on the interpolant
        p0 = interpolate(imprinted_gaussian(N0), dofs)
        state = initialize_discrete(p0, 1j * p0, ops, params, cfg.step_size(n))
        _evolve(_case_label(eps=eps, N0=N0), cfg, sink, params, dofs, ops, state=state, vortices=True)


def gflm_config(cfg: ExperimentConfig, alpha: Optional[float] = None) -> GflmConfig:
    return GflmConfig(alpha=cfg.extra["alpha"] if alpha is None else alpha, tau_flow=cfg.extra["tau_flow"],
                      tol=cfg.extra["gflm_tol"], lam=cfg.lam, omega=cfg.omega,
                      max_iterations=cfg.extra["gflm_max_iterations"])


def _bound_state(case: str, cfg: ExperimentConfig, sink: Sink, ops: OperatorSet) -> GflmState:
    gcfg = gflm_config(cfg)
    initial = oscillator_guess() if cfg.extra["initial"] == "oscillator" else paired_vortex_guess(cfg.omega)
    report_every = max(1, cfg.record_every)

    def cb(st):
        if st.iteration % report_every == 0:
            sink.gflm_row(case, (st.iteration, st.energies[-1], st.potentials[-1][0], st.potentials[-1][1],
                                 abs(st.energies[-1] - st.energies[-2])))

    st = gflm_solve(initial, gcfg, ops, callback=cb)
    if st.iteration % report_every != 0:
        sink.gflm_row(case, (st.iteration, st.energies[-1], st.potentials[-1][0], st.potentials[-1][1],
                             abs(st.energies[-1] - st.energies[-2]) if len(st.energies) > 1 else 0.0))
    res = euler_lagrange_residuals(st, ops, gcfg)
    sink.summarize(case, "gflm_iterations", st.iteration)
    sink.summarize(case, "gflm_converged", st.converged)
    sink.summarize(case, "gflm_energy", st.energies[-1])
    sink.summarize(case, "u_plus", st.potentials[-1][0])
    sink.summarize(case, "u_minus", st.potentials[-1][1])
    sink.summarize(case, "el_residual_plus", res[0][0] / res[0][1] if res[0][1] > 0 else 0.0)
    sink.summarize(case, "el_residual_minus", res[1][0] / res[1][1] if res[1][1] > 0 else 0.0)
    sink.snapshot(case, "z_plus", st.z_plus, ops.dofs, float("nan"))
    sink.snapshot(case, "z_minus", st.z_minus, ops.dofs, float("nan"))
    sink.snapshot(case, "z_plus+conj(z_minus)", st.z_plus + np.conj(st.z_minus), ops.dofs, float("nan"))
    return st


def run_gflm_only(cfg: ExperimentConfig, sink: Sink):
    if cfg.space is not SpaceKind.CONFORMING_Q11:
        raise ValueError("the gradient flow runs on the conforming space")
    dofs = _space(cfg, cfg.mesh_sizes[0])
    ops = assemble_operator_set(dofs, POTENTIALS[cfg.potential]())
    _bound_state("gflm", cfg, sink, ops)


def run_bound_state(cfg: ExperimentConfig, sink: Sink):
    if cfg.space is not SpaceKind.CONFORMING_Q11:
        raise ValueError("the bound-state experiment runs on the conforming space")
    n = cfg.mesh_sizes[0]
    dofs = _space(cfg, n)
    ops = assemble_operator_set(dofs, POTENTIALS[cfg.potential]())
    st = _bound_state("gflm", cfg, sink, ops)
    zc = np.conj(st.z_minus)
    psi0, psi1 = st.z_plus + zc, 1j * (st.z_plus - zc)
    for eps in cfg.epsilons:
        params = cfg.params(eps)
        state = initialize_discrete(psi0, psi1, ops, params, cfg.step_size(n))
        _evolve(_case_label(eps=eps), cfg, sink, params, dofs, ops, state=state, vortices=True)


def run_vortex_pairs(cfg: ExperimentConfig, sink: Sink):
    n = cfg.mesh_sizes[0]
    dofs = _space(cfg, n)
    ops = assemble_operator_set(dofs, POTENTIALS[cfg.potential]())
    prof = vortex_pair_profile(cfg.extra["c0"])
    data = InitialData(prof, prof)
    for eps in cfg.epsilons:
        _evolve(_case_label(eps=eps), cfg, sink, cfg.params(eps), dofs, ops, data=data, vortices=True)


CUSTOM_INITIAL = {
    "lorentz_gaussian": lambda cfg: lorentz_gaussian_pulse(),
    "vortex_pairs": lambda cfg: vortex_pair_profile(cfg.extra["c0"]),
    "gaussian": lambda cfg: F.gaussian(0.5, 0.5),
}


def run_custom(cfg: ExperimentConfig, sink: Sink):
    name = cfg.extra["initial"] or "lorentz_gaussian"
    if name not in CUSTOM_INITIAL:
        raise ValueError(f"unknown initial profile {name!r}; known: {', '.join(CUSTOM_INITIAL)}")
    psi0 = CUSTOM_INITIAL[name](cfg)
    data = InitialData(psi0, F.scaled(psi0, 1j * cfg.extra["omega_freq"]))
    dofs = _space(cfg, cfg.mesh_sizes[0])
    ops = assemble_operator_set(dofs, POTENTIALS[cfg.potential]())
    order = START_ORDERS[cfg.extra["start"]]
    for eps in cfg.epsilons:
        params = cfg.params(eps)
        state = initialize(data, params, dofs, cfg.step_size(dofs.mesh.nx), order=order)
        _evolve(_case_label(eps=eps), cfg, sink, params, dofs, ops, state=state,
                vortices=cfg.space is SpaceKind.CONFORMING_Q11)


DRIVERS = {
    "convergence_smooth": lambda c, s: run_convergence(c, s, nonsmooth=False),
    "convergence_nonsmooth": lambda c, s: run_convergence(c, s, nonsmooth=True),
    "conservation": run_conservation,
    "vortex_generation": run_vortex_generation,
    "bound_state_relativistic": run_bound_state,
    "vortex_pairs": run_vortex_pairs,
    "gflm_only": run_gflm_only,
    "custom": run_custom,
}


def run_experiment(cfg: ExperimentConfig, sink: Optional[Sink] = None) -> Sink:
    """Run ``cfg`` and return the sink holding (or having written) the results."""
    sink = sink if sink is not None else Sink()
    try:
        DRIVERS[cfg.experiment](cfg, sink)
    finally:
        sink.close()
    return sink
