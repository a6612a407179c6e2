import math

import numpy as np
import pytest
import sympy as sym
from hypothesis import given, settings, strategies as st

from rkgfem import Domain, ScalarField2D, build_dof_map, build_uniform_mesh, interpolate
from rkgfem.assembly import ModelParams
from rkgfem.diagnostics import discrete_charge, discrete_energy
from rkgfem.fields import (ManufacturedSolution, Separable, gaussian, harmonic_potential, linear, product,
                           sine_profile, zero_field)
from rkgfem.rkg import (FixedPointError, InitialData, StepConfig, Stepper, StepperState, cutoff_chi, cutoff_mu,
                        default_K0, initialize, initialize_discrete, resolve_stabilization, resolve_steps, run,
                        second_derivative_bracket, step, telescoping_defects)

from conftest import make_ops, random_field


def pulse():
    return InitialData(product(gaussian(1.0, 1.5), linear(1.0, 1j, 0.3)), product(gaussian(2.0, 1.0), linear(0.5j, 0.0, 1.0)))


def conserved(state, ops, params, tau):
    return (discrete_energy(state.psi_curr, state.psi_prev, ops, params, tau),
            discrete_charge(state.psi_curr, state.psi_prev, ops, params, tau))


# ---------------------------------------------------------------------------
# cutoff
# ---------------------------------------------------------------------------

def test_cutoff_values():
    assert cutoff_chi(0.0) == 1.0 and cutoff_chi(-0.999) == 1.0
    assert cutoff_chi(1.5) == pytest.approx(math.exp(-1.0 / 3.0), rel=1e-15)
    assert cutoff_chi(2.0) == 0.0 and cutoff_chi(-7.0) == 0.0
    np.testing.assert_array_equal(cutoff_chi(np.array([0.5, -0.5])), [1.0, 1.0])
    K0 = 1.7
    s = np.array([0.0, 0.3, K0 ** 2 * 0.999])
    np.testing.assert_array_equal(cutoff_mu(s, K0), s)
    assert cutoff_mu(2 * K0 ** 2, K0) == 0.0
    with pytest.raises(ValueError):
        cutoff_mu(1.0, 0.0)


def test_cutoff_mu_is_c1_at_both_joins():
    K0, h = 1.3, 1e-7
    for s0 in (K0 ** 2, 2 * K0 ** 2):
        left = (cutoff_mu(s0 - h, K0) - cutoff_mu(s0 - 2 * h, K0)) / h
        right = (cutoff_mu(s0 + 2 * h, K0) - cutoff_mu(s0 + h, K0)) / h
        assert abs(left - right) <= 1e-4
    x = np.linspace(-3, 3, 2001)
    c = cutoff_chi(x)
    assert np.all((0 <= c) & (c <= 1))
    np.testing.assert_array_equal(c, cutoff_chi(-x))
    assert np.all(np.diff(c[x >= 0]) <= 0)


# ---------------------------------------------------------------------------
# configuration and data validation
# ---------------------------------------------------------------------------

def test_initial_data_requires_derivatives():
    with pytest.raises(ValueError):
        InitialData(ScalarField2D(lambda x, y: x), zero_field())
    with pytest.raises(ValueError):
        InitialData(zero_field(), ScalarField2D(lambda x, y: x))


def test_initial_data_rejects_wrong_derivatives():
    g = gaussian(1.0, 1.0)
    bad = ScalarField2D(g.value, lambda x, y: (2.0 * g(x, y), 0.0 * x), g.hess, name="bad")
    with pytest.raises(ValueError, match="psi0"):
        InitialData(bad, g)
    with pytest.raises(ValueError, match="psi1"):
        InitialData(g, bad)
    InitialData(bad, g, n_check=0)  # checking can be switched off


@pytest.mark.parametrize("kw", [dict(tau=0.0), dict(tau=0.1, solver="lu"), dict(tau=0.1, stabilization="x"),
                                dict(tau=0.1, fixedpoint_max=0), dict(tau=0.1, fixedpoint_tol=0.0)])
def test_step_config_validation(kw):
    with pytest.raises(ValueError):
        StepConfig(**kw)


def test_resolve_stabilization():
    m = build_uniform_mesh(Domain.square(-1, 1), 2, 2)
    assert resolve_stabilization("auto", build_dof_map(m, "c")) == "off"
    assert resolve_stabilization("auto", build_dof_map(m, "nc")) == "on"
    assert resolve_stabilization("split", build_dof_map(m, "c")) == "split"


def test_resolve_steps():
    assert resolve_steps(1.0, 0.1) == (10, pytest.approx(0.1))
    assert resolve_steps(0.0, 0.3) == (0, 0.3)
    with pytest.warns(RuntimeWarning):
        N, tau = resolve_steps(1.0, 0.3)
    assert N == 4 and tau == pytest.approx(0.25)


def test_step_rejects_tau_mismatch():
    ops = make_ops("c", 3)
    params = ModelParams(1.0, 0.0, 0.0, zero_field())
    z = np.zeros(ops.n, dtype=complex)
    with pytest.raises(ValueError):
        step(StepperState(z, z, 1, 0.1), ops, params, StepConfig(tau=0.2))


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def test_bracket_matches_symbolic_oracle():
    x, y = sym.symbols("x y", real=True)
    eps, lam, Om = 0.7, 1.3, 0.6
    p0 = (x + sym.I * y + sym.Rational(3, 10)) * sym.exp(-x ** 2 - sym.Rational(3, 2) * y ** 2)
    p1 = (sym.I * x / 2 + 1) * sym.exp(-2 * x ** 2 - y ** 2)
    V = (x ** 2 + y ** 2) / 2
    D = lambda f: x * sym.diff(f, y) - y * sym.diff(f, x)
    # eps^2 Psi_tt from the model with eps^2 Psi_t = p1 and L_z = -i D
    expr = (sym.diff(p0, x, 2) + sym.diff(p0, y, 2) - p0 / eps ** 2 - V * p0
            - lam * p0 * sym.conjugate(p0) * p0 + 2 * Om * D(p1) - Om ** 2 * eps ** 2 * D(D(p0)))
    oracle = sym.lambdify((x, y), expr, "numpy")
    data = pulse()
    br = second_derivative_bracket(data, ModelParams(eps, lam, Om, harmonic_potential(0.5)))
    pts = np.random.default_rng(3).uniform(-1.5, 1.5, (2, 40))
    np.testing.assert_allclose(br(*pts), oracle(*pts), rtol=1e-12, atol=1e-12)


def test_bracket_with_manufactured_source():
    ms = ManufacturedSolution(Separable(sine_profile(), sine_profile()), 0.3, 1.0, 0.8, harmonic_potential(0.5))
    data = InitialData(ms.psi0(), ms.psi1())
    br = second_derivative_bracket(data, ModelParams(0.3, 1.0, 0.8, harmonic_potential(0.5)), ms.source)
    pts = np.random.default_rng(1).uniform(0, 1, (2, 30))
    np.testing.assert_allclose(br(*pts), 0.3 ** 2 * ms.ddg(0.0) * ms.u(*pts), rtol=1e-11, atol=1e-11)


def test_initialize_taylor_start():
    ops = make_ops("c", 8, domain=(-3, 3, -3, 3))
    params = ModelParams(0.8, 1.0, 0.5, zero_field())
    data = pulse()
    psi0 = interpolate(data.psi0, ops.dofs)
    gaps = []
    for tau in (1e-2, 1e-3, 1e-4):
        st_ = initialize(data, params, ops.dofs, tau)
        assert st_.n == 1 and st_.tau == tau
        np.testing.assert_array_equal(st_.psi_prev, psi0)
        gaps.append(np.abs(st_.psi_curr - psi0 - tau / 0.64 * interpolate(data.psi1, ops.dofs)).max())
    # remainder is the tau^2 term
    assert gaps[1] / gaps[0] == pytest.approx(1e-2, rel=1e-6)
    with pytest.raises(ValueError):
        initialize(data, params, ops.dofs, 0.0)
    with pytest.raises(ValueError):
        initialize(data, params, ops.dofs, 0.1, order=3)


def test_initialize_first_order_start_drops_the_stiff_term():
    ops = make_ops("c", 8, domain=(-3, 3, -3, 3))
    eps, tau = 1e-3, 0.05
    params = ModelParams(eps, 0.5, 0.8, zero_field())
    data = pulse()
    lin = initialize(data, params, ops.dofs, tau, order=1)
    expect = interpolate(data.psi0, ops.dofs) + tau / eps ** 2 * interpolate(data.psi1, ops.dofs)
    np.testing.assert_allclose(lin.psi_curr, expect, rtol=1e-14, atol=1e-14)
    full = initialize(data, params, ops.dofs, tau)
    # tau^2 / eps^4 is about 1e9 against tau / eps^2 = 5e4
    assert np.abs(full.psi_curr).max() > 1e3 * np.abs(lin.psi_curr).max()


def test_initialize_discrete_agrees_weakly():
    """The discrete and pointwise starts differ by a tau^2 term that shrinks with h."""
    params = ModelParams(1.0, 0.5, 0.4, zero_field())
    data = pulse()
    tau = 0.05
    gaps = []
    for n in (8, 16, 32):
        ops = make_ops("c", n, domain=(-3, 3, -3, 3))
        a = initialize(data, params, ops.dofs, tau)
        b = initialize_discrete(interpolate(data.psi0, ops.dofs), interpolate(data.psi1, ops.dofs), ops, params, tau)
        np.testing.assert_array_equal(a.psi_prev, b.psi_prev)
        gaps.append(np.abs(a.psi_curr - b.psi_curr).max() / tau ** 2)
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 0.5 * gaps[0]


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("kind", ["c", "nc"])
def test_zero_data_stays_zero(kind):
    ops = make_ops(kind, 4)
    params = ModelParams(1.0, 2.0, 0.5, harmonic_potential(), T=0.5)
    cfg = StepConfig(tau=0.1)
    z = np.zeros(ops.n, dtype=complex)
    out = Stepper(ops, params, cfg).step(StepperState(z, z, 1, 0.1))
    assert not np.any(out.psi_curr)
    assert out.n == 2


def test_linear_step_needs_one_iteration(rng):
    ops = make_ops("c", 5)
    params = ModelParams(0.5, 0.0, 0.7, harmonic_potential())
    z0, z1 = random_field(rng, ops.n), random_field(rng, ops.n)
    out = Stepper(ops, params, StepConfig(tau=0.05)).step(StepperState(z0, z1, 1, 0.05))
    assert out.fp_iterations == 1 and out.solver_residual < 1e-12


def test_step_solves_the_scheme(rng):
    """Plug the computed level back into the three-level equation."""
    ops = make_ops("nc", 4, 3, domain=(-1, 1, -1, 2))
    eps, lam, Om, tau = 0.6, 3.0, 0.8, 0.02
    params = ModelParams(eps, lam, Om, harmonic_potential())
    b, c = 0.5 * random_field(rng, ops.n), 0.5 * random_field(rng, ops.n)
    stp = Stepper(ops, params, StepConfig(tau=tau, stabilization="off"))
    a = stp.step(StepperState(b, c, 1, tau)).psi_curr
    K = ops.A + ops.M / eps ** 2 + ops.M_V - Om ** 2 * eps ** 2 * ops.A_L
    W, _ = stp.weight_matrix(a, b)
    lhs = (eps ** 2 / tau ** 2 * ops.M @ (a - 2 * c + b) + 0.5 * K @ (a + b) + 0.5 * lam * W @ (a + b)
           - 1j * Om * eps ** 2 / tau * ops.B_L @ (a - b))
    assert np.abs(lhs).max() < 1e-9 * np.abs(ops.M @ a).max() / tau ** 2


def test_run_equals_manual_steps():
    ops = make_ops("c", 6, domain=(-3, 3, -3, 3))
    params = ModelParams(0.9, 1.0, 0.5, harmonic_potential(), T=0.3)
    cfg = StepConfig(tau=0.1, K0=10.0)
    data = pulse()
    final, records, _ = run(data, params, ops.dofs, cfg, ops=ops)
    st_ = initialize(data, params, ops.dofs, 0.1)
    stp = Stepper(ops, params, cfg)
    for _ in range(2):
        st_ = stp.step(st_)
    assert final.n == 3 and st_.n == 3
    np.testing.assert_allclose(final.psi_curr, st_.psi_curr, rtol=0, atol=1e-14)
    assert [r.n for r in records] == [1, 2, 3]


def test_run_T_zero_returns_initial_levels():
    ops = make_ops("c", 4, domain=(-2, 2, -2, 2))
    params = ModelParams(1.0, 1.0, 0.0, zero_field(), T=0.0)
    data = pulse()
    final, records, snaps = run(data, params, ops.dofs, StepConfig(tau=0.1), ops=ops, snapshot_times=[0.0])
    assert final.n == 1 and len(records) == 1
    np.testing.assert_array_equal(snaps[0.0], interpolate(data.psi0, ops.dofs))


def test_run_snapshots_and_rounding():
    ops = make_ops("c", 4, domain=(-2, 2, -2, 2))
    params = ModelParams(1.0, 0.0, 0.3, zero_field(), T=0.5)
    with pytest.warns(RuntimeWarning):
        final, rec, snaps = run(pulse(), params, ops.dofs, StepConfig(tau=0.12), ops=ops,
                                snapshot_times=[0.0, 0.2, 0.5], record_every=2)
    assert final.n == 5 and final.info["tau"] == pytest.approx(0.1)
    np.testing.assert_array_equal(snaps[0.5], final.psi_curr)
    assert set(snaps) == {0.0, 0.2, 0.5}
    assert [r.n for r in rec] == [1, 3, 5]
    with pytest.raises(ValueError):
        run(None, params, ops.dofs, StepConfig(tau=0.1))


def test_default_K0_and_safeguard_counter(caplog):
    ops = make_ops("c", 4, domain=(-2, 2, -2, 2))
    params = ModelParams(1.0, 1.0, 0.0, zero_field(), T=0.3)
    st0 = initialize(pulse(), params, ops.dofs, 0.1)
    assert default_K0(st0, ops) == pytest.approx(2 * np.abs(ops.quad.eval(st0.psi_prev)).max(), rel=0.2)
    final, _, _ = run(pulse(), params, ops.dofs, StepConfig(tau=0.1, K0=1e-3), ops=ops)
    assert final.safeguard_hits == 2


def test_fixed_point_failure_is_reported(rng):
    ops = make_ops("c", 4)
    params = ModelParams(1.0, 50.0, 0.0, zero_field())
    z = 5 * random_field(rng, ops.n)
    with pytest.raises(FixedPointError) as info:
        Stepper(ops, params, StepConfig(tau=1.0, fixedpoint_max=2)).step(StepperState(z, -z, 1, 1.0))
    assert info.value.iterations == 2


def test_iterative_solver_matches_direct(rng):
    ops = make_ops("nc", 4)
    params = ModelParams(0.7, 1.0, 0.6, harmonic_potential())
    b, c = random_field(rng, ops.n), random_field(rng, ops.n)
    st_ = StepperState(b, c, 1, 0.05)
    d = Stepper(ops, params, StepConfig(tau=0.05)).step(st_)
    i = Stepper(ops, params, StepConfig(tau=0.05, solver="iterative", linear_tol=1e-11)).step(st_)
    np.testing.assert_allclose(i.psi_curr, d.psi_curr, atol=1e-8)


# ---------------------------------------------------------------------------
# conservation
# ---------------------------------------------------------------------------

@settings(max_examples=12)
@given(kind=st.sampled_from(["c", "nc"]), lam=st.floats(0.0, 5.0), omega=st.floats(-1.0, 1.0),
       eps=st.floats(0.3, 1.0), seed=st.integers(0, 2 ** 16))
def test_energy_and_charge_are_conserved(kind, lam, omega, eps, seed):
    rng = np.random.default_rng(seed)
    ops = make_ops(kind, 4, 3, domain=(-2, 2, -1.5, 1.5), potential=harmonic_potential())
    params = ModelParams(eps, lam, omega, harmonic_potential())
    tau = 0.05
    state = StepperState(0.5 * random_field(rng, ops.n), 0.5 * random_field(rng, ops.n), 1, tau)
    stp = Stepper(ops, params, StepConfig(tau=tau, stabilization="on"))
    E0, Q0 = conserved(state, ops, params, tau)
    for _ in range(5):
        state = stp.step(state)
    E, Q = conserved(state, ops, params, tau)
    # 100 x fixed-point tolerance
    assert abs(E - E0) <= 1e-10 * abs(E0)
    assert abs(Q - Q0) <= 1e-10 * max(abs(Q0), eps ** 2)


def test_stabilization_matters_on_rectangular_cells():
    """Without the jump correction the broken space leaks energy once J != 0."""
    ops = make_ops("nc", 8, 6, domain=(-3, 3, -3, 3), potential=harmonic_potential())
    params = ModelParams(1.0, 1.0, 0.8, harmonic_potential(), T=0.5)
    drift = {}
    for mode in ("on", "off"):
        _, rec, _ = run(pulse(), params, ops.dofs, StepConfig(tau=0.05, stabilization=mode, K0=50.0), ops=ops)
        drift[mode] = max(r.rel_E_err for r in rec)
    assert drift["on"] < 1e-11
    assert drift["off"] > 1e3 * drift["on"]


@pytest.mark.parametrize("kind", ["c", "nc"])
def test_telescoping_identities_hold(kind):
    ops = make_ops(kind, 6, domain=(-3, 3, -3, 3))
    params = ModelParams(0.8, 2.0, 0.5, zero_field(), T=0.2)
    final, _, _ = run(pulse(), params, ops.dofs, StepConfig(tau=0.02, debug=True, K0=20.0), ops=ops)
    assert max(final.info["identity_defects"]) < 1e-10


def test_telescoping_defects_detect_inconsistency(rng):
    ops = make_ops("c", 3)
    u = [random_field(rng, ops.n) for _ in range(3)]
    d1, d2 = telescoping_defects(*u, ops.M, 0.1)
    # the identities are algebraic: they hold for arbitrary levels
    assert d1 < 1e-12 and d2 < 1e-12
