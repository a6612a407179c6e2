import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rkgfem import ScalarField2D, interpolate, quadrature
from rkgfem.assembly import ModelParams
from rkgfem.diagnostics import (DiagnosticsRecord, ErrorReport, broken_h1_norm, count_vortices, discrete_charge,
                                discrete_energy, error_norms, fit_rate, fit_rates, make_record)
from rkgfem.fields import (Separable, damped_harmonic_potential, gaussian, harmonic_potential, linear, product,
                           sine_profile, zero_field)
from rkgfem.rkg import StepperState

from conftest import make_ops, random_field
import oracles


@pytest.mark.parametrize("kind", ["c", "nc"])
def test_zero_state_has_zero_invariants(kind):
    ops = make_ops(kind, 3)
    params = ModelParams(0.5, 2.0, 0.9, harmonic_potential())
    z = np.zeros(ops.n, dtype=complex)
    assert discrete_energy(z, z, ops, params, 0.1) == 0.0
    assert discrete_charge(z, z, ops, params, 0.1) == 0.0
    assert broken_h1_norm(z, ops) == 0.0


@given(c_re=st.floats(-2, 2), c_im=st.floats(-2, 2), eps=st.floats(0.1, 2.0), lam=st.floats(0, 10),
       omega=st.floats(-1, 1))
def test_constant_field_energy_on_free_patch(c_re, c_im, eps, lam, omega):
    ops = make_ops("c", 3, 2, domain=(0.0, 1.5, -1.0, 1.0), dirichlet=False)
    params = ModelParams(eps, lam, omega, zero_field())
    c = complex(c_re, c_im)
    u = np.full(ops.n, c)
    area = 3.0
    ref = abs(c) ** 2 * area / eps ** 2 + 0.5 * lam * abs(c) ** 4 * area
    assert discrete_energy(u, u, ops, params, 0.1) == pytest.approx(ref, rel=1e-12, abs=1e-13)


@pytest.mark.parametrize("kind", ["c", "nc"])
def test_real_fields_carry_no_charge(kind, rng):
    ops = make_ops(kind, 5, potential=harmonic_potential())
    params = ModelParams(0.7, 1.0, 0.8, harmonic_potential())
    a, b = rng.standard_normal(ops.n), rng.standard_normal(ops.n)
    assert abs(discrete_charge(a, b, ops, params, 0.05)) < 1e-12


@pytest.mark.parametrize("kind", ["c", "nc"])
def test_invariants_match_dense_oracle(kind, rng):
    pot = damped_harmonic_potential()
    ops = make_ops(kind, 3, domain=(-1.0, 2.0, -1.5, 1.0), potential=pot)
    params = ModelParams(0.6, 1.7, 0.7, pot)
    c, b = random_field(rng, ops.n), random_field(rng, ops.n)
    E = discrete_energy(c, b, ops, params, 0.05)
    Q = discrete_charge(c, b, ops, params, 0.05)
    assert E == pytest.approx(oracles.dense_energy(c, b, ops.dofs, params, 0.05), rel=1e-12)
    assert Q == pytest.approx(oracles.dense_charge(c, b, ops.dofs, params, 0.05), rel=1e-12, abs=1e-12)


def test_charge_of_a_rotating_phase():
    """Psi = e^{-i w t} u with real u: the time-derivative part is eps^2 w ||u||^2 to first order."""
    ops = make_ops("c", 16, domain=(-4, 4, -4, 4))
    params = ModelParams(1.0, 0.0, 0.0, zero_field())
    u = interpolate(gaussian(1.0, 1.0), ops.dofs)
    tau, w = 1e-4, 0.7
    Q = discrete_charge(np.exp(-1j * w * tau) * u, u, ops, params, tau)
    mass = np.vdot(u, ops.M @ u).real
    assert Q == pytest.approx(-w * mass, rel=1e-3)


def test_make_record_relative_errors():
    ops = make_ops("c", 4, domain=(-2, 2, -2, 2))
    params = ModelParams(1.0, 1.0, 0.3, zero_field())
    u = interpolate(product(gaussian(1.0, 1.0), linear(1.0, 1j)), ops.dofs)
    first = make_record(StepperState(u, u, 1, 0.1), ops, params, 0.1, None)
    assert first.rel_E_err == 0.0 and first.rel_Q_err == 0.0
    later = make_record(StepperState(u, 1.01 * u, 2, 0.1), ops, params, 0.1, first)
    assert later.rel_E_err > 0 and later.n == 2 and later.t == pytest.approx(0.2)
    assert DiagnosticsRecord.columns() == ["n", "t", "E_h", "Q_h", "rel_E_err", "rel_Q_err", "h1_norm",
                                           "fp_iters", "residual"]
    assert len(first.row()) == len(DiagnosticsRecord.columns())


# ---------------------------------------------------------------------------
# error norms
# ---------------------------------------------------------------------------

def sine_field():
    return Separable(sine_profile(), sine_profile()).field()


def test_error_of_zero_approximation_is_exact_norm():
    ops = make_ops("c", 16, domain=(-1, 1, -1, 1))
    rep = error_norms(np.zeros(ops.n), sine_field(), ops.dofs, quad=quadrature("cell", 5))
    assert rep.l2 == pytest.approx(1.0, rel=1e-6)
    # |grad u|^2 integrates to 2 pi^2
    assert rep.h1 == pytest.approx(1.0 + math.sqrt(2.0) * math.pi, rel=1e-6)


@pytest.mark.parametrize("kind", ["c", "nc"])
def test_interpolant_is_superclose_to_itself(kind):
    ops = make_ops(kind, 8, domain=(0, 1, 0, 1))
    u = sine_field()
    rep = error_norms(interpolate(u, ops.dofs), u, ops.dofs, ops=ops, tau=0.1)
    assert rep.superclose == 0.0
    assert rep.tau == 0.1 and rep.h == pytest.approx(ops.dofs.mesh.h)
    assert (not math.isnan(rep.postprocessed)) == (kind == "c")
    assert ErrorReport.columns()[:3] == ["h", "tau", "l2"]


def test_interpolation_rates():
    u = sine_field()
    reps = []
    for n in (4, 8, 16, 32):
        ops = make_ops("c", n, domain=(0, 1, 0, 1))
        reps.append(error_norms(interpolate(u, ops.dofs), u, ops.dofs, ops=ops))
    r = fit_rates(reps)
    assert 1.9 < r["l2"] < 2.1 and 0.9 < r["h1"] < 1.1 and 1.8 < r["postprocessed"] < 2.3
    assert math.isnan(r["superclose"])


@given(p=st.floats(0.5, 4.0), c=st.floats(1e-3, 1e3))
def test_fit_rate_recovers_exponent(p, c):
    h = np.array([0.5, 0.25, 0.125])
    assert fit_rate(h, c * h ** p) == pytest.approx(p, rel=1e-9)


def test_fit_rate_needs_two_points():
    assert math.isnan(fit_rate([0.5, 0.25], [1.0, 0.0]))


# ---------------------------------------------------------------------------
# vortices
# ---------------------------------------------------------------------------

def test_constant_field_has_no_vortices():
    ops = make_ops("c", 6, domain=(0, 1, 0, 1), dirichlet=False)
    rep = count_vortices(np.full(ops.n, 1.0 + 1j), ops.dofs)
    assert rep.count == 0 and rep.indeterminate == []


def test_single_vortex_at_origin():
    ops = make_ops("c", 7, domain=(-1, 1, -1, 1), dirichlet=False)
    rep = count_vortices(interpolate(linear(1.0, 1j), ops.dofs), ops.dofs)
    assert rep.count == 1 and rep.total_winding == 1
    x, y, w = rep.vortices[0]
    assert abs(x) < ops.dofs.mesh.hx and abs(y) < ops.dofs.mesh.hy


def test_vertex_on_a_zero_is_indeterminate():
    ops = make_ops("c", 4, domain=(-1, 1, -1, 1), dirichlet=False)
    rep = count_vortices(interpolate(linear(1.0, 1j), ops.dofs), ops.dofs)
    assert rep.count == 0 and len(rep.indeterminate) == 4


def two_vortices():
    def val(x, y):
        return ((x - 0.31) + 1j * (y - 0.17)) * ((x + 0.43) - 1j * (y + 0.29)) * ((x + 0.5) + 1j * (y - 0.6))
    return ScalarField2D(val)


@pytest.mark.parametrize("n", [9, 17, 33])
def test_total_winding_is_refinement_invariant(n):
    ops = make_ops("c", n, domain=(-1.2, 1.2, -1.2, 1.2), dirichlet=False)
    rep = count_vortices(interpolate(two_vortices(), ops.dofs), ops.dofs)
    assert rep.total_winding == 1 and rep.count == 3


def test_density_floor_skips_far_field():
    ops = make_ops("c", 21, domain=(-6, 6, -6, 6), dirichlet=False)
    f = product(gaussian(1.0, 1.0), linear(1.0, 1j))
    rep = count_vortices(interpolate(f, ops.dofs), ops.dofs, density_floor=1e-3)
    assert rep.count == 1
    with pytest.raises(ValueError):
        count_vortices(np.zeros(make_ops("nc", 2).n), make_ops("nc", 2).dofs)
