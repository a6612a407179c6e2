import numpy as np
import pytest
from hypothesis import given, strategies as st

from rkgfem import Domain, SpaceKind, build_dof_map, build_uniform_mesh, interpolate, local_basis, \
    postprocess_I2h, quadrature
from rkgfem.fields import gaussian, linear, product
from rkgfem.spaces import ScalarField2D, basis_table, check_derivatives, edge_ref_points, element_quadrature, \
    evaluate, vertex_values

KINDS = [SpaceKind.CONFORMING_Q11, SpaceKind.NONCONFORMING_EQ1ROT]
CORNERS = [(-1, -1), (1, -1), (1, 1), (-1, 1)]


def poly(fn, gx=None, gy=None):
    return ScalarField2D(fn, None if gx is None else (lambda x, y: (gx(x, y), gy(x, y))))


def test_space_kind_parse():
    assert SpaceKind.parse("c") is SpaceKind.CONFORMING_Q11
    assert SpaceKind.parse("nonconforming") is SpaceKind.NONCONFORMING_EQ1ROT
    with pytest.raises(ValueError):
        SpaceKind.parse("p2")


def test_q11_nodal():
    for i in range(4):
        for k, c in enumerate(CORNERS):
            v, _ = local_basis(SpaceKind.CONFORMING_Q11, i, c)
            assert v == pytest.approx(float(i == k), abs=1e-15)


def test_eq1rot_duality():
    rule = quadrature("edge", 3)
    cell = quadrature("cell", 3)
    for j in range(5):
        for k in range(4):
            val, _ = basis_table(SpaceKind.NONCONFORMING_EQ1ROT, edge_ref_points(k, rule.points))
            mean = 0.5 * val[:, j] @ rule.weights
            assert mean == pytest.approx(float(j == k), abs=1e-14)
        val, _ = basis_table(SpaceKind.NONCONFORMING_EQ1ROT, cell.points)
        assert 0.25 * val[:, j] @ cell.weights == pytest.approx(float(j == 4), abs=1e-14)


def test_invalid_local_index():
    with pytest.raises(IndexError):
        local_basis(SpaceKind.CONFORMING_Q11, 4, (0, 0))
    with pytest.raises(IndexError):
        local_basis(SpaceKind.NONCONFORMING_EQ1ROT, 5, (0, 0))


@pytest.mark.parametrize("kind", KINDS)
def test_partition_of_unity(kind, rng):
    pts = rng.uniform(-1, 1, (100, 2))
    val, grad = basis_table(kind, pts)
    np.testing.assert_allclose(val.sum(axis=1), 1.0, atol=1e-14)
    np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-13)


@pytest.mark.parametrize("kind", KINDS)
def test_reference_gradients_fd(kind, rng):
    pts = rng.uniform(-0.9, 0.9, (50, 2))
    h = 1e-6
    _, grad = basis_table(kind, pts)
    vp, _ = basis_table(kind, pts + [h, 0])
    vm, _ = basis_table(kind, pts - [h, 0])
    np.testing.assert_allclose(grad[..., 0], (vp - vm) / (2 * h), atol=1e-6)
    vp, _ = basis_table(kind, pts + [0, h])
    vm, _ = basis_table(kind, pts - [0, h])
    np.testing.assert_allclose(grad[..., 1], (vp - vm) / (2 * h), atol=1e-6)


@pytest.mark.parametrize("n, kind, ndofs", [
    (2, SpaceKind.CONFORMING_Q11, 1),
    (2, SpaceKind.NONCONFORMING_EQ1ROT, 8),
    (4, SpaceKind.CONFORMING_Q11, 9),
])
def test_dof_counts(n, kind, ndofs):
    d = build_dof_map(build_uniform_mesh(Domain.square(-1, 1), n, n), kind)
    assert d.n_dofs == ndofs


def test_eq1rot_dofs_by_edge_classification():
    m = build_uniform_mesh(Domain.square(-1, 1), 2, 2)
    interior = 0
    for e in range(m.n_edges):
        owners = [el for el in range(m.n_elements) if e in m.element_edges[el]]
        interior += len(owners) == 2
    d = build_dof_map(m, SpaceKind.NONCONFORMING_EQ1ROT)
    assert d.n_dofs == interior + m.n_elements == 8


@given(nx=st.integers(1, 6), ny=st.integers(1, 6), nc=st.booleans())
def test_dofmap_invariants(nx, ny, nc):
    m = build_uniform_mesh(Domain(0, 1, 0, 1), nx, ny)
    kind = SpaceKind.NONCONFORMING_EQ1ROT if nc else SpaceKind.CONFORMING_Q11
    d = build_dof_map(m, kind)
    if nc:
        assert d.n_dofs == int((~m.edge_is_boundary).sum()) + nx * ny
        assert d.element_dofs.shape == (nx * ny, 5)
    else:
        assert d.n_dofs == (nx - 1) * (ny - 1)
        assert d.element_dofs.shape == (nx * ny, 4)
    ed = d.element_dofs
    assert np.all((ed == -1) | ((ed >= 0) & (ed < d.n_dofs)))
    used = np.unique(ed[ed >= 0])
    np.testing.assert_array_equal(used, np.arange(d.n_dofs))


def test_quadrature_examples():
    c2 = quadrature("cell", 2)
    assert c2.weights.sum() == pytest.approx(4.0)
    assert abs(np.sum(c2.weights * c2.points[:, 0] ** 3 * c2.points[:, 1] ** 3)) < 1e-15
    c3 = quadrature("cell", 3)
    # int x^4 over [-1,1]^2 = (2/5) * 2
    assert np.sum(c3.weights * c3.points[:, 0] ** 4) == pytest.approx(4.0 / 5.0, rel=1e-14)
    e3 = quadrature("edge", 3)
    assert abs(np.sum(e3.weights * e3.points ** 5)) < 1e-15
    assert np.all(c3.weights > 0)
    with pytest.raises(ValueError):
        quadrature("cell", 9)


@pytest.mark.parametrize("order", [2, 3, 4, 5])
def test_quadrature_exactness(order):
    rule = quadrature("cell", order)
    for p in range(2 * order):
        for q in range(2 * order):
            exact = (2.0 / (p + 1) if p % 2 == 0 else 0.0) * (2.0 / (q + 1) if q % 2 == 0 else 0.0)
            got = np.sum(rule.weights * rule.points[:, 0] ** p * rule.points[:, 1] ** q)
            assert got == pytest.approx(exact, abs=1e-13)


@pytest.mark.parametrize("kind", KINDS)
def test_interpolate_zero(kind):
    d = build_dof_map(build_uniform_mesh(Domain.square(-1, 1), 3, 3), kind)
    assert not np.any(interpolate(ScalarField2D(lambda x, y: 0 * x), d))


def test_q11_reproduces_xy():
    d = build_dof_map(build_uniform_mesh(Domain.square(-1, 1), 4, 4), "c", dirichlet=False)
    u = interpolate(ScalarField2D(lambda x, y: x * y), d)
    eq = element_quadrature(d)
    np.testing.assert_allclose(eq.eval(u), eq.x * eq.y, atol=1e-14)


def test_eq1rot_cell_means_of_x2():
    m = build_uniform_mesh(Domain(0, 2, -1, 1), 4, 3)
    d = build_dof_map(m, "nc")
    u = interpolate(ScalarField2D(lambda x, y: x * x + 0j), d)
    eq = element_quadrature(d)
    means = (eq.eval(u) @ eq.cw) / m.element_area
    x0 = m.centroids[:, 0] - m.hx / 2
    x1 = x0 + m.hx
    exact = (x1 ** 3 - x0 ** 3) / (3 * m.hx)
    np.testing.assert_allclose(means.real, exact, rtol=1e-13)


@pytest.mark.parametrize("kind", KINDS)
def test_interpolation_idempotent(kind):
    d = build_dof_map(build_uniform_mesh(Domain.square(-1, 1), 5, 4), kind)
    f = product(gaussian(1.0, 2.0), linear(1.0, 1j, 0.3))
    u = interpolate(f, d)
    v = interpolate(ScalarField2D(lambda x, y: evaluate(u, d, x, y)), d)
    np.testing.assert_allclose(v, u, atol=1e-13)


def test_eq1rot_edge_mean_continuity():
    m = build_uniform_mesh(Domain.square(-1, 1), 4, 5)
    d = build_dof_map(m, "nc")
    f = product(gaussian(0.7, 1.1), linear(2.0, -1j, 0.5))
    u = interpolate(f, d)
    rule = quadrature("edge", 3)
    c = m.centroids
    for e in np.flatnonzero(~m.edge_is_boundary):
        means = []
        for el, side in zip(m.edge_elements[e], m.edge_sides[e]):
            ref = edge_ref_points(side, rule.points)
            x = c[el, 0] + 0.5 * m.hx * ref[:, 0]
            y = c[el, 1] + 0.5 * m.hy * ref[:, 1]
            means.append(0.5 * evaluate(u, d, x - 1e-12 * np.sign(ref[:, 0]) * (side in (1, 3)),
                                        y - 1e-12 * np.sign(ref[:, 1]) * (side in (0, 2))) @ rule.weights)
        assert abs(means[0] - means[1]) <= 1e-9


def test_vertex_values_roundtrip():
    d = build_dof_map(build_uniform_mesh(Domain.square(-1, 1), 3, 3), "c")
    u = np.arange(d.n_dofs) + 1j
    grid = vertex_values(u, d)
    assert grid.shape == (4, 4)
    assert np.all(grid[0] == 0) and np.all(grid[:, -1] == 0)
    np.testing.assert_array_equal(grid[1:-1, 1:-1].ravel(), u)


def test_postprocess_constant():
    d = build_dof_map(build_uniform_mesh(Domain.square(-1, 1), 4, 4), "c", dirichlet=False)
    u = np.full(d.n_dofs, 2.5 - 1j)
    val, gx, gy = postprocess_I2h(u, d).at_quadrature()
    np.testing.assert_allclose(val, 2.5 - 1j, atol=1e-14)
    np.testing.assert_allclose(gx, 0, atol=1e-13)
    np.testing.assert_allclose(gy, 0, atol=1e-13)


@given(nx=st.sampled_from([2, 4, 6]), ny=st.sampled_from([2, 4, 8]), p=st.integers(0, 2), q=st.integers(0, 2))
def test_postprocess_reproduces_biquadratics(nx, ny, p, q):
    d = build_dof_map(build_uniform_mesh(Domain(-1, 2, 0, 1), nx, ny), "c", dirichlet=False)
    u = interpolate(ScalarField2D(lambda x, y: x ** p * y ** q + 0j), d)
    eq = element_quadrature(d)
    val, gx, gy = postprocess_I2h(u, d).at_quadrature()
    np.testing.assert_allclose(val, eq.x ** p * eq.y ** q, atol=1e-12)
    np.testing.assert_allclose(gx, p * eq.x ** max(p - 1, 0) * eq.y ** q, atol=1e-11)
    np.testing.assert_allclose(gy, q * eq.x ** p * eq.y ** max(q - 1, 0), atol=1e-11)


def test_postprocess_x2_at_macro_centers():
    m = build_uniform_mesh(Domain.square(0, 1), 4, 4)
    d = build_dof_map(m, "c", dirichlet=False)
    u = interpolate(ScalarField2D(lambda x, y: x * x + 0j), d)
    # macro-element centers are the upper-right corners of even cells: evaluate with a 1-point rule there
    pp = postprocess_I2h(u, d)
    val, _, _ = pp.at_quadrature()
    eq = element_quadrature(d)
    assert np.max(np.abs(val - eq.x ** 2)) < m.h ** 3


def test_postprocess_gradient_second_order():
    errs, hs = [], []
    f = product(gaussian(1.0, 1.0), linear(1.0, 0.5, 1.0))
    for n in (8, 16, 32):
        d = build_dof_map(build_uniform_mesh(Domain.square(-1, 1), n, n), "c", dirichlet=False)
        eq = element_quadrature(d)
        _, gx, gy = postprocess_I2h(interpolate(f, d), d).at_quadrature()
        fx, fy = f.gradient(eq.x, eq.y)
        errs.append(np.sqrt(np.sum((np.abs(gx - fx) ** 2 + np.abs(gy - fy) ** 2) * eq.cw)))
        hs.append(2.0 / n)
    rate = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert 1.8 < rate < 2.3


def test_postprocess_errors():
    m = build_uniform_mesh(Domain.square(0, 1), 3, 4)
    with pytest.raises(ValueError):
        postprocess_I2h(np.zeros(6), build_dof_map(m, "c"))
    m2 = build_uniform_mesh(Domain.square(0, 1), 4, 4)
    d = build_dof_map(m2, "nc")
    with pytest.raises(ValueError):
        postprocess_I2h(np.zeros(d.n_dofs), d)


def test_check_derivatives_detects_errors(rng):
    pts = rng.uniform(-1, 1, (20, 2))
    good = product(gaussian(1.0, 0.5), linear(1.0, 1j))
    assert check_derivatives(good, pts) < 1e-6
    bad = ScalarField2D(lambda x, y: x * y, lambda x, y: (y, 2 * x))
    with pytest.raises(ValueError):
        check_derivatives(bad, pts)


def test_field_without_gradient():
    f = ScalarField2D(lambda x, y: x)
    with pytest.raises(ValueError):
        f.gradient(0.0, 0.0)
