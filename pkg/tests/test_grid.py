"""Discretization tests: hand stencils, adjointness, null spaces."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from stagdyn.errors import ConfigError
from stagdyn.grid import Grid, build


def disc_1d(nx=2, h=1.0, bc=("dirichlet", "dirichlet"), c=1.0, rho=1.0):
    return build(Grid(dim=1, nx=nx, h=h, bc=bc), rho, {"modulus": c})


def disc_2d(nx=3, ny=3, h=0.5, bc=("dirichlet",) * 4, K=1.0, G=0.6, rho=1.0):
    return build(Grid(dim=2, nx=nx, ny=ny, h=h, bc=bc), rho,
                 {"bulk_modulus": K, "shear_modulus": G})


ALL_BC_1D = [
    ("dirichlet", "dirichlet"),
    ("neumann", "neumann"),
    ("dirichlet", "neumann"),
    ("traction", "dirichlet"),
]

ALL_BC_2D = [
    ("dirichlet",) * 4,
    ("neumann",) * 4,
    ("dirichlet", "neumann", "traction", "dirichlet"),
    ("neumann", "dirichlet", "dirichlet", "neumann"),
]


def test_forward_stencil_hand_case():
    # 2 cells, h=1, C=1, Dirichlet ends, v=(1,1): strain rates at the
    # 3 nodes are (1, 0, -1) with zero ghost velocities.
    d = disc_1d()
    e = d.apply_E(np.array([1.0, 1.0]))
    assert_allclose(e, [1.0, 0.0, -1.0])
    # step_sigma example: tau=0.1 increments C*e by 0.1 -> (0.1, 0, -0.1)
    assert_allclose(0.1 * d.apply_C(e), [0.1, 0.0, -0.1])


def test_transpose_stencil_hand_case():
    # Exact transpose of the forward stencil, S=(0,1,0): E*S has unit
    # weights at the interior node: (w0*S0 - w1*S1, w1*S1 - w2*S2)/h.
    d = disc_1d()
    f = d.apply_E_adjoint(np.array([0.0, 1.0, 0.0]))
    assert_allclose(f, [-1.0, 1.0])
    # Velocity increment -tau*M^{-1}(E*S): tension peak pulls both cells
    # toward the middle node.
    dv = -0.1 * f / d.mass
    assert_allclose(dv, [0.1, -0.1])


@pytest.mark.parametrize("bc", ALL_BC_1D)
def test_adjointness_1d(bc):
    d = disc_1d(nx=13, h=0.3, bc=bc)
    rng = np.random.default_rng(7)
    for _ in range(100):
        v = rng.standard_normal(d.n_v)
        s = rng.standard_normal(d.n_s)
        lhs = d.sdot(s, d.apply_E(v))
        rhs = float(np.sum(d.apply_E_adjoint(s) * v))
        scale = max(1.0, abs(lhs), abs(rhs))
        assert abs(lhs - rhs) <= 1e-12 * scale


@pytest.mark.parametrize("bc", ALL_BC_2D)
def test_adjointness_2d(bc):
    d = disc_2d(nx=4, ny=5, h=0.25, bc=bc)
    rng = np.random.default_rng(11)
    for _ in range(100):
        v = rng.standard_normal(d.n_v)
        s = rng.standard_normal(d.n_s)
        lhs = d.sdot(s, d.apply_E(v))
        rhs = float(np.sum(d.apply_E_adjoint(s) * v))
        scale = max(1.0, abs(lhs), abs(rhs))
        assert abs(lhs - rhs) <= 1e-12 * scale


def test_operators_linear():
    d = disc_2d(nx=3, ny=4)
    rng = np.random.default_rng(3)
    x = rng.standard_normal(d.n_v)
    y = rng.standard_normal(d.n_v)
    assert_allclose(d.apply_E(2.0 * x - 3.0 * y),
                    2.0 * d.apply_E(x) - 3.0 * d.apply_E(y), atol=1e-14)
    s = rng.standard_normal(d.n_s)
    t = rng.standard_normal(d.n_s)
    assert_allclose(d.apply_C(0.5 * s + 2.0 * t),
                    0.5 * d.apply_C(s) + 2.0 * d.apply_C(t), atol=1e-14)


def test_rigid_translation_neumann():
    d = disc_2d(nx=3, ny=3, bc=("neumann",) * 4)
    for vec in ((1.0, 0.0), (0.0, 1.0)):
        v = d.zeros_v()
        d.vx_view(v)[:] = vec[0]
        d.vy_view(v)[:] = vec[1]
        assert_allclose(d.apply_E(v), 0.0, atol=1e-15)


def test_neumann_null_space_dimension():
    # Kernel of E under pure Neumann contains the two translations; the
    # discrete rotation is representable here as well (noted, not required).
    d = disc_2d(nx=3, ny=3, bc=("neumann",) * 4)
    cols = [d.apply_E(col) for col in np.eye(d.n_v)]
    E = np.column_stack(cols)
    ns_dim = E.shape[1] - np.linalg.matrix_rank(E, tol=1e-10)
    assert ns_dim >= 2
    assert ns_dim <= 3


def test_dirichlet_has_no_null_space_1d():
    d = disc_1d(nx=5)
    E = np.column_stack([d.apply_E(col) for col in np.eye(d.n_v)])
    assert np.linalg.matrix_rank(E, tol=1e-12) == d.n_v


def test_neumann_1d_kernel_is_constants():
    d = disc_1d(nx=6, bc=("neumann", "neumann"))
    assert_allclose(d.apply_E(np.ones(d.n_v)), 0.0, atol=1e-15)
    E = np.column_stack([d.apply_E(col) for col in np.eye(d.n_v)])
    assert E.shape[1] - np.linalg.matrix_rank(E, tol=1e-12) == 1


def test_apply_C_identity_2d():
    # C applied to the identity tensor: d*K*I (pure volumetric response).
    d = disc_2d(nx=2, ny=2, K=1.0, G=0.0 + 1e-12)
    e = d.zeros_s()
    d.sxx_view(e)[:] = 1.0
    d.syy_view(e)[:] = 1.0
    s = d.apply_C(e)
    assert_allclose(d.sxx_view(s), 2.0, atol=1e-10)
    assert_allclose(d.syy_view(s), 2.0, atol=1e-10)
    assert_allclose(d.sxy_view(s), 0.0, atol=1e-12)


def test_apply_C_inverse_roundtrip():
    for d in (disc_1d(nx=4, c=3.7), disc_2d(nx=3, ny=2, K=2.0, G=0.7)):
        rng = np.random.default_rng(5)
        s = rng.standard_normal(d.n_s)
        assert_allclose(d.apply_C(d.apply_C_inv(s)), s, atol=1e-12)


def test_apply_C_self_adjoint():
    d = disc_2d(nx=3, ny=3, K=1.3, G=0.4)
    rng = np.random.default_rng(9)
    a = rng.standard_normal(d.n_s)
    b = rng.standard_normal(d.n_s)
    assert abs(d.sdot(d.apply_C(a), b) - d.sdot(a, d.apply_C_adjoint(b))) < 1e-12


def test_apply_I_is_identity():
    d = disc_1d(nx=4)
    s = np.arange(d.n_s, dtype=float)
    assert_allclose(d.apply_I(s), s)


def test_laplacian_stress_hand_stencil():
    # 3-node line (2 cells), h=1, natural BC: interior value of -G^T G on
    # (0,1,0) is -2; boundary entries are scaled by the 1/2 trapezoid weight.
    d = disc_1d(nx=2, h=1.0)
    lap = d.laplacian_stress(np.array([0.0, 1.0, 0.0]))
    assert_allclose(lap, [2.0, -2.0, 2.0])


def test_laplacian_stress_constant_and_nsd():
    for d in (disc_1d(nx=7, h=0.2), disc_2d(nx=4, ny=3, h=0.3)):
        assert_allclose(d.laplacian_stress(np.ones(d.n_s)), 0.0, atol=1e-13)
        rng = np.random.default_rng(13)
        for _ in range(20):
            s = rng.standard_normal(d.n_s)
            assert d.sdot(d.laplacian_stress(s), s) <= 1e-12


def test_laplacian_stress_symmetric():
    for d in (disc_1d(nx=6), disc_2d(nx=3, ny=4, bc=("neumann",) * 4)):
        rng = np.random.default_rng(17)
        a = rng.standard_normal(d.n_s)
        b = rng.standard_normal(d.n_s)
        lhs = d.sdot(d.laplacian_stress(a), b)
        rhs = d.sdot(a, d.laplacian_stress(b))
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_div_z_adjoint_to_grad_and_conservative():
    for d in (disc_1d(nx=5), disc_2d(nx=4, ny=3)):
        rng = np.random.default_rng(19)
        z = rng.standard_normal(d.zs_n)
        q = rng.standard_normal(d.grad_z(z).shape[0])
        # <div q, z>_wz == -<q, grad z>_we
        lhs = d.zdot(d.div_z(q), z)
        g = d.grad_z(z)
        if d.dim == 1:
            rhs = -float(np.sum(d._z_edge_w * q * g))
        else:
            nxe = d._z_edge_wx.size
            rhs = -float(
                np.sum(d._z_edge_wx.ravel() * q[:nxe] * g[:nxe])
                + np.sum(d._z_edge_wy.ravel() * q[nxe:] * g[nxe:])
            )
        assert abs(lhs - rhs) < 1e-12 * max(1.0, abs(lhs))
        # weighted mean of div q vanishes (no-flux)
        assert abs(d.zdot(d.div_z(q), np.ones(d.zs_n))) < 1e-12


def test_scatter_is_transpose_of_average():
    d = disc_2d(nx=4, ny=3)
    rng = np.random.default_rng(23)
    c = rng.standard_normal(d.zs_n)
    u = rng.standard_normal(d.shape_vert[0] * d.shape_vert[1])
    wv = d.sweights[d._xy_sl]
    lhs = float(np.sum(wv * u * d.avg_centers_to_vertices(c).ravel()))
    rhs = d.zdot(d.scatter_vertices_to_centers(u), c)
    assert abs(lhs - rhs) < 1e-12 * max(1.0, abs(lhs))


def test_build_validation():
    with pytest.raises(ConfigError):
        disc_1d(nx=1)
    with pytest.raises(ConfigError):
        disc_1d(c=-1.0)
    with pytest.raises(ConfigError):
        disc_1d(rho=0.0)
    with pytest.raises(ConfigError):
        build(Grid(dim=1, nx=4, h=1.0, bc=("dirichlet", "bogus")), 1.0,
              {"modulus": 1.0})
    with pytest.raises(ConfigError):
        Grid(dim=3, nx=4, h=1.0, bc=("dirichlet",) * 6)


def test_traction_pattern_layout():
    d1 = disc_1d(nx=4, bc=("traction", "dirichlet"))
    p = d1.traction_pattern("left")
    assert p[0] == 1.0 and np.sum(p) == 1.0
    d2 = disc_2d(nx=3, ny=3)
    p2 = d2.traction_pattern("top")
    assert_allclose(d2.syy_view(p2)[:, -1], 1.0)
    assert np.sum(p2) == d2.grid.nx


def test_layout_mismatch_raises():
    from stagdyn.errors import LayoutError

    d = disc_1d(nx=4)
    with pytest.raises(LayoutError):
        d.apply_E(np.zeros(d.n_v + 1))
    with pytest.raises(LayoutError):
        d.apply_C(np.zeros(d.n_s - 1))
    with pytest.raises(LayoutError):
        d.apply_E_adjoint(np.zeros(3))
