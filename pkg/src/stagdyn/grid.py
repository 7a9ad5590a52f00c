"""Staggered finite-difference discretization in 1D and 2D.

The discrete operator pair (E, E*) is kept exactly adjoint with respect to
the quadrature-weighted stress inner product and the plain velocity pairing:

    <S, E v>_w = <E* S, v>      for all fields S, v,

because E* is implemented as the algebraic weighted transpose of the same
stencil, never as a separate discretization.  Every energy identity of the
integrator relies on this.

Layouts
-------
1D (nx cells, spacing h):
    velocity at cell centers (nx,), stress at nodes (nx+1,).
2D (nx x ny cells, Virieux staggering, Mandel components):
    v_x on vertical edges (nx+1, ny), v_y on horizontal edges (nx, ny+1);
    sigma_xx and sigma_yy at cell centers (nx, ny), and sqrt(2)*sigma_xy at
    vertices (nx+1, ny+1).  The sqrt(2) (Mandel) scaling makes all stress
    inner products plain weighted Euclidean products.

Boundary kinds per side:
    "dirichlet"  clamped; zero ghost velocities, boundary stress rows active,
                 on-boundary normal velocities pinned (2D);
    "neumann"    traction-free; the side's boundary stress DOFs are masked
                 out of the operator range;
    "traction"   structurally identical to "dirichlet", marks the side as a
                 target for the boundary stress drive D.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, LayoutError

BC_KINDS = ("dirichlet", "neumann", "traction")

_SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class Grid:
    """Uniform structured grid with per-side boundary kinds.

    Parameters
    ----------
    dim : int
        1 or 2.
    nx, ny : int
        Cell counts (ny ignored in 1D).
    h : float
        Uniform spacing.
    bc : tuple of str
        Boundary kinds, ("left", "right") in 1D and
        ("left", "right", "bottom", "top") in 2D.
    """

    dim: int
    nx: int
    h: float
    bc: tuple
    ny: int = 0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError(f"unsupported dim {self.dim}", "grid.dim")
        if self.nx < 2:
            raise ConfigError("nx must be >= 2", "grid.nx")
        if self.dim == 2 and self.ny < 2:
            raise ConfigError("ny must be >= 2", "grid.ny")
        if not self.h > 0:
            raise ConfigError("h must be > 0", "grid.h")
        nsides = 2 * self.dim
        if len(self.bc) != nsides:
            raise ConfigError(f"expected {nsides} boundary kinds", "grid.bc")
        for kind in self.bc:
            if kind not in BC_KINDS:
                raise ConfigError(f"unknown boundary kind {kind!r}", "grid.bc")


class Discretization:
    """Assembled operators, weights and masks for one grid.

    Immutable after construction; all ``apply_*`` methods are read-only.
    Use :func:`build` to construct.
    """

    def __init__(self, grid, rho, moduli):
        self.grid = grid
        self.dim = grid.dim
        self.h = grid.h
        self.rho = float(rho)
        if not self.rho > 0:
            raise ConfigError("density must be > 0", "material.rho")

        if self.dim == 1:
            self._init_1d(moduli)
        else:
            self._init_2d(moduli)

        if not np.all(self.mass > 0):
            raise ConfigError("zero mass entry in discretization", "grid")

    # ------------------------------------------------------------------
    # construction
    # ------------------------------------------------------------------

    def _init_1d(self, moduli):
        grid = self.grid
        nx, h = grid.nx, grid.h
        self.c_mod = float(moduli["modulus"])
        if not self.c_mod > 0:
            raise ConfigError("modulus must be > 0", "material.modulus")

        self.n_v = nx
        self.n_s = nx + 1
        self.mass = np.full(nx, self.rho * h)
        self.v_active = np.ones(nx, dtype=bool)

        w = np.full(nx + 1, h)
        w[0] = w[-1] = 0.5 * h
        self.sweights = w
        act = np.ones(nx + 1, dtype=bool)
        if grid.bc[0] == "neumann":
            act[0] = False
        if grid.bc[1] == "neumann":
            act[-1] = False
        self.s_active = act

        # stress-layout gradient graph (per component == whole layout in 1D);
        # edges touching masked nodes are dropped (natural boundary condition)
        ew = np.full(nx, h)
        ew *= act[:-1] * act[1:]
        self._lap_edge_w = ew

        # scalar internal-variable layout: colocated with stress nodes
        self.zs_n = nx + 1
        self.zs_weights = w.copy()
        self._z_edge_w = np.full(nx, h)

    def _init_2d(self, moduli):
        grid = self.grid
        nx, ny, h = grid.nx, grid.ny, grid.h
        self.k_mod = float(moduli["bulk_modulus"])
        self.g_mod = float(moduli["shear_modulus"])
        if not (self.k_mod > 0 and self.g_mod > 0):
            raise ConfigError("bulk and shear moduli must be > 0", "material")

        self.shape_vx = (nx + 1, ny)
        self.shape_vy = (nx, ny + 1)
        self.shape_c = (nx, ny)
        self.shape_vert = (nx + 1, ny + 1)
        nvx = (nx + 1) * ny
        nvy = nx * (ny + 1)
        nc = nx * ny
        nvert = (nx + 1) * (ny + 1)
        self.n_v = nvx + nvy
        self.n_s = 2 * nc + nvert
        self._vx_sl = slice(0, nvx)
        self._vy_sl = slice(nvx, nvx + nvy)
        self._xx_sl = slice(0, nc)
        self._yy_sl = slice(nc, 2 * nc)
        self._xy_sl = slice(2 * nc, 2 * nc + nvert)

        left, right, bottom, top = grid.bc

        mass = np.empty(self.n_v)
        mvx = np.full(self.shape_vx, self.rho * h * h)
        mvx[0, :] *= 0.5
        mvx[-1, :] *= 0.5
        mvy = np.full(self.shape_vy, self.rho * h * h)
        mvy[:, 0] *= 0.5
        mvy[:, -1] *= 0.5
        mass[self._vx_sl] = mvx.ravel()
        mass[self._vy_sl] = mvy.ravel()
        self.mass = mass

        v_active = np.ones(self.n_v, dtype=bool)
        avx = np.ones(self.shape_vx, dtype=bool)
        avy = np.ones(self.shape_vy, dtype=bool)
        if left in ("dirichlet", "traction"):
            avx[0, :] = False
        if right in ("dirichlet", "traction"):
            avx[-1, :] = False
        if bottom in ("dirichlet", "traction"):
            avy[:, 0] = False
        if top in ("dirichlet", "traction"):
            avy[:, -1] = False
        v_active[self._vx_sl] = avx.ravel()
        v_active[self._vy_sl] = avy.ravel()
        self.v_active = v_active

        w = np.empty(self.n_s)
        w[self._xx_sl] = h * h
        w[self._yy_sl] = h * h
        fx = np.ones(nx + 1)
        fx[0] = fx[-1] = 0.5
        fy = np.ones(ny + 1)
        fy[0] = fy[-1] = 0.5
        wvert = h * h * np.outer(fx, fy)
        w[self._xy_sl] = wvert.ravel()
        self.sweights = w

        act = np.ones(self.n_s, dtype=bool)
        avert = np.ones(self.shape_vert, dtype=bool)
        if left == "neumann":
            avert[0, :] = False
        if right == "neumann":
            avert[-1, :] = False
        if bottom == "neumann":
            avert[:, 0] = False
        if top == "neumann":
            avert[:, -1] = False
        act[self._xy_sl] = avert.ravel()
        self.s_active = act

        # per-component gradient-graph edge weights for laplacian_stress
        self._lap_c_wx = np.full((nx - 1, ny), h * h)
        self._lap_c_wy = np.full((nx, ny - 1), h * h)
        vwx = 0.5 * (wvert[:-1, :] + wvert[1:, :])
        vwx *= avert[:-1, :] * avert[1:, :]
        vwy = 0.5 * (wvert[:, :-1] + wvert[:, 1:])
        vwy *= avert[:, :-1] * avert[:, 1:]
        self._lap_v_wx = vwx
        self._lap_v_wy = vwy

        # scalar internal-variable layout: cell centers
        self.zs_n = nc
        self.zs_weights = np.full(nc, h * h)
        self._z_edge_wx = np.full((nx - 1, ny), h * h)
        self._z_edge_wy = np.full((nx, ny - 1), h * h)

        # adjacent-center counts per vertex (for damage averaging)
        nadj = np.full(self.shape_vert, 4.0)
        nadj[0, :] /= 2.0
        nadj[-1, :] /= 2.0
        nadj[:, 0] /= 2.0
        nadj[:, -1] /= 2.0
        self._vert_nadj = nadj

    # ------------------------------------------------------------------
    # views
    # ------------------------------------------------------------------

    def vx_view(self, v):
        return v[self._vx_sl].reshape(self.shape_vx)

    def vy_view(self, v):
        return v[self._vy_sl].reshape(self.shape_vy)

    def sxx_view(self, s):
        return s[self._xx_sl].reshape(self.shape_c)

    def syy_view(self, s):
        return s[self._yy_sl].reshape(self.shape_c)

    def sxy_view(self, s):
        return s[self._xy_sl].reshape(self.shape_vert)

    def zeros_v(self):
        return np.zeros(self.n_v)

    def zeros_s(self):
        return np.zeros(self.n_s)

    def _check_v(self, v):
        if v.shape != (self.n_v,):
            raise LayoutError(f"velocity field shape {v.shape} != ({self.n_v},)")

    def _check_s(self, s):
        if s.shape != (self.n_s,):
            raise LayoutError(f"stress field shape {s.shape} != ({self.n_s},)")

    # ------------------------------------------------------------------
    # core operators
    # ------------------------------------------------------------------

    def apply_E(self, v):
        """Discrete symmetric gradient, velocity layout -> stress layout."""
        self._check_v(v)
        if self.dim == 1:
            out = kernels.grad_1d(v, self.h)
        else:
            exx, eyy, sxy = kernels.grad_2d(
                self.vx_view(v), self.vy_view(v), self.h
            )
            out = np.concatenate([exx.ravel(), eyy.ravel(), sxy.ravel()])
        out[~self.s_active] = 0.0
        return out

    def apply_E_adjoint(self, s):
        """Exact weighted transpose of :meth:`apply_E`.

        Satisfies ``<S, E v>_w == <E* S, v>`` for all fields, with the
        stress pairing weighted by the quadrature weights and the velocity
        pairing unweighted (mass-free).
        """
        self._check_s(s)
        sw = self.sweights * np.where(self.s_active, s, 0.0)
        if self.dim == 1:
            return kernels.grad_1d_t(sw, self.h)
        vx, vy = kernels.grad_2d_t(
            sw[self._xx_sl].reshape(self.shape_c),
            sw[self._yy_sl].reshape(self.shape_c),
            sw[self._xy_sl].reshape(self.shape_vert),
            self.h,
        )
        return np.concatenate([vx.ravel(), vy.ravel()])

    def apply_C(self, e):
        """Generalized elasticity map, strain layout -> stress layout."""
        self._check_s(e)
        if self.dim == 1:
            return self.c_mod * e
        K, G = self.k_mod, self.g_mod
        exx = self.sxx_view(e)
        eyy = self.syy_view(e)
        out = np.empty_like(e)
        self.sxx_view(out)[:] = (K + G) * exx + (K - G) * eyy
        self.syy_view(out)[:] = (K - G) * exx + (K + G) * eyy
        self.sxy_view(out)[:] = 2.0 * G * self.sxy_view(e)
        return out

    def apply_C_adjoint(self, s):
        """Adjoint of the elasticity map; equals apply_C (symmetric tensor)."""
        return self.apply_C(s)

    def apply_C_inv(self, s):
        """Inverse elasticity map (compliance)."""
        self._check_s(s)
        if self.dim == 1:
            return s / self.c_mod
        K, G = self.k_mod, self.g_mod
        det = 4.0 * K * G
        sxx = self.sxx_view(s)
        syy = self.syy_view(s)
        out = np.empty_like(s)
        self.sxx_view(out)[:] = ((K + G) * sxx - (K - G) * syy) / det
        self.syy_view(out)[:] = ((K + G) * syy - (K - G) * sxx) / det
        self.sxy_view(out)[:] = self.sxy_view(s) / (2.0 * G)
        return out

    def apply_I(self, s):
        """Interpolation onto the stress subspace; identity (conforming)."""
        self._check_s(s)
        return s

    # ------------------------------------------------------------------
    # stress-layout laplacian (strain-gradient regularization)
    # ------------------------------------------------------------------

    def laplacian_stress(self, s):
        """Componentwise graph laplacian on the stress layout.

        Symmetric negative-semidefinite in the weighted inner product:
        ``<L S, S>_w <= 0`` and ``<L S1, S2>_w == <S1, L S2>_w``.  Built as
        ``-(1/w) G^T (w_e G)`` with natural (no-flux) boundary edges.
        """
        self._check_s(s)
        h = self.h
        if self.dim == 1:
            g = (s[1:] - s[:-1]) / h
            acc = np.zeros_like(s)
            f = self._lap_edge_w * g / h
            acc[:-1] += f
            acc[1:] -= f
            return acc / self.sweights

        out = np.empty_like(s)
        for view, wx, wy in (
            (self.sxx_view, self._lap_c_wx, self._lap_c_wy),
            (self.syy_view, self._lap_c_wx, self._lap_c_wy),
            (self.sxy_view, self._lap_v_wx, self._lap_v_wy),
        ):
            comp = view(s)
            acc = np.zeros_like(comp)
            gx = wx * (comp[1:, :] - comp[:-1, :]) / h
            acc[:-1, :] += gx / h
            acc[1:, :] -= gx / h
            gy = wy * (comp[:, 1:] - comp[:, :-1]) / h
            acc[:, :-1] += gy / h
            acc[:, 1:] -= gy / h
            view(out)[:] = acc
        return out / self.sweights

    # ------------------------------------------------------------------
    # scalar internal-variable layout helpers
    # ------------------------------------------------------------------

    def z_scalar_view(self, z):
        """2D view of a scalar internal field (identity reshape in 1D)."""
        if self.dim == 1:
            return z
        return z.reshape(self.shape_c)

    def grad_z(self, z):
        """Gradient of a scalar internal field onto its interior edges."""
        if self.dim == 1:
            return (z[1:] - z[:-1]) / self.h
        f = self.z_scalar_view(z)
        gx = (f[1:, :] - f[:-1, :]) / self.h
        gy = (f[:, 1:] - f[:, :-1]) / self.h
        return np.concatenate([gx.ravel(), gy.ravel()])

    def grad_z_norm2(self, z, mobility=1.0):
        """Weighted squared gradient norm ``sum_e w_e m |grad z|^2``."""
        g = self.grad_z(z)
        if self.dim == 1:
            return float(np.sum(self._z_edge_w * mobility * g * g))
        nxe = self._z_edge_wx.size
        gx = g[:nxe].reshape(self._z_edge_wx.shape)
        gy = g[nxe:].reshape(self._z_edge_wy.shape)
        return float(
            np.sum(self._z_edge_wx * mobility * gx * gx)
            + np.sum(self._z_edge_wy * mobility * gy * gy)
        )

    def div_z(self, flux):
        """Negative weighted transpose of :meth:`grad_z` (discrete div).

        ``<div_z q, z>_wz = -<q, grad_z z>_we`` for all fields; with the
        no-flux convention built in, constants are annihilated by the
        transpose so the weighted mean of ``div_z q`` vanishes.
        """
        if self.dim == 1:
            acc = np.zeros(self.zs_n)
            f = self._z_edge_w * flux / self.h
            acc[:-1] += f
            acc[1:] -= f
            return acc / self.zs_weights
        nxe = self._z_edge_wx.size
        qx = flux[:nxe].reshape(self._z_edge_wx.shape)
        qy = flux[nxe:].reshape(self._z_edge_wy.shape)
        acc = np.zeros(self.shape_c)
        fx = self._z_edge_wx * qx / self.h
        acc[:-1, :] += fx
        acc[1:, :] -= fx
        fy = self._z_edge_wy * qy / self.h
        acc[:, :-1] += fy
        acc[:, 1:] -= fy
        return acc.ravel() / self.zs_weights

    def lap_z(self, z, coeff=1.0):
        """Scalar graph laplacian ``div_z(coeff * grad_z z)``; NSD."""
        return self.div_z(coeff * self.grad_z(z))

    # ------------------------------------------------------------------
    # vertex <-> center transfer (2D damage shear coupling)
    # ------------------------------------------------------------------

    def avg_centers_to_vertices(self, c):
        """Plain average of a center field over the centers adjacent to
        each vertex (2, or 1 at corners, on the boundary)."""
        f = c.reshape(self.shape_c)
        acc = np.zeros(self.shape_vert)
        acc[:-1, :-1] += f
        acc[1:, :-1] += f
        acc[:-1, 1:] += f
        acc[1:, 1:] += f
        return acc / self._vert_nadj

    def scatter_vertices_to_centers(self, u):
        """Weighted transpose of :meth:`avg_centers_to_vertices` against the
        (vertex-weight, center-weight) pairing: each vertex value is split
        evenly among its adjacent centers."""
        g = (self.sweights[self._xy_sl].reshape(self.shape_vert) * u.reshape(self.shape_vert)
             / self._vert_nadj)
        acc = np.zeros(self.shape_c)
        acc += g[:-1, :-1]
        acc += g[1:, :-1]
        acc += g[:-1, 1:]
        acc += g[1:, 1:]
        return (acc / self.zs_weights.reshape(self.shape_c)).ravel()

    # ------------------------------------------------------------------
    # inner products & loading patterns
    # ------------------------------------------------------------------

    def sdot(self, a, b):
        """Weighted stress-layout inner product (fixed reduction order)."""
        return float(np.sum(self.sweights * a * b))

    def zdot(self, a, b):
        """Weighted scalar-internal-layout inner product."""
        return float(np.sum(self.zs_weights * a * b))

    def traction_pattern(self, side):
        """Unit stress-space pattern driven by the boundary source G.

        1D: the boundary node of the side.  2D: the normal-stress component
        in the cell layer adjacent to the side.
        """
        s = self.zeros_s()
        if self.dim == 1:
            s[0 if side == "left" else -1] = 1.0
            return s
        if side == "left":
            self.sxx_view(s)[0, :] = 1.0
        elif side == "right":
            self.sxx_view(s)[-1, :] = 1.0
        elif side == "bottom":
            self.syy_view(s)[:, 0] = 1.0
        elif side == "top":
            self.syy_view(s)[:, -1] = 1.0
        else:
            raise ConfigError(f"unknown side {side!r}", "loading.traction_side")
        return s

    def sigma_physical(self, s):
        """Snapshot copy with the Mandel sqrt(2) scaling removed (2D)."""
        out = s.copy()
        if self.dim == 2:
            self.sxy_view(out)[:] /= _SQRT2
        return out


def build(grid, rho, moduli):
    """Assemble a :class:`Discretization` for ``grid``.

    Parameters
    ----------
    grid : Grid
    rho : float
        Mass density (uniform).
    moduli : dict
        ``{"modulus": C}`` in 1D, ``{"bulk_modulus": K, "shear_modulus": G}``
        in 2D.
    """
    return Discretization(grid, rho, moduli)
