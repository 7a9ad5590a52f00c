"""Headless invariant suite behind the ``check`` subcommand.

Mirrors the core property tests without requiring pytest: each check
asserts a structural invariant of the discretization, the solvers or the
integrator on small deterministic instances.
"""

import numpy as np

from .grid import Grid, build
from .integrator import (
    IntegratorConfig,
    initial_state,
    max_stable_timestep,
    no_loading,
    run_simulation,
)
from .materials import (
    BiotMaterial,
    DamageMaterial,
    ElasticMaterial,
    PlasticCreepMaterial,
)
from .oracle import (
    brute_force_prox,
    dense_generalized_rayleigh,
    gradient_check,
    scan_internal_objective,
)


def _disc_1d(nx=24, h=1.0 / 24.0, c=1.0, bc=("dirichlet", "dirichlet")):
    return build(Grid(dim=1, nx=nx, h=h, bc=bc), 1.0, {"modulus": c})


def _disc_2d(bc=("dirichlet", "neumann", "traction", "dirichlet")):
    return build(Grid(dim=2, nx=5, ny=4, h=0.2, bc=bc), 1.0,
                 {"bulk_modulus": 1.0, "shear_modulus": 0.6})


def check_adjointness(rng):
    for d in (_disc_1d(bc=("neumann", "traction")), _disc_2d()):
        for _ in range(50):
            v = rng.standard_normal(d.n_v)
            s = rng.standard_normal(d.n_s)
            lhs = d.sdot(s, d.apply_E(v))
            rhs = float(np.sum(d.apply_E_adjoint(s) * v))
            assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs), abs(rhs))


def check_laplacian_stress(rng):
    for d in (_disc_1d(), _disc_2d()):
        a = rng.standard_normal(d.n_s)
        b = rng.standard_normal(d.n_s)
        la = d.laplacian_stress(a)
        assert d.sdot(la, a) <= 1e-12
        assert abs(d.sdot(la, b) - d.sdot(a, d.laplacian_stress(b))) <= 1e-12 * max(
            1.0, abs(d.sdot(la, b)))


def check_gradients(rng):
    d = _disc_1d(nx=6)
    mats = [ElasticMaterial(),
            PlasticCreepMaterial(viscosity=0.6, sigma_y=0.2, hardening=0.3),
            BiotMaterial(biot_modulus=0.5, biot_coefficient=0.4,
                         capillarity=0.05),
            DamageMaterial(eps0=0.3, eps=0.1, g_c=1.0, viscosity=0.4)]
    for m in mats:
        assert gradient_check(m, d, samples=2, seed=int(rng.integers(1 << 30))) <= 1e-6


def check_prox_scans(rng):
    d = _disc_1d(nx=2, h=1.0)
    m = PlasticCreepMaterial(viscosity=0.7, sigma_y=0.3, hardening=0.2)
    for _ in range(10):
        sigma = rng.standard_normal(d.n_s)
        zk = 0.3 * rng.standard_normal(d.n_s)
        tau = float(rng.uniform(0.05, 0.4))
        z, _ = m.internal_step(d, sigma, zk, tau)
        ref = scan_internal_objective(m, d, sigma, zk, tau, 1)
        assert abs(z[1] - ref) < 1e-6


def check_elastic_conservation(rng):
    d = _disc_1d(nx=50, h=0.02)
    m = ElasticMaterial()
    x = np.linspace(0, 1, d.n_s)
    st = initial_state(d, m, sigma=np.sin(np.pi * x))
    e0 = m.phi(d, st.sigma, st.z)
    tau_max, _ = max_stable_timestep(d, m, st.z, 0.1)
    cfg = IntegratorConfig(tau=0.9 * tau_max, t_end=500 * 0.9 * tau_max)
    _, ledgers = run_simulation(d, m, no_loading(d), cfg, st)
    drift = max(abs(l.total - e0) for l in ledgers)
    assert drift <= 1e-10 * e0


def check_energy_inequality(rng):
    d = _disc_1d(nx=30, h=1.0 / 30.0)
    mats = [PlasticCreepMaterial(viscosity=0.5, sigma_y=0.05),
            BiotMaterial(biot_modulus=0.4, biot_coefficient=0.4,
                         capillarity=0.02, mobility=0.5),
            DamageMaterial(eps0=1.0, eps=0.05, g_c=0.4, viscosity=0.3)]
    x = np.linspace(0, 1, d.n_s)
    for m in mats:
        st = initial_state(d, m, sigma=0.4 * np.sin(np.pi * x))
        e0 = max(1.0, m.phi(d, st.sigma, st.z))
        tau_max, _ = max_stable_timestep(d, m, m.z_init(d), 0.1)
        cfg = IntegratorConfig(tau=tau_max, t_end=150 * tau_max)
        _, ledgers = run_simulation(d, m, no_loading(d), cfg, st)
        assert max(abs(l.residual) for l in ledgers) <= 1e-9 * e0
        assert min(l.stability_coeff for l in ledgers) >= 0.1 - 1e-12


def check_biot_mass_conservation(rng):
    d = _disc_1d(nx=20, h=0.05)
    m = BiotMaterial(biot_modulus=0.5, biot_coefficient=0.5, capillarity=0.02)
    z = m.z_init(d) + 0.2 * rng.standard_normal(d.zs_n)
    total0 = d.zdot(z, np.ones_like(z))
    for _ in range(30):
        z, _ = m.internal_step(d, rng.standard_normal(d.n_s), z, 0.05)
    assert abs(d.zdot(z, np.ones_like(z)) - total0) <= 1e-10 * max(
        1.0, abs(total0))


def check_damage_structure(rng):
    d = _disc_1d(nx=12, h=1.0 / 12.0)
    m = DamageMaterial(eps0=1.0, eps=0.05, g_c=0.4, viscosity=0.3)
    alpha = np.ones(d.zs_n)
    for _ in range(50):
        sigma = 0.6 * rng.standard_normal(d.n_s)
        nxt, _ = m.internal_step(d, sigma, alpha, 0.05)
        assert np.all(nxt <= alpha + 1e-12)
        alpha = nxt
    assert np.all(alpha >= -1e-12)


def check_cfl_estimator(rng):
    d = _disc_1d(nx=10, h=0.1, c=2.0)
    m = ElasticMaterial()
    _, lam = max_stable_timestep(d, m, m.z_init(d), 0.0)
    lam_ref = dense_generalized_rayleigh(d, m, m.z_init(d))
    assert abs(lam - lam_ref) <= 1e-5 * lam_ref


def check_radial_return(rng):
    from .solvers import prox_radial_return

    for _ in range(30):
        trial = float(rng.standard_normal() * 2.0)
        sy = float(rng.uniform(0.0, 1.0))
        fac = float(rng.uniform(0.5, 3.0))
        got = prox_radial_return(trial, sy, fac)
        ref = brute_force_prox(
            lambda x: sy * abs(x) + 0.5 * fac * x * x - trial * x, -6.0, 6.0)
        assert abs(got - ref) < 1e-6


ALL_CHECKS = [
    ("adjointness", check_adjointness),
    ("laplacian-stress", check_laplacian_stress),
    ("material-gradients", check_gradients),
    ("prox-vs-scan", check_prox_scans),
    ("radial-return", check_radial_return),
    ("elastic-conservation", check_elastic_conservation),
    ("energy-inequality", check_energy_inequality),
    ("biot-mass-conservation", check_biot_mass_conservation),
    ("damage-structure", check_damage_structure),
    ("cfl-estimator", check_cfl_estimator),
]


def run_checks(seed=1234, quiet=False, out=print):
    """Run every invariant check; returns the number of failures."""
    failures = 0
    for name, fn in ALL_CHECKS:
        rng = np.random.default_rng(seed)
        try:
            fn(rng)
        except Exception as exc:  # report and continue
            failures += 1
            out(f"FAIL {name}: {exc}")
        else:
            if not quiet:
                out(f"PASS {name}")
    return failures
