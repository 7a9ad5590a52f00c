"""Three-step staggered time integrator with per-step energy accounting.

One step advances (Sigma, z, v, u) in this order (the order matters for
nonlinear materials and for the exact cancellation in the energy ledger):

1. proto-stress:   Sigma' = Sigma + tau * (I C E v + D)
2. internal:       dPsi((z'-z)/tau) + dPhi_z(Sigma', (z'+z)/2)  contains 0
3. velocity:       v' = v - tau * M^-1 (E* S' - F),
                   S' = C* I* dPhi_s(Sigma', (z'+z)/2),
                   u' = u + tau * v'

Every update is centered: after the bootstrap, Sigma lives on half-shifted
time levels while v and z live on integer levels, so the proto-stress rate
is centered at the integer levels and both the internal force and the true
stress are centered at the half levels (the internal variable enters S
through the same midpoint as the flow rule).  This keeps the scheme second
order in time for all shipped materials.

The very first step is special: the proto-stress bootstraps with a half
step (tau/2), which places Sigma on the half-shifted leap-frog time levels;
the kinetic ledger then uses the fictitious level -1 velocity -v0.

The per-step ledger checks the discrete energy identity

    [E^{k+1} - E^k] + tau*Xi  <=  tau*<F, v^k> + <avg dPhi_s, dG^k>
                                  - <z-anchored jumps of dPhi_s, dSigma>

with  E^{k+1} = 1/2 <M v^{k+1}, v^k> + Phi(Sigma^{k+1}, z^{k+1}),  the
averages taken over the two half-level gradients dPhi_s(Sigma, z-mid)
entering the velocity updates, and the jump terms measuring how far those
midpoints sit from the z^k anchor of the quadratic expansion of Phi in
Sigma.  Equality holds whenever the dissipation potential is smooth away
from zero.  For the bootstrap step the exact half-step variant of the
identity is used, with the physical initial energy T(v0) + Phi(Sigma0, z0)
as the left anchor.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import (
    CflViolationError,
    ConfigError,
    EnergyInequalityError,
    InstabilityError,
    NonFiniteFieldError,
)

ENERGY_BLOWUP_FACTOR = 1e6


@dataclass
class State:
    """Discrete fields at one time level (plus leap-frog bookkeeping)."""

    u: np.ndarray
    v: np.ndarray
    sigma: np.ndarray
    z: np.ndarray
    k: int = 0
    v_prev: np.ndarray = None
    z_prev: np.ndarray = None

    def __post_init__(self):
        if self.v_prev is None:
            # fictitious level -1 velocity; makes the level-0 staggered
            # kinetic term vanish in the a-priori estimate
            self.v_prev = -self.v.copy()
        if self.z_prev is None:
            self.z_prev = self.z.copy()

    def copy(self):
        return State(self.u.copy(), self.v.copy(), self.sigma.copy(),
                     self.z.copy(), self.k, self.v_prev.copy(),
                     self.z_prev.copy())


def initial_state(disc, material, u=None, v=None, sigma=None, z=None):
    """Assemble a consistent level-0 state, masking inactive stress DOFs."""
    u = disc.zeros_v() if u is None else np.asarray(u, dtype=float).copy()
    v = disc.zeros_v() if v is None else np.asarray(v, dtype=float).copy()
    sigma = disc.zeros_s() if sigma is None else np.asarray(sigma, dtype=float).copy()
    z = material.z_init(disc) if z is None else np.asarray(z, dtype=float).copy()
    sigma[~disc.s_active] = 0.0
    v[~disc.v_active] = 0.0
    return State(u=u, v=v, sigma=sigma, z=z, k=0)


@dataclass
class Loading:
    """Constant body force plus an optional boundary stress drive.

    ``body_force`` is a covector on the velocity layout, constant in time
    (the stability estimate assumes it).  The drive enters as
    ``D^k = [G((k+1/2) tau) - G((k-1/2) tau)] / tau`` with
    ``G(t) = g(t) * pattern``.
    """

    body_force: np.ndarray
    traction: Optional[Callable] = None      # scalar g(t)
    traction_pattern: Optional[np.ndarray] = None

    def g_field(self, t):
        if self.traction is None:
            return None
        return self.traction(t) * self.traction_pattern

    def d_increment(self, k, tau):
        """G-increment accumulated by step k (time units already applied)."""
        if self.traction is None:
            return None
        if k == 0:
            return (self.traction(0.5 * tau) - self.traction(0.0)) * self.traction_pattern
        lo = self.traction((k - 0.5) * tau)
        hi = self.traction((k + 0.5) * tau)
        return (hi - lo) * self.traction_pattern


def no_loading(disc):
    return Loading(body_force=disc.zeros_v())


@dataclass
class IntegratorConfig:
    """Step size, horizon and safety settings.

    ``eta`` is the CFL safety margin in (0, 1): the fraction of the stored
    energy guaranteed to survive the staggered kinetic split at every step.
    ``cfl_recheck_every = 0`` disables rechecking.  When
    ``enforce_energy_inequality`` is set, a step whose ledger residual
    exceeds ``energy_tol * max(1, |E0|)`` raises.
    """

    tau: float
    t_end: float
    eta: float = 0.1
    cfl_recheck_every: int = 0
    enforce_energy_inequality: bool = False
    energy_tol: float = 1e-9
    skip_cfl_check: bool = False

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError("tau must be > 0", "integrator.tau")
        if not 0 < self.eta < 1:
            raise ConfigError("eta must be in (0, 1)", "integrator.eta")
        if not self.t_end > 0:
            raise ConfigError("t_end must be > 0", "integrator.t_end")


@dataclass
class EnergyLedger:
    """Per-step energy bookkeeping (all quantities in energy units)."""

    step: int
    time: float
    kinetic: float                # 1/2 <M v^{k+1}, v^k>
    stored: float                 # Phi(Sigma^{k+1}, z^{k+1})
    dissipated_step: float        # tau * Xi
    external_work_step: float     # loading terms of the identity
    stability_coeff: float        # a^{k+1} of the positivity split
    residual: float               # identity defect, <= 0 up to tolerance
    energy_prev: float            # E^k (left anchor of the identity)
    flagged: bool = False

    @property
    def total(self):
        return self.kinetic + self.stored


# ---------------------------------------------------------------------------
# substeps
# ---------------------------------------------------------------------------

def _require_finite(name, arr):
    if arr.size and not np.all(np.isfinite(arr)):
        raise NonFiniteFieldError(f"non-finite values in {name}")


def step_sigma(state, disc, loading, cfg):
    """Explicit proto-stress update (half step when bootstrapping)."""
    _require_finite("velocity", state.v)
    _require_finite("proto-stress", state.sigma)
    tau_eff = 0.5 * cfg.tau if state.k == 0 else cfg.tau
    sigma_next = state.sigma + tau_eff * disc.apply_I(
        disc.apply_C(disc.apply_E(state.v)))
    dg = loading.d_increment(state.k, cfg.tau)
    if dg is not None:
        sigma_next = sigma_next + dg
        sigma_next[~disc.s_active] = 0.0
    return sigma_next


def step_internal(state, sigma_next, material, disc, cfg):
    """Implicit midpoint step for the internal variable (order matters:
    it sees the already-updated proto-stress)."""
    return material.internal_step(disc, sigma_next, state.z, cfg.tau)


def step_velocity(state, sigma_next, z_next, disc, material, loading, cfg):
    """Explicit velocity and displacement update from the new true stress.

    The true stress is evaluated at the internal-variable midpoint
    (z' + z)/2, the same time level as the updated proto-stress, which
    keeps the update centered (second order) for coupled materials.
    """
    z_mid = 0.5 * (z_next + state.z) if z_next.size else z_next
    s_true = material.true_stress(disc, sigma_next, z_mid)
    force = loading.body_force - disc.apply_E_adjoint(s_true)
    dv = (cfg.tau / disc.mass) * force
    dv[~disc.v_active] = 0.0
    v_next = state.v + dv
    u_next = state.u + cfg.tau * v_next
    return v_next, u_next, s_true


# ---------------------------------------------------------------------------
# energy accounting
# ---------------------------------------------------------------------------

def _kinetic_pair(disc, va, vb):
    return 0.5 * float(np.sum(disc.mass * va * vb))


def stability_coefficient(disc, material, sigma, z, tau, fallback=1.0):
    """Positivity coefficient of the staggered energy at one state.

    With F = 0 the staggered energy splits exactly as

        1/2 <M v', v> + Phi  =  T((v'+v)/2) + a * Phi,
        a = 1 - (tau^2/8) <E*S, M^-1 E*S> / Phi,

    because v' - v = -tau M^-1 E*S contributes T((v'-v)/2) =
    (tau^2/8) <E*S, M^-1 E*S> to the kinetic split.  a >= eta is
    guaranteed whenever tau <= max_stable_timestep(eta).
    """
    phi = material.phi(disc, sigma, z)
    if phi <= 0.0:
        return fallback
    s_true = material.true_stress(disc, sigma, z)
    f = disc.apply_E_adjoint(s_true)
    f[~disc.v_active] = 0.0
    quad = float(np.sum(f * f / disc.mass))
    return 1.0 - 0.125 * tau * tau * quad / phi


def energy_audit(prev, nxt, disc, material, loading, cfg, step_info=None):
    """Populate the ledger for the step ``prev -> nxt`` (pure diagnostic).

    The residual is the defect of the exact per-step energy identity of
    the scheme (midpoint-in-z true stress); it vanishes to round-off when
    the dissipation potential is smooth away from zero and is <= 0 (up to
    solver tolerance) otherwise.
    """
    tau = cfg.tau
    k = prev.k
    has_z = bool(material.z_size(disc))
    z_mid_next = 0.5 * (nxt.z + prev.z) if has_z else nxt.z
    phi_next = material.phi(disc, nxt.sigma, nxt.z)
    kinetic = _kinetic_pair(disc, nxt.v, prev.v)
    if has_z:
        diss = tau * material.step_dissipation(disc, prev.z, nxt.z, tau,
                                               step_info or {})
    else:
        diss = 0.0
    dsig = nxt.sigma - prev.sigma
    dphi_mid_next = material.dphi_dsigma(disc, nxt.sigma, z_mid_next)

    if k == 0:
        # exact half-step bootstrap identity, anchored at the physical
        # initial energy T(v0) + Phi(Sigma0, z0)
        energy_prev = _kinetic_pair(disc, prev.v, prev.v) + material.phi(
            disc, prev.sigma, prev.z)
        p_avg = 0.5 * (material.dphi_dsigma(disc, nxt.sigma, prev.z)
                       + material.dphi_dsigma(disc, prev.sigma, prev.z))
        work = 0.5 * tau * float(np.sum(loading.body_force * prev.v))
        dg = loading.d_increment(0, tau)
        if dg is not None:
            work += disc.sdot(p_avg, dg)
        # <C*(P_avg - dPhi_s(Sigma', z-mid)), E v0>_w closes the half step
        s_gap = disc.apply_C_adjoint(disc.apply_I(p_avg - dphi_mid_next))
        correction = 0.5 * tau * disc.sdot(s_gap, disc.apply_E(prev.v))
        residual = (kinetic + phi_next) - energy_prev + diss - work - correction
    else:
        energy_prev = _kinetic_pair(disc, prev.v, prev.v_prev) + material.phi(
            disc, prev.sigma, prev.z)
        work = tau * float(np.sum(loading.body_force * prev.v))
        if has_z:
            z_mid_prev = 0.5 * (prev.z + prev.z_prev)
            dphi_mid_prev = material.dphi_dsigma(disc, prev.sigma, z_mid_prev)
            # jump of the stress-side gradient away from the z^k anchor,
            # for both half-level stresses entering the velocity average
            jump = 0.5 * (dphi_mid_next
                          - material.dphi_dsigma(disc, nxt.sigma, prev.z))
            jump += 0.5 * (dphi_mid_prev
                           - material.dphi_dsigma(disc, prev.sigma, prev.z))
            correction = disc.sdot(jump, dsig)
        else:
            dphi_mid_prev = material.dphi_dsigma(disc, prev.sigma, prev.z)
            correction = 0.0
        dg = loading.d_increment(k, tau)
        if dg is not None:
            p_avg = 0.5 * (dphi_mid_next + dphi_mid_prev)
            work += disc.sdot(p_avg, dg)
        residual = ((kinetic + phi_next) - energy_prev + diss - work
                    + correction)

    a_coeff = stability_coefficient(disc, material, nxt.sigma, nxt.z, tau)
    return EnergyLedger(
        step=k, time=(k + 1) * tau, kinetic=kinetic, stored=phi_next,
        dissipated_step=diss, external_work_step=work,
        stability_coeff=a_coeff, residual=residual, energy_prev=energy_prev)


# ---------------------------------------------------------------------------
# advance and drive
# ---------------------------------------------------------------------------

def advance(state, disc, material, loading, cfg):
    """One full staggered step; returns (new state, ledger)."""
    sigma_next = step_sigma(state, disc, loading, cfg)
    z_next, info = step_internal(state, sigma_next, material, disc, cfg)
    v_next, u_next, _ = step_velocity(state, sigma_next, z_next, disc,
                                      material, loading, cfg)
    nxt = State(u=u_next, v=v_next, sigma=sigma_next, z=z_next,
                k=state.k + 1, v_prev=state.v.copy(),
                z_prev=state.z.copy())
    for name, arr in (("proto-stress", sigma_next), ("internal", z_next),
                      ("velocity", v_next)):
        _require_finite(name, arr)
    ledger = energy_audit(state, nxt, disc, material, loading, cfg,
                          step_info=info)
    if cfg.enforce_energy_inequality:
        tol = cfg.energy_tol * max(1.0, abs(ledger.energy_prev))
        if ledger.residual > tol:
            ledger.flagged = True
    return nxt, ledger


def max_stable_timestep(disc, material, z_probe, eta, tol=1e-6,
                        max_iter=200000, seed=0):
    """Largest stable time step sqrt(8 (1 - eta) / lambda).

    ``lambda`` is the largest generalized Rayleigh quotient

        sup_S  <E* C I H S, M^-1 E* C I H S> / (1/2 <H S, S>_w)

    with H the proto-stress Hessian of the stored energy at the probe
    internal state, estimated by power iteration (relative tolerance
    ``tol``).  ``z_probe`` selects the stiffness state; softening
    materials should probe the stiffest (e.g. undamaged) state.

    The bound is sharp: tau <= tau_max(eta) makes the per-state
    stability coefficient a = 1 - (tau^2/8) q(S)/Phi at least eta for
    every state whose quotient q/Phi stays below lambda, with equality
    at eta -> 0 on the marginal mode (1D elastic: tau_max -> h
    sqrt(rho/C)).  eta must lie in [0, 1) here; it is the fraction of
    the stored energy retained by the split.
    """
    if not 0 <= eta < 1:
        raise ConfigError("cfl margin eta must be in [0, 1)",
                          "integrator.eta")
    dphi0 = material.dphi_dsigma(disc, disc.zeros_s(), z_probe)

    def apply_H(s):
        return material.dphi_dsigma(disc, s, z_probe) - dphi0

    active_v = disc.v_active

    def apply_T(s):
        # T = (H/2)^-1 N = 2 C E M^-1 E* C H  (the leading H-solve cancels)
        hs = apply_H(s)
        f = disc.apply_E_adjoint(disc.apply_C_adjoint(disc.apply_I(hs)))
        f = np.where(active_v, f / disc.mass, 0.0)
        return 2.0 * disc.apply_C(disc.apply_E(f))

    rng = np.random.default_rng(seed)
    s = rng.standard_normal(disc.n_s)
    s[~disc.s_active] = 0.0
    lam = 0.0
    settled = 0
    for it in range(max_iter):
        ts = apply_T(s)
        num = disc.sdot(apply_H(ts), s)  # <N s, s>_w via symmetry
        den = 0.5 * disc.sdot(apply_H(s), s)
        if den <= 0.0:
            raise ConfigError("stored energy not positive definite at probe",
                              "material")
        lam_new = num / (2.0 * den)
        norm = np.sqrt(0.5 * disc.sdot(apply_H(ts), ts))
        if norm == 0.0:
            raise CflViolationError(np.nan, np.inf, 0.0)
        s = ts / norm
        settled = settled + 1 if abs(lam_new - lam) <= tol * abs(lam_new) else 0
        lam = lam_new
        if it > 2 and settled >= 3:
            break
    else:
        raise ConfigError(
            f"power iteration stagnated (last quotient {lam:.6g})", "cfl")
    if lam <= 0.0:
        return np.inf, lam
    return float(np.sqrt(8.0 * (1.0 - eta) / lam)), float(lam)


def run_simulation(disc, material, loading, cfg, state, z_probe=None,
                   on_step=None):
    """Drive the scheme to t_end with CFL checks and a blow-up guard.

    Calls ``on_step(state, ledger)`` after every accepted step.  Returns
    the final state and the list of ledgers.
    """
    tau = cfg.tau
    n_steps = int(round(cfg.t_end / tau))
    probe = state.z if z_probe is None else z_probe

    def check_cfl():
        tau_max, lam = max_stable_timestep(disc, material, probe, cfg.eta)
        if tau > tau_max * (1.0 + 1e-12):
            raise CflViolationError(tau, tau_max, lam)

    if not cfg.skip_cfl_check:
        check_cfl()

    ledgers = []
    e_ref = None
    for _ in range(n_steps):
        if (cfg.cfl_recheck_every and state.k > 0
                and state.k % cfg.cfl_recheck_every == 0):
            probe = state.z
            check_cfl()
        try:
            state, ledger = advance(state, disc, material, loading, cfg)
        except NonFiniteFieldError as exc:
            raise InstabilityError(state.k, str(exc)) from exc
        if e_ref is None:
            e_ref = max(1.0, abs(ledger.energy_prev))
        if ledger.total > ENERGY_BLOWUP_FACTOR * e_ref:
            raise InstabilityError(
                state.k, f"energy {ledger.total:.3e} exceeds "
                f"{ENERGY_BLOWUP_FACTOR:.0e} x initial scale")
        if cfg.enforce_energy_inequality and ledger.flagged:
            raise EnergyInequalityError(state.k, ledger.residual,
                                        cfg.energy_tol * e_ref)
        ledgers.append(ledger)
        if on_step is not None:
            on_step(state, ledger)
    return state, ledgers
