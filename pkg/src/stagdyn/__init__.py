"""Staggered explicit/implicit time integration for elastodynamics with
dissipative internal variables: a velocity/proto-stress leap-frog core, an
implicit midpoint step for the internal variable, per-step energy
accounting and a generalized CFL estimator, with plasticity/creep, Biot
poroelasticity and phase-field damage material models."""

from .errors import (
    CflViolationError,
    ConfigError,
    EnergyInequalityError,
    InstabilityError,
    LayoutError,
    NonFiniteFieldError,
    SolverError,
    StagdynError,
    UnsupportedMaterialError,
)
from .grid import Grid, Discretization, build
from .integrator import (
    EnergyLedger,
    IntegratorConfig,
    Loading,
    State,
    advance,
    energy_audit,
    initial_state,
    max_stable_timestep,
    no_loading,
    run_simulation,
    stability_coefficient,
)
from .materials import (
    BiotMaterial,
    DamageMaterial,
    ElasticMaterial,
    MaterialModel,
    PlasticCreepMaterial,
)
from .config import SimConfig, parse_config, serialize_config, build_simulation

__version__ = "0.1.0"

__all__ = [
    "BiotMaterial", "CflViolationError", "ConfigError", "DamageMaterial",
    "Discretization", "ElasticMaterial", "EnergyInequalityError",
    "EnergyLedger", "Grid", "InstabilityError", "IntegratorConfig",
    "LayoutError", "Loading", "MaterialModel", "NonFiniteFieldError",
    "PlasticCreepMaterial", "SimConfig", "SolverError", "StagdynError",
    "State", "UnsupportedMaterialError", "advance", "build",
    "build_simulation", "energy_audit", "initial_state",
    "max_stable_timestep", "no_loading", "parse_config", "run_simulation",
    "serialize_config", "stability_coefficient",
]
