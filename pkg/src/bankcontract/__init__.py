"""Optimal bank-monitoring contracts: value-function solver, contract policy
and exact-event Monte Carlo verification."""

from bankcontract.params import (
    AssumptionReport,
    DerivedQuantities,
    ParameterError,
    PoolParams,
    check_assumptions,
    derive,
    phi_beta,
    psi_beta,
)
from bankcontract.hjbsolve import (
    ConditionError,
    SolverSettings,
    ValueFunctionLevel,
    ValueFunctions,
    brute_force_sup,
    build_all,
    check_shape,
    eval_candidate,
    find_gamma,
    hjb_residual,
    solve_v1,
)
from bankcontract.policy import ContractPolicy
from bankcontract.mcsim import SimConfig, SimResult, estimate, deviation_utility, simulate_path

__version__ = "0.1.0"

__all__ = [
    "AssumptionReport",
    "ConditionError",
    "ContractPolicy",
    "DerivedQuantities",
    "ParameterError",
    "PoolParams",
    "SimConfig",
    "SimResult",
    "SolverSettings",
    "ValueFunctionLevel",
    "ValueFunctions",
    "brute_force_sup",
    "build_all",
    "check_assumptions",
    "check_shape",
    "derive",
    "deviation_utility",
    "estimate",
    "eval_candidate",
    "find_gamma",
    "hjb_residual",
    "phi_beta",
    "psi_beta",
    "simulate_path",
    "solve_v1",
]
