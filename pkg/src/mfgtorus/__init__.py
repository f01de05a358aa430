"""Solver and a-priori estimate monitor for subquadratic mean-field games
on the flat torus, plus the exponent algebra certifying admissible coupling
powers."""

from .coupling import CouplingParams, Mollifier, g_antideriv, g_eps, mollify
from .driver import (
    ContinuationResult,
    FixedPointConfig,
    MfgProblem,
    MfgSolution,
    eps_continuation,
    scheme_residuals,
    solve_mfg,
)
from .exponents import (
    Admissibility,
    ExponentWitness,
    alpha_formula,
    alpha_max,
    check_admissible,
    find_witness,
    kappa,
    r_n,
    r_of_p,
    witness_residuals,
)
from .grid import (
    Field,
    TorusGrid,
    Trajectory,
    bochner_norm,
    divergence,
    gradient,
    heat_evolve,
    inner,
    laplacian,
    lp_norm,
)
from .hamiltonian import (
    AuditCertificate,
    AuditSampleSpec,
    HamiltonianModel,
    audit_assumptions,
    dp_h,
    dpp_h,
    h_eval,
    l_hat,
    legendre_l,
)
from .solvers import (
    CflError,
    FpConfig,
    HjbConfig,
    fp_step_forward,
    hjb_step_backward,
    solve_fp,
    solve_hjb,
)

__version__ = "0.1.0"
