"""Robust optimal block designs for dependent discrete responses.

Compute, certify, and validate approximate experimental designs in which
units are grouped into small blocks, responses follow discrete generalized
linear margins (Bernoulli or Poisson), and within-block dependence is
modeled by a parametric copula (product, Clayton, or Gumbel).  Criteria are
log-determinant functionals of the Fisher information averaged over a
parameter prior; optimization runs on finite candidate sets and every
result can be certified against the equivalence-theorem sensitivity bound.
"""

from .copula import (
    FAMILIES,
    CopulaSpec,
    TauEstimate,
    copula_cdf,
    rectangle_prob,
    sample_pairs,
    tau_alpha_map,
    tau_numeric,
)
from .criteria import (
    CriterionSpec,
    Design,
    PriorSpec,
    criterion_d,
    criterion_da,
    criterion_ds,
    criterion_value,
    efficiency,
    quad_grid,
)
from .equivalence import VerificationReport, sensitivity, sensitivity_profile, verify
from .errors import (
    ConfigError,
    CopdexError,
    DomainError,
    ExcludedOutcomeError,
    GridTooLargeError,
    InfeasibleError,
    SingularInformationError,
)
from .information import (
    Block,
    BlockModel,
    ExactSum,
    FimStore,
    InfoMatrix,
    MonteCarlo,
    ParameterPoint,
    block_fim,
    design_fim,
    fim_tensor,
    joint_pmf,
    make_parameter,
    score,
)
from .margins import (
    MarginalModelSpec,
    basis_term,
    marginal_cdf_pmf,
    mean,
    truncation_bound,
)
from .optimizer import (
    CandidateSet,
    OptimizeResult,
    OptimizerOptions,
    canonicalize,
    grid_candidates,
    level_pair_candidates,
    optimize,
    optimize_certified,
    refine_weights,
)
from .presets import preset, preset_names
from .validation import (
    EmpiricalComparison,
    MleResult,
    fim_vs_empirical,
    mle_fit,
    realize_design,
    sample_block,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "FAMILIES",
    "CopulaSpec",
    "TauEstimate",
    "copula_cdf",
    "rectangle_prob",
    "sample_pairs",
    "tau_alpha_map",
    "tau_numeric",
    "CriterionSpec",
    "Design",
    "PriorSpec",
    "criterion_d",
    "criterion_da",
    "criterion_ds",
    "criterion_value",
    "efficiency",
    "quad_grid",
    "VerificationReport",
    "sensitivity",
    "sensitivity_profile",
    "verify",
    "ConfigError",
    "CopdexError",
    "DomainError",
    "ExcludedOutcomeError",
    "GridTooLargeError",
    "InfeasibleError",
    "SingularInformationError",
    "Block",
    "BlockModel",
    "ExactSum",
    "FimStore",
    "InfoMatrix",
    "MonteCarlo",
    "ParameterPoint",
    "block_fim",
    "design_fim",
    "fim_tensor",
    "joint_pmf",
    "make_parameter",
    "score",
    "MarginalModelSpec",
    "basis_term",
    "marginal_cdf_pmf",
    "mean",
    "truncation_bound",
    "CandidateSet",
    "OptimizeResult",
    "OptimizerOptions",
    "canonicalize",
    "grid_candidates",
    "level_pair_candidates",
    "optimize",
    "optimize_certified",
    "refine_weights",
    "preset",
    "preset_names",
    "EmpiricalComparison",
    "MleResult",
    "fim_vs_empirical",
    "mle_fit",
    "realize_design",
    "sample_block",
]
