"""minflow: partition-function-free estimation for energy-based models.

Fits parametric energy models by minimizing the initial flow of probability
out of the observed data under master-equation dynamics whose equilibrium is
the model distribution.  No partition function, no equilibrium sampling --
only energy differences between observed states and a sparse set of
neighbors.
"""

from .continuous import (
    NeighborConfig,
    SmReport,
    mpf_objective_continuous,
    sample_neighbors,
    score_matching_objective,
    state_gradient_of_energy,
    state_laplacian_of_energy,
)
from .data import (
    Dataset,
    read_dataset,
    read_dataset_csv,
    write_dataset,
    write_dataset_csv,
)
from .discrete import FitConfig, ObjectiveReport, bitflip_neighbors, mpf_objective
from .errors import (
    CapacityError,
    DimensionMismatchError,
    InvalidStartError,
    NumericError,
    UnsupportedModelError,
)
from .fitting import (
    default_pot_model,
    fit_continuous_mpf,
    fit_discrete_mpf,
    fit_ising_exact_ml,
    fit_ising_mpf,
    fit_rbm_mpf,
    fit_score_matching,
    train_rbm_cd1,
)
from .metrics import (
    covariance_from_moments,
    empirical_state_moments,
    exact_state_moments,
    ising_recovery_metrics,
    matrix_mae,
    symmetrize_coupling,
)
from .models import (
    EnergyModel,
    IsingModel,
    IsotropicGaussianModel,
    PotModel,
    RbmMarginalModel,
    load_model,
    model_from_dict,
    save_model,
)
from .optim import FitTrace, OptimizerConfig, minimize
from .oracle import (
    DistributionVector,
    TransitionMatrix,
    all_states,
    brute_force_objective,
    build_transition_matrix,
    check_detailed_balance,
    empirical_distribution,
    evolve,
    exact_kl,
    exact_log_partition,
    exact_model_distribution,
    exact_nll,
    exact_partition,
    kl_growth_rate,
    min_hessian_eigenvalue,
    numerical_hessian,
    state_index,
)
from .params import ParamLayout
from .sampler import (
    SamplerConfig,
    cd1_gradient,
    gibbs_sample_ising,
    gibbs_sample_rbm,
    random_coupling,
    rbm_gibbs_step,
)

__version__ = "0.1.0"

__all__ = [
    "CapacityError",
    "Dataset",
    "DimensionMismatchError",
    "DistributionVector",
    "EnergyModel",
    "FitConfig",
    "FitTrace",
    "InvalidStartError",
    "IsingModel",
    "IsotropicGaussianModel",
    "NeighborConfig",
    "NumericError",
    "ObjectiveReport",
    "OptimizerConfig",
    "ParamLayout",
    "PotModel",
    "RbmMarginalModel",
    "SamplerConfig",
    "SmReport",
    "TransitionMatrix",
    "UnsupportedModelError",
    "all_states",
    "bitflip_neighbors",
    "brute_force_objective",
    "build_transition_matrix",
    "cd1_gradient",
    "check_detailed_balance",
    "covariance_from_moments",
    "default_pot_model",
    "empirical_distribution",
    "empirical_state_moments",
    "evolve",
    "exact_kl",
    "exact_log_partition",
    "exact_model_distribution",
    "exact_nll",
    "exact_partition",
    "exact_state_moments",
    "fit_continuous_mpf",
    "fit_discrete_mpf",
    "fit_ising_exact_ml",
    "fit_ising_mpf",
    "fit_rbm_mpf",
    "fit_score_matching",
    "gibbs_sample_ising",
    "gibbs_sample_rbm",
    "ising_recovery_metrics",
    "kl_growth_rate",
    "load_model",
    "matrix_mae",
    "min_hessian_eigenvalue",
    "minimize",
    "model_from_dict",
    "mpf_objective",
    "mpf_objective_continuous",
    "numerical_hessian",
    "random_coupling",
    "rbm_gibbs_step",
    "read_dataset",
    "read_dataset_csv",
    "sample_neighbors",
    "save_model",
    "score_matching_objective",
    "state_gradient_of_energy",
    "state_index",
    "state_laplacian_of_energy",
    "symmetrize_coupling",
    "train_rbm_cd1",
    "write_dataset",
    "write_dataset_csv",
]
