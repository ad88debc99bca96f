"""Multi-state circular-linear random walks with consensus von Mises directions."""
from .circular import (
    CircularSummary,
    ConsensusVector,
    bessel_i0,
    bessel_ratio_a,
    circular_summary,
    consensus_vector,
    log_bessel_i0,
    sample_von_mises,
    von_mises_log_density,
)
from .em import EmSettings, FitResult, em_run, fit
from .errors import CircwalkError, DataError, EmptyStateError, NumericalError
from .explore import MixtureFit, critical_distance, fit_exp_mixture, kuiper_statistic
from .filtering import PosteriorSummary, observed_loglik, posterior
from .inference import InferenceReport, decode_states, infer
from .model import ModelSpec, Params, Trajectory, markov_params, validate
from .simulate import ScenarioConfig, simulate_trajectory
from .study import StudySummary, run_study

__version__ = "0.1.0"
