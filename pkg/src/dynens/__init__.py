"""Dynamic-ensemble particle filtering for nonstationary signal decoding.

A sequential Bayesian state estimator that carries a bank of candidate linear
measurement models and re-weights them online — a forgetting exponent turns
the previous model posterior into a transition prior, particle-approximated
evidence updates it, and the state posterior is the resulting mixture. Ships
with candidate-set generation (channel dropout + weight perturbation around a
least-squares fit), a Kalman baseline, synthetic data generators, decoding
metrics, and a CLI experiment harness.
"""

__version__ = "0.1.0"

from . import kernels
from .candidates import (
    GenerationConfig,
    fit_observation,
    fit_state_transition,
    generate_candidates,
    load_candidates,
    neuron_dropout,
    perturb_weights,
    save_candidates,
)
from .datagen import (
    SimulationSpec,
    SynthCortexSpec,
    candidate_set_for_simulation,
    inject_noise,
    simulate_series,
    simulation_transition,
    synth_cortex,
)
from .ensemble import (
    EnsembleConfig,
    EnsembleFilterState,
    FilterRun,
    ModelPosterior,
    combine_posterior,
    estimate_state,
    forgetting_predict,
    initial_state,
    marginal_likelihoods,
    per_hypothesis_weights,
    run_filter,
    step,
    update_model_posterior,
)
from .errors import (
    ConfigError,
    ContractViolationError,
    DegenerateEvidenceError,
    DegenerateHypothesisError,
    DegenerateWeightsError,
    DynensError,
    SingularFitError,
    UndefinedMetricError,
)
from .kalman import KalmanState, kalman_step, run_kalman
from .metrics import (
    WeightTrace,
    correlation_coefficient,
    mean_posterior_l1_change,
    mutual_information,
    rank_channels,
    root_mean_square_error,
    segment_dominance,
)
from .particles import (
    ParticleSet,
    effective_sample_size,
    normalize,
    propagate,
    systematic_resample,
)
from .state_space import (
    Dataset,
    GenericStateTransition,
    LinearObservationModel,
    LinearStateTransition,
    MeasurementVector,
    StateVector,
    load_dataset,
    log_likelihood,
    predict_mean,
    save_dataset,
    state_moments,
)
