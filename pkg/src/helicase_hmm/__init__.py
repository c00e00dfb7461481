"""Helicase hidden Markov model for nanopore signals.

Two-level HMM: an outer chain over k-mers and an inner chain over the
helicase motor states of each k-mer.  Provides clamped (fixed k-mer path)
inference and EM training, marginalized beam-search basecalling,
re-squiggle, simulation and file formats.
"""

from helicase_hmm._accel import backend_name
from helicase_hmm.clamped import (
    brute_force_clamped,
    clamped_backward,
    clamped_forward,
    clamped_loglik,
    joint_loglik,
    posteriors,
)
from helicase_hmm.decoder import (
    exact_viterbi_joint,
    exhaustive_joint_max,
    exhaustive_marginal_map,
    mgbs_decode,
    score_identity,
)
from helicase_hmm.io import load_dataset, load_model, save_dataset, save_model
from helicase_hmm.model import (
    HelicaseModel,
    InnerState,
    KmerConfig,
    default_inner_params,
    priors_from_reference,
    uniform_model,
    validate_model,
)
from helicase_hmm.read import Read
from helicase_hmm.signal import fit_normalization, predicted_currents, resquiggle
from helicase_hmm.simulator import (
    SimConfig,
    duration_pmf,
    position_conditional_means,
    simulate_dataset,
    synthetic_model,
)
from helicase_hmm.training import Floors, SufficientStats, accumulate_stats, train

__version__ = "0.1.0"

__all__ = [
    "HelicaseModel", "InnerState", "KmerConfig", "Read", "SimConfig", "Floors", "SufficientStats",
    "accumulate_stats", "backend_name", "brute_force_clamped", "clamped_backward",
    "clamped_forward", "clamped_loglik", "default_inner_params", "duration_pmf",
    "exact_viterbi_joint", "exhaustive_joint_max", "exhaustive_marginal_map", "fit_normalization",
    "joint_loglik", "load_dataset", "load_model", "mgbs_decode", "position_conditional_means",
    "posteriors", "predicted_currents", "priors_from_reference", "resquiggle", "save_dataset",
    "save_model", "score_identity", "simulate_dataset", "synthetic_model", "train",
    "uniform_model", "validate_model",
]
