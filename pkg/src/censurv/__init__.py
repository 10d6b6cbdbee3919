"""Discrete-time survival prediction with contextual explanation networks."""
from .core import (Dataset, Outcome, PatientRecord, SurvivalLabel, TimeGrid, Violation,
                   dataset_from_lines, dataset_to_lines, load_dataset, save_dataset, to_outcome,
                   validate_dataset)
from .crf import (ExplanationSet, OutcomeDistribution, PairwisePotentials, brute_force_distribution,
                  grad_log_prob, log_prob_censored, log_prob_event, outcome_distribution,
                  outcome_scores, predicted_event_time, survival_curve)
from .errors import SurvivalError

__version__ = "0.1.0"
