"""Numerics and simulation for continuous-time Markov branching processes,
their conditioned limits and the associated Q-process."""

from .errors import (
    ConfigError, ConvergenceFailure, DegenerateCondition, DomainError, InfiniteMoment,
    InvalidLaw, MBPError, NotApplicable, RateOverflow, SingularPoint, ToleranceNotMet,
)
from .gf import (
    ExtinctionData, FlowModel, GfValue, amplitude_at_time, conditioned_gf, conditioned_limit,
    conditioned_limit_gf, conditioned_transition, extinction_data, flow_time, gf_derivative,
    invariant_measure, invariant_measure_gf, normalizer, remainder, solve_F, survival_amplitude,
    tail_asymptote, transition_family, transition_matrix, transition_probabilities,
)
from .mqp import (
    QMatrixRow, QProcessClass, QProcessSpec, build_qprocess, generator_gf, limit_cdf,
    limit_laplace, pi_coefficients, q_matrix_row, qprocess_gf, qprocess_matrix,
    qprocess_moments, qprocess_transition, ratio_limit_measure, row_window,
    stationary_distribution,
)
from .offspring import Criticality, FiniteSupport, LawReport, OffspringLaw, Stable, law_from_mapping
from .series import PowerSeries, cauchy_coefficients
from .simulate import (
    EmpiricalDistribution, FinalStates, SurvivalEstimate, Terminal, Trajectory,
    empirical_transition, estimate_survival, mbp_final_states, mqp_final_states,
    reweighted_qprocess, simulate_mbp, simulate_mqp, total_variation,
)
from .verify import CheckResult, default_suite

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
