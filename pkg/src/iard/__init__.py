"""Sparse Bayesian super-resolution estimation of multipath components.

Modules
-------
signal       probe waveforms, atoms and synthetic measurements
linalg       weighted norms, weight posteriors, leave-one-out updates
core         the incremental ARD estimator (A1 / A2 factorisations)
pruning      H0/H1 laws of the pruning statistic and threshold calibration
baselines    SAGE with BIC order selection
experiments  Monte Carlo harness and metrics
"""

from .baselines import BicResult, SageFit, bic_select, sage_fit
from .core import (
    ComponentState,
    ComponentStats,
    IardConfig,
    ModelState,
    alpha_fixed_point,
    estimate,
    init_component,
    optimize_theta,
    result_to_dict,
    stats_a1,
    stats_a2,
    sweep_update,
)
from .errors import ConfigurationError, DomainError, IllConditionedError
from .experiments import ExperimentSpec, MetricsRecord, component_match, emit_results, rmese, run_experiment
from .linalg import LeaveOneOut, WeightPosterior, leave_one_out, posterior_a1, posterior_a2, weighted_norm2
from .pruning import (
    H0Dist,
    H1Dist,
    PruneTest,
    h0_cdf,
    h0_pdf,
    h1_cdf,
    h1_pdf,
    ks_distance,
    size_from_threshold,
    threshold_from_size,
)
from .signal import (
    AtomDictionary,
    DispersionParams,
    Measurement,
    ProbeSignal,
    SyntheticScene,
    atom,
    make_ofdm_probe,
    synthesize,
)

__version__ = "0.1.0"
