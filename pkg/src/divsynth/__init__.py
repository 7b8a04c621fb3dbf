"""divsynth: diverse activation-maximization synthesis and invariance metrics."""

from .analysis import (
    PhaseEstimate,
    circular_coverage,
    cluster_phases,
    estimate_phase,
    phase_histogram,
    tuning_curve,
)
from .metrics import (
    InvarianceReport,
    MetricError,
    invariance_score,
    linear_combination_index,
    optimize_texture,
    shift_invariance_index,
    window_mask,
)
from .models import (
    ConvLayer,
    GaborParams,
    NetworkSpec,
    PoolLayer,
    UnitModel,
    cnn_unit,
    corner_toy,
    energy_cell,
    gabor,
    gap_energy_unit,
    hubel_wiesel_cell,
    random_network,
    simple_cell,
    texture_unit,
)
from .netio import NetworkFormatError, load_network, save_network
from .priors import PriorModel, make_prior, none_prior, smoothness_prior
from .synthesis import (
    DEFAULT_LAMBDAS,
    SweepCurve,
    SynthesisConfig,
    SynthesisError,
    SynthesisResult,
    diversity_term,
    feature_distance,
    lambda_sweep,
    precondition_gradient,
    project_norm,
    synthesize,
)
from .tensor import Tensor

__version__ = "0.1.0"
