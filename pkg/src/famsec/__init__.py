"""Self-confidence factors (outcome assessment and solver quality) for tabular MDP planners."""

__version__ = "0.1.0"

from .delivery import (  # noqa: E402
    DeliveryFeaturizer,
    FeatureVector,
    SweepSpec,
    TaskConfig,
    build_mdp,
    enumerate_configs,
    features,
)
from .exceptions import ConfigError, InvalidInputError, NumericalError  # noqa: E402
from .mdp import (  # noqa: E402
    Mdp,
    OutcomeSamples,
    SolveResult,
    ValueIterationSolver,
    bellman_backup,
    candidate_solve,
    greedy_policy,
    policy_evaluation,
    rollout,
    sample_return_distribution,
    trusted_solve,
    value_iteration,
)
from .outcome import (  # noqa: E402
    OutcomeAssessment,
    OutcomeAssessor,
    XoParams,
    assess_outcome,
    partial_moments,
    xo_from_moments,
)
from .quality import (  # noqa: E402
    FigureOfMerit,
    SolverQualityAssessment,
    TrainingRecord,
    assess_solver_quality,
    fit_surrogate,
    generate_training_data,
)
from .report import LikertScale, assemble_report, histogram_data, serialize_report, to_likert  # noqa: E402
from .surrogate import GaussianProcessSurrogate  # noqa: E402
