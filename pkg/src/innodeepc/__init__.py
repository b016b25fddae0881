"""Innovation-based data-enabled predictive control for descriptor systems."""

from .behavioral import (
    ExcitationReport,
    MembershipReport,
    PencilRankReport,
    behavior_membership,
    block_hankel,
    combined_excitation_check,
    is_persistently_exciting,
    r_controllability_test,
)
from .control import (
    ClosedLoopPlant,
    InnovationPredictiveController,
    KalmanPredictiveController,
    PredictiveControlConfig,
    RegularizedBehavioralController,
    RunResult,
    SubspacePredictiveController,
    prediction_r_squared,
    run_closed_loop,
)
from .descriptor import (
    DescriptorSystem,
    NoiseRealization,
    RegularityVerdict,
    Trajectory,
    WeierstrassForm,
    check_regularity,
    constant_input_equilibrium,
    discretize_foh,
    sample_noise,
    simulate,
    weierstrass_decompose,
)
from .errors import (
    ConditioningError,
    ConvergenceError,
    InnoDeepcError,
    InputError,
    PreconditionError,
    RankAmbiguityError,
    StructuralError,
)
from .innovation import (
    AugmentedModel,
    KalmanFilter,
    build_augmented,
    deterministic_compensation,
    kalman_innovations,
    simulate_augmented,
    solve_steady_kalman,
)
from .io import (
    load_config,
    load_report_csv,
    load_system,
    load_trajectory,
    load_varx,
    save_config,
    save_innovations,
    save_rank_report,
    save_report_csv,
    save_system,
    save_trajectory,
    save_varx,
)
from .microgrid import (
    CollectedData,
    ControllerRun,
    ExperimentConfig,
    ExperimentReport,
    MicrogridParams,
    VerificationRecord,
    build_microgrid,
    collect_data,
    r_squared,
    run_experiment,
    settling_steps,
)
from .plots import save_comparison_plot, save_run_plot
from .qp import QPResult, solve_box_qp, solve_qp
from .varx import VarxModel, build_regressor, fit_varx

__version__ = "0.1.0"
