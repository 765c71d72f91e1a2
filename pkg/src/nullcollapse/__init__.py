"""Double-null evolution of spherically symmetric (charged) scalar field collapse.

Builds characteristic initial data on two null cones, marches the reduced
Einstein-Maxwell-charged-scalar system across the strip with a second-order
predictor-corrector scheme, detects trapped surfaces and MOTS, evaluates the
closed-form trapped-surface-formation criteria, and runs the a-priori
inequalities as monitors.
"""

from .state import (
    FieldPoint,
    FieldSlice,
    GridSpec,
    InitialDataError,
    PhysicalParams,
    PointClass,
    classify_point,
    f_uv_from_charge,
    hawking_mass,
)
from .initial_data import (
    CharacteristicData,
    ProfileSpec,
    build_characteristic_data,
    build_incoming_cone,
    build_outgoing_cone,
    derive_scalars,
    load_profile_csv,
    write_cone_csv,
)
from .evolution import (
    Checkpoint,
    ConvergenceResult,
    Solution,
    SolutionStatus,
    StopPolicy,
    convergence_order,
    evolve,
    load_checkpoint,
    resume_evolution,
    save_checkpoint,
    step_slice,
)
from .diagnostics import (
    MonitorReport,
    MonitorResult,
    ResidualReport,
    constraint_residuals,
    monitor_all,
    slice_diagnostics,
)
from .criteria import (
    CriteriaReport,
    big_e,
    big_f,
    big_g,
    e_table_csv,
    evaluate_criteria,
    evaluate_criteria_scalars,
    g_omega,
    thm13_conditions,
    thm13_threshold,
    threshold_table_csv,
)

__version__ = "0.1.0"
