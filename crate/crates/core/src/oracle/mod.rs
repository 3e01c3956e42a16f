//! Exhaustive checks on tiny instances: mask enumeration, belief-state
//! dynamic programming, best-response tables, the value inequalities between
//! the dense and sparse formulations, the frozen-trajectory gradient and
//! call-count audits.

mod belief;
mod checks;
mod tabular;

pub use belief::{
    dp_optimal_value, enumerate_masks, BeliefProblem, BeliefState, DpSolution, Information, ObservationMode,
    TerminalRecon, DEFAULT_STATE_LIMIT, GROUP_TOL,
};
pub use checks::{
    config_fingerprint, cost_audit, engineered_instance, engineered_mismatch_laws, frozen_gradient_check,
    mismatch_check, rel_err, require_full_terminal_support, reward_gap_check, AuditKind, CostAudit,
    FrozenGradientReport, MismatchReport, RewardGapReport, INEQ_TOL, REL_ERR_FLOOR,
};
pub use tabular::{
    best_response_image, best_response_reconstructor, ConstantReconstructor, MaskDistribution, TabularReconstructor,
};
