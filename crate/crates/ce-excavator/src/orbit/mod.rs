//! Return structure along critical orbits: neighborhoods of Crit, returns,
//! bound and free periods, and expansion estimates.

pub mod bound;
pub mod expansion;
pub mod trace;

pub use bound::{
    bound_period_from_series, bound_period_interval, bound_period_pointwise, check_bound_expansion, host_curve_orbits,
    BoundExpansionCheck, BoundPeriod,
};
pub use expansion::{
    basic_assumption_check, basic_assumption_series, lyapunov_estimates, lyapunov_from_ledger, outside_expansion_estimate,
    BasicAssumption, OutsideExpansion, SamplingPlan,
};
pub use trace::{critical_trace, depth_of, detect_returns, DepthClass, NeighborhoodSystem, OrbitTrace, ReturnEvent, ReturnKind};
