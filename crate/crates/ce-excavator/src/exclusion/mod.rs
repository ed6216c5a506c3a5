//! Windowed parameter exclusion.

pub mod element;
pub mod engine;
pub mod history;
pub mod interval;
pub mod report;

pub use element::{
    escape_time, AnchorKey, DeletionReason, EscapeRecord, EscapeTime, Geometry, PartitionElement, Status, CERT_TOL,
};
pub use engine::{
    basic_threshold, classify_and_refine, delete_basic_violators, element_at, is_essential, large_deviation_cut, measure_retained,
    run_exclusion, select, star_upgrade, start_phase, status_sets, whitney_upper, ExclusionConfig, ExclusionState, LStatus,
    LargeDeviationCut, StartPhase, StatusSets,
};
pub use history::{binomial, enumerate_histories, history_count, HistoryCount};
pub use interval::{float_string, intersection_measure, Interval, WeightedSet};
pub use report::*;
