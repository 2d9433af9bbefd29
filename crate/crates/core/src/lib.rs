//! Distribution-free detection of an interval of elevated density.
//!
//! Data are mapped through the known null CDF onto `[0, 1]`, after which the
//! scan, penalized scans and condensed average likelihood ratio are computed
//! over order-statistic intervals and calibrated by Monte Carlo simulation
//! from uniforms.

pub mod calibration;
pub mod error;
pub mod grids;
pub mod likelihood;
pub mod rng;
pub mod simulation;
pub mod statistics;
pub mod transform;

pub use calibration::{
    critical_value, load_table, p_value, save_table, simulate_null, CriticalValueTable,
    NullSample, TableCache,
};
pub use error::{Error, Result};
pub use grids::{build_grid, grid_cardinality, ApproxSet, GridKind, IntervalIdx, MIN_N};
pub use likelihood::{log_lr_left, log_lr_right, log_lr_two, sqrt2_log_lr};
pub use simulation::{
    detectability_margin, effect_mass, power_study, sample_alternative, AlternativeSpec,
    IntervalStart, PowerConfig, PowerRow,
};
pub use statistics::{Evaluator, StatKind, StatisticResult};
pub use transform::{load_sample, pit_transform, NullCdf, RawSample, SortedSample};
