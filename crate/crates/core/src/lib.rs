//! Age-of-Information scheduling for mobile users in multi-cell networks:
//! a slotted simulator, scheduling policies, exact oracles, closed-form
//! bounds and trace analytics.

pub mod analysis;
pub mod bounds;
pub mod channels;
pub mod engine;
pub mod error;
pub mod fuzz;
pub mod mobility;
pub mod oracle;
pub mod policies;
pub mod rng;
pub mod stats;
pub mod trace_io;

pub use engine::{
    avg_aoi_cost, peak_aoi_cost, run_simulation, run_streaming, step_ages, AgeVector, CostAccumulator, Decision,
    Occupancy, SlotRecord, SystemParams, Trace,
};
pub use error::{AoiError, Result};
