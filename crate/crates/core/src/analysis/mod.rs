//! Closed-form evaluators: error bound, latency, hardware and arithmetic
//! complexity.

pub mod bound;
pub mod complexity;
pub mod latency;

pub use bound::{check_bound_containment, eval_bound, BoundInputs, BoundReport, ContainmentReport};
pub use complexity::{
    counted_forward, flops_per_symbol, hardware_complexity, throughput, time_complexity_table, ComplexityReport,
    CycleModel, CycleRow,
};
pub use latency::{computation_latency, programming_latency_bound, row_latency_bound, ComponentDelays};
