//! Event vocabulary, ratio metrics, proxy programs and the linear event-count model.

mod events;
mod metrics;
mod program;

pub use events::{EventCounts, EventId, EventProfile, MeasurementResult, Provenance, DEFAULT_N0};
pub use metrics::{
    builtin_metrics, compute_all_metrics, compute_metric, find_metric, Category, MetricDefinition, TargetMetrics,
};
pub use program::{predict_events, ProgramEntry, ProxyProgram};
