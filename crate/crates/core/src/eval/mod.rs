//! Evaluation metrics and reports.

pub mod boundary;
pub mod drift;
pub mod metrics;
pub mod report;
pub mod rouge;

pub use boundary::{answer_probability, boundary_report, BoundaryReport, DEFAULT_EPSILON};
pub use drift::{drift_report, DriftGroups, DriftReport, GradientItem};
pub use metrics::{delta_kcs, harmonic_mean, kcs, locality, refusal_rate, roc_auc, unlearning_efficacy};
pub use report::{csv_bytes, decode_probes, delta_kcs_svg, metrics_report, write_csv, MetricsReport, ProbeOutput, ReportRow};
pub use rouge::{rouge_l, RougeScore};
