//! Baseline beam selectors and the evaluation harness: normalized
//! beamforming loss, its empirical CDF and spectral efficiency against
//! prediction delay, for learned schemes, baselines and the genie bound.

pub mod baselines;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod report;

pub use baselines::{direct_link_beam, location_beam, ErrorDistribution, LocationBeam, PositioningErrorModel};
pub use error::{EvalError, Result};
pub use harness::{
    evaluate, location_decisions, windows_from_dataset, Decisions, EvalContext, EvalRecord, SampleId, SchemeRun,
    Window, GENIE,
};
pub use metrics::{cdf_at, empirical_cdf, fraction_below, mean_std, normalized_bf_loss, CdfPoint};
pub use report::{
    check_cdf, check_records, check_sweep, delay_sweep, format_summary, read_csv, summarize, write_csv,
    write_summary_csv, SummaryRow, SweepRow, LOSS_THRESHOLD,
};
