//! Sequential likelihood-ratio trial procedure.
//!
//! A trial compares two treatments through a standardized effect `θ`, with a
//! minimum clinically significant effect Δ acting as the dividing
//! hypothesis. After every observation the one-sided p-value against Δ is
//! turned into a directional likelihood ratio; sampling stops once that ratio
//! leaves `[lr_lower, lr_upper]` (after a precision-calibrated minimum size)
//! or the maximum size is reached.
//!
//! - [`normal`]: Gaussian CDF, log upper tail and quantile.
//! - [`evidence`]: p-values and likelihood ratios.
//! - [`design`]: thresholds and sample-size bounds.
//! - [`engine`]: the sequential state machine.
//! - [`sim`]: seeded Monte Carlo operating characteristics.
//! - [`report`]: table and CSV renderings.

pub mod design;
pub mod engine;
pub mod error;
pub mod evidence;
pub mod normal;
pub mod report;
pub mod sim;

pub use design::{max_sample_size, min_sample_size, DesignParams, TrialDesign};
pub use engine::{stop_rule, EvidenceDirection, Status, StopDecision, StopKind, TrialResult, TrialState};
pub use error::{Error, FieldError, Result};
pub use evidence::{
    directional_lr, lr_from_p, lr_from_z, one_sided_p, stop_boundary, supremum_glr, LikelihoodRatio, Probability,
    StandardizedEffect, StopBoundary,
};
pub use normal::{norm_cdf, norm_pdf, norm_quantile, norm_sf_log};
pub use sim::{
    classify, draw_true_effect, run_batch, run_batch_with_threads, simulate_trial, sweep_mean_n, theta_grid,
    CategoryRow, EffectDistribution, OutcomeCategory, SimulationConfig, SimulationSummary, Substream, SweepPoint,
};
