//! Seeded Monte Carlo evaluation of the procedure's operating
//! characteristics.
//!
//! Every trial (and every sweep replication) owns a ChaCha8 substream picked
//! out of the master seed by its index, so a batch gives bit-identical
//! results whether it runs on one thread or many. Normal variates are drawn
//! by inversion, one uniform per variate, which keeps stream consumption a
//! fixed function of the trial's length.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::TrialDesign;
use crate::engine::{EvidenceDirection, TrialResult, TrialState};
use crate::error::{Error, Result};
use crate::normal::quantile;

/// Default master seed for reproducible runs.
pub const DEFAULT_SEED: u64 = 1;
/// Trial count used for acceptance-grade batches.
pub const ACCEPTANCE_TRIALS: u64 = 10_000;
/// Trial count of the original simulated batch.
pub const REFERENCE_TRIALS: u64 = 1_000;

/// Sweep streams live above this bit so they never collide with batch
/// trial indices.
const SWEEP_STREAM_SHIFT: u32 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EffectDistribution {
    Normal { mean: f64, sd: f64 },
    PointMass { theta: f64 },
}

impl EffectDistribution {
    /// True effects centred on zero with unit spread.
    pub const STANDARD_NORMAL: Self = Self::Normal { mean: 0.0, sd: 1.0 };

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Normal { mean, sd } if mean.is_finite() && sd.is_finite() && sd > 0.0 => Ok(()),
            Self::Normal { mean, sd } => Err(Error::InvalidConfig(format!(
                "normal effect distribution needs finite mean and sd > 0, got mean {mean}, sd {sd}"
            ))),
            Self::PointMass { theta } if theta.is_finite() => Ok(()),
            Self::PointMass { theta } => Err(Error::InvalidConfig(format!("point mass must be finite, got {theta}"))),
        }
    }
}

/// A reproducible stream of uniforms and normals.
#[derive(Debug, Clone)]
pub struct Substream(ChaCha8Rng);

impl Substream {
    pub fn new(master_seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream);
        Self(rng)
    }

    /// Uniform on the open interval (0, 1), on a grid of spacing 2⁻⁵³.
    pub fn uniform(&mut self) -> f64 {
        ((self.0.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        quantile(self.uniform())
    }
}

pub fn draw_true_effect(dist: &EffectDistribution, stream: &mut Substream) -> f64 {
    match *dist {
        EffectDistribution::Normal { mean, sd } => mean + sd * stream.standard_normal(),
        EffectDistribution::PointMass { theta } => theta,
    }
}

/// Runs one trial with unit-variance observations centred on `theta_t`.
pub fn simulate_trial(theta_t: f64, design: &TrialDesign, stream: &mut Substream) -> TrialResult {
    let mut state = TrialState::new(design.clone());
    loop {
        let x = theta_t + stream.standard_normal();
        let decision = state
            .push(x)
            .expect("finite observations on an open trial are always accepted");
        if decision.kind.is_stop() {
            return state.finalize().expect("stopped trial finalizes");
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeCategory {
    MisleadingEarly,
    CorrectEarly,
    MisleadingMaxN,
    CorrectMaxN,
    NeutralUnclassified,
}

impl OutcomeCategory {
    pub const ALL: [Self; 5] = [
        Self::MisleadingEarly,
        Self::CorrectEarly,
        Self::MisleadingMaxN,
        Self::CorrectMaxN,
        Self::NeutralUnclassified,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Self::MisleadingEarly => "misleading_early",
            Self::CorrectEarly => "correct_early",
            Self::MisleadingMaxN => "misleading_max_n",
            Self::CorrectMaxN => "correct_max_n",
            Self::NeutralUnclassified => "neutral_unclassified",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.key() == key)
    }

    pub fn is_misleading(self) -> bool {
        matches!(self, Self::MisleadingEarly | Self::MisleadingMaxN)
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Misleading means the final ratio points to the wrong side of Δ.
pub fn classify(result: &TrialResult, theta_t: f64, delta: f64) -> OutcomeCategory {
    let favors_above = match result.evidence_direction {
        EvidenceDirection::FavorsAboveDelta => true,
        EvidenceDirection::FavorsBelowDelta => false,
        EvidenceDirection::Neutral => return OutcomeCategory::NeutralUnclassified,
    };
    if theta_t == delta {
        return OutcomeCategory::NeutralUnclassified;
    }
    let misleading = favors_above != (theta_t > delta);
    match (misleading, result.stop_reason.is_early()) {
        (true, true) => OutcomeCategory::MisleadingEarly,
        (false, true) => OutcomeCategory::CorrectEarly,
        (true, false) => OutcomeCategory::MisleadingMaxN,
        (false, false) => OutcomeCategory::CorrectMaxN,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub design: TrialDesign,
    pub effect_dist: EffectDistribution,
    pub n_trials: u64,
    pub master_seed: u64,
}

impl SimulationConfig {
    /// Δ = 0.5, critical value 2.0, thresholds 20 / 0.05, true effects
    /// drawn from N(0, 1).
    pub fn reference_preset(n_trials: u64, master_seed: u64) -> Self {
        Self {
            design: TrialDesign::reference_preset(),
            effect_dist: EffectDistribution::STANDARD_NORMAL,
            n_trials,
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::InvalidConfig("n_trials must be at least 1".into()));
        }
        self.effect_dist.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: OutcomeCategory,
    pub count: u64,
    pub incidence: f64,
    /// Mean of `max(LR, 1/LR)`; absent when the category is empty.
    pub mean_folded_lr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub config: SimulationConfig,
    pub n_trials: u64,
    pub master_seed: u64,
    /// One row per [`OutcomeCategory`], in declaration order.
    pub rows: Vec<CategoryRow>,
    pub mean_n: f64,
    pub misleading_total: f64,
    pub mean_folded_lr_all: f64,
}

impl SimulationSummary {
    pub fn row(&self, category: OutcomeCategory) -> &CategoryRow {
        &self.rows[category.index()]
    }

    pub fn incidence(&self, category: OutcomeCategory) -> f64 {
        self.row(category).incidence
    }

    pub fn mean_folded_lr(&self, category: OutcomeCategory) -> Option<f64> {
        self.row(category).mean_folded_lr
    }

    /// Assembles a summary from per-category counts and folded-LR sums.
    pub(crate) fn from_totals(config: SimulationConfig, counts: [u64; 5], folded_sums: [f64; 5], total_n: u64) -> Self {
        let n_trials = config.n_trials;
        let denom = n_trials as f64;
        let rows = OutcomeCategory::ALL
            .iter()
            .map(|&category| {
                let count = counts[category.index()];
                CategoryRow {
                    category,
                    count,
                    incidence: count as f64 / denom,
                    mean_folded_lr: (count > 0).then(|| folded_sums[category.index()] / count as f64),
                }
            })
            .collect();
        let misleading =
            counts[OutcomeCategory::MisleadingEarly.index()] + counts[OutcomeCategory::MisleadingMaxN.index()];
        let all_sum: f64 = sum_compensated(folded_sums.iter().copied());
        Self {
            n_trials,
            master_seed: config.master_seed,
            config,
            rows,
            mean_n: total_n as f64 / denom,
            misleading_total: misleading as f64 / denom,
            mean_folded_lr_all: all_sum / denom,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct TrialOutcome {
    category: OutcomeCategory,
    n: u64,
    folded_lr: f64,
}

fn run_one(config: &SimulationConfig, index: u64) -> TrialOutcome {
    let mut stream = Substream::new(config.master_seed, index);
    let theta_t = draw_true_effect(&config.effect_dist, &mut stream);
    let result = simulate_trial(theta_t, &config.design, &mut stream);
    TrialOutcome {
        category: classify(&result, theta_t, config.design.delta()),
        n: result.final_n,
        folded_lr: result.final_lr.folded().value(),
    }
}

/// Runs the batch on the global rayon pool.
pub fn run_batch(config: &SimulationConfig) -> Result<SimulationSummary> {
    config.validate()?;
    let outcomes: Vec<_> = (0..config.n_trials)
        .into_par_iter()
        .map(|i| run_one(config, i))
        .collect();
    Ok(aggregate(config, &outcomes))
}

/// Runs the batch on a dedicated pool of `threads` workers; `threads == 1`
/// is a plain sequential loop.
pub fn run_batch_with_threads(config: &SimulationConfig, threads: usize) -> Result<SimulationSummary> {
    config.validate()?;
    if threads <= 1 {
        let outcomes: Vec<_> = (0..config.n_trials).map(|i| run_one(config, i)).collect();
        return Ok(aggregate(config, &outcomes));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| run_batch(config))
}

/// Outcomes arrive in trial-index order, so the sums below are independent
/// of how the work was scheduled.
fn aggregate(config: &SimulationConfig, outcomes: &[TrialOutcome]) -> SimulationSummary {
    let mut counts = [0u64; 5];
    let mut sums = [(0.0f64, 0.0f64); 5];
    let mut total_n = 0u64;
    for o in outcomes {
        let i = o.category.index();
        counts[i] += 1;
        sums[i] = neumaier(sums[i], o.folded_lr);
        total_n += o.n;
    }
    let folded_sums = sums.map(|(s, c)| s + c);
    SimulationSummary::from_totals(config.clone(), counts, folded_sums, total_n)
}

fn neumaier((sum, comp): (f64, f64), x: f64) -> (f64, f64) {
    let t = sum + x;
    let c = if sum.abs() >= x.abs() {
        (sum - t) + x
    } else {
        (x - t) + sum
    };
    (t, comp + c)
}

fn sum_compensated(values: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = values.fold((0.0, 0.0), neumaier);
    s + c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    #[serde(rename = "theta_T")]
    pub theta_t: f64,
    pub mean_n: f64,
    pub stop_early_rate: f64,
    pub replications: u64,
}

/// Mean sample size at termination for each fixed true effect in `grid`.
pub fn sweep_mean_n(
    grid: &[f64],
    design: &TrialDesign,
    replications_per_point: u64,
    master_seed: u64,
) -> Result<Vec<SweepPoint>> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("sweep grid is empty".into()));
    }
    if replications_per_point == 0 {
        return Err(Error::InvalidConfig("replications per point must be at least 1".into()));
    }
    if let Some(bad) = grid.iter().find(|t| !t.is_finite()) {
        return Err(Error::InvalidConfig(format!("grid value {bad} is not finite")));
    }
    if grid.len() as u64 >= 1 << (64 - SWEEP_STREAM_SHIFT) || replications_per_point >= 1 << SWEEP_STREAM_SHIFT {
        return Err(Error::InvalidConfig("sweep too large for the stream layout".into()));
    }

    grid.par_iter()
        .enumerate()
        .map(|(g, &theta_t)| {
            let (total_n, early) = (0..replications_per_point)
                .into_par_iter()
                .map(|r| {
                    let stream_id = ((g as u64 + 1) << SWEEP_STREAM_SHIFT) | r;
                    let mut stream = Substream::new(master_seed, stream_id);
                    let result = simulate_trial(theta_t, design, &mut stream);
                    (result.final_n, u64::from(result.stop_reason.is_early()))
                })
                .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
            let reps = replications_per_point as f64;
            Ok(SweepPoint {
                theta_t,
                mean_n: total_n as f64 / reps,
                stop_early_rate: early as f64 / reps,
                replications: replications_per_point,
            })
        })
        .collect()
}

/// Points `min, min + step, ...` up to and including `max` (within 1e-9 steps).
pub fn theta_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(min.is_finite() && max.is_finite() && step.is_finite()) || step <= 0.0 || max < min {
        return Err(Error::InvalidConfig(format!(
            "grid needs finite min <= max and step > 0, got {min}..{max} step {step}"
        )));
    }
    let count = ((max - min) / step + 1e-9).floor() as u64 + 1;
    if count > 1_000_000 {
        return Err(Error::InvalidConfig(format!("grid of {count} points is too large")));
    }
    Ok((0..count).map(|i| min + i as f64 * step).collect())
}
