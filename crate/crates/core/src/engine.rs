//! The observation-by-observation state machine.
//!
//! Each observation is one standardized draw with unit known variance, so
//! after n observations the estimate is the running mean and its standard
//! error is `1/√n`. The likelihood ratio is recomputed at every step; the
//! stopping rule is only consulted once the minimum sample size is reached.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::design::TrialDesign;
use crate::error::{domain, Error, Result};
use crate::evidence::{directional_lr, LikelihoodRatio};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    /// Fewer than `n_min` observations.
    Collecting,
    Continue,
    StoppedHigh,
    StoppedLow,
    StoppedMaxN,
}

impl Status {
    pub fn is_stopped(self) -> bool {
        matches!(self, Self::StoppedHigh | Self::StoppedLow | Self::StoppedMaxN)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Collecting => "Collecting",
            Self::Continue => "Continue",
            Self::StoppedHigh => "StoppedHigh",
            Self::StoppedLow => "StoppedLow",
            Self::StoppedMaxN => "StoppedMaxN",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Status {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "Collecting" => Self::Collecting,
            "Continue" => Self::Continue,
            "StoppedHigh" => Self::StoppedHigh,
            "StoppedLow" => Self::StoppedLow,
            "StoppedMaxN" => Self::StoppedMaxN,
            other => return Err(Error::Parse(format!("unknown status {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StopKind {
    Continue,
    StopHigh,
    StopLow,
    StopMaxN,
}

impl StopKind {
    pub fn is_stop(self) -> bool {
        self != Self::Continue
    }

    /// Crossed a likelihood-ratio threshold, as opposed to running out of
    /// sample.
    pub fn is_early(self) -> bool {
        matches!(self, Self::StopHigh | Self::StopLow)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopDecision {
    pub kind: StopKind,
    pub lr_at_decision: LikelihoodRatio,
    pub n_at_decision: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EvidenceDirection {
    FavorsAboveDelta,
    FavorsBelowDelta,
    Neutral,
}

impl EvidenceDirection {
    pub fn of(lr: LikelihoodRatio) -> Self {
        let log = lr.log_value();
        if log > 0.0 {
            Self::FavorsAboveDelta
        } else if log < 0.0 {
            Self::FavorsBelowDelta
        } else {
            Self::Neutral
        }
    }
}

/// Terminal snapshot of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub final_lr: LikelihoodRatio,
    pub final_n: u64,
    pub theta_obs_final: f64,
    pub stop_reason: StopKind,
    pub evidence_direction: EvidenceDirection,
}

/// The stopping rule in isolation.
///
/// Below `n_min` the answer is always `Continue`. Otherwise a ratio at or
/// beyond either threshold stops, and reaching `n_max` stops regardless.
pub fn stop_rule(design: &TrialDesign, n: u64, lr: LikelihoodRatio) -> StopKind {
    if n < design.n_min() {
        return StopKind::Continue;
    }
    let log = lr.log_value();
    if log >= design.lr_upper().ln() {
        StopKind::StopHigh
    } else if log <= design.lr_lower().ln() {
        StopKind::StopLow
    } else if n >= design.n_max() {
        StopKind::StopMaxN
    } else {
        StopKind::Continue
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialState {
    design: TrialDesign,
    n: u64,
    sum: f64,
    // Neumaier compensation term for `sum`
    sum_comp: f64,
    sum_sq: f64,
    lr: LikelihoodRatio,
    status: Status,
}

impl TrialState {
    pub fn new(design: TrialDesign) -> Self {
        Self {
            design,
            n: 0,
            sum: 0.0,
            sum_comp: 0.0,
            sum_sq: 0.0,
            lr: LikelihoodRatio::ONE,
            status: Status::Collecting,
        }
    }

    /// Feeds a whole sequence, stopping with an error at the first rejected
    /// observation.
    pub fn replay<I>(design: TrialDesign, observations: I) -> Result<Self>
    where
        I: IntoIterator<Item = f64>,
    {
        let mut state = Self::new(design);
        for x in observations {
            state.push(x)?;
        }
        Ok(state)
    }

    /// Value-style update: returns the successor state, leaving `self` as is.
    pub fn add_observation(&self, x: f64) -> Result<Self> {
        let mut next = self.clone();
        next.push(x)?;
        Ok(next)
    }

    /// In-place update. On error the state is unchanged.
    pub fn push(&mut self, x: f64) -> Result<StopDecision> {
        if self.status.is_stopped() {
            return Err(Error::AlreadyStopped(self.status));
        }
        if !x.is_finite() {
            return Err(domain(format!("observation must be finite, got {x}")));
        }
        let n = self.n + 1;
        let (sum, comp) = neumaier_add(self.sum, self.sum_comp, x);
        let mean = (sum + comp) / n as f64;
        let se = 1.0 / (n as f64).sqrt();
        let lr = directional_lr(mean, self.design.delta(), se)?;

        self.n = n;
        self.sum = sum;
        self.sum_comp = comp;
        self.sum_sq += x * x;
        self.lr = lr;
        let decision = self.evaluate_stopping()?;
        self.status = match decision.kind {
            StopKind::Continue if n < self.design.n_min() => Status::Collecting,
            StopKind::Continue => Status::Continue,
            StopKind::StopHigh => Status::StoppedHigh,
            StopKind::StopLow => Status::StoppedLow,
            StopKind::StopMaxN => Status::StoppedMaxN,
        };
        Ok(decision)
    }

    pub fn evaluate_stopping(&self) -> Result<StopDecision> {
        if self.n == 0 {
            return Err(Error::NoObservations);
        }
        Ok(StopDecision {
            kind: stop_rule(&self.design, self.n, self.lr),
            lr_at_decision: self.lr,
            n_at_decision: self.n,
        })
    }

    /// `θ_obs ± z_crit/√n`.
    pub fn confidence_interval(&self) -> Result<(f64, f64)> {
        let theta = self.theta_obs().ok_or(Error::NoObservations)?;
        let half = self.design.z_crit() / (self.n as f64).sqrt();
        Ok((theta - half, theta + half))
    }

    pub fn finalize(&self) -> Result<TrialResult> {
        let kind = match self.status {
            Status::StoppedHigh => StopKind::StopHigh,
            Status::StoppedLow => StopKind::StopLow,
            Status::StoppedMaxN => StopKind::StopMaxN,
            other => return Err(Error::NotStopped(other)),
        };
        Ok(TrialResult {
            final_lr: self.lr,
            final_n: self.n,
            theta_obs_final: self.theta_obs().ok_or(Error::NoObservations)?,
            stop_reason: kind,
            evidence_direction: EvidenceDirection::of(self.lr),
        })
    }

    pub fn design(&self) -> &TrialDesign {
        &self.design
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn sum(&self) -> f64 {
        self.sum + self.sum_comp
    }

    pub fn sum_sq(&self) -> f64 {
        self.sum_sq
    }

    /// Running mean; `None` before the first observation.
    pub fn theta_obs(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum() / self.n as f64)
    }

    pub fn se(&self) -> Option<f64> {
        (self.n > 0).then(|| 1.0 / (self.n as f64).sqrt())
    }

    /// Current ratio; `None` before the first observation.
    pub fn lr(&self) -> Option<LikelihoodRatio> {
        (self.n > 0).then_some(self.lr)
    }

    pub fn status(&self) -> Status {
        self.status
    }
}

fn neumaier_add(sum: f64, comp: f64, x: f64) -> (f64, f64) {
    let t = sum + x;
    let c = if sum.abs() >= x.abs() {
        (sum - t) + x
    } else {
        (x - t) + sum
    };
    (t, comp + c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::DesignParams;
    use crate::evidence::stop_boundary;

    fn reference() -> TrialDesign {
        TrialDesign::reference_preset()
    }

    fn lr(v: f64) -> LikelihoodRatio {
        LikelihoodRatio::from_value(v).unwrap()
    }

    #[test]
    fn new_trial_starts_collecting() {
        let s = TrialState::new(reference());
        assert_eq!(s.n(), 0);
        assert_eq!(s.status(), Status::Collecting);
        assert_eq!((s.design().n_min(), s.design().n_max()), (16, 64));
        assert!(s.lr().is_none());
        assert!(matches!(s.evaluate_stopping(), Err(Error::NoObservations)));
        assert!(matches!(s.confidence_interval(), Err(Error::NoObservations)));
    }

    #[test]
    fn observations_at_delta_continue() {
        let s = TrialState::replay(reference(), [0.5; 16]).unwrap();
        assert_eq!(s.theta_obs(), Some(0.5));
        assert_eq!(s.lr().unwrap().value(), 1.0);
        assert_eq!(s.status(), Status::Continue);
    }

    #[test]
    fn strong_effect_stops_high_at_minimum() {
        let mut s = TrialState::new(reference());
        for i in 1..=16 {
            let d = s.push(1.6181).unwrap();
            if i < 16 {
                assert_eq!(s.status(), Status::Collecting);
                assert_eq!(d.kind, StopKind::Continue);
                assert!(s.lr().unwrap().value() > 1.0);
            }
        }
        assert_eq!(s.status(), Status::StoppedHigh);
        assert!(s.lr().unwrap().value() > 20.0);
        let err = s.add_observation(1.0).unwrap_err();
        assert_eq!(err, Error::AlreadyStopped(Status::StoppedHigh));
    }

    #[test]
    fn rejects_non_finite() {
        let mut s = TrialState::new(reference());
        assert!(s.push(f64::NAN).is_err());
        assert!(s.push(f64::INFINITY).is_err());
        assert_eq!(s.n(), 0);
    }

    #[test]
    fn stop_rule_examples() {
        let d = reference();
        assert_eq!(stop_rule(&d, 10, lr(100.0)), StopKind::Continue);
        assert_eq!(stop_rule(&d, 20, lr(25.0)), StopKind::StopHigh);
        assert_eq!(stop_rule(&d, 20, lr(0.04)), StopKind::StopLow);
        assert_eq!(stop_rule(&d, 64, lr(1.8)), StopKind::StopMaxN);
        assert_eq!(stop_rule(&d, 63, lr(1.8)), StopKind::Continue);
        // thresholds are inclusive
        assert_eq!(stop_rule(&d, 16, lr(20.0)), StopKind::StopHigh);
        assert_eq!(stop_rule(&d, 16, lr(0.05)), StopKind::StopLow);
        // a crossing on the last look is a threshold stop
        assert_eq!(stop_rule(&d, 64, lr(30.0)), StopKind::StopHigh);
    }

    #[test]
    fn confidence_interval_examples() {
        let s = TrialState::replay(reference(), [0.5; 16]).unwrap();
        assert_eq!(s.confidence_interval().unwrap(), (0.0, 1.0));
        let s = TrialState::replay(reference(), [0.5; 64]).unwrap();
        assert_eq!(s.confidence_interval().unwrap(), (0.25, 0.75));
        let s = TrialState::replay(reference(), [0.0]).unwrap();
        assert_eq!(s.confidence_interval().unwrap(), (-2.0, 2.0));
    }

    #[test]
    fn finalize_directions() {
        let s = TrialState::replay(reference(), [1.7; 16]).unwrap();
        let r = s.finalize().unwrap();
        assert_eq!(r.stop_reason, StopKind::StopHigh);
        assert_eq!(r.evidence_direction, EvidenceDirection::FavorsAboveDelta);
        assert_eq!(r.final_n, 16);

        // mean 0.45 after 64 draws: z = -0.4, LR ≈ 0.72, no crossing
        let s = TrialState::replay(reference(), [0.45; 64]).unwrap();
        assert_eq!(s.status(), Status::StoppedMaxN);
        let r = s.finalize().unwrap();
        assert_eq!(r.stop_reason, StopKind::StopMaxN);
        assert_eq!(r.evidence_direction, EvidenceDirection::FavorsBelowDelta);

        // Δ = 2 gives sizes 1 and 4; four draws exactly at Δ end neutral
        let tiny = DesignParams::new(2.0).build().unwrap();
        assert_eq!((tiny.n_min(), tiny.n_max()), (1, 4));
        let s = TrialState::replay(tiny, [2.0; 4]).unwrap();
        let r = s.finalize().unwrap();
        assert_eq!(r.stop_reason, StopKind::StopMaxN);
        assert_eq!(r.evidence_direction, EvidenceDirection::Neutral);

        let open = TrialState::replay(reference(), [0.5; 3]).unwrap();
        assert_eq!(open.finalize().unwrap_err(), Error::NotStopped(Status::Collecting));
    }

    #[test]
    fn never_exceeds_max() {
        let mut s = TrialState::new(reference());
        let mut n = 0;
        while !s.status().is_stopped() {
            s.push(0.5).unwrap();
            n += 1;
        }
        assert_eq!(n, 64);
        assert_eq!(s.status(), Status::StoppedMaxN);
    }

    #[test]
    fn smallest_stopping_z_is_boundary() {
        // at n = 16 the standardized distance is 4·(θ_obs - Δ)
        let b = stop_boundary(20.0).unwrap();
        let above = 0.5 + (b.z + 1e-9) / 4.0;
        let below = 0.5 + (b.z - 1e-6) / 4.0;
        let s = TrialState::replay(reference(), [above; 16]).unwrap();
        assert_eq!(s.status(), Status::StoppedHigh);
        let s = TrialState::replay(reference(), [below; 16]).unwrap();
        assert_eq!(s.status(), Status::Continue);
    }
}
