//! Synthetic admissions driven by a latent severity process.
//!
//! Each admission has an hourly AR(1) severity `s`. Observations are measured
//! at random hours and turn abnormal with probability increasing in `s`. The
//! target fires at step `t` with hazard `sigmoid(offset + gain * s[t + horizon])`,
//! so the future observation classes predicted by the GPSR tasks carry
//! information about the target. `offset` is calibrated on the train split to
//! hit the requested prior.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{lvcf_sequence, Cohort, CohortMeta, EncodedSequence, ObservationSet, ObservationSpec, RawEvent, Split, Step};
use crate::error::{Error, Result};
use crate::numkernel::{sigmoid, Purpose, RngStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub seed: u64,
    /// Class count (2 or 3) of each observation; its length is the number of
    /// observations.
    pub observation_classes: Vec<u8>,
    pub train_admissions: usize,
    pub valid_admissions: usize,
    pub test_admissions: usize,
    /// Steps per admission, drawn uniformly from `[min_steps, max_steps]`.
    pub min_steps: usize,
    pub max_steps: usize,
    /// Hours between prediction steps.
    pub interval: f64,
    /// Hours of target and GPSR look-ahead.
    pub horizon: f64,
    /// Hourly persistence of the latent severity.
    pub rho: f64,
    /// Standard deviation of the hourly innovation.
    pub noise: f64,
    /// Slope linking severity to the abnormality logit; 0 makes observations
    /// independent of the target.
    pub signal: f64,
    /// Abnormality logit at zero severity.
    pub abnormal_base: f64,
    /// Per-hour probability that an observation is measured.
    pub measurement_rate: f64,
    /// Slope linking future severity to the target hazard logit.
    pub hazard_gain: f64,
    /// Expected train prior the hazard offset is calibrated to.
    pub target_prior: f64,
    /// Accepted relative deviation of the realized train prior; `None` skips
    /// the check.
    pub prior_band: Option<f64>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 0,
            observation_classes: vec![3; 20],
            train_admissions: 2000,
            valid_admissions: 500,
            test_admissions: 1000,
            min_steps: 10,
            max_steps: 30,
            interval: 6.0,
            horizon: 6.0,
            rho: 0.97,
            noise: 0.25,
            signal: 1.5,
            abnormal_base: -1.0,
            measurement_rate: 0.25,
            hazard_gain: 2.5,
            target_prior: 0.0084,
            prior_band: Some(0.3),
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: String| Err(Error::invalid(field, reason));
        if self.observation_classes.is_empty() {
            return bad("observation_classes", "at least one observation is required".into());
        }
        if let Some(c) = self.observation_classes.iter().find(|&&c| c != 2 && c != 3) {
            return bad("observation_classes", format!("class counts must be 2 or 3, got {c}"));
        }
        if self.train_admissions == 0 || self.valid_admissions == 0 || self.test_admissions == 0 {
            return bad("admissions", "every split needs at least one admission".into());
        }
        if self.min_steps == 0 || self.min_steps > self.max_steps {
            return bad(
                "min_steps",
                format!("need 1 <= min_steps <= max_steps, got {}..{}", self.min_steps, self.max_steps),
            );
        }
        for (field, v) in [("interval", self.interval), ("horizon", self.horizon)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(field, format!("must be positive, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad("rho", format!("must lie in [0, 1), got {}", self.rho));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise", format!("must be non-negative, got {}", self.noise));
        }
        if !(self.measurement_rate > 0.0 && self.measurement_rate <= 1.0) {
            return bad("measurement_rate", format!("must lie in (0, 1], got {}", self.measurement_rate));
        }
        if !(self.target_prior > 0.0 && self.target_prior < 1.0) {
            return bad("target_prior", format!("must lie in (0, 1), got {}", self.target_prior));
        }
        for (field, v) in [
            ("signal", self.signal),
            ("abnormal_base", self.abnormal_base),
            ("hazard_gain", self.hazard_gain),
        ] {
            if !v.is_finite() {
                return bad(field, format!("must be finite, got {v}"));
            }
        }
        if let Some(b) = self.prior_band {
            if b.is_nan() || b <= 0.0 {
                return bad("prior_band", format!("must be positive, got {b}"));
            }
        }
        Ok(())
    }

    pub fn observations(&self) -> ObservationSet {
        let specs = self
            .observation_classes
            .iter()
            .enumerate()
            .map(|(j, &c)| ObservationSpec::new(format!("obs{j:02}"), c, LO, HI).expect("fixed valid range"))
            .collect();
        ObservationSet::new(specs).expect("validated class counts")
    }
}

const LO: f64 = 50.0;
const HI: f64 = 100.0;

/// A generated cohort together with the hidden quantities behind it.
#[derive(Clone, Debug)]
pub struct SyntheticCohort {
    pub cohort: Cohort,
    /// Per split, admission and step: the severity at `t + horizon` that drove
    /// the label.
    pub latent: [Vec<Vec<f64>>; 3],
    pub hazard_offset: f64,
    pub realized_train_prior: f64,
}

struct Draft {
    id: String,
    times: Vec<f64>,
    inputs: Vec<Vec<f64>>,
    gpsr: Vec<Vec<u16>>,
    future_severity: Vec<f64>,
}

struct ObsProfile {
    loading: f64,
    /// +1 when high severity pushes the value above the range, -1 below.
    direction: f64,
}

fn profiles(config: &SyntheticConfig) -> Vec<ObsProfile> {
    let mut rng = RngStream::for_purpose(config.seed, Purpose::Synthetic, &[u64::MAX]);
    (0..config.observation_classes.len())
        .map(|j| ObsProfile {
            loading: rng.uniform_range(0.5, 1.5),
            direction: if j % 2 == 0 { 1.0 } else { -1.0 },
        })
        .collect()
}

fn draft_admission(
    config: &SyntheticConfig,
    observations: &ObservationSet,
    profiles: &[ObsProfile],
    split: Split,
    index: usize,
) -> Result<Draft> {
    let mut rng = RngStream::for_purpose(config.seed, Purpose::Synthetic, &[split as u64, index as u64, 0]);
    let n_steps = rng.int_inclusive(config.min_steps, config.max_steps);
    let times: Vec<f64> = (1..=n_steps).map(|k| k as f64 * config.interval).collect();
    let hours = (times[n_steps - 1] + config.horizon).floor() as usize + 1;

    let stationary_sd = config.noise / (1.0 - config.rho * config.rho).sqrt();
    let mut severity = Vec::with_capacity(hours);
    let mut s = stationary_sd * rng.normal();
    for _ in 0..hours {
        severity.push(s);
        s = config.rho * s + config.noise * rng.normal();
    }

    let mut events = Vec::new();
    for (hour, &sv) in severity.iter().enumerate() {
        for (spec, prof) in observations.specs().iter().zip(profiles) {
            if !rng.bernoulli(config.measurement_rate) {
                continue;
            }
            let p_abnormal = sigmoid(config.abnormal_base + config.signal * prof.loading * sv);
            let width = HI - LO;
            let value = if rng.bernoulli(p_abnormal) {
                let excess = width * (0.01 + 0.2 * rng.exponential(1.0));
                if prof.direction > 0.0 || spec.classes == 2 {
                    HI + excess
                } else {
                    LO - excess
                }
            } else {
                rng.uniform_range(LO, HI)
            };
            events.push(RawEvent {
                observation: spec.id.clone(),
                time: hour as f64,
                value,
            });
        }
    }
    let enc = lvcf_sequence(&events, observations, &times, config.horizon)?;
    let future_severity = times.iter().map(|t| severity[(t + config.horizon).floor() as usize]).collect();
    Ok(Draft {
        id: format!("{}-{index:05}", split.name()),
        times,
        inputs: enc.inputs,
        gpsr: enc.gpsr,
        future_severity,
    })
}

/// Offset whose mean hazard over `severities` equals `prior`.
fn calibrate_offset(severities: &[f64], gain: f64, prior: f64) -> f64 {
    let mean_hazard = |b: f64| severities.iter().map(|&s| sigmoid(b + gain * s)).sum::<f64>() / severities.len() as f64;
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_hazard(mid) < prior {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn generate_synthetic_cohort(config: &SyntheticConfig) -> Result<SyntheticCohort> {
    config.validate()?;
    let observations = config.observations();
    let profiles = profiles(config);
    let sizes = [config.train_admissions, config.valid_admissions, config.test_admissions];

    let mut drafts: Vec<Vec<Draft>> = Vec::with_capacity(3);
    for (split, &n) in Split::ALL.iter().zip(&sizes) {
        let split_drafts = (0..n)
            .into_par_iter()
            .map(|i| draft_admission(config, &observations, &profiles, *split, i))
            .collect::<Result<Vec<_>>>()?;
        drafts.push(split_drafts);
    }

    let train_severity: Vec<f64> = drafts[0].iter().flat_map(|d| d.future_severity.iter().copied()).collect();
    let offset = calibrate_offset(&train_severity, config.hazard_gain, config.target_prior);

    let mut splits: Vec<Vec<EncodedSequence>> = Vec::with_capacity(3);
    let mut latent: Vec<Vec<Vec<f64>>> = Vec::with_capacity(3);
    for (split, split_drafts) in Split::ALL.iter().zip(drafts) {
        let mut seqs = Vec::with_capacity(split_drafts.len());
        let mut lat = Vec::with_capacity(split_drafts.len());
        for (i, d) in split_drafts.into_iter().enumerate() {
            let mut rng = RngStream::for_purpose(config.seed, Purpose::Synthetic, &[*split as u64, i as u64, 1]);
            let steps = d
                .times
                .iter()
                .zip(d.inputs)
                .zip(d.gpsr)
                .zip(&d.future_severity)
                .map(|(((&time, input), gpsr), &s)| Step {
                    time,
                    input,
                    label: rng.bernoulli(sigmoid(offset + config.hazard_gain * s)),
                    gpsr,
                    valid: true,
                })
                .collect();
            seqs.push(EncodedSequence { admission_id: d.id, steps });
            lat.push(d.future_severity);
        }
        splits.push(seqs);
        latent.push(lat);
    }

    let meta = CohortMeta {
        id: format!("synthetic-seed{}", config.seed),
        observations,
        interval: config.interval,
        horizon: config.horizon,
    };
    let test = splits.pop().expect("three splits");
    let valid = splits.pop().expect("three splits");
    let train = splits.pop().expect("three splits");
    let cohort = Cohort::new(meta, train, valid, test)?;

    let realized = cohort.stats(Split::Train);
    if realized.positives == 0 {
        return Err(Error::Data(format!(
            "synthetic train split has no positive steps (realized prior {})",
            realized.prior
        )));
    }
    if let Some(band) = config.prior_band {
        let rel = (realized.prior - config.target_prior).abs() / config.target_prior;
        if rel > band {
            return Err(Error::Data(format!(
                "realized train prior {} is outside ±{band} of the target {}",
                realized.prior, config.target_prior
            )));
        }
    }
    let latent: [Vec<Vec<f64>>; 3] = latent.try_into().expect("three splits");
    Ok(SyntheticCohort {
        realized_train_prior: realized.prior,
        cohort,
        latent,
        hazard_offset: offset,
    })
}
