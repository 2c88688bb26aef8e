//! One-parameter empiric working model with a time-to-event weighted likelihood.
//!
//! The toxicity probability at dose level `j` is `skeleton[j]^exp(b)` with
//! `b ~ Normal(mean, sd)`. At `b = 0` the model reproduces the skeleton. The
//! posterior mean of `b` is used as a plug-in estimate for dose selection.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// Half-width of the posterior integration interval, in prior standard deviations.
pub const PRIOR_SPAN_SDS: f64 = 8.0;

/// A 1-based dose level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct DoseLevel(u32);

impl DoseLevel {
    pub const LOWEST: DoseLevel = DoseLevel(1);

    pub fn new(level: u32) -> Result<Self> {
        if level == 0 {
            return Err(Error::invalid("dose levels are numbered from 1"));
        }
        Ok(DoseLevel(level))
    }

    /// Builds a level from a 0-based index.
    pub fn from_index(index: usize) -> Self {
        DoseLevel(index as u32 + 1)
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// 0-based position into per-dose vectors.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn next_up(self) -> Self {
        DoseLevel(self.0 + 1)
    }
}

impl TryFrom<u32> for DoseLevel {
    type Error = Error;

    fn try_from(value: u32) -> Result<Self> {
        DoseLevel::new(value)
    }
}

impl From<DoseLevel> for u32 {
    fn from(d: DoseLevel) -> u32 {
        d.0
    }
}

impl fmt::Display for DoseLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Prior guesses of the toxicity probability per dose level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Skeleton {
    values: Vec<f64>,
    // ln(values), cached for the likelihood loop.
    #[serde(skip)]
    logs: Vec<f64>,
}

impl Skeleton {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid(format!(
                "skeleton needs at least 2 dose levels, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(Error::invalid(format!(
                "skeleton values must lie strictly inside (0, 1), found {v}"
            )));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "skeleton must be strictly increasing, got {values:?}"
            )));
        }
        let logs = values.iter().map(|v| v.ln()).collect();
        Ok(Self { values, logs })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, dose: DoseLevel) -> Option<f64> {
        self.values.get(dose.index()).copied()
    }

    pub fn contains(&self, dose: DoseLevel) -> bool {
        dose.index() < self.values.len()
    }

    pub fn highest(&self) -> DoseLevel {
        DoseLevel::from_index(self.values.len() - 1)
    }

    /// Model toxicity curve at a given parameter value.
    pub fn curve(&self, param: f64) -> Vec<f64> {
        self.values.iter().map(|&v| model_probability(v, param)).collect()
    }

    fn log_at(&self, dose: DoseLevel) -> f64 {
        self.logs[dose.index()]
    }
}

impl TryFrom<Vec<f64>> for Skeleton {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Skeleton::new(values)
    }
}

impl From<Skeleton> for Vec<f64> {
    fn from(s: Skeleton) -> Vec<f64> {
        s.values
    }
}

/// Normal prior on the model parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PriorSpecRaw", into = "PriorSpecRaw")]
pub struct PriorSpec {
    mean: f64,
    sd: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorSpecRaw {
    #[serde(default)]
    mean: f64,
    sd: f64,
}

impl PriorSpec {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::invalid("prior mean must be finite"));
        }
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(Error::invalid(format!("prior sd must be positive, got {sd}")));
        }
        Ok(Self { mean, sd })
    }

    /// Mean-zero prior.
    pub fn centered(sd: f64) -> Result<Self> {
        Self::new(0.0, sd)
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sd(&self) -> f64 {
        self.sd
    }

    fn log_density_kernel(&self, b: f64) -> f64 {
        let z = (b - self.mean) / self.sd;
        -0.5 * z * z
    }
}

impl TryFrom<PriorSpecRaw> for PriorSpec {
    type Error = Error;

    fn try_from(raw: PriorSpecRaw) -> Result<Self> {
        PriorSpec::new(raw.mean, raw.sd)
    }
}

impl From<PriorSpec> for PriorSpecRaw {
    fn from(p: PriorSpec) -> Self {
        PriorSpecRaw {
            mean: p.mean,
            sd: p.sd,
        }
    }
}

/// Target toxicity probability for one stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ToxicityTarget(f64);

impl ToxicityTarget {
    pub fn new(value: f64) -> Result<Self> {
        if !(value > 0.0 && value < 1.0) {
            return Err(Error::invalid(format!(
                "toxicity target must lie strictly inside (0, 1), got {value}"
            )));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for ToxicityTarget {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        ToxicityTarget::new(value)
    }
}

impl From<ToxicityTarget> for f64 {
    fn from(t: ToxicityTarget) -> f64 {
        t.0
    }
}

/// One patient's contribution to a stream's weighted likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightedObservation {
    pub dose: DoseLevel,
    pub weight: f64,
    pub dlt: bool,
}

impl WeightedObservation {
    pub fn new(dose: DoseLevel, weight: f64, dlt: bool) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::invalid(format!("weight {weight} outside [0, 1]")));
        }
        if dlt && weight != 1.0 {
            return Err(Error::invalid("a toxicity observation carries full weight"));
        }
        Ok(Self { dose, weight, dlt })
    }

    /// A fully followed observation.
    pub fn complete(dose: DoseLevel, dlt: bool) -> Self {
        Self {
            dose,
            weight: 1.0,
            dlt,
        }
    }
}

/// Linear follow-up weight, 1 once a toxicity has been observed.
pub fn follow_up_weight(follow_up: f64, window: f64, dlt_observed: bool) -> Result<f64> {
    if !(window > 0.0 && window.is_finite()) {
        return Err(Error::invalid(format!(
            "observation window must be positive, got {window}"
        )));
    }
    if dlt_observed {
        return Ok(1.0);
    }
    Ok((follow_up.max(0.0) / window).min(1.0))
}

pub fn model_probability(skeleton_value: f64, param: f64) -> f64 {
    skeleton_value.powf(param.exp())
}

fn check_doses(obs: &[WeightedObservation], skeleton: &Skeleton) -> Result<()> {
    match obs.iter().find(|o| !skeleton.contains(o.dose)) {
        Some(o) => Err(Error::invalid(format!(
            "observation at dose {} but the skeleton has {} levels",
            o.dose,
            skeleton.len()
        ))),
        None => Ok(()),
    }
}

/// `ln L(param)`; doses must already be validated against the skeleton.
fn log_likelihood_unchecked(param: f64, obs: &[WeightedObservation], skeleton: &Skeleton) -> f64 {
    let scale = param.exp();
    obs.iter()
        .map(|o| {
            let log_p = scale * skeleton.log_at(o.dose);
            if o.dlt {
                o.weight.ln() + log_p
            } else {
                // p rounds to 1 only for extreme negative params; ln(0) = -inf
                // then drops that node from the integral.
                (-o.weight * log_p.exp()).ln_1p()
            }
        })
        .sum()
}

pub fn log_weighted_likelihood(
    param: f64,
    obs: &[WeightedObservation],
    skeleton: &Skeleton,
) -> Result<f64> {
    check_doses(obs, skeleton)?;
    Ok(log_likelihood_unchecked(param, obs, skeleton))
}

/// `prod_k (w_k p_k)^y_k (1 - w_k p_k)^(1 - y_k)`, evaluated in log space.
pub fn weighted_likelihood(
    param: f64,
    obs: &[WeightedObservation],
    skeleton: &Skeleton,
) -> Result<f64> {
    log_weighted_likelihood(param, obs, skeleton).map(f64::exp)
}

/// Posterior mean of the model parameter by Gauss-Legendre quadrature over
/// `mean ± 8 sd`.
pub fn posterior_mean(
    prior: &PriorSpec,
    obs: &[WeightedObservation],
    skeleton: &Skeleton,
) -> Result<f64> {
    check_doses(obs, skeleton)?;
    if obs.is_empty() {
        return Ok(prior.mean());
    }
    let lo = prior.mean() - PRIOR_SPAN_SDS * prior.sd();
    let hi = prior.mean() + PRIOR_SPAN_SDS * prior.sd();
    let rule = GaussLegendre::posterior();

    let mut points = Vec::with_capacity(rule.len());
    let mut peak = f64::NEG_INFINITY;
    for (b, w) in rule.on_interval(lo, hi) {
        let log_f = log_likelihood_unchecked(b, obs, skeleton) + prior.log_density_kernel(b);
        peak = peak.max(log_f);
        points.push((b, w, log_f));
    }
    let fail = |reason: String| Error::Numerical {
        reason,
        observations: obs.len(),
        prior_sd: prior.sd(),
    };
    if !peak.is_finite() {
        return Err(fail(format!("log integrand peak is {peak}")));
    }

    let (mut num, mut den) = (0.0, 0.0);
    for (b, w, log_f) in points {
        let f = (log_f - peak).exp();
        num += w * b * f;
        den += w * f;
    }
    let mean = num / den;
    if !(den > 0.0) || !mean.is_finite() {
        return Err(fail(format!("normaliser {den}, mean {mean}")));
    }
    Ok(mean)
}

/// Dose whose modelled probability is closest to the target; ties go to the lower dose.
pub fn select_dose(skeleton: &Skeleton, param: f64, target: ToxicityTarget) -> DoseLevel {
    let mut best = 0;
    let mut best_gap = f64::INFINITY;
    for (j, p) in skeleton.curve(param).into_iter().enumerate() {
        let gap = (p - target.value()).abs();
        if gap < best_gap {
            best = j;
            best_gap = gap;
        }
    }
    DoseLevel::from_index(best)
}
