//! K-bin soft labels for continuous attributes.
//!
//! A value is encoded as a Gaussian of fixed width evaluated at the bin
//! centers and renormalized. Activatable attributes get one extra bin at
//! label 0 meaning "not present"; active bins then occupy labels `1..=K`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{AttributeSchema, ContinuousDef};

pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ProbabilityError {
    #[error("invalid bin spec: {0}")]
    InvalidSpec(&'static str),
    #[error("attribute has no inactive bin")]
    NoInactiveBin,
    #[error("value is not a number")]
    NotANumber,
    #[error("distribution has {found} weights, expected {expected}")]
    Length { expected: usize, found: usize },
    #[error("weights must be finite, nonnegative and sum to 1 (sum = {0})")]
    NotNormalized(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinningConfig {
    pub bins: usize,
    /// Gaussian standard deviation in units of the bin width.
    pub sigma_bins: f64,
}

impl Default for BinningConfig {
    fn default() -> Self {
        BinningConfig {
            bins: 64,
            sigma_bins: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub bins: usize,
    pub min: f64,
    pub max: f64,
    /// Standard deviation in value units.
    pub sigma: f64,
    pub inactive_bin: bool,
}

impl BinSpec {
    pub fn new(bins: usize, min: f64, max: f64, sigma: f64, inactive_bin: bool) -> Result<Self, ProbabilityError> {
        let spec = BinSpec {
            bins,
            min,
            max,
            sigma,
            inactive_bin,
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn for_attribute(def: &ContinuousDef, cfg: &BinningConfig) -> Self {
        let width = def.span() / cfg.bins as f64;
        BinSpec {
            bins: cfg.bins,
            min: def.min,
            max: def.max,
            sigma: cfg.sigma_bins * width,
            inactive_bin: def.is_activatable(),
        }
    }

    pub fn check(&self) -> Result<(), ProbabilityError> {
        if self.bins < 2 {
            return Err(ProbabilityError::InvalidSpec("need at least two bins"));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min < self.max) {
            return Err(ProbabilityError::InvalidSpec("range must be finite with min < max"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(ProbabilityError::InvalidSpec("sigma must be positive"));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        (self.max - self.min) / self.bins as f64
    }

    /// Number of labels, including the inactive bin.
    pub fn labels(&self) -> usize {
        self.bins + self.offset()
    }

    fn offset(&self) -> usize {
        usize::from(self.inactive_bin)
    }

    /// Center of active bin `j` in `0..bins`.
    pub fn center(&self, j: usize) -> f64 {
        self.min + (j as f64 + 0.5) * self.width()
    }

    pub fn is_inactive_label(&self, label: usize) -> bool {
        self.inactive_bin && label == 0
    }

    /// Value represented by a label; `None` for the inactive bin.
    pub fn label_value(&self, label: usize) -> Option<f64> {
        if self.is_inactive_label(label) {
            None
        } else {
            Some(self.center(label - self.offset()))
        }
    }

    /// Label of the bin containing `value` (clamped to the range), or the
    /// inactive label for `None`.
    pub fn label_of(&self, value: Option<f64>) -> usize {
        match value {
            None => 0,
            Some(v) => {
                let j = ((v - self.min) / self.width()).floor();
                let j = if j.is_nan() { 0.0 } else { j.clamp(0.0, (self.bins - 1) as f64) };
                j as usize + self.offset()
            }
        }
    }
}

pub fn bin_specs(schema: &AttributeSchema, cfg: &BinningConfig) -> Vec<BinSpec> {
    schema
        .continuous
        .iter()
        .map(|d| BinSpec::for_attribute(d, cfg))
        .collect()
}

/// Normalized weights over the labels of a [`BinSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BinDistribution {
    weights: Vec<f64>,
}

impl BinDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self, ProbabilityError> {
        let sum: f64 = weights.iter().sum();
        if weights.is_empty()
            || weights.iter().any(|w| !w.is_finite() || *w < 0.0)
            || (sum - 1.0).abs() > NORMALIZATION_TOLERANCE
        {
            return Err(ProbabilityError::NotNormalized(sum));
        }
        Ok(BinDistribution { weights })
    }

    /// Normalizes nonnegative weights.
    pub fn from_unnormalized(mut weights: Vec<f64>) -> Result<Self, ProbabilityError> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(ProbabilityError::NotNormalized(sum));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Self::new(weights)
    }

    pub fn one_hot(len: usize, label: usize) -> Self {
        let mut weights = vec![0.0; len];
        weights[label] = 1.0;
        BinDistribution { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Index of the largest weight; ties go to the lower index.
    pub fn argmax(&self) -> usize {
        argmax(&self.weights)
    }

    pub fn check_spec(&self, spec: &BinSpec) -> Result<(), ProbabilityError> {
        if self.len() != spec.labels() {
            return Err(ProbabilityError::Length {
                expected: spec.labels(),
                found: self.len(),
            });
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for BinDistribution {
    type Error = ProbabilityError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        BinDistribution::new(v)
    }
}

impl From<BinDistribution> for Vec<f64> {
    fn from(d: BinDistribution) -> Self {
        d.weights
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discretized {
    pub dist: BinDistribution,
    /// The value lay outside the range and was clamped to it.
    pub clamped: bool,
}

/// Active-bin weights for `value` (no inactive bin), already clamped.
fn gaussian_weights(value: f64, spec: &BinSpec) -> Vec<f64> {
    let d2: Vec<f64> = (0..spec.bins)
        .map(|j| {
            let d = spec.center(j) - value;
            d * d
        })
        .collect();
    let nearest = d2.iter().copied().fold(f64::INFINITY, f64::min);
    let two_var = 2.0 * spec.sigma * spec.sigma;
    let mut w: Vec<f64> = d2.iter().map(|x| (-(x - nearest) / two_var).exp()).collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= sum);
    w
}

/// Soft label of a value: Gaussian density at the bin centers, renormalized.
/// `None` becomes a one-hot on the inactive bin.
pub fn discretize(value: Option<f64>, spec: &BinSpec) -> Result<Discretized, ProbabilityError> {
    spec.check()?;
    let Some(v) = value else {
        if !spec.inactive_bin {
            return Err(ProbabilityError::NoInactiveBin);
        }
        return Ok(Discretized {
            dist: BinDistribution::one_hot(spec.labels(), 0),
            clamped: false,
        });
    };
    if v.is_nan() {
        return Err(ProbabilityError::NotANumber);
    }
    let clamped_value = v.clamp(spec.min, spec.max);
    let mut weights = Vec::with_capacity(spec.labels());
    if spec.inactive_bin {
        weights.push(0.0);
    }
    weights.extend(gaussian_weights(clamped_value, spec));
    Ok(Discretized {
        dist: BinDistribution { weights },
        clamped: clamped_value != v,
    })
}

/// Probability-weighted mean of the active bin centers, or `None` when the
/// inactive bin holds more mass than all active bins together.
pub fn decode_expectation(dist: &BinDistribution, spec: &BinSpec) -> Option<f64> {
    let w = dist.weights();
    let (inactive, active) = if spec.inactive_bin { (w[0], &w[1..]) } else { (0.0, w) };
    let active_mass: f64 = active.iter().sum();
    if inactive > active_mass || active_mass <= 0.0 {
        return None;
    }
    let mean = active
        .iter()
        .enumerate()
        .map(|(j, p)| p * spec.center(j))
        .sum::<f64>()
        / active_mass;
    Some(mean)
}

/// Center of the heaviest bin (lowest label on ties); `None` if that is the
/// inactive bin.
pub fn decode_argmax(dist: &BinDistribution, spec: &BinSpec) -> Option<f64> {
    spec.label_value(dist.argmax())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plain(bins: usize, min: f64, max: f64, sigma_bins: f64) -> BinSpec {
        let w = (max - min) / bins as f64;
        BinSpec::new(bins, min, max, sigma_bins * w, false).unwrap()
    }

    #[test]
    fn delta_limit_at_center() {
        let spec = plain(16, 0.0, 8.0, 1e-6);
        let d = discretize(Some(spec.center(5)), &spec).unwrap();
        assert_eq!(d.dist, BinDistribution::one_hot(16, 5));
    }

    #[test]
    fn matches_direct_gaussian() {
        // K = 64 on [0, 64], sigma = one bin width
        let spec = plain(64, 0.0, 64.0, 1.0);
        let v = 10.3;
        let d = discretize(Some(v), &spec).unwrap().dist;
        assert_eq!(d.argmax(), 10);
        let direct: Vec<f64> = (0..64)
            .map(|j| {
                let c = j as f64 + 0.5;
                (-(c - v) * (c - v) / 2.0).exp()
            })
            .collect();
        let z: f64 = direct.iter().sum();
        for (a, b) in d.weights().iter().zip(&direct) {
            assert!((a - b / z).abs() < 1e-12);
        }
    }

    #[test]
    fn inactive_one_hot_and_decode() {
        let spec = BinSpec::new(8, 0.0, 1.0, 0.125, true).unwrap();
        let d = discretize(None, &spec).unwrap().dist;
        assert_eq!(d.len(), 9);
        assert_eq!(d.weights()[0], 1.0);
        assert_eq!(decode_expectation(&d, &spec), None);
        assert_eq!(decode_argmax(&d, &spec), None);
        assert_eq!(discretize(None, &plain(8, 0.0, 1.0, 1.0)), Err(ProbabilityError::NoInactiveBin));
    }

    #[test]
    fn uniform_decodes_to_midpoint() {
        let spec = BinSpec::new(10, 2.0, 4.0, 0.2, true).unwrap();
        let mut w = vec![0.1; 10];
        w.insert(0, 0.0);
        let d = BinDistribution::new(w).unwrap();
        assert!((decode_expectation(&d, &spec).unwrap() - 3.0).abs() < 1e-12);
        // argmax tie goes to the lowest active bin
        assert_eq!(decode_argmax(&d, &spec), Some(spec.center(0)));
    }

    #[test]
    fn invalid_specs() {
        assert!(BinSpec::new(1, 0.0, 1.0, 0.1, false).is_err());
        assert!(BinSpec::new(4, 1.0, 1.0, 0.1, false).is_err());
        let bad = BinSpec {
            bins: 4,
            min: 0.0,
            max: 1.0,
            sigma: 0.0,
            inactive_bin: false,
        };
        assert_eq!(
            discretize(Some(0.5), &bad),
            Err(ProbabilityError::InvalidSpec("sigma must be positive"))
        );
    }

    #[test]
    fn clamping_is_flagged() {
        let spec = plain(8, 0.0, 1.0, 1.0);
        let d = discretize(Some(1.5), &spec).unwrap();
        assert!(d.clamped);
        assert_eq!(d.dist.argmax(), 7);
        assert!(!discretize(Some(0.5), &spec).unwrap().clamped);
    }

    #[test]
    fn labels_and_values() {
        let spec = BinSpec::new(4, 0.0, 4.0, 1.0, true).unwrap();
        assert_eq!(spec.labels(), 5);
        assert_eq!(spec.label_of(None), 0);
        assert_eq!(spec.label_of(Some(0.2)), 1);
        assert_eq!(spec.label_of(Some(3.99)), 4);
        assert_eq!(spec.label_of(Some(4.0)), 4);
        assert_eq!(spec.label_value(2), Some(1.5));
        assert_eq!(spec.label_value(0), None);
    }

    #[test]
    fn distribution_validation() {
        assert!(BinDistribution::new(vec![0.5, 0.5]).is_ok());
        assert!(BinDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(BinDistribution::new(vec![1.5, -0.5]).is_err());
        assert!(BinDistribution::new(vec![f64::NAN, 1.0]).is_err());
        let json = serde_json::to_string(&BinDistribution::one_hot(3, 1)).unwrap();
        assert_eq!(json, "[0.0,1.0,0.0]");
        assert!(serde_json::from_str::<BinDistribution>("[0.2,0.2]").is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_error_bound(bins in 8usize..128, u in 0.0f64..1.0, lo in -50.0f64..50.0, span in 0.1f64..100.0) {
            let spec = plain(bins, lo, lo + span, 1.0);
            let sigma = spec.sigma;
            // stay at least three sigma away from either edge
            let v = lo + 3.0 * sigma + u * (span - 6.0 * sigma);
            let d = discretize(Some(v), &spec).unwrap().dist;
            let sum: f64 = d.weights().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            let back = decode_expectation(&d, &spec).unwrap();
            prop_assert!((back - v).abs() <= 0.5 * spec.width());
        }

        #[test]
        fn shift_equivariance(u in 0.0f64..1.0) {
            let spec = plain(64, 0.0, 64.0, 1.0);
            // keep both values far from the edges
            let v = 20.0 + u * 20.0;
            let a = discretize(Some(v), &spec).unwrap().dist;
            let b = discretize(Some(v + spec.width()), &spec).unwrap().dist;
            for j in 0..63 {
                prop_assert!((a.weights()[j] - b.weights()[j + 1]).abs() < 1e-9);
            }
        }
    }
}
