//! Synthetic noisy predictions from ground-truth scenes.
//!
//! Every attribute has a favored state, the ground truth flipped with
//! probability `epsilon`. Binaries and activity bins put exactly `1 - epsilon`
//! of their mass on the favored state; lane counts use a tempered softmax of
//! the favored one-hot vector; active values are jittered before
//! discretization.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prediction::AttributePrediction;
use crate::probability::{discretize, BinDistribution, BinSpec, ProbabilityError};
use crate::rng::{split, SplitMix64};
use crate::schema::{AttributeSchema, SceneParams};

#[derive(Debug, Error, PartialEq)]
pub enum NoiseError {
    #[error("invalid noise config: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Probability(#[from] ProbabilityError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Flip probability of the favored state.
    pub epsilon: f64,
    /// Softmax temperature for lane counts.
    pub tau_d: f64,
    /// Jitter std as a fraction of each attribute's range.
    pub sigma_n: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            epsilon: 0.15,
            tau_d: 0.25,
            sigma_n: 0.1,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), NoiseError> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(NoiseError::Config("epsilon must lie in [0, 1]"));
        }
        if !(self.tau_d > 0.0 && self.tau_d.is_finite()) {
            return Err(NoiseError::Config("tau_d must be positive"));
        }
        if !(self.sigma_n >= 0.0 && self.sigma_n.is_finite()) {
            return Err(NoiseError::Config("sigma_n must be nonnegative"));
        }
        Ok(())
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / z).collect()
}

/// The noisy states an oracle prediction concentrates on.
#[derive(Clone, Debug, PartialEq)]
pub struct FavoredStates {
    pub binary: [bool; crate::schema::NUM_BINARY],
    pub multiclass: [u8; crate::schema::NUM_MULTICLASS],
    /// Favored activity per continuous attribute.
    pub active: [bool; crate::schema::NUM_CONTINUOUS],
    /// Value discretized for the active state (jittered ground truth, or a
    /// uniform draw when the ground truth is inactive).
    pub values: [f64; crate::schema::NUM_CONTINUOUS],
}

fn draw_favored(gt: &SceneParams, schema: &AttributeSchema, cfg: &NoiseConfig, rng: &mut SplitMix64) -> FavoredStates {
    let eps = cfg.epsilon;
    let binary = gt.binary.map(|truth| truth ^ (rng.random::<f64>() < eps));
    let multiclass = std::array::from_fn(|p| {
        let classes = schema.multiclass[p].classes;
        let truth = gt.multiclass[p];
        let flip = rng.random::<f64>() < eps;
        let other = rng.random_range(0..classes - 1);
        match flip {
            false => truth,
            true if other >= truth => other + 1,
            true => other,
        }
    });
    let mut active = [false; crate::schema::NUM_CONTINUOUS];
    let mut values = [0.0; crate::schema::NUM_CONTINUOUS];
    for (m, def) in schema.continuous.iter().enumerate() {
        let flip = rng.random::<f64>() < eps;
        let z: f64 = rng.sample(StandardNormal);
        let fallback = def.min + rng.random::<f64>() * def.span();
        values[m] = match gt.continuous[m] {
            Some(v) => (v + z * cfg.sigma_n * def.span()).clamp(def.min, def.max),
            None => fallback,
        };
        active[m] = !def.is_activatable() || (gt.continuous[m].is_some() ^ flip);
    }
    FavoredStates {
        binary,
        multiclass,
        active,
        values,
    }
}

fn emit(fav: &FavoredStates, schema: &AttributeSchema, specs: &[BinSpec], cfg: &NoiseConfig) -> Result<AttributePrediction, NoiseError> {
    let eps = cfg.epsilon;
    let binary = fav.binary.map(|b| if b { 1.0 - eps } else { eps });
    let multiclass = std::array::from_fn(|p| {
        let logits: Vec<f64> = (0..schema.multiclass[p].classes)
            .map(|k| if k == fav.multiclass[p] { 1.0 / cfg.tau_d } else { 0.0 })
            .collect();
        softmax(&logits)
    });
    let mut continuous = Vec::with_capacity(specs.len());
    for (m, spec) in specs.iter().enumerate() {
        let active = discretize(Some(fav.values[m]), spec)?.dist;
        if !spec.inactive_bin {
            continuous.push(active);
            continue;
        }
        let active_mass = if fav.active[m] { 1.0 - eps } else { eps };
        let mut w: Vec<f64> = active.weights().iter().map(|x| x * active_mass).collect();
        w[0] = 1.0 - active_mass;
        continuous.push(BinDistribution::from_unnormalized(w)?);
    }
    Ok(AttributePrediction {
        binary,
        multiclass,
        continuous,
    })
}

fn corrupt_with(
    gt: &SceneParams,
    schema: &AttributeSchema,
    specs: &[BinSpec],
    cfg: &NoiseConfig,
    rng: &mut SplitMix64,
) -> Result<AttributePrediction, NoiseError> {
    emit(&draw_favored(gt, schema, cfg, rng), schema, specs, cfg)
}

/// The favored states behind [`corrupt`] for the same inputs.
pub fn favored_states(gt: &SceneParams, schema: &AttributeSchema, cfg: &NoiseConfig) -> FavoredStates {
    draw_favored(gt, schema, cfg, &mut SplitMix64::new(split(cfg.seed, 0)))
}

/// One noisy prediction; identical to frame 0 of [`corrupt_sequence`].
pub fn corrupt(
    gt: &SceneParams,
    schema: &AttributeSchema,
    specs: &[BinSpec],
    cfg: &NoiseConfig,
) -> Result<AttributePrediction, NoiseError> {
    cfg.validate()?;
    corrupt_with(gt, schema, specs, cfg, &mut SplitMix64::new(split(cfg.seed, 0)))
}

/// `frames` independent corruptions of a static scene; frame `t` uses the
/// sub-seed `split(seed, t)`.
pub fn corrupt_sequence(
    gt: &SceneParams,
    frames: usize,
    schema: &AttributeSchema,
    specs: &[BinSpec],
    cfg: &NoiseConfig,
) -> Result<Vec<AttributePrediction>, NoiseError> {
    cfg.validate()?;
    (0..frames)
        .map(|t| corrupt_with(gt, schema, specs, cfg, &mut SplitMix64::new(split(cfg.seed, t as u64))))
        .collect()
}
