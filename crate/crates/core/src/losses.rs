//! Supervised attribute losses: binary cross-entropy, categorical
//! cross-entropy and an l1 distance between bin distributions, mixed over
//! a real and a simulated domain.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prediction::{AnnotationMask, AttributePrediction, PredictionError};
use crate::probability::{discretize, BinSpec, ProbabilityError};
use crate::schema::{AttributeSchema, SceneParams};

/// Probabilities are floored here before taking logs.
pub const LOG_FLOOR: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error(transparent)]
    Prediction(#[from] PredictionError),
    #[error("target discretization failed: {0}")]
    Target(#[from] ProbabilityError),
    #[error("batch has {preds} predictions, {gts} targets and {masks} masks")]
    Length { preds: usize, gts: usize, masks: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainLoss {
    pub bce: f64,
    pub ce: f64,
    pub l1: f64,
    pub samples: usize,
}

impl DomainLoss {
    pub fn total(&self) -> f64 {
        self.bce + self.ce + self.l1
    }
}

fn nll(p: f64) -> f64 {
    -p.max(LOG_FLOOR).ln()
}

/// Loss of one sample, summed over annotated attributes.
pub fn sample_loss(
    pred: &AttributePrediction,
    gt: &SceneParams,
    mask: &AnnotationMask,
    schema: &AttributeSchema,
    specs: &[BinSpec],
) -> Result<DomainLoss, LossError> {
    pred.validate(schema, specs)?;
    let mut loss = DomainLoss {
        samples: 1,
        ..DomainLoss::default()
    };
    for i in 0..pred.binary.len() {
        if mask.binary[i] {
            let p = pred.binary[i];
            loss.bce += nll(if gt.binary[i] { p } else { 1.0 - p });
        }
    }
    for (p, dist) in pred.multiclass.iter().enumerate() {
        if mask.multiclass[p] {
            loss.ce += nll(dist[gt.multiclass[p] as usize]);
        }
    }
    for (m, dist) in pred.continuous.iter().enumerate() {
        if mask.continuous[m] {
            let target = discretize(gt.continuous[m], &specs[m])?.dist;
            loss.l1 += dist
                .weights()
                .iter()
                .zip(target.weights())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
        }
    }
    Ok(loss)
}

/// Per-sample losses averaged over a batch; an empty batch has zero loss.
pub fn domain_loss(
    preds: &[AttributePrediction],
    gts: &[SceneParams],
    masks: &[AnnotationMask],
    schema: &AttributeSchema,
    specs: &[BinSpec],
) -> Result<DomainLoss, LossError> {
    if preds.len() != gts.len() || preds.len() != masks.len() {
        return Err(LossError::Length {
            preds: preds.len(),
            gts: gts.len(),
            masks: masks.len(),
        });
    }
    let mut sum = DomainLoss::default();
    for ((p, g), m) in preds.iter().zip(gts).zip(masks) {
        let l = sample_loss(p, g, m, schema, specs)?;
        sum.bce += l.bce;
        sum.ce += l.ce;
        sum.l1 += l.l1;
    }
    let n = preds.len();
    if n > 0 {
        let k = n as f64;
        sum.bce /= k;
        sum.ce /= k;
        sum.l1 /= k;
    }
    sum.samples = n;
    Ok(sum)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainWeights {
    pub lambda_real: f64,
    pub lambda_sim: f64,
}

impl Default for DomainWeights {
    fn default() -> Self {
        DomainWeights {
            lambda_real: 1.0,
            lambda_sim: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub real: DomainLoss,
    pub sim: DomainLoss,
    pub weights: DomainWeights,
    /// Domain-weighted component sums.
    pub bce_total: f64,
    pub ce_total: f64,
    pub l1_total: f64,
    /// `lambda_real * real.total() + lambda_sim * sim.total()`.
    pub combined: f64,
}

pub fn combine(real: DomainLoss, sim: DomainLoss, weights: DomainWeights) -> LossBreakdown {
    let DomainWeights { lambda_real, lambda_sim } = weights;
    LossBreakdown {
        real,
        sim,
        weights,
        bce_total: lambda_real * real.bce + lambda_sim * sim.bce,
        ce_total: lambda_real * real.ce + lambda_sim * sim.ce,
        l1_total: lambda_real * real.l1 + lambda_sim * sim.l1,
        combined: lambda_real * real.total() + lambda_sim * sim.total(),
    }
}

/// A batch of predictions with their targets and annotation masks.
pub struct LossBatch<'a> {
    pub preds: &'a [AttributePrediction],
    pub gts: &'a [SceneParams],
    pub masks: &'a [AnnotationMask],
}

pub fn supervised_loss(
    real: &LossBatch<'_>,
    sim: &LossBatch<'_>,
    weights: DomainWeights,
    schema: &AttributeSchema,
    specs: &[BinSpec],
) -> Result<LossBreakdown, LossError> {
    let r = domain_loss(real.preds, real.gts, real.masks, schema, specs)?;
    let s = domain_loss(sim.preds, sim.gts, sim.masks, schema, specs)?;
    Ok(combine(r, s, weights))
}
