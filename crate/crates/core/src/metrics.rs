//! Attribute accuracies, normalized MSE, rendered IoU and the semantic /
//! temporal consistency measures.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::Labeling;
use crate::prediction::AnnotationMask;
use crate::render::{render, RenderConfig, RenderError, SemanticTopView, CLASS_NAMES, NUM_CLASSES};
use crate::schema::{validate, AttributeSchema, SceneParams, NUM_ATTRIBUTES};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no samples to evaluate")]
    Empty,
    #[error("{preds} predictions but {gts} ground-truth records")]
    Length { preds: usize, gts: usize },
    #[error("sequence needs at least 2 frames, got {0}")]
    ShortSequence(usize),
    #[error("sample {index}: {source}")]
    Render { index: usize, source: RenderError },
}

fn check_lengths(preds: usize, gts: usize) -> Result<(), MetricsError> {
    if preds != gts {
        return Err(MetricsError::Length { preds, gts });
    }
    if preds == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Fraction of correct binaries per sample, averaged over samples.
pub fn accu_binary(preds: &[SceneParams], gts: &[SceneParams]) -> Result<f64, MetricsError> {
    check_lengths(preds.len(), gts.len())?;
    let sum: f64 = preds
        .iter()
        .zip(gts)
        .map(|(p, g)| {
            let hits = p.binary.iter().zip(&g.binary).filter(|(a, b)| a == b).count();
            hits as f64 / p.binary.len() as f64
        })
        .sum();
    Ok(sum / preds.len() as f64)
}

pub fn accu_multiclass(preds: &[SceneParams], gts: &[SceneParams]) -> Result<f64, MetricsError> {
    check_lengths(preds.len(), gts.len())?;
    let sum: f64 = preds
        .iter()
        .zip(gts)
        .map(|(p, g)| {
            let hits = p.multiclass.iter().zip(&g.multiclass).filter(|(a, b)| a == b).count();
            hits as f64 / p.multiclass.len() as f64
        })
        .sum();
    Ok(sum / preds.len() as f64)
}

/// Squared error of range-normalized values over the attributes active in
/// the ground truth, averaged per sample and then over samples. A predicted
/// inactive value where the ground truth is active counts as error 1.
pub fn mse_regression(preds: &[SceneParams], gts: &[SceneParams], schema: &AttributeSchema) -> Result<f64, MetricsError> {
    check_lengths(preds.len(), gts.len())?;
    let mut total = 0.0;
    for (p, g) in preds.iter().zip(gts) {
        let mut sum = 0.0;
        let mut active = 0usize;
        for (m, def) in schema.continuous.iter().enumerate() {
            let Some(truth) = g.continuous[m] else { continue };
            active += 1;
            sum += match p.continuous[m] {
                Some(v) => ((v - truth) / def.span()).powi(2),
                None => 1.0,
            };
        }
        if active > 0 {
            total += sum / active as f64;
        }
    }
    Ok(total / preds.len() as f64)
}

/// IoU of one rendered pair: per class over road, sidewalk, lane boundary
/// and crosswalk (`None` where the class is absent from both renders), and
/// their mean (1.0 when every class is absent).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IouResult {
    pub mean: f64,
    pub per_class: [Option<f64>; NUM_CLASSES - 1],
}

pub fn view_iou(pred: &SemanticTopView, gt: &SemanticTopView) -> IouResult {
    let mut inter = [0usize; NUM_CLASSES];
    let mut union = [0usize; NUM_CLASSES];
    for (&a, &b) in pred.grid().iter().zip(gt.grid()) {
        if a == b {
            inter[a as usize] += 1;
            union[a as usize] += 1;
        } else {
            union[a as usize] += 1;
            union[b as usize] += 1;
        }
    }
    let per_class: [Option<f64>; NUM_CLASSES - 1] =
        std::array::from_fn(|k| (union[k + 1] > 0).then(|| inter[k + 1] as f64 / union[k + 1] as f64));
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let mean = if present.is_empty() {
        1.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    IouResult { mean, per_class }
}

/// Ground truth augmented with predicted values for unannotated attributes.
pub fn augment(pred: &SceneParams, gt: &SceneParams, mask: &AnnotationMask) -> SceneParams {
    let mut out = gt.clone();
    for i in 0..out.binary.len() {
        if !mask.binary[i] {
            out.binary[i] = pred.binary[i];
        }
    }
    for p in 0..out.multiclass.len() {
        if !mask.multiclass[p] {
            out.multiclass[p] = pred.multiclass[p];
        }
    }
    for m in 0..out.continuous.len() {
        if !mask.continuous[m] {
            out.continuous[m] = pred.continuous[m];
        }
    }
    out
}

pub fn rendered_iou(
    pred: &SceneParams,
    gt: &SceneParams,
    mask: &AnnotationMask,
    schema: &AttributeSchema,
    cfg: &RenderConfig,
) -> Result<IouResult, RenderError> {
    let a = render(pred, schema, cfg)?;
    let b = render(&augment(pred, gt, mask), schema, cfg)?;
    Ok(view_iou(&a, &b))
}

/// Number of violated feasibility rules.
pub fn semantic_conflicts(params: &SceneParams, schema: &AttributeSchema) -> usize {
    validate(params, schema).len()
}

pub fn mean_semantic_conflicts(frames: &[SceneParams], schema: &AttributeSchema) -> Result<f64, MetricsError> {
    if frames.is_empty() {
        return Err(MetricsError::Empty);
    }
    let total: usize = frames.iter().map(|p| semantic_conflicts(p, schema)).sum();
    Ok(total as f64 / frames.len() as f64)
}

/// Label changes between consecutive frames, summed over attributes and
/// divided by the attribute count.
pub fn temporal_changes(seq: &[Labeling]) -> Result<f64, MetricsError> {
    if seq.len() < 2 {
        return Err(MetricsError::ShortSequence(seq.len()));
    }
    let mut changes = 0usize;
    for w in seq.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        changes += a.binary.iter().zip(&b.binary).filter(|(x, y)| x != y).count();
        changes += a.multiclass.iter().zip(&b.multiclass).filter(|(x, y)| x != y).count();
        changes += a.continuous.iter().zip(&b.continuous).filter(|(x, y)| x != y).count();
    }
    Ok(changes as f64 / NUM_ATTRIBUTES as f64)
}

pub fn mean_temporal_changes(seqs: &[Vec<Labeling>]) -> Result<f64, MetricsError> {
    if seqs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut total = 0.0;
    for s in seqs {
        total += temporal_changes(s)?;
    }
    Ok(total / seqs.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: usize,
    pub accu_binary: f64,
    pub accu_multiclass: f64,
    pub mse: f64,
    pub iou: f64,
    /// Mean over samples where the class appears in either render.
    pub iou_per_class: Vec<(String, Option<f64>)>,
    pub semantic_conflicts: f64,
    /// Only set for sequence evaluations.
    pub temporal_changes: Option<f64>,
}

impl MetricsReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str("Accu-Bi ↑  Accu-Mc ↑  MSE ↓     IoU ↑     seman. ↓  temp. ↓\n");
        let temp = self.temporal_changes.map_or("-".to_string(), |t| format!("{t:.4}"));
        out.push_str(&format!(
            "{:<10.4} {:<10.4} {:<9.4} {:<9.4} {:<9.4} {}\n",
            self.accu_binary, self.accu_multiclass, self.mse, self.iou, self.semantic_conflicts, temp
        ));
        out.push_str(&format!("samples: {}\n", self.samples));
        for (name, v) in &self.iou_per_class {
            let v = v.map_or("-".to_string(), |x| format!("{x:.4}"));
            out.push_str(&format!("  IoU {name}: {v}\n"));
        }
        out
    }
}

/// Accuracy, MSE, rendered IoU and semantic conflicts of decoded predictions
/// against ground truth. Predictions must be feasible for rendering.
pub fn evaluate(
    preds: &[SceneParams],
    gts: &[SceneParams],
    masks: Option<&[AnnotationMask]>,
    schema: &AttributeSchema,
    cfg: &RenderConfig,
) -> Result<MetricsReport, MetricsError> {
    check_lengths(preds.len(), gts.len())?;
    let full = AnnotationMask::all();
    let mut iou_sum = 0.0;
    let mut class_sum = [0.0; NUM_CLASSES - 1];
    let mut class_n = [0usize; NUM_CLASSES - 1];
    for (index, (p, g)) in preds.iter().zip(gts).enumerate() {
        let mask = masks.map_or(&full, |m| &m[index]);
        let r = rendered_iou(p, g, mask, schema, cfg).map_err(|source| MetricsError::Render { index, source })?;
        iou_sum += r.mean;
        for (k, v) in r.per_class.iter().enumerate() {
            if let Some(v) = v {
                class_sum[k] += v;
                class_n[k] += 1;
            }
        }
    }
    let n = preds.len() as f64;
    Ok(MetricsReport {
        samples: preds.len(),
        accu_binary: accu_binary(preds, gts)?,
        accu_multiclass: accu_multiclass(preds, gts)?,
        mse: mse_regression(preds, gts, schema)?,
        iou: iou_sum / n,
        iou_per_class: (0..NUM_CLASSES - 1)
            .map(|k| {
                let v = (class_n[k] > 0).then(|| class_sum[k] / class_n[k] as f64);
                (CLASS_NAMES[k + 1].to_string(), v)
            })
            .collect(),
        semantic_conflicts: mean_semantic_conflicts(preds, schema)?,
        temporal_changes: None,
    })
}
