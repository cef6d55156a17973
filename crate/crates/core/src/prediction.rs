//! Per-attribute probability outputs and annotation masks.
//!
//! Prediction records are JSONL:
//! `{"schema_version":1,"binary":[14],"multiclass":[[7],[7]],"continuous":[[..] x 22]}`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::{cont_bin, Labeling};
use crate::probability::{decode_expectation, discretize, BinDistribution, BinSpec, ProbabilityError, NORMALIZATION_TOLERANCE};
use crate::schema::{
    AttributeRef, AttributeSchema, SceneParams, SCHEMA_VERSION, NUM_BINARY, NUM_CONTINUOUS, NUM_MULTICLASS,
};

#[derive(Debug, Error, PartialEq)]
pub enum PredictionError {
    #[error("malformed prediction record: {0}")]
    Json(String),
    #[error("unsupported schema_version {0}")]
    SchemaVersion(u64),
    #[error("`{field}` has {found} entries, expected {expected}")]
    Length {
        field: String,
        expected: usize,
        found: usize,
    },
    #[error("`{0}` is not a probability")]
    Probability(String),
    #[error("`{0}` does not sum to 1")]
    NotNormalized(String),
    #[error("`{field}`: {source}")]
    Discretize { field: String, source: ProbabilityError },
}

/// Probabilities for every attribute: `P(true)` per binary, a class
/// distribution per lane count, a bin distribution per continuous attribute.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributePrediction {
    pub binary: [f64; NUM_BINARY],
    pub multiclass: [Vec<f64>; NUM_MULTICLASS],
    pub continuous: Vec<BinDistribution>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionRecord {
    schema_version: u64,
    binary: Vec<f64>,
    multiclass: Vec<Vec<f64>>,
    continuous: Vec<BinDistribution>,
}

fn is_probability(p: f64) -> bool {
    p.is_finite() && (0.0..=1.0).contains(&p)
}

impl AttributePrediction {
    /// The soft target of a scene: one-hot discrete attributes and
    /// discretized continuous values.
    pub fn from_scene(params: &SceneParams, schema: &AttributeSchema, specs: &[BinSpec]) -> Result<Self, PredictionError> {
        let mut binary = [0.0; NUM_BINARY];
        for (p, &b) in binary.iter_mut().zip(&params.binary) {
            *p = if b { 1.0 } else { 0.0 };
        }
        let multiclass = std::array::from_fn(|p| {
            let mut v = vec![0.0; schema.multiclass[p].classes as usize];
            v[params.multiclass[p] as usize] = 1.0;
            v
        });
        let continuous = params
            .continuous
            .iter()
            .zip(specs)
            .enumerate()
            .map(|(m, (v, spec))| {
                discretize(*v, spec).map(|d| d.dist).map_err(|source| PredictionError::Discretize {
                    field: schema.name(AttributeRef::Continuous(m)).to_string(),
                    source,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(AttributePrediction {
            binary,
            multiclass,
            continuous,
        })
    }

    pub fn validate(&self, schema: &AttributeSchema, specs: &[BinSpec]) -> Result<(), PredictionError> {
        for (i, &p) in self.binary.iter().enumerate() {
            if !is_probability(p) {
                return Err(PredictionError::Probability(schema.binary[i].name.clone()));
            }
        }
        for (p, dist) in self.multiclass.iter().enumerate() {
            let name = &schema.multiclass[p].name;
            let classes = schema.multiclass[p].classes as usize;
            if dist.len() != classes {
                return Err(PredictionError::Length {
                    field: name.clone(),
                    expected: classes,
                    found: dist.len(),
                });
            }
            if !dist.iter().all(|&q| is_probability(q)) {
                return Err(PredictionError::Probability(name.clone()));
            }
            if (dist.iter().sum::<f64>() - 1.0).abs() > NORMALIZATION_TOLERANCE {
                return Err(PredictionError::NotNormalized(name.clone()));
            }
        }
        if self.continuous.len() != NUM_CONTINUOUS {
            return Err(PredictionError::Length {
                field: "continuous".into(),
                expected: NUM_CONTINUOUS,
                found: self.continuous.len(),
            });
        }
        for (m, (dist, spec)) in self.continuous.iter().zip(specs).enumerate() {
            if dist.len() != spec.labels() {
                return Err(PredictionError::Length {
                    field: schema.continuous[m].name.clone(),
                    expected: spec.labels(),
                    found: dist.len(),
                });
            }
        }
        Ok(())
    }

    /// Most probable label of every attribute (`P(true) > 0.5` for binaries,
    /// lowest index on ties elsewhere).
    pub fn argmax_labeling(&self, specs: &[BinSpec]) -> Labeling {
        Labeling {
            binary: self.binary.map(|p| p > 0.5),
            multiclass: std::array::from_fn(|p| crate::probability::argmax(&self.multiclass[p]) as u8),
            continuous: std::array::from_fn(|m| cont_bin(self.continuous[m].argmax(), &specs[m])),
        }
    }

    /// Hard decode: argmax for discrete attributes, expectation for
    /// continuous ones.
    pub fn decode_scene(&self, specs: &[BinSpec]) -> SceneParams {
        SceneParams {
            binary: self.binary.map(|p| p > 0.5),
            multiclass: std::array::from_fn(|p| crate::probability::argmax(&self.multiclass[p]) as u8),
            continuous: std::array::from_fn(|m| decode_expectation(&self.continuous[m], &specs[m])),
        }
    }

    pub fn to_json(&self) -> String {
        let record = PredictionRecord {
            schema_version: SCHEMA_VERSION,
            binary: self.binary.to_vec(),
            multiclass: self.multiclass.to_vec(),
            continuous: self.continuous.clone(),
        };
        serde_json::to_string(&record).expect("prediction records serialize")
    }

    pub fn from_json(line: &str, schema: &AttributeSchema, specs: &[BinSpec]) -> Result<Self, PredictionError> {
        let record: PredictionRecord = serde_json::from_str(line).map_err(|e| PredictionError::Json(e.to_string()))?;
        if record.schema_version != SCHEMA_VERSION {
            return Err(PredictionError::SchemaVersion(record.schema_version));
        }
        let binary: [f64; NUM_BINARY] = record.binary.try_into().map_err(|v: Vec<f64>| PredictionError::Length {
            field: "binary".into(),
            expected: NUM_BINARY,
            found: v.len(),
        })?;
        let multiclass: [Vec<f64>; NUM_MULTICLASS] =
            record.multiclass.try_into().map_err(|v: Vec<Vec<f64>>| PredictionError::Length {
                field: "multiclass".into(),
                expected: NUM_MULTICLASS,
                found: v.len(),
            })?;
        let pred = AttributePrediction {
            binary,
            multiclass,
            continuous: record.continuous,
        };
        pred.validate(schema, specs)?;
        Ok(pred)
    }
}

/// Which attributes carry a ground-truth annotation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationMask {
    pub binary: [bool; NUM_BINARY],
    pub multiclass: [bool; NUM_MULTICLASS],
    pub continuous: [bool; NUM_CONTINUOUS],
}

impl AnnotationMask {
    pub fn all() -> Self {
        AnnotationMask {
            binary: [true; NUM_BINARY],
            multiclass: [true; NUM_MULTICLASS],
            continuous: [true; NUM_CONTINUOUS],
        }
    }

    pub fn none() -> Self {
        AnnotationMask {
            binary: [false; NUM_BINARY],
            multiclass: [false; NUM_MULTICLASS],
            continuous: [false; NUM_CONTINUOUS],
        }
    }

    pub fn get(&self, attr: AttributeRef) -> bool {
        match attr {
            AttributeRef::Binary(i) => self.binary[i],
            AttributeRef::Multiclass(p) => self.multiclass[p],
            AttributeRef::Continuous(m) => self.continuous[m],
        }
    }

    pub fn set(&mut self, attr: AttributeRef, annotated: bool) {
        match attr {
            AttributeRef::Binary(i) => self.binary[i] = annotated,
            AttributeRef::Multiclass(p) => self.multiclass[p] = annotated,
            AttributeRef::Continuous(m) => self.continuous[m] = annotated,
        }
    }

    /// Full mask with the named attributes switched off.
    pub fn without(schema: &AttributeSchema, names: &[String]) -> Result<Self, String> {
        let mut mask = Self::all();
        for name in names {
            let attr = schema.lookup(name).ok_or_else(|| format!("unknown attribute `{name}`"))?;
            mask.set(attr, false);
        }
        Ok(mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probability::{bin_specs, BinningConfig};
    use crate::sampler::{sample_scene, PriorConfig};
    use crate::schema::default_schema;

    #[test]
    fn json_round_trip() {
        let schema = default_schema();
        let specs = bin_specs(&schema, &BinningConfig::default());
        let p = sample_scene(&PriorConfig::default(), 3);
        let pred = AttributePrediction::from_scene(&p, &schema, &specs).unwrap();
        let line = pred.to_json();
        assert!(line.starts_with("{\"schema_version\":1,\"binary\":["));
        let back = AttributePrediction::from_json(&line, &schema, &specs).unwrap();
        assert_eq!(back, pred);
        assert_eq!(back.argmax_labeling(&specs), Labeling::from_scene(&p, &specs));
    }

    #[test]
    fn invalid_records() {
        let schema = default_schema();
        let specs = bin_specs(&schema, &BinningConfig::default());
        let p = sample_scene(&PriorConfig::default(), 3);
        let mut pred = AttributePrediction::from_scene(&p, &schema, &specs).unwrap();
        pred.binary[4] = 1.5;
        assert_eq!(
            AttributePrediction::from_json(&pred.to_json(), &schema, &specs),
            Err(PredictionError::Probability("crosswalk_far".into()))
        );
        pred.binary[4] = 0.0;
        pred.multiclass[1] = vec![1.0];
        assert!(matches!(
            AttributePrediction::from_json(&pred.to_json(), &schema, &specs),
            Err(PredictionError::Length { expected: 7, found: 1, .. })
        ));
        assert!(matches!(
            AttributePrediction::from_json("{\"schema_version\":1}", &schema, &specs),
            Err(PredictionError::Json(_))
        ));
    }

    #[test]
    fn mask_by_name() {
        let schema = default_schema();
        let mask = AnnotationMask::without(&schema, &["curvature".to_string()]).unwrap();
        assert!(!mask.continuous[crate::schema::cont::CURVATURE]);
        assert!(AnnotationMask::without(&schema, &["nope".to_string()]).is_err());
    }
}
