//! JSONL scene records: one object per line, keys in schema order, inactive
//! continuous attributes written as `null`.

use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use super::{AttributeRef, AttributeSchema, SceneParams, NUM_BINARY, NUM_CONTINUOUS, NUM_MULTICLASS};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum RecordError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("record is not a JSON object")]
    NotAnObject,
    #[error("unsupported schema_version {0}")]
    SchemaVersion(String),
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("field `{field}` must be {expected}")]
    WrongType { field: String, expected: &'static str },
    #[error("field `{field}` out of range: {value}")]
    OutOfRange { field: String, value: String },
    #[error("field `{0}` is not a finite number")]
    NonFinite(String),
}

struct Record<'a> {
    params: &'a SceneParams,
    schema: &'a AttributeSchema,
}

impl Serialize for Record<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(1 + NUM_BINARY + NUM_MULTICLASS + NUM_CONTINUOUS))?;
        map.serialize_entry("schema_version", &SCHEMA_VERSION)?;
        for (def, v) in self.schema.binary.iter().zip(&self.params.binary) {
            map.serialize_entry(&def.name, v)?;
        }
        for (def, v) in self.schema.multiclass.iter().zip(&self.params.multiclass) {
            map.serialize_entry(&def.name, v)?;
        }
        for (def, v) in self.schema.continuous.iter().zip(&self.params.continuous) {
            map.serialize_entry(&def.name, v)?;
        }
        map.end()
    }
}

/// Serializes one scene as a single JSON line (no trailing newline).
pub fn serialize_scene(params: &SceneParams, schema: &AttributeSchema) -> Result<String, RecordError> {
    for (def, v) in schema.continuous.iter().zip(&params.continuous) {
        if let Some(x) = v {
            if !x.is_finite() {
                return Err(RecordError::NonFinite(def.name.clone()));
            }
        }
    }
    serde_json::to_string(&Record { params, schema }).map_err(|e| RecordError::Json(e.to_string()))
}

/// Parses one scene record. Checks field names, types, lane-count domains
/// and continuous ranges; cross-attribute feasibility is left to
/// [`super::validate`].
pub fn deserialize_scene(line: &str, schema: &AttributeSchema) -> Result<SceneParams, RecordError> {
    let value: Value = serde_json::from_str(line).map_err(|e| RecordError::Json(e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(RecordError::NotAnObject);
    };

    let mut binary = [None; NUM_BINARY];
    let mut multiclass = [None; NUM_MULTICLASS];
    let mut continuous: [Option<Option<f64>>; NUM_CONTINUOUS] = [None; NUM_CONTINUOUS];
    let mut version_seen = false;

    for (key, v) in &obj {
        if key == "schema_version" {
            if v.as_u64() != Some(SCHEMA_VERSION) {
                return Err(RecordError::SchemaVersion(v.to_string()));
            }
            version_seen = true;
            continue;
        }
        match schema.lookup(key) {
            None => return Err(RecordError::UnknownField(key.clone())),
            Some(AttributeRef::Binary(i)) => {
                binary[i] = Some(v.as_bool().ok_or_else(|| RecordError::WrongType {
                    field: key.clone(),
                    expected: "a boolean",
                })?);
            }
            Some(AttributeRef::Multiclass(p)) => {
                let n = v.as_u64().ok_or_else(|| RecordError::WrongType {
                    field: key.clone(),
                    expected: "a nonnegative integer",
                })?;
                if n >= u64::from(schema.multiclass[p].classes) {
                    return Err(RecordError::OutOfRange {
                        field: key.clone(),
                        value: n.to_string(),
                    });
                }
                multiclass[p] = Some(n as u8);
            }
            Some(AttributeRef::Continuous(m)) => {
                let parsed = match v {
                    Value::Null => None,
                    Value::Number(num) => {
                        let x = num.as_f64().ok_or_else(|| RecordError::NonFinite(key.clone()))?;
                        if !schema.continuous[m].contains(x) {
                            return Err(RecordError::OutOfRange {
                                field: key.clone(),
                                value: num.to_string(),
                            });
                        }
                        Some(x)
                    }
                    _ => {
                        return Err(RecordError::WrongType {
                            field: key.clone(),
                            expected: "a number or null",
                        })
                    }
                };
                continuous[m] = Some(parsed);
            }
        }
    }

    if !version_seen {
        return Err(RecordError::MissingField("schema_version".into()));
    }
    let missing = |attr: AttributeRef| RecordError::MissingField(schema.name(attr).to_string());
    let mut params = SceneParams {
        binary: [false; NUM_BINARY],
        multiclass: [0; NUM_MULTICLASS],
        continuous: [None; NUM_CONTINUOUS],
    };
    for (i, v) in binary.iter().enumerate() {
        params.binary[i] = v.ok_or_else(|| missing(AttributeRef::Binary(i)))?;
    }
    for (p, v) in multiclass.iter().enumerate() {
        params.multiclass[p] = v.ok_or_else(|| missing(AttributeRef::Multiclass(p)))?;
    }
    for (m, v) in continuous.iter().enumerate() {
        params.continuous[m] = v.ok_or_else(|| missing(AttributeRef::Continuous(m)))?;
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{bin, cont, default_schema, mc};

    fn scene() -> SceneParams {
        let mut s = SceneParams::minimal(3.25);
        s.binary[bin::MAIN_ROAD_CURVED] = true;
        s.continuous[cont::CURVATURE] = Some(-0.0123456789);
        s
    }

    #[test]
    fn canonical_key_order() {
        let schema = default_schema();
        let line = serialize_scene(&scene(), &schema).unwrap();
        assert!(line.starts_with("{\"schema_version\":1,\"side_road_left\":false,"));
        assert!(line.ends_with("\"curvature\":-0.0123456789}"));
        assert!(line.contains("\"dist_side_road_left\":null"));
        assert!(!line.contains('\n'));
    }

    #[test]
    fn round_trip() {
        let schema = default_schema();
        let line = serialize_scene(&scene(), &schema).unwrap();
        let back = deserialize_scene(&line, &schema).unwrap();
        assert_eq!(back, scene());
        assert_eq!(serialize_scene(&back, &schema).unwrap(), line);
    }

    #[test]
    fn missing_binary_field_is_named() {
        let schema = default_schema();
        let line = serialize_scene(&scene(), &schema).unwrap();
        let line = line.replace("\"crosswalk_far\":false,", "");
        assert_eq!(
            deserialize_scene(&line, &schema),
            Err(RecordError::MissingField("crosswalk_far".into()))
        );
    }

    #[test]
    fn lane_count_out_of_domain() {
        let schema = default_schema();
        let mut s = scene();
        s.multiclass[mc::LANES_LEFT] = 7;
        let line = serialize_scene(&s, &schema).unwrap();
        assert_eq!(
            deserialize_scene(&line, &schema),
            Err(RecordError::OutOfRange {
                field: "lanes_left_count".into(),
                value: "7".into()
            })
        );
    }

    #[test]
    fn other_parse_errors() {
        let schema = default_schema();
        let line = serialize_scene(&scene(), &schema).unwrap();
        let extra = line.replacen('{', "{\"rotation\":0.1,", 1);
        assert_eq!(
            deserialize_scene(&extra, &schema),
            Err(RecordError::UnknownField("rotation".into()))
        );
        let bad_type = line.replace("\"oneway_main\":true", "\"oneway_main\":1");
        assert!(matches!(
            deserialize_scene(&bad_type, &schema),
            Err(RecordError::WrongType { field, .. }) if field == "oneway_main"
        ));
        let out = line.replace("\"ego_lane_width\":3.25", "\"ego_lane_width\":9.0");
        assert!(matches!(
            deserialize_scene(&out, &schema),
            Err(RecordError::OutOfRange { field, .. }) if field == "ego_lane_width"
        ));
        let v2 = line.replace("\"schema_version\":1", "\"schema_version\":2");
        assert!(matches!(deserialize_scene(&v2, &schema), Err(RecordError::SchemaVersion(_))));
        assert_eq!(deserialize_scene("[1,2]", &schema), Err(RecordError::NotAnObject));
        assert!(matches!(deserialize_scene("{", &schema), Err(RecordError::Json(_))));
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let schema = default_schema();
        let mut s = scene();
        s.continuous[cont::EGO_LANE_WIDTH] = Some(f64::INFINITY);
        assert_eq!(
            serialize_scene(&s, &schema),
            Err(RecordError::NonFinite("ego_lane_width".into()))
        );
    }
}
