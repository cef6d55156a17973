use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use roadlayout::prediction::{AnnotationMask, AttributePrediction};
use roadlayout::probability::BinSpec;
use roadlayout::schema::{deserialize_scene, serialize_scene, AttributeSchema, SceneParams};
use serde::{Deserialize, Serialize};

/// Nonblank lines with their 1-based line numbers.
pub fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.to_string()))
        .collect())
}

pub fn read_scenes(path: &Path, schema: &AttributeSchema) -> Result<Vec<SceneParams>> {
    read_lines(path)?
        .into_iter()
        .map(|(n, l)| deserialize_scene(&l, schema).with_context(|| format!("{}:{n}: malformed scene record", path.display())))
        .collect()
}

pub fn read_predictions(path: &Path, schema: &AttributeSchema, specs: &[BinSpec]) -> Result<Vec<AttributePrediction>> {
    read_lines(path)?
        .into_iter()
        .map(|(n, l)| {
            AttributePrediction::from_json(&l, schema, specs)
                .with_context(|| format!("{}:{n}: malformed prediction record", path.display()))
        })
        .collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskRecord {
    unannotated: Vec<String>,
}

/// One mask per line; a single line is broadcast to `samples`.
pub fn read_masks(path: &Path, schema: &AttributeSchema, samples: usize) -> Result<Vec<AnnotationMask>> {
    let mut masks = Vec::new();
    for (n, l) in read_lines(path)? {
        let rec: MaskRecord = serde_json::from_str(&l).with_context(|| format!("{}:{n}: malformed mask record", path.display()))?;
        let mask = AnnotationMask::without(schema, &rec.unannotated).map_err(|e| anyhow::anyhow!("{}:{n}: {e}", path.display()))?;
        masks.push(mask);
    }
    match masks.len() {
        1 => Ok(vec![masks.remove(0); samples]),
        k if k == samples => Ok(masks),
        k => anyhow::bail!("{} has {k} masks for {samples} samples", path.display()),
    }
}

pub fn scenes_jsonl(scenes: &[SceneParams], schema: &AttributeSchema) -> Result<String> {
    let mut out = String::new();
    for s in scenes {
        out.push_str(&serialize_scene(s, schema)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, text)
}

/// `path` with `suffix` appended to its file name.
pub fn sidecar(path: &Path, suffix: &str) -> std::path::PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}
