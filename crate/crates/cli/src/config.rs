use std::path::Path;

use anyhow::{bail, Context, Result};
use roadlayout::crf::CrfConfig;
use roadlayout::inference::SolverConfig;
use roadlayout::noise::NoiseConfig;
use roadlayout::render::RenderConfig;
use roadlayout::sampler::PriorConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Co-occurrence estimation used by `infer`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CooccurrenceConfig {
    pub samples: usize,
    pub seed: u64,
}

impl Default for CooccurrenceConfig {
    fn default() -> Self {
        CooccurrenceConfig { samples: 10_000, seed: 0 }
    }
}

/// Every tunable of the pipeline. Files override individual keys of the
/// defaults, e.g. `prior.side_road_left = 0.3`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub prior: PriorConfig,
    pub render: RenderConfig,
    pub noise: NoiseConfig,
    pub crf: CrfConfig,
    pub solver: SolverConfig,
    pub cooccurrence: CooccurrenceConfig,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let overrides: toml::Table = toml::from_str(text)?;
        let overrides = serde_json::to_value(overrides)?;
        let mut base = serde_json::to_value(Config::default())?;
        merge(&mut base, overrides, "")?;
        let cfg: Config = serde_json::from_value(base)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        self.render.validate()?;
        self.noise.validate()?;
        if !(self.crf.penalty > 0.0 && self.crf.penalty.is_finite()) {
            bail!("crf.penalty must be positive");
        }
        let t = &self.crf.temporal;
        if [t.lambda_disc, t.lambda_cont, t.tau].iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            bail!("crf.temporal weights must be nonnegative");
        }
        if self.cooccurrence.samples == 0 {
            bail!("cooccurrence.samples must be positive");
        }
        Ok(())
    }
}

fn merge(base: &mut Value, overrides: Value, prefix: &str) -> Result<()> {
    match (base, overrides) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                // tagged enums are replaced whole so stale variant fields do not linger
                if v.get("kind").is_some() {
                    if !b.contains_key(&k) {
                        bail!("unknown config key `{k}`");
                    }
                    b.insert(k, v);
                    continue;
                }
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &key)?,
                    None => bail!("unknown config key `{key}`"),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
    }

    #[test]
    fn dotted_keys_override_one_field() {
        let cfg = Config::from_toml("prior.side_road_left = 0.7\nprior.lane_width.mean = 3.0\n[noise]\nepsilon = 0.0\n").unwrap();
        assert_eq!(cfg.prior.side_road_left, 0.7);
        assert_eq!(cfg.prior.lane_width.mean, 3.0);
        assert_eq!(cfg.prior.lane_width.std, PriorConfig::default().lane_width.std);
        assert_eq!(cfg.noise.epsilon, 0.0);
        assert_eq!(cfg.render, RenderConfig::default());
    }

    #[test]
    fn unknown_and_invalid_keys_rejected() {
        let err = Config::from_toml("prior.side_raod_left = 0.3").unwrap_err();
        assert!(err.to_string().contains("prior.side_raod_left"));
        assert!(Config::from_toml("prior.side_road_left = 1.5").is_err());
        assert!(Config::from_toml("noise.epsilon = \"high\"").is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let cfg = Config::from_toml("crf.pairwise = \"joint_probability\"\nsolver.restarts = 3").unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<Config>(&json).unwrap(), cfg);
    }

    #[test]
    fn tagged_enum_replaced_whole() {
        let cfg = Config::from_toml("solver.fill = { kind = \"icm\" }").unwrap();
        assert_eq!(cfg.solver.fill, roadlayout::inference::Fill::Icm);
    }
}
