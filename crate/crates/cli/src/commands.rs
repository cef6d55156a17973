use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::Parser;
use rayon::prelude::*;
use roadlayout::crf::{build_energy, EnergyModel};
use roadlayout::inference::{minimize_energy, minimize_temporal, unary_argmin, SolveReport, SolverConfig};
use roadlayout::labeling::Labeling;
use roadlayout::metrics::{evaluate, mean_semantic_conflicts, mean_temporal_changes};
use roadlayout::noise::{corrupt_sequence, NoiseConfig};
use roadlayout::prediction::AttributePrediction;
use roadlayout::probability::{bin_specs, BinSpec};
use roadlayout::render::render;
use roadlayout::sampler::{prior_cooccurrence, sample_scene, scene_seed};
use roadlayout::schema::{default_schema, validate, AttributeSchema, SceneParams};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::io::{read_masks, read_predictions, read_scenes, scenes_jsonl, sidecar, write, write_json};
use crate::manifest::RunManifest;
use crate::{Cli, Command, Format, Mode};

struct Run {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    seed: Option<u64>,
    manifest: PathBuf,
}

/// Executes `command`; with `args` set, also records a manifest.
pub fn run(command: &Command, config: &Config, args: Option<&[String]>) -> Result<()> {
    let start = Instant::now();
    let schema = default_schema();
    let specs = bin_specs(&schema, &config.crf.binning);
    let run = match command {
        Command::Generate { n, seed, out, render, .. } => generate(*n, *seed, out, *render, config, &schema)?,
        Command::Render { input, out, raw, .. } => render_files(input, out, *raw, config, &schema)?,
        Command::Corrupt { input, seed, out, frames, .. } => corrupt(input, *seed, out, *frames, config, &schema, &specs)?,
        Command::Infer { input, out, mode, seed, .. } => infer(input, out, *mode, *seed, config, &schema, &specs)?,
        Command::Eval { pred, gt, mask, out, format, .. } => eval(pred, gt, mask.as_deref(), out, *format, config, &schema)?,
        Command::Consistency { input, out, format, .. } => consistency(input, out, *format, &schema, &specs)?,
        Command::Replay { .. } => bail!("replay cannot be nested"),
    };
    if let Some(args) = args {
        let manifest = RunManifest {
            command: args.first().cloned().unwrap_or_default(),
            args: args.to_vec(),
            cwd: std::env::current_dir()?,
            config: config.clone(),
            seed: run.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: run.inputs,
            outputs: run.outputs,
            duration_ms: start.elapsed().as_millis(),
        };
        write_json(&run.manifest, &manifest)?;
    }
    Ok(())
}

pub fn replay(path: &Path) -> Result<()> {
    let manifest = RunManifest::read(path)?;
    std::env::set_current_dir(&manifest.cwd).with_context(|| format!("entering {}", manifest.cwd.display()))?;
    let cli = Cli::try_parse_from(std::iter::once("roadlayout".to_string()).chain(manifest.args.iter().cloned()))
        .context("manifest arguments do not parse")?;
    if matches!(cli.command, Command::Replay { .. }) {
        bail!("replay cannot be nested");
    }
    manifest.config.validate()?;
    run(&cli.command, &manifest.config, None)
}

fn generate(n: usize, seed: u64, out: &Path, with_render: bool, config: &Config, schema: &AttributeSchema) -> Result<Run> {
    let scenes: Vec<SceneParams> = (0..n as u64).into_par_iter().map(|i| sample_scene(&config.prior, scene_seed(seed, i))).collect();
    for (i, s) in scenes.iter().enumerate() {
        let report = validate(s, schema);
        ensure!(report.is_feasible(), "scene {i} violates {:?}", report.ids());
    }
    let params = out.join("params.jsonl");
    write(&params, scenes_jsonl(&scenes, schema)?)?;
    let mut outputs = vec![params];
    if with_render {
        let dir = out.join("renders");
        write_renders(&scenes, &dir, false, config, schema)?;
        outputs.push(dir);
    }
    Ok(Run {
        inputs: vec![],
        outputs,
        seed: Some(seed),
        manifest: out.join("manifest.json"),
    })
}

fn write_renders(scenes: &[SceneParams], dir: &Path, raw: bool, config: &Config, schema: &AttributeSchema) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    scenes.par_iter().enumerate().try_for_each(|(i, s)| -> Result<()> {
        let view = render(s, schema, &config.render).with_context(|| format!("rendering scene {i}"))?;
        let path = dir.join(format!("{i:06}.{}", if raw { "bev" } else { "png" }));
        let file = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        if raw {
            view.write_raw(file)?;
        } else {
            view.write_png(file)?;
        }
        Ok(())
    })
}

fn render_files(input: &Path, out: &Path, raw: bool, config: &Config, schema: &AttributeSchema) -> Result<Run> {
    let scenes = read_scenes(input, schema)?;
    write_renders(&scenes, out, raw, config, schema)?;
    Ok(Run {
        inputs: vec![input.to_path_buf()],
        outputs: vec![out.to_path_buf()],
        seed: None,
        manifest: out.join("manifest.json"),
    })
}

fn corrupt(
    input: &Path,
    seed: u64,
    out: &Path,
    frames: usize,
    config: &Config,
    schema: &AttributeSchema,
    specs: &[BinSpec],
) -> Result<Run> {
    ensure!(frames >= 1, "--frames must be at least 1");
    let scenes = read_scenes(input, schema)?;
    let preds: Vec<Vec<AttributePrediction>> = scenes
        .par_iter()
        .enumerate()
        .map(|(i, gt)| {
            let cfg = NoiseConfig {
                seed: scene_seed(seed, i as u64),
                ..config.noise
            };
            corrupt_sequence(gt, frames, schema, specs, &cfg).with_context(|| format!("corrupting scene {i}"))
        })
        .collect::<Result<_>>()?;
    let mut text = String::new();
    for p in preds.iter().flatten() {
        text.push_str(&p.to_json());
        text.push('\n');
    }
    write(out, text)?;
    Ok(Run {
        inputs: vec![input.to_path_buf()],
        outputs: vec![out.to_path_buf()],
        seed: Some(seed),
        manifest: sidecar(out, ".manifest.json"),
    })
}

/// Energy and solver statistics written next to inferred scenes.
#[derive(Debug, Serialize, Deserialize)]
pub struct Diagnostics {
    pub mode: String,
    pub frames: usize,
    pub initial_energy: f64,
    pub final_energy: f64,
    /// Temporal sweeps performed; 0 in single mode.
    pub temporal_passes: usize,
    pub per_frame: Vec<SolveReport>,
}

fn infer(
    input: &Path,
    out: &Path,
    mode: Mode,
    seed: Option<u64>,
    config: &Config,
    schema: &AttributeSchema,
    specs: &[BinSpec],
) -> Result<Run> {
    let preds = read_predictions(input, schema, specs)?;
    ensure!(!preds.is_empty(), "{} holds no predictions", input.display());
    let cooc = prior_cooccurrence(&config.prior, config.cooccurrence.seed, config.cooccurrence.samples);
    let solver = SolverConfig {
        seed: seed.unwrap_or(config.solver.seed),
        ..config.solver
    };
    let (labelings, diagnostics) = match mode {
        Mode::Single => {
            let sols: Vec<_> = preds
                .par_iter()
                .enumerate()
                .map(|(i, p)| -> Result<_> {
                    let model = build_energy(std::slice::from_ref(p), &cooc, schema, &config.crf).with_context(|| format!("frame {i}"))?;
                    let init = unary_argmin(&model, 0);
                    Ok(minimize_energy(&model, &init, &solver).with_context(|| format!("frame {i}"))?)
                })
                .collect::<Result<_>>()?;
            let per_frame: Vec<SolveReport> = sols.iter().map(|s| s.report).collect();
            let diag = Diagnostics {
                mode: "single".into(),
                frames: preds.len(),
                initial_energy: per_frame.iter().map(|r| r.initial_energy).sum(),
                final_energy: per_frame.iter().map(|r| r.final_energy).sum(),
                temporal_passes: 0,
                per_frame,
            };
            (sols.into_iter().map(|s| s.labeling).collect::<Vec<_>>(), diag)
        }
        Mode::Temporal => {
            let model: EnergyModel = build_energy(&preds, &cooc, schema, &config.crf)?;
            let sol = minimize_temporal(&model, &solver)?;
            let diag = Diagnostics {
                mode: "temporal".into(),
                frames: preds.len(),
                initial_energy: sol.report.initial_energy,
                final_energy: sol.report.final_energy,
                temporal_passes: sol.report.passes,
                per_frame: sol.report.frames.clone(),
            };
            (sol.labelings, diag)
        }
    };
    let scenes: Vec<SceneParams> = labelings.iter().map(|l| l.to_scene(specs)).collect();
    write(out, scenes_jsonl(&scenes, schema)?)?;
    let diag_path = sidecar(out, ".diagnostics.json");
    write_json(&diag_path, &diagnostics)?;
    Ok(Run {
        inputs: vec![input.to_path_buf()],
        outputs: vec![out.to_path_buf(), diag_path],
        seed: Some(solver.seed),
        manifest: sidecar(out, ".manifest.json"),
    })
}

fn eval(pred: &Path, gt: &Path, mask: Option<&Path>, out: &Path, format: Format, config: &Config, schema: &AttributeSchema) -> Result<Run> {
    let preds = read_scenes(pred, schema)?;
    let gts = read_scenes(gt, schema)?;
    ensure!(
        preds.len() == gts.len(),
        "{} has {} scenes but {} has {}",
        pred.display(),
        preds.len(),
        gt.display(),
        gts.len()
    );
    let masks = mask.map(|m| read_masks(m, schema, preds.len())).transpose()?;
    let report = evaluate(&preds, &gts, masks.as_deref(), schema, &config.render)?;
    write_json(out, &report)?;
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        Format::Text => print!("{}", report.to_table()),
    }
    let mut inputs = vec![pred.to_path_buf(), gt.to_path_buf()];
    inputs.extend(mask.map(Path::to_path_buf));
    Ok(Run {
        inputs,
        outputs: vec![out.to_path_buf()],
        seed: None,
        manifest: sidecar(out, ".manifest.json"),
    })
}

/// Consistency measures over labeled sequences.
#[derive(Debug, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub sequences: usize,
    pub frames: usize,
    /// Mean violated rules per frame.
    pub semantic_conflicts: f64,
    /// Mean over sequences of attribute changes per attribute.
    pub temporal_changes: f64,
}

impl ConsistencyReport {
    pub fn to_table(&self) -> String {
        format!(
            "seman. ↓  temp. ↓\n{:<9.4} {:.4}\nsequences: {}  frames: {}\n",
            self.semantic_conflicts, self.temporal_changes, self.sequences, self.frames
        )
    }
}

fn consistency(inputs: &[PathBuf], out: &Path, format: Format, schema: &AttributeSchema, specs: &[BinSpec]) -> Result<Run> {
    let mut frames = Vec::new();
    let mut seqs = Vec::new();
    for path in inputs {
        let scenes = read_scenes(path, schema)?;
        ensure!(scenes.len() >= 2, "{} needs at least two frames", path.display());
        seqs.push(scenes.iter().map(|s| Labeling::from_scene(s, specs)).collect::<Vec<_>>());
        frames.extend(scenes);
    }
    let report = ConsistencyReport {
        sequences: seqs.len(),
        frames: frames.len(),
        semantic_conflicts: mean_semantic_conflicts(&frames, schema)?,
        temporal_changes: mean_temporal_changes(&seqs)?,
    };
    write_json(out, &report)?;
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        Format::Text => print!("{}", report.to_table()),
    }
    Ok(Run {
        inputs: inputs.to_vec(),
        outputs: vec![out.to_path_buf()],
        seed: None,
        manifest: sidecar(out, ".manifest.json"),
    })
}
