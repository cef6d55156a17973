use roadlayout::crf::{build_energy, CrfConfig};
use roadlayout::inference::{minimize_energy, minimize_temporal, unary_argmin, SolverConfig};
use roadlayout::labeling::Labeling;
use roadlayout::metrics::{mean_temporal_changes, semantic_conflicts};
use roadlayout::noise::{corrupt, corrupt_sequence, NoiseConfig};
use roadlayout::prediction::AttributePrediction;
use roadlayout::probability::{bin_specs, BinningConfig};
use roadlayout::render::{render, RenderConfig};
use roadlayout::sampler::{prior_cooccurrence, sample_scene, scene_seed, PriorConfig};
use roadlayout::schema::{default_schema, deserialize_scene, serialize_scene, validate};

#[test]
fn sampled_scenes_round_trip_and_render() {
    let schema = default_schema();
    for i in 0..200 {
        let s = sample_scene(&PriorConfig::default(), scene_seed(21, i));
        assert!(validate(&s, &schema).is_feasible());
        let line = serialize_scene(&s, &schema).unwrap();
        assert_eq!(deserialize_scene(&line, &schema).unwrap(), s);
        render(&s, &schema, &RenderConfig::default()).unwrap();
    }
}

#[test]
fn predictions_round_trip_through_json() {
    let schema = default_schema();
    let specs = bin_specs(&schema, &BinningConfig::default());
    for i in 0..50 {
        let gt = sample_scene(&PriorConfig::default(), scene_seed(22, i));
        let p = corrupt(&gt, &schema, &specs, &NoiseConfig { seed: i, ..NoiseConfig::default() }).unwrap();
        assert_eq!(AttributePrediction::from_json(&p.to_json(), &schema, &specs).unwrap(), p);
    }
}

#[test]
fn single_frame_inference_removes_conflicts() {
    let schema = default_schema();
    let specs = bin_specs(&schema, &BinningConfig::default());
    let cooc = prior_cooccurrence(&PriorConfig::default(), 0, 2000);
    let noise = NoiseConfig {
        epsilon: 0.3,
        ..NoiseConfig::default()
    };
    let mut raw_conflicts = 0;
    for i in 0..40 {
        let gt = sample_scene(&PriorConfig::default(), scene_seed(23, i));
        let pred = corrupt(&gt, &schema, &specs, &NoiseConfig { seed: i, ..noise }).unwrap();
        raw_conflicts += semantic_conflicts(&pred.decode_scene(&specs), &schema);
        let model = build_energy(std::slice::from_ref(&pred), &cooc, &schema, &CrfConfig::default()).unwrap();
        let init = unary_argmin(&model, 0);
        let sol = minimize_energy(&model, &init, &SolverConfig::default()).unwrap();
        assert!(sol.report.final_energy <= sol.report.initial_energy);
        let scene = sol.labeling.to_scene(&specs);
        assert_eq!(semantic_conflicts(&scene, &schema), 0);
        render(&scene, &schema, &RenderConfig::default()).unwrap();
    }
    assert!(raw_conflicts > 0);
}

#[test]
fn temporal_inference_reduces_discrete_flicker() {
    let schema = default_schema();
    let specs = bin_specs(&schema, &BinningConfig::default());
    let cooc = prior_cooccurrence(&PriorConfig::default(), 0, 2000);
    let noise = NoiseConfig {
        sigma_n: 0.0,
        ..NoiseConfig::default()
    };
    let (mut raw, mut smooth) = (Vec::new(), Vec::new());
    for i in 0..20 {
        let gt = sample_scene(&PriorConfig::default(), scene_seed(24, i));
        let preds = corrupt_sequence(&gt, 5, &schema, &specs, &NoiseConfig { seed: i, ..noise }).unwrap();
        let model = build_energy(&preds, &cooc, &schema, &CrfConfig::default()).unwrap();
        let sol = minimize_temporal(&model, &SolverConfig::default()).unwrap();
        assert!(sol.report.final_energy <= sol.report.initial_energy);
        raw.push(preds.iter().map(|p| p.argmax_labeling(&specs)).collect::<Vec<Labeling>>());
        smooth.push(sol.labelings);
    }
    assert!(mean_temporal_changes(&smooth).unwrap() < mean_temporal_changes(&raw).unwrap());
}
