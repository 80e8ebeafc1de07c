use std::collections::{BTreeMap, BTreeSet};

use hiercast::nn::ParameterSet;
use hiercast::panel::{generate_synthetic, DatarowKey, PanelDataset, SyntheticSpec};
use hiercast::training::{
    aggregate_runs, forecast_from_checkpoint, prepare, run_experiment, train_run, window_offsets,
    ExampleProvenance, ModelVariant, NoObserver, TrainingConfig, TrainingObserver,
};

fn panel() -> PanelDataset {
    generate_synthetic(&SyntheticSpec {
        n_segments: 2,
        n_regions: 3,
        n_products: 2,
        seed: 5,
        short_history_fraction: 0.25,
        presence_probability: 1.0,
        ..Default::default()
    })
    .unwrap()
}

fn tiny(variant: ModelVariant) -> TrainingConfig {
    let mut c = TrainingConfig {
        variant,
        epochs_per_window: 2,
        batch_size: 4,
        runs: 1,
        seed_base: 11,
        k: Some(2),
        p: 1,
        ..Default::default()
    };
    c.lstm.hidden_size = 3;
    c.dcnn.n_layers = 3;
    c.dcnn.filters = 2;
    c.dcnn.head_hidden = 4;
    c
}

#[derive(Default)]
struct Recorder {
    starts: Vec<(usize, usize, ParameterSet<f64>)>,
    ends: Vec<(usize, ParameterSet<f64>)>,
    updates: Vec<(usize, Vec<ExampleProvenance>)>,
}

impl TrainingObserver for Recorder {
    fn window_start(&mut self, window: usize, offset: usize, params: &ParameterSet<f64>) {
        self.starts.push((window, offset, params.clone()));
    }
    fn window_end(&mut self, window: usize, params: &ParameterSet<f64>) {
        self.ends.push((window, params.clone()));
    }
    fn update(&mut self, window: usize, examples: &[&ExampleProvenance]) {
        self.updates.push((window, examples.iter().map(|e| (*e).clone()).collect()));
    }
}

#[test]
fn window_arithmetic() {
    assert_eq!(window_offsets(35, 15).len(), 21);
    assert_eq!(window_offsets(35, 15).last(), Some(20));
    assert_eq!(window_offsets(15, 15).len(), 1);
    assert_eq!(window_offsets(14, 15).len(), 0);
}

#[test]
fn single_window_at_boundary() {
    let p = panel();
    let mut c = tiny(ModelVariant::LstmBasic);
    c.train_end = Some(15);
    c.min_history = 15;
    let prepared = prepare(&p, &c).unwrap();
    let mut rec = Recorder::default();
    train_run(&prepared, &c, 0, &mut rec).unwrap();
    assert_eq!(rec.starts.len(), 1);
}

#[test]
fn rolling_windows_warm_start_bit_identically() {
    let p = panel();
    assert_eq!(p.train_end(), 35);
    let c = tiny(ModelVariant::LstmCat);
    let prepared = prepare(&p, &c).unwrap();
    let mut rec = Recorder::default();
    train_run(&prepared, &c, 0, &mut rec).unwrap();
    assert_eq!(rec.starts.len(), 21);
    assert_eq!(
        rec.starts.iter().map(|s| s.1).collect::<Vec<_>>(),
        (0..21).collect::<Vec<_>>()
    );
    for w in 0..20 {
        assert_eq!(rec.ends[w].0, w);
        assert_eq!(rec.starts[w + 1].2.values(), rec.ends[w].1.values(), "window {w}");
        assert_ne!(rec.starts[w].2.values(), rec.ends[w].1.values(), "window {w} trained");
    }
}

fn check_hygiene(variant: ModelVariant) {
    let p = panel();
    let c = tiny(variant);
    let prepared = prepare(&p, &c).unwrap();
    assert!(!prepared.split.out_of_sample.is_empty());
    let mut rec = Recorder::default();
    let result = train_run(&prepared, &c, 0, &mut rec).unwrap();
    assert!(!rec.updates.is_empty());
    let mut seen = BTreeSet::new();
    for (_, examples) in &rec.updates {
        for e in examples {
            assert!(e.end_quarter <= 35, "{variant}: {e:?} reads past the training end");
            assert!(prepared.split.trainable.contains(&e.key), "{variant}: {} is not trainable", e.key);
            seen.insert(e.key.clone());
        }
    }
    for key in &prepared.split.out_of_sample {
        assert!(!seen.contains(key));
    }
    // every forecastable out-of-sample row still gets a forecast
    let encoder = if variant.is_lstm() { c.encoder_length() } else { 1 };
    let mut transfer = 0;
    for key in &prepared.split.out_of_sample {
        let row = p.get(key).unwrap();
        let history = row.values_before(35).len();
        if row.end_quarter() >= 35 && history >= encoder {
            assert!(result.forecasts.contains_key(key), "{variant}: {key} missing");
            transfer += 1;
        } else {
            assert!(!result.forecasts.contains_key(key));
        }
    }
    assert!(transfer > 0);
    for f in result.forecasts.values() {
        assert_eq!(f.len(), 4);
        assert!(f.iter().all(|v| v.is_finite() && *v > 0.0));
    }
}

#[test]
fn no_leakage_and_transfer_coverage_for_every_variant() {
    for v in ModelVariant::ALL {
        check_hygiene(v);
    }
}

#[test]
fn curriculum_runs_k_times_p_epochs_per_window() {
    let p = panel();
    let mut c = tiny(ModelVariant::LstmCurriculum);
    c.k = Some(3);
    c.p = 2;
    let prepared = prepare(&p, &c).unwrap();
    let result = train_run(&prepared, &c, 0, &mut NoObserver).unwrap();
    let mut per_window: BTreeMap<usize, usize> = BTreeMap::new();
    for point in &result.loss_trace {
        *per_window.entry(point.window).or_default() += 1;
    }
    // the last window is covered by every trainable row, so no stage is empty
    assert_eq!(per_window[&20], 3 * 2);
    let stages: Vec<usize> = result
        .loss_trace
        .iter()
        .filter(|l| l.window == 20)
        .map(|l| l.stage)
        .collect();
    assert_eq!(stages, vec![1, 1, 2, 2, 3, 3]);
}

#[test]
fn experiment_is_deterministic_and_parallel_invariant() {
    let p = panel();
    let mut c = tiny(ModelVariant::DcnnCurriculum);
    c.runs = 3;
    let a = run_experiment(&p, &c).unwrap();
    c.parallel = 3;
    let b = run_experiment(&p, &c).unwrap();
    assert_eq!(a.results.len(), 3);
    for (x, y) in a.results.iter().zip(&b.results) {
        assert_eq!(x.forecasts, y.forecasts);
        assert_eq!(x.seed, y.seed);
    }
    assert_ne!(a.results[0].forecasts, a.results[1].forecasts);
    // runs = 1 is a single train_run
    c.runs = 1;
    c.parallel = 1;
    let single = run_experiment(&p, &c).unwrap();
    let prepared = prepare(&p, &c).unwrap();
    let direct = train_run(&prepared, &c, 0, &mut NoObserver).unwrap();
    assert_eq!(single.results[0].forecasts, direct.forecasts);
    assert_eq!(single.mean_forecasts().unwrap(), direct.forecasts);
}

#[test]
fn aggregation_is_the_per_quarter_mean() {
    let k = DatarowKey::new("S", "R", "P").unwrap();
    let a = BTreeMap::from([(k.clone(), vec![90.0, 1.0])]);
    let b = BTreeMap::from([(k.clone(), vec![110.0, 3.0])]);
    assert_eq!(aggregate_runs([&a, &b]).unwrap()[&k], vec![100.0, 2.0]);
    assert_eq!(aggregate_runs([&a]).unwrap(), a);
    assert!(aggregate_runs(std::iter::empty()).is_err());
}

#[test]
fn checkpoint_reproduces_forecasts() {
    let p = panel();
    for v in [ModelVariant::LstmSeasonal, ModelVariant::DcnnCat] {
        let c = tiny(v);
        let prepared = prepare(&p, &c).unwrap();
        let result = train_run(&prepared, &c, 0, &mut NoObserver).unwrap();
        let (forecasts, _) = forecast_from_checkpoint(&p, &result.checkpoint).unwrap();
        assert_eq!(forecasts, result.forecasts, "{v}");
    }
}

#[test]
fn bad_configs_are_rejected() {
    let p = panel();
    let mut c = tiny(ModelVariant::LstmBasic);
    c.window_size = 4;
    assert!(prepare(&p, &c).is_err());
    let mut c = tiny(ModelVariant::LstmBasic);
    c.train_end = Some(37);
    assert!(prepare(&p, &c).is_err());
    let mut c = tiny(ModelVariant::LstmBasic);
    c.min_history = 100;
    assert!(prepare(&p, &c).is_err());
}
