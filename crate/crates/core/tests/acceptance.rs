//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

mod common;

use common::*;
use dytgraph::encoders::{hyperconv_encode, ATTRIBUTE_TABLE};
use dytgraph::eval::{auc, evaluate, macro_auc, mom_baseline, TieMode};
use dytgraph::model::{self, Ablation, ModelConfig, PreparedData};
use dytgraph::numeric::{finite_difference_check, DenseMatrix, Graph, ParameterStore};
use dytgraph::snapshots::{build_windows, compute_labels, ingest, Hypergraph};
use dytgraph::synthetic::{generate, GeneratorConfig};
use rand::Rng;
use std::time::{Duration, Instant};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_secs: f64) -> bool {
    elapsed.as_secs_f64() < limit_secs
}

/// Random values for every parameter so that biases and AR terms are
/// exercised too.
fn randomize(store: &mut ParameterStore, seed: u64, scale: f64) {
    let mut r = rng(seed);
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for name in names {
        let (rows, cols) = store.value(&name).unwrap().shape();
        store.set_value(&name, random_matrix(&mut r, rows, cols, scale)).unwrap();
    }
}

fn gradient_integrity() -> Outcome {
    let start = Instant::now();
    let fixture = small_model(101, 3, 5, 14, 4);
    assert_eq!(fixture.samples.len(), 2);
    let mut store = model::initialize(&fixture.config, fixture.dataset.catalogs()).unwrap();
    randomize(&mut store, 5, 0.5);
    let report = finite_difference_check(&mut store, 1e-6, 1e-4, |g, s| {
        total_loss(g, s, &fixture.config, &fixture.data, &fixture.samples)
    })
    .unwrap();
    let elapsed = start.elapsed();
    let entries: usize = report.params.iter().map(|p| p.entries).sum();
    let worst = report
        .params
        .iter()
        .max_by(|a, b| a.max_error.total_cmp(&b.max_error))
        .map(|p| p.name.clone())
        .unwrap_or_default();
    outcome(
        report.passed() && within(elapsed, 60.0),
        format!(
            "max error {:.2e} (worst `{worst}`) over {} parameters / {entries} entries in {:.2?}",
            report.max_error(),
            report.params.len(),
            elapsed
        ),
    )
}

fn hypergraph_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(202);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = r.random_range(1..=8);
        let m = r.random_range(1..=4);
        let d = r.random_range(1..=5);
        let mut h = DenseMatrix::zeros(n, m);
        for v in 0..n {
            for e in 0..m {
                if r.random_bool(0.5) {
                    h.set(v, e, 1.0);
                }
            }
        }
        let weights: Vec<f64> = (0..m).map(|_| r.random_range(0.2..2.0)).collect();
        let x = random_matrix(&mut r, n, d, 1.0);
        let p = random_matrix(&mut r, d, d, 1.0);
        let mut store = ParameterStore::new();
        store.register(ATTRIBUTE_TABLE, x.clone()).unwrap();
        store.register("hyper.0.p", p.clone()).unwrap();
        let hg = Hypergraph::from_incidence(h.clone(), weights.clone());
        let mut g = Graph::new();
        let out = hyperconv_encode(&mut g, &store, &hg, 1).unwrap();
        let expected = two_stage_hyperconv(&h, &weights, &x.matmul(&p).unwrap());
        worst = worst.max(g.value(out).max_abs_diff(&expected));
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-10 && within(elapsed, 5.0),
        format!("max deviation {worst:.2e} on 100 hypergraphs in {elapsed:.2?}"),
    )
}

fn auc_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(303);
    let mut mismatches = 0;
    let mut tied_instances = 0;
    for i in 0..1000 {
        let n = r.random_range(1..=200);
        let levels = if i % 2 == 0 { r.random_range(1..6) } else { 1_000_000 };
        let scores: Vec<f64> = (0..n).map(|_| r.random_range(0..levels) as f64 / levels as f64).collect();
        let labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.3)).collect();
        if levels < 6 {
            tied_instances += 1;
        }
        for (mode, strict) in [(TieMode::Half, false), (TieMode::Strict, true)] {
            if auc(&scores, &labels, mode) != pairwise_auc(&scores, &labels, strict) {
                mismatches += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && within(elapsed, 5.0),
        format!("{mismatches} mismatches over 1000 instances ({tied_instances} tie-heavy), both tie modes, in {elapsed:.2?}"),
    )
}

fn label_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(404);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let months = r.random_range(13..=15);
        let communities = r.random_range(1..=4);
        let attributes = r.random_range(1..=12);
        let k = r.random_range(1..=100u32);
        let cube = random_cube(&mut r, months, communities, attributes);
        let dataset = dataset_from_cube(&cube);
        let target = r.random_range(1..=months);
        let labels = compute_labels(&dataset, target as u32, k as f64).unwrap();
        let expected = brute_labels(&cube, target, k);
        let valid = target > 12;
        for c in 0..communities {
            for a in 0..attributes {
                let got = labels.labels.get(c, a);
                let mask = labels.mask.get(c, a);
                if got != expected[c][a] as f64 || mask != if valid { 1.0 } else { 0.0 } {
                    mismatches += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && within(elapsed, 5.0),
        format!("{mismatches} mismatching pairs over 1000 instances in {elapsed:.2?}"),
    )
}

fn all_scores(store: &ParameterStore, config: &ModelConfig, fixture: &SmallModel) -> Vec<u64> {
    fixture
        .samples
        .iter()
        .flat_map(|s| model::predict(store, config, &fixture.data, s).unwrap().scores.into_vec())
        .map(f64::to_bits)
        .collect()
}

/// Perturbing the disabled parameters leaves every score bit unchanged,
/// while perturbing an enabled group does change them.
fn isolation(fixture: &SmallModel, ablation: Ablation, disabled: &[&str], enabled: &str) -> (bool, bool) {
    let config = ModelConfig {
        ablation,
        ..fixture.config.clone()
    };
    let mut store = model::initialize(&config, fixture.dataset.catalogs()).unwrap();
    randomize(&mut store, 9, 0.5);
    let base = all_scores(&store, &config, fixture);
    let mut r = rng(10);
    let perturb = |store: &mut ParameterStore, prefix: &str, r: &mut rand_chacha::ChaCha8Rng| {
        let names: Vec<String> = store.names().filter(|n| n.starts_with(prefix)).map(str::to_string).collect();
        assert!(!names.is_empty(), "no parameters under `{prefix}`");
        for name in names {
            let (rows, cols) = store.value(&name).unwrap().shape();
            store.set_value(&name, random_matrix(r, rows, cols, 3.0)).unwrap();
        }
    };
    let mut off = store.clone();
    for prefix in disabled {
        perturb(&mut off, prefix, &mut r);
    }
    let unchanged = all_scores(&off, &config, fixture) == base;
    let mut on = store.clone();
    perturb(&mut on, enabled, &mut r);
    let moved = all_scores(&on, &config, fixture) != base;
    (unchanged, moved)
}

fn ablation_isolation() -> Outcome {
    let fixture = small_model(505, 3, 6, 14, 4);
    let cases = [
        (Ablation::HypergraphOnly, &["sage."][..], "hyper."),
        (Ablation::BipartiteOnly, &["hyper."][..], "sage."),
        (Ablation::GruOnly, &["skip.", "combine.w_s."][..], "gru."),
    ];
    let mut parts = Vec::new();
    let mut passed = true;
    for (ablation, disabled, enabled) in cases {
        let (unchanged, moved) = isolation(&fixture, ablation, disabled, enabled);
        passed &= unchanged && moved;
        parts.push(format!(
            "{ablation}: {} {}",
            disabled.join("+"),
            if unchanged { "bit-isolated" } else { "LEAKS" }
        ));
    }
    outcome(passed, parts.join("; "))
}

fn synthetic_learnability() -> Outcome {
    let start = Instant::now();
    let data = generate(&GeneratorConfig::default()).unwrap();
    let config = ModelConfig::default();
    let split = build_windows(&data.dataset, config.window, config.k_percent).unwrap();
    let prepared = PreparedData::new(&data.dataset);
    let trained = model::train(&prepared, &split.train, &split.valid, &config).unwrap();
    let test = &split.test[0];
    let prediction = model::predict(&trained.store, &config, &prepared, test).unwrap();
    let model_auc = macro_auc(&prediction.scores, &test.labels, &test.mask, TieMode::Half).unwrap_or(0.0);
    let mom = mom_baseline(&data.dataset, test.target_month, config.k_percent).unwrap();
    let mom_auc = macro_auc(&mom.scores, &test.labels, &test.mask, TieMode::Half).unwrap_or(0.0);
    let elapsed = start.elapsed();
    outcome(
        model_auc >= 0.75 && model_auc >= mom_auc + 0.05 && within(elapsed, 600.0),
        format!(
            "model macro AUC {model_auc:.4}, MOM {mom_auc:.4}, margin {:.4}; {} epochs (best {}) in {elapsed:.1?}",
            model_auc - mom_auc,
            trained.log.len(),
            trained.best_epoch
        ),
    )
}

fn protocol_split() -> Outcome {
    let data = generate(&GeneratorConfig::default()).unwrap();
    let split = build_windows(&data.dataset, 12, 50.0).unwrap();
    let counts = (split.train.len(), split.valid.len(), split.test.len());
    outcome(
        counts == (11, 1, 1) && data.dataset.num_months() == 25,
        format!("25 months, window 12 -> {}/{}/{} train/valid/test", counts.0, counts.1, counts.2),
    )
}

/// Generate, write, re-ingest, train, checkpoint and report.
fn end_to_end_artifacts() -> Vec<Vec<u8>> {
    let generator = GeneratorConfig {
        communities: 3,
        attributes: 30,
        ..GeneratorConfig::default()
    };
    let data = generate(&generator).unwrap();
    let mut csv = Vec::new();
    data.dataset.write_csv(&mut csv).unwrap();
    let dataset = ingest(&csv[..]).unwrap();
    let config = ModelConfig {
        dim: 8,
        max_epochs: 4,
        batch_size: 16,
        log_wall_time: false,
        ..ModelConfig::default()
    };
    let split = build_windows(&dataset, config.window, config.k_percent).unwrap();
    let prepared = PreparedData::new(&dataset);
    let trained = model::train(&prepared, &split.train, &split.valid, &config).unwrap();
    let mut checkpoint = Vec::new();
    trained.store.write_checkpoint(&mut checkpoint).unwrap();
    let test = &split.test[0];
    let prediction = model::predict(&trained.store, &config, &prepared, test).unwrap();
    let report = evaluate("model", &prediction, test, dataset.catalogs(), 10, TieMode::Half).unwrap();
    let mom = mom_baseline(&dataset, test.target_month, config.k_percent).unwrap();
    let mom_report = evaluate("mom", &mom, test, dataset.catalogs(), 10, TieMode::Half).unwrap();
    vec![
        csv,
        model::format_epoch_log(&trained.log).into_bytes(),
        checkpoint,
        (report.to_ndjson() + &report.to_table()).into_bytes(),
        mom_report.to_ndjson().into_bytes(),
    ]
}

fn determinism() -> Outcome {
    let first = end_to_end_artifacts();
    let second = end_to_end_artifacts();
    let names = ["interactions", "epoch log", "checkpoint", "model report", "MOM report"];
    let differing: Vec<&str> = names
        .iter()
        .zip(first.iter().zip(&second))
        .filter(|(_, (a, b))| a != b)
        .map(|(n, _)| *n)
        .collect();
    let sizes: Vec<String> = names.iter().zip(&first).map(|(n, a)| format!("{n} {}B", a.len())).collect();
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            format!("byte-identical across two runs ({})", sizes.join(", "))
        } else {
            format!("differs: {}", differing.join(", "))
        },
    )
}

fn prefix_grads_all_zero(store: &ParameterStore, prefix: &str) -> (bool, usize) {
    let mut count = 0;
    let zero = store.names().filter(|n| n.starts_with(prefix)).all(|n| {
        count += 1;
        store.grad(n).unwrap().data().iter().all(|&g| g == 0.0)
    });
    (zero && count > 0, count)
}

fn prefix_grads_any_nonzero(store: &ParameterStore, prefix: &str) -> bool {
    store
        .names()
        .filter(|n| n.starts_with(prefix))
        .any(|n| store.grad(n).unwrap().data().iter().any(|&g| g != 0.0))
}

fn alpha_endpoints() -> Outcome {
    let fixture = small_model(909, 3, 5, 14, 4);
    let mut parts = Vec::new();
    let mut passed = true;
    for (alpha, silent, active) in [(0.0, "hyper.", "sage."), (1.0, "sage.", "hyper.")] {
        let config = ModelConfig {
            alpha,
            ..fixture.config.clone()
        };
        let mut store = model::initialize(&config, fixture.dataset.catalogs()).unwrap();
        randomize(&mut store, 3, 0.5);
        let mut g = Graph::new();
        let loss = total_loss(&mut g, &store, &config, &fixture.data, &fixture.samples).unwrap();
        g.backward(loss).unwrap();
        store.zero_grads();
        g.accumulate_into(&mut store).unwrap();
        let (zero, count) = prefix_grads_all_zero(&store, silent);
        let alive = prefix_grads_any_nonzero(&store, active);
        passed &= zero && alive;
        parts.push(format!(
            "alpha={alpha}: {count} `{silent}*` gradients {}",
            if zero { "exactly zero" } else { "NONZERO" }
        ));
    }
    outcome(passed, parts.join("; "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient integrity", gradient_integrity),
        ("hypergraph convolution oracle", hypergraph_oracle),
        ("AUC oracle", auc_oracle),
        ("label oracle", label_oracle),
        ("ablation path isolation", ablation_isolation),
        ("synthetic learnability", synthetic_learnability),
        ("paper-protocol split", protocol_split),
        ("determinism", determinism),
        ("fusion endpoint gradients", alpha_endpoints),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|f| *f == id || name.contains(f.as_str())) {
            continue;
        }
        let result = check();
        let status = if result.passed { "PASS" } else { "FAIL" };
        println!("{status} [{id}] {name}: {}", result.detail);
        if !result.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
