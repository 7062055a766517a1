use super::config::ModelConfig;
use super::forward::{initialize, loss_rows, predict, PreparedData};
use crate::error::{Error, Result};
use crate::eval::{macro_auc, TieMode};
use crate::numeric::{AdamConfig, Graph, ParameterStore};
use crate::snapshots::TrendSample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss per valid pair over the epoch's steps.
    pub train_loss: f64,
    pub validation_auc: Option<f64>,
    pub wall_seconds: f64,
}

impl EpochRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }
}

/// Epoch records as newline-delimited JSON.
pub fn format_epoch_log(log: &[EpochRecord]) -> String {
    log.iter().map(|r| r.to_json() + "\n").collect()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best epoch.
    pub store: ParameterStore,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_validation_auc: Option<f64>,
}

/// Mean macro AUC over samples whose AUC is defined.
pub fn validation_auc(store: &ParameterStore, config: &ModelConfig, data: &PreparedData, samples: &[TrendSample]) -> Result<Option<f64>> {
    let mut values = Vec::new();
    for s in samples {
        let p = predict(store, config, data, s)?;
        if let Some(a) = macro_auc(&p.scores, &s.labels, &s.mask, TieMode::Half) {
            values.push(a);
        }
    }
    Ok((!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64))
}

/// Trains from a fresh initialization.
pub fn train(data: &PreparedData, train: &[TrendSample], valid: &[TrendSample], config: &ModelConfig) -> Result<TrainOutcome> {
    let store = initialize(config, data.catalogs())?;
    train_from(store, data, train, valid, config)
}

/// Adam over (sample, attribute batch) steps in seeded random order. After
/// each epoch the validation macro AUC decides whether the parameters are
/// kept as the best so far; without a defined validation AUC the epoch's
/// training loss decides. Stops after `patience` epochs without improvement.
pub fn train_from(
    mut store: ParameterStore,
    data: &PreparedData,
    train: &[TrendSample],
    valid: &[TrendSample],
    config: &ModelConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let usable: Vec<&TrendSample> = train.iter().filter(|s| s.num_valid() > 0).collect();
    if usable.is_empty() {
        return Err(Error::InvalidInput("training set has no labeled pairs".into()));
    }
    let adam = AdamConfig::with_learning_rate(config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let started = Instant::now();

    let mut best = store.clone();
    let mut best_epoch = 0;
    let mut best_auc: Option<f64> = None;
    let mut best_loss = f64::INFINITY;
    let mut stale = 0;
    let mut log = Vec::new();
    let mut attributes: Vec<usize> = (0..data.num_attributes()).collect();

    for epoch in 1..=config.max_epochs {
        attributes.shuffle(&mut rng);
        let mut steps: Vec<(usize, &[usize])> = Vec::new();
        for rows in attributes.chunks(config.batch_size) {
            for s in 0..usable.len() {
                steps.push((s, rows));
            }
        }
        steps.shuffle(&mut rng);

        let mut total = 0.0;
        let mut pairs = 0.0;
        for (s, rows) in steps {
            let sample = usable[s];
            let mut graph = Graph::new();
            let loss = loss_rows(&mut graph, &store, config, data, sample, rows)?;
            let value = graph.value(loss).get(0, 0);
            if !value.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite loss at epoch {epoch} (target month {})",
                    sample.target_month
                )));
            }
            graph.backward(loss)?;
            store.zero_grads();
            graph.accumulate_into(&mut store)?;
            store.adam_step(&adam)?;
            total += value;
            pairs += rows
                .iter()
                .map(|&j| (0..sample.mask.rows()).filter(|&k| sample.mask.get(k, j) != 0.0).count())
                .sum::<usize>() as f64;
        }
        let train_loss = if pairs > 0.0 { total / pairs } else { 0.0 };
        let validation_auc = validation_auc(&store, config, data, valid)?;
        let wall_seconds = match config.log_wall_time {
            true => started.elapsed().as_secs_f64(),
            false => 0.0,
        };
        log.push(EpochRecord {
            epoch,
            train_loss,
            validation_auc,
            wall_seconds,
        });

        let improved = match (validation_auc, best_auc) {
            (Some(a), Some(b)) => a > b,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => train_loss < best_loss,
        };
        if improved {
            best = store.clone();
            best_epoch = epoch;
            best_auc = validation_auc;
            best_loss = train_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        store: best,
        log,
        best_epoch,
        best_validation_auc: best_auc,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    pub index: usize,
    pub learning_rate: f64,
    pub alpha: f64,
    pub seed: u64,
    pub validation_auc: Option<f64>,
    pub best_epoch: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub cells: Vec<GridCell>,
    pub best: usize,
    pub config: ModelConfig,
    pub outcome: TrainOutcome,
}

impl GridOutcome {
    pub fn to_ndjson(&self) -> String {
        self.cells
            .iter()
            .map(|c| serde_json::to_string(c).expect("serializable") + "\n")
            .collect()
    }
}

/// Does `a` beat `b`: higher validation AUC, then smaller learning rate,
/// then smaller α.
fn better(a: &GridCell, b: &GridCell) -> bool {
    let ka = a.validation_auc.unwrap_or(f64::NEG_INFINITY);
    let kb = b.validation_auc.unwrap_or(f64::NEG_INFINITY);
    ka.total_cmp(&kb)
        .then(b.learning_rate.total_cmp(&a.learning_rate))
        .then(b.alpha.total_cmp(&a.alpha))
        .is_gt()
}

/// Trains every (learning rate, α) cell of the grids; cell `i` is seeded
/// with `seed + i`.
pub fn grid_search(data: &PreparedData, train_set: &[TrendSample], valid: &[TrendSample], config: &ModelConfig) -> Result<GridOutcome> {
    config.validate()?;
    let mut cells = Vec::new();
    let mut best: Option<(usize, ModelConfig, TrainOutcome)> = None;
    for &learning_rate in &config.learning_rate_grid {
        for &alpha in &config.alpha_grid {
            let index = cells.len();
            let cfg = ModelConfig {
                learning_rate,
                alpha,
                seed: config.seed.wrapping_add(index as u64),
                ..config.clone()
            };
            let outcome = train(data, train_set, valid, &cfg)?;
            let cell = GridCell {
                index,
                learning_rate,
                alpha,
                seed: cfg.seed,
                validation_auc: outcome.best_validation_auc,
                best_epoch: outcome.best_epoch,
                epochs: outcome.log.len(),
            };
            let wins = best.as_ref().is_none_or(|(b, _, _)| better(&cell, &cells[*b]));
            cells.push(cell);
            if wins {
                best = Some((index, cfg, outcome));
            }
        }
    }
    let (best, config, outcome) = best.expect("grids are nonempty");
    Ok(GridOutcome {
        cells,
        best,
        config,
        outcome,
    })
}
