use super::config::ModelConfig;
use crate::encoders::{self, HyperEncoder, SageEncoder, COMMUNITY_TABLE};
use crate::error::{Error, Result};
use crate::numeric::{DenseMatrix, Graph, NodeId, ParameterStore};
use crate::snapshots::{Catalogs, Dataset, SnapshotSeries, TrendSample};
use crate::temporal::{
    self, autoregressive, combine_recurrent, combine_skip_weight, fuse, gru_step, scale_sales, skip_rollout,
    GruCell, SalesAxis, SalesEmbedder, AR_BIAS, AR_WEIGHTS, COMBINE_BIAS, COMBINE_RECURRENT, GRU_CELL,
    SALES_KERNEL_WIDTH, SKIP_CELL,
};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Clamp applied to scores inside the loss.
pub const LOSS_EPS: f64 = 1e-7;

/// Snapshots and scaled sales for every observed month, shared by all
/// samples of a dataset.
#[derive(Debug, Clone)]
pub struct PreparedData {
    catalogs: Catalogs,
    series: SnapshotSeries,
    first_month: u32,
    /// Per month, `attributes × communities` of scaled sales.
    scaled: Vec<DenseMatrix>,
    /// Per month, scaled total sales of each attribute.
    totals: Vec<Vec<f64>>,
}

impl PreparedData {
    pub fn new(dataset: &Dataset) -> Self {
        let series = SnapshotSeries::build(dataset);
        let (first, last) = dataset.month_range().unwrap_or((1, 0));
        let mut scaled = Vec::new();
        let mut totals = Vec::new();
        for month in first..=last {
            let sales = dataset.sales_matrix(month);
            let by_attribute = sales.transpose();
            totals.push(
                (0..by_attribute.rows())
                    .map(|j| scale_sales(by_attribute.row(j).iter().sum()))
                    .collect(),
            );
            scaled.push(by_attribute.map(scale_sales));
        }
        Self {
            catalogs: dataset.catalogs().clone(),
            series,
            first_month: first,
            scaled,
            totals,
        }
    }

    pub fn catalogs(&self) -> &Catalogs {
        &self.catalogs
    }

    pub fn num_communities(&self) -> usize {
        self.catalogs.num_communities()
    }

    pub fn num_attributes(&self) -> usize {
        self.catalogs.num_attributes()
    }

    pub fn series(&self) -> &SnapshotSeries {
        &self.series
    }

    fn month_index(&self, month: u32) -> Option<usize> {
        month
            .checked_sub(self.first_month)
            .map(|i| i as usize)
            .filter(|&i| i < self.scaled.len())
    }

    fn scaled(&self, month: u32) -> Result<&DenseMatrix> {
        self.month_index(month)
            .map(|i| &self.scaled[i])
            .ok_or(Error::MissingMonth(month))
    }

    /// Input of the sales convolution for `rows` at `month`.
    pub fn sales_signal(&self, month: u32, rows: &[usize], axis: SalesAxis) -> Result<DenseMatrix> {
        match axis {
            SalesAxis::Community => Ok(self.scaled(month)?.gather_rows(rows)),
            SalesAxis::Time => {
                self.scaled(month)?;
                let mut out = DenseMatrix::zeros(rows.len(), SALES_KERNEL_WIDTH);
                for lag in 0..SALES_KERNEL_WIDTH {
                    let back = (SALES_KERNEL_WIDTH - 1 - lag) as u32;
                    let Some(i) = month.checked_sub(back).and_then(|m| self.month_index(m)) else {
                        continue;
                    };
                    for (r, &j) in rows.iter().enumerate() {
                        out.set(r, lag, self.totals[i][j]);
                    }
                }
                Ok(out)
            }
        }
    }

    /// `rows × (communities · window)`; column `k·L + t` is community `k` at
    /// window position `t`.
    pub fn ar_history(&self, months: &[u32], rows: &[usize]) -> Result<DenseMatrix> {
        let n = self.num_communities();
        let l = months.len();
        let mut out = DenseMatrix::zeros(rows.len(), n * l);
        for (t, &month) in months.iter().enumerate() {
            let s = self.scaled(month)?;
            for (r, &j) in rows.iter().enumerate() {
                let src = s.row(j);
                let dst = out.row_mut(r);
                for k in 0..n {
                    dst[k * l + t] = src[k];
                }
            }
        }
        Ok(out)
    }
}

/// Fresh parameters: weights and embeddings uniform in `[−1/√d, 1/√d]`,
/// biases and AR coefficients zero.
pub fn initialize(config: &ModelConfig, catalogs: &Catalogs) -> Result<ParameterStore> {
    config.validate()?;
    let bound = 1.0 / (config.dim as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut init = |r: usize, c: usize| {
        let data = (0..r * c).map(|_| dist.sample(&mut rng)).collect();
        DenseMatrix::from_vec(r, c, data).expect("finite draws")
    };
    let (n, m) = (catalogs.num_communities(), catalogs.num_attributes());
    let mut store = ParameterStore::new();
    encoders::register_params(
        &mut store,
        &mut init,
        n,
        m,
        config.dim,
        config.sage_layers,
        config.hyper_layers,
    )?;
    let (ar_rows, ar_cols) = if config.ar_shared {
        (config.window, 1)
    } else {
        (m, n * config.window)
    };
    temporal::register_params(&mut store, &mut init, config.dim, config.skip, ar_rows, ar_cols)?;
    Ok(store)
}

/// Errors unless `store` has exactly the parameters and shapes `initialize`
/// would produce for this config and catalog.
pub fn check_compatible(store: &ParameterStore, config: &ModelConfig, catalogs: &Catalogs) -> Result<()> {
    let expected = initialize(config, catalogs)?;
    let names: Vec<&str> = store.names().collect();
    let wanted: Vec<&str> = expected.names().collect();
    if names != wanted {
        return Err(Error::Checkpoint(
            "checkpoint parameters do not match the model configuration".into(),
        ));
    }
    for name in wanted {
        let (a, b) = (store.value(name)?.shape(), expected.value(name)?.shape());
        if a != b {
            return Err(Error::Checkpoint(format!(
                "parameter `{name}` is {}x{}, configuration expects {}x{}",
                a.0, a.1, b.0, b.1
            )));
        }
    }
    Ok(())
}

/// Builds scores for attribute `rows` of `sample` as a `rows × communities`
/// node of probabilities.
pub fn forward_rows(
    graph: &mut Graph,
    store: &ParameterStore,
    config: &ModelConfig,
    data: &PreparedData,
    sample: &TrendSample,
    rows: &[usize],
) -> Result<NodeId> {
    if sample.months.len() != config.window {
        return Err(Error::Shape(format!(
            "sample spans {} months, model window is {}",
            sample.months.len(),
            config.window
        )));
    }
    let alpha = config.effective_alpha();
    let sage = match alpha < 1.0 {
        true => Some(SageEncoder::prepare(graph, store, Some(rows), config.sage_layers)?),
        false => None,
    };
    let hyper = match alpha > 0.0 {
        true => Some(HyperEncoder::prepare(graph, store, Some(rows), config.hyper_layers)?),
        false => None,
    };
    let sales = SalesEmbedder::load(graph, store)?;
    let mut inputs = Vec::with_capacity(sample.months.len());
    for &month in &sample.months {
        let snap = data.series.month(month)?;
        let xg = sage.as_ref().map(|e| e.encode(graph, &snap.mean_aggregator)).transpose()?;
        let xh = hyper
            .as_ref()
            .map(|e| e.encode(graph, &snap.vertex_side, &snap.edge_side))
            .transpose()?;
        let signal = data.sales_signal(month, rows, config.sales_axis)?;
        let hs = sales.embed(graph, &signal)?;
        inputs.push(fuse(graph, xg, xh, hs, alpha)?);
    }

    let zero = graph.constant(DenseMatrix::zeros(rows.len(), config.dim));
    let cell = GruCell::load(graph, store, GRU_CELL)?;
    let mut h = zero;
    for &x in &inputs {
        h = gru_step(graph, &cell, x, h)?;
    }
    let (history, skip_weights) = if config.uses_skip() {
        let skip_cell = GruCell::load(graph, store, SKIP_CELL)?;
        let states = skip_rollout(graph, &skip_cell, &inputs, config.skip, zero)?;
        let last = states.len() - 1;
        let history: Vec<Option<NodeId>> = (1..config.skip).map(|i| last.checked_sub(i).map(|t| states[t])).collect();
        let weights = (1..config.skip)
            .map(|i| graph.param(store, &combine_skip_weight(i)))
            .collect::<Result<Vec<_>>>()?;
        (history, weights)
    } else {
        (Vec::new(), Vec::new())
    };
    let w_r = graph.param(store, COMBINE_RECURRENT)?;
    let b = graph.param(store, COMBINE_BIAS)?;
    let hd = combine_recurrent(graph, h, w_r, &history, &skip_weights, b)?;

    let communities = graph.param(store, COMMUNITY_TABLE)?;
    let communities_t = graph.transpose(communities)?;
    let affinity = graph.matmul(hd, communities_t)?;

    let ar_history = data.ar_history(&sample.months, rows)?;
    let ar_w = graph.param(store, AR_WEIGHTS)?;
    let coeffs = match config.ar_shared {
        true => ar_w,
        false => graph.gather_rows(ar_w, rows)?,
    };
    let ar_b = graph.param(store, AR_BIAS)?;
    let ar = autoregressive(graph, &ar_history, coeffs, ar_b, config.window)?;
    let logits = graph.add(affinity, ar)?;
    graph.sigmoid(logits)
}

/// Labels and mask of `sample` restricted to `rows`, attribute-major.
pub fn batch_targets(sample: &TrendSample, rows: &[usize]) -> (DenseMatrix, DenseMatrix) {
    (
        sample.labels.transpose().gather_rows(rows),
        sample.mask.transpose().gather_rows(rows),
    )
}

/// Masked binary cross-entropy summed over `rows` of `sample`.
pub fn loss_rows(
    graph: &mut Graph,
    store: &ParameterStore,
    config: &ModelConfig,
    data: &PreparedData,
    sample: &TrendSample,
    rows: &[usize],
) -> Result<NodeId> {
    let scores = forward_rows(graph, store, config, data, sample, rows)?;
    let (labels, mask) = batch_targets(sample, rows);
    graph.bce(scores, &labels, &mask, LOSS_EPS)
}

/// `−Σ_valid [y ln r̂ + (1 − y) ln(1 − r̂)]` with scores clamped to `[ε, 1 − ε]`.
pub fn bce_loss(predictions: &DenseMatrix, labels: &DenseMatrix, mask: &DenseMatrix) -> Result<f64> {
    let mut graph = Graph::new();
    let p = graph.constant(predictions.clone());
    let loss = graph.bce(p, labels, mask, LOSS_EPS)?;
    Ok(graph.value(loss).get(0, 0))
}

/// Scores for every (community, attribute) pair of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    pub target_month: u32,
    /// `communities × attributes`, each in `[0, 1]`.
    pub scores: DenseMatrix,
    /// Per community, attributes in reported order.
    pub ranked: Vec<Vec<usize>>,
}

impl PredictionMatrix {
    /// Ranks every attribute by descending score, ties by index.
    pub fn new(target_month: u32, scores: DenseMatrix) -> Self {
        let ranked = (0..scores.rows()).map(|c| rank_by_score(scores.row(c))).collect();
        Self {
            target_month,
            scores,
            ranked,
        }
    }

    /// Uses the given per-community lists as the reported ranking.
    pub fn with_lists(target_month: u32, scores: DenseMatrix, ranked: Vec<Vec<usize>>) -> Self {
        Self {
            target_month,
            scores,
            ranked,
        }
    }

    pub fn top(&self, community: usize, n: usize) -> &[usize] {
        let list = &self.ranked[community];
        &list[..n.min(list.len())]
    }
}

pub fn rank_by_score(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Model scores for every pair of `sample`, computed in attribute batches.
pub fn predict(store: &ParameterStore, config: &ModelConfig, data: &PreparedData, sample: &TrendSample) -> Result<PredictionMatrix> {
    let (n, m) = (data.num_communities(), data.num_attributes());
    let mut scores = DenseMatrix::zeros(n, m);
    let all: Vec<usize> = (0..m).collect();
    for rows in all.chunks(config.batch_size.max(1)) {
        let mut graph = Graph::new();
        let out = forward_rows(&mut graph, store, config, data, sample, rows)?;
        let values = graph.value(out);
        for (r, &j) in rows.iter().enumerate() {
            for k in 0..n {
                scores.set(k, j, values.get(r, k));
            }
        }
    }
    if !scores.is_finite() {
        return Err(Error::Numerical("non-finite scores".into()));
    }
    Ok(PredictionMatrix::new(sample.target_month, scores))
}
