//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use dytgraph::numeric::DenseMatrix;
use dytgraph::snapshots::{Catalogs, Dataset, InteractionRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    DenseMatrix::from_vec(rows, cols, data).unwrap()
}

/// Double loop over every positive/negative pair.
pub fn pairwise_auc(scores: &[f64], labels: &[bool], strict: bool) -> Option<f64> {
    let mut credit = 0.0;
    let mut pairs = 0u64;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1;
            if si > sj {
                credit += 1.0;
            } else if si == sj && !strict {
                credit += 0.5;
            }
        }
    }
    (pairs > 0).then(|| credit / pairs as f64)
}

/// Top-`k`% list by repeatedly picking the best remaining attribute; the
/// list length is the least `n` with `100 n ≥ k · active`.
pub fn brute_rank_list(sales: &[u64], k_percent: u32) -> Vec<usize> {
    let active = sales.iter().filter(|&&s| s > 0).count();
    let mut len = 0;
    while 100 * len < k_percent as usize * active {
        len += 1;
    }
    let mut taken = vec![false; sales.len()];
    let mut out = Vec::new();
    for _ in 0..len {
        let mut best: Option<usize> = None;
        for j in 0..sales.len() {
            if taken[j] || sales[j] == 0 {
                continue;
            }
            if best.is_none_or(|b| sales[j] > sales[b]) {
                best = Some(j);
            }
        }
        let b = best.unwrap();
        taken[b] = true;
        out.push(b);
    }
    out
}

/// `cube[t][c][a]` is the sales of month `t + 1`.
pub fn brute_labels(cube: &[Vec<Vec<u64>>], target: usize, k_percent: u32) -> Vec<Vec<u8>> {
    let communities = cube[0].len();
    let attributes = cube[0][0].len();
    let mut out = vec![vec![0u8; attributes]; communities];
    if target <= 12 || target > cube.len() {
        return out;
    }
    for c in 0..communities {
        let now = brute_rank_list(&cube[target - 1][c], k_percent);
        let before = brute_rank_list(&cube[target - 13][c], k_percent);
        for a in now {
            if !before.contains(&a) {
                out[c][a] = 1;
            }
        }
    }
    out
}

pub fn dataset_from_cube(cube: &[Vec<Vec<u64>>]) -> Dataset {
    let communities = cube[0].len();
    let attributes = cube[0][0].len();
    let catalogs = Catalogs::new(
        (0..communities).map(|c| format!("c{c}")).collect(),
        (0..attributes).map(|a| format!("a{a}")).collect(),
    )
    .unwrap();
    let mut records = Vec::new();
    for (t, month) in cube.iter().enumerate() {
        for (c, row) in month.iter().enumerate() {
            for (a, &sales) in row.iter().enumerate() {
                records.push(InteractionRecord {
                    month: t as u32 + 1,
                    community: c,
                    attribute: a,
                    sales,
                });
            }
        }
    }
    Dataset::from_records(catalogs, records, Some((1, cube.len() as u32))).unwrap()
}

/// Random sales with many ties, zeros and small values.
pub fn random_cube(rng: &mut ChaCha8Rng, months: usize, communities: usize, attributes: usize) -> Vec<Vec<Vec<u64>>> {
    let top = rng.random_range(1..8u64);
    (0..months)
        .map(|_| {
            (0..communities)
                .map(|_| {
                    (0..attributes)
                        .map(|_| if rng.random_bool(0.25) { 0 } else { rng.random_range(0..=top) })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Node → hyperedge → node aggregation written per vertex and per edge:
/// `m_e = (1/δ(e)) Σ_{u ∈ e} x_u / √d(u)`, `y_v = ReLU(Σ_{e ∋ v} w_e m_e / √d(v))`
/// with `x_u` already projected.
pub fn two_stage_hyperconv(incidence: &DenseMatrix, weights: &[f64], projected: &DenseMatrix) -> DenseMatrix {
    let (n, m) = incidence.shape();
    let d = projected.cols();
    let degree: Vec<f64> = (0..n)
        .map(|v| (0..m).map(|e| weights[e] * incidence.get(v, e)).sum())
        .collect();
    let mut messages = vec![vec![0.0; d]; m];
    for (e, msg) in messages.iter_mut().enumerate() {
        let members: Vec<usize> = (0..n).filter(|&v| incidence.get(v, e) != 0.0).collect();
        if members.is_empty() {
            continue;
        }
        for &u in &members {
            for (k, slot) in msg.iter_mut().enumerate() {
                *slot += projected.get(u, k) / degree[u].sqrt();
            }
        }
        for slot in msg.iter_mut() {
            *slot /= members.len() as f64;
        }
    }
    let mut out = DenseMatrix::zeros(n, d);
    for v in 0..n {
        if degree[v] == 0.0 {
            continue;
        }
        for e in (0..m).filter(|&e| incidence.get(v, e) != 0.0) {
            for k in 0..d {
                let cur = out.get(v, k);
                out.set(v, k, cur + weights[e] * messages[e][k] / degree[v].sqrt());
            }
        }
        for k in 0..d {
            out.set(v, k, out.get(v, k).max(0.0));
        }
    }
    out
}

pub struct ScalarGru {
    /// `w_x[g][i][j]`, `w_h[g][i][j]`, `b[g][j]` for gates r, z, n.
    pub w_x: [Vec<Vec<f64>>; 3],
    pub w_h: [Vec<Vec<f64>>; 3],
    pub b: [Vec<f64>; 3],
}

impl ScalarGru {
    pub fn step(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let d = h.len();
        let lin = |g: usize, v: &[f64], w: &[Vec<Vec<f64>>; 3], j: usize| -> f64 {
            (0..v.len()).map(|i| v[i] * w[g][i][j]).sum()
        };
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        (0..d)
            .map(|j| {
                let r = sig(lin(0, x, &self.w_x, j) + lin(0, h, &self.w_h, j) + self.b[0][j]);
                let z = sig(lin(1, x, &self.w_x, j) + lin(1, h, &self.w_h, j) + self.b[1][j]);
                let n = (lin(2, x, &self.w_x, j) + r * (lin(2, h, &self.w_h, j) + self.b[2][j])).tanh();
                (1.0 - z) * n + z * h[j]
            })
            .collect()
    }
}

pub fn to_nested(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

pub struct SmallModel {
    pub dataset: Dataset,
    pub data: dytgraph::model::PreparedData,
    pub samples: Vec<dytgraph::snapshots::TrendSample>,
    pub config: dytgraph::model::ModelConfig,
}

/// Dense random sales for `communities × attributes` over `months`, all
/// windows of length 12, and a `dim`-wide model.
pub fn small_model(seed: u64, communities: usize, attributes: usize, months: usize, dim: usize) -> SmallModel {
    let mut r = rng(seed);
    let cube: Vec<Vec<Vec<u64>>> = (0..months)
        .map(|_| {
            (0..communities)
                .map(|_| (0..attributes).map(|_| if r.random_bool(0.2) { 0 } else { r.random_range(1..60) }).collect())
                .collect()
        })
        .collect();
    let dataset = dataset_from_cube(&cube);
    let data = dytgraph::model::PreparedData::new(&dataset);
    let split = dytgraph::snapshots::build_windows(&dataset, 12, 50.0).unwrap();
    let samples = split.train.into_iter().chain(split.valid).chain(split.test).collect();
    let config = dytgraph::model::ModelConfig {
        dim,
        seed,
        batch_size: 2,
        max_epochs: 3,
        ..Default::default()
    };
    SmallModel {
        dataset,
        data,
        samples,
        config,
    }
}

/// Sum of the losses of `samples` over all attributes.
pub fn total_loss(
    graph: &mut dytgraph::numeric::Graph,
    store: &dytgraph::numeric::ParameterStore,
    config: &dytgraph::model::ModelConfig,
    data: &dytgraph::model::PreparedData,
    samples: &[dytgraph::snapshots::TrendSample],
) -> dytgraph::Result<dytgraph::numeric::NodeId> {
    let rows: Vec<usize> = (0..data.num_attributes()).collect();
    let mut total: Option<dytgraph::numeric::NodeId> = None;
    for s in samples {
        let l = dytgraph::model::loss_rows(graph, store, config, data, s, &rows)?;
        total = Some(match total {
            None => l,
            Some(t) => graph.add(t, l)?,
        });
    }
    Ok(total.expect("at least one sample"))
}
