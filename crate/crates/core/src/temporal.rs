//! Per-step sales embedding, view fusion, the two recurrent cells, their
//! combination, and the linear autoregressive sales term.
//!
//! Row-vector convention throughout: a batch of attributes is a `B×d`
//! matrix and weights multiply on the right.

use crate::error::{Error, Result};
use crate::numeric::{DenseMatrix, Graph, NodeId, ParameterStore};

pub const SALES_KERNEL: &str = "sales.w";
pub const SALES_BIAS: &str = "sales.b";
pub const SALES_KERNEL_WIDTH: usize = 3;
pub const COMBINE_RECURRENT: &str = "combine.w_r";
pub const COMBINE_BIAS: &str = "combine.b";
pub const AR_WEIGHTS: &str = "ar.w";
pub const AR_BIAS: &str = "ar.b";

/// Prefix of the plain recurrent cell's parameters.
pub const GRU_CELL: &str = "gru";
/// Prefix of the skip-connected cell's parameters.
pub const SKIP_CELL: &str = "skip";

pub fn combine_skip_weight(i: usize) -> String {
    format!("combine.w_s.{i}")
}

/// Signal the sales convolution slides over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SalesAxis {
    /// Across communities within one month.
    #[default]
    Community,
    /// Across the three most recent months of total attribute sales.
    Time,
}

impl std::str::FromStr for SalesAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "community" => Ok(SalesAxis::Community),
            "time" => Ok(SalesAxis::Time),
            _ => Err(Error::Config(format!("unknown sales axis `{s}` (community|time)"))),
        }
    }
}

impl std::fmt::Display for SalesAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SalesAxis::Community => "community",
            SalesAxis::Time => "time",
        })
    }
}

/// The sales scale transform, `log(1 + x)`.
pub fn scale_sales(x: f64) -> f64 {
    x.ln_1p()
}

/// Inverse of [`scale_sales`].
pub fn unscale_sales(y: f64) -> f64 {
    y.exp_m1()
}

/// `h^s = mean_q ReLU(conv(s, W_s)_q + b_s)`; `W_s` is `3×d` (one column per filter).
pub struct SalesEmbedder {
    kernel: NodeId,
    bias: NodeId,
}

impl SalesEmbedder {
    pub fn load(graph: &mut Graph, store: &ParameterStore) -> Result<Self> {
        Ok(Self {
            kernel: graph.param(store, SALES_KERNEL)?,
            bias: graph.param(store, SALES_BIAS)?,
        })
    }

    /// `signals` is `B×n` of already-scaled sales, one row per attribute.
    /// Rows shorter than the kernel are left-padded with zeros.
    pub fn embed(&self, graph: &mut Graph, signals: &DenseMatrix) -> Result<NodeId> {
        let padded = pad_left(signals, SALES_KERNEL_WIDTH);
        let len = padded.cols();
        let x = graph.constant(padded);
        let conv = graph.conv1d(x, self.kernel, 1)?;
        let shifted = graph.add_broadcast(conv, self.bias)?;
        let activated = graph.relu(shifted)?;
        graph.mean_row_groups(activated, len - SALES_KERNEL_WIDTH + 1)
    }
}

fn pad_left(m: &DenseMatrix, width: usize) -> DenseMatrix {
    if m.cols() >= width {
        return m.clone();
    }
    let pad = width - m.cols();
    let mut out = DenseMatrix::zeros(m.rows(), width);
    for r in 0..m.rows() {
        out.row_mut(r)[pad..].copy_from_slice(m.row(r));
    }
    out
}

/// `x = (1 − α)·x^G + α·x^𝒢 + h^s`. At the endpoints the unused view may be
/// absent; it is then not on the compute path at all.
pub fn fuse(
    graph: &mut Graph,
    bipartite: Option<NodeId>,
    hyper: Option<NodeId>,
    sales: NodeId,
    alpha: f64,
) -> Result<NodeId> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let missing = |what: &str| Error::InvalidInput(format!("fuse: {what} embedding required for alpha={alpha}"));
    let graph_part = if alpha == 0.0 {
        bipartite.ok_or_else(|| missing("bipartite"))?
    } else if alpha == 1.0 {
        hyper.ok_or_else(|| missing("hypergraph"))?
    } else {
        let b = graph.scale(bipartite.ok_or_else(|| missing("bipartite"))?, 1.0 - alpha)?;
        let h = graph.scale(hyper.ok_or_else(|| missing("hypergraph"))?, alpha)?;
        graph.add(b, h)?
    };
    graph.add(graph_part, sales)
}

/// Parameter names of one GRU cell under `prefix`.
pub fn gru_param_names(prefix: &str) -> [(String, GruShape); 9] {
    use GruShape::*;
    [
        (format!("{prefix}.w_xr"), Input),
        (format!("{prefix}.w_hr"), Hidden),
        (format!("{prefix}.b_r"), Bias),
        (format!("{prefix}.w_xu"), Input),
        (format!("{prefix}.w_hu"), Hidden),
        (format!("{prefix}.b_u"), Bias),
        (format!("{prefix}.w_xc"), Input),
        (format!("{prefix}.w_hc"), Hidden),
        (format!("{prefix}.b_c"), Bias),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GruShape {
    Input,
    Hidden,
    Bias,
}

/// Gated recurrent cell; the skip variant is the same cell fed `h_{t−p}`.
pub struct GruCell {
    w_xr: NodeId,
    w_hr: NodeId,
    b_r: NodeId,
    w_xu: NodeId,
    w_hu: NodeId,
    b_u: NodeId,
    w_xc: NodeId,
    w_hc: NodeId,
    b_c: NodeId,
}

impl GruCell {
    pub fn load(graph: &mut Graph, store: &ParameterStore, prefix: &str) -> Result<Self> {
        let ids = gru_param_names(prefix)
            .iter()
            .map(|(name, _)| graph.param(store, name))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            w_xr: ids[0],
            w_hr: ids[1],
            b_r: ids[2],
            w_xu: ids[3],
            w_hu: ids[4],
            b_u: ids[5],
            w_xc: ids[6],
            w_hc: ids[7],
            b_c: ids[8],
        })
    }

    fn gate(&self, graph: &mut Graph, x: NodeId, h: NodeId, wx: NodeId, wh: NodeId, b: NodeId) -> Result<NodeId> {
        let xw = graph.matmul(x, wx)?;
        let hw = graph.matmul(h, wh)?;
        let sum = graph.add(xw, hw)?;
        let biased = graph.add_broadcast(sum, b)?;
        graph.sigmoid(biased)
    }

    /// ```text
    /// r = σ(x W_xr + h W_hr + b_r)
    /// z = σ(x W_xu + h W_hu + b_u)
    /// n = tanh(x W_xc + r ⊙ (h W_hc + b_c))
    /// h' = (1 − z) ⊙ n + z ⊙ h
    /// ```
    pub fn step(&self, graph: &mut Graph, x: NodeId, h: NodeId) -> Result<NodeId> {
        let r = self.gate(graph, x, h, self.w_xr, self.w_hr, self.b_r)?;
        let z = self.gate(graph, x, h, self.w_xu, self.w_hu, self.b_u)?;
        let xc = graph.matmul(x, self.w_xc)?;
        let hc = graph.matmul(h, self.w_hc)?;
        let hc = graph.add_broadcast(hc, self.b_c)?;
        let gated = graph.hadamard(r, hc)?;
        let pre = graph.add(xc, gated)?;
        let n = graph.tanh(pre)?;
        let keep = graph.affine(z, -1.0, 1.0)?;
        let fresh = graph.hadamard(keep, n)?;
        let carried = graph.hadamard(z, h)?;
        graph.add(fresh, carried)
    }
}

/// Vanilla step: `h_t = GRU(x_t, h_{t−1})`.
pub fn gru_step(graph: &mut Graph, cell: &GruCell, x: NodeId, h_prev: NodeId) -> Result<NodeId> {
    cell.step(graph, x, h_prev)
}

/// Skip step: `h_t = GRU(x_t, h_{t−p})`; callers pass a zero state for `t < p`.
pub fn skip_gru_step(graph: &mut Graph, cell: &GruCell, x: NodeId, h_skip: NodeId) -> Result<NodeId> {
    cell.step(graph, x, h_skip)
}

/// Rolls the skip cell over `inputs` with skip length `p`. Entry `t` of the
/// result is the state after step `t`.
pub fn skip_rollout(graph: &mut Graph, cell: &GruCell, inputs: &[NodeId], p: usize, zero: NodeId) -> Result<Vec<NodeId>> {
    if p == 0 {
        return Err(Error::InvalidInput("skip length must be positive".into()));
    }
    let mut states: Vec<NodeId> = Vec::with_capacity(inputs.len());
    for (t, &x) in inputs.iter().enumerate() {
        let prev = if t >= p { states[t - p] } else { zero };
        states.push(skip_gru_step(graph, cell, x, prev)?);
    }
    Ok(states)
}

/// `h^D = h^R W^R + Σ_{i=1}^{p−1} h^S_{t−i} W_i^S + b`.
///
/// `skip_history[i − 1]` is `h^S_{t−i}`; `None` marks a step before the
/// window start, which contributes a zero vector.
pub fn combine_recurrent(
    graph: &mut Graph,
    recurrent: NodeId,
    recurrent_weight: NodeId,
    skip_history: &[Option<NodeId>],
    skip_weights: &[NodeId],
    bias: NodeId,
) -> Result<NodeId> {
    if skip_history.len() != skip_weights.len() {
        return Err(Error::LengthMismatch(format!(
            "{} skip states for {} skip weights",
            skip_history.len(),
            skip_weights.len()
        )));
    }
    let mut total = graph.matmul(recurrent, recurrent_weight)?;
    for (state, &w) in skip_history.iter().zip(skip_weights) {
        if let Some(s) = *state {
            let term = graph.matmul(s, w)?;
            total = graph.add(total, term)?;
        }
    }
    graph.add_broadcast(total, bias)
}

/// `ŝ = Σ_t w_t s_t + b` per (attribute, community) pair.
///
/// `history` is `B×(C·L)` with column `k·L + t` holding the scaled sales of
/// community `k` at lag `t`. `coeffs` is either the same shape (one
/// coefficient per pair and lag) or `L×1` shared by all pairs. The result is
/// `B×C`.
pub fn autoregressive(graph: &mut Graph, history: &DenseMatrix, coeffs: NodeId, bias: NodeId, lags: usize) -> Result<NodeId> {
    if lags == 0 || history.cols() % lags != 0 {
        return Err(Error::LengthMismatch(format!(
            "history of {} columns is not a whole number of {lags}-lag series",
            history.cols()
        )));
    }
    let communities = history.cols() / lags;
    let c = graph.value(coeffs).shape();
    let forecast = if c == history.shape() {
        let h = graph.constant(history.clone());
        let weighted = graph.hadamard(h, coeffs)?;
        graph.sum_col_groups(weighted, lags)?
    } else if c == (lags, 1) {
        let h = graph.constant(history.clone());
        let series = graph.reshape(h, history.rows() * communities, lags)?;
        let out = graph.matmul(series, coeffs)?;
        graph.reshape(out, history.rows(), communities)?
    } else {
        return Err(Error::LengthMismatch(format!(
            "coefficients {}x{} do not match history {}x{} with {lags} lags",
            c.0,
            c.1,
            history.rows(),
            history.cols()
        )));
    };
    graph.add_broadcast(forecast, bias)
}

pub fn register_params(
    store: &mut ParameterStore,
    init: &mut dyn FnMut(usize, usize) -> DenseMatrix,
    dim: usize,
    skip: usize,
    ar_rows: usize,
    ar_cols: usize,
) -> Result<()> {
    store.register(SALES_KERNEL, init(SALES_KERNEL_WIDTH, dim))?;
    store.register(SALES_BIAS, DenseMatrix::zeros(1, dim))?;
    for prefix in [GRU_CELL, SKIP_CELL] {
        for (name, shape) in gru_param_names(prefix) {
            let value = match shape {
                GruShape::Input | GruShape::Hidden => init(dim, dim),
                GruShape::Bias => DenseMatrix::zeros(1, dim),
            };
            store.register(&name, value)?;
        }
    }
    store.register(COMBINE_RECURRENT, init(dim, dim))?;
    for i in 1..skip {
        store.register(&combine_skip_weight(i), init(dim, dim))?;
    }
    store.register(COMBINE_BIAS, DenseMatrix::zeros(1, dim))?;
    store.register(AR_WEIGHTS, DenseMatrix::zeros(ar_rows, ar_cols))?;
    store.register(AR_BIAS, DenseMatrix::zeros(1, 1))?;
    Ok(())
}
