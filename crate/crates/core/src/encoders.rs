//! Attribute embeddings from the two graph views of a month.
//!
//! The bipartite encoder mixes each attribute's own embedding with the mean
//! of its neighbor communities; community embeddings are never updated by
//! aggregation. The hypergraph encoder applies the symmetric-normalized
//! convolution `ReLU(D^{-1/2} H W B^{-1} Hᵀ D^{-1/2} X P)` starting from the
//! attribute table.
//!
//! Both encoders can produce a subset of attribute rows (a training batch).
//! Each output row depends only on the graph and parameters, never on which
//! other rows are requested.

use crate::error::{Error, Result};
use crate::numeric::{DenseMatrix, Graph, NodeId, ParameterStore};
use crate::snapshots::{BipartiteSnapshot, Hypergraph};

pub const COMMUNITY_TABLE: &str = "embed.community";
pub const ATTRIBUTE_TABLE: &str = "embed.attribute";

pub fn sage_aggregate_weight(layer: usize) -> String {
    format!("sage.{layer}.w_agg")
}

pub fn sage_update_weight(layer: usize) -> String {
    format!("sage.{layer}.w_g")
}

pub fn hyper_weight(layer: usize) -> String {
    format!("hyper.{layer}.p")
}

/// Registers embedding tables and encoder weights. `init` supplies the
/// initial value for a `rows × cols` matrix.
pub fn register_params(
    store: &mut ParameterStore,
    init: &mut dyn FnMut(usize, usize) -> DenseMatrix,
    communities: usize,
    attributes: usize,
    dim: usize,
    sage_layers: usize,
    hyper_layers: usize,
) -> Result<()> {
    store.register(COMMUNITY_TABLE, init(communities, dim))?;
    store.register(ATTRIBUTE_TABLE, init(attributes, dim))?;
    for l in 0..sage_layers {
        store.register(&sage_aggregate_weight(l), init(dim, dim))?;
        store.register(&sage_update_weight(l), init(2 * dim, dim))?;
    }
    for l in 0..hyper_layers {
        store.register(&hyper_weight(l), init(dim, dim))?;
    }
    Ok(())
}

/// `rows` as an owned list, or every index when `None`.
fn resolve_rows(rows: Option<&[usize]>, total: usize) -> Vec<usize> {
    rows.map_or_else(|| (0..total).collect(), <[usize]>::to_vec)
}

struct SageLayer {
    messages: NodeId,
    update: NodeId,
}

/// Bipartite neighbor aggregation, prepared once per graph so the
/// month-independent products are shared across the window.
pub struct SageEncoder {
    rows: Vec<usize>,
    initial: NodeId,
    layers: Vec<SageLayer>,
}

impl SageEncoder {
    pub fn prepare(graph: &mut Graph, store: &ParameterStore, rows: Option<&[usize]>, layers: usize) -> Result<Self> {
        if layers == 0 {
            return Err(Error::InvalidInput("bipartite encoder needs at least one layer".into()));
        }
        let table = graph.param(store, ATTRIBUTE_TABLE)?;
        let rows = resolve_rows(rows, graph.value(table).rows());
        let initial = graph.gather_rows(table, &rows)?;
        let communities = graph.param(store, COMMUNITY_TABLE)?;
        let mut prepared = Vec::with_capacity(layers);
        for l in 0..layers {
            let w_agg = graph.param(store, &sage_aggregate_weight(l))?;
            let update = graph.param(store, &sage_update_weight(l))?;
            let messages = graph.matmul(communities, w_agg)?;
            prepared.push(SageLayer { messages, update });
        }
        Ok(Self {
            rows,
            initial,
            layers: prepared,
        })
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    /// `aggregator` is the full `attributes × communities` neighbor-mean
    /// operator of the month.
    pub fn encode(&self, graph: &mut Graph, aggregator: &DenseMatrix) -> Result<NodeId> {
        let agg = graph.constant(aggregator.gather_rows(&self.rows));
        let mut current = self.initial;
        for layer in &self.layers {
            let neighborhood = graph.matmul(agg, layer.messages)?;
            let joined = graph.concat_cols(&[current, neighborhood])?;
            let pre = graph.matmul(joined, layer.update)?;
            let activated = graph.relu(pre)?;
            current = graph.row_l2_normalize(activated)?;
        }
        Ok(current)
    }
}

/// Hypergraph convolution, prepared once per graph.
pub struct HyperEncoder {
    rows: Vec<usize>,
    num_attributes: usize,
    first_projection: NodeId,
    later_weights: Vec<NodeId>,
}

impl HyperEncoder {
    pub fn prepare(graph: &mut Graph, store: &ParameterStore, rows: Option<&[usize]>, layers: usize) -> Result<Self> {
        if layers == 0 {
            return Err(Error::InvalidInput("hypergraph encoder needs at least one layer".into()));
        }
        let table = graph.param(store, ATTRIBUTE_TABLE)?;
        let num_attributes = graph.value(table).rows();
        let rows = resolve_rows(rows, num_attributes);
        let p0 = graph.param(store, &hyper_weight(0))?;
        let first_projection = graph.matmul(table, p0)?;
        let later_weights = (1..layers)
            .map(|l| graph.param(store, &hyper_weight(l)))
            .collect::<Result<_>>()?;
        Ok(Self {
            rows,
            num_attributes,
            first_projection,
            later_weights,
        })
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    /// `vertex_side = D^{-1/2} H W`, `edge_side = B^{-1} Hᵀ D^{-1/2}` of the month.
    pub fn encode(&self, graph: &mut Graph, vertex_side: &DenseMatrix, edge_side: &DenseMatrix) -> Result<NodeId> {
        if vertex_side.rows() != self.num_attributes || edge_side.cols() != self.num_attributes {
            return Err(Error::Shape(format!(
                "hypergraph operators {}x{} / {}x{} do not match {} attributes",
                vertex_side.rows(),
                vertex_side.cols(),
                edge_side.rows(),
                edge_side.cols(),
                self.num_attributes
            )));
        }
        let edges = graph.constant(edge_side.clone());
        let mut projected = self.first_projection;
        let layers = self.later_weights.len() + 1;
        let mut full_vertex: Option<NodeId> = None;
        for l in 0..layers {
            let edge_repr = graph.matmul(edges, projected)?;
            if l + 1 == layers {
                let vs = graph.constant(vertex_side.gather_rows(&self.rows));
                let pre = graph.matmul(vs, edge_repr)?;
                return graph.relu(pre);
            }
            let vs = *full_vertex.get_or_insert_with(|| graph.constant(vertex_side.clone()));
            let pre = graph.matmul(vs, edge_repr)?;
            let x = graph.relu(pre)?;
            projected = graph.matmul(x, self.later_weights[l])?;
        }
        unreachable!("loop returns on the last layer")
    }
}

/// All-rows bipartite encoding of one snapshot.
pub fn sage_encode(graph: &mut Graph, store: &ParameterStore, snapshot: &BipartiteSnapshot, layers: usize) -> Result<NodeId> {
    let enc = SageEncoder::prepare(graph, store, None, layers)?;
    enc.encode(graph, &snapshot.mean_aggregator())
}

/// All-rows hypergraph encoding.
pub fn hyperconv_encode(graph: &mut Graph, store: &ParameterStore, hypergraph: &Hypergraph, layers: usize) -> Result<NodeId> {
    let enc = HyperEncoder::prepare(graph, store, None, layers)?;
    enc.encode(graph, &hypergraph.vertex_side(), &hypergraph.edge_side())
}
