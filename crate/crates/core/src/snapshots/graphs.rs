use super::records::Dataset;
use crate::numeric::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub community: usize,
    pub attribute: usize,
    pub weight: u64,
}

/// Weighted community–attribute graph of one month.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteSnapshot {
    pub month: u32,
    num_communities: usize,
    edges: Vec<Edge>,
    attribute_neighbors: Vec<Vec<usize>>,
    community_neighbors: Vec<Vec<usize>>,
}

impl BipartiteSnapshot {
    pub fn new(month: u32, num_communities: usize, num_attributes: usize, edges: Vec<Edge>) -> Self {
        let mut attribute_neighbors = vec![Vec::new(); num_attributes];
        let mut community_neighbors = vec![Vec::new(); num_communities];
        for e in &edges {
            attribute_neighbors[e.attribute].push(e.community);
            community_neighbors[e.community].push(e.attribute);
        }
        for list in attribute_neighbors.iter_mut().chain(community_neighbors.iter_mut()) {
            list.sort_unstable();
        }
        Self {
            month,
            num_communities,
            edges,
            attribute_neighbors,
            community_neighbors,
        }
    }

    pub fn num_communities(&self) -> usize {
        self.num_communities
    }

    pub fn num_attributes(&self) -> usize {
        self.attribute_neighbors.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Communities adjacent to `attribute`, ascending.
    pub fn attribute_neighbors(&self, attribute: usize) -> &[usize] {
        &self.attribute_neighbors[attribute]
    }

    /// Attributes adjacent to `community`, ascending.
    pub fn community_neighbors(&self, community: usize) -> &[usize] {
        &self.community_neighbors[community]
    }

    pub fn attribute_degree(&self, attribute: usize) -> usize {
        self.attribute_neighbors[attribute].len()
    }

    /// Row `j` averages the communities adjacent to attribute `j`
    /// (weight `1/d(a_j)`); isolated attributes get a zero row.
    pub fn mean_aggregator(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.num_attributes(), self.num_communities);
        for (j, nbrs) in self.attribute_neighbors.iter().enumerate() {
            if nbrs.is_empty() {
                continue;
            }
            let w = 1.0 / nbrs.len() as f64;
            for &k in nbrs {
                m.set(j, k, w);
            }
        }
        m
    }
}

/// One weighted edge per interacting pair in `month`, weight = sales.
pub fn build_bipartite(dataset: &Dataset, month: u32) -> BipartiteSnapshot {
    let edges = dataset
        .records_in(month)
        .iter()
        .map(|r| Edge {
            community: r.community,
            attribute: r.attribute,
            weight: r.sales,
        })
        .collect();
    BipartiteSnapshot::new(month, dataset.num_communities(), dataset.num_attributes(), edges)
}

/// Attribute hypergraph: one hyperedge per community, joining every
/// attribute that community bought in the month.
///
/// Columns of the incidence matrix follow the community catalog, so a
/// community absent that month is an empty hyperedge with degree 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypergraph {
    incidence: DenseMatrix,
    edge_weights: Vec<f64>,
    vertex_degrees: Vec<f64>,
    edge_degrees: Vec<f64>,
}

impl Hypergraph {
    /// Builds from a binary incidence matrix (vertices × hyperedges) and
    /// positive hyperedge weights.
    pub fn from_incidence(incidence: DenseMatrix, edge_weights: Vec<f64>) -> Self {
        assert_eq!(incidence.cols(), edge_weights.len());
        let (n, m) = incidence.shape();
        let mut vertex_degrees = vec![0.0; n];
        let mut edge_degrees = vec![0.0; m];
        for (v, dv) in vertex_degrees.iter_mut().enumerate() {
            for (e, de) in edge_degrees.iter_mut().enumerate() {
                let h = incidence.get(v, e);
                *dv += edge_weights[e] * h;
                *de += h;
            }
        }
        Self {
            incidence,
            edge_weights,
            vertex_degrees,
            edge_degrees,
        }
    }

    pub fn incidence(&self) -> &DenseMatrix {
        &self.incidence
    }

    pub fn num_vertices(&self) -> usize {
        self.incidence.rows()
    }

    pub fn num_edges(&self) -> usize {
        self.incidence.cols()
    }

    pub fn edge_weights(&self) -> &[f64] {
        &self.edge_weights
    }

    /// `d(v) = Σ_e W_e h(v, e)`.
    pub fn vertex_degrees(&self) -> &[f64] {
        &self.vertex_degrees
    }

    /// `δ(e) = Σ_v h(v, e)`.
    pub fn edge_degrees(&self) -> &[f64] {
        &self.edge_degrees
    }

    /// Hyperedges containing at least one vertex.
    pub fn num_nonempty_edges(&self) -> usize {
        self.edge_degrees.iter().filter(|&&d| d > 0.0).count()
    }

    pub fn active_vertices(&self) -> Vec<usize> {
        (0..self.num_vertices()).filter(|&v| self.vertex_degrees[v] > 0.0).collect()
    }

    /// For each hyperedge, the member vertices in ascending order.
    pub fn edge_members(&self) -> Vec<Vec<usize>> {
        (0..self.num_edges())
            .map(|e| (0..self.num_vertices()).filter(|&v| self.incidence.get(v, e) != 0.0).collect())
            .collect()
    }

    fn inv_sqrt_vertex_degrees(&self) -> Vec<f64> {
        self.vertex_degrees
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
            .collect()
    }

    /// `D^{-1/2} H W` (vertices × hyperedges).
    pub fn vertex_side(&self) -> DenseMatrix {
        let inv = self.inv_sqrt_vertex_degrees();
        let mut m = self.incidence.clone();
        for v in 0..m.rows() {
            for (e, x) in m.row_mut(v).iter_mut().enumerate() {
                *x *= inv[v] * self.edge_weights[e];
            }
        }
        m
    }

    /// `B^{-1} Hᵀ D^{-1/2}` (hyperedges × vertices).
    pub fn edge_side(&self) -> DenseMatrix {
        let inv = self.inv_sqrt_vertex_degrees();
        let mut m = self.incidence.transpose();
        for e in 0..m.rows() {
            let b = self.edge_degrees[e];
            let binv = if b > 0.0 { 1.0 / b } else { 0.0 };
            for (v, x) in m.row_mut(e).iter_mut().enumerate() {
                *x *= binv * inv[v];
            }
        }
        m
    }

    /// `D^{-1/2} H W B^{-1} Hᵀ D^{-1/2}` (vertices × vertices), with zero
    /// degrees contributing zero.
    pub fn propagation_matrix(&self) -> DenseMatrix {
        self.vertex_side()
            .matmul(&self.edge_side())
            .expect("conforming by construction")
    }
}

/// Column `k` of the incidence matrix marks the attributes adjacent to
/// community `k`; every hyperedge has weight 1.
pub fn to_hypergraph(snapshot: &BipartiteSnapshot) -> Hypergraph {
    let mut h = DenseMatrix::zeros(snapshot.num_attributes(), snapshot.num_communities());
    for e in snapshot.edges() {
        h.set(e.attribute, e.community, 1.0);
    }
    Hypergraph::from_incidence(h, vec![1.0; snapshot.num_communities()])
}
