//! Interaction ingestion, per-month bipartite graphs and hypergraphs,
//! top-K% labels, and sliding training windows.

mod graphs;
mod labels;
mod records;
mod windows;

pub use graphs::{build_bipartite, to_hypergraph, BipartiteSnapshot, Edge, Hypergraph};
pub use labels::{
    check_k_percent, compute_labels, rank_list, rank_lists, top_k_len, LabelSet, DEFAULT_K_PERCENT,
    LABEL_LAG,
};
pub use records::{ingest, Catalogs, Dataset, InteractionRecord};
pub use windows::{
    build_windows, forecast_sample, MonthSnapshot, SnapshotSeries, TrendSample, WindowSplit, DEFAULT_WINDOW,
};
