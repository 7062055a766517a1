use super::graphs::{build_bipartite, to_hypergraph, BipartiteSnapshot, Hypergraph};
use super::labels::compute_labels;
use super::records::Dataset;
use crate::error::{Error, Result};
use crate::numeric::DenseMatrix;

pub const DEFAULT_WINDOW: usize = 12;

/// One training instance: `window` consecutive observed months and the
/// labels of the month that follows them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendSample {
    pub months: Vec<u32>,
    pub target_month: u32,
    pub labels: DenseMatrix,
    pub mask: DenseMatrix,
}

impl TrendSample {
    pub fn window_len(&self) -> usize {
        self.months.len()
    }

    pub fn num_valid(&self) -> usize {
        self.mask.data().iter().filter(|&&m| m != 0.0).count()
    }
}

#[derive(Debug, Clone, Default)]
pub struct WindowSplit {
    pub train: Vec<TrendSample>,
    pub valid: Vec<TrendSample>,
    pub test: Vec<TrendSample>,
    pub warnings: Vec<String>,
}

impl WindowSplit {
    pub fn total(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }
}

/// Stride-1 sliding windows over the observed months. The last window is
/// the test sample, the one before it validation, the rest training; when
/// there are fewer than three windows they are allocated from the end in
/// that order.
pub fn build_windows(dataset: &Dataset, window: usize, k_percent: f64) -> Result<WindowSplit> {
    let months = dataset.num_months();
    if window == 0 || months < window + 1 {
        return Err(Error::InsufficientHistory {
            months,
            required: window.max(1) + 1,
        });
    }
    let (first, _) = dataset.month_range().expect("nonempty");
    let mut samples = Vec::with_capacity(months - window);
    for offset in 0..months - window {
        let start = first + offset as u32;
        let target = start + window as u32;
        let labels = compute_labels(dataset, target, k_percent)?;
        samples.push(TrendSample {
            months: (start..target).collect(),
            target_month: target,
            labels: labels.labels,
            mask: labels.mask,
        });
    }
    let mut split = WindowSplit::default();
    if let Some(s) = samples.pop() {
        split.test.push(s);
    }
    if let Some(s) = samples.pop() {
        split.valid.push(s);
    }
    split.train = samples;
    if split.train.is_empty() {
        split
            .warnings
            .push(format!("only {} window(s): training set is empty", split.total()));
    }
    if split.valid.is_empty() {
        split.warnings.push("validation set is empty".into());
    }
    Ok(split)
}

/// The window ending at the last observed month, targeting the month after
/// the data ends. Labels and mask are zero.
pub fn forecast_sample(dataset: &Dataset, window: usize) -> Result<TrendSample> {
    let months = dataset.num_months();
    if window == 0 || months < window {
        return Err(Error::InsufficientHistory {
            months,
            required: window.max(1),
        });
    }
    let (_, last) = dataset.month_range().expect("nonempty");
    let start = last + 1 - window as u32;
    let (n, m) = (dataset.num_communities(), dataset.num_attributes());
    Ok(TrendSample {
        months: (start..=last).collect(),
        target_month: last + 1,
        labels: DenseMatrix::zeros(n, m),
        mask: DenseMatrix::zeros(n, m),
    })
}

/// Graph views and derived constant operators for one month.
#[derive(Debug, Clone)]
pub struct MonthSnapshot {
    pub bipartite: BipartiteSnapshot,
    pub hypergraph: Hypergraph,
    /// Raw sales, `communities × attributes`.
    pub sales: DenseMatrix,
    /// Neighbor-mean operator of the bipartite encoder (`attributes × communities`).
    pub mean_aggregator: DenseMatrix,
    /// `D^{-1/2} H W` (`attributes × communities`).
    pub vertex_side: DenseMatrix,
    /// `B^{-1} Hᵀ D^{-1/2}` (`communities × attributes`).
    pub edge_side: DenseMatrix,
}

impl MonthSnapshot {
    pub fn build(dataset: &Dataset, month: u32) -> Self {
        let bipartite = build_bipartite(dataset, month);
        let hypergraph = to_hypergraph(&bipartite);
        Self {
            sales: dataset.sales_matrix(month),
            mean_aggregator: bipartite.mean_aggregator(),
            vertex_side: hypergraph.vertex_side(),
            edge_side: hypergraph.edge_side(),
            bipartite,
            hypergraph,
        }
    }
}

/// Per-month snapshots over shared catalogs for every observed month.
#[derive(Debug, Clone)]
pub struct SnapshotSeries {
    first_month: u32,
    num_communities: usize,
    num_attributes: usize,
    months: Vec<MonthSnapshot>,
}

impl SnapshotSeries {
    pub fn build(dataset: &Dataset) -> Self {
        let months = match dataset.month_range() {
            Some((lo, hi)) => (lo..=hi).map(|t| MonthSnapshot::build(dataset, t)).collect(),
            None => Vec::new(),
        };
        Self {
            first_month: dataset.month_range().map_or(1, |r| r.0),
            num_communities: dataset.num_communities(),
            num_attributes: dataset.num_attributes(),
            months,
        }
    }

    pub fn num_communities(&self) -> usize {
        self.num_communities
    }

    pub fn num_attributes(&self) -> usize {
        self.num_attributes
    }

    pub fn len(&self) -> usize {
        self.months.len()
    }

    pub fn is_empty(&self) -> bool {
        self.months.is_empty()
    }

    pub fn month(&self, month: u32) -> Result<&MonthSnapshot> {
        month
            .checked_sub(self.first_month)
            .and_then(|i| self.months.get(i as usize))
            .ok_or(Error::MissingMonth(month))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snapshots::records::{Catalogs, InteractionRecord};

    fn dataset(months: u32) -> Dataset {
        let catalogs = Catalogs::new(vec!["c".into()], vec!["a".into(), "b".into()]).unwrap();
        let records = (1..=months).map(|month| InteractionRecord {
            month,
            community: 0,
            attribute: (month % 2) as usize,
            sales: month as u64,
        });
        Dataset::from_records(catalogs, records, None).unwrap()
    }

    #[test]
    fn twenty_five_months_split_eleven_one_one() {
        let split = build_windows(&dataset(25), 12, 50.0).unwrap();
        assert_eq!((split.train.len(), split.valid.len(), split.test.len()), (11, 1, 1));
        assert_eq!(split.train[0].months, (1..=12).collect::<Vec<_>>());
        assert_eq!(split.train[0].target_month, 13);
        assert_eq!(split.train[10].target_month, 23);
        assert_eq!(split.valid[0].target_month, 24);
        assert_eq!(split.test[0].target_month, 25);
        assert!(split.warnings.is_empty());
    }

    #[test]
    fn thirteen_months_is_test_only() {
        let split = build_windows(&dataset(13), 12, 50.0).unwrap();
        assert_eq!((split.train.len(), split.valid.len(), split.test.len()), (0, 0, 1));
        assert_eq!(split.warnings.len(), 2);
    }

    #[test]
    fn twelve_months_is_insufficient() {
        assert!(matches!(
            build_windows(&dataset(12), 12, 50.0),
            Err(Error::InsufficientHistory { months: 12, required: 13 })
        ));
    }

    #[test]
    fn forecast_window_ends_at_last_month() {
        let s = forecast_sample(&dataset(25), 12).unwrap();
        assert_eq!(s.months.first(), Some(&14));
        assert_eq!(s.target_month, 26);
        assert_eq!(s.num_valid(), 0);
    }

    #[test]
    fn series_lookup() {
        let series = SnapshotSeries::build(&dataset(3));
        assert_eq!(series.len(), 3);
        assert_eq!(series.month(2).unwrap().bipartite.month, 2);
        assert!(series.month(4).is_err());
        assert!(series.month(0).is_err());
    }
}
