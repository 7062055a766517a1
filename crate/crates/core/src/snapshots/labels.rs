use super::records::Dataset;
use crate::error::{Error, Result};
use crate::numeric::DenseMatrix;

/// Months between a target and the reference month whose rank list an
/// attribute must be absent from to count as newly trending.
pub const LABEL_LAG: u32 = 12;

pub const DEFAULT_K_PERCENT: f64 = 50.0;

/// Length of a top-`k_percent` list over `active` attributes:
/// `⌈k_percent · active / 100⌉`, computed with a 1e-9 guard so that exact
/// products such as `30 · 10 / 100` are not pushed up by rounding.
pub fn top_k_len(k_percent: f64, active: usize) -> usize {
    let raw = k_percent * active as f64 / 100.0;
    ((raw - 1e-9).ceil().max(0.0) as usize).min(active)
}

pub fn check_k_percent(k_percent: f64) -> Result<()> {
    if !(k_percent > 0.0 && k_percent <= 100.0) {
        return Err(Error::InvalidInput(format!("K-percent must be in (0, 100], got {k_percent}")));
    }
    Ok(())
}

/// Top-K% rank list of one community-month: attributes with positive sales,
/// ordered by sales descending then attribute index ascending, truncated to
/// [`top_k_len`].
pub fn rank_list(sales: &[f64], k_percent: f64) -> Vec<usize> {
    let mut active: Vec<usize> = (0..sales.len()).filter(|&j| sales[j] > 0.0).collect();
    let n = top_k_len(k_percent, active.len());
    active.sort_by(|&a, &b| sales[b].total_cmp(&sales[a]).then(a.cmp(&b)));
    active.truncate(n);
    active
}

/// Rank lists for every community in `month` (all empty for unobserved months).
pub fn rank_lists(dataset: &Dataset, month: u32, k_percent: f64) -> Vec<Vec<usize>> {
    let sales = dataset.sales_matrix(month);
    (0..dataset.num_communities())
        .map(|c| rank_list(sales.row(c), k_percent))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    pub target_month: u32,
    /// `communities × attributes`, 1 where the attribute newly enters the list.
    pub labels: DenseMatrix,
    /// 1 where the label is evaluable.
    pub mask: DenseMatrix,
    /// Rank lists at the target month, one per community.
    pub rank_lists: Vec<Vec<usize>>,
    /// Rank lists at `target − 12`.
    pub reference_lists: Vec<Vec<usize>>,
}

/// `y(c, a) = 1` iff `a` is in community `c`'s top-K% list at `target` and
/// was not in it at `target − 12`. The mask is all ones when both months are
/// observed and all zeros otherwise.
pub fn compute_labels(dataset: &Dataset, target: u32, k_percent: f64) -> Result<LabelSet> {
    check_k_percent(k_percent)?;
    let (n, m) = (dataset.num_communities(), dataset.num_attributes());
    let current = rank_lists(dataset, target, k_percent);
    let reference = match target.checked_sub(LABEL_LAG) {
        Some(month) if month > 0 => rank_lists(dataset, month, k_percent),
        _ => vec![Vec::new(); n],
    };
    let valid = target > LABEL_LAG && dataset.is_observed(target) && dataset.is_observed(target - LABEL_LAG);
    let mut labels = DenseMatrix::zeros(n, m);
    let mask = DenseMatrix::filled(n, m, if valid { 1.0 } else { 0.0 });
    if valid {
        for c in 0..n {
            for &a in &current[c] {
                if !reference[c].contains(&a) {
                    labels.set(c, a, 1.0);
                }
            }
        }
    }
    Ok(LabelSet {
        target_month: target,
        labels,
        mask,
        rank_lists: current,
        reference_lists: reference,
    })
}
