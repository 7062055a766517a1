//! Ranking AUC, per-community reports, and the month-on-month baseline.

use crate::error::{Error, Result};
use crate::model::PredictionMatrix;
use crate::numeric::DenseMatrix;
use crate::snapshots::{rank_lists, Catalogs, Dataset, TrendSample};
use serde::Serialize;
use std::fmt::Write as _;

/// How equal positive/negative scores are credited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieMode {
    /// Half a correctly ordered pair.
    #[default]
    Half,
    /// Nothing; only strictly higher positives count.
    Strict,
}

/// Probability that a positive outscores a negative, or `None` when either
/// class is empty. Sorts once and counts whole score groups.
pub fn auc(scores: &[f64], labels: &[bool], ties: TieMode) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut wins, mut tied) = (0u64, 0u64);
    let mut negatives_below = 0u64;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut pos, mut neg) = (0u64, 0u64);
        while i < order.len() && scores[order[i]].total_cmp(&s).is_eq() {
            if labels[order[i]] {
                pos += 1;
            } else {
                neg += 1;
            }
            i += 1;
        }
        wins += pos * negatives_below;
        tied += pos * neg;
        negatives_below += neg;
    }
    let positives = labels.iter().filter(|&&l| l).count() as u64;
    let negatives = negatives_below;
    if positives == 0 || negatives == 0 {
        return None;
    }
    let credit = match ties {
        TieMode::Half => wins as f64 + 0.5 * tied as f64,
        TieMode::Strict => wins as f64,
    };
    Some(credit / (positives as f64 * negatives as f64))
}

/// Scores and labels of community `c`'s valid pairs.
fn community_pairs(pred: &DenseMatrix, labels: &DenseMatrix, mask: &DenseMatrix, c: usize) -> (Vec<f64>, Vec<bool>) {
    let mut s = Vec::new();
    let mut y = Vec::new();
    for j in 0..pred.cols() {
        if mask.get(c, j) != 0.0 {
            s.push(pred.get(c, j));
            y.push(labels.get(c, j) != 0.0);
        }
    }
    (s, y)
}

/// Unweighted mean of the defined per-community AUCs.
pub fn macro_auc(pred: &DenseMatrix, labels: &DenseMatrix, mask: &DenseMatrix, ties: TieMode) -> Option<f64> {
    let defined: Vec<f64> = (0..pred.rows())
        .filter_map(|c| {
            let (s, y) = community_pairs(pred, labels, mask, c);
            auc(&s, &y, ties)
        })
        .collect();
    match defined.len() {
        0 => None,
        n => Some(defined.iter().sum::<f64>() / n as f64),
    }
}

/// Month-on-month baseline: each community's sales in `target − 1`,
/// min-max scaled to `[0, 1]` (all zero when constant), reporting that
/// month's top-K% lists.
pub fn mom_baseline(dataset: &Dataset, target: u32, k_percent: f64) -> Result<PredictionMatrix> {
    let previous = target.checked_sub(1).filter(|&m| dataset.is_observed(m)).ok_or(Error::MissingMonth(target.saturating_sub(1)))?;
    let mut scores = dataset.sales_matrix(previous);
    for c in 0..scores.rows() {
        let row = scores.row_mut(c);
        let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for v in row.iter_mut() {
            *v = if hi > lo { (*v - lo) / (hi - lo) } else { 0.0 };
        }
    }
    Ok(PredictionMatrix::with_lists(target, scores, rank_lists(dataset, previous, k_percent)))
}

/// Variant scoring 1 for members of the previous month's list, 0 otherwise.
pub fn mom_membership(dataset: &Dataset, target: u32, k_percent: f64) -> Result<PredictionMatrix> {
    let base = mom_baseline(dataset, target, k_percent)?;
    let mut scores = DenseMatrix::zeros(base.scores.rows(), base.scores.cols());
    for (c, list) in base.ranked.iter().enumerate() {
        for &j in list {
            scores.set(c, j, 1.0);
        }
    }
    Ok(PredictionMatrix::with_lists(target, scores, base.ranked))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommunityReport {
    pub community: String,
    pub auc: Option<f64>,
    pub positives: usize,
    pub negatives: usize,
    /// Top predicted attributes with their scores.
    pub top: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub name: String,
    pub target_month: u32,
    pub communities: Vec<CommunityReport>,
    pub macro_auc: Option<f64>,
}

#[derive(Serialize)]
struct ReportLine<'a> {
    community: &'a str,
    auc: Option<f64>,
    positives: usize,
    negatives: usize,
    topn: String,
}

impl EvalReport {
    /// One JSON object per community.
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for c in &self.communities {
            let line = ReportLine {
                community: &c.community,
                auc: c.auc,
                positives: c.positives,
                negatives: c.negatives,
                topn: c.top.iter().map(|(a, _)| a.as_str()).collect::<Vec<_>>().join(";"),
            };
            out.push_str(&serde_json::to_string(&line).expect("serializable"));
            out.push('\n');
        }
        out
    }

    pub fn to_table(&self) -> String {
        let fmt_auc = |a: Option<f64>| a.map_or_else(|| "undefined".to_string(), |v| format!("{v:.4}"));
        let mut out = String::new();
        let _ = writeln!(out, "{} (target month {})", self.name, self.target_month);
        let _ = writeln!(out, "{:<16} {:>9} {:>9} {:>9}  top", "community", "auc", "positive", "negative");
        for c in &self.communities {
            let top = c.top.iter().map(|(a, _)| a.as_str()).collect::<Vec<_>>().join(" ");
            let _ = writeln!(
                out,
                "{:<16} {:>9} {:>9} {:>9}  {}",
                c.community,
                fmt_auc(c.auc),
                c.positives,
                c.negatives,
                top
            );
        }
        let _ = writeln!(out, "{:<16} {:>9}", "macro", fmt_auc(self.macro_auc));
        out
    }
}

/// Per-community AUC over the valid pairs of `sample` plus the top `top_n`
/// reported attributes per community.
pub fn evaluate(
    name: &str,
    prediction: &PredictionMatrix,
    sample: &TrendSample,
    catalogs: &Catalogs,
    top_n: usize,
    ties: TieMode,
) -> Result<EvalReport> {
    if prediction.scores.shape() != sample.labels.shape() {
        return Err(Error::Shape(format!(
            "prediction {}x{} vs labels {}x{}",
            prediction.scores.rows(),
            prediction.scores.cols(),
            sample.labels.rows(),
            sample.labels.cols()
        )));
    }
    let mut communities = Vec::with_capacity(catalogs.num_communities());
    for c in 0..prediction.scores.rows() {
        let (s, y) = community_pairs(&prediction.scores, &sample.labels, &sample.mask, c);
        let positives = y.iter().filter(|&&v| v).count();
        communities.push(CommunityReport {
            community: catalogs.community(c).to_string(),
            auc: auc(&s, &y, ties),
            positives,
            negatives: y.len() - positives,
            top: prediction
                .top(c, top_n)
                .iter()
                .map(|&j| (catalogs.attribute(j).to_string(), prediction.scores.get(c, j)))
                .collect(),
        });
    }
    let defined: Vec<f64> = communities.iter().filter_map(|c| c.auc).collect();
    let macro_auc = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(EvalReport {
        name: name.to_string(),
        target_month: sample.target_month,
        communities,
        macro_auc,
    })
}
