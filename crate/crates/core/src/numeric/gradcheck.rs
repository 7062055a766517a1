//! Central-difference verification of analytic gradients.

use super::graph::{Graph, NodeId};
use super::params::ParameterStore;
use crate::error::Result;

/// Below this magnitude a gradient is compared by absolute error.
pub const SMALL_GRADIENT: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub entries: usize,
    pub max_error: f64,
    pub worst_entry: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.passed)
    }

    pub fn max_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_error).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params.iter().filter(|p| !p.passed)
    }
}

/// Relative error, or absolute error when both values are below
/// [`SMALL_GRADIENT`] in magnitude. Non-finite inputs give infinity.
pub fn gradient_error(analytic: f64, numeric: f64) -> f64 {
    if !analytic.is_finite() || !numeric.is_finite() {
        return f64::INFINITY;
    }
    let diff = (analytic - numeric).abs();
    let scale = analytic.abs().max(numeric.abs());
    if scale < SMALL_GRADIENT {
        diff
    } else {
        diff / scale
    }
}

fn evaluate<F>(store: &ParameterStore, build: &F) -> f64
where
    F: Fn(&mut Graph, &ParameterStore) -> Result<NodeId>,
{
    let mut graph = Graph::new();
    match build(&mut graph, store) {
        Ok(id) => graph.value(id).get(0, 0),
        Err(_) => f64::NAN,
    }
}

/// Compares the backward-pass gradient of every parameter entry against
/// `(f(θ+ε) − f(θ−ε)) / 2ε`. The store's gradients are overwritten with the
/// analytic gradient; values are restored exactly.
pub fn finite_difference_check<F>(
    store: &mut ParameterStore,
    epsilon: f64,
    tolerance: f64,
    build: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParameterStore) -> Result<NodeId>,
{
    store.zero_grads();
    let mut graph = Graph::new();
    let loss = build(&mut graph, store)?;
    graph.backward(loss)?;
    graph.accumulate_into(store)?;

    let names: Vec<String> = store.names().map(str::to_string).collect();
    let mut report = GradCheckReport::default();
    for name in names {
        let analytic = store.grad(&name)?.clone();
        let mut check = ParamCheck {
            name: name.clone(),
            entries: analytic.len(),
            max_error: 0.0,
            worst_entry: 0,
            analytic: 0.0,
            numeric: 0.0,
            passed: true,
        };
        for i in 0..analytic.len() {
            let original = store.value(&name)?.data()[i];
            store.value_mut(&name)?.data_mut()[i] = original + epsilon;
            let plus = evaluate(store, &build);
            store.value_mut(&name)?.data_mut()[i] = original - epsilon;
            let minus = evaluate(store, &build);
            store.value_mut(&name)?.data_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic.data()[i];
            let err = gradient_error(a, numeric);
            if err > check.max_error || (i == 0 && err.is_nan()) {
                check.max_error = err;
                check.worst_entry = i;
                check.analytic = a;
                check.numeric = numeric;
            }
        }
        check.passed = check.max_error <= tolerance;
        report.params.push(check);
    }
    Ok(report)
}
