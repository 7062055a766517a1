use crate::config::{format_list, parse_bool, parse_list, parse_value, KeyValues};
use crate::error::{Error, Result};
use crate::snapshots::{check_k_percent, DEFAULT_K_PERCENT, DEFAULT_WINDOW};
use crate::temporal::SalesAxis;
use std::fmt;
use std::str::FromStr;

/// Model variants compared in the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ablation {
    #[default]
    Full,
    /// Bipartite view only; the hypergraph encoder is disconnected.
    BipartiteOnly,
    /// Hypergraph view only; the bipartite encoder is disconnected.
    HypergraphOnly,
    /// No skip cell; `h^D = h^R W^R + b`.
    GruOnly,
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Ablation::Full),
            "bipartite-only" => Ok(Ablation::BipartiteOnly),
            "hypergraph-only" => Ok(Ablation::HypergraphOnly),
            "gru-only" => Ok(Ablation::GruOnly),
            _ => Err(Error::Config(format!(
                "unknown ablation `{s}` (full|bipartite-only|hypergraph-only|gru-only)"
            ))),
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ablation::Full => "full",
            Ablation::BipartiteOnly => "bipartite-only",
            Ablation::HypergraphOnly => "hypergraph-only",
            Ablation::GruOnly => "gru-only",
        })
    }
}

pub const DEFAULT_LEARNING_RATES: [f64; 5] = [0.001, 0.003, 0.005, 0.008, 0.01];
pub const DEFAULT_ALPHAS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub dim: usize,
    pub alpha: f64,
    pub skip: usize,
    pub learning_rate: f64,
    pub learning_rate_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub window: usize,
    pub k_percent: f64,
    pub ablation: Ablation,
    pub seed: u64,
    pub sage_layers: usize,
    pub hyper_layers: usize,
    pub sales_axis: SalesAxis,
    /// One AR coefficient per lag shared by every (community, attribute) pair.
    pub ar_shared: bool,
    /// When false the epoch log records zero elapsed time, making logs
    /// byte-comparable across runs.
    pub log_wall_time: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            alpha: 0.5,
            skip: 3,
            learning_rate: 0.005,
            learning_rate_grid: DEFAULT_LEARNING_RATES.to_vec(),
            alpha_grid: DEFAULT_ALPHAS.to_vec(),
            batch_size: 64,
            max_epochs: 100,
            patience: 10,
            window: DEFAULT_WINDOW,
            k_percent: DEFAULT_K_PERCENT,
            ablation: Ablation::Full,
            seed: 42,
            sage_layers: 1,
            hyper_layers: 1,
            sales_axis: SalesAxis::Community,
            ar_shared: false,
            log_wall_time: true,
        }
    }
}

impl ModelConfig {
    /// α after applying the ablation: the bipartite-only variant drops the
    /// hypergraph term and the hypergraph-only variant drops the bipartite one.
    pub fn effective_alpha(&self) -> f64 {
        match self.ablation {
            Ablation::BipartiteOnly => 0.0,
            Ablation::HypergraphOnly => 1.0,
            _ => self.alpha,
        }
    }

    pub fn uses_skip(&self) -> bool {
        self.ablation != Ablation::GruOnly
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.dim == 0 {
            return fail("dim must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if self.skip < 2 {
            return fail(format!("skip must be at least 2, got {}", self.skip));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return fail(format!("invalid learning_rate {}", self.learning_rate));
        }
        if self.learning_rate_grid.is_empty() || self.alpha_grid.is_empty() {
            return fail("grids must be nonempty".into());
        }
        if let Some(lr) = self.learning_rate_grid.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return fail(format!("invalid learning rate {lr} in grid"));
        }
        if let Some(a) = self.alpha_grid.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return fail(format!("alpha {a} in grid lies outside [0, 1]"));
        }
        if self.batch_size == 0 || self.window == 0 || self.sage_layers == 0 || self.hyper_layers == 0 {
            return fail("batch_size, window and layer counts must be positive".into());
        }
        check_k_percent(self.k_percent).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies one assignment; returns `false` for keys this config does not own.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "dim" => self.dim = parse_value(key, value)?,
            "alpha" => self.alpha = parse_value(key, value)?,
            "skip" => self.skip = parse_value(key, value)?,
            "learning_rate" => self.learning_rate = parse_value(key, value)?,
            "learning_rate_grid" => self.learning_rate_grid = parse_list(key, value)?,
            "alpha_grid" => self.alpha_grid = parse_list(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "max_epochs" => self.max_epochs = parse_value(key, value)?,
            "patience" => self.patience = parse_value(key, value)?,
            "window" => self.window = parse_value(key, value)?,
            "k_percent" => self.k_percent = parse_value(key, value)?,
            "ablation" => self.ablation = value.parse()?,
            "seed" => self.seed = parse_value(key, value)?,
            "sage_layers" => self.sage_layers = parse_value(key, value)?,
            "hyper_layers" => self.hyper_layers = parse_value(key, value)?,
            "sales_axis" => self.sales_axis = value.parse()?,
            "ar_shared" => self.ar_shared = parse_bool(key, value)?,
            "log_wall_time" => self.log_wall_time = parse_bool(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Defaults overridden by `kv`; unknown keys are an error.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in kv.iter() {
            if !cfg.apply(k, v)? {
                return Err(Error::Config(format!("unknown model setting `{k}`")));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("dim", self.dim);
        kv.set("alpha", self.alpha);
        kv.set("skip", self.skip);
        kv.set("learning_rate", self.learning_rate);
        kv.set("learning_rate_grid", format_list(&self.learning_rate_grid));
        kv.set("alpha_grid", format_list(&self.alpha_grid));
        kv.set("batch_size", self.batch_size);
        kv.set("max_epochs", self.max_epochs);
        kv.set("patience", self.patience);
        kv.set("window", self.window);
        kv.set("k_percent", self.k_percent);
        kv.set("ablation", self.ablation);
        kv.set("seed", self.seed);
        kv.set("sage_layers", self.sage_layers);
        kv.set("hyper_layers", self.hyper_layers);
        kv.set("sales_axis", self.sales_axis);
        kv.set("ar_shared", self.ar_shared);
        kv.set("log_wall_time", self.log_wall_time);
        kv
    }

    /// The resolved configuration as a config file.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.to_key_values().iter() {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}
