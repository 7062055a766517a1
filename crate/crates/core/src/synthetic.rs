//! Synthetic interaction data with planted trend onsets.
//!
//! Intensity of community `c` buying attribute `a` in month `t`:
//!
//! ```text
//! λ = scale · softplus(u_c · v_a / √r) · season_a(t) · surge(c, a, t) · noise
//! ```
//!
//! with `season_a(t) = 1 + amp_a sin(2π (t + φ_a) / period)` and log-normal
//! noise of unit mean. Sales are Poisson(λ). A surge multiplies intensity by
//! `surge_factor` for `surge_duration` months from its onset; the two
//! preceding months ramp up to it. Surges are scheduled for attributes
//! ranked just below the middle of a community's base ordering, so an onset
//! usually lifts the attribute into the top half. Onsets are scheduled in
//! every month so that label statistics do not depend on the month.

use crate::config::{parse_value, KeyValues};
use crate::error::{Error, Result};
use crate::snapshots::{Catalogs, Dataset, InteractionRecord, LABEL_LAG};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use std::io::Write;
use std::path::Path;

pub const INTERACTIONS_FILE: &str = "interactions.csv";
pub const ANNOTATIONS_FILE: &str = "annotations.csv";

/// Smallest supported number of months: one 12-month window and its target.
pub const MIN_MONTHS: u32 = 13;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub communities: usize,
    pub attributes: usize,
    pub months: u32,
    pub latent_dim: usize,
    pub season_period: u32,
    /// Largest per-attribute seasonal amplitude.
    pub season_amplitude: f64,
    /// Fraction of attributes newly surging per community per month.
    pub onset_rate: f64,
    /// Probability that each other community joins an attribute's surge.
    pub surge_spread: f64,
    pub surge_factor: f64,
    pub surge_duration: u32,
    /// Standard deviation of the log-normal intensity noise.
    pub noise: f64,
    /// Mean intensity multiplier.
    pub base_scale: f64,
    /// Multiplier on the latent affinity before the softplus.
    pub affinity_scale: f64,
    /// Band of a community's base ordering, as fractions from the top,
    /// from which surge candidates are drawn.
    pub candidate_low: f64,
    pub candidate_high: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            communities: 7,
            attributes: 300,
            months: 25,
            latent_dim: 8,
            season_period: 12,
            season_amplitude: 0.3,
            onset_rate: 0.02,
            surge_spread: 0.3,
            surge_factor: 5.0,
            surge_duration: 3,
            noise: 0.05,
            base_scale: 200.0,
            affinity_scale: 2.0,
            candidate_low: 0.5,
            candidate_high: 0.8,
            seed: 7,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.communities == 0 || self.attributes == 0 || self.latent_dim == 0 || self.season_period == 0 {
            return fail("communities, attributes, latent_dim and season_period must be positive".into());
        }
        if self.months < MIN_MONTHS {
            return fail(format!("months must be at least {MIN_MONTHS}, got {}", self.months));
        }
        for (name, v) in [
            ("onset_rate", self.onset_rate),
            ("surge_spread", self.surge_spread),
            ("season_amplitude", self.season_amplitude),
            ("candidate_low", self.candidate_low),
            ("candidate_high", self.candidate_high),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return fail(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if self.candidate_low > self.candidate_high {
            return fail("candidate_low exceeds candidate_high".into());
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return fail(format!("noise must be nonnegative, got {}", self.noise));
        }
        if !(self.surge_factor.is_finite() && self.surge_factor >= 1.0) {
            return fail(format!("surge_factor must be at least 1, got {}", self.surge_factor));
        }
        if !(self.base_scale.is_finite() && self.base_scale > 0.0) || !self.affinity_scale.is_finite() {
            return fail("base_scale must be positive and affinity_scale finite".into());
        }
        if self.surge_duration == 0 {
            return fail("surge_duration must be positive".into());
        }
        Ok(())
    }

    pub fn apply(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "communities" => self.communities = parse_value(key, value)?,
            "attributes" => self.attributes = parse_value(key, value)?,
            "months" => self.months = parse_value(key, value)?,
            "latent_dim" => self.latent_dim = parse_value(key, value)?,
            "season_period" => self.season_period = parse_value(key, value)?,
            "season_amplitude" => self.season_amplitude = parse_value(key, value)?,
            "onset_rate" => self.onset_rate = parse_value(key, value)?,
            "surge_spread" => self.surge_spread = parse_value(key, value)?,
            "surge_factor" => self.surge_factor = parse_value(key, value)?,
            "surge_duration" => self.surge_duration = parse_value(key, value)?,
            "noise" => self.noise = parse_value(key, value)?,
            "base_scale" => self.base_scale = parse_value(key, value)?,
            "affinity_scale" => self.affinity_scale = parse_value(key, value)?,
            "candidate_low" => self.candidate_low = parse_value(key, value)?,
            "candidate_high" => self.candidate_high = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in kv.iter() {
            if !cfg.apply(k, v)? {
                return Err(Error::Config(format!("unknown generator setting `{k}`")));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_config_string(&self) -> String {
        format!(
            "communities = {}\nattributes = {}\nmonths = {}\nlatent_dim = {}\nseason_period = {}\n\
             season_amplitude = {}\nonset_rate = {}\nsurge_spread = {}\nsurge_factor = {}\n\
             surge_duration = {}\nnoise = {}\nbase_scale = {}\naffinity_scale = {}\n\
             candidate_low = {}\ncandidate_high = {}\nseed = {}\n",
            self.communities,
            self.attributes,
            self.months,
            self.latent_dim,
            self.season_period,
            self.season_amplitude,
            self.onset_rate,
            self.surge_spread,
            self.surge_factor,
            self.surge_duration,
            self.noise,
            self.base_scale,
            self.affinity_scale,
            self.candidate_low,
            self.candidate_high,
            self.seed
        )
    }
}

/// A scheduled surge: intensity is multiplied from `month` on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SurgeAnnotation {
    pub month: u32,
    pub community: usize,
    pub attribute: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub annotations: Vec<SurgeAnnotation>,
}

impl SyntheticData {
    pub fn write_annotations<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["month", "community", "attribute"])?;
        let catalogs = self.dataset.catalogs();
        for a in &self.annotations {
            w.write_record([
                a.month.to_string().as_str(),
                catalogs.community(a.community),
                catalogs.attribute(a.attribute),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes the interaction and annotation CSVs into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.dataset
            .write_csv(std::io::BufWriter::new(std::fs::File::create(dir.join(INTERACTIONS_FILE))?))?;
        self.write_annotations(std::io::BufWriter::new(std::fs::File::create(dir.join(ANNOTATIONS_FILE))?))
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Intensity multipliers of one surge, by offset from the onset.
fn surge_profile(cfg: &GeneratorConfig) -> Vec<(i64, f64)> {
    let f = cfg.surge_factor;
    let mut p = vec![(-2, 1.0 + (f - 1.0) / 3.0), (-1, 1.0 + 2.0 * (f - 1.0) / 3.0)];
    p.extend((0..cfg.surge_duration as i64).map(|k| (k, f)));
    p
}

pub fn generate(cfg: &GeneratorConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let (n, m, months) = (cfg.communities, cfg.attributes, cfg.months as usize);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let latent = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..cfg.latent_dim).map(|_| normal.sample(rng)).collect() };
    let u: Vec<Vec<f64>> = (0..n).map(|_| latent(&mut rng)).collect();
    let v: Vec<Vec<f64>> = (0..m).map(|_| latent(&mut rng)).collect();
    let norm = (cfg.latent_dim as f64).sqrt();
    let base: Vec<Vec<f64>> = u
        .iter()
        .map(|uc| {
            v.iter()
                .map(|va| {
                    let dot: f64 = uc.iter().zip(va).map(|(a, b)| a * b).sum();
                    cfg.base_scale * softplus(cfg.affinity_scale * dot / norm)
                })
                .collect()
        })
        .collect();
    let amplitude: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * cfg.season_amplitude).collect();
    let phase: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * cfg.season_period as f64).collect();

    // candidate band of each community's base ordering
    let candidates: Vec<Vec<usize>> = base
        .iter()
        .map(|row| {
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            let lo = (cfg.candidate_low * m as f64).floor() as usize;
            let hi = ((cfg.candidate_high * m as f64).ceil() as usize).min(m);
            let mut band = order[lo.min(hi)..hi].to_vec();
            band.sort_unstable();
            band
        })
        .collect();

    // surge multiplier per (community, attribute, month index)
    let profile = surge_profile(cfg);
    let mut surge = vec![vec![vec![1.0f64; months]; m]; n];
    let mut annotations = Vec::new();
    let per_month = (cfg.onset_rate * m as f64).round() as usize;
    // a community may host a surge of `a` at `onset` if nothing is planted
    // over its profile, nor at the year-back reference month
    let free = |surge: &Vec<Vec<Vec<f64>>>, c: usize, a: usize, onset: i64| -> bool {
        let reference = onset - LABEL_LAG as i64 - 1;
        std::iter::once(reference)
            .chain(profile.iter().map(|&(off, _)| onset + off - 1))
            .all(|t| t < 0 || t >= months as i64 || surge[c][a][t as usize] == 1.0)
    };
    let mut plant = |surge: &mut Vec<Vec<Vec<f64>>>, c: usize, a: usize, onset: i64| {
        for &(off, mult) in &profile {
            let t = onset + off - 1;
            if (0..months as i64).contains(&t) {
                let cell = &mut surge[c][a][t as usize];
                *cell = cell.max(mult);
            }
        }
        if (1..=months as i64).contains(&onset) {
            annotations.push(SurgeAnnotation {
                month: onset as u32,
                community: c,
                attribute: a,
            });
        }
    };
    if per_month > 0 {
        // onsets just outside the observed months keep the data in steady
        // state at both ends; only observed onsets are annotated
        let first_onset = 2 - cfg.surge_duration as i64;
        for onset in first_onset..=cfg.months as i64 + 2 {
            for c in 0..n {
                let open: Vec<usize> = candidates[c].iter().copied().filter(|&a| free(&surge, c, a, onset)).collect();
                let take = per_month.min(open.len());
                let mut chosen: Vec<usize> = sample_indices(&mut rng, open.len(), take).into_iter().map(|i| open[i]).collect();
                chosen.sort_unstable();
                for a in chosen {
                    plant(&mut surge, c, a, onset);
                    for other in (0..n).filter(|&o| o != c) {
                        let joins = rng.random::<f64>() < cfg.surge_spread;
                        if joins && candidates[other].binary_search(&a).is_ok() && free(&surge, other, a, onset) {
                            plant(&mut surge, other, a, onset);
                        }
                    }
                }
            }
        }
    }
    annotations.sort_unstable();

    let noise = Normal::new(-0.5 * cfg.noise * cfg.noise, cfg.noise).map_err(|e| Error::Config(e.to_string()))?;
    let mut records = Vec::with_capacity(n * m * months);
    for t in 0..months {
        let month = t as u32 + 1;
        for (c, row) in base.iter().enumerate() {
            for (a, &b) in row.iter().enumerate() {
                let angle = 2.0 * std::f64::consts::PI * (month as f64 + phase[a]) / cfg.season_period as f64;
                let season = 1.0 + amplitude[a] * angle.sin();
                let eps = if cfg.noise > 0.0 { noise.sample(&mut rng).exp() } else { 1.0 };
                let lambda = b * season * surge[c][a][t] * eps;
                let sales = Poisson::new(lambda)
                    .map_err(|e| Error::Numerical(format!("intensity {lambda}: {e}")))?
                    .sample(&mut rng) as u64;
                records.push(InteractionRecord {
                    month,
                    community: c,
                    attribute: a,
                    sales,
                });
            }
        }
    }
    let width_c = n.to_string().len().max(2);
    let width_a = m.to_string().len().max(3);
    let catalogs = Catalogs::new(
        (0..n).map(|c| format!("c{:0width_c$}", c + 1)).collect(),
        (0..m).map(|a| format!("a{:0width_a$}", a + 1)).collect(),
    )?;
    let dataset = Dataset::from_records(catalogs, records, Some((1, cfg.months)))?;
    Ok(SyntheticData { dataset, annotations })
}
