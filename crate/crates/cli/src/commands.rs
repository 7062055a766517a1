use crate::failure::{Context, Failure};
use crate::Overrides;
use dytgraph::config::KeyValues;
use dytgraph::eval::{self, macro_auc, EvalReport, TieMode};
use dytgraph::model::{self, ModelConfig, PreparedData};
use dytgraph::numeric::ParameterStore;
use dytgraph::snapshots::{build_windows, forecast_sample, ingest as read_interactions, Dataset, TrendSample, WindowSplit};
use dytgraph::synthetic::{self, GeneratorConfig, INTERACTIONS_FILE};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.txt";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const EPOCH_LOG_FILE: &str = "epoch_log.ndjson";
pub const GRID_FILE: &str = "grid.ndjson";
pub const MODEL_REPORT_FILE: &str = "model_report.ndjson";
pub const MOM_REPORT_FILE: &str = "mom_report.ndjson";
pub const REPORT_TABLE_FILE: &str = "report.txt";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const SWEEP_FILE: &str = "sweep_alpha.tsv";

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).at(dir)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, contents).at(path)
}

/// Comment header naming the command that produced an artifact directory.
fn provenance(command: &str, inputs: &[(&str, &Path)]) -> String {
    let mut out = format!("# dytgraph {command}\n");
    for (name, path) in inputs {
        let _ = writeln!(out, "# {name} = {}", path.display());
    }
    out
}

/// Config file (if any) followed by `--set` and `--seed` overrides.
fn layered(overrides: &Overrides) -> Result<KeyValues, Failure> {
    let mut kv = match &overrides.config {
        Some(path) if !path.is_file() => return Err(Failure::missing("config file", path)),
        Some(path) => KeyValues::from_path(path).at(path)?,
        None => KeyValues::default(),
    };
    for assignment in &overrides.set {
        kv.push_assignment(assignment).map_err(|e| Failure::usage(format!("--set: {e}")))?;
    }
    if let Some(seed) = overrides.seed {
        kv.set("seed", seed);
    }
    Ok(kv)
}

fn model_config(overrides: &Overrides) -> Result<ModelConfig, Failure> {
    Ok(ModelConfig::from_key_values(&layered(overrides)?)?)
}

fn interactions_path(data: &Path) -> PathBuf {
    let is_csv = data.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv && !data.is_dir() {
        data.to_path_buf()
    } else {
        data.join(INTERACTIONS_FILE)
    }
}

fn load_dataset(data: &Path) -> Result<Dataset, Failure> {
    let path = interactions_path(data);
    if !path.is_file() {
        return Err(Failure::missing("interaction file", &path));
    }
    Dataset::from_path(&path).at(&path)
}

fn load_checkpoint(path: &Path) -> Result<ParameterStore, Failure> {
    if !path.is_file() {
        return Err(Failure::missing("checkpoint (run `dytgraph train` first)", path));
    }
    let file = fs::File::open(path).at(path)?;
    ParameterStore::read_checkpoint(BufReader::new(file)).at(path)
}

/// `--config`, or the resolved config written next to the checkpoint.
fn checkpoint_config(checkpoint: &Path, config: Option<&Path>) -> Result<ModelConfig, Failure> {
    let path = match config {
        Some(p) => p.to_path_buf(),
        None => checkpoint.parent().unwrap_or(Path::new(".")).join(RESOLVED_CONFIG_FILE),
    };
    if !path.is_file() {
        return Err(Failure::missing("model config (pass --config)", &path));
    }
    let kv = KeyValues::from_path(&path).at(&path)?;
    ModelConfig::from_key_values(&kv).at(&path)
}

fn load_model(checkpoint: &Path, config: Option<&Path>, dataset: &Dataset) -> Result<(ParameterStore, ModelConfig), Failure> {
    let store = load_checkpoint(checkpoint)?;
    let cfg = checkpoint_config(checkpoint, config)?;
    model::check_compatible(&store, &cfg, dataset.catalogs())
        .map_err(|e| Failure::data(format!("{}: {e}", checkpoint.display())))?;
    Ok((store, cfg))
}

fn windows(dataset: &Dataset, cfg: &ModelConfig) -> Result<WindowSplit, Failure> {
    Ok(build_windows(dataset, cfg.window, cfg.k_percent)?)
}

fn write_checkpoint(store: &ParameterStore, path: &Path) -> Result<(), Failure> {
    let file = fs::File::create(path).at(path)?;
    store.write_checkpoint(BufWriter::new(file)).at(path)
}

pub fn generate(overrides: &Overrides, out: &Path) -> Result<(), Failure> {
    let cfg = GeneratorConfig::from_key_values(&layered(overrides)?)?;
    let data = synthetic::generate(&cfg)?;
    data.write_to(out).at(out)?;
    write_file(&out.join(RESOLVED_CONFIG_FILE), provenance("generate", &[]) + &cfg.to_config_string())?;
    println!(
        "wrote {} interactions ({} communities, {} attributes, {} months) and {} surge annotations to {}",
        data.dataset.records().len(),
        data.dataset.num_communities(),
        data.dataset.num_attributes(),
        data.dataset.num_months(),
        data.annotations.len(),
        out.display()
    );
    Ok(())
}

pub fn ingest(input: &Path, min_sales: u64, reference_month: Option<u32>, out: &Path) -> Result<(), Failure> {
    if !input.is_file() {
        return Err(Failure::missing("input file", input));
    }
    let file = fs::File::open(input).at(input)?;
    let raw = read_interactions(BufReader::new(file)).at(input)?;
    let Some((_, last)) = raw.month_range() else {
        return Err(Failure::data(format!("{}: no interaction rows", input.display())));
    };
    let reference = reference_month.unwrap_or(last);
    let dataset = raw.filter_min_sales(min_sales, reference)?;
    create_dir(out)?;
    let path = out.join(INTERACTIONS_FILE);
    dataset.write_csv(BufWriter::new(fs::File::create(&path).at(&path)?)).at(&path)?;
    let resolved = format!(
        "{}min_sales = {min_sales}\nreference_month = {reference}\n",
        provenance("ingest", &[("input", input)])
    );
    write_file(&out.join(RESOLVED_CONFIG_FILE), resolved)?;
    println!(
        "kept {} of {} attributes ({} communities, {} months) in {}",
        dataset.num_attributes(),
        raw.num_attributes(),
        dataset.num_communities(),
        dataset.num_months(),
        path.display()
    );
    Ok(())
}

pub fn train(data: &Path, overrides: &Overrides, out: &Path, grid: bool) -> Result<(), Failure> {
    let mut cfg = model_config(overrides)?;
    let dataset = load_dataset(data)?;
    let split = windows(&dataset, &cfg)?;
    let prepared = PreparedData::new(&dataset);
    create_dir(out)?;
    let outcome = if grid {
        let searched = model::grid_search(&prepared, &split.train, &split.valid, &cfg)?;
        write_file(&out.join(GRID_FILE), searched.to_ndjson())?;
        let best = &searched.cells[searched.best];
        println!(
            "grid: best cell {} (learning_rate {}, alpha {}) of {}",
            best.index,
            best.learning_rate,
            best.alpha,
            searched.cells.len()
        );
        cfg = searched.config;
        searched.outcome
    } else {
        model::train(&prepared, &split.train, &split.valid, &cfg)?
    };
    write_checkpoint(&outcome.store, &out.join(CHECKPOINT_FILE))?;
    write_file(&out.join(EPOCH_LOG_FILE), model::format_epoch_log(&outcome.log))?;
    write_file(
        &out.join(RESOLVED_CONFIG_FILE),
        provenance("train", &[("data", data)]) + &cfg.to_config_string(),
    )?;
    let auc = outcome
        .best_validation_auc
        .map_or_else(|| "undefined".to_string(), |a| format!("{a:.4}"));
    println!(
        "trained {} epochs; best epoch {} (validation macro AUC {auc}); checkpoint {}",
        outcome.log.len(),
        outcome.best_epoch,
        out.join(CHECKPOINT_FILE).display()
    );
    Ok(())
}

pub struct EvaluateArgs {
    pub data: PathBuf,
    pub checkpoint: PathBuf,
    pub out: PathBuf,
    pub config: Option<PathBuf>,
    pub target: Option<u32>,
    pub top: usize,
    pub mom_membership: bool,
    pub strict_ties: bool,
}

fn find_sample(split: WindowSplit, target: Option<u32>) -> Result<TrendSample, Failure> {
    let mut all: Vec<TrendSample> = split.train.into_iter().chain(split.valid).chain(split.test).collect();
    match target {
        None => Ok(all.pop().expect("build_windows yields a test sample")),
        Some(t) => all
            .into_iter()
            .find(|s| s.target_month == t)
            .ok_or_else(|| Failure::data(format!("month {t} is not the target of any labeled window"))),
    }
}

fn side_by_side(model: &EvalReport, mom: &EvalReport) -> String {
    let fmt = |a: Option<f64>| a.map_or_else(|| "undefined".to_string(), |v| format!("{v:.4}"));
    let mut out = String::new();
    let _ = writeln!(out, "target month {}", model.target_month);
    let _ = writeln!(out, "{:<16} {:>10} {:>10}", "community", model.name, mom.name);
    for (a, b) in model.communities.iter().zip(&mom.communities) {
        let _ = writeln!(out, "{:<16} {:>10} {:>10}", a.community, fmt(a.auc), fmt(b.auc));
    }
    let _ = writeln!(out, "{:<16} {:>10} {:>10}", "macro", fmt(model.macro_auc), fmt(mom.macro_auc));
    out
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(), Failure> {
    let dataset = load_dataset(&args.data)?;
    let (store, cfg) = load_model(&args.checkpoint, args.config.as_deref(), &dataset)?;
    let sample = find_sample(windows(&dataset, &cfg)?, args.target)?;
    let ties = if args.strict_ties { TieMode::Strict } else { TieMode::Half };
    let prepared = PreparedData::new(&dataset);
    let prediction = model::predict(&store, &cfg, &prepared, &sample)?;
    let report = eval::evaluate("model", &prediction, &sample, dataset.catalogs(), args.top, ties)?;
    let baseline = if args.mom_membership {
        eval::mom_membership(&dataset, sample.target_month, cfg.k_percent)?
    } else {
        eval::mom_baseline(&dataset, sample.target_month, cfg.k_percent)?
    };
    let mom = eval::evaluate("mom", &baseline, &sample, dataset.catalogs(), args.top, ties)?;

    let out = &args.out;
    create_dir(out)?;
    write_file(&out.join(MODEL_REPORT_FILE), report.to_ndjson())?;
    write_file(&out.join(MOM_REPORT_FILE), mom.to_ndjson())?;
    let summary = side_by_side(&report, &mom);
    write_file(
        &out.join(REPORT_TABLE_FILE),
        format!("{summary}\n{}\n{}", report.to_table(), mom.to_table()),
    )?;
    let mut resolved = provenance("evaluate", &[("data", &args.data), ("checkpoint", &args.checkpoint)]);
    let _ = writeln!(
        resolved,
        "# target = {}\n# top = {}\n# mom_membership = {}\n# strict_ties = {}",
        sample.target_month, args.top, args.mom_membership, args.strict_ties
    );
    write_file(&out.join(RESOLVED_CONFIG_FILE), resolved + &cfg.to_config_string())?;
    print!("{summary}");
    Ok(())
}

pub fn predict(data: &Path, checkpoint: &Path, config: Option<&Path>, top: usize, out: Option<&Path>) -> Result<(), Failure> {
    let dataset = load_dataset(data)?;
    let (store, cfg) = load_model(checkpoint, config, &dataset)?;
    let sample = forecast_sample(&dataset, cfg.window)?;
    let prepared = PreparedData::new(&dataset);
    let prediction = model::predict(&store, &cfg, &prepared, &sample)?;
    let catalogs = dataset.catalogs();
    let mut csv = String::from("month,community,rank,attribute,score\n");
    for c in 0..catalogs.num_communities() {
        let tags: Vec<&str> = prediction.top(c, top).iter().map(|&j| catalogs.attribute(j)).collect();
        println!("{}\t{}", catalogs.community(c), tags.join(","));
        for (rank, &j) in prediction.top(c, top).iter().enumerate() {
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                sample.target_month,
                catalogs.community(c),
                rank + 1,
                catalogs.attribute(j),
                prediction.scores.get(c, j)
            );
        }
    }
    if let Some(out) = out {
        create_dir(out)?;
        write_file(&out.join(PREDICTIONS_FILE), csv)?;
        let mut resolved = provenance("predict", &[("data", data), ("checkpoint", checkpoint)]);
        let _ = writeln!(resolved, "# target = {}\n# top = {top}", sample.target_month);
        write_file(&out.join(RESOLVED_CONFIG_FILE), resolved + &cfg.to_config_string())?;
    }
    Ok(())
}

pub fn sweep_alpha(data: &Path, overrides: &Overrides, out: &Path) -> Result<(), Failure> {
    let cfg = model_config(overrides)?;
    let dataset = load_dataset(data)?;
    let split = windows(&dataset, &cfg)?;
    let prepared = PreparedData::new(&dataset);
    let test = split.test.last().expect("build_windows yields a test sample");
    let fmt = |a: Option<f64>| a.map_or_else(|| "undefined".to_string(), |v| format!("{v:.6}"));
    create_dir(out)?;
    let mut table = String::from("alpha\tvalidation_auc\ttest_auc\tbest_epoch\n");
    for &alpha in &cfg.alpha_grid {
        let cell = ModelConfig { alpha, ..cfg.clone() };
        let outcome = model::train(&prepared, &split.train, &split.valid, &cell)?;
        let prediction = model::predict(&outcome.store, &cell, &prepared, test)?;
        let test_auc = macro_auc(&prediction.scores, &test.labels, &test.mask, TieMode::Half);
        let row = format!(
            "{alpha}\t{}\t{}\t{}\n",
            fmt(outcome.best_validation_auc),
            fmt(test_auc),
            outcome.best_epoch
        );
        print!("{row}");
        table.push_str(&row);
    }
    write_file(&out.join(SWEEP_FILE), &table)?;
    write_file(
        &out.join(RESOLVED_CONFIG_FILE),
        provenance("sweep-alpha", &[("data", data)]) + &cfg.to_config_string(),
    )?;
    Ok(())
}
