//! The `bammit` command line.
//!
//! Exit codes: 0 success, 2 configuration or argument error, 3 data or
//! file error, 4 numerical failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::ammi::TwoWayAmmi;
use crate::error::{Error, Result};
use crate::io::{
    parse_cells_csv, parse_dataset_csv, parse_dataset_csv_with_layout, parse_split_by, read_draws,
    write_dataset_csv, write_draws, FileEntry, Manifest, ModelKind, RunConfig,
};
use crate::model::{Dataset, ParameterState, PriorConfig};
use crate::posterior::{
    interaction_recovery_rmse, posterior_mean_interaction, predict_cells, r_squared, rmse, summarize,
    PredictionSummary, Selector, Summary,
};
use crate::sampler::{PosteriorDraws, Sampler};
use crate::simulate::{named_layout, scenario_preset, simulate_trial, SimulationConfig};
use crate::tensor::FactorLayout;
use crate::viz::{
    emit_heatmap_svg, emit_level_summary, heatmap_csv, interaction_grid, prediction_grid,
    render_truth_scatter_svg, truth_scatter_csv, write_text, HeatmapGrid, ScatterPoint, VsupPalette,
};

#[derive(Parser, Debug)]
#[command(name = "bammit", version, about = "Bayesian AMMI models for multi-factor trials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a synthetic trial (train.csv, test.csv, truth.json).
    Simulate(SimulateArgs),
    /// Fit BAMMIT, AR-BAMMIT or classical AMMI to a CSV.
    Fit(FitArgs),
    /// Posterior predictions for observed or unobserved cells.
    Predict(PredictArgs),
    /// Parameter summaries or convergence diagnostics.
    Summarize(SummarizeArgs),
    /// Heatmaps, per-level summaries and truth scatters.
    Plot(PlotArgs),
    /// Out-of-sample RMSE / R² of several fits on one test set.
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value = "i")]
    scenario: String,
    #[arg(long, default_value_t = 1)]
    q_sim: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Replace the scenario's grid, e.g. 85,17,10,2.
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[arg(long)]
    sigma_b: Option<f64>,
    /// Remove this fraction of training cells at random.
    #[arg(long, default_value_t = 0.0)]
    drop_fraction: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    factors: Option<Vec<String>>,
    #[arg(long)]
    response: Option<String>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    ar_time: Option<String>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    iter: Option<usize>,
    #[arg(long)]
    burn: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Hold out rows at these levels, e.g. block=3,4.
    #[arg(long)]
    split_by: Option<String>,
    /// Separate test CSV to score after fitting.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// draws.ndjson, or ammi.json from `fit --model ammi`.
    #[arg(long)]
    draws: PathBuf,
    /// `all` for the full grid, or a CSV of factor columns.
    #[arg(long, default_value = "all")]
    cells: String,
    #[arg(long)]
    include_noise: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SummarizeArgs {
    #[arg(long)]
    draws: PathBuf,
    /// mu, sigma, b[:factor], lambda, beta[:factor], sigma_b, sigma_lambda,
    /// ar, diagnostics or acceptance.
    #[arg(long, default_value = "diagnostics")]
    what: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PlotKind {
    Heatmap,
    Interaction,
    ByLevel,
    TruthScatter,
}

#[derive(Args, Debug)]
struct PlotArgs {
    #[arg(long)]
    draws: PathBuf,
    #[arg(long, value_enum)]
    kind: PlotKind,
    /// Row factor of a heatmap (default: the first factor).
    #[arg(long)]
    rows: Option<String>,
    /// Column factor of a heatmap (default: the second factor).
    #[arg(long)]
    cols: Option<String>,
    /// Levels of the remaining factors, e.g. year=2015,block=3.
    #[arg(long)]
    fix: Option<String>,
    /// Factor for by-level plots.
    #[arg(long)]
    factor: Option<String>,
    /// truth.json for truth scatters.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// b or interaction, for truth scatters.
    #[arg(long, default_value = "b")]
    what: String,
    #[arg(long)]
    include_noise: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Shared value scale `lo:hi` instead of per-figure scaling.
    #[arg(long)]
    value_range: Option<String>,
    /// Shared uncertainty scale instead of per-figure scaling.
    #[arg(long)]
    sd_max: Option<f64>,
    #[arg(long, default_value_t = VsupPalette::DEFAULT_LEVELS)]
    levels: usize,
    /// SVG path; a CSV with the plotted numbers is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Test CSV holding the observed response.
    #[arg(long)]
    truth: PathBuf,
    /// Fit directories or files (draws.ndjson / ammi.json).
    #[arg(long, value_delimiter = ',', required = true)]
    fits: Vec<PathBuf>,
    /// Optional truth.json adding an interaction-recovery column.
    #[arg(long)]
    truth_params: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let argv: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a, argv),
        Command::Fit(a) => cmd_fit(a, argv),
        Command::Predict(a) => cmd_predict(a),
        Command::Summarize(a) => cmd_summarize(a),
        Command::Plot(a) => cmd_plot(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Argument(_)
        | Error::VersionMismatch { .. }
        | Error::Index { .. }
        | Error::LayoutMismatch(_) => 2,
        Error::NonFiniteState { .. } | Error::DegenerateInput(_) => 4,
        Error::EmptyData
        | Error::IncompleteTable { .. }
        | Error::MissingColumn(_)
        | Error::Parse { .. }
        | Error::EmptyFile(_)
        | Error::CorruptRecord { .. }
        | Error::Io(_) => 3,
    }
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(json_err)?;
    write_text(path, &(text + "\n"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::CorruptRecord {
        line: e.line(),
        message: format!("{}: {e}", path.display()),
    })
}

/// Simulated truth as written by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub config: SimulationConfig,
    pub truth: ParameterState,
}

fn cmd_simulate(a: SimulateArgs, argv: Vec<String>) -> Result<()> {
    let mut config = scenario_preset(&a.scenario, a.q_sim)?;
    if let Some(dims) = &a.dims {
        config.layout = named_layout(dims)?;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(s) = a.sigma_b {
        config.sigma_b_true = s;
    }
    if !(0.0..1.0).contains(&a.drop_fraction) {
        return Err(Error::arg("--drop-fraction must lie in [0, 1)"));
    }
    let mut trial = simulate_trial(&config)?;
    if a.drop_fraction > 0.0 {
        use rand::seq::SliceRandom;
        let n = trial.train.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut config.rng(3));
        let drop: std::collections::HashSet<usize> =
            idx.into_iter().take((a.drop_fraction * n as f64).round() as usize).collect();
        trial.train = trial.train.partition(|k, _| !drop.contains(&k)).0;
    }
    let out = &a.out;
    write_dataset_csv(&trial.train, &out.join("train.csv"))?;
    write_dataset_csv(&trial.test, &out.join("test.csv"))?;
    write_json(
        &out.join("truth.json"),
        &TruthFile {
            config: config.clone(),
            truth: trial.truth.clone(),
        },
    )?;
    let mut m = Manifest::new(
        "simulate",
        argv,
        Some(config.seed),
        serde_json::to_value(&config).map_err(json_err)?,
    );
    for f in ["train.csv", "test.csv", "truth.json"] {
        m.outputs.push(FileEntry::of(&out.join(f))?);
    }
    m.write(&out.join("manifest.json"))?;
    println!(
        "simulated scenario {} ({} train / {} test rows) into {}",
        a.scenario,
        trial.train.len(),
        trial.test.len(),
        out.display()
    );
    Ok(())
}

/// Numeric order when both labels parse as numbers, text order otherwise.
pub fn numeric_aware_cmp(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        _ => a.cmp(b),
    }
}

fn resolve_fit(a: &FitArgs) -> Result<RunConfig> {
    let mut c = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = a.model {
        c.model = m;
    }
    if let Some(p) = &a.data {
        c.data.path = Some(p.clone());
    }
    if let Some(f) = &a.factors {
        c.data.factors = f.clone();
    }
    if let Some(r) = &a.response {
        c.data.response = Some(r.clone());
    }
    if let Some(t) = &a.test {
        c.data.test = Some(t.clone());
    }
    if let Some(s) = &a.split_by {
        c.data.split_by = Some(s.clone());
    }
    if let Some(q) = a.q {
        c.q = q;
    }
    if let Some(t) = &a.ar_time {
        c.ar.time_factor = Some(t.clone());
    }
    if let Some(n) = a.chains {
        c.mcmc.n_chains = n;
    }
    if let Some(n) = a.iter {
        c.mcmc.n_iter = n;
    }
    if let Some(n) = a.burn {
        c.mcmc.n_burn = n;
        c.mcmc.adapt_window = c.mcmc.adapt_window.min(n);
    }
    if let Some(n) = a.thin {
        c.mcmc.thin = n;
    }
    if let Some(s) = a.seed {
        c.seed = Some(s);
    }
    if let Some(o) = &a.out {
        c.out = Some(o.clone());
    }
    c.mcmc.q = c.q;
    if let Some(s) = c.seed {
        c.mcmc.seed = s;
    }
    c.seed = Some(c.mcmc.seed);
    Ok(c)
}

fn split(data: &Dataset, spec: &str) -> Result<(Dataset, Dataset)> {
    let (factor, levels) = parse_split_by(spec)?;
    let v = data
        .layout
        .factor_index(&factor)
        .ok_or_else(|| Error::Config(format!("split factor `{factor}` is not a fitted factor")))?;
    let held: Vec<usize> = levels
        .iter()
        .map(|l| {
            data.layout
                .level_index(v, l)
                .ok_or_else(|| Error::Config(format!("level `{l}` of `{factor}` not in the data")))
        })
        .collect::<Result<_>>()?;
    Ok(data.partition(|_, r| !held.contains(&r.cell[v])))
}

#[derive(Debug, Serialize, Deserialize)]
struct Metrics {
    n_test: usize,
    rmse: f64,
    r_squared: f64,
    skipped_rows: usize,
}

/// Any fitted model the other subcommands can read back.
enum Fitted {
    Bayes(PosteriorDraws),
    Ammi(TwoWayAmmi),
}

fn locate_fit(path: &Path) -> PathBuf {
    if path.is_dir() {
        for f in ["draws.ndjson", "ammi.json"] {
            if path.join(f).exists() {
                return path.join(f);
            }
        }
    }
    path.to_path_buf()
}

fn load_fit(path: &Path) -> Result<Fitted> {
    let path = locate_fit(path);
    if path.extension().is_some_and(|e| e == "json") {
        Ok(Fitted::Ammi(read_json(&path)?))
    } else {
        Ok(Fitted::Bayes(read_draws(&path)?))
    }
}

fn load_draws(path: &Path) -> Result<PosteriorDraws> {
    match load_fit(path)? {
        Fitted::Bayes(d) => Ok(d),
        Fitted::Ammi(_) => Err(Error::arg("this command needs posterior draws, not an AMMI fit")),
    }
}

impl Fitted {
    fn model(&self) -> &'static str {
        match self {
            Fitted::Bayes(d) if d.ar_time_factor.is_some() => "ar-bammit",
            Fitted::Bayes(_) => "bammit",
            Fitted::Ammi(_) => "ammi",
        }
    }

    fn q(&self) -> usize {
        match self {
            Fitted::Bayes(d) => d.config.q,
            Fitted::Ammi(a) => a.fit.n_components(),
        }
    }

    /// Point predictions (posterior medians) for a test CSV; `None` where
    /// the fit has never seen a level.
    fn score(&self, test: &Path) -> Result<(Vec<f64>, Vec<Option<f64>>)> {
        match self {
            Fitted::Bayes(d) => {
                let (data, _) = parse_dataset_csv_with_layout(test, &d.layout, &d.response_name)?;
                let y = data.responses();
                let cells: Vec<Vec<usize>> = data.records.iter().map(|r| r.cell.clone()).collect();
                let p = predict_cells(d, &cells, false, 0)?;
                // rows with unseen levels were dropped by the layout-aware read
                Ok((y, p.into_iter().map(|s| Some(s.median)).collect()))
            }
            Fitted::Ammi(a) => {
                let data = parse_dataset_csv(
                    test,
                    &[a.row_factor.as_str(), a.col_factor.as_str()],
                    &a.response_name,
                )?;
                Ok((data.responses(), a.predict_dataset(&data)?))
            }
        }
    }
}

fn metrics_of(y: &[f64], p: &[Option<f64>], skipped: usize) -> Result<Metrics> {
    let (y, p): (Vec<f64>, Vec<f64>) = y
        .iter()
        .zip(p)
        .filter_map(|(y, p)| p.map(|p| (*y, p)))
        .unzip();
    Ok(Metrics {
        n_test: y.len(),
        rmse: rmse(&y, &p)?,
        r_squared: r_squared(&y, &p)?,
        skipped_rows: skipped + (p.len() - y.len()),
    })
}

fn cmd_fit(a: FitArgs, argv: Vec<String>) -> Result<()> {
    let mut cfg = resolve_fit(&a)?;
    let data_path = cfg
        .data
        .path
        .clone()
        .ok_or_else(|| Error::Config("no data file (--data)".into()))?;
    let response = cfg
        .data
        .response
        .clone()
        .ok_or_else(|| Error::Config("no response column (--response)".into()))?;
    if cfg.data.factors.is_empty() {
        return Err(Error::Config("no factor columns (--factors)".into()));
    }
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| Error::Config("no output directory (--out)".into()))?;
    let factor_refs: Vec<&str> = cfg.data.factors.iter().map(String::as_str).collect();
    let mut data = parse_dataset_csv(&data_path, &factor_refs, &response)?;
    if cfg.model == ModelKind::ArBammit && cfg.ar.time_factor.is_none() && data.layout.factor_index("year").is_some() {
        cfg.ar.time_factor = Some("year".into());
    }
    cfg.validate(Some(&data.layout))?;
    let time = match (cfg.model, &cfg.ar.time_factor) {
        (ModelKind::ArBammit, Some(t)) => {
            let v = data.layout.factor_index(t).expect("validated");
            data.sort_levels_by(v, numeric_aware_cmp)?;
            Some(v)
        }
        _ => None,
    };
    let (train, holdout) = match &cfg.data.split_by {
        Some(spec) => {
            let (tr, te) = split(&data, spec)?;
            (tr, Some(te))
        }
        None => (data, None),
    };
    let mut manifest = Manifest::new(
        "fit",
        argv,
        cfg.seed,
        serde_json::to_value(&cfg).map_err(json_err)?,
    );
    manifest.inputs.push(FileEntry::of(&data_path)?);
    std::fs::create_dir_all(&out)?;
    write_text(&out.join("config.toml"), &cfg.to_toml_string()?)?;
    let mut outputs = vec!["config.toml".to_string()];

    let test_path = match (&holdout, &cfg.data.test) {
        (Some(h), _) => {
            write_dataset_csv(h, &out.join("holdout.csv"))?;
            outputs.push("holdout.csv".into());
            Some(out.join("holdout.csv"))
        }
        (None, Some(t)) => {
            manifest.inputs.push(FileEntry::of(t)?);
            Some(t.clone())
        }
        (None, None) => None,
    };

    let fitted = match cfg.model {
        ModelKind::Ammi => {
            if train.layout.n_factors() > 2 {
                eprintln!(
                    "note: classical AMMI uses `{}` × `{}` and averages over the other factors",
                    train.layout.factor_names()[0],
                    train.layout.factor_names()[1]
                );
            }
            if train.layout.n_factors() < 2 {
                return Err(Error::Config("AMMI needs two factors".into()));
            }
            let fit = TwoWayAmmi::fit(&train, 0, 1, cfg.q)?;
            write_json(&out.join("ammi.json"), &fit)?;
            outputs.push("ammi.json".into());
            println!("AMMI fit with Q = {}: λ = {:?}", cfg.q, fit.fit.lambda);
            Fitted::Ammi(fit)
        }
        ModelKind::Bammit | ModelKind::ArBammit => {
            let priors = cfg.priors.clone().unwrap_or_else(|| {
                let (m, v) = train.response_moments();
                PriorConfig::for_response(m, if v > 0.0 { v } else { 1.0 })
            });
            let draws = Sampler::new(&train, priors, cfg.mcmc.clone()).with_ar_opt(time).run()?;
            write_draws(&draws, &out.join("draws.ndjson"))?;
            write_text(&out.join("diagnostics.csv"), &diagnostics_csv(&draws)?)?;
            outputs.push("draws.ndjson".into());
            outputs.push("diagnostics.csv".into());
            let worst = draws
                .diagnostics
                .iter()
                .filter_map(|d| d.rhat)
                .fold(f64::NAN, f64::max);
            println!(
                "{} fit: {} chains × {} draws, max R̂ {:.3}",
                cfg.model.as_str(),
                draws.draws.len(),
                draws.draws.first().map_or(0, Vec::len),
                worst
            );
            Fitted::Bayes(draws)
        }
    };
    if let Some(t) = test_path {
        let (y, p) = fitted.score(&t)?;
        let m = metrics_of(&y, &p, 0)?;
        println!("test RMSE {:.4}, R² {:.4} on {} rows", m.rmse, m.r_squared, m.n_test);
        write_json(&out.join("metrics.json"), &m)?;
        outputs.push("metrics.json".into());
    }
    for f in outputs {
        manifest.outputs.push(FileEntry::of(&out.join(f))?);
    }
    manifest.write(&out.join("manifest.json"))
}

fn summary_row(name: &str, s: &Summary) -> Vec<String> {
    vec![
        name.to_string(),
        s.mean.to_string(),
        s.sd.to_string(),
        s.q05.to_string(),
        s.q50.to_string(),
        s.q95.to_string(),
    ]
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(crate::viz::csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(crate::viz::csv_err)?;
    }
    crate::viz::finish_csv(w)
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

fn diagnostics_csv(d: &PosteriorDraws) -> Result<String> {
    csv_string(
        &["name", "rhat", "ess"],
        d.diagnostics
            .iter()
            .map(|s| vec![s.name.clone(), opt(s.rhat), opt(s.ess)]),
    )
}

fn predictions_csv(layout: &FactorLayout, preds: &[PredictionSummary]) -> Result<String> {
    let mut header: Vec<&str> = layout.factor_names().iter().map(String::as_str).collect();
    header.extend(["median", "mean", "sd", "q05", "q95"]);
    let names = layout.level_names();
    csv_string(
        &header,
        preds.iter().map(|p| {
            let mut row: Vec<String> = p
                .cell
                .iter()
                .enumerate()
                .map(|(v, &i)| names[v][i].clone())
                .collect();
            for x in [p.median, p.mean, p.sd, p.q05, p.q95] {
                row.push(x.to_string());
            }
            row
        }),
    )
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let fitted = load_fit(&a.draws)?;
    let text = match &fitted {
        Fitted::Bayes(d) => {
            let cells: Vec<Vec<usize>> = if a.cells == "all" {
                d.layout.cells().collect()
            } else {
                parse_cells_csv(Path::new(&a.cells), &d.layout)?
            };
            let preds = predict_cells(d, &cells, a.include_noise, a.seed)?;
            predictions_csv(&d.layout, &preds)?
        }
        Fitted::Ammi(m) => {
            let layout = FactorLayout::new(
                vec![m.row_factor.clone(), m.col_factor.clone()],
                vec![m.row_levels.clone(), m.col_levels.clone()],
            )?;
            let cells: Vec<Vec<usize>> = if a.cells == "all" {
                layout.cells().collect()
            } else {
                parse_cells_csv(Path::new(&a.cells), &layout)?
            };
            let preds = cells
                .into_iter()
                .map(|c| {
                    let y = crate::ammi::predict_ammi(&m.fit, c[0], c[1])?;
                    Ok(PredictionSummary {
                        cell: c,
                        median: y,
                        mean: y,
                        sd: 0.0,
                        q05: y,
                        q95: y,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            predictions_csv(&layout, &preds)?
        }
    };
    write_text(&a.out, &text)
}

fn cmd_summarize(a: SummarizeArgs) -> Result<()> {
    let d = load_draws(&a.draws)?;
    let text = match a.what.as_str() {
        "diagnostics" => diagnostics_csv(&d)?,
        "acceptance" => csv_string(
            &["block", "rate"],
            d.acceptance_rates
                .iter()
                .map(|(k, v)| vec![k.clone(), v.to_string()]),
        )?,
        other => {
            let sel = Selector::parse_with(other, Some(&d.layout))?;
            let rows = summarize(&d, &sel)?;
            csv_string(
                &["name", "mean", "sd", "q05", "q50", "q95"],
                rows.iter().map(|e| summary_row(&e.name, &e.summary)),
            )?
        }
    };
    write_text(&a.out, &text)
}

fn factor_arg(layout: &FactorLayout, name: Option<&str>, default: usize) -> Result<usize> {
    match name {
        None if default < layout.n_factors() => Ok(default),
        None => Err(Error::arg("the fit does not have enough factors for this plot")),
        Some(n) => layout
            .factor_index(n)
            .or_else(|| n.parse().ok().filter(|&v: &usize| v < layout.n_factors()))
            .ok_or_else(|| Error::arg(format!("unknown factor `{n}`"))),
    }
}

/// `year=2015,block=3` → {factor index: level index}.
pub fn parse_fix(layout: &FactorLayout, spec: Option<&str>) -> Result<BTreeMap<usize, usize>> {
    let mut out = BTreeMap::new();
    let Some(spec) = spec else { return Ok(out) };
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (f, l) = part
            .split_once('=')
            .ok_or_else(|| Error::arg(format!("`{part}` is not factor=level")))?;
        let v = layout
            .factor_index(f.trim())
            .ok_or_else(|| Error::arg(format!("unknown factor `{f}`")))?;
        let i = layout
            .level_index(v, l.trim())
            .ok_or_else(|| Error::arg(format!("factor `{f}` has no level `{l}`")))?;
        out.insert(v, i);
    }
    Ok(out)
}

fn palette_for(a: &PlotArgs, grid: &HeatmapGrid) -> Result<VsupPalette> {
    let mut p = grid.palette(a.levels);
    if let Some(r) = &a.value_range {
        let (lo, hi) = r
            .split_once(':')
            .and_then(|(l, h)| Some((l.trim().parse::<f64>().ok()?, h.trim().parse::<f64>().ok()?)))
            .filter(|(l, h)| h > l)
            .ok_or_else(|| Error::arg(format!("--value-range `{r}` is not lo:hi")))?;
        p.value_range = (lo, hi);
    }
    if let Some(u) = a.sd_max {
        if !(u > 0.0) {
            return Err(Error::arg("--sd-max must be positive"));
        }
        p.uncertainty_max = u;
    }
    Ok(p)
}

fn cmd_plot(a: PlotArgs) -> Result<()> {
    let d = load_draws(&a.draws)?;
    let csv_path = a.out.with_extension("csv");
    match a.kind {
        PlotKind::Heatmap | PlotKind::Interaction => {
            let r = factor_arg(&d.layout, a.rows.as_deref(), 0)?;
            let c = factor_arg(&d.layout, a.cols.as_deref(), 1)?;
            let fixed = parse_fix(&d.layout, a.fix.as_deref())?;
            let grid = if a.kind == PlotKind::Heatmap {
                prediction_grid(&d, (r, c), &fixed, a.include_noise, a.seed)?
            } else {
                interaction_grid(&d, (r, c), &fixed)?
            };
            emit_heatmap_svg(&grid, &palette_for(&a, &grid)?, &a.out)?;
            write_text(&csv_path, &heatmap_csv(&grid)?)?;
        }
        PlotKind::ByLevel => {
            let v = factor_arg(&d.layout, a.factor.as_deref(), 0)?;
            emit_level_summary(&d, v, a.include_noise, &csv_path, Some(&a.out))?;
        }
        PlotKind::TruthScatter => {
            let truth_path = a
                .truth
                .as_ref()
                .ok_or_else(|| Error::arg("truth-scatter needs --truth truth.json"))?;
            let t: TruthFile = read_json(truth_path)?;
            t.truth.check_layout(&d.layout)?;
            let points = truth_points(&d, &t.truth, &a.what)?;
            let title = format!("True vs estimated {}", if a.what == "b" { "main effects" } else { "interaction" });
            write_text(&a.out, &render_truth_scatter_svg(&title, &points))?;
            write_text(&csv_path, &truth_scatter_csv(&points)?)?;
        }
    }
    Ok(())
}

fn truth_points(d: &PosteriorDraws, truth: &ParameterState, what: &str) -> Result<Vec<ScatterPoint>> {
    match what {
        "b" => {
            let s = summarize(d, &Selector::MainEffects(None))?;
            let truths = truth.main_effects.iter().flatten();
            Ok(s.into_iter()
                .zip(truths)
                .map(|(e, &t)| ScatterPoint {
                    label: e.name,
                    truth: t,
                    estimate: e.summary.mean,
                    interval: Some((e.summary.q05, e.summary.q95)),
                })
                .collect())
        }
        "interaction" => {
            let cells: Vec<Vec<usize>> = d.layout.cells().collect();
            let est = posterior_mean_interaction(d, &cells)?;
            let names = d.layout.level_names();
            Ok(cells
                .iter()
                .zip(est)
                .map(|(c, e)| ScatterPoint {
                    label: c
                        .iter()
                        .enumerate()
                        .map(|(v, &i)| names[v][i].as_str())
                        .collect::<Vec<_>>()
                        .join(":"),
                    truth: truth.interaction_unchecked(c),
                    estimate: e,
                    interval: None,
                })
                .collect())
        }
        other => Err(Error::arg(format!("--what must be b or interaction, got `{other}`"))),
    }
}

fn cmd_compare(a: CompareArgs) -> Result<()> {
    let truth = match &a.truth_params {
        Some(p) => Some(read_json::<TruthFile>(p)?),
        None => None,
    };
    let mut rows = Vec::new();
    for path in &a.fits {
        let fit = load_fit(path)?;
        let (y, p) = fit.score(&a.truth)?;
        let m = metrics_of(&y, &p, 0)?;
        let interaction = match (&fit, &truth) {
            (Fitted::Bayes(d), Some(t)) => Some(interaction_recovery_rmse(d, &t.truth)?),
            _ => None,
        };
        println!(
            "{:<30} {:<10} Q={} RMSE {:.4} R² {:.4}",
            path.display(),
            fit.model(),
            fit.q(),
            m.rmse,
            m.r_squared
        );
        rows.push(vec![
            path.display().to_string(),
            fit.model().to_string(),
            fit.q().to_string(),
            m.n_test.to_string(),
            m.rmse.to_string(),
            m.r_squared.to_string(),
            opt(interaction),
        ]);
    }
    write_text(
        &a.out,
        &csv_string(
            &["fit", "model", "q", "n_test", "rmse", "r_squared", "interaction_rmse"],
            rows,
        )?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_labels_sort_numerically() {
        let mut v = vec!["2010", "9", "2009", "x", "10.5"];
        v.sort_by(|a, b| numeric_aware_cmp(a, b));
        assert_eq!(v, ["9", "10.5", "2009", "2010", "x"]);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::MissingColumn("y".into())), 3);
        assert_eq!(
            exit_code(&Error::NonFiniteState { chain: 0, iteration: 1, parameter: "mu".into() }),
            4
        );
        assert_eq!(run(["bammit", "fit", "--bogus"]), 2);
        assert_eq!(run(["bammit", "--help"]), 0);
    }

    #[test]
    fn fix_spec_parses_against_layout() {
        let layout = FactorLayout::from_dims(&[2, 3, 2]).unwrap();
        let f = parse_fix(&layout, Some("f3=f3_2, f2=f2_1")).unwrap();
        assert_eq!(f, BTreeMap::from([(1, 0), (2, 1)]));
        assert!(parse_fix(&layout, Some("f3=nope")).is_err());
        assert!(parse_fix(&layout, Some("f9=1")).is_err());
    }
}
