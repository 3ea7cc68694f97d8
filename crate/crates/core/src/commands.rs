//! Command-line interface: simulate, train, evaluate, compare and
//! inspect-weights.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::report::{render_report, render_significance};
use crate::eval::{compare_models, evaluate, low_overlap_subset, Metric};
use crate::io::{self, ModelFile, Provenance};
use crate::model::{feature_importance, importance_rank, LinearModel};
use crate::par::Execution;
use crate::simulator::{simulate, split_by_qid, SimConfig};
use crate::trainer::{train_variant_with, TrainConfig, TrainHistory, Variant};

const TRAIN_FIELDS: &[(&str, &str)] = &[
    ("lambda_rank", "weight of the click pairwise (RankNet) loss"),
    (
        "lambda_list",
        "weight of the graded-label listwise (ListNet) loss",
    ),
    ("tau", "ListNet target temperature"),
    ("eta", "final locale boost factor (>= 1)"),
    (
        "per_locale_eta",
        "per-locale overrides of eta, e.g. { JP = 3.0 }",
    ),
    ("epochs", "full-batch gradient steps"),
    (
        "warmup_epochs",
        "epochs trained with eta held at 1 before the linear ramp",
    ),
    ("learning_rate", "gradient step size"),
    ("l2", "L2 penalty on the weights"),
    ("seed", "seed for small_uniform initialization"),
    ("init", "weight initialization: zeros or small_uniform"),
    (
        "semantic_feature",
        "feature column hidden from the prod variant",
    ),
];

const SIM_FIELDS: &[(&str, &str)] = &[
    ("seed", "master seed"),
    ("locales", "locales with query and template counts"),
    ("dominant_locale", "locale favoured by the logging ranker"),
    ("feature_dim", "feature dimension (>= 3)"),
    ("semantic_column", "column holding semantic similarity"),
    ("popularity_column", "column holding popularity"),
    (
        "locale_match_column",
        "column holding the noisy locale-match feature",
    ),
    ("list_size", "candidates per query list"),
    (
        "local_share",
        "fraction of each list drawn from the query's own locale",
    ),
    ("sessions_per_query", "logged sessions per query"),
    (
        "position_bias_exponent",
        "examination at rank k is (1/k)^gamma",
    ),
    (
        "click_noise",
        "uniform noise blended into click attractiveness",
    ),
    (
        "label_noise",
        "probability of a +-1 graded-label perturbation",
    ),
    (
        "label_withhold_fraction",
        "fraction of queries without graded labels",
    ),
    (
        "exposure_tilt",
        "popularity advantage of dominant-locale templates",
    ),
    (
        "local_relevance_bonus",
        "latent relevance shift for locale-matching templates",
    ),
    ("semantic_noise", "noise on the semantic-similarity feature"),
    ("locale_feature_noise", "noise on the locale-match feature"),
    (
        "logging_popularity_weight",
        "logging ranker weight on popularity",
    ),
    (
        "logging_semantic_weight",
        "logging ranker weight on semantic similarity",
    ),
    (
        "train_fraction",
        "per-locale share of queries in train.jsonl",
    ),
];

fn field_table<T: Serialize>(title: &str, defaults: &T, fields: &[(&str, &str)]) -> String {
    let value = toml::Value::try_from(defaults).expect("config serializes to TOML");
    let table = value.as_table().expect("config is a table");
    let mut out = format!("{title} (TOML keys, defaults in brackets):\n");
    for (name, description) in fields {
        let default = table.get(*name).map_or_else(String::new, |v| v.to_string());
        let _ = writeln!(out, "  {name:<26} {description} [{default}]");
    }
    out
}

pub fn train_config_help() -> String {
    field_table("Training config", &TrainConfig::default(), TRAIN_FIELDS)
}

pub fn sim_config_help() -> String {
    field_table("Simulation config", &SimConfig::default(), SIM_FIELDS)
}

#[derive(Debug, Parser)]
#[command(
    name = "localrank",
    version,
    about = "Locale-aware multi-objective learning to rank",
    after_help = format!("{}\n{}", train_config_help(), sim_config_help())
)]
pub struct Cli {
    /// Run per-query work on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with click logs and labels, split into
    /// train.jsonl and eval.jsonl.
    #[command(after_help = sim_config_help())]
    Simulate(SimulateArgs),
    /// Train one variant and write the model and its loss history.
    #[command(after_help = train_config_help())]
    Train(TrainArgs),
    /// Ranking quality and region-match tables for one model.
    Evaluate(EvaluateArgs),
    /// Per-locale paired significance test of model B over model A.
    Compare(CompareArgs),
    /// Feature-importance table with the semantic feature's rank.
    InspectWeights(InspectArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulation config (TOML, or JSON by extension). Defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Training config (TOML, or JSON by extension). Defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_variant)]
    pub variant: Variant,
    /// Model file to write; the history goes next to it as `<stem>.history.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub lambda_rank: Option<f64>,
    #[arg(long)]
    pub lambda_list: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub warmup_epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Cutoffs.
    #[arg(long, value_delimiter = ',', default_value = "5,20")]
    pub k: Vec<usize>,
    /// Output directory for report.json and report.txt.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Baseline model A, then candidate model B.
    #[arg(long, num_args = 1, required = true)]
    pub model: Vec<PathBuf>,
    /// local, ndcg, precision or recall.
    #[arg(long, default_value = "ndcg", value_parser = parse_metric)]
    pub metric: Metric,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Keep only queries whose top-k Jaccard overlap is at most this value.
    #[arg(long)]
    pub max_overlap: Option<f64>,
    /// Output directory for significance.json and significance.txt.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset used for per-feature standard deviations.
    #[arg(long)]
    pub dataset: PathBuf,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_metric(s: &str) -> std::result::Result<Metric, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Written next to the simulated datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config: SimConfig,
    pub train: SplitInfo,
    pub eval: SplitInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub path: String,
    pub queries: usize,
    pub digest: String,
}

fn out_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let execution = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&args, out).map(drop),
        Command::Train(args) => cmd_train(&args, execution, out, err).map(drop),
        Command::Evaluate(args) => cmd_evaluate(&args, execution, out).map(drop),
        Command::Compare(args) => cmd_compare(&args, out).map(drop),
        Command::InspectWeights(args) => cmd_inspect_weights(&args, out).map(drop),
    }
}

pub fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<Manifest> {
    let mut config = match &args.config {
        Some(path) => io::read_sim_config(path)?,
        None => SimConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate()?;
    let dataset = simulate(&config)?;
    let (train, eval) = split_by_qid(&dataset, config.train_fraction);
    create_dir(&args.out)?;
    let mut split = |name: &str, ds: &Dataset| -> Result<SplitInfo> {
        io::write_dataset(ds, args.out.join(name))?;
        writeln!(
            out,
            "wrote {} ({} queries)",
            args.out.join(name).display(),
            ds.queries.len()
        )
        .map_err(out_err)?;
        Ok(SplitInfo {
            path: name.to_owned(),
            queries: ds.queries.len(),
            digest: io::dataset_digest(ds),
        })
    };
    let manifest = Manifest {
        seed: config.seed,
        train: split("train.jsonl", &train)?,
        eval: split("eval.jsonl", &eval)?,
        config,
    };
    io::write_json(args.out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// `models/prod.json` -> `models/prod.history.json`.
pub fn history_path(model_path: &Path) -> PathBuf {
    let stem = model_path
        .file_stem()
        .map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned());
    model_path.with_file_name(format!("{stem}.history.json"))
}

fn train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut config = match &args.config {
        Some(path) => io::read_train_config(path)?,
        None => TrainConfig::default(),
    };
    let overrides = [
        (&mut config.lambda_rank, args.lambda_rank),
        (&mut config.lambda_list, args.lambda_list),
        (&mut config.tau, args.tau),
        (&mut config.eta, args.eta),
        (&mut config.learning_rate, args.learning_rate),
        (&mut config.l2, args.l2),
    ];
    for (field, value) in overrides {
        if let Some(v) = value {
            *field = v;
        }
    }
    if let Some(v) = args.epochs {
        config.epochs = v;
    }
    if let Some(v) = args.warmup_epochs {
        config.warmup_epochs = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    config.validate()?;
    Ok(config)
}

pub fn render_history(history: &TrainHistory) -> String {
    let mut s = format!(
        "{:>5} {:>8} {:>12} {:>12} {:>12} {:>12}\n",
        "epoch", "eta", "pairwise", "listwise", "combined", "|grad|"
    );
    for r in &history.records {
        let _ = writeln!(
            s,
            "{:>5} {:>8.4} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
            r.epoch,
            r.eta_effective,
            r.mean_pairwise,
            r.mean_listwise,
            r.mean_combined,
            r.gradient_norm
        );
    }
    s
}

pub fn cmd_train(
    args: &TrainArgs,
    execution: Execution,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<ModelFile> {
    let config = train_config(args)?;
    let dataset = io::read_dataset(&args.dataset)?;
    let (model, history) = train_variant_with(&dataset, args.variant, &config, execution)?;
    out.write_all(render_history(&history).as_bytes())
        .map_err(out_err)?;
    if history.label_fallback_queries > 0 && args.variant != Variant::ProdBaseline {
        writeln!(
            err,
            "warning: {} of {} queries lack complete graded labels and train on clicks only",
            history.label_fallback_queries,
            dataset.queries.len()
        )
        .map_err(out_err)?;
    }
    let mut file = ModelFile::new(&model);
    file.variant = Some(args.variant);
    file.train_config = Some(args.variant.config(&config));
    file.provenance = Provenance {
        seed: Some(config.seed),
        dataset_digest: Some(io::dataset_digest(&dataset)),
    };
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    io::write_model(&file, &args.out)?;
    io::write_json(history_path(&args.out), &history)?;
    writeln!(out, "wrote {}", args.out.display()).map_err(out_err)?;
    Ok(file)
}

fn model_name(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned())
}

fn load_model(path: &Path) -> Result<LinearModel> {
    io::read_model(path)?.model()
}

pub fn cmd_evaluate(
    args: &EvaluateArgs,
    execution: Execution,
    out: &mut dyn Write,
) -> Result<String> {
    let dataset = io::read_dataset(&args.dataset)?;
    let model = load_model(&args.model)?;
    let report = evaluate(&dataset, &model, &args.k, &Metric::ALL, execution)?;
    let text = render_report(&model_name(&args.model), &report);
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        io::write_json(dir.join("report.json"), &report)?;
        io::write_text(dir.join("report.txt"), &text)?;
    }
    out.write_all(text.as_bytes()).map_err(out_err)?;
    Ok(text)
}

pub fn cmd_compare(args: &CompareArgs, out: &mut dyn Write) -> Result<String> {
    let [path_a, path_b] = args.model.as_slice() else {
        return Err(Error::invalid(
            "model",
            "pass --model exactly twice (A then B)",
        ));
    };
    let mut dataset = io::read_dataset(&args.dataset)?;
    let (a, b) = (load_model(path_a)?, load_model(path_b)?);
    if let Some(max) = args.max_overlap {
        dataset = low_overlap_subset(&dataset, &a, &b, args.k, max)?;
    }
    let result = compare_models(&dataset, &a, &b, args.metric, args.k, args.alpha)?;
    let text = render_significance(&result, &model_name(path_a), &model_name(path_b));
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        io::write_json(dir.join("significance.json"), &result)?;
        io::write_text(dir.join("significance.txt"), &text)?;
    }
    out.write_all(text.as_bytes()).map_err(out_err)?;
    Ok(text)
}

pub fn cmd_inspect_weights(args: &InspectArgs, out: &mut dyn Write) -> Result<String> {
    let file = io::read_model(&args.model)?;
    let model = file.model()?;
    let dataset = io::read_dataset(&args.dataset)?;
    let table = feature_importance(&model, &dataset)?;
    let semantic = file.train_config.as_ref().map_or_else(
        || TrainConfig::default().semantic_feature,
        |c| c.semantic_feature.clone(),
    );
    let mut text = format!(
        "{:>4} {:<24} {:>12} {:>12} {:>12}\n",
        "rank", "feature", "weight", "stddev", "importance"
    );
    for (pos, row) in table.iter().enumerate() {
        let mark = if row.name == semantic { "  <-" } else { "" };
        let _ = writeln!(
            text,
            "{:>4} {:<24} {:>12.6} {:>12.6} {:>12.6}{mark}",
            pos + 1,
            row.name,
            row.weight,
            row.stddev,
            row.importance
        );
    }
    match importance_rank(&table, &semantic) {
        Some(rank) => {
            let _ = writeln!(text, "{semantic} ranks {rank} of {}", table.len());
        }
        None => {
            let _ = writeln!(text, "{semantic} is not a feature of this model");
        }
    }
    out.write_all(text.as_bytes()).map_err(out_err)?;
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn help_lists_every_config_field_with_default() {
        for (fields, defaults, help) in [
            (
                TRAIN_FIELDS,
                toml::Value::try_from(TrainConfig::default()).unwrap(),
                train_config_help(),
            ),
            (
                SIM_FIELDS,
                toml::Value::try_from(SimConfig::default()).unwrap(),
                sim_config_help(),
            ),
        ] {
            let table = defaults.as_table().unwrap();
            let documented: Vec<&str> = fields.iter().map(|(n, _)| *n).collect();
            let mut actual: Vec<&str> = table.keys().map(String::as_str).collect();
            let mut sorted = documented.clone();
            sorted.sort_unstable();
            actual.sort_unstable();
            assert_eq!(sorted, actual);
            for (name, value) in table {
                assert!(help.contains(&format!("{name} ")), "{name}");
                assert!(help.contains(&format!("[{value}]")), "{name} = {value}");
            }
        }
    }

    #[test]
    fn unknown_variant_is_a_usage_error() {
        let err = Cli::try_parse_from([
            "localrank",
            "train",
            "--dataset",
            "d",
            "--variant",
            "big",
            "--out",
            "m",
        ])
        .unwrap_err();
        assert_eq!(err.kind(), clap::error::ErrorKind::ValueValidation);
    }

    #[test]
    fn history_sits_next_to_model() {
        assert_eq!(
            history_path(Path::new("m/prod.json")),
            PathBuf::from("m/prod.history.json")
        );
    }
}
