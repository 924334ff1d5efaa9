//! `nodepro`: profile, train, report, induct, synth and rerun.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use nodepro_core::inductive::{Metric, DEFAULT_K};
use nodepro_core::profile::{DEFAULT_EPSILON, DEFAULT_WALKS_PER_NODE, DEFAULT_WALK_LENGTH};
use nodepro_core::train::{ModelKind, DEFAULT_CHECKPOINTS, DEFAULT_PATIENCE};
use nodepro_core::uncertainty::TaxonomyConfig;
use nodepro_core::{Error, NeighborhoodMode, Result};

use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "nodepro", version, about = "Difficulty profiling for labeled graph nodes")]
pub struct Cli {
    /// Seed for walks, splits, weight init and generators.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "NODEPRO_THREADS")]
    pub threads: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Data-centric scores: profiles.csv
    Profile(ProfileArgs),
    /// Train a reference model: trace.nptr, emb.npem, loss_curves.csv
    Train(TrainArgs),
    /// Join profiles with checkpoint uncertainty: report.csv, scatter.csv
    Report(ReportArgs),
    /// Categorize unseen nodes by nearest-neighbor vote: induct.csv
    Induct(InductArgs),
    /// Generate synthetic datasets
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Re-execute the command recorded in a manifest
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Edge list (`u<TAB>v[<TAB>w]`).
    #[arg(long)]
    pub edges: PathBuf,
    /// NPFX or CSV feature matrix.
    #[arg(long)]
    pub features: PathBuf,
    /// `node<TAB>label` or `node<TAB>l1;l2`.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub num_classes: usize,
    #[arg(long)]
    pub directed: bool,
    /// Require undirected edge lists to list both directions instead of
    /// mirroring each edge.
    #[arg(long)]
    pub no_symmetrize: bool,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Random walks per node.
    #[arg(long, default_value_t = DEFAULT_WALKS_PER_NODE)]
    pub walks: usize,
    /// Steps per walk.
    #[arg(long, default_value_t = DEFAULT_WALK_LENGTH)]
    pub walk_length: usize,
    #[arg(long, default_value_t = NeighborhoodMode::Out)]
    pub neighborhood: NeighborhoodMode,
    /// Count the walk's start node among the observed labels.
    #[arg(long)]
    pub count_walk_start: bool,
    /// Also write per-node walk label counts (walk_counts.csv).
    #[arg(long)]
    pub walk_counts: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitKind {
    Partial,
    Full,
}

#[derive(Debug, Args)]
pub struct TaxonomyArgs {
    #[arg(long, default_value_t = TaxonomyConfig::default().c_up)]
    pub c_up: f64,
    #[arg(long, default_value_t = TaxonomyConfig::default().c_low)]
    pub c_low: f64,
}

impl TaxonomyArgs {
    pub fn config(&self) -> Result<TaxonomyConfig> {
        let cfg = TaxonomyConfig {
            c_up: self.c_up,
            c_low: self.c_low,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long, default_value_t = ModelKind::MeanAgg)]
    pub model: ModelKind,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = DEFAULT_PATIENCE)]
    pub patience: usize,
    #[arg(long, default_value_t = DEFAULT_CHECKPOINTS)]
    pub checkpoints: usize,
    #[arg(long, value_enum, default_value_t = SplitKind::Partial)]
    pub split: SplitKind,
    #[arg(long, default_value_t = 0.6)]
    pub train_frac: f64,
    #[arg(long, default_value_t = 0.2)]
    pub val_frac: f64,
    /// Use a saved split (T/V/E/N/F per line) instead of drawing one.
    #[arg(long, conflicts_with = "split")]
    pub split_file: Option<PathBuf>,
    #[arg(long, default_value_t = NeighborhoodMode::Out)]
    pub neighborhood: NeighborhoodMode,
    /// Edge list of an augmented graph to evaluate every checkpoint on.
    #[arg(long, requires = "augmented_features")]
    pub augmented_edges: Option<PathBuf>,
    #[arg(long, requires = "augmented_edges")]
    pub augmented_features: Option<PathBuf>,
    /// Thresholds for the per-category curves in loss_curves.csv.
    #[command(flatten)]
    pub taxonomy: TaxonomyArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// profiles.csv from `nodepro profile`.
    #[arg(long)]
    pub profiles: PathBuf,
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub num_classes: usize,
    #[command(flatten)]
    pub taxonomy: TaxonomyArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InductArgs {
    /// Embeddings of the reference nodes.
    #[arg(long)]
    pub reference_emb: PathBuf,
    /// report.csv whose category column labels the reference nodes.
    #[arg(long)]
    pub reference_report: PathBuf,
    /// Embeddings containing the new nodes.
    #[arg(long)]
    pub new_emb: PathBuf,
    /// Mask file (`node<TAB>0|1`) selecting the new nodes among the rows of
    /// --new-emb and --truth-trace; without it every row is new.
    #[arg(long)]
    pub new_mask: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value_t = Metric::Euclidean)]
    pub metric: Metric,
    /// Trace over the augmented graph, for ground-truth categories.
    #[arg(long, requires = "truth_labels")]
    pub truth_trace: Option<PathBuf>,
    #[arg(long, requires_all = ["truth_trace", "num_classes"])]
    pub truth_labels: Option<PathBuf>,
    #[arg(long)]
    pub num_classes: Option<usize>,
    #[command(flatten)]
    pub taxonomy: TaxonomyArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Planted-partition graph with class-centroid features
    Planted(PlantedArgs),
    /// Triplet graph with corrupted entities and flipped labels
    Kb(KbArgs),
}

#[derive(Debug, Args)]
pub struct PlantedArgs {
    #[arg(long, default_value_t = 200)]
    pub nodes: usize,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long, default_value_t = 0.05)]
    pub intra: f64,
    #[arg(long, default_value_t = 0.005)]
    pub inter: f64,
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    /// Comma-separated per-class noise scales.
    #[arg(long, value_delimiter = ',')]
    pub class_noise: Option<Vec<f64>>,
    /// Reject configs with intra < inter.
    #[arg(long)]
    pub homophilous: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct KbArgs {
    #[arg(long, default_value_t = 1000)]
    pub entities: usize,
    #[arg(long, default_value_t = 50)]
    pub relations: usize,
    #[arg(long, default_value_t = 2000)]
    pub triplets: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.01)]
    pub corrupt: f64,
    #[arg(long, default_value_t = 0.30)]
    pub flip: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    pub manifest: PathBuf,
    /// Write into this directory instead of the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Default values shared by every command, in `--help` and in manifests.
pub fn defaults_table() -> Vec<(&'static str, String)> {
    let tax = TaxonomyConfig::default();
    vec![
        ("epsilon", DEFAULT_EPSILON.to_string()),
        ("walks", DEFAULT_WALKS_PER_NODE.to_string()),
        ("walk-length", DEFAULT_WALK_LENGTH.to_string()),
        ("k", DEFAULT_K.to_string()),
        ("c-up", tax.c_up.to_string()),
        ("c-low", tax.c_low.to_string()),
        ("checkpoints", DEFAULT_CHECKPOINTS.to_string()),
        ("patience", DEFAULT_PATIENCE.to_string()),
    ]
}

fn after_help() -> String {
    let mut s = String::from("Defaults:\n");
    for (k, v) in defaults_table() {
        s.push_str(&format!("  {k:<12} {v}\n"));
    }
    s.push_str("\nExit codes: 0 success, 2 invalid input or configuration, 1 internal error.");
    s
}

pub fn parse<I, T>(args: I) -> std::result::Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = Cli::command().after_help(after_help()).try_get_matches_from(args)?;
    Cli::from_arg_matches(&matches)
}

fn init_threads(threads: Option<usize>) -> Result<usize> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        // A second call (rerun) finds the pool already built; keep it.
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::debug!("thread pool already initialized");
        }
    }
    Ok(rayon::current_num_threads())
}

/// Runs one parsed command line and writes its manifest.
fn execute(cli: Cli, argv: Vec<String>) -> Result<()> {
    let start = Instant::now();
    let threads = init_threads(cli.threads)?;
    if let Command::Rerun(args) = &cli.command {
        return rerun(args);
    }
    let outcome = commands::run(&cli)?;
    for line in &outcome.stdout {
        println!("{line}");
    }
    let outputs = outcome
        .outputs
        .iter()
        .map(|p| manifest::FileDigest::of(p))
        .collect::<Result<Vec<_>>>()?;
    let inputs = outcome
        .inputs
        .iter()
        .map(|p| manifest::FileDigest::of(p))
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        tool: "nodepro".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: outcome.command.clone(),
        argv,
        config: outcome.config,
        defaults: defaults_table().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        inputs,
        outputs,
        threads,
        duration_seconds: start.elapsed().as_secs_f64(),
    };
    manifest.save(&outcome.out_dir)?;
    Ok(())
}

/// Replaces the value following `--out` in a recorded command line.
fn redirect_out(argv: &mut [String], out: &std::path::Path) -> Result<()> {
    let pos = argv
        .iter()
        .position(|a| a == "--out")
        .ok_or_else(|| Error::Invalid("recorded command has no --out".into()))?;
    let slot = argv
        .get_mut(pos + 1)
        .ok_or_else(|| Error::Invalid("recorded --out has no value".into()))?;
    *slot = out.to_string_lossy().into_owned();
    Ok(())
}

fn rerun(args: &RerunArgs) -> Result<()> {
    let recorded = RunManifest::load(&args.manifest)?;
    let mut argv = recorded.argv;
    if let Some(out) = &args.out {
        redirect_out(&mut argv, out)?;
    }
    let cli = parse(std::iter::once("nodepro".to_string()).chain(argv.iter().cloned()))
        .map_err(|e| Error::Invalid(format!("manifest command line does not parse: {e}")))?;
    if matches!(cli.command, Command::Rerun(_)) {
        return Err(Error::Invalid("a manifest cannot record a rerun".into()));
    }
    execute(cli, argv)
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let cli = match parse(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli, args[1..].to_vec()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 2 } else { 1 })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn redirect_out_swaps_only_the_value() {
        let mut a = argv("--seed 3 synth planted --out old --nodes 9");
        redirect_out(&mut a, std::path::Path::new("new")).unwrap();
        assert_eq!(a, argv("--seed 3 synth planted --out new --nodes 9"));
        assert!(redirect_out(&mut argv("profile --edges e"), std::path::Path::new("x")).is_err());
        assert!(redirect_out(&mut argv("profile --out"), std::path::Path::new("x")).is_err());
    }

    #[test]
    fn help_text_lists_every_default() {
        let text = after_help();
        for (k, v) in defaults_table() {
            assert!(text.contains(k) && text.contains(&v), "{k}");
        }
        assert!(text.contains("Exit codes"));
    }

    #[test]
    fn global_flags_parse_anywhere() {
        let cli = parse(argv("nodepro synth planted --out d --seed 7 --threads 2")).unwrap();
        assert_eq!((cli.seed, cli.threads), (7, Some(2)));
        assert!(parse(argv("nodepro synth planted")).is_err());
        assert!(parse(argv("nodepro nosuch")).is_err());
    }
}
