use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};

use perfspace::augment::{analyze, write_analysis, DEFAULT_ALPHA};
use perfspace::data::{CategoricalColumns, PreprocessSpec};
use perfspace::experiment::report::{
    prepare_out_dir, write_ablation, write_condition, write_granularity, write_learning_curve, write_manifest,
    write_sampling_summary, PinnedDefaults, RunManifest,
};
use perfspace::experiment::{
    ablation_rows, check_shared_folds, default_grid, evaluate_condition, granularity_compare, learning_curve,
    normalise_grid, Condition, ExperimentConfig, Formulation, MetaLearner, SvrGnbLearner,
};
use perfspace::labels::LabelingConfig;
use perfspace::meta::{write_feature_csv, write_meta_csv, MetaDataset, MetaInstance, Provenance};
use perfspace::pipeline::{batch_metafeatures, batch_metalabels};
use perfspace::synth::{generate, DeterministicProposer, HttpChatBackend, LlmConfig, LlmProposer, RunConfig};
use perfspace::{Error, Result};

#[derive(Parser)]
#[command(
    name = "perfspace",
    version,
    about = "Performance-space meta-learning toolkit",
    args_override_self = true
)]
struct Cli {
    /// TOML file whose keys stand in for command-line flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Twelve complexity meta-features per dataset.
    Metafeatures(FeatureArgs),
    /// Meta-features plus tuned performance labels per dataset.
    Metalabels(LabelArgs),
    /// Fill the performance grid with synthetic datasets.
    Generate(GenerateArgs),
    /// Monte Carlo study of uniform versus margin sampling over a pool.
    AugmentAnalyze(AnalyzeArgs),
    /// Evaluate one augmentation condition, or all three with `--condition all`.
    Evaluate(EvaluateArgs),
    /// Sweep the synthetic budget and test uniform against margin sampling.
    LearningCurve(CurveArgs),
    /// Compare two augmentation pools, each used in full.
    Granularity(GranularityArgs),
}

#[derive(Args)]
struct CorpusArgs {
    /// A CSV file or a directory searched recursively for CSV files.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "target")]
    target: String,
    /// Comma-separated columns removed before encoding.
    #[arg(long, value_delimiter = ',')]
    drop: Vec<String>,
    /// Comma-separated columns always one-hot encoded.
    #[arg(long, value_delimiter = ',')]
    categorical: Vec<String>,
    #[arg(long, default_value = "real")]
    provenance: Provenance,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

impl CorpusArgs {
    fn spec(&self) -> PreprocessSpec {
        PreprocessSpec {
            target_column: self.target.clone(),
            drop_columns: self.drop.clone(),
            categorical_columns: if self.categorical.is_empty() {
                CategoricalColumns::Auto
            } else {
                CategoricalColumns::Listed(self.categorical.clone())
            },
        }
    }
}

#[derive(Args)]
struct FeatureArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
}

#[derive(Args)]
struct LabelArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, default_value_t = 50)]
    trial_budget: usize,
    #[arg(long, default_value_t = 10)]
    inner_folds: usize,
    #[arg(long, default_value_t = 1)]
    inner_repeats: usize,
    #[arg(long, default_value_t = 10)]
    outer_folds: usize,
    #[arg(long, default_value_t = 10)]
    outer_repeats: usize,
    /// Significance level of the Friedman and Nemenyi tests.
    #[arg(long, default_value_t = 0.05)]
    significance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenerateArgs {
    /// Bins per axis of the performance grid.
    #[arg(long, default_value_t = 7)]
    grid: usize,
    #[arg(long, default_value_t = 10)]
    witnesses: usize,
    #[arg(long, default_value_t = 84)]
    budget: usize,
    #[arg(long, default_value = "det", value_parser = ["det", "llm"])]
    proposer: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rows per dataset built by the deterministic proposer.
    #[arg(long, default_value_t = 200)]
    n_rows: usize,
    /// Model id for the LLM proposer; overrides `[llm] model`.
    #[arg(long)]
    model: Option<String>,
    /// Chat-completions URL; overrides `[llm] endpoint`.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long, default_value_t = 400)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ExpArgs {
    /// Meta-dataset CSV; its rows with provenance `real` are evaluated.
    #[arg(long)]
    meta: PathBuf,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    /// Inclusive range `a..b` or a comma-separated list.
    #[arg(long, default_value = "0..9", value_parser = parse_seeds)]
    seeds: Seeds,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value = "both")]
    formulation: Formulation,
    #[arg(long, default_value_t = 1.0)]
    svr_c: f64,
    #[arg(long, default_value_t = 0.1)]
    svr_epsilon: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    exp: ExpArgs,
    /// Pool CSV; its rows with provenance `synthetic` are sampled.
    #[arg(long)]
    pool: Option<PathBuf>,
    /// `none`, `uniform`, `margin` or `all`.
    #[arg(long, default_value = "all")]
    condition: String,
    #[arg(long, default_value_t = 0)]
    n_syn: usize,
}

#[derive(Args)]
struct CurveArgs {
    #[command(flatten)]
    exp: ExpArgs,
    #[arg(long)]
    pool: PathBuf,
    /// Comma-separated budgets; the pool size is always appended.
    #[arg(long, value_delimiter = ',')]
    n_grid: Vec<usize>,
    /// Spacing of the default grid.
    #[arg(long, default_value_t = 20)]
    step: usize,
    /// Budget reported in ablation.csv; defaults to the largest grid point below the pool size.
    #[arg(long)]
    ablation_at: Option<usize>,
}

#[derive(Args)]
struct GranularityArgs {
    #[command(flatten)]
    exp: ExpArgs,
    #[arg(long)]
    pool_a: PathBuf,
    #[arg(long)]
    pool_b: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
struct Seeds(Vec<u64>);

fn parse_seeds(s: &str) -> std::result::Result<Seeds, String> {
    let bad = |_| format!("invalid seed list {s:?}");
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(bad)?, b.trim().parse().map_err(bad)?);
        if a > b {
            return Err(format!("empty seed range {s:?}"));
        }
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|t| t.trim().parse().map_err(bad))
            .collect::<std::result::Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(Seeds(seeds))
}

fn toml_to_arg(v: &toml::Value) -> Option<String> {
    match v {
        toml::Value::String(s) => Some(s.clone()),
        toml::Value::Integer(i) => Some(i.to_string()),
        toml::Value::Float(f) => Some(f.to_string()),
        toml::Value::Boolean(_) => None,
        toml::Value::Array(a) => Some(a.iter().filter_map(toml_to_arg).collect::<Vec<_>>().join(",")),
        _ => None,
    }
}

fn load_toml(path: &Path) -> Result<toml::Table> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parameter(format!("{}: {e}", path.display())))?;
    text.parse::<toml::Table>()
        .map_err(|e| Error::Parameter(format!("{}: {e}", path.display())))
}

/// Splices flags from the config file in front of the user's own, so that
/// explicit flags win. Top-level keys apply to every command that has the
/// flag, keys of a table named after the subcommand only to it.
fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let text: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut path = None;
    for (i, a) in text.iter().enumerate() {
        if a == "--config" {
            path = text.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(argv) };
    // The subcommand is the first bare token that is not the value of --config.
    let Some(sub_pos) = (1..text.len()).find(|&i| !text[i].starts_with('-') && text[i - 1] != "--config") else {
        return Ok(argv);
    };
    let table = load_toml(Path::new(&path))?;
    let sub = text[sub_pos].as_str();
    let mut extra: Vec<OsString> = Vec::new();
    let mut push = |k: &str, v: &toml::Value| {
        let flag = format!("--{}", k.replace('_', "-"));
        match v {
            toml::Value::Boolean(true) => extra.push(flag.into()),
            toml::Value::Boolean(false) | toml::Value::Table(_) => {}
            other => {
                if let Some(s) = toml_to_arg(other) {
                    extra.push(flag.into());
                    extra.push(s.into());
                }
            }
        }
    };
    // Shared keys only reach subcommands that define the flag.
    let cmd = Cli::command();
    let known: Vec<String> = cmd
        .find_subcommand(sub)
        .map(|c| {
            c.get_arguments()
                .filter_map(|a| a.get_long().map(str::to_string))
                .collect()
        })
        .unwrap_or_default();
    for (k, v) in &table {
        if known.contains(&k.replace('_', "-")) {
            push(k, v);
        }
    }
    if let Some(toml::Value::Table(t)) = table.get(sub) {
        for (k, v) in t {
            push(k, v);
        }
    }
    let mut out = argv[..=sub_pos].to_vec();
    out.extend(extra);
    out.extend_from_slice(&argv[sub_pos + 1..]);
    Ok(out)
}

fn ensure_writable(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::AlreadyExists(path.to_path_buf()));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::Parameter(format!("{}: {e}", parent.display())))?;
    }
    Ok(())
}

fn load_rows(path: &Path, provenance: Provenance) -> Result<Vec<MetaInstance>> {
    let rows = MetaDataset::load(path)?.with_provenance(provenance).rows;
    if rows.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "{}: no rows with provenance {provenance}",
            path.display()
        )));
    }
    Ok(rows)
}

impl ExpArgs {
    fn config(&self) -> ExperimentConfig {
        ExperimentConfig {
            folds: self.folds,
            repeats: self.repeats,
            seeds: self.seeds.0.clone(),
            alpha: self.alpha,
            formulation: self.formulation,
            ..ExperimentConfig::default()
        }
    }

    fn learner(&self) -> SvrGnbLearner {
        let mut l = SvrGnbLearner::default();
        l.svr.c = self.svr_c;
        l.svr.epsilon = self.svr_epsilon;
        l
    }

    fn manifest(&self, command: &str, cfg: ExperimentConfig, inputs: &[&Path], n_real: usize) -> RunManifest {
        let learner = self.learner();
        RunManifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            learner: learner.name(),
            pinned: PinnedDefaults::new(&cfg, &learner),
            config: cfg,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            n_real,
            pool_sizes: Vec::new(),
            n_grid: Vec::new(),
        }
    }
}

fn run_metafeatures(a: &FeatureArgs) -> Result<()> {
    let c = &a.corpus;
    ensure_writable(&c.out, c.force)?;
    let rows = batch_metafeatures(&c.data, &c.spec(), c.provenance)?;
    write_feature_csv(&c.out, &rows)?;
    eprintln!("{} datasets -> {}", rows.len(), c.out.display());
    Ok(())
}

fn run_metalabels(a: &LabelArgs) -> Result<()> {
    let c = &a.corpus;
    ensure_writable(&c.out, c.force)?;
    let cfg = LabelingConfig {
        trial_budget: a.trial_budget,
        inner_folds: a.inner_folds,
        inner_repeats: a.inner_repeats,
        outer_folds: a.outer_folds,
        outer_repeats: a.outer_repeats,
        alpha: a.significance,
        seed: a.seed,
    };
    let rows = batch_metalabels(&c.data, &c.spec(), c.provenance, &cfg)?;
    write_meta_csv(&c.out, &rows)?;
    eprintln!("{} datasets -> {}", rows.len(), c.out.display());
    Ok(())
}

fn run_generate(a: &GenerateArgs, config: Option<&Path>) -> Result<()> {
    let cfg = RunConfig {
        bins: a.grid,
        witnesses: a.witnesses,
        budget: a.budget,
        seed: a.seed,
    };
    cfg.validate()?;
    let manifest = if a.proposer == "llm" {
        let mut llm = match config {
            Some(p) => match load_toml(p)?.get("llm") {
                Some(t) => t
                    .clone()
                    .try_into::<LlmConfig>()
                    .map_err(|e| Error::Parameter(format!("[llm] table: {e}")))?,
                None => LlmConfig::default(),
            },
            None => LlmConfig::default(),
        };
        if let Some(m) = &a.model {
            llm.model = m.clone();
        }
        if let Some(e) = &a.endpoint {
            llm.endpoint = e.clone();
        }
        let model = llm.model.clone();
        let proposer = LlmProposer::new(HttpChatBackend::new(llm)?, model);
        generate(&cfg, &proposer, &a.out)?
    } else {
        let proposer = DeterministicProposer {
            n_rows: a.n_rows,
            ..DeterministicProposer::default()
        };
        generate(&cfg, &proposer, &a.out)?
    };
    eprintln!(
        "{} accepted / {} attempts (hit rate {:.3}), {} of {} cells filled -> {}",
        manifest.total_accepted,
        manifest.total_attempts,
        manifest.hit_rate,
        manifest.filled_cells,
        a.grid * a.grid,
        a.out.display()
    );
    Ok(())
}

fn run_analyze(a: &AnalyzeArgs) -> Result<()> {
    let pool = load_rows(&a.pool, Provenance::Synthetic)?;
    prepare_out_dir(&a.out, a.force)?;
    let analysis = analyze(&pool, a.n, a.iters, a.alpha, a.seed)?;
    write_analysis(&a.out, &pool, &analysis)?;
    eprintln!(
        "canonical sets of {}: overlap {}, Jaccard {:.3} -> {}",
        a.n,
        analysis.canonical.overlap,
        analysis.canonical.jaccard,
        a.out.display()
    );
    Ok(())
}

fn run_evaluate(a: &EvaluateArgs) -> Result<()> {
    let e = &a.exp;
    let real = load_rows(&e.meta, Provenance::Real)?;
    let pool = match &a.pool {
        Some(p) => load_rows(p, Provenance::Synthetic)?,
        None => Vec::new(),
    };
    let conditions: Vec<Condition> = if a.condition == "all" {
        Condition::ALL.to_vec()
    } else {
        vec![a.condition.parse()?]
    };
    if conditions.iter().any(|c| *c != Condition::None) && a.pool.is_none() {
        return Err(Error::Parameter("--pool is required for augmented conditions".into()));
    }
    let base = e.config();
    base.with(Condition::Uniform, a.n_syn)
        .validate(real.len(), pool.len())?;
    prepare_out_dir(&e.out, e.force)?;
    let learner = e.learner();
    let mut reports = Vec::new();
    for c in &conditions {
        let r = evaluate_condition(&real, &pool, &base.with(*c, a.n_syn), &learner)?;
        write_condition(&e.out, c.name(), &r)?;
        reports.push(r);
    }
    check_shared_folds(&reports.iter().collect::<Vec<_>>())?;
    if let [none, uniform, margin] = reports.as_slice() {
        write_ablation(&e.out.join("ablation.csv"), &ablation_rows(none, uniform, margin))?;
    }
    if !pool.is_empty() {
        let augmented: Vec<&_> = reports
            .iter()
            .filter(|r| r.config.condition != Condition::None)
            .collect();
        write_sampling_summary(&e.out.join("sampling_summary.csv"), &pool, base.alpha, &augmented)?;
    }
    let mut inputs = vec![e.meta.as_path()];
    inputs.extend(a.pool.as_deref());
    let mut m = e.manifest("evaluate", base.with(conditions[0], a.n_syn), &inputs, real.len());
    m.pool_sizes = vec![pool.len()];
    write_manifest(&e.out, &m)?;
    for r in &reports {
        let summary: Vec<String> = r
            .metrics
            .iter()
            .map(|s| format!("{}={:.4}", s.metric.name(), s.mean))
            .collect();
        eprintln!("{}: {}", r.config.condition, summary.join(" "));
    }
    Ok(())
}

fn run_curve(a: &CurveArgs) -> Result<()> {
    let e = &a.exp;
    let real = load_rows(&e.meta, Provenance::Real)?;
    let pool = load_rows(&a.pool, Provenance::Synthetic)?;
    let grid = if a.n_grid.is_empty() {
        default_grid(pool.len(), a.step)
    } else {
        normalise_grid(a.n_grid.clone(), pool.len())?
    };
    let base = e.config();
    base.validate(real.len(), pool.len())?;
    prepare_out_dir(&e.out, e.force)?;
    let learner = e.learner();
    let curve = learning_curve(&real, &pool, &base, &grid, &learner)?;
    write_learning_curve(&e.out, &curve)?;

    let at = a.ablation_at.unwrap_or_else(|| {
        grid.iter()
            .rev()
            .copied()
            .find(|&n| n < pool.len())
            .unwrap_or(pool.len())
    });
    let idx = grid
        .iter()
        .position(|&n| n == at)
        .ok_or_else(|| Error::Parameter(format!("--ablation-at {at} is not on the grid {grid:?}")))?;
    let (uni, mar) = &curve.points[idx];
    write_ablation(&e.out.join("ablation.csv"), &ablation_rows(&curve.none, uni, mar))?;
    write_sampling_summary(&e.out.join("sampling_summary.csv"), &pool, base.alpha, &[uni, mar])?;

    let mut m = e.manifest("learning-curve", base.clone(), &[&e.meta, &a.pool], real.len());
    m.pool_sizes = vec![pool.len()];
    m.n_grid = grid.clone();
    write_manifest(&e.out, &m)?;
    for t in &curve.endpoint {
        eprintln!(
            "{} at n_syn={}: augmented {:.4} vs none {:.4} (p = {:.4})",
            t.metric.name(),
            t.n_syn,
            t.mean_augmented,
            t.mean_none,
            t.test.p_value
        );
    }
    Ok(())
}

fn run_granularity(a: &GranularityArgs) -> Result<()> {
    let e = &a.exp;
    let real = load_rows(&e.meta, Provenance::Real)?;
    let pa = load_rows(&a.pool_a, Provenance::Synthetic)?;
    let pb = load_rows(&a.pool_b, Provenance::Synthetic)?;
    prepare_out_dir(&e.out, e.force)?;
    let base = e.config();
    let rows = granularity_compare(&real, &pa, &pb, &base, &e.learner())?;
    write_granularity(&e.out.join("granularity.csv"), &rows)?;
    let mut m = e.manifest("granularity", base, &[&e.meta, &a.pool_a, &a.pool_b], real.len());
    m.pool_sizes = vec![pa.len(), pb.len()];
    write_manifest(&e.out, &m)?;
    for r in &rows {
        eprintln!(
            "{}: a-b = {:.4} (p = {:.4}), favours {}",
            r.metric.name(),
            r.mean_diff,
            r.p,
            r.favours
        );
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Metafeatures(a) => run_metafeatures(a),
        Command::Metalabels(a) => run_metalabels(a),
        Command::Generate(a) => run_generate(a, cli.config.as_deref()),
        Command::AugmentAnalyze(a) => run_analyze(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::LearningCurve(a) => run_curve(a),
        Command::Granularity(a) => run_granularity(a),
    }
}

fn main() -> ExitCode {
    let argv = match expand_config(std::env::args_os().collect()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(argv);
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
