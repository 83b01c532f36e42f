//! The `ssdgm` command-line tool.
//!
//! Option precedence: built-in defaults, then an optional `--config` file of
//! `key=value` lines (keys are long flag names), then flags on the command
//! line, with `SSDGM_SEED` standing in for an absent `--seed`. The resolved
//! options are echoed as a loadable config file next to every output.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::data::{generate_two_moons, load_dataset, load_training, read_rows, save_split, split_labeled, split_with_indices, DatasetSplit, Point};
use crate::error::{Error, Result};
use crate::model::{load_checkpoint, save_checkpoint, Method, TrainedModel};
use crate::nn::AdamConfig;
use crate::predictor::{evaluate_predictive, predict_points, save_predictions, Averaging, PredictConfig};
use crate::report::{
    contour_grid, emit_report, generate_samples, grid_csv, run_experiment, samples_csv, write_file, ExperimentConfig, ExperimentReport, GridSpec,
    MethodResult,
};
use crate::trainer::{train, AlphaRule, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "ssdgm", version, about = "Semi-supervised deep generative classifier with Gibbs-sampled prediction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate two-moons data and write labeled/unlabeled/test/train CSVs.
    #[command(args_override_self = true)]
    GenData(GenDataArgs),
    /// Train one method on a training CSV (unlabeled rows use -1 or an empty label).
    #[command(args_override_self = true)]
    Train(TrainCmdArgs),
    /// Predict class probabilities for every row of an input CSV.
    #[command(args_override_self = true)]
    Predict(PredictCmdArgs),
    /// Evaluate predictive probabilities on a rectangular grid.
    #[command(args_override_self = true)]
    Grid(GridCmdArgs),
    /// Draw ancestral samples from a trained generative model.
    #[command(args_override_self = true)]
    Sample(SampleCmdArgs),
    /// Score a checkpoint on a labeled test CSV.
    #[command(args_override_self = true)]
    Report(ReportCmdArgs),
    /// Run the full two-moons experiment for all methods.
    #[command(args_override_self = true)]
    Reproduce(ReproduceArgs),
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// Master seed.
    #[arg(long, env = "SSDGM_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0 = all cores, 1 = sequential).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// File of key=value defaults; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Training points (labeled plus unlabeled).
    #[arg(long = "n", default_value_t = 10_000)]
    pub n_train: usize,
    /// Held-out test points.
    #[arg(long, default_value_t = 10_000)]
    pub n_test: usize,
    /// Standard deviation of the isotropic input noise.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Labeled points drawn per class.
    #[arg(long, default_value_t = 3)]
    pub labeled_per_class: usize,
    /// Comma-separated rows of the training data to label instead.
    #[arg(long, value_parser = parse_indices, conflicts_with = "labeled_per_class")]
    pub labeled_indices: Option<Vec<usize>>,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Training epochs over the unlabeled data.
    #[arg(long, default_value_t = crate::trainer::DEFAULT_EPOCHS)]
    pub epochs: usize,
    /// Labeled minibatch size (default: min(N_l, 100)).
    #[arg(long)]
    pub labeled_batch: Option<usize>,
    /// Unlabeled minibatch size.
    #[arg(long, default_value_t = 100)]
    pub unlabeled_batch: usize,
    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Latent dimension.
    #[arg(long, default_value_t = 5)]
    pub d_z: usize,
    /// Hidden layer widths, comma-separated.
    #[arg(long, default_value = "128,128", value_parser = parse_hidden)]
    pub hidden: Hidden,
    /// Weight of the labeled classification term: `<f>*Nl` or a constant.
    #[arg(long, default_value = "0.1*Nl", value_parser = parse_alpha)]
    pub alpha: AlphaRule,
    /// Monte Carlo samples of z per data point.
    #[arg(long, default_value_t = 1)]
    pub mc_samples: usize,
    /// Record a history row every this many steps.
    #[arg(long, default_value_t = 1)]
    pub log_every: usize,
    /// Write a checkpoint every this many steps (0 = only at the end).
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,
}

#[derive(Args, Debug, Clone)]
pub struct PredictArgs {
    /// Gibbs sweeps per chain (T).
    #[arg(long, default_value_t = 10)]
    pub gibbs_steps: usize,
    /// Independent chains (S).
    #[arg(long, default_value_t = 10)]
    pub chains: usize,
    /// Average probability vectors (`mean`) or sampled labels (`vote`).
    #[arg(long, default_value = "mean", value_parser = parse_averaging)]
    pub averaging: Averaging,
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    /// Grid nodes per axis.
    #[arg(long, default_value_t = crate::report::DEFAULT_GRID_RESOLUTION)]
    pub resolution: usize,
    /// Padding around the data bounding box, as a fraction of its extent.
    #[arg(long, default_value_t = 0.5)]
    pub expand: f64,
    /// Explicit `lo,hi` range for x1 (requires --x2-range).
    #[arg(long, value_parser = parse_range, requires = "x2_range", allow_hyphen_values = true)]
    pub x1_range: Option<(f64, f64)>,
    /// Explicit `lo,hi` range for x2 (requires --x1-range).
    #[arg(long, value_parser = parse_range, requires = "x1_range", allow_hyphen_values = true)]
    pub x2_range: Option<(f64, f64)>,
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Output stem; files are `<stem>.{labeled,unlabeled,test,train}.csv`.
    #[arg(long, default_value = "moons")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainCmdArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Method to train.
    #[arg(long, visible_alias = "mode", default_value = "sslapd")]
    pub method: Method,
    /// Training CSV `x1,x2,label` with -1 or empty labels for unlabeled rows.
    #[arg(long)]
    pub data: PathBuf,
    /// Number of classes.
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Output directory for `checkpoint`, `history.csv` and `config.echo`.
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PredictCmdArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// CSV `x1,x2,label` (labels ignored).
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub predict: PredictArgs,
    #[arg(long, default_value = "predictions.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GridCmdArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// CSV whose points size the grid when no explicit ranges are given.
    #[arg(long, required_unless_present = "x1_range")]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub predict: PredictArgs,
    #[arg(long, default_value = "grid.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SampleCmdArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Number of samples.
    #[arg(long = "n", default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value = "samples.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportCmdArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Labeled test CSV.
    #[arg(long)]
    pub test: PathBuf,
    #[command(flatten)]
    pub predict: PredictArgs,
    /// Directory for `report.csv`, `report.txt` and `config.echo`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReproduceArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub predict: PredictArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Comma-separated methods to run.
    #[arg(long, default_value = "dnn,sslpe,sslapd", value_parser = parse_methods)]
    pub methods: MethodList,
    /// Generative samples to dump.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hidden(pub Vec<usize>);

#[derive(Clone, Debug, PartialEq)]
pub struct MethodList(pub Vec<Method>);

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> std::result::Result<Vec<T>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|_| format!("invalid {what} {t:?}")))
        .collect()
}

fn parse_indices(s: &str) -> std::result::Result<Vec<usize>, String> {
    parse_list(s, "index")
}

fn parse_hidden(s: &str) -> std::result::Result<Hidden, String> {
    let v: Vec<usize> = parse_list(s, "width")?;
    if v.contains(&0) {
        return Err("hidden widths must be positive".into());
    }
    Ok(Hidden(v))
}

fn parse_methods(s: &str) -> std::result::Result<MethodList, String> {
    parse_list(s, "method").map(MethodList)
}

fn parse_alpha(s: &str) -> std::result::Result<AlphaRule, String> {
    let t = s.trim();
    let bad = || format!("invalid alpha {s:?} (expected `<f>*Nl` or a number)");
    match t.strip_suffix("*Nl").or_else(|| t.strip_suffix("*nl")) {
        Some(f) => f.trim().parse().map(AlphaRule::PerLabeled).map_err(|_| bad()),
        None => t.parse().map(AlphaRule::Fixed).map_err(|_| bad()),
    }
}

fn parse_averaging(s: &str) -> std::result::Result<Averaging, String> {
    match s {
        "mean" => Ok(Averaging::ProbabilityMean),
        "vote" => Ok(Averaging::LabelVote),
        _ => Err(format!("invalid averaging {s:?} (expected mean or vote)")),
    }
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    match parse_list::<f64>(s, "bound")?.as_slice() {
        &[lo, hi] if lo < hi => Ok((lo, hi)),
        _ => Err(format!("invalid range {s:?} (expected lo,hi with lo < hi)")),
    }
}

impl ModelArgs {
    pub fn train_config(&self, method: Method, seed: u64) -> TrainConfig {
        TrainConfig {
            method,
            epochs: self.epochs,
            labeled_batch: self.labeled_batch,
            unlabeled_batch: self.unlabeled_batch,
            adam: AdamConfig {
                learning_rate: self.lr,
                ..AdamConfig::default()
            },
            seed,
            d_z: self.d_z,
            hidden: self.hidden.0.clone(),
            alpha: self.alpha,
            mc_samples: self.mc_samples,
            log_every: self.log_every,
            checkpoint_every: self.checkpoint_every,
            checkpoint_path: None,
        }
    }
}

impl PredictArgs {
    pub fn predict_config(&self, seed: u64) -> PredictConfig {
        PredictConfig {
            gibbs_steps: self.gibbs_steps,
            chains: self.chains,
            seed,
            averaging: self.averaging,
            keep_trace: false,
        }
    }
}

impl GridArgs {
    fn spec(&self, points: Option<&[Point]>) -> Result<GridSpec> {
        match (self.x1_range, self.x2_range, points) {
            (Some(x1), Some(x2), _) => GridSpec::new(x1, x2, (self.resolution, self.resolution)),
            (_, _, Some(p)) => GridSpec::around(p, self.expand, self.resolution),
            _ => Err(Error::Usage("grid needs --data or both --x1-range and --x2-range".into())),
        }
    }

    fn explicit(&self) -> Result<Option<GridSpec>> {
        self.spec(None).map(Some).or_else(|e| match self.x1_range {
            None => Ok(None),
            Some(_) => Err(e),
        })
    }
}

impl DataArgs {
    fn split(&self, seed: u64) -> Result<DatasetSplit> {
        let total = self.n_train + self.n_test;
        let ds = generate_two_moons(total, self.noise, seed)?;
        let frac = self.n_test as f64 / total as f64;
        match &self.labeled_indices {
            Some(idx) => split_with_indices(&ds, idx, seed, frac),
            None => split_labeled(&ds, self.labeled_per_class, seed, frac),
        }
    }
}

/// Parses `argv`, runs the subcommand and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match merge_config_file(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let matches = match Cli::command().try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 1;
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let echo = config_echo(name, sub);
    match dispatch(cli.command, &echo) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Splices the entries of a `--config` file in front of the subcommand's
/// own flags so that explicit flags override them.
pub fn merge_config_file(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    for (i, a) in argv.iter().enumerate().skip(2) {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = argv.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    let mut extra = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: &str| Error::Parse {
            path: path.display().to_string(),
            line: i as u64 + 1,
            message: message.into(),
        };
        let (k, v) = line.split_once('=').ok_or_else(|| parse_err("expected key=value"))?;
        let k = k.trim();
        if k.is_empty() || k == "config" {
            return Err(parse_err("invalid key"));
        }
        extra.push(OsString::from(format!("--{k}={}", v.trim())));
    }
    let mut out = argv[..2].to_vec();
    out.extend(extra);
    out.extend_from_slice(&argv[2..]);
    Ok(out)
}

/// Every resolved option of a subcommand as `key=value` lines in
/// declaration order; loadable again through `--config`.
pub fn config_echo(name: &str, matches: &ArgMatches) -> String {
    let cmd = Cli::command();
    let sub = cmd.find_subcommand(name).expect("known subcommand");
    let mut s = format!("# ssdgm {name}\n");
    for arg in sub.get_arguments() {
        let id = arg.get_id().as_str();
        let Some(long) = arg.get_long() else { continue };
        if matches!(id, "config" | "help" | "version" | "threads") {
            continue;
        }
        if let Ok(Some(vals)) = matches.try_get_raw(id) {
            let vals: Vec<String> = vals.map(|v| v.to_string_lossy().into_owned()).collect();
            s.push_str(&format!("{long}={}\n", vals.join(",")));
        }
    }
    s
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start thread pool: {e}")))?;
    pool.install(f)
}

fn dispatch(command: Command, echo: &str) -> Result<()> {
    let threads = match &command {
        Command::GenData(a) => a.common.threads,
        Command::Train(a) => a.common.threads,
        Command::Predict(a) => a.common.threads,
        Command::Grid(a) => a.common.threads,
        Command::Sample(a) => a.common.threads,
        Command::Report(a) => a.common.threads,
        Command::Reproduce(a) => a.common.threads,
    };
    with_threads(threads, || match command {
        Command::GenData(a) => gen_data(&a, echo),
        Command::Train(a) => train_cmd(&a, echo),
        Command::Predict(a) => predict_cmd(&a, echo),
        Command::Grid(a) => grid_cmd(&a, echo),
        Command::Sample(a) => sample_cmd(&a, echo),
        Command::Report(a) => report_cmd(&a, echo),
        Command::Reproduce(a) => reproduce_cmd(&a, echo),
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn ensure_parent(file: &Path) -> Result<()> {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => ensure_dir(p),
        _ => Ok(()),
    }
}

/// Echo path for a single-file output: `<file>.echo`.
fn sidecar(file: &Path) -> PathBuf {
    let mut s = file.as_os_str().to_owned();
    s.push(".echo");
    PathBuf::from(s)
}

fn gen_data(a: &GenDataArgs, echo: &str) -> Result<()> {
    ensure_parent(&a.out)?;
    let split = a.data.split(a.common.seed)?;
    let paths = save_split(&split, &a.out)?;
    write_file(sidecar(&a.out), echo)?;
    println!(
        "wrote {} labeled, {} unlabeled, {} test rows ({})",
        split.n_labeled(),
        split.unlabeled.len(),
        split.test.len(),
        paths.train.display()
    );
    Ok(())
}

fn train_cmd(a: &TrainCmdArgs, echo: &str) -> Result<()> {
    let data = load_training(&a.data)?;
    let split = DatasetSplit::from_parts(data.labeled, data.labels, data.unlabeled, Vec::new(), Vec::new(), a.classes)?;
    ensure_dir(&a.out)?;
    write_file(a.out.join("config.echo"), echo)?;
    let mut cfg = a.model.train_config(a.method, a.common.seed);
    cfg.checkpoint_path = Some(a.out.join("checkpoint"));
    let (model, history) = train(&cfg, &split)?;
    save_checkpoint(&model, a.out.join("checkpoint"))?;
    history.save(a.out.join("history.csv"), false)?;
    if let Some((first, last)) = history.smoothed_ends(100) {
        println!("{}: objective {first:.4} -> {last:.4} over {} steps", a.method, history.records.len());
    }
    Ok(())
}

fn predict_cmd(a: &PredictCmdArgs, echo: &str) -> Result<()> {
    let model = load_checkpoint(&a.checkpoint)?;
    let points: Vec<Point> = read_rows(&a.input)?.into_iter().map(|r| r.x).collect();
    let results = predict_points(&model, &points, &a.predict.predict_config(a.common.seed))?;
    ensure_parent(&a.out)?;
    save_predictions(&a.out, &points, &results)?;
    write_file(sidecar(&a.out), echo)
}

fn grid_cmd(a: &GridCmdArgs, echo: &str) -> Result<()> {
    let model = load_checkpoint(&a.checkpoint)?;
    let points = match &a.data {
        Some(p) => Some(read_rows(p)?.into_iter().map(|r| r.x).collect::<Vec<_>>()),
        None => None,
    };
    let spec = a.grid.spec(points.as_deref())?;
    let rows = contour_grid(&model, &spec, &a.predict.predict_config(a.common.seed))?;
    ensure_parent(&a.out)?;
    write_file(&a.out, &grid_csv(&rows))?;
    write_file(sidecar(&a.out), echo)
}

fn sample_cmd(a: &SampleCmdArgs, echo: &str) -> Result<()> {
    let TrainedModel::Generative(model) = load_checkpoint(&a.checkpoint)? else {
        return Err(Error::Usage("sampling needs a generative checkpoint (sslpe or sslapd)".into()));
    };
    let samples = generate_samples(&model, a.n, a.common.seed)?;
    ensure_parent(&a.out)?;
    write_file(&a.out, &samples_csv(&samples))?;
    write_file(sidecar(&a.out), echo)
}

fn report_cmd(a: &ReportCmdArgs, echo: &str) -> Result<()> {
    let model = load_checkpoint(&a.checkpoint)?;
    let test = load_dataset(&a.test)?;
    let eval = evaluate_predictive(&model, &test, &a.predict.predict_config(a.common.seed))?;
    let report = ExperimentReport {
        rows: vec![MethodResult {
            method: model.method(),
            accuracy: eval.accuracy,
            avg_loglik: eval.avg_loglik,
            seconds: None,
            seed: a.common.seed,
        }],
    };
    if let Some(dir) = &a.out {
        ensure_dir(dir)?;
        write_file(dir.join("config.echo"), echo)?;
        emit_report(&report, dir, "report")?;
    }
    print!("{}", report.to_table());
    Ok(())
}

fn reproduce_cmd(a: &ReproduceArgs, echo: &str) -> Result<()> {
    let cfg = ExperimentConfig {
        seed: a.common.seed,
        n_train: a.data.n_train,
        n_test: a.data.n_test,
        noise: a.data.noise,
        labeled_per_class: a.data.labeled_per_class,
        labeled_indices: a.data.labeled_indices.clone(),
        methods: a.methods.0.clone(),
        train: a.model.train_config(Method::Sslpe, a.common.seed),
        predict: a.predict.predict_config(a.common.seed),
        grid: a.grid.explicit()?,
        grid_resolution: a.grid.resolution,
        grid_expand: a.grid.expand,
        n_samples: a.samples,
        out_dir: Some(a.out.clone()),
        echo: Some(echo.to_string()),
    };
    let outcome = run_experiment(&cfg)?;
    print!("{}", outcome.report.to_table());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<OsString> {
        s.split_whitespace().map(OsString::from).collect()
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn value_parsers() {
        assert_eq!(parse_alpha("0.1*Nl").unwrap(), AlphaRule::PerLabeled(0.1));
        assert_eq!(parse_alpha("2.5").unwrap(), AlphaRule::Fixed(2.5));
        assert!(parse_alpha("x*Nl").is_err());
        assert_eq!(parse_hidden("64, 32").unwrap(), Hidden(vec![64, 32]));
        assert!(parse_hidden("0").is_err());
        assert_eq!(parse_range("-1,2").unwrap(), (-1.0, 2.0));
        assert!(parse_range("2,1").is_err());
        assert_eq!(parse_methods("dnn,sslapd").unwrap(), MethodList(vec![Method::Dnn, Method::Sslapd]));
        assert_eq!(parse_averaging("vote").unwrap(), Averaging::LabelVote);
    }

    #[test]
    fn config_file_sits_between_defaults_and_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.txt");
        std::fs::write(&cfg, "# comment\nepochs = 7\nlr=0.5\n\nhidden=4,4\n").unwrap();
        let argv = args(&format!("ssdgm train --data d.csv --config {} --lr 0.25", cfg.display()));
        let merged = merge_config_file(argv).unwrap();
        let m = Cli::command().try_get_matches_from(&merged).unwrap();
        let Command::Train(t) = Cli::from_arg_matches(&m).unwrap().command else { panic!() };
        assert_eq!(t.model.epochs, 7);
        assert_eq!(t.model.lr, 0.25);
        assert_eq!(t.model.hidden, Hidden(vec![4, 4]));
        assert_eq!(t.model.d_z, 5);

        std::fs::write(&cfg, "no equals sign\n").unwrap();
        let err = merge_config_file(args(&format!("ssdgm train --config {}", cfg.display()))).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn echo_reloads_to_the_same_options() {
        let argv = args("ssdgm reproduce --seed 4 --epochs 3 --hidden 8 --alpha 2 --averaging vote");
        let m = Cli::command().try_get_matches_from(&argv).unwrap();
        let (name, sub) = m.subcommand().unwrap();
        let echo = config_echo(name, sub);
        assert!(echo.contains("\nseed=4\n") && echo.contains("\nhidden=8\n") && echo.contains("\nd-z=5\n"));
        assert!(!echo.contains("labeled-indices"));

        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("echo");
        std::fs::write(&cfg, &echo).unwrap();
        let merged = merge_config_file(args(&format!("ssdgm reproduce --config {}", cfg.display()))).unwrap();
        let m2 = Cli::command().try_get_matches_from(&merged).unwrap();
        let (_, sub2) = m2.subcommand().unwrap();
        assert_eq!(config_echo(name, sub2), echo);
    }

    #[test]
    fn help_lists_defaults() {
        let mut cmd = Cli::command();
        let help = cmd.find_subcommand_mut("reproduce").unwrap().render_long_help().to_string();
        for d in ["[default: 128,128]", "[default: 5]", "[default: 10]", "[default: 0.1*Nl]", "[default: 3]"] {
            assert!(help.contains(d), "{d} missing");
        }
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(args("ssdgm frobnicate")), 1);
        assert_eq!(run(args("ssdgm reproduce --bogus 1")), 1);
        assert_eq!(run(args("ssdgm reproduce --labeled-per-class 2 --labeled-indices 1,2")), 1);
        assert_eq!(run(args("ssdgm --help")), 0);
        assert_eq!(run(args("ssdgm train --data /nonexistent/x.csv")), 1);
    }
}
