//! Experiment orchestration and artifacts: metric tables, decision-surface
//! grids and generative sample dumps.
//!
//! Every artifact except `timing.csv` depends only on the configuration and
//! seed, so reruns reproduce the files byte for byte. Wall-clock figures go
//! to the `timing.csv` sidecar; the `seconds` column of `report.csv` and
//! the `ms` column of the histories are left empty.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::data::{generate_two_moons, split_labeled, split_with_indices, Dataset, DatasetSplit, Point};
use crate::error::{Error, Result};
use crate::model::{save_checkpoint, GeneratedSample, GenerativeModel, Method, TrainedModel, WeightMode};
use crate::predictor::{evaluate_predictive, predict_points, PredictConfig};
use crate::rng::{stream, Stream};
use crate::trainer::{train, TrainConfig, TrainHistory};

/// Rectangular evaluation grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub x1: (f64, f64),
    pub x2: (f64, f64),
    pub resolution: (usize, usize),
}

pub const DEFAULT_GRID_RESOLUTION: usize = 100;

impl GridSpec {
    pub fn new(x1: (f64, f64), x2: (f64, f64), resolution: (usize, usize)) -> Result<Self> {
        let g = GridSpec { x1, x2, resolution };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |r: (f64, f64)| r.0.is_finite() && r.1.is_finite() && r.0 < r.1;
        if !ok(self.x1) || !ok(self.x2) {
            return Err(Error::usage(format!("grid ranges must satisfy lo < hi: {self:?}")));
        }
        if self.resolution.0 < 2 || self.resolution.1 < 2 {
            return Err(Error::usage("grid resolution must be at least 2 per axis"));
        }
        Ok(())
    }

    /// Bounding box of `points` widened by `expand` times its extent on
    /// every side.
    pub fn around(points: &[Point], expand: f64, resolution: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::usage("cannot size a grid from no points"));
        }
        let (lo, hi) = bounding_box(points);
        let pad = |d: usize| (hi[d] - lo[d]).max(1e-9) * expand;
        GridSpec::new(
            (lo[0] - pad(0), hi[0] + pad(0)),
            (lo[1] - pad(1), hi[1] + pad(1)),
            (resolution, resolution),
        )
    }

    /// Nodes with `x2` in the outer loop and `x1` in the inner loop.
    pub fn nodes(&self) -> Vec<Point> {
        let axis = |(lo, hi): (f64, f64), n: usize, i: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let (n1, n2) = self.resolution;
        (0..n2)
            .flat_map(|j| (0..n1).map(move |i| [axis(self.x1, n1, i), axis(self.x2, n2, j)]))
            .collect()
    }
}

pub fn bounding_box(points: &[Point]) -> (Point, Point) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    (lo, hi)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridRow {
    pub x: Point,
    pub probs: Vec<f64>,
    /// Spread of `p(class 1)` across chains, for the weight-posterior model.
    pub p1_std: Option<f64>,
}

impl GridRow {
    pub fn p1(&self) -> f64 {
        self.probs[1]
    }

    pub fn entropy(&self) -> f64 {
        -self.probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }
}

/// Predictive probabilities at every grid node.
pub fn contour_grid(model: &TrainedModel, grid: &GridSpec, cfg: &PredictConfig) -> Result<Vec<GridRow>> {
    grid.validate()?;
    let nodes = grid.nodes();
    let with_std = matches!(model, TrainedModel::Generative(m) if m.mode() == WeightMode::BayesianWy);
    let results = predict_points(model, &nodes, cfg)?;
    Ok(nodes
        .into_iter()
        .zip(results)
        .map(|(x, r)| GridRow {
            x,
            p1_std: with_std.then(|| r.chain_std(1)),
            probs: r.probs.probs().to_vec(),
        })
        .collect())
}

/// CSV `x1,x2,p1[,p1_std]`.
pub fn grid_csv(rows: &[GridRow]) -> String {
    let with_std = rows.first().is_some_and(|r| r.p1_std.is_some());
    let mut s = String::from(if with_std { "x1,x2,p1,p1_std\n" } else { "x1,x2,p1\n" });
    for r in rows {
        write!(s, "{:e},{:e},{:e}", r.x[0], r.x[1], r.p1()).unwrap();
        if let Some(sd) = r.p1_std {
            write!(s, ",{sd:e}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// CSV `z1..z{d_z},x1,x2,y`.
pub fn samples_csv(samples: &[GeneratedSample]) -> String {
    let d_z = samples.first().map_or(0, |s| s.z.len());
    let mut cols: Vec<String> = (1..=d_z).map(|i| format!("z{i}")).collect();
    cols.extend(["x1", "x2", "y"].map(String::from));
    let mut s = cols.join(",");
    s.push('\n');
    for g in samples {
        let vals: Vec<String> = g.z.iter().chain(&g.x).map(|v| format!("{v:e}")).collect();
        writeln!(s, "{},{}", vals.join(","), g.y).unwrap();
    }
    s
}

pub fn generate_samples(model: &GenerativeModel, n: usize, seed: u64) -> Result<Vec<GeneratedSample>> {
    model.generate(n, &mut stream(seed, Stream::Generate))
}

/// One method's test metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodResult {
    pub method: Method,
    pub accuracy: f64,
    pub avg_loglik: f64,
    /// Training plus evaluation wall-clock time.
    pub seconds: Option<f64>,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<MethodResult>,
}

pub const REPORT_HEADER: &str = "method,accuracy,avg_loglik,seconds,seed";

impl ExperimentReport {
    pub fn get(&self, method: Method) -> Option<&MethodResult> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// Machine-readable table; `seconds` stays empty unless `with_timing`.
    pub fn to_csv(&self, with_timing: bool) -> String {
        let mut s = format!("{REPORT_HEADER}\n");
        for r in &self.rows {
            let secs = match (with_timing, r.seconds) {
                (true, Some(v)) => format!("{v:.3}"),
                _ => String::new(),
            };
            writeln!(s, "{},{:e},{:e},{},{}", r.method, r.accuracy, r.avg_loglik, secs, r.seed).unwrap();
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: "report".into(),
            line: line as u64,
            message,
        };
        let mut lines = text.lines();
        if lines.next() != Some(REPORT_HEADER) {
            return Err(err(1, format!("expected header `{REPORT_HEADER}`")));
        }
        let mut rows = Vec::new();
        for (i, l) in lines.enumerate() {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 5 {
                return Err(err(i + 2, format!("expected 5 fields, found {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(i + 2, format!("bad number {s:?}")));
            rows.push(MethodResult {
                method: f[0].parse().map_err(|e: Error| err(i + 2, e.to_string()))?,
                accuracy: num(f[1])?,
                avg_loglik: num(f[2])?,
                seconds: if f[3].is_empty() { None } else { Some(num(f[3])?) },
                seed: f[4].parse().map_err(|_| err(i + 2, format!("bad seed {:?}", f[4])))?,
            });
        }
        Ok(ExperimentReport { rows })
    }

    /// Aligned text table with accuracy in percent.
    pub fn to_table(&self) -> String {
        let mut s = format!("{:<8} {:>10} {:>14}\n", "method", "accuracy", "log-lik");
        for r in &self.rows {
            writeln!(s, "{:<8} {:>9.1}% {:>14.4}", r.method.as_str().to_uppercase(), 100.0 * r.accuracy, r.avg_loglik).unwrap();
        }
        s
    }

    pub fn timing_csv(&self) -> String {
        let mut s = String::from("method,seconds\n");
        for r in &self.rows {
            writeln!(s, "{},{:.3}", r.method, r.seconds.unwrap_or(f64::NAN)).unwrap();
        }
        s
    }
}

/// Writes `<stem>.csv` (no timing) and `<stem>.txt`.
pub fn emit_report(report: &ExperimentReport, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
    let dir = dir.as_ref();
    write_file(dir.join(format!("{stem}.csv")), &report.to_csv(false))?;
    write_file(dir.join(format!("{stem}.txt")), &report.to_table())
}

pub fn write_file(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Name of the marker written when a run fails part-way.
pub const FAILURE_MARKER: &str = "FAILED";

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub noise: f64,
    pub labeled_per_class: usize,
    /// Hand-picked labeled rows of the training data (overrides
    /// `labeled_per_class`).
    pub labeled_indices: Option<Vec<usize>>,
    pub methods: Vec<Method>,
    /// Method is overridden per run; the seed by [`ExperimentConfig::seed`].
    pub train: TrainConfig,
    pub predict: PredictConfig,
    /// `None` sizes the grid from the training data.
    pub grid: Option<GridSpec>,
    pub grid_resolution: usize,
    pub grid_expand: f64,
    pub n_samples: usize,
    pub out_dir: Option<PathBuf>,
    /// Text stored as `config.echo`.
    pub echo: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            n_train: 10_000,
            n_test: 10_000,
            noise: 0.1,
            labeled_per_class: 3,
            labeled_indices: None,
            methods: Method::ALL.to_vec(),
            train: TrainConfig::default(),
            predict: PredictConfig::default(),
            grid: None,
            grid_resolution: DEFAULT_GRID_RESOLUTION,
            grid_expand: 0.5,
            n_samples: 1000,
            out_dir: None,
            echo: None,
        }
    }
}

impl ExperimentConfig {
    /// Draws the data and the labeled/unlabeled/test split.
    pub fn split(&self) -> Result<DatasetSplit> {
        let total = self.n_train + self.n_test;
        let ds = generate_two_moons(total, self.noise, self.seed)?;
        let frac = self.n_test as f64 / total as f64;
        match &self.labeled_indices {
            Some(idx) => split_with_indices(&ds, idx, self.seed, frac),
            None => split_labeled(&ds, self.labeled_per_class, self.seed, frac),
        }
    }
}

/// Everything a run produced.
#[derive(Clone, Debug)]
pub struct MethodRun {
    pub method: Method,
    pub model: TrainedModel,
    pub history: TrainHistory,
    pub grid: Vec<GridRow>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub runs: Vec<MethodRun>,
    pub split: DatasetSplit,
    pub grid: GridSpec,
    pub samples: Vec<GeneratedSample>,
}

/// Generates data, trains and evaluates every configured method, and
/// writes artifacts when `out_dir` is set. On failure a `FAILED` marker
/// holding the error is left next to whatever was already written.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let marker = dir.join(FAILURE_MARKER);
        if marker.exists() {
            std::fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
        }
    }
    let result = run_inner(cfg);
    if let (Err(e), Some(dir)) = (&result, &cfg.out_dir) {
        let _ = write_file(dir.join(FAILURE_MARKER), &format!("{e}\n"));
    }
    result
}

fn run_inner(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    if cfg.methods.is_empty() {
        return Err(Error::usage("no methods selected"));
    }
    let dir = cfg.out_dir.as_deref();
    if let Some(d) = dir {
        let echo = match &cfg.echo {
            Some(e) => e.clone(),
            None => format!("{:?}\n", ExperimentConfig { out_dir: None, ..cfg.clone() }),
        };
        write_file(d.join("config.echo"), &echo)?;
    }
    let split = cfg.split()?;
    let test: Dataset = split.test_set()?;
    let grid = match cfg.grid {
        Some(g) => g,
        None => GridSpec::around(&split.training_points(), cfg.grid_expand, cfg.grid_resolution)?,
    };
    let predict = PredictConfig {
        seed: cfg.seed,
        ..cfg.predict
    };

    let mut report = ExperimentReport::default();
    let mut runs = Vec::new();
    for &method in &cfg.methods {
        let tcfg = TrainConfig {
            method,
            seed: cfg.seed,
            checkpoint_path: dir.map(|d| d.join(format!("checkpoint.{method}"))),
            ..cfg.train.clone()
        };
        let start = Instant::now();
        let (model, history) = train(&tcfg, &split)?;
        let eval = evaluate_predictive(&model, &test, &predict)?;
        let seconds = start.elapsed().as_secs_f64();
        let rows = contour_grid(&model, &grid, &predict)?;
        if let Some(d) = dir {
            save_checkpoint(&model, d.join(format!("checkpoint.{method}")))?;
            history.save(d.join(format!("history.{method}.csv")), false)?;
            write_file(d.join(format!("grid.{method}.csv")), &grid_csv(&rows))?;
        }
        report.rows.push(MethodResult {
            method,
            accuracy: eval.accuracy,
            avg_loglik: eval.avg_loglik,
            seconds: Some(seconds),
            seed: cfg.seed,
        });
        runs.push(MethodRun {
            method,
            model,
            history,
            grid: rows,
        });
    }

    // samples from the last generative model, preferring the weight posterior
    let sampler = runs
        .iter()
        .rev()
        .filter_map(|r| match &r.model {
            TrainedModel::Generative(m) => Some(m),
            TrainedModel::Baseline(_) => None,
        })
        .next();
    let samples = match sampler {
        Some(m) if cfg.n_samples > 0 => generate_samples(m, cfg.n_samples, cfg.seed)?,
        _ => Vec::new(),
    };
    if let Some(d) = dir {
        if !samples.is_empty() {
            write_file(d.join("samples.csv"), &samples_csv(&samples))?;
        }
        emit_report(&report, d, "report")?;
        write_file(d.join("timing.csv"), &report.timing_csv())?;
    }
    Ok(ExperimentOutcome {
        report,
        runs,
        split,
        grid,
        samples,
    })
}

/// Mean predictive entropy over grid nodes farther than `factor` times the
/// data bounding-box radius from the data centroid, and over nodes inside
/// the data bounding box.
pub fn entropy_far_and_inside(rows: &[GridRow], data: &[Point], factor: f64) -> (Option<f64>, Option<f64>) {
    let (lo, hi) = bounding_box(data);
    let n = data.len() as f64;
    let c = [
        data.iter().map(|p| p[0]).sum::<f64>() / n,
        data.iter().map(|p| p[1]).sum::<f64>() / n,
    ];
    let radius = 0.5 * ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt();
    let mut far = (0.0, 0usize);
    let mut inside = (0.0, 0usize);
    for r in rows {
        let h = r.entropy();
        let d = ((r.x[0] - c[0]).powi(2) + (r.x[1] - c[1]).powi(2)).sqrt();
        if d > factor * radius {
            far = (far.0 + h, far.1 + 1);
        }
        if (0..2).all(|k| r.x[k] >= lo[k] && r.x[k] <= hi[k]) {
            inside = (inside.0 + h, inside.1 + 1);
        }
    }
    let mean = |(s, k): (f64, usize)| (k > 0).then(|| s / k as f64);
    (mean(far), mean(inside))
}

/// Mean distance from each sample's `x` to its nearest training input.
pub fn mean_nearest_distance(samples: &[GeneratedSample], data: &[Point]) -> f64 {
    let total: f64 = samples
        .iter()
        .map(|s| {
            data.iter()
                .map(|p| (p[0] - s.x[0]).powi(2) + (p[1] - s.x[1]).powi(2))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .sum();
    total / samples.len() as f64
}

/// Predictive entropy of every grid row, in node order.
pub fn grid_entropies(rows: &[GridRow]) -> Vec<f64> {
    rows.iter().map(GridRow::entropy).collect()
}
