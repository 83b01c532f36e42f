//! Minibatch training for the baseline classifier and both generative
//! model modes.
//!
//! Each step draws one labeled and one unlabeled minibatch, each cycling
//! through its own reshuffled permutation, evaluates the objective with
//! fresh noise and takes one Adam step on the negated objective. All
//! randomness comes from named streams of the master seed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::data::{points_matrix, DatasetSplit, Point};
use crate::error::{Error, Result};
use crate::model::{
    save_checkpoint, BaselineModel, GenerativeModel, Method, ModelDims, TrainedModel, WeightMode,
};
use crate::nn::{log_softmax_rows, mlp_forward_tape, register_params, AdamConfig, AdamState, DenseArray, ParameterStore, Tape};
use crate::objective::{loss_gradients, ElboTerms, Include, LabeledBatch, ObjectiveConfig, ObjectiveNoise};
use crate::rng::{stream, Stream, StreamRng};

/// How the weight of the `log q(y|x)` term is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AlphaRule {
    /// `factor * N_l`.
    PerLabeled(f64),
    Fixed(f64),
}

impl AlphaRule {
    pub fn resolve(self, n_labeled: usize) -> f64 {
        match self {
            AlphaRule::PerLabeled(f) => f * n_labeled as f64,
            AlphaRule::Fixed(a) => a,
        }
    }
}

impl Default for AlphaRule {
    fn default() -> Self {
        AlphaRule::PerLabeled(0.1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    /// Passes over the unlabeled set (over the labeled set when there is
    /// no unlabeled data).
    pub epochs: usize,
    /// `None` means `min(N_l, 100)`.
    pub labeled_batch: Option<usize>,
    pub unlabeled_batch: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub d_z: usize,
    pub hidden: Vec<usize>,
    pub alpha: AlphaRule,
    pub mc_samples: usize,
    /// Record a history row every this many steps.
    pub log_every: usize,
    /// Write a checkpoint every this many steps (0 = only at the end).
    pub checkpoint_every: usize,
    /// Where periodic and last-good checkpoints go.
    pub checkpoint_path: Option<PathBuf>,
}

pub const DEFAULT_EPOCHS: usize = 30;

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::Sslpe,
            epochs: DEFAULT_EPOCHS,
            labeled_batch: None,
            unlabeled_batch: 100,
            adam: AdamConfig::default(),
            seed: 0,
            d_z: 5,
            hidden: vec![128, 128],
            alpha: AlphaRule::default(),
            mc_samples: 1,
            log_every: 1,
            checkpoint_every: 0,
            checkpoint_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.labeled_batch == Some(0) || self.unlabeled_batch == 0 {
            return Err(Error::usage("batch sizes must be at least 1"));
        }
        if self.mc_samples == 0 || self.log_every == 0 {
            return Err(Error::usage("mc-samples and log-every must be at least 1"));
        }
        if self.d_z == 0 {
            return Err(Error::usage("latent dimension must be at least 1"));
        }
        self.adam.validate()
    }

    fn labeled_batch_size(&self, n_labeled: usize) -> usize {
        self.labeled_batch.unwrap_or(n_labeled.min(100))
    }

    /// Number of optimizer steps for a split.
    pub fn total_steps(&self, n_labeled: usize, n_unlabeled: usize) -> usize {
        let per_epoch = if n_unlabeled > 0 {
            n_unlabeled.div_ceil(self.unlabeled_batch)
        } else {
            n_labeled.div_ceil(self.labeled_batch_size(n_labeled).max(1))
        };
        self.epochs * per_epoch
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryRecord {
    pub step: usize,
    pub terms: ElboTerms,
    /// Wall-clock milliseconds since training started.
    pub ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<HistoryRecord>,
}

pub const HISTORY_HEADER: &str = "step,total,recon_x,recon_y,kl_z,entropy_y,kl_w,alpha_term,ms";

impl TrainHistory {
    pub fn totals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.terms.total).collect()
    }

    /// Mean total over the first and the last `window` records.
    pub fn smoothed_ends(&self, window: usize) -> Option<(f64, f64)> {
        let t = self.totals();
        if window == 0 || t.len() < window {
            return None;
        }
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        Some((mean(&t[..window]), mean(&t[t.len() - window..])))
    }

    /// CSV text. Without `with_timing` the `ms` column is left empty so the
    /// file depends only on the seed and configuration.
    pub fn to_csv(&self, with_timing: bool) -> String {
        let mut s = String::from(HISTORY_HEADER);
        s.push('\n');
        for r in &self.records {
            let t = &r.terms;
            write!(
                s,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},",
                r.step, t.total, t.recon_x, t.recon_y, t.kl_z, t.entropy_y, t.kl_w, t.alpha_term
            )
            .unwrap();
            if with_timing {
                write!(s, "{:.3}", r.ms).unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>, with_timing: bool) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv(with_timing)).map_err(|e| Error::io(path, e))
    }
}

/// Endless reshuffling cursor over `0..n`.
struct Cycler {
    order: Vec<usize>,
    pos: usize,
}

impl Cycler {
    fn new(n: usize, rng: &mut StreamRng) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        Cycler { order, pos: 0 }
    }

    fn take(&mut self, count: usize, rng: &mut StreamRng) -> Vec<usize> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            if self.pos == self.order.len() {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

fn gather(points: &[Point], idx: &[usize]) -> DenseArray {
    let sel: Vec<Point> = idx.iter().map(|&i| points[i]).collect();
    points_matrix(&sel).expect("non-empty batch")
}

fn check_labeled(split: &DatasetSplit) -> Result<()> {
    if split.labeled.is_empty() {
        return Err(Error::usage("empty labeled set"));
    }
    if let Some(&y) = split.labels.iter().find(|&&y| y >= split.num_classes) {
        return Err(Error::usage(format!("label {y} out of range for {} classes", split.num_classes)));
    }
    Ok(())
}

fn save_last_good(cfg: &TrainConfig, model: TrainedModel) -> String {
    match &cfg.checkpoint_path {
        Some(p) => match save_checkpoint(&model, p) {
            Ok(()) => format!("; last good parameters saved to {}", p.display()),
            Err(e) => format!("; saving last good parameters failed: {e}"),
        },
        None => String::new(),
    }
}

/// Runs one Adam step from `grads`, rejecting steps that leave a
/// non-finite parameter.
fn guarded_step(params: &mut ParameterStore, grads: &crate::nn::GradientStore, adam: &mut AdamState) -> Result<()> {
    adam.update(params, grads)?;
    match params.first_non_finite() {
        Some(name) => Err(Error::numeric(format!("parameter {name} became non-finite"))),
        None => Ok(()),
    }
}

/// Trains the method named in `cfg` on `split`.
pub fn train(cfg: &TrainConfig, split: &DatasetSplit) -> Result<(TrainedModel, TrainHistory)> {
    match cfg.method.weight_mode() {
        None => {
            let (m, h) = train_dnn_baseline(cfg, split)?;
            Ok((TrainedModel::Baseline(m), h))
        }
        Some(mode) => {
            let (m, h) = train_generative(cfg, mode, split)?;
            Ok((TrainedModel::Generative(m), h))
        }
    }
}

/// Trains a generative model in the given weight mode.
pub fn train_generative(cfg: &TrainConfig, mode: WeightMode, split: &DatasetSplit) -> Result<(GenerativeModel, TrainHistory)> {
    cfg.validate()?;
    check_labeled(split)?;
    let dims = ModelDims {
        d_x: 2,
        d_z: cfg.d_z,
        k: split.num_classes,
        hidden: cfg.hidden.clone(),
    };
    let mut model = GenerativeModel::new(dims, mode, &mut stream(cfg.seed, Stream::Init))?;
    let mut adam = AdamState::new(cfg.adam, model.params())?;
    let mut batch_rng = stream(cfg.seed, Stream::Batching);
    let mut z_rng = stream(cfg.seed, Stream::ZNoise);
    let mut w_rng = stream(cfg.seed, Stream::WeightNoise);

    let (n_l, n_u) = (split.labeled.len(), split.unlabeled.len());
    let lb = cfg.labeled_batch_size(n_l);
    let ub = cfg.unlabeled_batch.min(n_u);
    let mut l_cycle = Cycler::new(n_l, &mut batch_rng);
    let mut u_cycle = Cycler::new(n_u, &mut batch_rng);
    let ocfg = ObjectiveConfig {
        mc_samples: cfg.mc_samples,
        alpha: cfg.alpha.resolve(n_l),
        kl_w_scale: (lb + ub) as f64 / split.training_size() as f64,
    };

    let steps = cfg.total_steps(n_l, n_u);
    let mut history = TrainHistory::default();
    let start = Instant::now();
    for step in 1..=steps {
        let li = l_cycle.take(lb, &mut batch_rng);
        let labeled = LabeledBatch::new(gather(&split.labeled, &li), li.iter().map(|&i| split.labels[i]).collect())?;
        let unlabeled = (ub > 0).then(|| gather(&split.unlabeled, &u_cycle.take(ub, &mut batch_rng)));
        let noise = ObjectiveNoise::draw(&model, lb, ub, cfg.mc_samples, &mut z_rng, &mut w_rng)?;
        let outcome = loss_gradients(&model, Some(&labeled), unlabeled.as_ref(), &noise, &ocfg, Include::ALL)
            .and_then(|(terms, grads)| {
                let before = model.params().clone();
                match guarded_step(model.params_mut(), &grads, &mut adam) {
                    Ok(()) => Ok(terms),
                    Err(e) => {
                        model.params_mut().clone_from(&before);
                        Err(e)
                    }
                }
            });
        let terms = match outcome {
            Ok(t) => t,
            Err(Error::Numeric(msg)) => {
                let note = save_last_good(cfg, TrainedModel::Generative(model.clone()));
                return Err(Error::numeric(format!("training diverged at step {step}: {msg}{note}")));
            }
            Err(e) => return Err(e),
        };
        if step % cfg.log_every == 0 || step == steps {
            history.records.push(HistoryRecord {
                step,
                terms,
                ms: start.elapsed().as_secs_f64() * 1e3,
            });
        }
        periodic_checkpoint(cfg, step, || TrainedModel::Generative(model.clone()))?;
    }
    Ok((model, history))
}

fn periodic_checkpoint(cfg: &TrainConfig, step: usize, model: impl FnOnce() -> TrainedModel) -> Result<()> {
    if let (Some(p), true) = (&cfg.checkpoint_path, cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
        save_checkpoint(&model(), p)?;
    }
    Ok(())
}

/// Mean cross-entropy of the baseline on a labeled batch and its gradient.
pub fn baseline_loss_gradients(
    model: &BaselineModel,
    params: &ParameterStore,
    batch: &LabeledBatch,
) -> Result<(f64, crate::nn::GradientStore)> {
    let (tape, loss) = baseline_graph(model, params, batch)?;
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Err(Error::numeric(format!("non-finite cross-entropy {value}")));
    }
    Ok((value, tape.backward(loss, params)?))
}

/// Mean cross-entropy of the baseline at `params`.
pub fn baseline_loss(model: &BaselineModel, params: &ParameterStore, batch: &LabeledBatch) -> Result<f64> {
    let (tape, loss) = baseline_graph(model, params, batch)?;
    Ok(tape.scalar(loss))
}

fn baseline_graph(model: &BaselineModel, params: &ParameterStore, batch: &LabeledBatch) -> Result<(Tape, crate::nn::Var)> {
    let k = model.num_classes();
    if let Some(&y) = batch.y.iter().find(|&&y| y >= k) {
        return Err(Error::usage(format!("label {y} out of range for {k} classes")));
    }
    let mut tape = Tape::new();
    let vars = register_params(model.spec_ref(), &mut tape, params)?;
    let x = tape.constant(&batch.x);
    let logits = mlp_forward_tape(model.spec_ref(), &mut tape, &vars, x)?[0].1;
    let lp = tape.log_softmax(logits);
    let mut onehot = vec![0.0; batch.len() * k];
    for (r, &y) in batch.y.iter().enumerate() {
        onehot[r * k + y] = 1.0;
    }
    let oh = tape.constant_owned(DenseArray::matrix(batch.len(), k, onehot)?);
    let picked = tape.mul(lp, oh)?;
    let s = tape.sum(picked);
    let loss = tape.scale(s, -1.0 / batch.len() as f64);
    Ok((tape, loss))
}

/// Mean cross-entropy of the baseline over a labeled set (no tape).
pub fn baseline_cross_entropy(model: &BaselineModel, x: &DenseArray, y: &[usize]) -> Result<f64> {
    let lp = log_softmax_rows(&model.logits_batch(x)?);
    let k = lp.cols();
    Ok(-y.iter().enumerate().map(|(r, &c)| lp.values()[r * k + c]).sum::<f64>() / y.len() as f64)
}

/// Trains the feed-forward baseline on the labeled points by cross-entropy;
/// unlabeled data is ignored except for setting the step count.
pub fn train_dnn_baseline(cfg: &TrainConfig, split: &DatasetSplit) -> Result<(BaselineModel, TrainHistory)> {
    cfg.validate()?;
    check_labeled(split)?;
    let mut seen = vec![false; split.num_classes];
    for &y in &split.labels {
        seen[y] = true;
    }
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(Error::usage("baseline needs labeled points from at least two classes"));
    }
    let mut model = BaselineModel::new(2, &cfg.hidden, split.num_classes, &mut stream(cfg.seed, Stream::Init))?;
    let mut adam = AdamState::new(cfg.adam, model.params())?;
    let mut batch_rng = stream(cfg.seed, Stream::Batching);
    let n_l = split.labeled.len();
    let lb = cfg.labeled_batch_size(n_l);
    let mut cycle = Cycler::new(n_l, &mut batch_rng);
    let steps = cfg.total_steps(n_l, split.unlabeled.len());
    let mut history = TrainHistory::default();
    let start = Instant::now();
    for step in 1..=steps {
        let li = cycle.take(lb, &mut batch_rng);
        let batch = LabeledBatch::new(gather(&split.labeled, &li), li.iter().map(|&i| split.labels[i]).collect())?;
        let outcome = baseline_loss_gradients(&model, model.params(), &batch).and_then(|(loss, grads)| {
            let before = model.params().clone();
            match guarded_step(model.params_mut(), &grads, &mut adam) {
                Ok(()) => Ok(loss),
                Err(e) => {
                    model.params_mut().clone_from(&before);
                    Err(e)
                }
            }
        });
        let loss = match outcome {
            Ok(l) => l,
            Err(Error::Numeric(msg)) => {
                let note = save_last_good(cfg, TrainedModel::Baseline(model.clone()));
                return Err(Error::numeric(format!("training diverged at step {step}: {msg}{note}")));
            }
            Err(e) => return Err(e),
        };
        if step % cfg.log_every == 0 || step == steps {
            history.records.push(HistoryRecord {
                step,
                terms: ElboTerms {
                    total: -loss,
                    recon_y: -loss,
                    ..ElboTerms::default()
                },
                ms: start.elapsed().as_secs_f64() * 1e3,
            });
        }
        periodic_checkpoint(cfg, step, || TrainedModel::Baseline(model.clone()))?;
    }
    Ok((model, history))
}
