//! Gibbs-sampled predictive distribution for the generative models and
//! direct prediction for the baseline.
//!
//! Each chain starts from `y0 ~ q(y|x)` and then, for every step, draws the
//! label-network weights (posterior mode only), `z ~ q(z|x, y_prev)`,
//! computes `pi = p(y|x, z, W)` and samples the next label from `pi`. The
//! prediction averages all `pi` of all chains.
//!
//! Chain `s` consumes its own stream `substream(seed, Predict, s)` in a fixed
//! order: one uniform for `y0`, then per step the weight noise (posterior
//! mode), `d_z` standard normals for `z` and one uniform for the label. The
//! same draws serve every point of a batch, so a point's prediction depends
//! only on the model, the point and the seed, never on batching.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::{Dataset, Point};
use crate::error::{Error, Result};
use crate::model::dist::sample_categorical;
use crate::model::{sample_weights, BaselineModel, ClassSimplex, GenerativeModel, TrainedModel, WeightMode};
use crate::nn::{DenseArray, ParameterStore};
use crate::rng::{substream, Stream};

/// How per-step samples are combined into the final prediction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Averaging {
    /// Mean of the probability vectors `pi`.
    #[default]
    ProbabilityMean,
    /// Frequencies of the sampled labels.
    LabelVote,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictConfig {
    pub gibbs_steps: usize,
    pub chains: usize,
    pub seed: u64,
    pub averaging: Averaging,
    /// Keep every per-step `pi`.
    pub keep_trace: bool,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            gibbs_steps: 10,
            chains: 10,
            seed: 0,
            averaging: Averaging::ProbabilityMean,
            keep_trace: false,
        }
    }
}

impl PredictConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gibbs_steps == 0 || self.chains == 0 {
            return Err(Error::usage("gibbs steps and chains must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveResult {
    pub probs: ClassSimplex,
    /// Per-chain average of `pi` (one row per chain).
    pub chain_probs: Vec<Vec<f64>>,
    /// Chain-major `S x T` per-step `pi`, when retained.
    pub trace: Option<Vec<ClassSimplex>>,
}

impl PredictiveResult {
    /// Standard deviation across chains of the per-chain mean probability
    /// of `class` (zero for a single chain).
    pub fn chain_std(&self, class: usize) -> f64 {
        let n = self.chain_probs.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.chain_probs.iter().map(|c| c[class]).sum::<f64>() / n as f64;
        let var = self.chain_probs.iter().map(|c| (c[class] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        var.sqrt()
    }

    fn deterministic(probs: ClassSimplex) -> Self {
        PredictiveResult {
            chain_probs: vec![probs.probs().to_vec()],
            probs,
            trace: None,
        }
    }
}

fn softmax_rows(logits: &DenseArray) -> Result<DenseArray> {
    let mut v = Vec::with_capacity(logits.len());
    for r in 0..logits.rows() {
        v.extend_from_slice(ClassSimplex::from_logits(logits.row_slice(r))?.probs());
    }
    Ok(DenseArray::from_raw(vec![logits.rows(), logits.cols()], v))
}

/// Running sum that remembers whether every added value was identical, so
/// a constant sequence averages to exactly its value.
#[derive(Clone, Copy)]
struct Accum {
    sum: f64,
    first: f64,
    constant: bool,
    count: usize,
}

impl Accum {
    const EMPTY: Accum = Accum {
        sum: 0.0,
        first: 0.0,
        constant: true,
        count: 0,
    };

    fn add(&mut self, v: f64) {
        if self.count == 0 {
            self.first = v;
        } else if v != self.first {
            self.constant = false;
        }
        self.sum += v;
        self.count += 1;
    }

    fn mean(&self, n: usize) -> f64 {
        if self.constant && self.count == n {
            self.first
        } else {
            self.sum / n as f64
        }
    }
}

/// Rows handled together in a batched Gibbs sweep.
const CHUNK: usize = 512;

/// Gibbs predictive distribution at a single input.
pub fn gibbs_predict(model: &GenerativeModel, x: &[f64], cfg: &PredictConfig) -> Result<PredictiveResult> {
    if x.len() != model.dims().d_x {
        return Err(Error::dim("prediction input", model.dims().d_x, x.len()));
    }
    Ok(gibbs_chunk(model, &DenseArray::row(x), cfg)?.remove(0))
}

/// Gibbs predictive distributions for every row of `x`.
pub fn gibbs_predict_batch(model: &GenerativeModel, x: &DenseArray, cfg: &PredictConfig) -> Result<Vec<PredictiveResult>> {
    cfg.validate()?;
    check_model(model.params())?;
    if x.cols() != model.dims().d_x {
        return Err(Error::dim("prediction input", model.dims().d_x, x.cols()));
    }
    let chunks: Vec<DenseArray> = (0..x.rows())
        .step_by(CHUNK)
        .map(|start| {
            let end = (start + CHUNK).min(x.rows());
            DenseArray::from_raw(vec![end - start, x.cols()], x.values()[start * x.cols()..end * x.cols()].to_vec())
        })
        .collect();
    let parts: Vec<Vec<PredictiveResult>> = chunks
        .par_iter()
        .map(|c| gibbs_chunk(model, c, cfg))
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}

fn check_model(params: &ParameterStore) -> Result<()> {
    match params.first_non_finite() {
        Some(name) => Err(Error::numeric(format!("model parameter {name} is not finite"))),
        None => Ok(()),
    }
}

fn gibbs_chunk(model: &GenerativeModel, x: &DenseArray, cfg: &PredictConfig) -> Result<Vec<PredictiveResult>> {
    cfg.validate()?;
    check_model(model.params())?;
    let (n, k, d_z) = (x.rows(), model.dims().k, model.dims().d_z);
    let (steps, chains) = (cfg.gibbs_steps, cfg.chains);
    let posterior = match model.mode() {
        WeightMode::BayesianWy => Some(model.weight_posterior()?),
        WeightMode::PointEstimate => None,
    };
    let point_weights = match model.mode() {
        WeightMode::PointEstimate => Some(model.point_weights()?),
        WeightMode::BayesianWy => None,
    };
    let q_y = softmax_rows(&model.q_y_logits_batch(x)?)?;

    let mut sum = vec![Accum::EMPTY; n * k];
    let mut chain_sums = vec![vec![Accum::EMPTY; n * k]; chains];
    let mut trace = cfg.keep_trace.then(|| vec![Vec::with_capacity(chains * steps); n]);
    for (s, chain_sum) in chain_sums.iter_mut().enumerate() {
        let mut rng = substream(cfg.seed, Stream::Predict, s as u64);
        let u0: f64 = rng.random();
        let mut y: Vec<usize> = (0..n).map(|i| sample_categorical(q_y.row_slice(i), u0)).collect();
        for _ in 0..steps {
            let drawn;
            let weights = match (&posterior, &point_weights) {
                (Some(wp), _) => {
                    drawn = sample_weights(wp, &mut rng).weights;
                    &drawn
                }
                (None, Some(w)) => w,
                (None, None) => unreachable!("model has label weights"),
            };
            let eps: Vec<f64> = (0..d_z).map(|_| rng.sample(StandardNormal)).collect();
            let u: f64 = rng.random();

            let (mean, log_std) = model.encode_batch(x, &y)?;
            let mut z = mean.into_values();
            for (i, zi) in z.chunks_mut(d_z).enumerate() {
                for (j, v) in zi.iter_mut().enumerate() {
                    *v += log_std.get(i, j).exp() * eps[j];
                }
            }
            let z = DenseArray::from_raw(vec![n, d_z], z);
            let pi = softmax_rows(&model.classifier_logits_batch(x, &z, weights)?)?;
            for i in 0..n {
                let row = pi.row_slice(i);
                let next = sample_categorical(row, u);
                match cfg.averaging {
                    Averaging::ProbabilityMean => {
                        for c in 0..k {
                            sum[i * k + c].add(row[c]);
                            chain_sum[i * k + c].add(row[c]);
                        }
                    }
                    Averaging::LabelVote => {
                        for c in 0..k {
                            let hit = if c == next { 1.0 } else { 0.0 };
                            sum[i * k + c].add(hit);
                            chain_sum[i * k + c].add(hit);
                        }
                    }
                }
                if let Some(t) = trace.as_mut() {
                    t[i].push(ClassSimplex::from_normalized(row.to_vec())?);
                }
                y[i] = next;
            }
        }
    }

    let total = steps * chains;
    let mut traces = trace.map(|t| t.into_iter());
    (0..n)
        .map(|i| {
            let probs: Vec<f64> = sum[i * k..(i + 1) * k].iter().map(|a| a.mean(total)).collect();
            Ok(PredictiveResult {
                probs: ClassSimplex::from_normalized(probs)?,
                chain_probs: chain_sums
                    .iter()
                    .map(|c| c[i * k..(i + 1) * k].iter().map(|a| a.mean(steps)).collect())
                    .collect(),
                trace: traces.as_mut().and_then(Iterator::next),
            })
        })
        .collect()
}

/// Softmax of the baseline logits.
pub fn predict_dnn(model: &BaselineModel, x: &[f64]) -> Result<ClassSimplex> {
    Ok(predict_dnn_batch(model, &DenseArray::row(x))?.remove(0))
}

pub fn predict_dnn_batch(model: &BaselineModel, x: &DenseArray) -> Result<Vec<ClassSimplex>> {
    check_model(model.params())?;
    let logits = model.logits_batch(x)?;
    (0..logits.rows())
        .map(|r| ClassSimplex::from_logits(logits.row_slice(r)))
        .collect()
}

/// Predictive distributions of any trained system.
pub fn predict_points(model: &TrainedModel, points: &[Point], cfg: &PredictConfig) -> Result<Vec<PredictiveResult>> {
    let Some(x) = crate::data::points_matrix(points) else {
        return Ok(Vec::new());
    };
    match model {
        TrainedModel::Generative(m) => gibbs_predict_batch(m, &x, cfg),
        TrainedModel::Baseline(b) => Ok(predict_dnn_batch(b, &x)?
            .into_iter()
            .map(PredictiveResult::deterministic)
            .collect()),
    }
}

/// Test-set accuracy and mean log-likelihood.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub avg_loglik: f64,
}

/// Probabilities are floored at this value before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Accuracy (ties broken toward the lowest class) and mean `ln p[label]`.
pub fn score(probs: &[ClassSimplex], labels: &[usize]) -> Result<Evaluation> {
    if probs.is_empty() {
        return Err(Error::usage("empty test set"));
    }
    if probs.len() != labels.len() {
        return Err(Error::dim("test labels", probs.len(), labels.len()));
    }
    let n = probs.len() as f64;
    let correct = probs.iter().zip(labels).filter(|(p, &y)| p.argmax() == y).count();
    let ll = probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| p.probs()[y].max(PROB_FLOOR).ln())
        .sum::<f64>();
    Ok(Evaluation {
        accuracy: correct as f64 / n,
        avg_loglik: ll / n,
    })
}

pub fn evaluate_predictive(model: &TrainedModel, test: &Dataset, cfg: &PredictConfig) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::usage("empty test set"));
    }
    let results = predict_points(model, &test.points, cfg)?;
    let probs: Vec<ClassSimplex> = results.into_iter().map(|r| r.probs).collect();
    score(&probs, &test.labels)
}

/// CSV with header `x1,x2,p0,...,p{K-1},argmax`.
pub fn predictions_csv(points: &[Point], results: &[PredictiveResult]) -> String {
    let k = results.first().map_or(0, |r| r.probs.num_classes());
    let mut s = String::from("x1,x2");
    for c in 0..k {
        write!(s, ",p{c}").unwrap();
    }
    s.push_str(",argmax\n");
    for (p, r) in points.iter().zip(results) {
        write!(s, "{:e},{:e}", p[0], p[1]).unwrap();
        for v in r.probs.probs() {
            write!(s, ",{v:e}").unwrap();
        }
        writeln!(s, ",{}", r.probs.argmax()).unwrap();
    }
    s
}

pub fn save_predictions(path: impl AsRef<Path>, points: &[Point], results: &[PredictiveResult]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, predictions_csv(points, results)).map_err(|e| Error::io(path, e))
}
