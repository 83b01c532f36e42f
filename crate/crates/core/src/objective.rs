//! Variational objectives.
//!
//! For a labeled pair the bound is
//! `E_q(z|x,y)[log p(x|z) + log p(y|x,z)] - KL(q(z|x,y) || p(z))`.
//! For an unlabeled input the expectation over the discrete label is taken
//! exactly, `sum_y q(y|x) * bound(x, y) + H[q(y|x)]`. The combined objective
//! sums both over a minibatch and adds `alpha * mean log q(y|x)` over the
//! labeled points. With a weight posterior, the label network runs on a
//! reparameterized weight draw and the weight KL is charged once per
//! evaluation, scaled by `kl_w_scale`.
//!
//! Every evaluation records on a [`Tape`], so values and gradients come from
//! the same graph. Noise is passed in explicitly ([`ObjectiveNoise`]) so an
//! evaluation can be repeated exactly.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{
    posterior_log_sigma_name, posterior_mean_name, sample_weights, GenerativeModel, WeightMode, WeightSample,
    LOG_SCALE_MAX, LOG_SCALE_MIN,
};
use crate::nn::{mlp_forward_tape, register_params, DenseArray, GradientStore, ParameterStore, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveConfig {
    /// Monte Carlo samples of `z` per data point.
    pub mc_samples: usize,
    /// Weight of the `log q(y|x)` term on labeled data.
    pub alpha: f64,
    /// Multiplier applied to the weight KL.
    pub kl_w_scale: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            mc_samples: 1,
            alpha: 0.0,
            kl_w_scale: 1.0,
        }
    }
}

impl ObjectiveConfig {
    fn validate(&self) -> Result<()> {
        if self.mc_samples == 0 {
            return Err(Error::usage("mc_samples must be at least 1"));
        }
        if !(self.alpha >= 0.0) || !(self.kl_w_scale > 0.0) {
            return Err(Error::usage(format!("invalid objective config {self:?}")));
        }
        Ok(())
    }
}

/// Decomposed objective value.
///
/// `total = recon_x + recon_y - kl_z + entropy_y - kl_w + alpha_term`, where
/// `kl_w` is the weight KL as charged (already multiplied by `kl_w_scale`).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ElboTerms {
    pub total: f64,
    pub recon_x: f64,
    pub recon_y: f64,
    pub kl_z: f64,
    pub entropy_y: f64,
    pub kl_w: f64,
    pub alpha_term: f64,
}

impl ElboTerms {
    pub fn recombined(&self) -> f64 {
        self.recon_x + self.recon_y - self.kl_z + self.entropy_y - self.kl_w + self.alpha_term
    }

    fn check_finite(&self) -> Result<()> {
        let all = [
            self.total,
            self.recon_x,
            self.recon_y,
            self.kl_z,
            self.entropy_y,
            self.kl_w,
            self.alpha_term,
        ];
        if all.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::numeric(format!("non-finite objective: {self:?}")))
        }
    }
}

/// Labeled minibatch: one row of `x` per label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledBatch {
    pub x: DenseArray,
    pub y: Vec<usize>,
}

impl LabeledBatch {
    pub fn new(x: DenseArray, y: Vec<usize>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::dim("labeled batch labels", x.rows(), y.len()));
        }
        Ok(LabeledBatch { x, y })
    }

    pub fn single(x: &[f64], y: usize) -> Self {
        LabeledBatch {
            x: DenseArray::row(x),
            y: vec![y],
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Frozen standard-normal noise for one evaluation.
///
/// `labeled_z` has `mc_samples * n_labeled` rows (sample-major blocks);
/// `unlabeled_z` has `mc_samples * n_unlabeled` rows and is shared by every
/// label branch; `weights` holds one draw per label-network entry.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObjectiveNoise {
    pub labeled_z: Option<DenseArray>,
    pub unlabeled_z: Option<DenseArray>,
    pub weights: Option<ParameterStore>,
}

fn normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DenseArray {
    let v = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DenseArray::from_raw(vec![rows, cols], v)
}

impl ObjectiveNoise {
    /// Draws the latent noise for the given batch sizes from `z_rng` and,
    /// for a weight-posterior model, a weight draw from `w_rng`.
    pub fn draw<R1: Rng + ?Sized, R2: Rng + ?Sized>(
        model: &GenerativeModel,
        n_labeled: usize,
        n_unlabeled: usize,
        mc_samples: usize,
        z_rng: &mut R1,
        w_rng: &mut R2,
    ) -> Result<Self> {
        let d_z = model.dims().d_z;
        let labeled_z = (n_labeled > 0).then(|| normal_matrix(mc_samples * n_labeled, d_z, z_rng));
        let unlabeled_z = (n_unlabeled > 0).then(|| normal_matrix(mc_samples * n_unlabeled, d_z, z_rng));
        let weights = match model.mode() {
            WeightMode::PointEstimate => None,
            WeightMode::BayesianWy => Some(sample_weights(&model.weight_posterior()?, w_rng).noise),
        };
        Ok(ObjectiveNoise {
            labeled_z,
            unlabeled_z,
            weights,
        })
    }
}

/// Optional terms of an evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Include {
    pub alpha_term: bool,
    pub weight_kl: bool,
}

impl Include {
    pub const BOUND_ONLY: Include = Include {
        alpha_term: false,
        weight_kl: false,
    };
    pub const ALL: Include = Include {
        alpha_term: true,
        weight_kl: true,
    };
}

struct TermVars {
    total: Var,
    recon_x: Option<Var>,
    recon_y: Option<Var>,
    kl_z: Option<Var>,
    entropy_y: Option<Var>,
    kl_w: Option<Var>,
    alpha_term: Option<Var>,
}

struct Graph<'a> {
    tape: Tape,
    model: &'a GenerativeModel,
    vars: BTreeMap<String, Var>,
    weight_kl: Option<Var>,
}

/// Per-row bound components for rows of `x` paired with `labels`.
struct RowTerms {
    recon_x: Var,
    recon_y: Var,
    kl_z: Var,
}

impl<'a> Graph<'a> {
    fn new(model: &'a GenerativeModel, params: &ParameterStore, weight_noise: Option<&ParameterStore>) -> Result<Self> {
        let mut tape = Tape::new();
        let specs = model.specs();
        let mut vars = BTreeMap::new();
        for spec in [&specs.decoder, &specs.encoder_z, &specs.encoder_y] {
            vars.extend(register_params(spec, &mut tape, params)?);
        }
        let mut weight_kl = None;
        match model.mode() {
            WeightMode::PointEstimate => {
                vars.extend(register_params(&specs.classifier, &mut tape, params)?);
            }
            WeightMode::BayesianWy => {
                let noise = weight_noise.ok_or_else(|| Error::usage("weight-posterior model needs weight noise"))?;
                let mut kl_parts = Vec::new();
                for (name, shape) in specs.classifier.param_shapes() {
                    let mean_name = posterior_mean_name(&name);
                    let ls_name = posterior_log_sigma_name(&name);
                    let mean = tape.param(&mean_name, params.require(&mean_name)?);
                    let raw_ls = tape.param(&ls_name, params.require(&ls_name)?);
                    let log_sigma = tape.clamp(raw_ls, LOG_SCALE_MIN, LOG_SCALE_MAX);
                    let eps = noise.require(&name)?;
                    if eps.shape() != shape.as_slice() {
                        return Err(Error::dim(format!("weight noise {name}"), format!("{shape:?}"), format!("{:?}", eps.shape())));
                    }
                    let eps = tape.constant(eps);
                    let sigma = tape.exp(log_sigma);
                    let scaled = tape.mul(sigma, eps)?;
                    let w = tape.add(mean, scaled)?;
                    vars.insert(name, w);
                    let kl_rows = tape.kl_std_normal(mean, log_sigma)?;
                    kl_parts.push(tape.sum(kl_rows));
                }
                let mut acc = kl_parts[0];
                for &p in &kl_parts[1..] {
                    acc = tape.add(acc, p)?;
                }
                weight_kl = Some(acc);
            }
        }
        Ok(Graph {
            tape,
            model,
            vars,
            weight_kl,
        })
    }

    fn head(&mut self, spec_pick: fn(&crate::model::ModelSpecs) -> &crate::nn::MlpSpec, input: Var) -> Result<Vec<Var>> {
        let spec = spec_pick(self.model.specs());
        Ok(mlp_forward_tape(spec, &mut self.tape, &self.vars, input)?
            .into_iter()
            .map(|(_, v)| v)
            .collect())
    }

    /// Bound components for each row of `x` with label `labels[row]`,
    /// averaged over `mc` latent samples. `eps` holds `mc` blocks of rows.
    fn row_terms(&mut self, x: &DenseArray, labels: &[usize], eps: &DenseArray, mc: usize) -> Result<RowTerms> {
        let n = x.rows();
        let (d_z, k) = (self.model.dims().d_z, self.model.dims().k);
        if eps.rows() != mc * n || eps.cols() != d_z {
            return Err(Error::dim(
                "latent noise",
                format!("({}, {d_z})", mc * n),
                format!("({}, {})", eps.rows(), eps.cols()),
            ));
        }
        let enc_in = self.tape.constant_owned(self.model.encoder_input(x, labels)?);
        let enc = self.head(|s| &s.encoder_z, enc_in)?;
        let (mean, log_std) = (enc[0], self.tape.clamp(enc[1], LOG_SCALE_MIN, LOG_SCALE_MAX));
        let kl_z = self.tape.kl_std_normal(mean, log_std)?;

        let mean_rep = self.tape.repeat_rows(mean, mc);
        let ls_rep = self.tape.repeat_rows(log_std, mc);
        let std_rep = self.tape.exp(ls_rep);
        let eps = self.tape.constant(eps);
        let noise = self.tape.mul(std_rep, eps)?;
        let z = self.tape.add(mean_rep, noise)?;

        let x_rep = repeat(x, mc);
        let x_var = self.tape.constant_owned(x_rep);
        let dec = self.head(|s| &s.decoder, z)?;
        let log_nu = self.tape.clamp(dec[1], LOG_SCALE_MIN, LOG_SCALE_MAX);
        let log_px = self.tape.gaussian_logpdf(x_var, dec[0], log_nu)?;

        let cls_in = self.tape.concat_cols(&[z, x_var])?;
        let logits = self.head(|s| &s.classifier, cls_in)?[0];
        let log_pi = self.tape.log_softmax(logits);
        let onehot_rep = self.tape.constant_owned(repeat(&onehot_matrix(labels, k), mc));
        let picked = self.tape.mul(log_pi, onehot_rep)?;
        let log_py = self.tape.row_sum(picked);

        Ok(RowTerms {
            recon_x: self.tape.mean_blocks(log_px, mc)?,
            recon_y: self.tape.mean_blocks(log_py, mc)?,
            kl_z,
        })
    }

    fn q_y_log_probs(&mut self, x: &DenseArray) -> Result<Var> {
        let xv = self.tape.constant(x);
        let logits = self.head(|s| &s.encoder_y, xv)?[0];
        Ok(self.tape.log_softmax(logits))
    }

    fn labeled(&mut self, batch: &LabeledBatch, eps: &DenseArray, mc: usize) -> Result<(Var, Var, Var)> {
        let t = self.row_terms(&batch.x, &batch.y, eps, mc)?;
        Ok((self.tape.sum(t.recon_x), self.tape.sum(t.recon_y), self.tape.sum(t.kl_z)))
    }

    fn unlabeled(&mut self, x: &DenseArray, eps: &DenseArray, mc: usize) -> Result<(Var, Var, Var, Var)> {
        let n = x.rows();
        let k = self.model.dims().k;
        // branch-major tall batch: rows [b * n + i] carry label b
        let x_tall = repeat(x, k);
        let labels: Vec<usize> = (0..k).flat_map(|b| std::iter::repeat(b).take(n)).collect();
        // eps rows are [l * n + i]; every branch reuses the same block
        let mut tall_eps = Vec::with_capacity(mc * k * n * eps.cols());
        for l in 0..mc {
            let block = &eps.values()[l * n * eps.cols()..(l + 1) * n * eps.cols()];
            for _ in 0..k {
                tall_eps.extend_from_slice(block);
            }
        }
        let tall_eps = DenseArray::from_raw(vec![mc * k * n, eps.cols()], tall_eps);
        let t = self.row_terms(&x_tall, &labels, &tall_eps, mc)?;

        let log_q = self.q_y_log_probs(x)?;
        let q = self.tape.exp(log_q);
        let weighted = |tape: &mut Tape, rows: Var| -> Result<Var> {
            let per_class = tape.blocks_to_cols(rows, k)?;
            let w = tape.mul(q, per_class)?;
            let s = tape.row_sum(w);
            Ok(tape.sum(s))
        };
        let recon_x = weighted(&mut self.tape, t.recon_x)?;
        let recon_y = weighted(&mut self.tape, t.recon_y)?;
        let kl_z = weighted(&mut self.tape, t.kl_z)?;
        let plogp = self.tape.mul(q, log_q)?;
        let neg_h = self.tape.sum(plogp);
        let entropy = self.tape.scale(neg_h, -1.0);
        Ok((recon_x, recon_y, kl_z, entropy))
    }

    fn alpha_term(&mut self, batch: &LabeledBatch, alpha: f64) -> Result<Var> {
        let log_q = self.q_y_log_probs(&batch.x)?;
        let onehot = self.tape.constant_owned(onehot_matrix(&batch.y, self.model.dims().k));
        let picked = self.tape.mul(log_q, onehot)?;
        let s = self.tape.sum(picked);
        Ok(self.tape.scale(s, alpha / batch.len() as f64))
    }
}

fn repeat(a: &DenseArray, times: usize) -> DenseArray {
    let mut v = Vec::with_capacity(a.len() * times);
    for _ in 0..times {
        v.extend_from_slice(a.values());
    }
    DenseArray::from_raw(vec![a.rows() * times, a.cols()], v)
}

fn onehot_matrix(labels: &[usize], k: usize) -> DenseArray {
    let mut v = vec![0.0; labels.len() * k];
    for (r, &y) in labels.iter().enumerate() {
        v[r * k + y] = 1.0;
    }
    DenseArray::from_raw(vec![labels.len(), k], v)
}

fn add_opt(tape: &mut Tape, a: Option<Var>, b: Var) -> Result<Var> {
    match a {
        Some(a) => tape.add(a, b),
        None => Ok(b),
    }
}

/// Per-row labeled bound (`recon_x + recon_y - kl_z`) for rows of `x`
/// paired with `labels`, each averaged over `mc` latent samples.
pub fn labeled_row_values(
    model: &GenerativeModel,
    x: &DenseArray,
    labels: &[usize],
    eps: &DenseArray,
    mc: usize,
    weight_noise: Option<&ParameterStore>,
) -> Result<Vec<f64>> {
    let mut g = Graph::new(model, model.params(), weight_noise)?;
    let t = g.row_terms(x, labels, eps, mc)?;
    let (rx, ry, kz) = (g.tape.value(t.recon_x), g.tape.value(t.recon_y), g.tape.value(t.kl_z));
    Ok((0..x.rows())
        .map(|r| rx.values()[r] + ry.values()[r] - kz.values()[r])
        .collect())
}

fn build(
    model: &GenerativeModel,
    params: &ParameterStore,
    labeled: Option<&LabeledBatch>,
    unlabeled: Option<&DenseArray>,
    noise: &ObjectiveNoise,
    cfg: &ObjectiveConfig,
    include: Include,
) -> Result<(Tape, TermVars)> {
    cfg.validate()?;
    let labeled = labeled.filter(|b| !b.is_empty());
    if labeled.is_none() && unlabeled.is_none() {
        return Err(Error::usage("objective needs at least one non-empty batch"));
    }
    let mut g = Graph::new(model, params, noise.weights.as_ref())?;
    let mc = cfg.mc_samples;
    let (mut rx, mut ry, mut kz, mut ent, mut alpha) = (None, None, None, None, None);

    if let Some(b) = labeled {
        let eps = noise
            .labeled_z
            .as_ref()
            .ok_or_else(|| Error::usage("missing labeled latent noise"))?;
        let (a, b2, c) = g.labeled(b, eps, mc)?;
        rx = Some(a);
        ry = Some(b2);
        kz = Some(c);
        if include.alpha_term {
            alpha = Some(g.alpha_term(b, cfg.alpha)?);
        }
    }
    if let Some(x) = unlabeled {
        let eps = noise
            .unlabeled_z
            .as_ref()
            .ok_or_else(|| Error::usage("missing unlabeled latent noise"))?;
        let (a, b, c, h) = g.unlabeled(x, eps, mc)?;
        rx = Some(add_opt(&mut g.tape, rx, a)?);
        ry = Some(add_opt(&mut g.tape, ry, b)?);
        kz = Some(add_opt(&mut g.tape, kz, c)?);
        ent = Some(h);
    }
    let kl_w = match (include.weight_kl, g.weight_kl) {
        (true, Some(kl)) => Some(g.tape.scale(kl, cfg.kl_w_scale)),
        _ => None,
    };

    let tape = &mut g.tape;
    let rx = rx.expect("at least one batch");
    let ry = ry.expect("at least one batch");
    let kz = kz.expect("at least one batch");
    let mut total = tape.add(rx, ry)?;
    total = tape.sub(total, kz)?;
    if let Some(h) = ent {
        total = tape.add(total, h)?;
    }
    if let Some(k) = kl_w {
        total = tape.sub(total, k)?;
    }
    if let Some(a) = alpha {
        total = tape.add(total, a)?;
    }
    Ok((
        g.tape,
        TermVars {
            total,
            recon_x: Some(rx),
            recon_y: Some(ry),
            kl_z: Some(kz),
            entropy_y: ent,
            kl_w,
            alpha_term: alpha,
        },
    ))
}

fn read_terms(tape: &Tape, v: &TermVars) -> ElboTerms {
    let get = |o: Option<Var>| o.map_or(0.0, |x| tape.scalar(x));
    ElboTerms {
        total: tape.scalar(v.total),
        recon_x: get(v.recon_x),
        recon_y: get(v.recon_y),
        kl_z: get(v.kl_z),
        entropy_y: get(v.entropy_y),
        kl_w: get(v.kl_w),
        alpha_term: get(v.alpha_term),
    }
}

/// Evaluates the objective at `params` (which must be laid out like the
/// model's own store) with frozen noise.
pub fn evaluate_with_params(
    model: &GenerativeModel,
    params: &ParameterStore,
    labeled: Option<&LabeledBatch>,
    unlabeled: Option<&DenseArray>,
    noise: &ObjectiveNoise,
    cfg: &ObjectiveConfig,
    include: Include,
) -> Result<ElboTerms> {
    let (tape, vars) = build(model, params, labeled, unlabeled, noise, cfg, include)?;
    let terms = read_terms(&tape, &vars);
    terms.check_finite()?;
    Ok(terms)
}

/// Evaluates the objective at the model's parameters with frozen noise.
pub fn evaluate(
    model: &GenerativeModel,
    labeled: Option<&LabeledBatch>,
    unlabeled: Option<&DenseArray>,
    noise: &ObjectiveNoise,
    cfg: &ObjectiveConfig,
    include: Include,
) -> Result<ElboTerms> {
    evaluate_with_params(model, model.params(), labeled, unlabeled, noise, cfg, include)
}

/// Objective value and the gradient of its negation (the training loss)
/// with respect to every model parameter.
pub fn loss_gradients(
    model: &GenerativeModel,
    labeled: Option<&LabeledBatch>,
    unlabeled: Option<&DenseArray>,
    noise: &ObjectiveNoise,
    cfg: &ObjectiveConfig,
    include: Include,
) -> Result<(ElboTerms, GradientStore)> {
    let (mut tape, vars) = build(model, model.params(), labeled, unlabeled, noise, cfg, include)?;
    let terms = read_terms(&tape, &vars);
    terms.check_finite()?;
    let loss = tape.scale(vars.total, -1.0);
    let grads = tape.backward(loss, model.params())?;
    Ok((terms, grads))
}

fn noise_with_weights<R: Rng + ?Sized>(
    model: &GenerativeModel,
    n_labeled: usize,
    n_unlabeled: usize,
    cfg: &ObjectiveConfig,
    weights: Option<&WeightSample>,
    rng: &mut R,
) -> Result<ObjectiveNoise> {
    let d_z = model.dims().d_z;
    let mc = cfg.mc_samples;
    let labeled_z = (n_labeled > 0).then(|| normal_matrix(mc * n_labeled, d_z, rng));
    let unlabeled_z = (n_unlabeled > 0).then(|| normal_matrix(mc * n_unlabeled, d_z, rng));
    let weights = match (model.mode(), weights) {
        (WeightMode::PointEstimate, _) => None,
        (WeightMode::BayesianWy, Some(w)) => Some(w.noise.clone()),
        (WeightMode::BayesianWy, None) => Some(sample_weights(&model.weight_posterior()?, rng).noise),
    };
    Ok(ObjectiveNoise {
        labeled_z,
        unlabeled_z,
        weights,
    })
}

/// Labeled bound for one pair. A weight-posterior model uses one weight
/// draw from `rng` and does not charge the weight KL.
pub fn labeled_elbo<R: Rng + ?Sized>(
    model: &GenerativeModel,
    x: &[f64],
    y: usize,
    cfg: &ObjectiveConfig,
    rng: &mut R,
) -> Result<ElboTerms> {
    check_label(model, y)?;
    let batch = LabeledBatch::single(x, y);
    let noise = noise_with_weights(model, 1, 0, cfg, None, rng)?;
    evaluate(model, Some(&batch), None, &noise, cfg, Include::BOUND_ONLY)
}

/// Unlabeled bound for one input, summing explicitly over every label.
pub fn unlabeled_elbo<R: Rng + ?Sized>(
    model: &GenerativeModel,
    x: &[f64],
    cfg: &ObjectiveConfig,
    rng: &mut R,
) -> Result<ElboTerms> {
    let xa = DenseArray::row(x);
    let noise = noise_with_weights(model, 0, 1, cfg, None, rng)?;
    evaluate(model, None, Some(&xa), &noise, cfg, Include::BOUND_ONLY)
}

/// Sum of labeled bounds, unlabeled bounds, the alpha term and (for a
/// weight posterior) the scaled weight KL, over one pair of minibatches.
pub fn combined_objective<R: Rng + ?Sized>(
    model: &GenerativeModel,
    labeled: Option<&LabeledBatch>,
    unlabeled: Option<&DenseArray>,
    cfg: &ObjectiveConfig,
    rng: &mut R,
) -> Result<ElboTerms> {
    let n_l = labeled.map_or(0, LabeledBatch::len);
    let n_u = unlabeled.map_or(0, DenseArray::rows);
    let noise = noise_with_weights(model, n_l, n_u, cfg, None, rng)?;
    evaluate(model, labeled, unlabeled, &noise, cfg, Include::ALL)
}

fn require_bayesian(model: &GenerativeModel) -> Result<()> {
    if model.mode() != WeightMode::BayesianWy {
        return Err(Error::usage("Bayesian bound requested for a point-estimate model"));
    }
    Ok(())
}

fn check_label(model: &GenerativeModel, y: usize) -> Result<()> {
    if y >= model.dims().k {
        return Err(Error::usage(format!("label {y} out of range for {} classes", model.dims().k)));
    }
    Ok(())
}

/// Labeled bound under the weight draw `w`, minus `kl_w_scale` times the
/// weight KL.
pub fn bayesian_labeled_elbo<R: Rng + ?Sized>(
    model: &GenerativeModel,
    x: &[f64],
    y: usize,
    w: &WeightSample,
    cfg: &ObjectiveConfig,
    rng: &mut R,
) -> Result<ElboTerms> {
    require_bayesian(model)?;
    check_label(model, y)?;
    let batch = LabeledBatch::single(x, y);
    let noise = noise_with_weights(model, 1, 0, cfg, Some(w), rng)?;
    evaluate(
        model,
        Some(&batch),
        None,
        &noise,
        cfg,
        Include {
            alpha_term: false,
            weight_kl: true,
        },
    )
}

/// Unlabeled bound under the weight draw `w`. The weight KL is left to the
/// minibatch-level objective.
pub fn bayesian_unlabeled_elbo<R: Rng + ?Sized>(
    model: &GenerativeModel,
    x: &[f64],
    w: &WeightSample,
    cfg: &ObjectiveConfig,
    rng: &mut R,
) -> Result<ElboTerms> {
    require_bayesian(model)?;
    let xa = DenseArray::row(x);
    let noise = noise_with_weights(model, 0, 1, cfg, Some(w), rng)?;
    evaluate(model, None, Some(&xa), &noise, cfg, Include::BOUND_ONLY)
}
