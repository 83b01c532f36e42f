//! Density, sampling, KL and entropy primitives shared by the model,
//! the objectives and the predictor.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Bounds applied to every log-std / log-variance the networks emit.
pub const LOG_SCALE_MIN: f64 = -7.0;
pub const LOG_SCALE_MAX: f64 = 4.0;

pub(crate) const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

pub fn clamp_log_scale(v: f64) -> f64 {
    v.clamp(LOG_SCALE_MIN, LOG_SCALE_MAX)
}

/// Gaussian with diagonal covariance, parameterized by mean and log-std.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalGaussian {
    mean: Vec<f64>,
    log_std: Vec<f64>,
}

impl DiagonalGaussian {
    /// `log_std` is clamped to `[LOG_SCALE_MIN, LOG_SCALE_MAX]`.
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        if mean.len() != log_std.len() {
            return Err(Error::dim("DiagonalGaussian log_std", mean.len(), log_std.len()));
        }
        if mean.iter().chain(&log_std).any(|v| !v.is_finite()) {
            return Err(Error::numeric("DiagonalGaussian with non-finite parameters"));
        }
        Ok(DiagonalGaussian {
            mean,
            log_std: log_std.into_iter().map(clamp_log_scale).collect(),
        })
    }

    /// `N(0, I)` in `dim` dimensions.
    pub fn standard(dim: usize) -> Self {
        DiagonalGaussian {
            mean: vec![0.0; dim],
            log_std: vec![0.0; dim],
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|s| s.exp()).collect()
    }
}

/// Output of the decoder: mean and log of the diagonal variance.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianObservation {
    mu_x: Vec<f64>,
    log_nu_x: Vec<f64>,
}

impl GaussianObservation {
    /// `log_nu_x` is clamped to `[LOG_SCALE_MIN, LOG_SCALE_MAX]`.
    pub fn new(mu_x: Vec<f64>, log_nu_x: Vec<f64>) -> Result<Self> {
        if mu_x.len() != log_nu_x.len() {
            return Err(Error::dim("GaussianObservation log_nu_x", mu_x.len(), log_nu_x.len()));
        }
        if mu_x.iter().chain(&log_nu_x).any(|v| !v.is_finite()) {
            return Err(Error::numeric("GaussianObservation with non-finite parameters"));
        }
        Ok(GaussianObservation {
            mu_x,
            log_nu_x: log_nu_x.into_iter().map(clamp_log_scale).collect(),
        })
    }

    pub fn mu_x(&self) -> &[f64] {
        &self.mu_x
    }

    pub fn log_nu_x(&self) -> &[f64] {
        &self.log_nu_x
    }

    /// Draws `x ~ N(mu_x, nu_x)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.mu_x
            .iter()
            .zip(&self.log_nu_x)
            .map(|(m, lv)| m + (0.5 * lv).exp() * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

/// Categorical distribution over `K >= 2` classes, kept together with the
/// logits it came from so log-probabilities stay accurate.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassSimplex {
    logits: Vec<f64>,
    probs: Vec<f64>,
}

impl ClassSimplex {
    /// Max-shifted softmax of `logits`.
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        if logits.len() < 2 {
            return Err(Error::usage(format!("need at least 2 classes, got {}", logits.len())));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("non-finite logits {logits:?}")));
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let lse = max + z.ln();
        Ok(ClassSimplex {
            logits: logits.iter().map(|l| l - lse).collect(),
            probs: exps.into_iter().map(|e| e / z).collect(),
        })
    }

    /// From explicit probabilities (renormalized). Zero entries get a
    /// log-probability of `ln(1e-300)`.
    pub fn from_probs(probs: &[f64]) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::usage(format!("need at least 2 classes, got {}", probs.len())));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::numeric(format!("invalid probabilities {probs:?}")));
        }
        let z: f64 = probs.iter().sum();
        if z <= 0.0 {
            return Err(Error::numeric("probabilities sum to zero"));
        }
        let probs: Vec<f64> = probs.iter().map(|p| p / z).collect();
        Ok(ClassSimplex {
            logits: probs.iter().map(|p| p.max(1e-300).ln()).collect(),
            probs,
        })
    }

    /// Keeps `probs` verbatim; they must already sum to one within 1e-9.
    pub fn from_normalized(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::usage(format!("need at least 2 classes, got {}", probs.len())));
        }
        let z: f64 = probs.iter().sum();
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) || (z - 1.0).abs() > 1e-9 {
            return Err(Error::numeric(format!("invalid probabilities {probs:?}")));
        }
        Ok(ClassSimplex {
            logits: probs.iter().map(|p| p.max(1e-300).ln()).collect(),
            probs,
        })
    }

    pub fn uniform(k: usize) -> Self {
        ClassSimplex {
            logits: vec![-(k as f64).ln(); k],
            probs: vec![1.0 / k as f64; k],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Normalized log-probabilities.
    pub fn log_probs(&self) -> &[f64] {
        &self.logits
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    /// Most probable class; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Inverse-CDF draw given `u ~ U[0, 1)`.
    pub fn sample_with(&self, u: f64) -> usize {
        sample_categorical(&self.probs, u)
    }
}

pub(crate) fn sample_categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Draws from `p(z) = N(0, I)`.
pub fn sample_prior_z<R: Rng + ?Sized>(d_z: usize, rng: &mut R) -> Vec<f64> {
    (0..d_z).map(|_| rng.sample(StandardNormal)).collect()
}

/// `log N(z; 0, I)`.
pub fn prior_z_logpdf(z: &[f64]) -> f64 {
    z.iter().map(|v| -HALF_LN_2PI - 0.5 * v * v).sum()
}

/// `log N(x; mu_x, diag(nu_x))`.
pub fn gaussian_obs_logpdf(x: &[f64], obs: &GaussianObservation) -> Result<f64> {
    if x.len() != obs.mu_x.len() {
        return Err(Error::dim("observation", obs.mu_x.len(), x.len()));
    }
    Ok(x.iter()
        .zip(&obs.mu_x)
        .zip(&obs.log_nu_x)
        .map(|((xv, m), lv)| {
            let d = xv - m;
            -HALF_LN_2PI - 0.5 * lv - 0.5 * d * d * (-lv).exp()
        })
        .sum())
}

/// `mean + exp(log_std) * eps`.
pub fn reparam_sample(dg: &DiagonalGaussian, eps: &[f64]) -> Result<Vec<f64>> {
    if eps.len() != dg.dim() {
        return Err(Error::dim("reparameterization noise", dg.dim(), eps.len()));
    }
    Ok(dg
        .mean
        .iter()
        .zip(&dg.log_std)
        .zip(eps)
        .map(|((m, s), e)| m + s.exp() * e)
        .collect())
}

/// Closed-form `KL(dg || N(0, I))`.
pub fn kl_diag_gauss_std(dg: &DiagonalGaussian) -> f64 {
    dg.mean
        .iter()
        .zip(&dg.log_std)
        .map(|(m, s)| 0.5 * (m * m + (2.0 * s).exp() - 1.0 - 2.0 * s))
        .sum()
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy_cat(s: &ClassSimplex) -> f64 {
    -s.probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}
