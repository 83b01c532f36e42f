//! Generative model `p(z) p(x|z) p(y|x,z)`, its two recognition networks
//! `q(z|x,y)` and `q(y|x)`, and the mean-field posterior over the label
//! network weights.

mod checkpoint;
pub mod dist;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

pub use checkpoint::{load_checkpoint, parse_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_HEADER};
pub use dist::{
    entropy_cat, gaussian_obs_logpdf, kl_diag_gauss_std, prior_z_logpdf, reparam_sample, sample_prior_z,
    ClassSimplex, DiagonalGaussian, GaussianObservation, LOG_SCALE_MAX, LOG_SCALE_MIN,
};

use crate::error::{Error, Result};
use crate::nn::{mlp_forward, DenseArray, MlpSpec, ParameterStore};

pub const DECODER: &str = "decoder";
pub const CLASSIFIER: &str = "classifier";
pub const ENCODER_Z: &str = "enc_z";
pub const ENCODER_Y: &str = "enc_y";

/// Suffixes of the posterior mean / log-std arrays of a label-network weight.
pub const POSTERIOR_MEAN: &str = "mu";
pub const POSTERIOR_LOG_SIGMA: &str = "log_sigma";

/// Initial log-std of every weight in the posterior.
pub const POSTERIOR_LOG_SIGMA_INIT: f64 = -5.0;

/// How the label-network weights are represented.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightMode {
    PointEstimate,
    BayesianWy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelDims {
    pub d_x: usize,
    pub d_z: usize,
    pub k: usize,
    pub hidden: Vec<usize>,
}

impl ModelDims {
    /// Two-moons configuration: 2-d inputs, 5-d latent, 2 classes, two
    /// hidden layers of 128 units.
    pub fn two_moons() -> Self {
        ModelDims {
            d_x: 2,
            d_z: 5,
            k: 2,
            hidden: vec![128, 128],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.d_x == 0 || self.d_z == 0 {
            return Err(Error::usage("d_x and d_z must be at least 1"));
        }
        if self.k < 2 {
            return Err(Error::usage("need at least 2 classes"));
        }
        Ok(())
    }
}

/// Network layouts of the four components.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpecs {
    pub decoder: MlpSpec,
    pub classifier: MlpSpec,
    pub encoder_z: MlpSpec,
    pub encoder_y: MlpSpec,
}

impl ModelSpecs {
    pub fn new(dims: &ModelDims) -> Result<Self> {
        dims.validate()?;
        Ok(ModelSpecs {
            // one trunk, two heads for the mean and log-variance
            decoder: MlpSpec::new(DECODER, dims.d_z, &dims.hidden, &[("mu", dims.d_x), ("log_nu", dims.d_x)])?,
            // input is [z, x]
            classifier: MlpSpec::new(CLASSIFIER, dims.d_z + dims.d_x, &dims.hidden, &[("logits", dims.k)])?,
            // input is [x, onehot(y)]
            encoder_z: MlpSpec::new(
                ENCODER_Z,
                dims.d_x + dims.k,
                &dims.hidden,
                &[("mean", dims.d_z), ("log_std", dims.d_z)],
            )?,
            encoder_y: MlpSpec::new(ENCODER_Y, dims.d_x, &dims.hidden, &[("logits", dims.k)])?,
        })
    }
}

pub fn posterior_mean_name(weight: &str) -> String {
    format!("{weight}.{POSTERIOR_MEAN}")
}

pub fn posterior_log_sigma_name(weight: &str) -> String {
    format!("{weight}.{POSTERIOR_LOG_SIGMA}")
}

/// Mean-field Gaussian over every entry of the label-network weights and
/// biases, keyed by the point-estimate parameter name.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightPosterior {
    entries: BTreeMap<String, (Vec<usize>, DiagonalGaussian)>,
}

impl WeightPosterior {
    pub fn new() -> Self {
        WeightPosterior {
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, dist: DiagonalGaussian) -> Result<()> {
        let name = name.into();
        let count: usize = shape.iter().product();
        if count != dist.dim() {
            return Err(Error::dim(format!("posterior {name}"), count, dist.dim()));
        }
        self.entries.insert(name, (shape, dist));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&DiagonalGaussian> {
        self.entries.get(name).map(|(_, d)| d)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[usize], &DiagonalGaussian)> {
        self.entries.iter().map(|(k, (s, d))| (k.as_str(), s.as_slice(), d))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Default for WeightPosterior {
    fn default() -> Self {
        Self::new()
    }
}

/// A concrete draw of the label-network weights along with the standard
/// normal noise that produced it, so the draw can be replayed on a tape.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSample {
    pub noise: ParameterStore,
    pub weights: ParameterStore,
}

/// `KL(q(W) || N(0, I))` summed over all weight entries.
pub fn kl_weight_posterior(wp: &WeightPosterior) -> f64 {
    wp.iter().map(|(_, _, d)| kl_diag_gauss_std(d)).sum()
}

/// Reparameterized draw `mu + sigma * eps`, entries in name order.
pub fn sample_weights<R: Rng + ?Sized>(wp: &WeightPosterior, rng: &mut R) -> WeightSample {
    let mut noise = ParameterStore::new();
    let mut weights = ParameterStore::new();
    for (name, shape, dist) in wp.iter() {
        let eps: Vec<f64> = (0..dist.dim()).map(|_| rng.sample(StandardNormal)).collect();
        let w = reparam_sample(dist, &eps).expect("noise sized from the posterior");
        noise.set(name, DenseArray::from_raw(shape.to_vec(), eps));
        weights.set(name, DenseArray::from_raw(shape.to_vec(), w));
    }
    WeightSample { noise, weights }
}

/// One ancestral draw from the generative model.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedSample {
    pub z: Vec<f64>,
    pub x: Vec<f64>,
    pub y: usize,
}

/// The full model: decoder, label network (point or posterior), and both
/// recognition networks.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerativeModel {
    dims: ModelDims,
    mode: WeightMode,
    specs: ModelSpecs,
    params: ParameterStore,
}

impl GenerativeModel {
    /// Fresh model with weights `~ N(0, 1/fan_in)` and zero biases. In
    /// Bayesian mode the posterior means take that initialization and every
    /// log-std starts at [`POSTERIOR_LOG_SIGMA_INIT`].
    pub fn new<R: Rng + ?Sized>(dims: ModelDims, mode: WeightMode, rng: &mut R) -> Result<Self> {
        let specs = ModelSpecs::new(&dims)?;
        let mut params = ParameterStore::new();
        params.extend(specs.decoder.init_params(rng));
        let classifier = specs.classifier.init_params(rng);
        match mode {
            WeightMode::PointEstimate => params.extend(classifier),
            WeightMode::BayesianWy => {
                for (name, w) in classifier.iter() {
                    params.set(posterior_mean_name(name), w.clone());
                    params.set(
                        posterior_log_sigma_name(name),
                        DenseArray::filled(w.shape(), POSTERIOR_LOG_SIGMA_INIT),
                    );
                }
            }
        }
        params.extend(specs.encoder_z.init_params(rng));
        params.extend(specs.encoder_y.init_params(rng));
        Ok(GenerativeModel {
            dims,
            mode,
            specs,
            params,
        })
    }

    /// Model with every parameter zero (posterior log-stds too).
    pub fn zeros(dims: ModelDims, mode: WeightMode) -> Result<Self> {
        let specs = ModelSpecs::new(&dims)?;
        let mut params = ParameterStore::new();
        for (name, shape) in Self::expected_shapes(&specs, mode) {
            params.set(name, DenseArray::zeros(&shape));
        }
        Ok(GenerativeModel {
            dims,
            mode,
            specs,
            params,
        })
    }

    /// Rebuilds a model from stored parameters, checking names and shapes.
    pub fn from_parts(dims: ModelDims, mode: WeightMode, params: ParameterStore) -> Result<Self> {
        let specs = ModelSpecs::new(&dims)?;
        let expected = Self::expected_shapes(&specs, mode);
        if expected.len() != params.len() {
            return Err(Error::usage(format!(
                "expected {} parameter arrays, found {}",
                expected.len(),
                params.len()
            )));
        }
        for (name, shape) in &expected {
            let a = params.require(name)?;
            if a.shape() != shape.as_slice() {
                return Err(Error::dim(name.clone(), format!("{shape:?}"), format!("{:?}", a.shape())));
            }
        }
        if let Some(bad) = params.first_non_finite() {
            return Err(Error::numeric(format!("parameter {bad} is not finite")));
        }
        Ok(GenerativeModel {
            dims,
            mode,
            specs,
            params,
        })
    }

    fn expected_shapes(specs: &ModelSpecs, mode: WeightMode) -> Vec<(String, Vec<usize>)> {
        let mut out = specs.decoder.param_shapes();
        for (name, shape) in specs.classifier.param_shapes() {
            match mode {
                WeightMode::PointEstimate => out.push((name, shape)),
                WeightMode::BayesianWy => {
                    out.push((posterior_mean_name(&name), shape.clone()));
                    out.push((posterior_log_sigma_name(&name), shape));
                }
            }
        }
        out.extend(specs.encoder_z.param_shapes());
        out.extend(specs.encoder_y.param_shapes());
        out
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn mode(&self) -> WeightMode {
        self.mode
    }

    pub fn specs(&self) -> &ModelSpecs {
        &self.specs
    }

    /// Every trainable array.
    pub fn params(&self) -> &ParameterStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.params
    }

    pub fn set_params(&mut self, params: ParameterStore) -> Result<()> {
        let rebuilt = GenerativeModel::from_parts(self.dims.clone(), self.mode, params)?;
        self.params = rebuilt.params;
        Ok(())
    }

    /// Point-estimate label-network weights (point mode only).
    pub fn point_weights(&self) -> Result<ParameterStore> {
        match self.mode {
            WeightMode::PointEstimate => Ok(self.params.with_prefix(&format!("{CLASSIFIER}."))),
            WeightMode::BayesianWy => Err(Error::usage("model has a weight posterior, not point weights")),
        }
    }

    /// The posterior `q(W_y)` (Bayesian mode only).
    pub fn weight_posterior(&self) -> Result<WeightPosterior> {
        if self.mode != WeightMode::BayesianWy {
            return Err(Error::usage("model has point weights, not a weight posterior"));
        }
        let mut wp = WeightPosterior::new();
        for (name, shape) in self.specs.classifier.param_shapes() {
            let mean = self.params.require(&posterior_mean_name(&name))?;
            let log_sigma = self.params.require(&posterior_log_sigma_name(&name))?;
            wp.insert(
                name,
                shape,
                DiagonalGaussian::new(mean.values().to_vec(), log_sigma.values().to_vec())?,
            )?;
        }
        Ok(wp)
    }

    /// Overwrites the posterior arrays from `wp` (Bayesian mode only).
    pub fn set_weight_posterior(&mut self, wp: &WeightPosterior) -> Result<()> {
        if self.mode != WeightMode::BayesianWy {
            return Err(Error::usage("model has point weights, not a weight posterior"));
        }
        for (name, shape, dist) in wp.iter() {
            let mean_name = posterior_mean_name(name);
            if !self.params.contains(&mean_name) {
                return Err(Error::usage(format!("unknown label-network weight {name}")));
            }
            self.params.set(mean_name, DenseArray::new(shape.to_vec(), dist.mean().to_vec())?);
            self.params.set(
                posterior_log_sigma_name(name),
                DenseArray::new(shape.to_vec(), dist.log_std().to_vec())?,
            );
        }
        Ok(())
    }

    /// Label-network weights to use for one evaluation: the point estimate,
    /// or a fresh posterior draw.
    pub fn draw_weights<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ParameterStore> {
        match self.mode {
            WeightMode::PointEstimate => self.point_weights(),
            WeightMode::BayesianWy => Ok(sample_weights(&self.weight_posterior()?, rng).weights),
        }
    }

    fn check_len(what: &str, v: &[f64], expected: usize) -> Result<()> {
        if v.len() != expected {
            return Err(Error::dim(what, expected, v.len()));
        }
        Ok(())
    }

    // Batched evaluation. Rows are data points.

    /// Decoder heads for a batch of latent codes, log-variance clamped.
    pub fn decode_batch(&self, z: &DenseArray) -> Result<(DenseArray, DenseArray)> {
        let mut out = mlp_forward(&self.specs.decoder, &self.params, z)?;
        let mu = out.remove("mu").expect("decoder head");
        let log_nu = out.remove("log_nu").expect("decoder head").map(dist::clamp_log_scale);
        Ok((mu, log_nu))
    }

    /// Encoder `q(z|x,y)` for a batch; `labels` holds one class per row.
    pub fn encode_batch(&self, x: &DenseArray, labels: &[usize]) -> Result<(DenseArray, DenseArray)> {
        let input = self.encoder_input(x, labels)?;
        let mut out = mlp_forward(&self.specs.encoder_z, &self.params, &input)?;
        let mean = out.remove("mean").expect("encoder head");
        let log_std = out.remove("log_std").expect("encoder head").map(dist::clamp_log_scale);
        Ok((mean, log_std))
    }

    pub(crate) fn encoder_input(&self, x: &DenseArray, labels: &[usize]) -> Result<DenseArray> {
        let (n, d_x, k) = (x.rows(), self.dims.d_x, self.dims.k);
        if x.cols() != d_x {
            return Err(Error::dim("encoder x", d_x, x.cols()));
        }
        if labels.len() != n {
            return Err(Error::dim("encoder labels", n, labels.len()));
        }
        let mut values = Vec::with_capacity(n * (d_x + k));
        for (r, &y) in labels.iter().enumerate() {
            if y >= k {
                return Err(Error::usage(format!("label {y} out of range for {k} classes")));
            }
            values.extend_from_slice(x.row_slice(r));
            values.extend((0..k).map(|c| if c == y { 1.0 } else { 0.0 }));
        }
        Ok(DenseArray::from_raw(vec![n, d_x + k], values))
    }

    /// Logits of `q(y|x)` for a batch.
    pub fn q_y_logits_batch(&self, x: &DenseArray) -> Result<DenseArray> {
        Ok(mlp_forward(&self.specs.encoder_y, &self.params, x)?
            .remove("logits")
            .expect("encoder head"))
    }

    /// Logits of `p(y|x,z)` for a batch using the given label-network weights.
    pub fn classifier_logits_batch(&self, x: &DenseArray, z: &DenseArray, weights: &ParameterStore) -> Result<DenseArray> {
        if x.rows() != z.rows() {
            return Err(Error::dim("classifier rows", x.rows(), z.rows()));
        }
        if z.cols() != self.dims.d_z {
            return Err(Error::dim("classifier z", self.dims.d_z, z.cols()));
        }
        let (n, d_z, d_x) = (x.rows(), z.cols(), x.cols());
        let mut values = Vec::with_capacity(n * (d_z + d_x));
        for r in 0..n {
            values.extend_from_slice(z.row_slice(r));
            values.extend_from_slice(x.row_slice(r));
        }
        let input = DenseArray::from_raw(vec![n, d_z + d_x], values);
        Ok(mlp_forward(&self.specs.classifier, weights, &input)?
            .remove("logits")
            .expect("classifier head"))
    }

    // Single-point operations.

    /// `p(x|z)`.
    pub fn decode_x(&self, z: &[f64]) -> Result<GaussianObservation> {
        Self::check_len("decode_x z", z, self.dims.d_z)?;
        let (mu, log_nu) = self.decode_batch(&DenseArray::row(z))?;
        GaussianObservation::new(mu.into_values(), log_nu.into_values())
    }

    /// `p(y|x,z)` under the given label-network weights.
    pub fn classify_y(&self, x: &[f64], z: &[f64], weights: &ParameterStore) -> Result<ClassSimplex> {
        Self::check_len("classify_y x", x, self.dims.d_x)?;
        Self::check_len("classify_y z", z, self.dims.d_z)?;
        let logits = self.classifier_logits_batch(&DenseArray::row(x), &DenseArray::row(z), weights)?;
        ClassSimplex::from_logits(logits.values())
    }

    /// `q(z|x,y)`; `y_onehot` must contain exactly one 1.
    pub fn encode_z(&self, x: &[f64], y_onehot: &[f64]) -> Result<DiagonalGaussian> {
        Self::check_len("encode_z x", x, self.dims.d_x)?;
        let y = onehot_index(y_onehot, self.dims.k)?;
        let (mean, log_std) = self.encode_batch(&DenseArray::row(x), &[y])?;
        DiagonalGaussian::new(mean.into_values(), log_std.into_values())
    }

    /// `q(y|x)`.
    pub fn classify_q_y(&self, x: &[f64]) -> Result<ClassSimplex> {
        Self::check_len("classify_q_y x", x, self.dims.d_x)?;
        ClassSimplex::from_logits(self.q_y_logits_batch(&DenseArray::row(x))?.values())
    }

    /// Ancestral sampling: `z ~ p(z)`, `x ~ p(x|z)`, `y ~ p(y|x,z)`, with a
    /// fresh weight draw per point in Bayesian mode.
    pub fn generate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<GeneratedSample>> {
        let point = match self.mode {
            WeightMode::PointEstimate => Some(self.point_weights()?),
            WeightMode::BayesianWy => None,
        };
        let posterior = match self.mode {
            WeightMode::BayesianWy => Some(self.weight_posterior()?),
            WeightMode::PointEstimate => None,
        };
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let z = sample_prior_z(self.dims.d_z, rng);
            let x = self.decode_x(&z)?.sample(rng);
            let sampled;
            let weights = match (&point, &posterior) {
                (Some(w), _) => w,
                (None, Some(wp)) => {
                    sampled = sample_weights(wp, rng).weights;
                    &sampled
                }
                (None, None) => unreachable!("one weight source per mode"),
            };
            let pi = self.classify_y(&x, &z, weights)?;
            let y = pi.sample_with(rng.random::<f64>());
            out.push(GeneratedSample { z, x, y });
        }
        Ok(out)
    }
}

pub fn onehot(y: usize, k: usize) -> Vec<f64> {
    (0..k).map(|c| if c == y { 1.0 } else { 0.0 }).collect()
}

fn onehot_index(v: &[f64], k: usize) -> Result<usize> {
    if v.len() != k {
        return Err(Error::dim("one-hot label", k, v.len()));
    }
    let ones: Vec<usize> = v.iter().enumerate().filter(|(_, &x)| x == 1.0).map(|(i, _)| i).collect();
    if ones.len() != 1 || v.iter().any(|&x| x != 0.0 && x != 1.0) {
        return Err(Error::usage(format!("malformed one-hot label {v:?}")));
    }
    Ok(ones[0])
}

/// Feed-forward classifier trained on labeled data only.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineModel {
    spec: MlpSpec,
    params: ParameterStore,
}

pub const BASELINE: &str = "dnn";

impl BaselineModel {
    pub fn new<R: Rng + ?Sized>(d_x: usize, hidden: &[usize], k: usize, rng: &mut R) -> Result<Self> {
        let spec = Self::spec(d_x, hidden, k)?;
        let params = spec.init_params(rng);
        Ok(BaselineModel { spec, params })
    }

    pub fn zeros(d_x: usize, hidden: &[usize], k: usize) -> Result<Self> {
        let spec = Self::spec(d_x, hidden, k)?;
        let params = spec.zero_params();
        Ok(BaselineModel { spec, params })
    }

    fn spec(d_x: usize, hidden: &[usize], k: usize) -> Result<MlpSpec> {
        if k < 2 {
            return Err(Error::usage("need at least 2 classes"));
        }
        MlpSpec::new(BASELINE, d_x, hidden, &[("logits", k)])
    }

    pub fn from_parts(d_x: usize, hidden: &[usize], k: usize, params: ParameterStore) -> Result<Self> {
        let spec = Self::spec(d_x, hidden, k)?;
        let expected = spec.param_shapes();
        if expected.len() != params.len() {
            return Err(Error::usage(format!(
                "expected {} parameter arrays, found {}",
                expected.len(),
                params.len()
            )));
        }
        for (name, shape) in &expected {
            let a = params.require(name)?;
            if a.shape() != shape.as_slice() {
                return Err(Error::dim(name.clone(), format!("{shape:?}"), format!("{:?}", a.shape())));
            }
        }
        Ok(BaselineModel { spec, params })
    }

    pub fn spec_ref(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParameterStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.params
    }

    pub fn d_x(&self) -> usize {
        self.spec.input_dim
    }

    pub fn hidden(&self) -> &[usize] {
        &self.spec.hidden_dims
    }

    pub fn num_classes(&self) -> usize {
        self.spec.head_dim("logits").expect("baseline head")
    }

    pub fn logits_batch(&self, x: &DenseArray) -> Result<DenseArray> {
        Ok(mlp_forward(&self.spec, &self.params, x)?
            .remove("logits")
            .expect("baseline head"))
    }
}

/// Which of the three compared systems a model belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Dnn,
    Sslpe,
    Sslapd,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Dnn, Method::Sslpe, Method::Sslapd];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dnn => "dnn",
            Method::Sslpe => "sslpe",
            Method::Sslapd => "sslapd",
        }
    }

    pub fn weight_mode(self) -> Option<WeightMode> {
        match self {
            Method::Dnn => None,
            Method::Sslpe => Some(WeightMode::PointEstimate),
            Method::Sslapd => Some(WeightMode::BayesianWy),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dnn" => Ok(Method::Dnn),
            "sslpe" => Ok(Method::Sslpe),
            "sslapd" => Ok(Method::Sslapd),
            other => Err(Error::usage(format!("unknown method {other:?} (expected dnn, sslpe or sslapd)"))),
        }
    }
}

/// Any trained system.
#[derive(Clone, Debug, PartialEq)]
pub enum TrainedModel {
    Generative(GenerativeModel),
    Baseline(BaselineModel),
}

impl TrainedModel {
    pub fn method(&self) -> Method {
        match self {
            TrainedModel::Baseline(_) => Method::Dnn,
            TrainedModel::Generative(m) => match m.mode() {
                WeightMode::PointEstimate => Method::Sslpe,
                WeightMode::BayesianWy => Method::Sslapd,
            },
        }
    }

    pub fn params(&self) -> &ParameterStore {
        match self {
            TrainedModel::Generative(m) => m.params(),
            TrainedModel::Baseline(b) => b.params(),
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            TrainedModel::Generative(m) => m.dims().k,
            TrainedModel::Baseline(b) => b.num_classes(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            TrainedModel::Generative(m) => m.dims().d_x,
            TrainedModel::Baseline(b) => b.d_x(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::LayerShape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_dims() -> ModelDims {
        ModelDims {
            d_x: 2,
            d_z: 3,
            k: 2,
            hidden: vec![6],
        }
    }

    #[test]
    fn zero_model_outputs() {
        let m = GenerativeModel::zeros(small_dims(), WeightMode::PointEstimate).unwrap();
        let obs = m.decode_x(&[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(obs.mu_x(), &[0.0, 0.0]);
        assert_eq!(obs.log_nu_x(), &[0.0, 0.0]);
        let q = m.encode_z(&[1.0, 2.0], &[0.0, 1.0]).unwrap();
        assert_eq!(q, DiagonalGaussian::standard(3));
        assert_eq!(m.classify_q_y(&[5.0, -5.0]).unwrap().probs(), &[0.5, 0.5]);
        let w = m.point_weights().unwrap();
        assert_eq!(m.classify_y(&[1.0, 1.0], &[0.0; 3], &w).unwrap().probs(), &[0.5, 0.5]);
    }

    #[test]
    fn decoder_heads_share_the_trunk() {
        // 1-d z, one hidden unit with w=2, b=0; heads read that unit
        let dims = ModelDims {
            d_x: 1,
            d_z: 1,
            k: 2,
            hidden: vec![1],
        };
        let mut m = GenerativeModel::zeros(dims, WeightMode::PointEstimate).unwrap();
        let p = m.params_mut();
        p.get_mut("decoder.hidden0.w").unwrap().values_mut()[0] = 2.0;
        p.get_mut("decoder.mu.w").unwrap().values_mut()[0] = 0.5;
        p.get_mut("decoder.mu.b").unwrap().values_mut()[0] = 0.1;
        p.get_mut("decoder.log_nu.w").unwrap().values_mut()[0] = -1.0;
        let obs = m.decode_x(&[1.5]).unwrap();
        // trunk: relu(2 * 1.5) = 3
        assert!((obs.mu_x()[0] - (0.5 * 3.0 + 0.1)).abs() < 1e-15);
        assert!((obs.log_nu_x()[0] + 3.0).abs() < 1e-15);
        assert_eq!(m.decode_x(&[1.5]).unwrap(), obs);
    }

    #[test]
    fn forced_logits_through_head_bias() {
        let mut m = GenerativeModel::zeros(small_dims(), WeightMode::PointEstimate).unwrap();
        m.params_mut().get_mut("classifier.logits.b").unwrap().values_mut()[0] = 3f64.ln();
        let w = m.point_weights().unwrap();
        let s = m.classify_y(&[0.2, 0.1], &[1.0, 2.0, 3.0], &w).unwrap();
        assert!((s.probs()[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn encoder_depends_on_label() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = GenerativeModel::new(ModelDims::two_moons(), WeightMode::PointEstimate, &mut rng).unwrap();
        let a = m.encode_z(&[0.5, 0.2], &[1.0, 0.0]).unwrap();
        let b = m.encode_z(&[0.5, 0.2], &[0.0, 1.0]).unwrap();
        assert_eq!(a.dim(), 5);
        assert_ne!(a, b);
        assert!(m.encode_z(&[0.5, 0.2], &[1.0, 1.0]).is_err());
        assert!(m.encode_z(&[0.5, 0.2], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn q_y_is_a_deterministic_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = GenerativeModel::new(ModelDims::two_moons(), WeightMode::PointEstimate, &mut rng).unwrap();
        let a = m.classify_q_y(&[0.3, -0.8]).unwrap();
        assert!((a.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(a, m.classify_q_y(&[0.3, -0.8]).unwrap());
    }

    #[test]
    fn bayesian_parameters_replace_point_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pe = GenerativeModel::new(small_dims(), WeightMode::PointEstimate, &mut rng).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ba = GenerativeModel::new(small_dims(), WeightMode::BayesianWy, &mut rng).unwrap();
        let shared: Vec<&str> = pe.params().names().filter(|n| !n.starts_with("classifier.")).collect();
        for n in &shared {
            assert!(ba.params().contains(n));
        }
        for LayerShape { weight, bias, .. } in pe.specs().classifier.layers() {
            for name in [weight, bias] {
                assert!(!ba.params().contains(&name));
                assert_eq!(ba.params().get(&posterior_mean_name(&name)), pe.params().get(&name));
                let ls = ba.params().get(&posterior_log_sigma_name(&name)).unwrap();
                assert!(ls.values().iter().all(|&v| v == POSTERIOR_LOG_SIGMA_INIT));
            }
        }
        assert!(ba.point_weights().is_err());
        assert!(pe.weight_posterior().is_err());
    }

    #[test]
    fn weight_samples_and_kl() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut m = GenerativeModel::new(small_dims(), WeightMode::BayesianWy, &mut rng).unwrap();
        let mut wp = m.weight_posterior().unwrap();
        let pinned: Vec<_> = wp
            .iter()
            .map(|(n, s, d)| (n.to_string(), s.to_vec(), DiagonalGaussian::new(d.mean().to_vec(), vec![-7.0; d.dim()]).unwrap()))
            .collect();
        for (n, s, d) in pinned {
            wp.insert(n, s, d).unwrap();
        }
        m.set_weight_posterior(&wp).unwrap();
        let s1 = sample_weights(&wp, &mut ChaCha8Rng::seed_from_u64(1));
        let s2 = sample_weights(&wp, &mut ChaCha8Rng::seed_from_u64(2));
        assert_ne!(s1.weights, s2.weights);
        for (name, shape, dist) in wp.iter() {
            let w = s1.weights.get(name).unwrap();
            assert_eq!(w.shape(), shape);
            for (a, b) in w.values().iter().zip(dist.mean()) {
                assert!((a - b).abs() < 0.01);
            }
        }
        // shapes mirror the point-estimate label network
        let mut names: Vec<String> = m.specs().classifier.param_shapes().into_iter().map(|(n, _)| n).collect();
        names.sort();
        assert_eq!(s1.weights.names().collect::<Vec<_>>(), names.iter().map(String::as_str).collect::<Vec<_>>());

        let mut unit = WeightPosterior::new();
        unit.insert("a", vec![2], DiagonalGaussian::standard(2)).unwrap();
        assert_eq!(kl_weight_posterior(&unit), 0.0);
        let mut one = WeightPosterior::new();
        one.insert("a", vec![1], DiagonalGaussian::new(vec![1.0], vec![0.0]).unwrap()).unwrap();
        assert!((kl_weight_posterior(&one) - 0.5).abs() < 1e-15);
        let mut both = one.clone();
        both.insert("b", vec![1], DiagonalGaussian::new(vec![2.0], vec![0.3]).unwrap()).unwrap();
        let only_b = kl_diag_gauss_std(both.get("b").unwrap());
        assert!((kl_weight_posterior(&both) - 0.5 - only_b).abs() < 1e-15);
    }

    #[test]
    fn generate_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = GenerativeModel::new(small_dims(), WeightMode::BayesianWy, &mut rng).unwrap();
        assert!(m.generate(0, &mut rng).unwrap().is_empty());
        let s = m.generate(50, &mut rng).unwrap();
        assert!(s.iter().all(|g| g.y < 2 && g.x.iter().chain(&g.z).all(|v| v.is_finite())));

        // decoder pinned to a constant mean with the variance at the floor
        let mut c = GenerativeModel::zeros(small_dims(), WeightMode::PointEstimate).unwrap();
        c.params_mut().get_mut("decoder.mu.b").unwrap().values_mut().copy_from_slice(&[1.5, -0.5]);
        c.params_mut().get_mut("decoder.log_nu.b").unwrap().values_mut().copy_from_slice(&[-20.0, -20.0]);
        for g in c.generate(200, &mut rng).unwrap() {
            assert!((g.x[0] - 1.5).abs() < 0.1 && (g.x[1] + 0.5).abs() < 0.1);
        }
    }

    #[test]
    fn from_parts_validates() {
        let m = GenerativeModel::zeros(small_dims(), WeightMode::PointEstimate).unwrap();
        let mut p = m.params().clone();
        GenerativeModel::from_parts(small_dims(), WeightMode::PointEstimate, p.clone()).unwrap();
        assert!(GenerativeModel::from_parts(small_dims(), WeightMode::BayesianWy, p.clone()).is_err());
        p.set("decoder.mu.b", DenseArray::zeros(&[3]));
        assert!(GenerativeModel::from_parts(small_dims(), WeightMode::PointEstimate, p).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("svm".parse::<Method>().is_err());
    }
}
