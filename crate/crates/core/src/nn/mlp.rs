use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::nn::array::{DenseArray, ParameterStore};
use crate::nn::tape::{matmul, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
}

/// Fully connected network: a trunk of activated hidden layers followed by
/// one or more linear output heads reading the last hidden layer.
///
/// Parameters live in a [`ParameterStore`] under `"{name}.hidden{i}.w"`,
/// `"{name}.hidden{i}.b"`, `"{name}.{head}.w"` and `"{name}.{head}.b"`.
/// Weights are stored `[fan_in, fan_out]` so a batch multiplies from the left.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpSpec {
    pub name: String,
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_heads: Vec<(String, usize)>,
    pub hidden_activation: Activation,
}

/// One affine map of the network.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerShape {
    pub weight: String,
    pub bias: String,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl MlpSpec {
    pub fn new(
        name: impl Into<String>,
        input_dim: usize,
        hidden_dims: &[usize],
        output_heads: &[(&str, usize)],
    ) -> Result<Self> {
        let name = name.into();
        if input_dim == 0 || hidden_dims.contains(&0) {
            return Err(Error::usage(format!("network {name}: layer widths must be positive")));
        }
        if output_heads.is_empty() || output_heads.iter().any(|(_, d)| *d == 0) {
            return Err(Error::usage(format!("network {name}: every head needs dimension >= 1")));
        }
        Ok(MlpSpec {
            name,
            input_dim,
            hidden_dims: hidden_dims.to_vec(),
            output_heads: output_heads.iter().map(|(h, d)| (h.to_string(), *d)).collect(),
            hidden_activation: Activation::Relu,
        })
    }

    pub fn hidden_layers(&self) -> Vec<LayerShape> {
        let mut fan_in = self.input_dim;
        self.hidden_dims
            .iter()
            .enumerate()
            .map(|(i, &fan_out)| {
                let l = LayerShape {
                    weight: format!("{}.hidden{i}.w", self.name),
                    bias: format!("{}.hidden{i}.b", self.name),
                    fan_in,
                    fan_out,
                };
                fan_in = fan_out;
                l
            })
            .collect()
    }

    pub fn head_layers(&self) -> Vec<(String, LayerShape)> {
        let fan_in = self.trunk_width();
        self.output_heads
            .iter()
            .map(|(head, dim)| {
                (
                    head.clone(),
                    LayerShape {
                        weight: format!("{}.{head}.w", self.name),
                        bias: format!("{}.{head}.b", self.name),
                        fan_in,
                        fan_out: *dim,
                    },
                )
            })
            .collect()
    }

    pub fn layers(&self) -> Vec<LayerShape> {
        let mut all = self.hidden_layers();
        all.extend(self.head_layers().into_iter().map(|(_, l)| l));
        all
    }

    fn trunk_width(&self) -> usize {
        self.hidden_dims.last().copied().unwrap_or(self.input_dim)
    }

    pub fn head_dim(&self, head: &str) -> Option<usize> {
        self.output_heads.iter().find(|(h, _)| h == head).map(|(_, d)| *d)
    }

    /// Every parameter name with its shape.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.layers()
            .into_iter()
            .flat_map(|l| [(l.weight, vec![l.fan_in, l.fan_out]), (l.bias, vec![l.fan_out])])
            .collect()
    }

    /// Weights `~ N(0, 1/fan_in)`, biases zero.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterStore {
        let mut store = ParameterStore::new();
        for l in self.layers() {
            let std = (1.0 / l.fan_in as f64).sqrt();
            let w: Vec<f64> = (0..l.fan_in * l.fan_out)
                .map(|_| std * rng.sample::<f64, _>(StandardNormal))
                .collect();
            store.set(l.weight, DenseArray::from_raw(vec![l.fan_in, l.fan_out], w));
            store.set(l.bias, DenseArray::zeros(&[l.fan_out]));
        }
        store
    }

    pub fn zero_params(&self) -> ParameterStore {
        let mut store = ParameterStore::new();
        for (name, shape) in self.param_shapes() {
            store.set(name, DenseArray::zeros(&shape));
        }
        store
    }

    fn check_layer(&self, params: &ParameterStore, l: &LayerShape) -> Result<()> {
        for (name, expect) in [(&l.weight, vec![l.fan_in, l.fan_out]), (&l.bias, vec![l.fan_out])] {
            let a = params
                .get(name)
                .ok_or_else(|| Error::usage(format!("missing parameter {name}")))?;
            if a.shape() != expect.as_slice() {
                return Err(Error::dim(name.clone(), format!("{expect:?}"), format!("{:?}", a.shape())));
            }
        }
        Ok(())
    }
}

fn affine(input: &DenseArray, w: &DenseArray, b: &DenseArray) -> Result<DenseArray> {
    let mut out = matmul(input, w)?;
    let cols = out.cols();
    for row in out.values_mut().chunks_mut(cols) {
        for (o, &bv) in row.iter_mut().zip(b.values()) {
            *o += bv;
        }
    }
    Ok(out)
}

/// Activations of every hidden layer for a batch, in layer order.
pub fn mlp_hidden(spec: &MlpSpec, params: &ParameterStore, input: &DenseArray) -> Result<Vec<DenseArray>> {
    if input.cols() != spec.input_dim {
        return Err(Error::dim(
            format!("{} input layer", spec.name),
            spec.input_dim,
            input.cols(),
        ));
    }
    let mut layers: Vec<DenseArray> = Vec::with_capacity(spec.hidden_dims.len());
    for l in spec.hidden_layers() {
        spec.check_layer(params, &l)?;
        let prev = layers.last().unwrap_or(input);
        let mut h = affine(prev, params.require(&l.weight)?, params.require(&l.bias)?)?;
        match spec.hidden_activation {
            Activation::Relu => h.values_mut().iter_mut().for_each(|v| *v = v.max(0.0)),
        }
        layers.push(h);
    }
    Ok(layers)
}

/// Evaluates every head of the network on a batch (`rows x input_dim`).
pub fn mlp_forward(
    spec: &MlpSpec,
    params: &ParameterStore,
    input: &DenseArray,
) -> Result<BTreeMap<String, DenseArray>> {
    let hidden = mlp_hidden(spec, params, input)?;
    let h = hidden.last().unwrap_or(input);
    let mut out = BTreeMap::new();
    for (head, l) in spec.head_layers() {
        spec.check_layer(params, &l)?;
        out.insert(head, affine(h, params.require(&l.weight)?, params.require(&l.bias)?)?);
    }
    Ok(out)
}

/// Records the network on `tape`. `weights` maps each parameter name of the
/// spec to the tape node standing for it (a parameter leaf or a sampled
/// weight). Heads are returned in declaration order.
pub fn mlp_forward_tape(
    spec: &MlpSpec,
    tape: &mut Tape,
    weights: &BTreeMap<String, Var>,
    input: Var,
) -> Result<Vec<(String, Var)>> {
    if tape.shape(input).1 != spec.input_dim {
        return Err(Error::dim(
            format!("{} input layer", spec.name),
            spec.input_dim,
            tape.shape(input).1,
        ));
    }
    let lookup = |name: &str| {
        weights
            .get(name)
            .copied()
            .ok_or_else(|| Error::usage(format!("no tape node for parameter {name}")))
    };
    let mut h = input;
    for l in spec.hidden_layers() {
        let pre = tape.matmul(h, lookup(&l.weight)?)?;
        let pre = tape.add_row(pre, lookup(&l.bias)?)?;
        h = match spec.hidden_activation {
            Activation::Relu => tape.relu(pre),
        };
    }
    let mut heads = Vec::with_capacity(spec.output_heads.len());
    for (head, l) in spec.head_layers() {
        let o = tape.matmul(h, lookup(&l.weight)?)?;
        heads.push((head, tape.add_row(o, lookup(&l.bias)?)?));
    }
    Ok(heads)
}

/// Registers every parameter of `spec` found in `params` as a tape leaf.
pub fn register_params(spec: &MlpSpec, tape: &mut Tape, params: &ParameterStore) -> Result<BTreeMap<String, Var>> {
    let mut vars = BTreeMap::new();
    for l in spec.layers() {
        spec.check_layer(params, &l)?;
        for name in [&l.weight, &l.bias] {
            vars.insert(name.clone(), tape.param(name, params.require(name)?));
        }
    }
    Ok(vars)
}
