use crate::error::{Error, Result};
use crate::nn::array::{GradientStore, ParameterStore};

/// Central-difference gradient of `loss_fn` at `params`, one coordinate at a
/// time: `(f(p + eps) - f(p - eps)) / (2 eps)`.
///
/// `loss_fn` must be deterministic; any sampling noise has to be frozen by
/// the caller.
pub fn finite_diff_gradient<F>(loss_fn: F, params: &ParameterStore, eps: f64) -> Result<GradientStore>
where
    F: Fn(&ParameterStore) -> Result<f64>,
{
    if !(eps > 0.0) {
        return Err(Error::usage(format!("finite-difference eps must be positive, got {eps}")));
    }
    let mut grads = GradientStore::zeros_like(params);
    let mut probe = params.clone();
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in &names {
        let len = params.get(name).map_or(0, |a| a.len());
        for i in 0..len {
            let orig = params.get(name).expect("name from store").values()[i];
            let mut eval = |value: f64| -> Result<f64> {
                probe.get_mut(name).expect("name from store").values_mut()[i] = value;
                let f = loss_fn(&probe)?;
                if !f.is_finite() {
                    return Err(Error::numeric(format!(
                        "non-finite loss probing {name}[{i}] at {value}"
                    )));
                }
                Ok(f)
            };
            let plus = eval(orig + eps)?;
            let minus = eval(orig - eps)?;
            probe.get_mut(name).expect("name from store").values_mut()[i] = orig;
            grads.get_mut(name).expect("same keys").values_mut()[i] = (plus - minus) / (2.0 * eps);
        }
    }
    Ok(grads)
}
