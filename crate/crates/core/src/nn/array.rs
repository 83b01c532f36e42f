use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Dense row-major array of `f64`.
///
/// One-dimensional arrays of length `n` behave as `1 x n` row vectors
/// wherever a matrix view is needed.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseArray {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl DenseArray {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::dim("DenseArray::new", "positive dimensions", format!("{shape:?}")));
        }
        let count: usize = shape.iter().product();
        if count != values.len() {
            return Err(Error::dim("DenseArray::new", count, values.len()));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "non-finite value {} at flat index {bad}",
                values[bad]
            )));
        }
        Ok(DenseArray { shape, values })
    }

    /// Builds without validation. Callers guarantee shape/length agreement.
    pub(crate) fn from_raw(shape: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        DenseArray { shape, values }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let count = shape.iter().product();
        DenseArray {
            shape: shape.to_vec(),
            values: vec![0.0; count],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let count = shape.iter().product();
        DenseArray {
            shape: shape.to_vec(),
            values: vec![value; count],
        }
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], values)
    }

    pub fn row(values: &[f64]) -> Self {
        DenseArray {
            shape: vec![1, values.len()],
            values: values.to_vec(),
        }
    }

    /// Stacks equal-length rows into a matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::usage("cannot build a matrix from zero rows"));
        };
        let cols = first.as_ref().len();
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::dim(format!("row {i}"), cols, r.len()));
            }
            values.extend_from_slice(r);
        }
        Self::new(vec![rows.len(), cols], values)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Row count of the matrix view.
    pub fn rows(&self) -> usize {
        if self.shape.len() == 1 {
            1
        } else {
            self.shape[..self.shape.len() - 1].iter().product()
        }
    }

    /// Column count of the matrix view.
    pub fn cols(&self) -> usize {
        *self.shape.last().expect("shape is never empty")
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.values[r * c..(r + 1) * c]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols() + c]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseArray {
        DenseArray {
            shape: self.shape.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Named trainable arrays with deterministic (lexicographic) iteration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore {
    entries: BTreeMap<String, DenseArray>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, array: DenseArray) -> Result<()> {
        let name = name.into();
        if !array.is_finite() {
            return Err(Error::numeric(format!("parameter {name} is not finite")));
        }
        if self.entries.contains_key(&name) {
            return Err(Error::usage(format!("duplicate parameter name {name}")));
        }
        self.entries.insert(name, array);
        Ok(())
    }

    /// Inserts or replaces without the duplicate check.
    pub fn set(&mut self, name: impl Into<String>, array: DenseArray) {
        self.entries.insert(name.into(), array);
    }

    pub fn get(&self, name: &str) -> Option<&DenseArray> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut DenseArray> {
        self.entries.get_mut(name)
    }

    pub fn require(&self, name: &str) -> Result<&DenseArray> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::usage(format!("missing parameter {name}")))
    }

    pub fn remove(&mut self, name: &str) -> Option<DenseArray> {
        self.entries.remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DenseArray)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut DenseArray)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar count over all arrays.
    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(DenseArray::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.values().all(DenseArray::is_finite)
    }

    /// Name of the first array containing NaN/Inf, if any.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.entries
            .iter()
            .find(|(_, a)| !a.is_finite())
            .map(|(k, _)| k.as_str())
    }

    /// Sub-store of the entries whose names start with `prefix`.
    pub fn with_prefix(&self, prefix: &str) -> ParameterStore {
        ParameterStore {
            entries: self
                .entries
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Adds every entry of `other`, replacing entries with the same name.
    pub fn extend(&mut self, other: ParameterStore) {
        self.entries.extend(other.entries);
    }
}

/// Gradients keyed exactly like the parameter store they belong to.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientStore {
    entries: BTreeMap<String, DenseArray>,
}

impl GradientStore {
    pub fn zeros_like(params: &ParameterStore) -> Self {
        GradientStore {
            entries: params
                .iter()
                .map(|(k, v)| (k.to_string(), DenseArray::zeros(v.shape())))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&DenseArray> {
        self.entries.get(name)
    }

    pub(crate) fn get_mut(&mut self, name: &str) -> Option<&mut DenseArray> {
        self.entries.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DenseArray)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks that key set and shapes match `params` exactly.
    pub fn matches(&self, params: &ParameterStore) -> Result<()> {
        if self.entries.len() != params.len() {
            return Err(Error::usage(format!(
                "gradient store has {} entries, parameter store has {}",
                self.entries.len(),
                params.len()
            )));
        }
        for (name, p) in params.iter() {
            let g = self
                .entries
                .get(name)
                .ok_or_else(|| Error::usage(format!("gradient missing for parameter {name}")))?;
            if g.shape() != p.shape() {
                return Err(Error::dim(
                    format!("gradient of {name}"),
                    format!("{:?}", p.shape()),
                    format!("{:?}", g.shape()),
                ));
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.entries.values_mut() {
            for v in g.values_mut() {
                *v *= factor;
            }
        }
    }
}

/// Largest per-coordinate relative error between two gradient stores, with
/// the denominator floored at `1e-3` so near-zero coordinates are compared
/// absolutely.
pub fn max_relative_error(a: &GradientStore, b: &GradientStore) -> f64 {
    let mut worst: f64 = 0.0;
    for (name, ga) in a.iter() {
        let Some(gb) = b.get(name) else {
            return f64::INFINITY;
        };
        for (&x, &y) in ga.values().iter().zip(gb.values()) {
            let denom = x.abs().max(y.abs()).max(1e-3);
            worst = worst.max((x - y).abs() / denom);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(DenseArray::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(DenseArray::new(vec![0], vec![]).is_err());
        assert!(DenseArray::new(vec![1], vec![f64::NAN]).is_err());
        let a = DenseArray::new(vec![2, 3], vec![1.0; 6]).unwrap();
        assert_eq!((a.rows(), a.cols()), (2, 3));
        let v = DenseArray::new(vec![4], vec![1.0; 4]).unwrap();
        assert_eq!((v.rows(), v.cols()), (1, 4));
    }

    #[test]
    fn store_rejects_duplicates_and_iterates_in_order() {
        let mut s = ParameterStore::new();
        s.insert("b", DenseArray::zeros(&[1])).unwrap();
        s.insert("a", DenseArray::zeros(&[2])).unwrap();
        assert!(s.insert("a", DenseArray::zeros(&[2])).is_err());
        let names: Vec<_> = s.names().collect();
        assert_eq!(names, ["a", "b"]);
        assert_eq!(s.num_scalars(), 3);
    }

    #[test]
    fn gradient_store_mirrors_parameters() {
        let mut s = ParameterStore::new();
        s.insert("w", DenseArray::zeros(&[2, 2])).unwrap();
        let g = GradientStore::zeros_like(&s);
        g.matches(&s).unwrap();
        s.insert("extra", DenseArray::zeros(&[1])).unwrap();
        assert!(g.matches(&s).is_err());
    }
}
