//! Line-oriented checkpoint format.
//!
//! ```text
//! ssdgm-v1
//! kind sslapd
//! d_x 2
//! d_z 5
//! k 2
//! hidden 128,128
//! arrays <count>
//! array <name> <dim>,<dim>
//! <space-separated values>
//! ...
//! end
//! ```
//!
//! Values are written in Rust's shortest round-trip notation, so parsing
//! reproduces every bit of every parameter.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{BaselineModel, GenerativeModel, Method, ModelDims, TrainedModel};
use crate::nn::{DenseArray, ParameterStore};

pub const CHECKPOINT_HEADER: &str = "ssdgm-v1";

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Serializes a trained model.
pub fn write_checkpoint(model: &TrainedModel) -> String {
    let mut s = String::new();
    let (dims_lines, params): (Vec<(&str, String)>, &ParameterStore) = match model {
        TrainedModel::Generative(m) => {
            let d = m.dims();
            (
                vec![
                    ("d_x", d.d_x.to_string()),
                    ("d_z", d.d_z.to_string()),
                    ("k", d.k.to_string()),
                    ("hidden", join(&d.hidden)),
                ],
                m.params(),
            )
        }
        TrainedModel::Baseline(b) => (
            vec![
                ("d_x", b.d_x().to_string()),
                ("k", b.num_classes().to_string()),
                ("hidden", join(b.hidden())),
            ],
            b.params(),
        ),
    };
    writeln!(s, "{CHECKPOINT_HEADER}").unwrap();
    writeln!(s, "kind {}", model.method()).unwrap();
    for (k, v) in dims_lines {
        writeln!(s, "{k} {v}").unwrap();
    }
    writeln!(s, "arrays {}", params.len()).unwrap();
    for (name, a) in params.iter() {
        writeln!(s, "array {name} {}", join(a.shape())).unwrap();
        let line: Vec<String> = a.values().iter().map(|v| format!("{v:e}")).collect();
        writeln!(s, "{}", line.join(" ")).unwrap();
    }
    writeln!(s, "end").unwrap();
    s
}

pub fn save_checkpoint(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text, &path.display().to_string())
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    source: &'a str,
    line: u64,
}

impl<'a> Lines<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.source.to_string(),
            line: self.line,
            message: message.into(),
        }
    }

    fn next_line(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i as u64 + 1;
                Ok(l)
            }
            None => Err(self.err("unexpected end of checkpoint")),
        }
    }

    fn field(&mut self, key: &str) -> Result<&'a str> {
        let l = self.next_line()?;
        match l.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.trim()),
            _ => Err(self.err(format!("expected `{key} <value>`, found {l:?}"))),
        }
    }

    fn usize_field(&mut self, key: &str) -> Result<usize> {
        let v = self.field(key)?;
        v.parse().map_err(|_| self.err(format!("bad integer {v:?} for {key}")))
    }

    fn usize_list(&self, v: &str) -> Result<Vec<usize>> {
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|p| p.parse::<usize>().map_err(|_| self.err(format!("bad integer list {v:?}"))))
            .collect()
    }
}

/// Parses checkpoint text; `source` names the origin in error messages.
pub fn parse_checkpoint(text: &str, source: &str) -> Result<TrainedModel> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        source,
        line: 0,
    };
    let header = lines.next_line()?;
    if header.trim() != CHECKPOINT_HEADER {
        return Err(lines.err(format!("missing {CHECKPOINT_HEADER} header")));
    }
    let kind_s = lines.field("kind")?;
    let method: Method = kind_s.parse().map_err(|_| lines.err(format!("unknown kind {kind_s:?}")))?;
    let d_x = lines.usize_field("d_x")?;
    let d_z = match method {
        Method::Dnn => 0,
        _ => lines.usize_field("d_z")?,
    };
    let k = lines.usize_field("k")?;
    let hidden_s = lines.field("hidden")?;
    let hidden = lines.usize_list(hidden_s)?;
    let count = lines.usize_field("arrays")?;

    let mut params = ParameterStore::new();
    for _ in 0..count {
        let decl = lines.next_line()?;
        let parts: Vec<&str> = decl.split(' ').collect();
        if parts.len() != 3 || parts[0] != "array" {
            return Err(lines.err(format!("expected `array <name> <shape>`, found {decl:?}")));
        }
        let name = parts[1].to_string();
        let shape = lines.usize_list(parts[2])?;
        let data = lines.next_line()?;
        let values: Vec<f64> = data
            .split(' ')
            .map(|t| t.parse::<f64>().map_err(|_| lines.err(format!("bad number {t:?} in {name}"))))
            .collect::<Result<_>>()?;
        let array = DenseArray::new(shape, values).map_err(|e| lines.err(format!("{name}: {e}")))?;
        params.insert(name, array).map_err(|e| lines.err(e.to_string()))?;
    }
    let end = lines.next_line()?;
    if end.trim() != "end" {
        return Err(lines.err(format!("expected `end`, found {end:?}")));
    }

    Ok(match method {
        Method::Dnn => TrainedModel::Baseline(BaselineModel::from_parts(d_x, &hidden, k, params)?),
        _ => {
            let dims = ModelDims { d_x, d_z, k, hidden };
            let mode = method.weight_mode().expect("generative method");
            TrainedModel::Generative(GenerativeModel::from_parts(dims, mode, params)?)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::WeightMode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims() -> ModelDims {
        ModelDims {
            d_x: 2,
            d_z: 2,
            k: 3,
            hidden: vec![5, 4],
        }
    }

    #[test]
    fn round_trips_every_kind_bit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let models = [
            TrainedModel::Generative(GenerativeModel::new(dims(), WeightMode::PointEstimate, &mut rng).unwrap()),
            TrainedModel::Generative(GenerativeModel::new(dims(), WeightMode::BayesianWy, &mut rng).unwrap()),
            TrainedModel::Baseline(BaselineModel::new(2, &[7], 2, &mut rng).unwrap()),
        ];
        for m in models {
            let text = write_checkpoint(&m);
            assert!(text.starts_with("ssdgm-v1\n"));
            let back = parse_checkpoint(&text, "mem").unwrap();
            assert_eq!(back, m);
            for ((_, a), (_, b)) in back.params().iter().zip(m.params().iter()) {
                let bits = |x: &DenseArray| x.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                assert_eq!(bits(a), bits(b));
            }
        }
    }

    #[test]
    fn reports_line_numbers() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = TrainedModel::Baseline(BaselineModel::new(2, &[3], 2, &mut rng).unwrap());
        let text = write_checkpoint(&m).replacen("array dnn.hidden0.b 3", "array dnn.hidden0.b 4", 1);
        match parse_checkpoint(&text, "ckpt") {
            Err(Error::Parse { line, .. }) => assert!(line > 6),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_checkpoint("nope\n", "x"), Err(Error::Parse { line: 1, .. })));
    }
}
