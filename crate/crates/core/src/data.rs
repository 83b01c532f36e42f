//! Two-moons data, labeled/unlabeled/test splits and CSV persistence.
//!
//! Files carry the header `x1,x2,label`. Labels are class indices, or `-1`
//! (or an empty field) for unlabeled rows. Values are written with 17
//! significant digits, so a save/load cycle reproduces every bit.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::nn::DenseArray;
use crate::rng::{stream, Stream};

pub type Point = [f64; 2];

pub const CSV_HEADER: [&str; 3] = ["x1", "x2", "label"];

/// Fully labeled point set.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub points: Vec<Point>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(points: Vec<Point>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::usage("dataset is empty"));
        }
        if points.len() != labels.len() {
            return Err(Error::dim("dataset labels", points.len(), labels.len()));
        }
        if num_classes < 2 {
            return Err(Error::usage("need at least 2 classes"));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::usage(format!("label {y} out of range for {num_classes} classes")));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::numeric("dataset contains non-finite coordinates"));
        }
        Ok(Dataset {
            points,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_classes];
        for &y in &self.labels {
            c[y] += 1;
        }
        c
    }

    /// Points as an `n x 2` array.
    pub fn matrix(&self) -> DenseArray {
        points_matrix(&self.points).expect("dataset is non-empty")
    }

    fn subset(&self, idx: &[usize]) -> (Vec<Point>, Vec<usize>) {
        (
            idx.iter().map(|&i| self.points[i]).collect(),
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

/// Points as an `n x 2` array; `None` when empty.
pub fn points_matrix(points: &[Point]) -> Option<DenseArray> {
    if points.is_empty() {
        return None;
    }
    let v = points.iter().flatten().copied().collect();
    Some(DenseArray::from_raw(vec![points.len(), 2], v))
}

/// Training data (labeled and unlabeled) plus a held-out test set. The
/// index vectors refer to rows of the dataset the split was drawn from.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub labeled: Vec<Point>,
    pub labels: Vec<usize>,
    pub unlabeled: Vec<Point>,
    pub test: Vec<Point>,
    pub test_labels: Vec<usize>,
    pub num_classes: usize,
    pub labeled_idx: Vec<usize>,
    pub unlabeled_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

impl DatasetSplit {
    /// Split assembled from already separated parts (no source indices).
    pub fn from_parts(
        labeled: Vec<Point>,
        labels: Vec<usize>,
        unlabeled: Vec<Point>,
        test: Vec<Point>,
        test_labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if labeled.len() != labels.len() {
            return Err(Error::dim("labeled labels", labeled.len(), labels.len()));
        }
        if test.len() != test_labels.len() {
            return Err(Error::dim("test labels", test.len(), test_labels.len()));
        }
        if let Some(&y) = labels.iter().chain(&test_labels).find(|&&y| y >= num_classes) {
            return Err(Error::usage(format!("label {y} out of range for {num_classes} classes")));
        }
        let (n_l, n_u, n_t) = (labeled.len(), unlabeled.len(), test.len());
        Ok(DatasetSplit {
            labeled,
            labels,
            unlabeled,
            test,
            test_labels,
            num_classes,
            labeled_idx: (0..n_l).collect(),
            unlabeled_idx: (n_l..n_l + n_u).collect(),
            test_idx: (n_l + n_u..n_l + n_u + n_t).collect(),
        })
    }

    pub fn n_labeled(&self) -> usize {
        self.labeled.len()
    }

    pub fn training_size(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    pub fn test_set(&self) -> Result<Dataset> {
        Dataset::new(self.test.clone(), self.test_labels.clone(), self.num_classes)
    }

    pub fn labeled_set(&self) -> Result<Dataset> {
        Dataset::new(self.labeled.clone(), self.labels.clone(), self.num_classes)
    }

    /// All training inputs, labeled first.
    pub fn training_points(&self) -> Vec<Point> {
        self.labeled.iter().chain(&self.unlabeled).copied().collect()
    }
}

/// `n / 2` points per class on two interleaved arcs with isotropic
/// Gaussian noise: class 0 on `(cos t, sin t)`, class 1 on
/// `(1 - cos t, 0.5 - sin t)`, `t ~ U[0, pi]`. Class 0 rows come first.
pub fn generate_two_moons(n: usize, noise_sigma: f64, seed: u64) -> Result<Dataset> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::usage(format!("two-moons size must be even and at least 2, got {n}")));
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::usage(format!("noise sigma must be non-negative, got {noise_sigma}")));
    }
    let mut rng = stream(seed, Stream::Data);
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for class in 0..2 {
        for _ in 0..n / 2 {
            let t = rng.random::<f64>() * PI;
            let (c, s) = (t.cos(), t.sin());
            let arc = if class == 0 { [c, s] } else { [1.0 - c, 0.5 - s] };
            let e0: f64 = rng.sample(StandardNormal);
            let e1: f64 = rng.sample(StandardNormal);
            points.push([arc[0] + noise_sigma * e0, arc[1] + noise_sigma * e1]);
            labels.push(class);
        }
    }
    Dataset::new(points, labels, 2)
}

fn check_fraction(test_fraction: f64) -> Result<()> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::usage(format!("test fraction must lie in [0, 1), got {test_fraction}")));
    }
    Ok(())
}

/// Holds out `round(n * test_fraction)` random rows (never from `keep`) as
/// the test set; returns `(test, remaining)` index lists.
fn hold_out(n: usize, keep: &BTreeSet<usize>, test_fraction: f64, rng: &mut impl Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    check_fraction(test_fraction)?;
    let n_test = (n as f64 * test_fraction).round() as usize;
    let mut candidates: Vec<usize> = (0..n).filter(|i| !keep.contains(i)).collect();
    if n_test > candidates.len() {
        return Err(Error::usage(format!("cannot hold out {n_test} test rows from {}", candidates.len())));
    }
    candidates.shuffle(rng);
    let mut test = candidates[..n_test].to_vec();
    let mut rest = candidates[n_test..].to_vec();
    rest.extend(keep.iter().copied());
    test.sort_unstable();
    rest.sort_unstable();
    Ok((test, rest))
}

fn assemble(ds: &Dataset, labeled_idx: Vec<usize>, unlabeled_idx: Vec<usize>, test_idx: Vec<usize>) -> DatasetSplit {
    let (labeled, labels) = ds.subset(&labeled_idx);
    let (test, test_labels) = ds.subset(&test_idx);
    DatasetSplit {
        labeled,
        labels,
        unlabeled: unlabeled_idx.iter().map(|&i| ds.points[i]).collect(),
        test,
        test_labels,
        num_classes: ds.num_classes,
        labeled_idx,
        unlabeled_idx,
        test_idx,
    }
}

/// Holds out a test set, then labels `per_class` uniformly chosen training
/// points of every class; the remaining training points are unlabeled.
pub fn split_labeled(ds: &Dataset, per_class: usize, seed: u64, test_fraction: f64) -> Result<DatasetSplit> {
    if per_class == 0 {
        return Err(Error::usage("labeled-per-class must be at least 1"));
    }
    let mut rng = stream(seed, Stream::Split);
    let (test_idx, mut train) = hold_out(ds.len(), &BTreeSet::new(), test_fraction, &mut rng)?;
    train.shuffle(&mut rng);
    let mut labeled_idx = Vec::with_capacity(per_class * ds.num_classes);
    for class in 0..ds.num_classes {
        let picked: Vec<usize> = train
            .iter()
            .copied()
            .filter(|&i| ds.labels[i] == class)
            .take(per_class)
            .collect();
        if picked.len() < per_class {
            return Err(Error::usage(format!(
                "class {class} has only {} training points, {per_class} labeled requested",
                picked.len()
            )));
        }
        labeled_idx.extend(picked);
    }
    labeled_idx.sort_unstable();
    let chosen: BTreeSet<usize> = labeled_idx.iter().copied().collect();
    let mut unlabeled_idx: Vec<usize> = train.into_iter().filter(|i| !chosen.contains(i)).collect();
    unlabeled_idx.sort_unstable();
    Ok(assemble(ds, labeled_idx, unlabeled_idx, test_idx))
}

/// Like [`split_labeled`] but with hand-picked labeled rows, which are
/// never held out for testing.
pub fn split_with_indices(ds: &Dataset, labeled: &[usize], seed: u64, test_fraction: f64) -> Result<DatasetSplit> {
    if labeled.is_empty() {
        return Err(Error::usage("empty labeled set"));
    }
    let keep: BTreeSet<usize> = labeled.iter().copied().collect();
    if keep.len() != labeled.len() {
        return Err(Error::usage("duplicate labeled indices"));
    }
    if let Some(&i) = keep.iter().find(|&&i| i >= ds.len()) {
        return Err(Error::usage(format!("labeled index {i} out of range for {} rows", ds.len())));
    }
    let mut rng = stream(seed, Stream::Split);
    let (test_idx, train) = hold_out(ds.len(), &keep, test_fraction, &mut rng)?;
    let unlabeled_idx = train.into_iter().filter(|i| !keep.contains(i)).collect();
    Ok(assemble(ds, keep.into_iter().collect(), unlabeled_idx, test_idx))
}

// CSV persistence.

/// One row of a data file; `label` is `None` for unlabeled rows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Row {
    pub x: Point,
    pub label: Option<usize>,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: e.to_string(),
    }
}

pub fn write_rows(path: impl AsRef<Path>, rows: impl IntoIterator<Item = Row>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(CSV_HEADER).map_err(|e| csv_err(path, e))?;
    for r in rows {
        let label = r.label.map_or("-1".to_string(), |y| y.to_string());
        w.write_record([format!("{:.16e}", r.x[0]), format!("{:.16e}", r.x[1]), label])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_rows(path: impl AsRef<Path>) -> Result<Vec<Row>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let perr = |line: u64, message: String| Error::Parse {
        path: path.display().to_string(),
        line,
        message,
    };
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(perr(1, format!("expected header `x1,x2,label`, found `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64> {
            let s = &rec[i];
            let v: f64 = s.parse().map_err(|_| perr(line, format!("bad number {s:?}")))?;
            if !v.is_finite() {
                return Err(perr(line, format!("non-finite value {s:?}")));
            }
            Ok(v)
        };
        let x = [num(0)?, num(1)?];
        let label = match &rec[2] {
            "" | "-1" => None,
            s => Some(s.parse::<usize>().map_err(|_| perr(line, format!("bad label {s:?}")))?),
        };
        rows.push(Row { x, label });
    }
    if rows.is_empty() {
        return Err(perr(1, "no data rows".into()));
    }
    Ok(rows)
}

fn labeled_rows<'a>(points: &'a [Point], labels: &'a [usize]) -> impl Iterator<Item = Row> + 'a {
    points.iter().zip(labels).map(|(&x, &y)| Row { x, label: Some(y) })
}

fn unlabeled_rows(points: &[Point]) -> impl Iterator<Item = Row> + '_ {
    points.iter().map(|&x| Row { x, label: None })
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_rows(path, labeled_rows(&ds.points, &ds.labels))
}

/// Loads a fully labeled file; the class count is `max label + 1` but at
/// least 2.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let rows = read_rows(path)?;
    let mut points = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let y = r.label.ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: i as u64 + 2,
            message: "unlabeled row in a labeled file".into(),
        })?;
        points.push(r.x);
        labels.push(y);
    }
    let k = labels.iter().max().map_or(2, |m| (m + 1).max(2));
    Dataset::new(points, labels, k)
}

/// Labeled and unlabeled training points from a mixed file.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingData {
    pub labeled: Vec<Point>,
    pub labels: Vec<usize>,
    pub unlabeled: Vec<Point>,
}

pub fn load_training(path: impl AsRef<Path>) -> Result<TrainingData> {
    let rows = read_rows(path)?;
    let mut t = TrainingData {
        labeled: Vec::new(),
        labels: Vec::new(),
        unlabeled: Vec::new(),
    };
    for r in rows {
        match r.label {
            Some(y) => {
                t.labeled.push(r.x);
                t.labels.push(y);
            }
            None => t.unlabeled.push(r.x),
        }
    }
    Ok(t)
}

/// Paths of the files written by [`save_split`] for a given stem.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitPaths {
    pub labeled: PathBuf,
    pub unlabeled: PathBuf,
    pub test: PathBuf,
    pub train: PathBuf,
}

impl SplitPaths {
    pub fn for_stem(stem: impl AsRef<Path>) -> Self {
        let s = stem.as_ref().display().to_string();
        SplitPaths {
            labeled: PathBuf::from(format!("{s}.labeled.csv")),
            unlabeled: PathBuf::from(format!("{s}.unlabeled.csv")),
            test: PathBuf::from(format!("{s}.test.csv")),
            train: PathBuf::from(format!("{s}.train.csv")),
        }
    }
}

/// Writes `<stem>.labeled.csv`, `<stem>.unlabeled.csv`, `<stem>.test.csv`
/// and `<stem>.train.csv` (labeled rows then unlabeled rows with `-1`).
pub fn save_split(split: &DatasetSplit, stem: impl AsRef<Path>) -> Result<SplitPaths> {
    let p = SplitPaths::for_stem(stem);
    write_rows(&p.labeled, labeled_rows(&split.labeled, &split.labels))?;
    write_rows(&p.unlabeled, unlabeled_rows(&split.unlabeled))?;
    write_rows(&p.test, labeled_rows(&split.test, &split.test_labels))?;
    write_rows(
        &p.train,
        labeled_rows(&split.labeled, &split.labels).chain(unlabeled_rows(&split.unlabeled)),
    )?;
    Ok(p)
}

/// Reads the files written by [`save_split`]; an empty unlabeled file is
/// allowed.
pub fn load_split(stem: impl AsRef<Path>, num_classes: usize) -> Result<DatasetSplit> {
    let p = SplitPaths::for_stem(stem);
    let labeled = load_dataset(&p.labeled)?;
    let test = load_dataset(&p.test)?;
    let unlabeled = match read_rows(&p.unlabeled) {
        Ok(rows) => rows.into_iter().map(|r| r.x).collect(),
        Err(Error::Parse { message, .. }) if message == "no data rows" => Vec::new(),
        Err(e) => return Err(e),
    };
    DatasetSplit::from_parts(labeled.points, labeled.labels, unlabeled, test.points, test.labels, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn noiseless_points_lie_on_the_arcs() {
        let ds = generate_two_moons(1000, 0.0, 3).unwrap();
        for (p, &y) in ds.points.iter().zip(&ds.labels) {
            let (a, b) = if y == 0 { (p[0], p[1]) } else { (1.0 - p[0], 0.5 - p[1]) };
            assert!((a * a + b * b - 1.0).abs() < 1e-12);
            assert!(b >= -1e-12);
        }
        assert_eq!(ds.class_counts(), vec![500, 500]);
    }

    #[test]
    fn class_zero_height_mean_is_two_over_pi() {
        let class0_height = |seed| {
            let ds = generate_two_moons(10_000, 0.1, seed).unwrap();
            let ys: Vec<f64> = ds.points.iter().zip(&ds.labels).filter(|(_, &y)| y == 0).map(|(p, _)| p[1]).collect();
            ys.iter().sum::<f64>() / ys.len() as f64
        };
        let mean = class0_height(0);
        assert!((mean - 2.0 / PI).abs() < 0.01, "{mean}");
        // the standard error at n = 1e4 is about 0.0045; pooling 20 runs tightens it
        let pooled = (0..20).map(class0_height).sum::<f64>() / 20.0;
        assert!((pooled - 2.0 / PI).abs() < 0.003, "{pooled}");
    }

    #[test]
    fn generation_rejects_bad_sizes() {
        assert!(matches!(generate_two_moons(7, 0.1, 0), Err(Error::Usage(_))));
        assert!(matches!(generate_two_moons(0, 0.1, 0), Err(Error::Usage(_))));
        assert!(generate_two_moons(4, -1.0, 0).is_err());
        assert_eq!(generate_two_moons(8, 0.1, 5).unwrap(), generate_two_moons(8, 0.1, 5).unwrap());
    }

    #[test]
    fn split_counts_and_partition() {
        let ds = generate_two_moons(400, 0.1, 2).unwrap();
        let s = split_labeled(&ds, 3, 9, 0.25).unwrap();
        assert_eq!(s.n_labeled(), 6);
        assert_eq!(s.labels.iter().filter(|&&y| y == 0).count(), 3);
        assert_eq!(s.test.len(), 100);
        let mut all: Vec<usize> = s.labeled_idx.iter().chain(&s.unlabeled_idx).chain(&s.test_idx).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..400).collect::<Vec<_>>());
        assert_eq!(s, split_labeled(&ds, 3, 9, 0.25).unwrap());
        assert_ne!(s.labeled_idx, split_labeled(&ds, 3, 10, 0.25).unwrap().labeled_idx);
    }

    #[test]
    fn full_class_labels_leave_nothing_unlabeled() {
        let ds = generate_two_moons(20, 0.1, 2).unwrap();
        let s = split_labeled(&ds, 10, 0, 0.0).unwrap();
        assert!(s.unlabeled.is_empty());
        assert!(matches!(split_labeled(&ds, 11, 0, 0.0), Err(Error::Usage(_))));
        assert!(split_labeled(&ds, 0, 0, 0.0).is_err());
    }

    #[test]
    fn explicit_indices_split() {
        let ds = generate_two_moons(40, 0.1, 2).unwrap();
        let s = split_with_indices(&ds, &[0, 39], 1, 0.5).unwrap();
        assert_eq!(s.labeled_idx, vec![0, 39]);
        assert_eq!(s.labels, vec![0, 1]);
        assert_eq!(s.test.len(), 20);
        assert!(!s.test_idx.contains(&0) && !s.test_idx.contains(&39));
        assert!(split_with_indices(&ds, &[0, 0], 1, 0.5).is_err());
        assert!(split_with_indices(&ds, &[40], 1, 0.5).is_err());
    }

    #[test]
    fn csv_round_trip_and_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_two_moons(50, 0.3, 4).unwrap();
        let path = dir.path().join("d.csv");
        save_dataset(&ds, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), ds);

        let split = split_labeled(&ds, 2, 1, 0.2).unwrap();
        let stem = dir.path().join("s");
        let paths = save_split(&split, &stem).unwrap();
        let back = load_split(&stem, 2).unwrap();
        assert_eq!((back.labeled, back.unlabeled, back.test), (split.labeled.clone(), split.unlabeled.clone(), split.test.clone()));
        let t = load_training(&paths.train).unwrap();
        assert_eq!(t.labels, split.labels);
        assert_eq!(t.unlabeled.len(), split.unlabeled.len());

        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "0.1,0.2,0\n").unwrap();
        assert!(matches!(load_dataset(&bad), Err(Error::Parse { line: 1, .. })));
        std::fs::write(&bad, "x1,x2,label\n0.1,0.2,0\n0.3,oops,1\n").unwrap();
        assert!(matches!(load_dataset(&bad), Err(Error::Parse { line: 3, .. })));
        std::fs::write(&bad, "x1,x2,label\n0.1,0.2,-1\n").unwrap();
        assert!(matches!(load_dataset(&bad), Err(Error::Parse { .. })));
        std::fs::write(&bad, "x1,x2,label\n0.1,0.2,\n").unwrap();
        assert_eq!(load_training(&bad).unwrap().unlabeled, vec![[0.1, 0.2]]);
    }

    proptest! {
        #[test]
        fn values_round_trip_bit_exactly(a in -1e6f64..1e6, b in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("p.csv");
            write_rows(&path, [Row { x: [a, b], label: Some(1) }]).unwrap();
            let back = read_rows(&path).unwrap();
            prop_assert_eq!(back[0].x[0].to_bits(), a.to_bits());
            prop_assert_eq!(back[0].x[1].to_bits(), b.to_bits());
        }
    }
}
