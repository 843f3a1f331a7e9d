//! Synthetic conditional Gaussian-mixture datasets, label corruption and the
//! CSV dataset format.
//!
//! File format: a header `x0,...,x{D-1},label,is_labeled`, then one record per
//! line. Labels are 0-based; floats are written with 9 significant digits.

use crate::channel::{ChannelError, ChannelSpec, ConfusionMatrix};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid mixture spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("dataset is already corrupted by a channel")]
    DoubleCorruption,
    #[error("dataset mismatch: {0}")]
    Mismatch(String),
    #[error("class {class} has {have} records, {need} labeled ones were requested")]
    InsufficientClass { class: usize, have: usize, need: usize },
    #[error("{n_labels} labels cannot be split equally over {m} classes")]
    NotDivisible { n_labels: usize, m: usize },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Isotropic Gaussian mixture with one component per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub m: usize,
    pub dim: usize,
    pub means: Vec<Vec<f64>>,
    /// Per-class standard deviation.
    pub sigma: Vec<f64>,
    /// Class marginal `P_Y`.
    pub priors: Vec<f64>,
}

impl MixtureSpec {
    /// `m` components evenly spaced on a circle of the given radius in 2-D,
    /// shared `sigma`, uniform priors.
    pub fn circle(m: usize, radius: f64, sigma: f64) -> Self {
        let means = (0..m)
            .map(|k| {
                let angle = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
                vec![radius * angle.cos(), radius * angle.sin()]
            })
            .collect();
        Self { m, dim: 2, means, sigma: vec![sigma; m], priors: vec![1.0 / m as f64; m] }
    }

    /// The desk-scale default: radius 5, sigma 0.5.
    pub fn default_with_classes(m: usize) -> Self {
        Self::circle(m, 5.0, 0.5)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: String| Err(DataError::InvalidSpec(msg));
        if self.m == 0 || self.dim == 0 {
            return bad("m and dim must be positive".into());
        }
        if self.means.len() != self.m || self.sigma.len() != self.m || self.priors.len() != self.m {
            return bad(format!("means, sigma and priors must each have {} entries", self.m));
        }
        if let Some(k) = self.means.iter().position(|mu| mu.len() != self.dim || mu.iter().any(|v| !v.is_finite())) {
            return bad(format!("mean {k} must be {} finite values", self.dim));
        }
        if let Some(k) = self.sigma.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
            return bad(format!("sigma {k} must be positive"));
        }
        if self.priors.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return bad("priors must be nonnegative".into());
        }
        let total: f64 = self.priors.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("priors sum to {total}"));
        }
        Ok(())
    }
}

/// Draws a class from a categorical distribution by inverse CDF.
pub fn sample_class<R: Rng + ?Sized>(priors: &[f64], rng: &mut R) -> usize {
    let r: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in priors.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        acc += p;
        last = k;
        if r < acc {
            return k;
        }
    }
    last
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub x: Vec<f64>,
    /// Observed label in `0..label_count`.
    pub label: usize,
    pub is_labeled: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    /// Number of class labels `m`.
    pub m: usize,
    pub records: Vec<Record>,
    /// The channel that produced the observed labels, if any.
    pub channel: Option<ChannelSpec>,
}

impl Dataset {
    /// `m + m_tilde`, or `m` for a clean dataset.
    pub fn label_count(&self) -> usize {
        self.channel.as_ref().map_or(self.m, ChannelSpec::label_count)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let labels = self.label_count();
        if let Some(spec) = &self.channel {
            if spec.m != self.m {
                return Err(DataError::Mismatch(format!("channel has {} classes, dataset {}", spec.m, self.m)));
            }
        }
        for (i, r) in self.records.iter().enumerate() {
            if r.x.len() != self.dim {
                return Err(DataError::Mismatch(format!("record {i} has dimension {}", r.x.len())));
            }
            if r.label >= labels {
                return Err(DataError::Mismatch(format!("record {i} has label {} >= {labels}", r.label)));
            }
            if r.is_labeled != (r.label < self.m) {
                return Err(DataError::Mismatch(format!("record {i} has an inconsistent is_labeled flag")));
            }
        }
        Ok(())
    }

    /// Records carrying a class label.
    pub fn labeled(&self) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(|r| r.is_labeled)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.m];
        for r in self.labeled() {
            counts[r.label] += 1;
        }
        counts
    }
}

/// `n` i.i.d. draws `y ~ priors`, `x ~ N(mean_y, sigma_y^2 I)`.
pub fn generate_mixture<R: Rng + ?Sized>(spec: &MixtureSpec, n: usize, rng: &mut R) -> Result<Dataset, DataError> {
    spec.validate()?;
    if n == 0 {
        return Err(DataError::InvalidSpec("n must be at least 1".into()));
    }
    let records = (0..n)
        .map(|_| {
            let y = sample_class(&spec.priors, rng);
            let x = spec.means[y]
                .iter()
                .map(|mu| mu + spec.sigma[y] * rng.sample::<f64, _>(StandardNormal))
                .collect();
            Record { x, label: y, is_labeled: true }
        })
        .collect();
    Ok(Dataset { dim: spec.dim, m: spec.m, records, channel: None })
}

/// Replaces every label by an independent draw from its row of `C`.
pub fn apply_channel<R: Rng + ?Sized>(ds: &Dataset, c: &ConfusionMatrix, rng: &mut R) -> Result<Dataset, DataError> {
    if ds.channel.is_some() {
        return Err(DataError::DoubleCorruption);
    }
    if c.m() != ds.m {
        return Err(DataError::Mismatch(format!("channel has {} classes, dataset {}", c.m(), ds.m)));
    }
    let records = ds
        .records
        .iter()
        .map(|r| {
            let label = c.corrupt(r.label, rng)?;
            Ok(Record { x: r.x.clone(), label, is_labeled: label < ds.m })
        })
        .collect::<Result<Vec<_>, ChannelError>>()?;
    Ok(Dataset { dim: ds.dim, m: ds.m, records, channel: Some(c.spec()) })
}

/// Keeps exactly `n_labels / m` uniformly chosen labels per class and marks
/// every other record missing (label `m`).
pub fn few_label_split<R: Rng + ?Sized>(ds: &Dataset, n_labels: usize, rng: &mut R) -> Result<Dataset, DataError> {
    if ds.channel.is_some() {
        return Err(DataError::DoubleCorruption);
    }
    if !n_labels.is_multiple_of(ds.m) {
        return Err(DataError::NotDivisible { n_labels, m: ds.m });
    }
    let per_class = n_labels / ds.m;
    let mut by_class = vec![Vec::new(); ds.m];
    for (i, r) in ds.records.iter().enumerate() {
        by_class[r.label].push(i);
    }
    let mut keep = vec![false; ds.len()];
    for (class, members) in by_class.iter().enumerate() {
        if members.len() < per_class {
            return Err(DataError::InsufficientClass { class, have: members.len(), need: per_class });
        }
        for k in index::sample(rng, members.len(), per_class) {
            keep[members[k]] = true;
        }
    }
    let records = ds
        .records
        .iter()
        .zip(&keep)
        .map(|(r, &kept)| Record {
            x: r.x.clone(),
            label: if kept { r.label } else { ds.m },
            is_labeled: kept,
        })
        .collect();
    let erased: Vec<f64> = by_class
        .iter()
        .map(|members| if members.is_empty() { 0.0 } else { 1.0 - per_class as f64 / members.len() as f64 })
        .collect();
    Ok(Dataset { dim: ds.dim, m: ds.m, records, channel: Some(ChannelSpec::missing(&erased)?) })
}

fn format_float(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..ds.dim).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    header.push("is_labeled".into());
    writer.write_record(&header)?;
    for r in &ds.records {
        let mut row: Vec<String> = r.x.iter().copied().map(format_float).collect();
        row.push(r.label.to_string());
        row.push(if r.is_labeled { "1" } else { "0" }.into());
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a dataset over `m` classes whose labels were produced by `channel`
/// (`None` for clean data).
pub fn read_dataset(path: impl AsRef<Path>, m: usize, channel: Option<ChannelSpec>) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = reader.headers()?.clone();
    let width = header.len();
    if width < 3 {
        return Err(DataError::Parse { line: 1, message: "header needs x columns, label and is_labeled".into() });
    }
    let dim = width - 2;
    for (j, name) in header.iter().take(dim).enumerate() {
        if name != format!("x{j}") {
            return Err(DataError::Parse { line: 1, message: format!("column {j} is `{name}`, expected `x{j}`") });
        }
    }
    if &header[dim] != "label" || &header[dim + 1] != "is_labeled" {
        return Err(DataError::Parse { line: 1, message: "last columns must be `label,is_labeled`".into() });
    }
    let label_count = channel.as_ref().map_or(m, ChannelSpec::label_count);
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let fail = |message: String| DataError::Parse { line, message };
        let x = row
            .iter()
            .take(dim)
            .map(|v| v.trim().parse::<f64>().map_err(|e| fail(format!("bad float `{v}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let label: usize = row[dim].trim().parse().map_err(|e| fail(format!("bad label `{}`: {e}", &row[dim])))?;
        if label >= label_count {
            return Err(fail(format!("label {label} is out of range for {label_count} labels")));
        }
        let is_labeled = match row[dim + 1].trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(fail(format!("bad is_labeled flag `{other}`"))),
        };
        if is_labeled != (label < m) {
            return Err(fail(format!("is_labeled flag disagrees with label {label}")));
        }
        records.push(Record { x, label, is_labeled });
    }
    let ds = Dataset { dim, m, records, channel };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn two_modes() -> MixtureSpec {
        MixtureSpec { m: 2, dim: 1, means: vec![vec![-5.0], vec![5.0]], sigma: vec![1.0; 2], priors: vec![0.5; 2] }
    }

    #[test]
    fn class_means_concentrate() {
        let ds = generate_mixture(&two_modes(), 10_000, &mut rng(1)).unwrap();
        let ones: Vec<f64> = ds.records.iter().filter(|r| r.label == 1).map(|r| r.x[0]).collect();
        let mean = ones.iter().sum::<f64>() / ones.len() as f64;
        assert!((mean - 5.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn degenerate_generation() {
        let ds = generate_mixture(&two_modes(), 1, &mut rng(2)).unwrap();
        assert_eq!(ds.len(), 1);
        let mut spec = two_modes();
        spec.priors = vec![1.0, 0.0];
        let ds = generate_mixture(&spec, 100, &mut rng(3)).unwrap();
        assert!(ds.records.iter().all(|r| r.label == 0));
        assert!(generate_mixture(&spec, 0, &mut rng(3)).is_err());
        spec.sigma[0] = 0.0;
        assert!(matches!(generate_mixture(&spec, 5, &mut rng(3)), Err(DataError::InvalidSpec(_))));
    }

    #[test]
    fn default_mixture_is_valid() {
        for m in [4, 8] {
            let spec = MixtureSpec::default_with_classes(m);
            spec.validate().unwrap();
            assert!((spec.means[0][0] - 5.0).abs() < 1e-12);
        }
        let json = serde_json::to_string(&MixtureSpec::default_with_classes(4)).unwrap();
        for key in ["\"m\"", "\"dim\"", "\"means\"", "\"sigma\"", "\"priors\""] {
            assert!(json.contains(key));
        }
    }

    #[test]
    fn identity_channel_keeps_dataset() {
        let ds = generate_mixture(&MixtureSpec::default_with_classes(4), 200, &mut rng(4)).unwrap();
        let out = apply_channel(&ds, &ConfusionMatrix::identity(4, 1), &mut rng(5)).unwrap();
        assert_eq!(out.records, ds.records);
        assert!(matches!(apply_channel(&out, &ConfusionMatrix::identity(4, 1), &mut rng(5)), Err(DataError::DoubleCorruption)));
    }

    #[test]
    fn missing_channel_fraction() {
        let spec = MixtureSpec::default_with_classes(4);
        let ds = generate_mixture(&spec, 10_000, &mut rng(6)).unwrap();
        let c = ChannelSpec::missing_uniform(4, 0.5).unwrap().build().unwrap();
        let out = apply_channel(&ds, &c, &mut rng(7)).unwrap();
        let missing = out.records.iter().filter(|r| r.label == 4).count() as f64 / 10_000.0;
        assert!((missing - 0.5).abs() < 0.015);
        for (a, b) in ds.records.iter().zip(&out.records) {
            assert_eq!(a.x, b.x);
            assert!(b.label == a.label || b.label == 4);
        }
        out.validate().unwrap();
    }

    #[test]
    fn complementary_channel_erases_everything() {
        let ds = generate_mixture(&MixtureSpec::default_with_classes(3), 500, &mut rng(8)).unwrap();
        let c = ChannelSpec::complementary(3, 1.0).unwrap().build().unwrap();
        let out = apply_channel(&ds, &c, &mut rng(9)).unwrap();
        assert!(out.records.iter().all(|r| r.label >= 3 && !r.is_labeled));
        assert!(out.records.iter().zip(&ds.records).all(|(o, r)| o.label != 3 + r.label));
    }

    #[test]
    fn few_label_protocol() {
        let ds = generate_mixture(&MixtureSpec::default_with_classes(10), 2000, &mut rng(10)).unwrap();
        let split = few_label_split(&ds, 40, &mut rng(11)).unwrap();
        assert_eq!(split.class_counts(), vec![4; 10]);
        for (a, b) in ds.records.iter().zip(&split.records) {
            assert!(b.label == a.label || b.label == 10);
            assert_eq!(b.is_labeled, b.label == a.label);
        }
        let split = few_label_split(&ds, 10, &mut rng(12)).unwrap();
        assert_eq!(split.class_counts(), vec![1; 10]);
        assert!(matches!(few_label_split(&ds, 15, &mut rng(12)), Err(DataError::NotDivisible { .. })));
        assert!(matches!(few_label_split(&ds, 10_000, &mut rng(12)), Err(DataError::InsufficientClass { .. })));
    }

    #[test]
    fn few_label_full_split() {
        let records = (0..8).map(|i| Record { x: vec![i as f64], label: i % 2, is_labeled: true }).collect();
        let ds = Dataset { dim: 1, m: 2, records, channel: None };
        let split = few_label_split(&ds, 8, &mut rng(13)).unwrap();
        assert!(split.records.iter().all(|r| r.is_labeled));
        assert_eq!(split.channel.unwrap().alphas[0], vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let ds = generate_mixture(&MixtureSpec::default_with_classes(4), 3, &mut rng(14)).unwrap();
        let c = ChannelSpec::missing_uniform(4, 0.5).unwrap().build().unwrap();
        let ds = apply_channel(&ds, &c, &mut rng(15)).unwrap();
        write_dataset(&ds, &path).unwrap();
        let back = read_dataset(&path, 4, ds.channel.clone()).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in ds.records.iter().zip(&back.records) {
            assert_eq!((a.label, a.is_labeled), (b.label, b.is_labeled));
            for (u, v) in a.x.iter().zip(&b.x) {
                assert!((u - v).abs() <= 1e-8 * u.abs().max(1.0));
            }
        }
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        let ds = Dataset { dim: 2, m: 3, records: vec![], channel: None };
        write_dataset(&ds, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "x0,x1,label,is_labeled\n");
        assert_eq!(read_dataset(&path, 3, None).unwrap(), ds);
    }

    #[test]
    fn out_of_range_label_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x0,label,is_labeled\n1.0,3,1\n2.0,999,0\n").unwrap();
        let channel = ChannelSpec::missing_uniform(10, 0.5).unwrap();
        match read_dataset(&path, 10, Some(channel)) {
            Err(DataError::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("999"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::write(&path, "x0,label,is_labeled\nabc,0,1\n").unwrap();
        assert!(matches!(read_dataset(&path, 2, None), Err(DataError::Parse { line: 2, .. })));
        std::fs::write(&path, "y0,label,is_labeled\n").unwrap();
        assert!(matches!(read_dataset(&path, 2, None), Err(DataError::Parse { line: 1, .. })));
    }
}
