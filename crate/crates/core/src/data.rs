//! Synthetic multi-modal datasets and the feature CSV format.
//!
//! CSV layout: a mandatory header `label,f0,…,f{d-1}`, then one sample per
//! row with a non-negative integer label first. Values are written in
//! shortest round-trip form, so save → load → save is byte-identical.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{l2_norm, sample_standard_normal, Matrix, RngState};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub provenance: String,
}

impl LabeledDataset {
    pub fn new(features: Matrix, labels: Vec<usize>, num_classes: usize, provenance: impl Into<String>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Dimension { expected: features.rows(), found: labels.len() });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange { label, classes: num_classes });
        }
        Ok(LabeledDataset {
            features,
            labels,
            num_classes,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Rows `indices` of the feature matrix, in that order.
    pub fn features_of(&self, indices: &[usize]) -> Matrix {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(self.features.row(i));
        }
        Matrix::from_vec(indices.len(), d, data).expect("sized")
    }

    pub fn subset(&self, indices: &[usize], provenance: impl Into<String>) -> LabeledDataset {
        LabeledDataset {
            features: self.features_of(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            provenance: provenance.into(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub modes_per_class: usize,
    pub samples_per_class: usize,
    pub input_dim: usize,
    /// Pairwise distance between class centers (exact when `num_classes <= input_dim`).
    pub class_separation: f64,
    /// Distance of each mode center from its class center.
    pub mode_spread: f64,
    pub within_mode_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_classes: 8,
            modes_per_class: 3,
            samples_per_class: 250,
            input_dim: 16,
            class_separation: 4.0,
            mode_spread: 2.5,
            within_mode_std: 1.0,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_classes", self.num_classes),
            ("modes_per_class", self.modes_per_class),
            ("samples_per_class", self.samples_per_class),
            ("input_dim", self.input_dim),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if !(self.within_mode_std > 0.0) || !self.within_mode_std.is_finite() {
            return Err(Error::Config(format!("within_mode_std must be positive, got {}", self.within_mode_std)));
        }
        for (name, v) in [("class_separation", self.class_separation), ("mode_spread", self.mode_spread)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

fn random_unit(rng: &mut RngState, d: usize) -> Vec<f64> {
    loop {
        let v = sample_standard_normal(rng, d).expect("d > 0");
        let n = l2_norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `count` orthonormal vectors in R^d by Gram–Schmidt on Gaussian draws.
fn orthonormal_frame(rng: &mut RngState, count: usize, d: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = sample_standard_normal(rng, d).expect("d > 0");
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
        let n = l2_norm(&v);
        if n > 1e-6 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

/// Gaussian sub-clusters around per-class mode centers.
///
/// Class centers are `separation/√2` times an orthonormal frame, so any two
/// sit exactly `separation` apart (random unit directions stand in when
/// there are more classes than dimensions). With one mode the mode center
/// is the class center; otherwise each mode is offset by `mode_spread` in a
/// random direction. Sample `j` of a class is drawn from mode `j mod M`.
pub fn generate_multimodal(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = RngState::new(spec.seed);
    let d = spec.input_dim;
    let radius = spec.class_separation / std::f64::consts::SQRT_2;
    let directions = if spec.num_classes <= d {
        orthonormal_frame(&mut rng, spec.num_classes, d)
    } else {
        (0..spec.num_classes).map(|_| random_unit(&mut rng, d)).collect()
    };
    let mut data = Vec::with_capacity(spec.num_classes * spec.samples_per_class * d);
    let mut labels = Vec::with_capacity(spec.num_classes * spec.samples_per_class);
    for (class, dir) in directions.iter().enumerate() {
        let center: Vec<f64> = dir.iter().map(|v| radius * v).collect();
        let modes: Vec<Vec<f64>> = if spec.modes_per_class == 1 {
            vec![center]
        } else {
            (0..spec.modes_per_class)
                .map(|_| {
                    let off = random_unit(&mut rng, d);
                    center.iter().zip(off).map(|(c, o)| c + spec.mode_spread * o).collect()
                })
                .collect()
        };
        for j in 0..spec.samples_per_class {
            let mode = &modes[j % spec.modes_per_class];
            for m in mode {
                data.push(m + spec.within_mode_std * rng.standard_normal());
            }
            labels.push(class);
        }
    }
    let n = labels.len();
    LabeledDataset::new(
        Matrix::from_vec(n, d, data)?,
        labels,
        spec.num_classes,
        format!("synthetic seed={} C={} M={}", spec.seed, spec.num_classes, spec.modes_per_class),
    )
}

/// Per-class split keeping every class in both halves. Each half keeps the
/// original row order.
pub fn stratified_split(ds: &LabeledDataset, test_fraction: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!("test fraction must lie in (0, 1), got {test_fraction}")));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = RngState::new(seed);
    let mut is_test = vec![false; ds.len()];
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(Error::Config(format!("class {class} has fewer than 2 samples; cannot split")));
        }
        let n = members.len();
        let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
        rng.shuffle(members);
        for &i in &members[..n_test] {
            is_test[i] = true;
        }
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..ds.len()).partition(|&i| is_test[i]);
    Ok((
        ds.subset(&train, format!("{} | train split seed={seed}", ds.provenance)),
        ds.subset(&test, format!("{} | test split seed={seed}", ds.provenance)),
    ))
}

pub fn to_csv_string(ds: &LabeledDataset) -> Result<String> {
    let d = ds.dim();
    let mut out = String::from("label");
    for k in 0..d {
        write!(out, ",f{k}").expect("string write");
    }
    out.push('\n');
    for (i, &label) in ds.labels.iter().enumerate() {
        write!(out, "{label}").expect("string write");
        for &v in ds.features.row(i) {
            if !v.is_finite() {
                return Err(Error::Config(format!("non-finite feature in row {i}")));
            }
            write!(out, ",{v:?}").expect("string write");
        }
        out.push('\n');
    }
    Ok(out)
}

/// Parses the feature CSV. Labels must be below `num_classes` when given;
/// otherwise the class count is one past the largest label.
pub fn parse_features_csv(text: &str, num_classes: Option<usize>) -> Result<LabeledDataset> {
    let err = |line: usize, message: String| Error::Parse { line, message };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.first() != Some(&"label") || columns.len() < 2 {
        return Err(err(1, "header must start with 'label' followed by feature columns".into()));
    }
    for (k, name) in columns[1..].iter().enumerate() {
        if *name != format!("f{k}") {
            return Err(err(1, format!("expected column 'f{k}', found '{name}'")));
        }
    }
    let d = columns.len() - 1;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (line, row) in lines {
        let cells: Vec<&str> = row.split(',').collect();
        if cells.len() != d + 1 {
            return Err(err(line, format!("expected {} fields, found {}", d + 1, cells.len())));
        }
        let label: usize = cells[0]
            .trim()
            .parse()
            .map_err(|_| err(line, format!("label '{}' is not a non-negative integer", cells[0])))?;
        if let Some(c) = num_classes {
            if label >= c {
                return Err(err(line, format!("label {label} out of range for {c} classes")));
            }
        }
        for cell in &cells[1..] {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| err(line, format!("'{cell}' is not a number")))?;
            if !v.is_finite() {
                return Err(err(line, format!("'{cell}' is not finite")));
            }
            data.push(v);
        }
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(err(2, "no data rows".into()));
    }
    let classes = num_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    let n = labels.len();
    LabeledDataset::new(Matrix::from_vec(n, d, data)?, labels, classes, "csv")
}

pub fn save_features_csv(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_csv_string(ds)?).map_err(|e| Error::io(path, e))
}

pub fn load_features_csv(path: impl AsRef<Path>, num_classes: Option<usize>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ds = parse_features_csv(&text, num_classes)?;
    ds.provenance = path.display().to_string();
    Ok(ds)
}
