//! Parameterized Gaussian classification datasets in organized-matrix form.
//!
//! A [`Dataset`] stores samples as the columns of a `d0 × N` matrix with every class occupying a
//! contiguous block of columns, in class order. The class partition `[n_1, .., n_C]` is carried
//! alongside so kernel Gram matrices inherit the same block layout.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::NormalStream;

/// One mixture component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    /// Mean is `mean_scale · 1_{d0}` unless `mean` is given.
    pub mean_scale: f64,
    /// Optional explicit mean vector; overrides `mean_scale`. Not used by the presets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    /// Isotropic standard deviation.
    pub std: f64,
    pub count: usize,
    pub label: f64,
}

impl ClassSpec {
    pub fn new(mean_scale: f64, std: f64, count: usize, label: f64) -> Self {
        Self { mean_scale, mean: None, std, count, label }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub d0: usize,
    pub classes: Vec<ClassSpec>,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d0 == 0 {
            return Err(Error::InvalidSpec("d0 must be at least 1".into()));
        }
        if self.classes.is_empty() {
            return Err(Error::InvalidSpec("at least one class is required".into()));
        }
        for (c, class) in self.classes.iter().enumerate() {
            if class.count == 0 {
                return Err(Error::InvalidSpec(format!("class {c} has zero samples")));
            }
            if !(class.std > 0.0) {
                return Err(Error::InvalidSpec(format!("class {c} has std {} <= 0", class.std)));
            }
            if let Some(mean) = &class.mean {
                if mean.len() != self.d0 {
                    return Err(Error::InvalidSpec(format!(
                        "class {c} mean has length {}, expected d0 = {}",
                        mean.len(),
                        self.d0
                    )));
                }
            }
            for (c2, other) in self.classes.iter().enumerate().skip(c + 1) {
                if other.label == class.label {
                    return Err(Error::InvalidSpec(format!(
                        "classes {c} and {c2} share label {}",
                        class.label
                    )));
                }
            }
        }
        Ok(())
    }

    /// Two balanced classes `N(∓μ·1, σ²I)` with labels ∓1.
    pub fn two_class(n: usize, d0: usize, mu: f64, std: f64) -> Result<Self> {
        if !n.is_multiple_of(2) {
            return Err(Error::InvalidSpec(format!("N = {n} must be even for a balanced two-class set")));
        }
        Ok(Self {
            d0,
            classes: vec![
                ClassSpec::new(-mu, std, n / 2, -1.0),
                ClassSpec::new(mu, std, n / 2, 1.0),
            ],
        })
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        self.classes.iter().map(|c| c.count).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMeta {
    pub mean_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    pub std: f64,
    pub label: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub classes: Vec<ClassMeta>,
    pub seed: u64,
}

/// Samples in organized-matrix form.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `d0 × N`; column `i` is sample `i`.
    pub x: DMatrix<f64>,
    pub labels: Vec<f64>,
    pub partition: Vec<usize>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn d0(&self) -> usize {
        self.x.nrows()
    }

    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.ncols() == 0
    }

    pub fn num_classes(&self) -> usize {
        self.partition.len()
    }

    /// Column range of class `c`.
    pub fn class_range(&self, c: usize) -> std::ops::Range<usize> {
        let start: usize = self.partition[..c].iter().sum();
        start..start + self.partition[c]
    }

    pub fn seed(&self) -> u64 {
        self.meta.seed
    }

    /// Writes `<stem>.csv` (one column per sample) and `<stem>.json` (partition, labels, meta, seed).
    pub fn write_csv_pair(&self, stem: &Path) -> Result<(PathBuf, PathBuf)> {
        let csv_path = stem.with_extension("csv");
        let json_path = stem.with_extension("json");
        fs::write(&csv_path, matrix_to_csv(&self.x)).map_err(|e| Error::io(&csv_path, e))?;
        let header = DatasetHeader {
            d0: self.d0(),
            n: self.len(),
            partition: self.partition.clone(),
            labels: self.labels.clone(),
            meta: self.meta.clone(),
            seed: self.meta.seed,
        };
        let json = serde_json::to_string_pretty(&header).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;
        Ok((csv_path, json_path))
    }

    pub fn read_csv_pair(stem: &Path) -> Result<Self> {
        let csv_path = stem.with_extension("csv");
        let json_path = stem.with_extension("json");
        let json = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
        let header: DatasetHeader =
            serde_json::from_str(&json).map_err(|e| Error::Parse(format!("{}: {e}", json_path.display())))?;
        let text = fs::read_to_string(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        let x = matrix_from_csv(&text)?;
        if x.nrows() != header.d0 || x.ncols() != header.n {
            return Err(Error::Parse(format!(
                "matrix is {}x{}, header declares {}x{}",
                x.nrows(),
                x.ncols(),
                header.d0,
                header.n
            )));
        }
        let ds = Dataset { x, labels: header.labels, partition: header.partition, meta: header.meta };
        ds.check_layout()?;
        Ok(ds)
    }

    /// Checks the organized layout: partition sums to N and labels are constant per block.
    pub fn check_layout(&self) -> Result<()> {
        check_partition(&self.partition, self.len())?;
        if self.labels.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: self.labels.len() });
        }
        for c in 0..self.num_classes() {
            let r = self.class_range(c);
            let first = self.labels[r.start];
            if self.labels[r].iter().any(|&l| l != first) {
                return Err(Error::Partition(format!("labels vary inside class block {c}")));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    d0: usize,
    n: usize,
    partition: Vec<usize>,
    labels: Vec<f64>,
    meta: DatasetMeta,
    seed: u64,
}

pub(crate) fn check_partition(partition: &[usize], n: usize) -> Result<()> {
    if partition.is_empty() {
        return Err(Error::Partition("empty partition".into()));
    }
    if partition.contains(&0) {
        return Err(Error::Partition(format!("empty class in {partition:?}")));
    }
    let total: usize = partition.iter().sum();
    if total != n {
        return Err(Error::Partition(format!("partition {partition:?} sums to {total}, expected {n}")));
    }
    Ok(())
}

/// Draws every column of class `c` i.i.d. from `N(μ_c, σ_c² I)`; class `c` uses stream `c` of `seed`.
pub fn sample_gaussian_mixture(spec: &MixtureSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let d0 = spec.d0;
    let n: usize = spec.classes.iter().map(|c| c.count).sum();
    let mut x = DMatrix::zeros(d0, n);
    let mut labels = Vec::with_capacity(n);
    let mut col = 0;
    for (c, class) in spec.classes.iter().enumerate() {
        let mut stream = NormalStream::new(seed, c as u64);
        for _ in 0..class.count {
            for k in 0..d0 {
                let mean = class.mean.as_ref().map_or(class.mean_scale, |m| m[k]);
                x[(k, col)] = stream.normal(mean, class.std);
            }
            labels.push(class.label);
            col += 1;
        }
    }
    let meta = DatasetMeta {
        classes: spec
            .classes
            .iter()
            .map(|c| ClassMeta { mean_scale: c.mean_scale, mean: c.mean.clone(), std: c.std, label: c.label })
            .collect(),
        seed,
    };
    Ok(Dataset { x, labels, partition: spec.class_sizes(), meta })
}

/// Balanced two-class set: `N(∓2·1, 0.25 I)`, labels ∓1.
pub fn make_d1(n: usize, d0: usize, seed: u64) -> Result<Dataset> {
    sample_gaussian_mixture(&MixtureSpec::two_class(n, d0, 2.0, 0.5)?, seed)
}

/// Four balanced classes with means −6, −2, 2, 6 (times 1), σ = 0.5, labels −3, −1, 1, 3.
pub fn make_d2(n: usize, d0: usize, seed: u64) -> Result<Dataset> {
    if !n.is_multiple_of(4) {
        return Err(Error::InvalidSpec(format!("N = {n} must be divisible by 4")));
    }
    let q = n / 4;
    let spec = MixtureSpec {
        d0,
        classes: vec![
            ClassSpec::new(-6.0, 0.5, q, -3.0),
            ClassSpec::new(-2.0, 0.5, q, -1.0),
            ClassSpec::new(2.0, 0.5, q, 1.0),
            ClassSpec::new(6.0, 0.5, q, 3.0),
        ],
    };
    sample_gaussian_mixture(&spec, seed)
}

/// Same mixture as `spec` with the per-class counts replaced by `class_sizes`.
pub fn make_imbalanced(class_sizes: &[usize], spec: &MixtureSpec, seed: u64) -> Result<Dataset> {
    if class_sizes.len() != spec.classes.len() {
        return Err(Error::InvalidSpec(format!(
            "{} class sizes given for a {}-class spec",
            class_sizes.len(),
            spec.classes.len()
        )));
    }
    let mut spec = spec.clone();
    for (class, &count) in spec.classes.iter_mut().zip(class_sizes) {
        class.count = count;
    }
    sample_gaussian_mixture(&spec, seed)
}

/// Writes a dense matrix as headerless CSV.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, matrix_to_csv(m)).map_err(|e| Error::io(path, e))
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    matrix_from_csv(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub(crate) fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::with_capacity(m.nrows() * m.ncols() * 20);
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(',');
            }
            // Display for f64 is the shortest string that round-trips.
            out.push_str(&m[(r, c)].to_string());
        }
        out.push('\n');
    }
    out
}

pub(crate) fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|e| Error::Parse(format!("`{v}`: {e}"))))
                .collect()
        })
        .collect::<Result<_>>()?;
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse("ragged CSV matrix".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
}
