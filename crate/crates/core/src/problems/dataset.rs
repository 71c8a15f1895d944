use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq)]
pub enum Labels {
    Real(Vec<f64>),
    Class { labels: Vec<usize>, classes: usize },
}

impl Labels {
    fn len(&self) -> usize {
        match self {
            Labels::Real(v) => v.len(),
            Labels::Class { labels, .. } => labels.len(),
        }
    }
}

/// How the last CSV column is interpreted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Real,
    Class,
}

/// N rows of d features, stored row-major, with one label per row.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteDataset {
    features: Vec<f64>,
    n: usize,
    d: usize,
    labels: Labels,
}

impl FiniteDataset {
    pub fn new(features: Vec<f64>, d: usize, labels: Labels) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::invalid("dataset", "needs at least one row"));
        }
        if d == 0 || features.len() != n * d {
            return Err(Error::invalid(
                "features",
                format!("{} values do not form {n} rows of {d} features", features.len()),
            ));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("features", "contain non-finite values"));
        }
        if let Labels::Class { labels, classes } = &labels {
            if *classes < 2 {
                return Err(Error::invalid("classes", "need at least two classes"));
            }
            if let Some(bad) = labels.iter().find(|&&y| y >= *classes) {
                return Err(Error::invalid("labels", format!("label {bad} out of range for {classes} classes")));
            }
        }
        Ok(Self { features, n, d, labels })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn class_labels(&self) -> Option<&[usize]> {
        match &self.labels {
            Labels::Class { labels, .. } => Some(labels),
            Labels::Real(_) => None,
        }
    }

    pub fn real_labels(&self) -> Option<&[f64]> {
        match &self.labels {
            Labels::Real(v) => Some(v),
            Labels::Class { .. } => None,
        }
    }

    pub fn classes(&self) -> Option<usize> {
        match &self.labels {
            Labels::Class { classes, .. } => Some(*classes),
            Labels::Real(_) => None,
        }
    }

    /// Rows at `indices`, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            if i >= self.n {
                return Err(Error::invalid("indices", format!("row {i} out of range for {} rows", self.n)));
            }
            features.extend_from_slice(self.row(i));
        }
        let labels = match &self.labels {
            Labels::Real(v) => Labels::Real(indices.iter().map(|&i| v[i]).collect()),
            Labels::Class { labels, classes } => Labels::Class {
                labels: indices.iter().map(|&i| labels[i]).collect(),
                classes: *classes,
            },
        };
        Self::new(features, self.d, labels)
    }

    /// First `n_first` rows and the remainder.
    pub fn split_at(&self, n_first: usize) -> Result<(Self, Self)> {
        if n_first == 0 || n_first >= self.n {
            return Err(Error::invalid("split", format!("{n_first} must lie strictly inside 0..{}", self.n)));
        }
        let first: Vec<usize> = (0..n_first).collect();
        let rest: Vec<usize> = (n_first..self.n).collect();
        Ok((self.subset(&first)?, self.subset(&rest)?))
    }

    pub fn with_class_labels(&self, labels: Vec<usize>) -> Result<Self> {
        let classes = self
            .classes()
            .ok_or_else(|| Error::invalid("labels", "dataset has real-valued labels"))?;
        Self::new(self.features.clone(), self.d, Labels::Class { labels, classes })
    }

    pub fn from_csv(path: &Path, kind: LabelKind) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file, &path.display().to_string(), kind)
    }

    /// Numeric features with the label in the last column. A first row that
    /// does not parse as numbers is taken as a header; any later bad row is an
    /// error naming its line.
    pub fn from_csv_reader<R: Read>(reader: R, source: &str, kind: LabelKind) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let parse_err = |line: u64, message: String| Error::Parse {
            path: source.into(),
            line: line as usize,
            message,
        };
        let mut features = Vec::new();
        let mut raw_labels = Vec::new();
        let mut width: Option<usize> = None;
        for (idx, record) in rdr.records().enumerate() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
            let values = match parsed {
                Ok(v) => v,
                Err(_) if idx == 0 => continue,
                Err(e) => return Err(parse_err(line, format!("non-numeric field: {e}"))),
            };
            if values.len() < 2 {
                return Err(parse_err(line, "need at least one feature and a label".into()));
            }
            match width {
                None => width = Some(values.len()),
                Some(w) if w != values.len() => {
                    return Err(parse_err(line, format!("expected {w} fields, found {}", values.len())));
                }
                _ => {}
            }
            if values.iter().any(|x| !x.is_finite()) {
                return Err(parse_err(line, "non-finite value".into()));
            }
            let (label, feats) = values.split_last().expect("len >= 2");
            features.extend_from_slice(feats);
            if kind == LabelKind::Class && (label.fract() != 0.0 || *label < 0.0) {
                return Err(parse_err(line, format!("class label {label} is not a non-negative integer")));
            }
            raw_labels.push(*label);
        }
        let width = width.ok_or_else(|| parse_err(0, "no data rows".into()))?;
        let labels = match kind {
            LabelKind::Real => Labels::Real(raw_labels),
            LabelKind::Class => {
                let labels: Vec<usize> = raw_labels.iter().map(|&y| y as usize).collect();
                let classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
                Labels::Class { labels, classes }
            }
        };
        Self::new(features, width - 1, labels)
    }
}

/// Two interleaving half-circles in the first two coordinates, optionally
/// padded with pure N(0, 1) nuisance coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoMoonsSpec {
    pub n: usize,
    pub noise: f64,
    #[serde(default)]
    pub nuisance_dims: usize,
}

impl Default for TwoMoonsSpec {
    fn default() -> Self {
        Self {
            n: 2000,
            noise: 0.2,
            nuisance_dims: 0,
        }
    }
}

/// Rows are shuffled; class counts differ by at most one.
pub fn two_moons(spec: &TwoMoonsSpec, rng: &mut RngStream) -> Result<FiniteDataset> {
    if spec.n < 2 {
        return Err(Error::invalid("n", "two-moons needs at least two points"));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::invalid("noise", format!("{} must be finite and >= 0", spec.noise)));
    }
    let d = 2 + spec.nuisance_dims;
    let n_upper = spec.n / 2;
    let n_lower = spec.n - n_upper;
    let mut rows: Vec<(Vec<f64>, usize)> = Vec::with_capacity(spec.n);
    for (count, class) in [(n_upper, 0usize), (n_lower, 1)] {
        for k in 0..count {
            let t = std::f64::consts::PI * k as f64 / (count.max(2) - 1) as f64;
            let (x, y) = if class == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            let mut row = Vec::with_capacity(d);
            row.push(x + spec.noise * rng.standard_normal());
            row.push(y + spec.noise * rng.standard_normal());
            for _ in 0..spec.nuisance_dims {
                row.push(rng.standard_normal());
            }
            rows.push((row, class));
        }
    }
    rng.shuffle(&mut rows);
    let mut features = Vec::with_capacity(spec.n * d);
    let mut labels = Vec::with_capacity(spec.n);
    for (row, class) in rows {
        features.extend(row);
        labels.push(class);
    }
    FiniteDataset::new(features, d, Labels::Class { labels, classes: 2 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelNoiseKind {
    /// Flip to a uniformly random other class.
    Symmetric,
    /// Flip class i to (i + 1) mod K.
    Asymmetric,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelNoiseSpec {
    pub kind: LabelNoiseKind,
    pub rate: f64,
}

impl LabelNoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rate) {
            return Err(Error::invalid("rate", format!("{} must lie in [0, 1)", self.rate)));
        }
        Ok(())
    }
}

/// Returns the corrupted dataset and a mask that is true where a label changed.
pub fn apply_label_noise(
    data: &FiniteDataset,
    spec: &LabelNoiseSpec,
    rng: &mut RngStream,
) -> Result<(FiniteDataset, Vec<bool>)> {
    spec.validate()?;
    let (labels, classes) = match data.labels() {
        Labels::Class { labels, classes } => (labels, *classes),
        Labels::Real(_) => return Err(Error::invalid("labels", "label noise needs class labels")),
    };
    let mut out = labels.clone();
    let mut flipped = vec![false; labels.len()];
    for (i, y) in out.iter_mut().enumerate() {
        if rng.uniform() >= spec.rate {
            continue;
        }
        *y = match spec.kind {
            LabelNoiseKind::Symmetric => {
                let other = rng.below(classes - 1);
                if other >= *y {
                    other + 1
                } else {
                    other
                }
            }
            LabelNoiseKind::Asymmetric => (*y + 1) % classes,
        };
        flipped[i] = true;
    }
    Ok((data.with_class_labels(out)?, flipped))
}
