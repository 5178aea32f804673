//! Linear models: logits, losses and exact gradients.
//!
//! A model is a `K x (d+1)` matrix whose last column is the bias. Examples
//! carry `d` features; the constant bias feature is appended on the fly.
//! Squared error uses `K = 1`, cross-entropy uses `K >= 2` classes.
//!
//! Regularization `(lambda/2) * ||W||_F^2` covers the weight columns only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major `rows x cols` parameter matrix. Also used for gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl ParameterVector {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape {
                what: "parameter values",
                expected: rows * cols,
                found: values.len(),
            });
        }
        Ok(Self { rows, cols, values })
    }

    /// Builds a matrix from equally sized rows. Panics on ragged input; meant
    /// for literals and tests.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self {
            rows: rows.len(),
            cols,
            values: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        }
    }

    /// A single-row vector, e.g. gridworld reward parameters.
    pub fn row_vector(values: Vec<f64>) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape {
                what: "parameter matrix",
                expected: self.len(),
                found: other.len(),
            })
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_same(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum())
    }

    pub fn sq_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.sq_norm().sqrt()
    }

    /// `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    /// `self += scale * other`.
    pub fn axpy(&mut self, scale: f64, other: &Self) -> Result<()> {
        self.check_same(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
        Ok(())
    }

    /// `self - scale * other`, evaluated as one rounding per entry.
    pub fn step(&self, scale: f64, direction: &Self) -> Result<Self> {
        self.check_same(direction)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            values: self
                .values
                .iter()
                .zip(&direction.values)
                .map(|(a, g)| a - scale * g)
                .collect(),
        })
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    pub fn distance(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.norm())
    }
}

/// One labelled example. Classification labels are stored as exact integers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeachingExample {
    pub features: Vec<f64>,
    pub label: f64,
}

impl TeachingExample {
    pub fn new(features: Vec<f64>, label: f64) -> Self {
        Self { features, label }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// Which feature space a batch is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Teacher,
    Learner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeachingBatch {
    pub examples: Vec<TeachingExample>,
    pub representation: Representation,
}

impl TeachingBatch {
    pub fn new(examples: Vec<TeachingExample>, representation: Representation) -> Result<Self> {
        let first = examples.first().ok_or(Error::Empty("teaching batch"))?;
        let d = first.dim();
        if let Some(bad) = examples.iter().find(|e| e.dim() != d) {
            return Err(Error::Shape {
                what: "batch example features",
                expected: d,
                found: bad.dim(),
            });
        }
        Ok(Self {
            examples,
            representation,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    SquaredError,
    CrossEntropy { classes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    #[serde(default)]
    pub lambda: f64,
}

impl LossSpec {
    pub fn squared(lambda: f64) -> Self {
        Self {
            kind: LossKind::SquaredError,
            lambda,
        }
    }

    pub fn cross_entropy(classes: usize, lambda: f64) -> Self {
        Self {
            kind: LossKind::CrossEntropy { classes },
            lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let LossKind::CrossEntropy { classes } = self.kind {
            if classes < 2 {
                return Err(Error::config("cross-entropy needs at least 2 classes"));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda must be finite and non-negative"));
        }
        Ok(())
    }

    /// Number of output rows `K`.
    pub fn outputs(&self) -> usize {
        match self.kind {
            LossKind::SquaredError => 1,
            LossKind::CrossEntropy { classes } => classes,
        }
    }

    pub fn zeros(&self, dim: usize) -> ParameterVector {
        ParameterVector::zeros(self.outputs(), dim + 1)
    }

    fn check(&self, p: &ParameterVector, ex: &TeachingExample) -> Result<()> {
        if p.rows() != self.outputs() {
            return Err(Error::Shape {
                what: "parameter rows",
                expected: self.outputs(),
                found: p.rows(),
            });
        }
        if p.cols() != ex.dim() + 1 {
            return Err(Error::Shape {
                what: "parameter columns (features + bias)",
                expected: ex.dim() + 1,
                found: p.cols(),
            });
        }
        self.check_label(ex.label)
    }

    pub(crate) fn check_label(&self, label: f64) -> Result<()> {
        match self.kind {
            LossKind::SquaredError => Ok(()),
            LossKind::CrossEntropy { classes } => class_index(label, classes).map(|_| ()),
        }
    }
}

fn class_index(label: f64, classes: usize) -> Result<usize> {
    if label >= 0.0 && label.fract() == 0.0 && (label as usize) < classes {
        Ok(label as usize)
    } else {
        Err(Error::InvalidLabel { label, classes })
    }
}

/// `log(sum(exp(z)))` with max-shift.
pub fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Max-shifted softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    out
}

/// Per-row `<[x; 1], p_k>`. This is also the feedback a learner reports.
pub fn logits(spec: &LossSpec, p: &ParameterVector, ex: &TeachingExample) -> Result<Vec<f64>> {
    spec.check(p, ex)?;
    let d = ex.dim();
    Ok((0..p.rows())
        .map(|k| {
            let row = p.row(k);
            row[..d].iter().zip(&ex.features).map(|(w, x)| w * x).sum::<f64>() + row[d]
        })
        .collect())
}

/// Data term of the loss given logits; no regularization.
pub fn loss_from_logits(spec: &LossSpec, logits: &[f64], label: f64) -> Result<f64> {
    check_logits(spec, logits)?;
    let v = match spec.kind {
        LossKind::SquaredError => 0.5 * (logits[0] - label).powi(2),
        LossKind::CrossEntropy { classes } => {
            let y = class_index(label, classes)?;
            log_sum_exp(logits) - logits[y]
        }
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("loss value"))
    }
}

/// Derivative of the data term with respect to the logits.
pub fn logit_grad(spec: &LossSpec, logits: &[f64], label: f64) -> Result<Vec<f64>> {
    check_logits(spec, logits)?;
    let g = match spec.kind {
        LossKind::SquaredError => vec![logits[0] - label],
        LossKind::CrossEntropy { classes } => {
            let y = class_index(label, classes)?;
            let mut p = softmax(logits);
            p[y] -= 1.0;
            p
        }
    };
    if g.iter().all(|v| v.is_finite()) {
        Ok(g)
    } else {
        Err(Error::NonFinite("logit gradient"))
    }
}

fn check_logits(spec: &LossSpec, logits: &[f64]) -> Result<()> {
    if logits.len() != spec.outputs() {
        return Err(Error::Shape {
            what: "logits",
            expected: spec.outputs(),
            found: logits.len(),
        });
    }
    Ok(())
}

fn weight_sq_norm(p: &ParameterVector) -> f64 {
    let d = p.cols() - 1;
    (0..p.rows())
        .map(|k| p.row(k)[..d].iter().map(|w| w * w).sum::<f64>())
        .sum()
}

pub fn loss_value(spec: &LossSpec, p: &ParameterVector, ex: &TeachingExample) -> Result<f64> {
    let z = logits(spec, p, ex)?;
    let mut v = loss_from_logits(spec, &z, ex.label)?;
    if spec.lambda != 0.0 {
        v += 0.5 * spec.lambda * weight_sq_norm(p);
    }
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("loss value"))
    }
}

/// Outer product of a logit gradient with the bias-appended features.
pub fn outer_with_bias(dz: &[f64], features: &[f64]) -> ParameterVector {
    let cols = features.len() + 1;
    let mut g = ParameterVector::zeros(dz.len(), cols);
    for (k, &dk) in dz.iter().enumerate() {
        let row = &mut g.as_mut_slice()[k * cols..(k + 1) * cols];
        for (r, x) in row.iter_mut().zip(features) {
            *r = dk * x;
        }
        row[cols - 1] = dk;
    }
    g
}

pub fn loss_grad(spec: &LossSpec, p: &ParameterVector, ex: &TeachingExample) -> Result<ParameterVector> {
    let z = logits(spec, p, ex)?;
    let dz = logit_grad(spec, &z, ex.label)?;
    let mut g = outer_with_bias(&dz, &ex.features);
    if spec.lambda != 0.0 {
        let d = ex.dim();
        for k in 0..p.rows() {
            for c in 0..d {
                let v = g.get(k, c) + spec.lambda * p.get(k, c);
                g.set(k, c, v);
            }
        }
    }
    if g.is_finite() {
        Ok(g)
    } else {
        Err(Error::NonFinite("loss gradient"))
    }
}

/// Squared Frobenius norm.
pub fn grad_sq_norm(g: &ParameterVector) -> f64 {
    g.sq_norm()
}
