//! Synthetic teaching tasks and external feature files.
//!
//! Feature-space mismatch is modelled with a random orthogonal matrix `P`:
//! the learner sees `x`, the teacher sees `P^T x`, and every weight row is
//! transported the same way, so all logits agree across the two spaces.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linmodel::{self, LossSpec, ParameterVector, TeachingExample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticTask {
    Regression {
        dim: usize,
        samples: usize,
    },
    GaussianClasses {
        dim: usize,
        classes: usize,
        samples: usize,
        /// Per-coordinate variance of each class cluster.
        #[serde(default = "default_variance")]
        variance: f64,
        /// Multiplies the class centers; 1 reproduces `U[-1, 1]` centers.
        #[serde(default = "one")]
        center_scale: f64,
    },
}

fn default_variance() -> f64 {
    0.5
}

fn one() -> f64 {
    1.0
}

impl SyntheticTask {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SyntheticTask::Regression { dim, samples } if dim > 0 && samples > 0 => Ok(()),
            SyntheticTask::GaussianClasses {
                dim,
                classes,
                samples,
                variance,
                center_scale,
            } if dim > 0
                && classes >= 2
                && samples > 0
                && samples % classes == 0
                && variance > 0.0
                && center_scale.is_finite() =>
            {
                Ok(())
            }
            _ => Err(Error::config(
                "synthetic task needs positive sizes, K >= 2, samples divisible by K and variance > 0",
            )),
        }
    }

    pub fn loss(&self) -> LossSpec {
        match *self {
            SyntheticTask::Regression { .. } => LossSpec::squared(0.0),
            SyntheticTask::GaussianClasses { classes, .. } => LossSpec::cross_entropy(classes, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub examples: Vec<TeachingExample>,
    pub spec: LossSpec,
}

impl Dataset {
    pub fn dim(&self) -> usize {
        self.examples.first().map_or(0, |e| e.dim())
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn mean_loss(&self, params: &ParameterVector) -> Result<f64> {
        let mut total = 0.0;
        for ex in &self.examples {
            total += linmodel::loss_value(&self.spec, params, ex)?;
        }
        Ok(total / self.examples.len().max(1) as f64)
    }

    pub fn accuracy(&self, params: &ParameterVector) -> Result<f64> {
        let mut hits = 0usize;
        for ex in &self.examples {
            let z = linmodel::logits(&self.spec, params, ex)?;
            let mut best = 0;
            for k in 1..z.len() {
                if z[k] > z[best] {
                    best = k;
                }
            }
            if best as f64 == ex.label {
                hits += 1;
            }
        }
        Ok(hits as f64 / self.examples.len().max(1) as f64)
    }
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// `y = <x, w*> + b*` with every entry of `x`, `w*`, `b*` drawn from `U[-1, 1]`.
pub fn gen_regression(dim: usize, samples: usize, seed: u64) -> Result<(Dataset, ParameterVector)> {
    SyntheticTask::Regression { dim, samples }.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = ParameterVector::from_vec(1, dim + 1, uniform_vec(&mut rng, dim + 1))?;
    let spec = LossSpec::squared(0.0);
    let examples = (0..samples)
        .map(|_| {
            let features = uniform_vec(&mut rng, dim);
            let mut ex = TeachingExample::new(features, 0.0);
            ex.label = linmodel::logits(&spec, &target, &ex)?[0];
            Ok(ex)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((Dataset { examples, spec }, target))
}

/// Multinomial logistic fit used to derive the teacher's classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Weight penalty; `None` uses `1 / N`, the per-sample scaling of a
    /// unit-strength L2 penalty on the summed loss.
    pub lambda: Option<f64>,
    pub grad_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            lambda: None,
            grad_tolerance: 1e-6,
            max_iterations: 200,
        }
    }
}

/// `K` Gaussian clusters with centers in `U[-1, 1]^d` (times `center_scale`)
/// and isotropic `variance`; labels are cluster indices, `N / K` per class.
/// The returned target is a multinomial logistic fit on the data.
pub fn gen_classification(task: &SyntheticTask, seed: u64, fit: &FitOptions) -> Result<(Dataset, ParameterVector)> {
    task.validate()?;
    let SyntheticTask::GaussianClasses {
        dim,
        classes,
        samples,
        variance,
        center_scale,
    } = *task
    else {
        return Err(Error::config("expected a classification task"));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            uniform_vec(&mut rng, dim)
                .into_iter()
                .map(|c| c * center_scale)
                .collect()
        })
        .collect();
    let sd = variance.sqrt();
    let per_class = samples / classes;
    let mut examples = Vec::with_capacity(samples);
    for (k, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            let features = center
                .iter()
                .map(|c| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    c + sd * z
                })
                .collect();
            examples.push(TeachingExample::new(features, k as f64));
        }
    }
    let lambda = fit.lambda.unwrap_or(1.0 / samples as f64);
    let spec = LossSpec::cross_entropy(classes, lambda);
    let target = fit_logistic(&spec, &examples, fit)?;
    Ok((
        Dataset {
            examples,
            spec: LossSpec::cross_entropy(classes, 0.0),
        },
        target,
    ))
}

/// Damped Newton iterations on the mean regularized cross-entropy.
///
/// The bias block is unpenalized and shift-degenerate across classes; a
/// tiny ridge keeps the Newton system definite and pins the bias mean at 0.
pub fn fit_logistic(spec: &LossSpec, examples: &[TeachingExample], fit: &FitOptions) -> Result<ParameterVector> {
    spec.validate()?;
    let classes = spec.outputs();
    let dim = examples.first().ok_or(Error::Empty("training data"))?.dim();
    let cols = dim + 1;
    let n_par = classes * cols;
    let n = examples.len() as f64;
    let mut params = ParameterVector::zeros(classes, cols);
    const RIDGE: f64 = 1e-8;

    let objective = |p: &ParameterVector| -> Result<f64> {
        let mut total = 0.0;
        for ex in examples {
            total += linmodel::loss_value(&LossSpec { lambda: 0.0, ..*spec }, p, ex)?;
        }
        let reg: f64 = (0..classes)
            .map(|k| p.row(k)[..dim].iter().map(|w| w * w).sum::<f64>())
            .sum();
        let bias: f64 = (0..classes).map(|k| p.get(k, dim).powi(2)).sum();
        Ok(total / n + 0.5 * spec.lambda * reg + 0.5 * RIDGE * bias)
    };

    let mut residual = f64::INFINITY;
    for _ in 0..fit.max_iterations {
        let mut grad = vec![0.0; n_par];
        let mut hess = DMatrix::<f64>::zeros(n_par, n_par);
        let mut x = vec![0.0; cols];
        for ex in examples {
            x[..dim].copy_from_slice(&ex.features);
            x[dim] = 1.0;
            let z = linmodel::logits(spec, &params, ex)?;
            let prob = linmodel::softmax(&z);
            let y = ex.label as usize;
            for k in 0..classes {
                let r = prob[k] - if k == y { 1.0 } else { 0.0 };
                for c in 0..cols {
                    grad[k * cols + c] += r * x[c] / n;
                }
            }
            for k in 0..classes {
                for l in 0..classes {
                    let w = (if k == l { prob[k] } else { 0.0 } - prob[k] * prob[l]) / n;
                    if w == 0.0 {
                        continue;
                    }
                    for c in 0..cols {
                        let wc = w * x[c];
                        for e in 0..cols {
                            hess[(k * cols + c, l * cols + e)] += wc * x[e];
                        }
                    }
                }
            }
        }
        for k in 0..classes {
            for c in 0..cols {
                let i = k * cols + c;
                let (pen, v) = if c < dim {
                    (spec.lambda, params.get(k, c))
                } else {
                    (RIDGE, params.get(k, c))
                };
                grad[i] += pen * v;
                hess[(i, i)] += pen;
            }
        }
        residual = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if residual < fit.grad_tolerance {
            return Ok(params);
        }
        let step = hess
            .clone()
            .cholesky()
            .map(|c| c.solve(&nalgebra::DVector::from_vec(grad.clone())))
            .ok_or(Error::NonFinite("logistic Hessian"))?;
        let current = objective(&params)?;
        let slope: f64 = grad.iter().zip(step.iter()).map(|(g, s)| g * s).sum();
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = params
                .as_slice()
                .iter()
                .zip(step.iter())
                .map(|(p, s)| p - t * s)
                .collect();
            let trial = ParameterVector::from_vec(classes, cols, trial)?;
            if objective(&trial)? <= current - 1e-4 * t * slope || t < 1e-10 {
                params = trial;
                break;
            }
            t *= 0.5;
        }
    }
    Err(Error::Convergence {
        what: "logistic regression fit",
        iterations: fit.max_iterations,
        residual,
    })
}

/// Random orthogonal map between learner and teacher feature spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    matrix: DMatrix<f64>,
}

impl FeatureMap {
    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Teacher features `P^T x` from learner features `x`.
    pub fn to_teacher(&self, learner: &[f64]) -> Vec<f64> {
        let x = nalgebra::DVector::from_column_slice(learner);
        (self.matrix.transpose() * x).iter().copied().collect()
    }

    /// Learner features `P x` from teacher features.
    pub fn to_learner(&self, teacher: &[f64]) -> Vec<f64> {
        let x = nalgebra::DVector::from_column_slice(teacher);
        (&self.matrix * x).iter().copied().collect()
    }

    /// Transports each weight row like a feature vector; bias unchanged.
    pub fn params_to_teacher(&self, learner: &ParameterVector) -> ParameterVector {
        self.map_params(learner, |row| self.to_teacher(row))
    }

    pub fn params_to_learner(&self, teacher: &ParameterVector) -> ParameterVector {
        self.map_params(teacher, |row| self.to_learner(row))
    }

    fn map_params(&self, p: &ParameterVector, f: impl Fn(&[f64]) -> Vec<f64>) -> ParameterVector {
        let d = self.dim();
        let mut out = Vec::with_capacity(p.len());
        for k in 0..p.rows() {
            let row = p.row(k);
            out.extend(f(&row[..d]));
            out.push(row[d]);
        }
        ParameterVector::from_vec(p.rows(), p.cols(), out).expect("same shape")
    }

    pub fn example_to_teacher(&self, ex: &TeachingExample) -> TeachingExample {
        TeachingExample::new(self.to_teacher(&ex.features), ex.label)
    }

    /// `max |P^T P - I|`
    pub fn orthogonality_error(&self) -> f64 {
        let d = self.dim();
        let prod = self.matrix.transpose() * &self.matrix;
        (prod - DMatrix::<f64>::identity(d, d)).amax()
    }
}

/// QR of a standard Gaussian matrix, with column signs fixed so that `R`
/// has a positive diagonal; this makes the result Haar-distributed.
pub fn make_feature_map<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<FeatureMap> {
    if dim == 0 {
        return Err(Error::config("feature dimension must be positive"));
    }
    let gauss = DMatrix::<f64>::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
    let qr = gauss.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(FeatureMap { matrix: q })
}

/// Header line of the feature file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureHeader {
    pub dim: usize,
    pub classes: usize,
    pub rows: usize,
}

/// Parses `# d=<d> K=<K> n=<n>` followed by `label,f1,...,fd` rows.
pub fn load_feature_dataset(path: &Path) -> Result<(FeatureHeader, Vec<TeachingExample>)> {
    let file = std::fs::File::open(path)?;
    read_feature_dataset(BufReader::new(file))
}

pub fn read_feature_dataset<R: BufRead>(reader: R) -> Result<(FeatureHeader, Vec<TeachingExample>)> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        let (i, line) = lines.next().ok_or(Error::Empty("feature file"))?;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        break parse_header(&line).ok_or_else(|| Error::Parse {
            line: i + 1,
            message: "expected header `# d=<d> K=<K> n=<n>`".into(),
        })?;
    };
    let mut examples = Vec::with_capacity(header.rows);
    let mut values = Vec::with_capacity(header.dim + 1);
    for (i, line) in lines {
        let line = line?;
        let line_no = i + 1;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        values.clear();
        for tok in text.split(',') {
            let v: f64 = tok.trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("not a number: `{}`", tok.trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "non-finite value".into(),
                });
            }
            values.push(v);
        }
        if values.len() != header.dim + 1 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} features, found {}", header.dim, values.len() - 1),
            });
        }
        let label = values[0];
        if !(label >= 0.0 && label.fract() == 0.0 && (label as usize) < header.classes) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("label {label} outside [0, {})", header.classes),
            });
        }
        examples.push(TeachingExample::new(values[1..].to_vec(), label));
    }
    if examples.len() != header.rows {
        return Err(Error::Shape {
            what: "feature file rows",
            expected: header.rows,
            found: examples.len(),
        });
    }
    Ok((header, examples))
}

fn parse_header(line: &str) -> Option<FeatureHeader> {
    let rest = line.trim().strip_prefix('#')?;
    let (mut d, mut k, mut n) = (None, None, None);
    for tok in rest.split_whitespace() {
        let (key, val) = tok.split_once('=')?;
        let val: usize = val.parse().ok()?;
        match key {
            "d" => d = Some(val),
            "K" => k = Some(val),
            "n" => n = Some(val),
            _ => return None,
        }
    }
    Some(FeatureHeader {
        dim: d?,
        classes: k?,
        rows: n?,
    })
}

pub fn write_feature_dataset<W: Write>(mut out: W, classes: usize, examples: &[TeachingExample]) -> Result<()> {
    let dim = examples.first().map_or(0, |e| e.dim());
    writeln!(out, "# d={dim} K={classes} n={}", examples.len())?;
    for ex in examples {
        write!(out, "{}", ex.label)?;
        for v in &ex.features {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn regression_is_deterministic_and_exact() {
        let (a, wa) = gen_regression(5, 40, 7).unwrap();
        let (b, wb) = gen_regression(5, 40, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(wa, wb);
        for ex in &a.examples {
            let y: f64 = ex.features.iter().zip(wa.as_slice()).map(|(x, w)| x * w).sum::<f64>() + wa.get(0, 5);
            assert_abs_diff_eq!(ex.label, y, epsilon = 1e-12);
            assert!(linmodel::loss_value(&a.spec, &wa, ex).unwrap() < 1e-24);
        }
    }

    #[test]
    fn classification_counts_and_separable_fit() {
        let task = SyntheticTask::GaussianClasses {
            dim: 5,
            classes: 3,
            samples: 90,
            variance: 0.5,
            center_scale: 10.0,
        };
        let (data, target) = gen_classification(&task, 3, &FitOptions::default()).unwrap();
        for k in 0..3 {
            assert_eq!(data.examples.iter().filter(|e| e.label == k as f64).count(), 30);
        }
        assert!(data.accuracy(&target).unwrap() >= 0.99);
        let (again, t2) = gen_classification(&task, 3, &FitOptions::default()).unwrap();
        assert_eq!(again, data);
        assert_eq!(t2, target);
    }

    #[test]
    fn invalid_tasks() {
        let bad = SyntheticTask::GaussianClasses {
            dim: 5,
            classes: 3,
            samples: 10,
            variance: 0.5,
            center_scale: 1.0,
        };
        assert!(gen_classification(&bad, 0, &FitOptions::default()).is_err());
        assert!(gen_regression(0, 10, 0).is_err());
    }

    #[test]
    fn feature_map_preserves_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let map = make_feature_map(6, &mut rng).unwrap();
        assert!(map.orthogonality_error() < 1e-10);
        let spec = LossSpec::cross_entropy(3, 0.0);
        let nu = crate::pedagogy::init_params(3, 7, &mut rng);
        let omega = map.params_to_teacher(&nu);
        let ex = TeachingExample::new(uniform_vec(&mut rng, 6), 1.0);
        let a = linmodel::logits(&spec, &nu, &ex).unwrap();
        let b = linmodel::logits(&spec, &omega, &map.example_to_teacher(&ex)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-10);
        }
        let back = map.params_to_learner(&omega);
        for (x, y) in back.as_slice().iter().zip(nu.as_slice()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
        let one = make_feature_map(1, &mut rng).unwrap();
        assert_abs_diff_eq!(one.matrix()[(0, 0)].abs(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn feature_file_round_trip_and_errors() {
        let examples = vec![
            TeachingExample::new(vec![0.5, -1.0], 0.0),
            TeachingExample::new(vec![1.25, 2.0], 2.0),
            TeachingExample::new(vec![3.0, 0.0], 1.0),
        ];
        let mut buf = Vec::new();
        write_feature_dataset(&mut buf, 3, &examples).unwrap();
        let (h, back) = read_feature_dataset(buf.as_slice()).unwrap();
        assert_eq!(
            h,
            FeatureHeader {
                dim: 2,
                classes: 3,
                rows: 3
            }
        );
        assert_eq!(back, examples);

        let bad_label = "# d=1 K=2 n=1\n2,0.5\n";
        assert!(matches!(
            read_feature_dataset(bad_label.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        let ragged = "# d=2 K=2 n=2\n0,1,2\n1,3\n";
        assert!(matches!(
            read_feature_dataset(ragged.as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
        let no_header = "0,1,2\n";
        assert!(read_feature_dataset(no_header.as_bytes()).is_err());
        let short = "# d=1 K=2 n=3\n0,1\n";
        assert!(matches!(
            read_feature_dataset(short.as_bytes()),
            Err(Error::Shape { .. })
        ));
    }
}
