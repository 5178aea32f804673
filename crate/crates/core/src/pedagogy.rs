//! Teachers and learners.
//!
//! Teachers score each candidate in a mini-batch by its teaching volume and
//! pick one. Learners either take a plain gradient step on the chosen example
//! or, when teacher-aware, add the gradient of the log-probability that a
//! Boltzmann-rational teacher would have picked that example.
//!
//! Learner updates are generic over [`Objective`] so the same code drives the
//! linear losses and the gridworld IRL likelihood.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linmodel::{self, grad_sq_norm, logit_grad, loss_from_logits, LossSpec, ParameterVector, TeachingExample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherMode {
    OmniscientCooperative,
    FeedbackCooperative,
    Adversarial,
    Random,
}

impl std::str::FromStr for TeacherMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omniscient" | "omniscient_cooperative" => Ok(Self::OmniscientCooperative),
            "feedback" | "cooperative" | "feedback_cooperative" => Ok(Self::FeedbackCooperative),
            "adversarial" => Ok(Self::Adversarial),
            "random" => Ok(Self::Random),
            other => Err(Error::config(format!("unknown teacher mode `{other}`"))),
        }
    }
}

/// Pedagogy temperature `beta_t`. Negative values model an adversarial teacher.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaSchedule {
    Constant(f64),
    ExponentialDecay { initial: f64, rate: f64 },
}

impl BetaSchedule {
    pub fn at(&self, step: u64) -> f64 {
        match *self {
            BetaSchedule::Constant(b) => b,
            BetaSchedule::ExponentialDecay { initial, rate } => initial * (1.0 - rate).powf(step as f64),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BetaSchedule::Constant(b) if b.is_finite() => Ok(()),
            BetaSchedule::ExponentialDecay { initial, rate } if initial.is_finite() && (0.0..1.0).contains(&rate) => {
                Ok(())
            }
            _ => Err(Error::config("beta must be finite with decay rate in [0, 1)")),
        }
    }

    /// Same schedule with the sign of `beta_0` replaced.
    pub fn with_sign(self, negative: bool) -> Self {
        let fix = |b: f64| if negative { -b.abs() } else { b.abs() };
        match self {
            BetaSchedule::Constant(b) => BetaSchedule::Constant(fix(b)),
            BetaSchedule::ExponentialDecay { initial, rate } => BetaSchedule::ExponentialDecay {
                initial: fix(initial),
                rate,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearningRate {
    Constant(f64),
    /// `initial / (1 + decay * t)`
    InverseTime {
        initial: f64,
        decay: f64,
    },
}

impl LearningRate {
    pub fn at(&self, step: u64) -> f64 {
        match *self {
            LearningRate::Constant(eta) => eta,
            LearningRate::InverseTime { initial, decay } => initial / (1.0 + decay * step as f64),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LearningRate::Constant(eta) => eta > 0.0 && eta.is_finite(),
            LearningRate::InverseTime { initial, decay } => {
                initial > 0.0 && initial.is_finite() && decay >= 0.0 && decay.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config("learning rate must be positive and finite"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerState {
    pub params: ParameterVector,
    pub step: u64,
    pub learning_rate: LearningRate,
    pub beta: BetaSchedule,
    /// Size of the unchosen subset used for the expectation; 0 is a naive learner.
    pub subset_size: usize,
}

impl LearnerState {
    pub fn new(params: ParameterVector, eta: f64, beta: BetaSchedule, subset_size: usize) -> Self {
        Self {
            params,
            step: 0,
            learning_rate: LearningRate::Constant(eta),
            beta,
            subset_size,
        }
    }

    pub fn eta(&self) -> f64 {
        self.learning_rate.at(self.step)
    }

    pub fn beta_now(&self) -> f64 {
        self.beta.at(self.step)
    }

    fn advanced(&self, params: ParameterVector) -> Self {
        Self {
            params,
            step: self.step + 1,
            ..self.clone()
        }
    }
}

/// Uniform `[-1, 1]` initialization.
pub fn init_params<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ParameterVector {
    let v = (0..rows * cols).map(|_| rng.random_range(-1.0..=1.0)).collect();
    ParameterVector::from_vec(rows, cols, v).expect("shape by construction")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub chosen_index: usize,
    /// Learner-reported logits, one vector per batch element.
    pub feedback: Vec<Vec<f64>>,
    /// Teacher-side teaching volumes, one per batch element.
    pub volumes: Vec<f64>,
}

/// `-eta^2 * ||g||^2 + 2 * eta * gain`
#[inline]
pub fn volume_from_parts(eta: f64, grad_sq: f64, gain: f64) -> f64 {
    -eta * eta * grad_sq + 2.0 * eta * gain
}

/// Teaching volume of an omniscient teacher sharing the learner's representation.
pub fn teaching_volume_omniscient(
    spec: &LossSpec,
    prev: &ParameterVector,
    target: &ParameterVector,
    eta: f64,
    ex: &TeachingExample,
) -> Result<f64> {
    let g = linmodel::loss_grad(spec, prev, ex)?;
    let displacement = prev.sub(target)?;
    Ok(volume_from_parts(eta, grad_sq_norm(&g), displacement.dot(&g)?))
}

/// Teaching volume computed from the learner's reported logits only, using
/// the convexity bound in place of the displacement inner product.
pub fn teaching_volume_feedback(
    spec: &LossSpec,
    feedback: &[f64],
    ex: &TeachingExample,
    target: &ParameterVector,
    eta: f64,
) -> Result<f64> {
    let dz = logit_grad(spec, feedback, ex.label)?;
    // ||dz ⊗ [x; 1]||_F^2 = ||dz||^2 * (||x||^2 + 1)
    let x_sq: f64 = ex.features.iter().map(|v| v * v).sum::<f64>() + 1.0;
    let dz_sq: f64 = dz.iter().map(|v| v * v).sum();
    let learner_loss = loss_from_logits(spec, feedback, ex.label)?;
    let target_logits = linmodel::logits(spec, target, ex)?;
    let target_loss = loss_from_logits(spec, &target_logits, ex.label)?;
    Ok(volume_from_parts(eta, dz_sq * x_sq, learner_loss - target_loss))
}

/// Learner-side estimate of the teaching volume, with `hypothesis` standing in
/// for the teacher's unknown target.
pub fn estimated_teaching_volume(
    spec: &LossSpec,
    hypothesis: &ParameterVector,
    prev: &ParameterVector,
    eta: f64,
    ex: &TeachingExample,
) -> Result<f64> {
    let g = linmodel::loss_grad(spec, prev, ex)?;
    let gap = linmodel::loss_value(spec, prev, ex)? - linmodel::loss_value(spec, hypothesis, ex)?;
    Ok(volume_from_parts(eta, grad_sq_norm(&g), gap))
}

/// Teacher's pick. Ties resolve to the lowest index.
pub fn select_example<R: Rng + ?Sized>(volumes: &[f64], mode: TeacherMode, rng: &mut R) -> Result<usize> {
    if volumes.is_empty() {
        return Err(Error::Empty("teaching volumes"));
    }
    if volumes.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("teaching volumes"));
    }
    let pick = |better: fn(f64, f64) -> bool| {
        let mut best = 0;
        for (i, &v) in volumes.iter().enumerate().skip(1) {
            if better(v, volumes[best]) {
                best = i;
            }
        }
        best
    };
    Ok(match mode {
        TeacherMode::OmniscientCooperative | TeacherMode::FeedbackCooperative => pick(|a, b| a > b),
        TeacherMode::Adversarial => pick(|a, b| a < b),
        TeacherMode::Random => rng.random_range(0..volumes.len()),
    })
}

/// `softmax(beta * volumes)`.
pub fn selection_distribution(volumes: &[f64], beta: f64) -> Vec<f64> {
    if beta == 0.0 {
        return vec![1.0 / volumes.len() as f64; volumes.len()];
    }
    let scaled: Vec<f64> = volumes.iter().map(|v| beta * v).collect();
    linmodel::softmax(&scaled)
}

/// A differentiable per-example loss over a parameter matrix.
pub trait Objective {
    type Example;

    /// Loss and gradient at `params` for `batch[i]`, `i` in `which`, in that order.
    fn evaluate(&self, params: &ParameterVector, batch: &[Self::Example], which: &[usize]) -> Result<Vec<LossGrad>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: ParameterVector,
}

#[derive(Debug, Clone, Copy)]
pub struct LinearObjective {
    pub spec: LossSpec,
}

impl Objective for LinearObjective {
    type Example = TeachingExample;

    fn evaluate(&self, params: &ParameterVector, batch: &[TeachingExample], which: &[usize]) -> Result<Vec<LossGrad>> {
        which
            .iter()
            .map(|&i| {
                let ex = batch.get(i).ok_or(Error::InvalidIndex {
                    index: i,
                    len: batch.len(),
                })?;
                Ok(LossGrad {
                    loss: linmodel::loss_value(&self.spec, params, ex)?,
                    grad: linmodel::loss_grad(&self.spec, params, ex)?,
                })
            })
            .collect()
    }
}

/// Plain gradient step on one example.
pub fn naive_step<O: Objective>(
    objective: &O,
    state: &LearnerState,
    batch: &[O::Example],
    chosen: usize,
) -> Result<LearnerState> {
    let lg = objective.evaluate(&state.params, batch, &[chosen])?;
    let next = state.params.step(state.eta(), &lg[0].grad)?;
    Ok(state.advanced(next))
}

/// Step along the mean gradient of the whole batch.
pub fn batch_step<O: Objective>(objective: &O, state: &LearnerState, batch: &[O::Example]) -> Result<LearnerState> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let which: Vec<usize> = (0..batch.len()).collect();
    let all = objective.evaluate(&state.params, batch, &which)?;
    let mut mean = ParameterVector::zeros(state.params.rows(), state.params.cols());
    for lg in &all {
        mean.axpy(1.0, &lg.grad)?;
    }
    mean.scale(1.0 / batch.len() as f64);
    let next = state.params.step(state.eta(), &mean)?;
    Ok(state.advanced(next))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItalDiagnostics {
    /// Batch indices making up the support of `q`; the chosen index comes first.
    pub support: Vec<usize>,
    pub estimated_volumes: Vec<f64>,
    pub q: Vec<f64>,
    pub beta: f64,
    /// Parameters after the plain step, where the correction is evaluated.
    pub intermediate: ParameterVector,
    pub chosen_grad: ParameterVector,
    pub expected_grad: ParameterVector,
    /// What was added to the intermediate parameters.
    pub correction: ParameterVector,
}

fn validate_support(len: usize, chosen: usize, subset: &[usize]) -> Result<Vec<usize>> {
    if chosen >= len {
        return Err(Error::InvalidIndex { index: chosen, len });
    }
    let mut seen = vec![false; len];
    seen[chosen] = true;
    let mut support = Vec::with_capacity(subset.len() + 1);
    support.push(chosen);
    for &i in subset {
        if i >= len || seen[i] {
            return Err(Error::InvalidIndex { index: i, len });
        }
        seen[i] = true;
        support.push(i);
    }
    Ok(support)
}

/// Teacher-aware update on the chosen example.
///
/// First a plain step to `nu_hat = nu - eta * g_chosen(nu)`, then the
/// selection-likelihood correction evaluated at `nu_hat`:
/// `nu' = nu_hat - 2 beta eta^2 (g_chosen(nu_hat) - E_q[g(nu_hat)])`,
/// where `q` is the softmax of `beta` times the estimated teaching volumes
/// `TV_{nu_hat}(. | nu)` over the chosen example and `subset`.
pub fn ital_step<O: Objective>(
    objective: &O,
    state: &LearnerState,
    batch: &[O::Example],
    chosen: usize,
    subset: &[usize],
) -> Result<(LearnerState, ItalDiagnostics)> {
    let support = validate_support(batch.len(), chosen, subset)?;
    let eta = state.eta();
    let beta = state.beta_now();

    let at_prev = objective.evaluate(&state.params, batch, &support)?;
    let intermediate = state.params.step(eta, &at_prev[0].grad)?;
    let at_hat = objective.evaluate(&intermediate, batch, &support)?;

    let estimated_volumes: Vec<f64> = at_prev
        .iter()
        .zip(&at_hat)
        .map(|(p, h)| volume_from_parts(eta, grad_sq_norm(&p.grad), p.loss - h.loss))
        .collect();
    if estimated_volumes.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("estimated teaching volumes"));
    }
    let q = selection_distribution(&estimated_volumes, beta);

    let chosen_grad = at_hat[0].grad.clone();
    let mut expected_grad = ParameterVector::zeros(chosen_grad.rows(), chosen_grad.cols());
    for (w, lg) in q.iter().zip(&at_hat) {
        expected_grad.axpy(*w, &lg.grad)?;
    }
    let mut correction = chosen_grad.sub(&expected_grad)?;
    correction.scale(-2.0 * beta * eta * eta);

    let mut next = intermediate.clone();
    next.axpy(1.0, &correction)?;
    if !next.is_finite() {
        return Err(Error::NonFinite("teacher-aware update"));
    }
    Ok((
        state.advanced(next),
        ItalDiagnostics {
            support,
            estimated_volumes,
            q,
            beta,
            intermediate,
            chosen_grad,
            expected_grad,
            correction,
        },
    ))
}

/// `M` distinct unchosen indices, uniformly without replacement.
pub fn sample_subset<R: Rng + ?Sized>(len: usize, chosen: usize, size: usize, rng: &mut R) -> Vec<usize> {
    let pool: Vec<usize> = (0..len).filter(|&i| i != chosen).collect();
    let size = size.min(pool.len());
    rand::seq::index::sample(rng, pool.len(), size)
        .into_iter()
        .map(|k| pool[k])
        .collect()
}

pub fn naive_update(spec: &LossSpec, state: &LearnerState, ex: &TeachingExample) -> Result<LearnerState> {
    naive_step(&LinearObjective { spec: *spec }, state, std::slice::from_ref(ex), 0)
}

pub fn batch_update(spec: &LossSpec, state: &LearnerState, batch: &[TeachingExample]) -> Result<LearnerState> {
    batch_step(&LinearObjective { spec: *spec }, state, batch)
}

pub fn ital_update(
    spec: &LossSpec,
    state: &LearnerState,
    batch: &[TeachingExample],
    chosen: usize,
    subset: &[usize],
) -> Result<(LearnerState, ItalDiagnostics)> {
    ital_step(&LinearObjective { spec: *spec }, state, batch, chosen, subset)
}

/// `log q_nu(chosen | prev, batch)` built from the estimated volumes.
pub fn log_selection_prob(
    spec: &LossSpec,
    batch: &[TeachingExample],
    chosen: usize,
    nu: &ParameterVector,
    prev: &ParameterVector,
    eta: f64,
    beta: f64,
) -> Result<f64> {
    let volumes = batch
        .iter()
        .map(|ex| estimated_teaching_volume(spec, nu, prev, eta, ex))
        .collect::<Result<Vec<_>>>()?;
    let scaled: Vec<f64> = volumes.iter().map(|v| beta * v).collect();
    Ok(scaled[chosen] - linmodel::log_sum_exp(&scaled))
}

/// Analytic `d log q_nu / d nu = -2 beta eta (g_chosen(nu) - E_q[g(nu)])`.
pub fn log_selection_prob_grad(
    spec: &LossSpec,
    batch: &[TeachingExample],
    chosen: usize,
    nu: &ParameterVector,
    prev: &ParameterVector,
    eta: f64,
    beta: f64,
) -> Result<ParameterVector> {
    if chosen >= batch.len() {
        return Err(Error::InvalidIndex {
            index: chosen,
            len: batch.len(),
        });
    }
    let volumes = batch
        .iter()
        .map(|ex| estimated_teaching_volume(spec, nu, prev, eta, ex))
        .collect::<Result<Vec<_>>>()?;
    let q = selection_distribution(&volumes, beta);
    let grads = batch
        .iter()
        .map(|ex| linmodel::loss_grad(spec, nu, ex))
        .collect::<Result<Vec<_>>>()?;
    let mut expected = ParameterVector::zeros(nu.rows(), nu.cols());
    for (w, g) in q.iter().zip(&grads) {
        expected.axpy(*w, g)?;
    }
    let mut out = grads[chosen].sub(&expected)?;
    out.scale(-2.0 * beta * eta);
    Ok(out)
}

/// Norm-wise relative error `||a - b|| / max(||a||, ||b||)`; 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Relative error between the analytic gradient of `log q` and a central
/// finite difference with step `1e-5`.
pub fn log_q_grad_check(
    spec: &LossSpec,
    batch: &[TeachingExample],
    chosen: usize,
    nu: &ParameterVector,
    prev: &ParameterVector,
    eta: f64,
    beta: f64,
) -> Result<f64> {
    const STEP: f64 = 1e-5;
    let analytic = log_selection_prob_grad(spec, batch, chosen, nu, prev, eta, beta)?;
    let mut numeric = vec![0.0; nu.len()];
    let mut probe = nu.clone();
    for (i, slot) in numeric.iter_mut().enumerate() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + STEP;
        let up = log_selection_prob(spec, batch, chosen, &probe, prev, eta, beta)?;
        probe.as_mut_slice()[i] = orig - STEP;
        let down = log_selection_prob(spec, batch, chosen, &probe, prev, eta, beta)?;
        probe.as_mut_slice()[i] = orig;
        *slot = (up - down) / (2.0 * STEP);
    }
    Ok(relative_error(analytic.as_slice(), &numeric))
}
