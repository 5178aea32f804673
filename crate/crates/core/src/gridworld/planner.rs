use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use super::mdp::{Action, GridworldMdp, RewardParams};
use crate::error::{Error, Result};
use crate::linmodel::{log_sum_exp, softmax};

/// Soft value-iteration settings.
///
/// `max` over actions is replaced by `log(sum exp(k * q)) / k`, which tends to
/// the hard max as `k` grows and overshoots it by at most `log(|A|) / k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SoftPlanner {
    pub sharpness: f64,
    pub rationality: f64,
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for SoftPlanner {
    fn default() -> Self {
        Self {
            sharpness: 100.0,
            rationality: 5.0,
            tolerance: 1e-8,
            max_sweeps: 10_000,
        }
    }
}

impl SoftPlanner {
    pub fn validate(&self) -> Result<()> {
        if self.sharpness > 0.0 && self.rationality > 0.0 && self.tolerance > 0.0 && self.max_sweeps > 0 {
            Ok(())
        } else {
            Err(Error::config(
                "planner sharpness, rationality, tolerance and sweeps must be positive",
            ))
        }
    }

    pub fn soft_max(&self, q: &[f64]) -> f64 {
        let scaled: [f64; Action::COUNT] = std::array::from_fn(|a| self.sharpness * q[a]);
        log_sum_exp(&scaled) / self.sharpness
    }
}

/// Converged state-action values, row-major `|S| x |A|`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerSolution {
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub sweeps: usize,
    /// Max-abs change of `Q` after each sweep.
    pub residuals: Vec<f64>,
}

impl PlannerSolution {
    pub fn q_row(&self, s: usize) -> &[f64] {
        &self.q[s * Action::COUNT..(s + 1) * Action::COUNT]
    }

    pub fn num_states(&self) -> usize {
        self.v.len()
    }

    /// Lowest-index argmax action per state.
    pub fn greedy_actions(&self) -> Vec<Action> {
        (0..self.num_states())
            .map(|s| {
                let row = self.q_row(s);
                let mut best = 0;
                for a in 1..Action::COUNT {
                    if row[a] > row[best] {
                        best = a;
                    }
                }
                Action::ALL[best]
            })
            .collect()
    }
}

/// `R(s, a) = sum_s' P(s'|s,a) r(s')`
fn expected_rewards(mdp: &GridworldMdp, rewards: &[f64]) -> Vec<f64> {
    let n = mdp.num_states();
    let mut out = Vec::with_capacity(n * Action::COUNT);
    for s in 0..n {
        for a in Action::ALL {
            out.push(mdp.successors(s, a).iter().map(|&(t, p)| p * rewards[t]).sum());
        }
    }
    out
}

fn value_iteration(
    mdp: &GridworldMdp,
    params: &RewardParams,
    tolerance: f64,
    max_sweeps: usize,
    backup: impl Fn(&[f64]) -> f64,
) -> Result<PlannerSolution> {
    let rewards = mdp.rewards(params)?;
    let n = mdp.num_states();
    let gamma = mdp.discount();
    let base = expected_rewards(mdp, &rewards);
    let mut q = vec![0.0; n * Action::COUNT];
    let mut v = vec![0.0; n];
    let mut residuals = Vec::new();
    for sweep in 1..=max_sweeps {
        let mut change: f64 = 0.0;
        for s in 0..n {
            for a in Action::ALL {
                let idx = s * Action::COUNT + a.index();
                let next = base[idx] + gamma * mdp.successors(s, a).iter().map(|&(t, p)| p * v[t]).sum::<f64>();
                change = change.max((next - q[idx]).abs());
                q[idx] = next;
            }
        }
        // Jacobi sweep: values refresh only after all Q are updated.
        for s in 0..n {
            v[s] = backup(&q[s * Action::COUNT..(s + 1) * Action::COUNT]);
        }
        if !change.is_finite() {
            return Err(Error::NonFinite("value iteration"));
        }
        residuals.push(change);
        if change < tolerance {
            return Ok(PlannerSolution {
                q,
                v,
                sweeps: sweep,
                residuals,
            });
        }
    }
    Err(Error::Convergence {
        what: "value iteration",
        iterations: max_sweeps,
        residual: residuals.last().copied().unwrap_or(f64::INFINITY),
    })
}

/// Fixed point of `Q(s,a) = sum_s' P(s'|s,a) [r(s') + gamma * softmax_k Q(s', .)]`.
pub fn soft_value_iteration(
    mdp: &GridworldMdp,
    params: &RewardParams,
    planner: &SoftPlanner,
) -> Result<PlannerSolution> {
    planner.validate()?;
    value_iteration(mdp, params, planner.tolerance, planner.max_sweeps, |row| {
        planner.soft_max(row)
    })
}

/// Exact-max value iteration.
pub fn hard_value_iteration(
    mdp: &GridworldMdp,
    params: &RewardParams,
    tolerance: f64,
    max_sweeps: usize,
) -> Result<PlannerSolution> {
    value_iteration(mdp, params, tolerance, max_sweeps, |row| {
        row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    })
}

/// Action probabilities per state, row-major `|S| x |A|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub probs: Vec<f64>,
}

impl Policy {
    pub fn num_states(&self) -> usize {
        self.probs.len() / Action::COUNT
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * Action::COUNT..(s + 1) * Action::COUNT]
    }

    pub fn most_probable(&self) -> Vec<Action> {
        (0..self.num_states())
            .map(|s| {
                let row = self.row(s);
                let mut best = 0;
                for a in 1..Action::COUNT {
                    if row[a] > row[best] {
                        best = a;
                    }
                }
                Action::ALL[best]
            })
            .collect()
    }
}

/// `pi(a|s) ∝ exp(rationality * Q(s, a))`
pub fn boltzmann_policy(q: &[f64], rationality: f64) -> Policy {
    let probs = q
        .chunks_exact(Action::COUNT)
        .flat_map(|row| {
            let scaled: Vec<f64> = row.iter().map(|v| rationality * v).collect();
            softmax(&scaled)
        })
        .collect();
    Policy { probs }
}

/// Memoizes planner solutions per (reward bits, planner bits).
#[derive(Debug, Default)]
pub struct PlannerCache {
    entries: RwLock<HashMap<Vec<u64>, Arc<PlannerSolution>>>,
}

impl PlannerCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn key(mdp: &GridworldMdp, params: &RewardParams, planner: &SoftPlanner) -> Vec<u64> {
        let t = mdp.transition();
        let mut key: Vec<u64> = vec![
            mdp.width() as u64,
            mdp.height() as u64,
            mdp.discount().to_bits(),
            t.success.to_bits(),
            t.neighbor.to_bits(),
            t.terminate.to_bits(),
            planner.sharpness.to_bits(),
            planner.tolerance.to_bits(),
            planner.max_sweeps as u64,
        ];
        key.extend(mdp.encoding().iter().map(|&e| e as u64));
        key.extend(params.as_slice().iter().map(|v| v.to_bits()));
        key
    }

    pub fn solve(
        &self,
        mdp: &GridworldMdp,
        params: &RewardParams,
        planner: &SoftPlanner,
    ) -> Result<Arc<PlannerSolution>> {
        let key = Self::key(mdp, params, planner);
        if let Some(hit) = self.entries.read().get(&key) {
            return Ok(hit.clone());
        }
        let solved = Arc::new(soft_value_iteration(mdp, params, planner)?);
        self.entries.write().entry(key).or_insert_with(|| solved.clone());
        Ok(solved)
    }

    pub fn len(&self) -> usize {
        self.entries.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
