//! Boltzmann-likelihood IRL on a gridworld.
//!
//! The demonstrator picks `a` in `s` with probability `∝ exp(alpha * Q(s,a))`
//! where `Q` comes from soft value iteration on the reward parameters. The
//! loss of a demonstration is its negative log-likelihood; its gradient with
//! respect to the per-grid rewards goes through the Bellman gradient
//! recursion
//!
//! ```text
//! dV(s)   = sum_a softmax_k(Q(s, .))_a * dQ(s, a)
//! dQ(s,a) = sum_s' P(s'|s,a) * (e_s' + gamma * dV(s'))
//! ```
//!
//! iterated to a fixed point.

use std::sync::Arc;

use super::mdp::{Action, Demonstration, GridworldMdp, RewardParams};
use super::planner::{boltzmann_policy, soft_value_iteration, PlannerSolution, Policy, SoftPlanner};
use crate::error::{Error, Result};
use crate::linmodel::{softmax, ParameterVector};
use crate::pedagogy::{LossGrad, Objective};

/// `dQ(s, a) / dr(g)` for every physical grid `g`: `(|S| |A|) x |S|`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct QJacobian {
    states: usize,
    values: Vec<f64>,
    pub sweeps: usize,
}

impl QJacobian {
    pub fn row(&self, s: usize, a: Action) -> &[f64] {
        let r = s * Action::COUNT + a.index();
        &self.values[r * self.states..(r + 1) * self.states]
    }
}

/// Bellman gradient iteration from `dV = 0`, stopping once the max-abs
/// change of `dQ` drops below the planner tolerance.
pub fn bellman_gradient(mdp: &GridworldMdp, solution: &PlannerSolution, planner: &SoftPlanner) -> Result<QJacobian> {
    let n = mdp.num_states();
    let gamma = mdp.discount();
    let rows = n * Action::COUNT;

    // Softmax weights of the soft backup, per state.
    let weights: Vec<f64> = (0..n)
        .flat_map(|s| {
            let scaled: Vec<f64> = solution.q_row(s).iter().map(|q| planner.sharpness * q).collect();
            softmax(&scaled)
        })
        .collect();

    // Constant part: sum_s' P(s'|s,a) e_s'.
    let mut base = vec![0.0; rows * n];
    for s in 0..n {
        for a in Action::ALL {
            let r = s * Action::COUNT + a.index();
            for &(t, p) in mdp.successors(s, a) {
                base[r * n + t] += p;
            }
        }
    }

    let mut dq = base.clone();
    let mut dv = vec![0.0; n * n];
    for sweep in 1..=planner.max_sweeps {
        for s in 0..n {
            let out = &mut dv[s * n..(s + 1) * n];
            out.iter_mut().for_each(|v| *v = 0.0);
            for a in 0..Action::COUNT {
                let w = weights[s * Action::COUNT + a];
                let r = s * Action::COUNT + a;
                for (o, d) in out.iter_mut().zip(&dq[r * n..(r + 1) * n]) {
                    *o += w * d;
                }
            }
        }
        let mut change: f64 = 0.0;
        for s in 0..n {
            for a in Action::ALL {
                let r = s * Action::COUNT + a.index();
                let row = &mut dq[r * n..(r + 1) * n];
                let mut next = base[r * n..(r + 1) * n].to_vec();
                for &(t, p) in mdp.successors(s, a) {
                    let scale = gamma * p;
                    for (x, d) in next.iter_mut().zip(&dv[t * n..(t + 1) * n]) {
                        *x += scale * d;
                    }
                }
                for (old, new) in row.iter_mut().zip(next) {
                    change = change.max((new - *old).abs());
                    *old = new;
                }
            }
        }
        if !change.is_finite() {
            return Err(Error::NonFinite("Bellman gradient"));
        }
        if change < planner.tolerance {
            return Ok(QJacobian {
                states: n,
                values: dq,
                sweeps: sweep,
            });
        }
    }
    Err(Error::Convergence {
        what: "Bellman gradient iteration",
        iterations: planner.max_sweeps,
        residual: f64::NAN,
    })
}

/// Planner output plus everything needed to score demonstrations.
#[derive(Debug, Clone)]
pub struct IrlModel {
    pub solution: Arc<PlannerSolution>,
    pub policy: Policy,
    jacobian: Option<QJacobian>,
    encoding: Vec<usize>,
    rationality: f64,
}

impl IrlModel {
    /// Solves the planner and the Bellman gradient.
    pub fn new(mdp: &GridworldMdp, params: &RewardParams, planner: &SoftPlanner) -> Result<Self> {
        let solution = Arc::new(soft_value_iteration(mdp, params, planner)?);
        Self::from_solution(mdp, solution, planner, true)
    }

    /// Planner only; `loss` works, `grad` does not.
    pub fn without_gradient(mdp: &GridworldMdp, params: &RewardParams, planner: &SoftPlanner) -> Result<Self> {
        let solution = Arc::new(soft_value_iteration(mdp, params, planner)?);
        Self::from_solution(mdp, solution, planner, false)
    }

    pub fn from_solution(
        mdp: &GridworldMdp,
        solution: Arc<PlannerSolution>,
        planner: &SoftPlanner,
        with_gradient: bool,
    ) -> Result<Self> {
        let jacobian = if with_gradient {
            Some(bellman_gradient(mdp, &solution, planner)?)
        } else {
            None
        };
        Ok(Self {
            policy: boltzmann_policy(&solution.q, planner.rationality),
            solution,
            jacobian,
            encoding: mdp.encoding().to_vec(),
            rationality: planner.rationality,
        })
    }

    /// Boltzmann logits `alpha * Q(s, .)`.
    pub fn action_logits(&self, s: usize) -> Vec<f64> {
        self.solution.q_row(s).iter().map(|q| self.rationality * q).collect()
    }

    /// `-log pi(a|s)`.
    pub fn loss(&self, demo: &Demonstration) -> Result<f64> {
        if demo.state >= self.solution.num_states() {
            return Err(Error::InvalidIndex {
                index: demo.state,
                len: self.solution.num_states(),
            });
        }
        let z = self.action_logits(demo.state);
        let v = crate::linmodel::log_sum_exp(&z) - z[demo.action.index()];
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("IRL loss"))
        }
    }

    /// Gradient of `loss` with respect to the encoded reward parameters.
    pub fn grad(&self, demo: &Demonstration) -> Result<RewardParams> {
        let jac = self
            .jacobian
            .as_ref()
            .ok_or(Error::config("IRL model built without gradient"))?;
        let n = self.solution.num_states();
        if demo.state >= n {
            return Err(Error::InvalidIndex {
                index: demo.state,
                len: n,
            });
        }
        let pi = self.policy.row(demo.state);
        // -alpha * (dQ(s,a) - sum_a' pi(a'|s) dQ(s,a'))
        let mut physical: Vec<f64> = jac.row(demo.state, demo.action).to_vec();
        for a in Action::ALL {
            let w = pi[a.index()];
            for (x, d) in physical.iter_mut().zip(jac.row(demo.state, a)) {
                *x -= w * d;
            }
        }
        let mut encoded = vec![0.0; n];
        for (g, &e) in self.encoding.iter().enumerate() {
            encoded[e] = -self.rationality * physical[g];
        }
        let out = ParameterVector::row_vector(encoded);
        if out.is_finite() {
            Ok(out)
        } else {
            Err(Error::NonFinite("IRL gradient"))
        }
    }
}

pub fn irl_loss_and_grad(
    mdp: &GridworldMdp,
    params: &RewardParams,
    planner: &SoftPlanner,
    demo: &Demonstration,
) -> Result<(f64, RewardParams)> {
    mdp.check_demo(demo)?;
    let model = IrlModel::new(mdp, params, planner)?;
    Ok((model.loss(demo)?, model.grad(demo)?))
}

/// IRL negative log-likelihood as a learner objective.
#[derive(Debug, Clone)]
pub struct IrlObjective<'a> {
    pub mdp: &'a GridworldMdp,
    pub planner: SoftPlanner,
}

impl Objective for IrlObjective<'_> {
    type Example = Demonstration;

    fn evaluate(&self, params: &ParameterVector, batch: &[Demonstration], which: &[usize]) -> Result<Vec<LossGrad>> {
        let model = IrlModel::new(self.mdp, params, &self.planner)?;
        which
            .iter()
            .map(|&i| {
                let demo = batch.get(i).ok_or(Error::InvalidIndex {
                    index: i,
                    len: batch.len(),
                })?;
                Ok(LossGrad {
                    loss: model.loss(demo)?,
                    grad: model.grad(demo)?,
                })
            })
            .collect()
    }
}
