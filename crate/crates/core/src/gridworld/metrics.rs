use nalgebra::{DMatrix, DVector};

use super::mdp::{Action, GridworldMdp, RewardParams};
use super::planner::Policy;
use crate::error::{Error, Result};

/// Mean over states of half the L1 distance between action distributions.
pub fn policy_total_variation(a: &Policy, b: &Policy) -> Result<f64> {
    if a.probs.len() != b.probs.len() || a.probs.is_empty() {
        return Err(Error::Shape {
            what: "policy",
            expected: a.probs.len(),
            found: b.probs.len(),
        });
    }
    let n = a.num_states();
    let total: f64 = (0..n)
        .map(|s| 0.5 * a.row(s).iter().zip(b.row(s)).map(|(x, y)| (x - y).abs()).sum::<f64>())
        .sum();
    Ok(total / n as f64)
}

/// Exact policy evaluation `V = R_pi + gamma P_pi V`; mean of `V` over a
/// uniform start state. Termination mass leaves to a zero-value sink.
pub fn expected_return(mdp: &GridworldMdp, params: &RewardParams, policy: &Policy) -> Result<f64> {
    let values = policy_values(mdp, params, policy)?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

pub fn policy_values(mdp: &GridworldMdp, params: &RewardParams, policy: &Policy) -> Result<Vec<f64>> {
    let n = mdp.num_states();
    if policy.probs.len() != n * Action::COUNT {
        return Err(Error::Shape {
            what: "policy",
            expected: n * Action::COUNT,
            found: policy.probs.len(),
        });
    }
    for s in 0..n {
        let row = policy.row(s);
        if row.iter().any(|p| p.is_nan() || *p < 0.0) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config("policy rows must be probability vectors"));
        }
    }
    let rewards = mdp.rewards(params)?;
    let gamma = mdp.discount();
    let mut system = DMatrix::<f64>::identity(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for s in 0..n {
        for a in Action::ALL {
            let pa = policy.row(s)[a.index()];
            if pa == 0.0 {
                continue;
            }
            for &(t, p) in mdp.successors(s, a) {
                rhs[s] += pa * p * rewards[t];
                system[(s, t)] -= gamma * pa * p;
            }
        }
    }
    let solved = system
        .lu()
        .solve(&rhs)
        .ok_or(Error::NonFinite("singular policy-evaluation system"))?;
    Ok(solved.iter().copied().collect())
}
