//! Gridworld MDPs, soft value iteration and Boltzmann-likelihood IRL.

pub mod irl;
pub mod maps;
pub mod mdp;
pub mod metrics;
pub mod planner;
pub mod teaching;

pub use irl::{bellman_gradient, irl_loss_and_grad, IrlModel, IrlObjective, QJacobian};
pub use maps::{make_map, HumanMap, MapGrid, MapKind};
pub use mdp::{Action, Demonstration, GridworldMdp, RewardParams, TransitionSpec};
pub use metrics::{expected_return, policy_total_variation};
pub use planner::{
    boltzmann_policy, hard_value_iteration, soft_value_iteration, PlannerCache, PlannerSolution, Policy, SoftPlanner,
};
pub use teaching::{irl_teaching_round, sample_demonstrations, IrlRound, IrlTeacher, IrlUpdate};
