use rand::Rng;

use super::irl::{IrlModel, IrlObjective};
use super::mdp::{Demonstration, GridworldMdp, RewardParams};
use super::planner::{Policy, SoftPlanner};
use crate::error::{Error, Result};
use crate::pedagogy::{
    self, ital_step, naive_step, volume_from_parts, ItalDiagnostics, LearnerState, SelectionRecord, TeacherMode,
};

/// A machine teacher for gridworld IRL, holding the true rewards in her own
/// (possibly shuffled) encoding.
#[derive(Debug, Clone)]
pub struct IrlTeacher {
    mdp: GridworldMdp,
    target: RewardParams,
    planner: SoftPlanner,
    target_model: IrlModel,
}

impl IrlTeacher {
    pub fn new(mdp: GridworldMdp, target: RewardParams, planner: SoftPlanner) -> Result<Self> {
        let target_model = IrlModel::without_gradient(&mdp, &target, &planner)?;
        Ok(Self {
            mdp,
            target,
            planner,
            target_model,
        })
    }

    pub fn mdp(&self) -> &GridworldMdp {
        &self.mdp
    }

    pub fn target(&self) -> &RewardParams {
        &self.target
    }

    pub fn planner(&self) -> &SoftPlanner {
        &self.planner
    }

    /// Boltzmann policy under the true rewards.
    pub fn policy(&self) -> &Policy {
        &self.target_model.policy
    }

    pub fn target_model(&self) -> &IrlModel {
        &self.target_model
    }

    /// Teaching volume of every candidate, from the learner's reported
    /// per-grid estimates (in the learner's encoding).
    ///
    /// Returns the volumes and the Boltzmann logits `alpha * Q(s, .)` the
    /// teacher derived for each candidate.
    pub fn volumes(
        &self,
        mode: TeacherMode,
        learner_mdp: &GridworldMdp,
        reported: &RewardParams,
        eta: f64,
        batch: &[Demonstration],
    ) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let mirrored = self.mdp.translate(learner_mdp, reported)?;
        let model = IrlModel::new(&self.mdp, &mirrored, &self.planner)?;
        let displacement = mirrored.sub(&self.target)?;
        let mut volumes = Vec::with_capacity(batch.len());
        let mut feedback = Vec::with_capacity(batch.len());
        for demo in batch {
            self.mdp.check_demo(demo)?;
            let g = model.grad(demo)?;
            let gain = match mode {
                TeacherMode::OmniscientCooperative => displacement.dot(&g)?,
                _ => model.loss(demo)? - self.target_model.loss(demo)?,
            };
            volumes.push(volume_from_parts(eta, g.sq_norm(), gain));
            feedback.push(model.action_logits(demo.state));
        }
        Ok((volumes, feedback))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrlUpdate {
    Naive,
    /// Teacher-aware, with `state.subset_size` sampled alternatives.
    Aware,
}

#[derive(Debug, Clone)]
pub struct IrlRound {
    pub state: LearnerState,
    pub record: SelectionRecord,
    pub diagnostics: Option<ItalDiagnostics>,
}

/// One round: the learner reports his estimates, the teacher scores the
/// candidates and picks one, the learner updates.
#[allow(clippy::too_many_arguments)]
pub fn irl_teaching_round<R: Rng + ?Sized>(
    teacher: &IrlTeacher,
    learner_mdp: &GridworldMdp,
    state: &LearnerState,
    batch: &[Demonstration],
    mode: TeacherMode,
    update: IrlUpdate,
    select_rng: &mut R,
    subset_rng: &mut R,
) -> Result<IrlRound> {
    if !learner_mdp.same_world(teacher.mdp()) {
        return Err(Error::Permutation("teacher and learner worlds differ".into()));
    }
    let (volumes, feedback) = teacher.volumes(mode, learner_mdp, &state.params, state.eta(), batch)?;
    let chosen = pedagogy::select_example(&volumes, mode, select_rng)?;
    let objective = IrlObjective {
        mdp: learner_mdp,
        planner: *teacher.planner(),
    };
    let (next, diagnostics) = match update {
        IrlUpdate::Naive => (naive_step(&objective, state, batch, chosen)?, None),
        IrlUpdate::Aware => {
            let subset = pedagogy::sample_subset(batch.len(), chosen, state.subset_size, subset_rng);
            let (s, d) = ital_step(&objective, state, batch, chosen, &subset)?;
            (s, Some(d))
        }
    };
    Ok(IrlRound {
        state: next,
        record: SelectionRecord {
            chosen_index: chosen,
            feedback,
            volumes,
        },
        diagnostics,
    })
}

/// `count` distinct `(s, a)` pairs drawn uniformly from `|S| x |A|`.
pub fn sample_demonstrations<R: Rng + ?Sized>(mdp: &GridworldMdp, count: usize, rng: &mut R) -> Vec<Demonstration> {
    use super::mdp::Action;
    let total = mdp.num_states() * Action::COUNT;
    rand::seq::index::sample(rng, total, count.min(total))
        .into_iter()
        .map(|k| Demonstration::new(k / Action::COUNT, Action::ALL[k % Action::COUNT]))
        .collect()
}
