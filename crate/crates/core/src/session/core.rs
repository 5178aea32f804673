use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{
    self, hard_value_iteration, Action, Demonstration, GridworldMdp, HumanMap, IrlModel, IrlObjective, IrlTeacher,
    MapGrid, RewardParams, SoftPlanner, TransitionSpec,
};
use crate::harness::{stream_rng, Stream};
use crate::pedagogy::{self, ital_step, naive_step, BetaSchedule, LearnerState, TeacherMode};

pub const CANDIDATES: usize = 10;
pub const DEFAULT_BETA: f64 = 30000.0;
pub const DEFAULT_ETA: f64 = 1e-3;
pub const DEFAULT_STEP_CAP: usize = 40;
pub const DISPLAY_CLIP: f64 = 2.0;

/// Stream id for candidate sampling, disjoint from the harness streams.
const CANDIDATE_STREAM: u64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionLearner {
    Naive,
    #[serde(alias = "teacher_aware", alias = "ital")]
    Aware,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub map_id: String,
    pub map: MapGrid,
    pub learner_kind: SessionLearner,
    pub beta: f64,
    pub eta: f64,
    pub seed: u64,
    pub step_cap: usize,
    pub discount: f64,
    pub planner: SoftPlanner,
    /// Initial reward estimates, fixed at creation so paired sessions and
    /// replays start from the same point.
    pub init: Vec<f64>,
}

impl SessionConfig {
    /// Built-in map by id (`A`..`E`) with defaults and a seeded start.
    pub fn for_map(map_id: &str, learner_kind: SessionLearner, seed: u64) -> Result<Self> {
        let map = HumanMap::from_id(map_id)
            .ok_or_else(|| Error::NotFound(format!("map `{map_id}`")))?
            .map();
        Ok(Self::custom(map_id.to_ascii_uppercase(), map, learner_kind, seed))
    }

    pub fn custom(map_id: String, map: MapGrid, learner_kind: SessionLearner, seed: u64) -> Self {
        let n = map.rewards.len();
        let init = pedagogy::init_params(1, n, &mut stream_rng(seed, Stream::Init)).into_vec();
        Self {
            map_id,
            map,
            learner_kind,
            beta: DEFAULT_BETA,
            eta: DEFAULT_ETA,
            seed,
            step_cap: DEFAULT_STEP_CAP,
            discount: 0.5,
            planner: SoftPlanner::default(),
            init,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.map.rewards.len() != self.map.width * self.map.height || self.map.rewards.len() < CANDIDATES {
            return Err(Error::config("session maps need at least 10 grids"));
        }
        if self.init.len() != self.map.rewards.len() || self.init.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("initial estimates must be finite, one per grid"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) || !self.beta.is_finite() {
            return Err(Error::config("eta must be positive and beta finite"));
        }
        if self.step_cap == 0 {
            return Err(Error::config("step cap must be at least 1"));
        }
        self.planner.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateArrow {
    pub index: usize,
    pub state: usize,
    pub row: usize,
    pub col: usize,
    pub action: Action,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPoint {
    pub step: usize,
    pub distance: f64,
    pub policy_tv: f64,
    pub expected_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub map_id: String,
    pub learner_kind: SessionLearner,
    pub beta: f64,
    pub step: usize,
    pub step_cap: usize,
    pub finished: bool,
    pub width: usize,
    pub height: usize,
    /// The map the teacher is teaching, row-major.
    pub ground_truth: Vec<f64>,
    pub estimates: Vec<f64>,
    /// `estimates` clipped for colour mapping.
    pub display_estimates: Vec<f64>,
    /// Most probable action of the learner in every grid.
    pub policy_arrows: Vec<Action>,
    /// Empty once the session has finished.
    pub candidates: Vec<CandidateArrow>,
    pub metrics: MetricPoint,
}

/// One interactive teaching run on a gridworld map.
#[derive(Debug, Clone)]
pub struct TeachingSession {
    id: String,
    config: SessionConfig,
    mdp: GridworldMdp,
    truth: RewardParams,
    teacher: IrlTeacher,
    optimal: Vec<Action>,
    state: LearnerState,
    candidate_rng: ChaCha8Rng,
    candidates: Vec<Demonstration>,
    metrics: Vec<MetricPoint>,
    selections: Vec<usize>,
    finished: bool,
}

impl TeachingSession {
    pub fn new(id: impl Into<String>, config: SessionConfig) -> Result<Self> {
        config.validate()?;
        let mdp = GridworldMdp::new(
            config.map.width,
            config.map.height,
            TransitionSpec::PAPER,
            config.discount,
        )?;
        let truth = mdp.encode(&config.map.rewards)?;
        let teacher = IrlTeacher::new(mdp.clone(), truth.clone(), config.planner)?;
        let optimal =
            hard_value_iteration(&mdp, &truth, config.planner.tolerance, config.planner.max_sweeps)?.greedy_actions();
        let beta = match config.learner_kind {
            SessionLearner::Naive => BetaSchedule::Constant(0.0),
            SessionLearner::Aware => BetaSchedule::Constant(config.beta),
        };
        let subset = match config.learner_kind {
            SessionLearner::Naive => 0,
            SessionLearner::Aware => CANDIDATES - 1,
        };
        let state = LearnerState::new(RewardParams::row_vector(config.init.clone()), config.eta, beta, subset);
        let mut candidate_rng = stream_rng(config.seed, Stream::Data);
        candidate_rng.set_stream(CANDIDATE_STREAM);
        let mut session = Self {
            id: id.into(),
            config,
            mdp,
            truth,
            teacher,
            optimal,
            state,
            candidate_rng,
            candidates: Vec::new(),
            metrics: Vec::new(),
            selections: Vec::new(),
            finished: false,
        };
        session.metrics.push(session.measure()?);
        session.draw_candidates();
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn mdp(&self) -> &GridworldMdp {
        &self.mdp
    }

    pub fn teacher(&self) -> &IrlTeacher {
        &self.teacher
    }

    pub fn step(&self) -> usize {
        self.state.step as usize
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn params(&self) -> &RewardParams {
        &self.state.params
    }

    pub fn metrics(&self) -> &[MetricPoint] {
        &self.metrics
    }

    pub fn selections(&self) -> &[usize] {
        &self.selections
    }

    pub fn candidates(&self) -> &[Demonstration] {
        &self.candidates
    }

    /// Ground-truth greedy action per grid.
    pub fn optimal_actions(&self) -> &[Action] {
        &self.optimal
    }

    pub fn candidate_arrows(&self) -> Vec<CandidateArrow> {
        let w = self.config.map.width;
        self.candidates
            .iter()
            .enumerate()
            .map(|(index, d)| CandidateArrow {
                index,
                state: d.state,
                row: d.state / w,
                col: d.state % w,
                action: d.action,
            })
            .collect()
    }

    fn draw_candidates(&mut self) {
        let n = self.mdp.num_states();
        self.candidates = sample(&mut self.candidate_rng, n, CANDIDATES.min(n))
            .into_iter()
            .map(|s| Demonstration::new(s, self.optimal[s]))
            .collect();
    }

    fn measure(&self) -> Result<MetricPoint> {
        let model = IrlModel::without_gradient(&self.mdp, &self.state.params, &self.config.planner)?;
        Ok(MetricPoint {
            step: self.step(),
            distance: self.state.params.distance(&self.truth)?,
            policy_tv: gridworld::policy_total_variation(&model.policy, self.teacher.policy())?,
            expected_return: gridworld::expected_return(&self.mdp, &self.truth, &model.policy)?,
        })
    }

    /// Applies the learner update for the chosen candidate, then draws the
    /// next candidate set. Returns the metrics after the update.
    pub fn select(&mut self, index: usize) -> Result<MetricPoint> {
        if self.finished {
            return Err(Error::Conflict("session already finished"));
        }
        if index >= self.candidates.len() {
            return Err(Error::InvalidIndex {
                index,
                len: self.candidates.len(),
            });
        }
        let objective = IrlObjective {
            mdp: &self.mdp,
            planner: self.config.planner,
        };
        let next = match self.config.learner_kind {
            SessionLearner::Naive => naive_step(&objective, &self.state, &self.candidates, index)?,
            SessionLearner::Aware => {
                let others: Vec<usize> = (0..self.candidates.len()).filter(|&i| i != index).collect();
                ital_step(&objective, &self.state, &self.candidates, index, &others)?.0
            }
        };
        self.state = next;
        self.selections.push(index);
        let point = self.measure()?;
        self.metrics.push(point);
        if self.step() >= self.config.step_cap {
            self.finished = true;
            self.candidates.clear();
        } else {
            self.draw_candidates();
        }
        Ok(point)
    }

    pub fn finish(&mut self) {
        self.finished = true;
        self.candidates.clear();
    }

    pub fn view(&self) -> Result<SessionView> {
        let model = IrlModel::without_gradient(&self.mdp, &self.state.params, &self.config.planner)?;
        let estimates = self.state.params.as_slice().to_vec();
        Ok(SessionView {
            session_id: self.id.clone(),
            map_id: self.config.map_id.clone(),
            learner_kind: self.config.learner_kind,
            beta: self.config.beta,
            step: self.step(),
            step_cap: self.config.step_cap,
            finished: self.finished,
            width: self.config.map.width,
            height: self.config.map.height,
            ground_truth: self.config.map.rewards.clone(),
            display_estimates: estimates.iter().map(|v| v.clamp(-DISPLAY_CLIP, DISPLAY_CLIP)).collect(),
            estimates,
            policy_arrows: model.solution.greedy_actions(),
            candidates: self.candidate_arrows(),
            metrics: *self.metrics.last().expect("initial metrics"),
        })
    }
}

/// A machine stand-in for a cooperative human: picks the candidate with the
/// largest feedback teaching volume given the learner's displayed estimates.
#[derive(Debug, Clone)]
pub struct ScriptedTeacher {
    teacher: IrlTeacher,
    mdp: GridworldMdp,
    eta: f64,
}

impl ScriptedTeacher {
    pub fn new(map: &MapGrid, discount: f64, planner: SoftPlanner, eta: f64) -> Result<Self> {
        let mdp = GridworldMdp::new(map.width, map.height, TransitionSpec::PAPER, discount)?;
        let truth = mdp.encode(&map.rewards)?;
        Ok(Self {
            teacher: IrlTeacher::new(mdp.clone(), truth, planner)?,
            mdp,
            eta,
        })
    }

    pub fn for_config(config: &SessionConfig) -> Result<Self> {
        Self::new(&config.map, config.discount, config.planner, config.eta)
    }

    pub fn choose(&self, estimates: &[f64], candidates: &[CandidateArrow]) -> Result<usize> {
        let demos: Vec<Demonstration> = candidates
            .iter()
            .map(|c| Demonstration::new(c.state, c.action))
            .collect();
        let reported = RewardParams::row_vector(estimates.to_vec());
        let (volumes, _) =
            self.teacher
                .volumes(TeacherMode::FeedbackCooperative, &self.mdp, &reported, self.eta, &demos)?;
        // cooperative selection is a deterministic argmax; the rng is never drawn
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        let pick = pedagogy::select_example(&volumes, TeacherMode::FeedbackCooperative, &mut unused)?;
        Ok(candidates[pick].index)
    }
}

/// Drives a session in-process with the scripted teacher for `steps` steps
/// (or until the step cap).
pub fn run_scripted(session: &mut TeachingSession, steps: usize) -> Result<()> {
    let script = ScriptedTeacher::for_config(session.config())?;
    for _ in 0..steps {
        if session.is_finished() {
            break;
        }
        let choice = script.choose(session.params().as_slice(), &session.candidate_arrows())?;
        session.select(choice)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn candidates_are_distinct_and_optimal() {
        let cfg = SessionConfig::for_map("A", SessionLearner::Naive, 3).unwrap();
        let mut s = TeachingSession::new("t", cfg).unwrap();
        let truth = s.truth.clone();
        let oracle = hard_value_iteration(s.mdp(), &truth, 1e-10, 10_000).unwrap();
        for _ in 0..5 {
            let c = s.candidate_arrows();
            assert_eq!(c.len(), 10);
            let mut grids: Vec<usize> = c.iter().map(|a| a.state).collect();
            grids.sort();
            grids.dedup();
            assert_eq!(grids.len(), 10);
            for a in &c {
                let q = oracle.q_row(a.state);
                let best = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert!(q[a.action as usize] >= best - 1e-6);
            }
            s.select(0).unwrap();
        }
        assert_eq!(s.metrics().len(), 6);
    }

    #[test]
    fn zero_beta_aware_matches_naive() {
        let mut a = SessionConfig::for_map("B", SessionLearner::Aware, 9).unwrap();
        a.beta = 0.0;
        let n = SessionConfig::for_map("B", SessionLearner::Naive, 9).unwrap();
        let mut sa = TeachingSession::new("a", a).unwrap();
        let mut sn = TeachingSession::new("n", n).unwrap();
        for k in [3, 1, 4, 1, 5, 9, 2, 6] {
            sa.select(k).unwrap();
            sn.select(k).unwrap();
        }
        assert_eq!(sa.params(), sn.params());
    }

    #[test]
    fn selection_raises_target_over_source() {
        for seed in 0..5 {
            let cfg = SessionConfig::for_map("C", SessionLearner::Naive, seed).unwrap();
            let mut s = TeachingSession::new("c", cfg).unwrap();
            let arrow = s.candidate_arrows()[0];
            let target = s.mdp().target(arrow.state, arrow.action);
            if target == arrow.state {
                continue;
            }
            let before = s.params().as_slice().to_vec();
            s.select(0).unwrap();
            let after = s.params().as_slice();
            let gap = |p: &[f64]| p[target] - p[arrow.state];
            assert!(gap(after) > gap(&before), "seed {seed}");
        }
    }

    #[test]
    fn step_cap_finishes() {
        let mut cfg = SessionConfig::for_map("D", SessionLearner::Aware, 1).unwrap();
        cfg.step_cap = 2;
        let mut s = TeachingSession::new("d", cfg).unwrap();
        s.select(0).unwrap();
        s.select(0).unwrap();
        assert!(s.is_finished());
        assert!(s.candidate_arrows().is_empty());
        assert!(s.select(0).is_err());
    }
}
