use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, LearnerKind, TaskConfig};
use crate::datagen::{self, Dataset, FeatureMap, FitOptions, SyntheticTask};
use crate::error::{Error, Result};
use crate::gridworld::{
    self, irl_teaching_round, GridworldMdp, IrlModel, IrlObjective, IrlTeacher, IrlUpdate, MapKind, RewardParams,
    TransitionSpec,
};
use crate::linmodel::{self, LossSpec, ParameterVector, TeachingExample};
use crate::pedagogy::{self, batch_step, ital_step, naive_step, LearnerState, LinearObjective, TeacherMode};

/// Fraction of generated data kept away from the teacher for evaluation.
pub const HELD_OUT_FRACTION: f64 = 0.2;

/// Independent random streams derived from one master seed. Every stream is
/// `ChaCha8Rng::seed_from_u64(seed)` with its stream id set to the value
/// below, so learners sharing a seed see identical data and batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Data = 1,
    Init = 2,
    Batch = 3,
    Select = 4,
    Subset = 5,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `||nu - nu*||_2` in the learner's representation, bias included.
    Distance,
    HeldOutLoss,
    Accuracy,
    PolicyTv,
    ExpectedReturn,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Distance,
        Metric::HeldOutLoss,
        Metric::Accuracy,
        Metric::PolicyTv,
        Metric::ExpectedReturn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Distance => "distance",
            Metric::HeldOutLoss => "heldout_loss",
            Metric::Accuracy => "accuracy",
            Metric::PolicyTv => "policy_tv",
            Metric::ExpectedReturn => "expected_return",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown metric `{s}`")))
    }
}

/// Metrics of one learner on one seed, recorded before the first update and
/// after every update (`iterations + 1` values per metric).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTrace {
    pub learner: LearnerKind,
    pub seed: u64,
    pub series: BTreeMap<Metric, Vec<f64>>,
}

impl MetricTrace {
    fn new(learner: LearnerKind, seed: u64, metrics: &[Metric]) -> Self {
        Self {
            learner,
            seed,
            series: metrics.iter().map(|&m| (m, Vec::new())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.series.values().next().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, metric: Metric) -> Option<&[f64]> {
        self.series.get(&metric).map(Vec::as_slice)
    }

    pub fn last(&self, metric: Metric) -> Option<f64> {
        self.get(metric).and_then(|s| s.last().copied())
    }

    fn push(&mut self, metric: Metric, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite("recorded metric"));
        }
        self.series.get_mut(&metric).expect("metric registered").push(value);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub learner: Option<LearnerKind>,
    pub message: String,
    pub numeric: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub seed: u64,
    pub learner: LearnerKind,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutput {
    /// Ordered by seed, then by the configured learner order.
    pub traces: Vec<MetricTrace>,
    pub failures: Vec<SeedFailure>,
    pub timings: Vec<Timing>,
}

impl RunOutput {
    pub fn for_learner(&self, learner: LearnerKind) -> Vec<&MetricTrace> {
        self.traces.iter().filter(|t| t.learner == learner).collect()
    }

    /// Mean over seeds of one metric at one iteration.
    pub fn mean_at(&self, learner: LearnerKind, metric: Metric, iteration: usize) -> Option<f64> {
        let vals: Vec<f64> = self
            .for_learner(learner)
            .iter()
            .filter_map(|t| t.get(metric).and_then(|s| s.get(iteration).copied()))
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Runs every configured learner on every seed. Seeds run in parallel; a
/// failing seed is logged and reported without stopping the others.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let shared = SharedData::load(config)?;
    type SeedTraces = SeedResult<Vec<(MetricTrace, f64)>>;
    let per_seed: Vec<(u64, SeedTraces)> = config
        .seed_list()
        .into_par_iter()
        .map(|seed| (seed, run_seed(config, &shared, seed)))
        .collect();

    let mut out = RunOutput::default();
    for (seed, result) in per_seed {
        match result {
            Ok(traces) => {
                for (trace, seconds) in traces {
                    out.timings.push(Timing {
                        seed,
                        learner: trace.learner,
                        seconds,
                    });
                    out.traces.push(trace);
                }
            }
            Err(SeedError { learner, error }) => {
                tracing::error!(seed, learner = ?learner, %error, "seed aborted");
                out.failures.push(SeedFailure {
                    seed,
                    learner,
                    message: error.to_string(),
                    numeric: error.is_numeric(),
                });
            }
        }
    }
    Ok(out)
}

struct SeedError {
    learner: Option<LearnerKind>,
    error: Error,
}

impl From<Error> for SeedError {
    fn from(error: Error) -> Self {
        SeedError { learner: None, error }
    }
}

type SeedResult<T> = std::result::Result<T, SeedError>;

/// Inputs that do not depend on the seed.
enum SharedData {
    None,
    Features {
        spec: LossSpec,
        learner: Vec<TeachingExample>,
        teacher: Vec<TeachingExample>,
        nu_star: ParameterVector,
        omega_star: ParameterVector,
    },
}

impl SharedData {
    fn load(config: &ExperimentConfig) -> Result<Self> {
        let TaskConfig::Features { teacher, learner } = &config.task else {
            return Ok(SharedData::None);
        };
        let (lh, lx) = datagen::load_feature_dataset(learner)?;
        let (th, tx) = datagen::load_feature_dataset(teacher)?;
        if lh.rows != th.rows || lh.classes != th.classes {
            return Err(Error::config(
                "teacher and learner feature files must match in rows and classes",
            ));
        }
        if lx.iter().zip(&tx).any(|(a, b)| a.label != b.label) {
            return Err(Error::config("teacher and learner feature files disagree on labels"));
        }
        let fit = FitOptions::default();
        let spec = LossSpec::cross_entropy(lh.classes, fit.lambda.unwrap_or(1.0 / lh.rows as f64));
        let nu_star = datagen::fit_logistic(&spec, &lx, &fit)?;
        let omega_star = datagen::fit_logistic(&spec, &tx, &fit)?;
        Ok(SharedData::Features {
            spec: LossSpec::cross_entropy(lh.classes, 0.0),
            learner: lx,
            teacher: tx,
            nu_star,
            omega_star,
        })
    }
}

fn run_seed(config: &ExperimentConfig, shared: &SharedData, seed: u64) -> SeedResult<Vec<(MetricTrace, f64)>> {
    if config.task.is_gridworld() {
        let world = IrlWorld::build(config, seed)?;
        config
            .learners
            .iter()
            .map(|&k| {
                timed(|| world.run(config, k, seed)).map_err(|error| SeedError {
                    learner: Some(k),
                    error,
                })
            })
            .collect()
    } else {
        let world = LinearWorld::build(config, shared, seed)?;
        config
            .learners
            .iter()
            .map(|&k| {
                timed(|| world.run(config, k, seed)).map_err(|error| SeedError {
                    learner: Some(k),
                    error,
                })
            })
            .collect()
    }
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let v = f()?;
    Ok((v, start.elapsed().as_secs_f64()))
}

fn split_held_out<T>(mut items: Vec<T>, rng: &mut ChaCha8Rng) -> (Vec<T>, Vec<T>) {
    items.shuffle(rng);
    let test = ((items.len() as f64) * HELD_OUT_FRACTION).round() as usize;
    let train = items.split_off(test);
    (train, items)
}

/// A supervised task prepared for one seed.
pub struct LinearWorld {
    pub spec: LossSpec,
    /// Learner- and teacher-space copies of the training pool, index-aligned.
    pub train_learner: Vec<TeachingExample>,
    pub train_teacher: Vec<TeachingExample>,
    pub test: Dataset,
    pub nu_star: ParameterVector,
    pub omega_star: ParameterVector,
    pub map: Option<FeatureMap>,
    pub init: ParameterVector,
}

impl LinearWorld {
    /// Loads any shared inputs and builds the task for one seed.
    pub fn prepare(config: &ExperimentConfig, seed: u64) -> Result<Self> {
        Self::build(config, &SharedData::load(config)?, seed)
    }

    fn build(config: &ExperimentConfig, shared: &SharedData, seed: u64) -> Result<Self> {
        let mut data_rng = stream_rng(seed, Stream::Data);
        let (spec, pairs, nu_star, omega_star, map) = match (&config.task, shared) {
            (
                TaskConfig::Features { .. },
                SharedData::Features {
                    spec,
                    learner,
                    teacher,
                    nu_star,
                    omega_star,
                },
            ) => {
                let pairs: Vec<_> = learner.iter().cloned().zip(teacher.iter().cloned()).collect();
                (*spec, pairs, nu_star.clone(), omega_star.clone(), None)
            }
            (task, _) => {
                let (data, nu_star) = match *task {
                    TaskConfig::Regression { dim, samples } => {
                        datagen::gen_regression(dim, samples, data_rng.next_u64())?
                    }
                    TaskConfig::Classification {
                        dim,
                        classes,
                        samples,
                        variance,
                    } => {
                        let task = SyntheticTask::GaussianClasses {
                            dim,
                            classes,
                            samples,
                            variance,
                            center_scale: 1.0,
                        };
                        datagen::gen_classification(&task, data_rng.next_u64(), &FitOptions::default())?
                    }
                    _ => return Err(Error::config("not a supervised task")),
                };
                let dim = data.dim();
                let map = if config.feature_mismatch {
                    datagen::make_feature_map(dim, &mut data_rng)?
                } else {
                    FeatureMap::identity(dim)
                };
                let omega_star = map.params_to_teacher(&nu_star);
                let pairs = data
                    .examples
                    .into_iter()
                    .map(|ex| {
                        let t = map.example_to_teacher(&ex);
                        (ex, t)
                    })
                    .collect();
                (data.spec, pairs, nu_star, omega_star, Some(map))
            }
        };
        let (train, test) = split_held_out(pairs, &mut data_rng);
        if train.len() < config.batch_size {
            return Err(Error::config("training pool smaller than the batch size"));
        }
        let (train_learner, train_teacher) = train.into_iter().unzip();
        let test = Dataset {
            examples: test.into_iter().map(|(l, _)| l).collect(),
            spec,
        };
        let init = pedagogy::init_params(nu_star.rows(), nu_star.cols(), &mut stream_rng(seed, Stream::Init));
        Ok(Self {
            spec,
            train_learner,
            train_teacher,
            test,
            nu_star,
            omega_star,
            map,
            init,
        })
    }

    fn metrics(&self) -> Vec<Metric> {
        let mut m = vec![Metric::Distance, Metric::HeldOutLoss];
        if !self.test.is_empty() && matches!(self.spec.kind, linmodel::LossKind::CrossEntropy { .. }) {
            m.push(Metric::Accuracy);
        }
        if self.test.is_empty() {
            m.retain(|&x| x == Metric::Distance);
        }
        m
    }

    fn record(&self, trace: &mut MetricTrace, params: &ParameterVector) -> Result<()> {
        for m in trace.series.keys().copied().collect::<Vec<_>>() {
            let v = match m {
                Metric::Distance => params.distance(&self.nu_star)?,
                Metric::HeldOutLoss => self.test.mean_loss(params)?,
                Metric::Accuracy => self.test.accuracy(params)?,
                _ => unreachable!("not a supervised metric"),
            };
            trace.push(m, v)?;
        }
        Ok(())
    }

    /// Teaching volumes for the batch under the teacher mode.
    pub fn teacher_volumes(
        &self,
        mode: TeacherMode,
        params: &ParameterVector,
        eta: f64,
        batch: &[usize],
    ) -> Result<Vec<f64>> {
        match mode {
            TeacherMode::Random => Ok(vec![0.0; batch.len()]),
            TeacherMode::OmniscientCooperative => {
                let prev = match &self.map {
                    Some(m) => m.params_to_teacher(params),
                    None => params.clone(),
                };
                if !prev.same_shape(&self.omega_star) {
                    return Err(Error::config("omniscient teaching needs a shared parameter space"));
                }
                batch
                    .iter()
                    .map(|&i| {
                        pedagogy::teaching_volume_omniscient(
                            &self.spec,
                            &prev,
                            &self.omega_star,
                            eta,
                            &self.train_teacher[i],
                        )
                    })
                    .collect()
            }
            TeacherMode::FeedbackCooperative | TeacherMode::Adversarial => batch
                .iter()
                .map(|&i| {
                    let feedback = linmodel::logits(&self.spec, params, &self.train_learner[i])?;
                    pedagogy::teaching_volume_feedback(
                        &self.spec,
                        &feedback,
                        &self.train_teacher[i],
                        &self.omega_star,
                        eta,
                    )
                })
                .collect(),
        }
    }

    pub fn run(&self, config: &ExperimentConfig, learner: LearnerKind, seed: u64) -> Result<MetricTrace> {
        let mut trace = MetricTrace::new(learner, seed, &self.metrics());
        let mut batch_rng = stream_rng(seed, Stream::Batch);
        let mut select_rng = stream_rng(seed, Stream::Select);
        let mut subset_rng = stream_rng(seed, Stream::Subset);
        let subset = if let LearnerKind::Ital(m) = learner { m } else { 0 };
        let mut state = LearnerState::new(self.init.clone(), config.eta, config.signed_beta(), subset);
        let objective = LinearObjective { spec: self.spec };
        self.record(&mut trace, &state.params)?;
        for _ in 0..config.iterations {
            let idx = rand::seq::index::sample(&mut batch_rng, self.train_learner.len(), config.batch_size).into_vec();
            let batch: Vec<TeachingExample> = idx.iter().map(|&i| self.train_learner[i].clone()).collect();
            state = match learner {
                LearnerKind::Batch => batch_step(&objective, &state, &batch)?,
                LearnerKind::Sgd => {
                    let chosen = select_rng.random_range(0..batch.len());
                    naive_step(&objective, &state, &batch, chosen)?
                }
                LearnerKind::ImtNaive | LearnerKind::Ital(_) => {
                    let volumes = self.teacher_volumes(config.teacher, &state.params, state.eta(), &idx)?;
                    let chosen = pedagogy::select_example(&volumes, config.teacher, &mut select_rng)?;
                    if subset == 0 {
                        naive_step(&objective, &state, &batch, chosen)?
                    } else {
                        let others = pedagogy::sample_subset(batch.len(), chosen, subset, &mut subset_rng);
                        ital_step(&objective, &state, &batch, chosen, &others)?.0
                    }
                }
            };
            self.record(&mut trace, &state.params)?;
        }
        Ok(trace)
    }
}

/// A gridworld IRL task prepared for one seed.
pub struct IrlWorld {
    pub learner_mdp: GridworldMdp,
    pub teacher: IrlTeacher,
    /// True rewards in the learner's (identity) encoding.
    pub nu_star: RewardParams,
    pub init: RewardParams,
}

impl IrlWorld {
    pub fn build(config: &ExperimentConfig, seed: u64) -> Result<Self> {
        let (kind, width, height) = match config.task {
            TaskConfig::GridworldDense { width, height } => (MapKind::DenseRandom, width, height),
            TaskConfig::GridworldSparse { width, height } => (MapKind::Sparse, width, height),
            _ => return Err(Error::config("not a gridworld task")),
        };
        let mut data_rng = stream_rng(seed, Stream::Data);
        let map = gridworld::make_map(kind, width, height, &mut data_rng)?;
        let learner_mdp = GridworldMdp::new(width, height, TransitionSpec::PAPER, config.discount)?;
        let mut perm: Vec<usize> = (0..width * height).collect();
        if config.feature_mismatch {
            perm.shuffle(&mut data_rng);
        }
        let teacher_mdp = learner_mdp.clone().with_encoding(perm)?;
        let target = teacher_mdp.encode(&map.rewards)?;
        let teacher = IrlTeacher::new(teacher_mdp, target, config.planner)?;
        let nu_star = learner_mdp.encode(&map.rewards)?;
        let init = pedagogy::init_params(1, width * height, &mut stream_rng(seed, Stream::Init));
        Ok(Self {
            learner_mdp,
            teacher,
            nu_star,
            init,
        })
    }

    fn record(&self, trace: &mut MetricTrace, params: &RewardParams) -> Result<()> {
        let model = IrlModel::without_gradient(&self.learner_mdp, params, self.teacher.planner())?;
        trace.push(Metric::Distance, params.distance(&self.nu_star)?)?;
        trace.push(
            Metric::PolicyTv,
            gridworld::policy_total_variation(&model.policy, self.teacher.policy())?,
        )?;
        trace.push(
            Metric::ExpectedReturn,
            gridworld::expected_return(&self.learner_mdp, &self.nu_star, &model.policy)?,
        )?;
        Ok(())
    }

    pub fn run(&self, config: &ExperimentConfig, learner: LearnerKind, seed: u64) -> Result<MetricTrace> {
        let mut trace = MetricTrace::new(
            learner,
            seed,
            &[Metric::Distance, Metric::PolicyTv, Metric::ExpectedReturn],
        );
        let mut batch_rng = stream_rng(seed, Stream::Batch);
        let mut select_rng = stream_rng(seed, Stream::Select);
        let mut subset_rng = stream_rng(seed, Stream::Subset);
        let subset = if let LearnerKind::Ital(m) = learner { m } else { 0 };
        let mut state = LearnerState::new(self.init.clone(), config.eta, config.signed_beta(), subset);
        let objective = IrlObjective {
            mdp: &self.learner_mdp,
            planner: config.planner,
        };
        self.record(&mut trace, &state.params)?;
        for _ in 0..config.iterations {
            let batch = gridworld::sample_demonstrations(&self.learner_mdp, config.batch_size, &mut batch_rng);
            state = match learner {
                LearnerKind::Batch => batch_step(&objective, &state, &batch)?,
                LearnerKind::Sgd => {
                    let chosen = select_rng.random_range(0..batch.len());
                    naive_step(&objective, &state, &batch, chosen)?
                }
                LearnerKind::ImtNaive | LearnerKind::Ital(_) => {
                    let update = if subset == 0 {
                        IrlUpdate::Naive
                    } else {
                        IrlUpdate::Aware
                    };
                    irl_teaching_round(
                        &self.teacher,
                        &self.learner_mdp,
                        &state,
                        &batch,
                        config.teacher,
                        update,
                        &mut select_rng,
                        &mut subset_rng,
                    )?
                    .state
                }
            };
            self.record(&mut trace, &state.params)?;
        }
        Ok(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(task: TaskConfig, teacher: TeacherMode, learners: Vec<LearnerKind>) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(task, teacher, learners);
        c.iterations = 30;
        c.seeds = 3;
        c
    }

    #[test]
    fn deterministic_and_complete() {
        let cfg = small(
            TaskConfig::Classification {
                dim: 4,
                classes: 3,
                samples: 150,
                variance: 0.5,
            },
            TeacherMode::FeedbackCooperative,
            vec![LearnerKind::Batch, LearnerKind::ImtNaive, LearnerKind::Ital(2)],
        );
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert!(a.failures.is_empty());
        assert_eq!(a.traces, b.traces);
        assert_eq!(a.traces.len(), 9);
        for t in &a.traces {
            assert_eq!(t.series.len(), 3);
            assert!(t.series.values().all(|s| s.len() == 31));
        }
        // every learner starts from the same point
        let firsts: Vec<f64> = a
            .traces
            .iter()
            .filter(|t| t.seed == 0)
            .map(|t| t.get(Metric::Distance).unwrap()[0])
            .collect();
        assert!(firsts.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn sgd_matches_random_teacher_with_naive_learner() {
        let cfg = small(
            TaskConfig::Regression { dim: 6, samples: 100 },
            TeacherMode::Random,
            vec![LearnerKind::Sgd, LearnerKind::ImtNaive],
        );
        let out = run_experiment(&cfg).unwrap();
        for seed in cfg.seed_list() {
            let pair: Vec<_> = out.traces.iter().filter(|t| t.seed == seed).collect();
            assert_eq!(pair[0].series, pair[1].series);
        }
    }

    #[test]
    fn gridworld_runs() {
        let mut cfg = small(
            TaskConfig::GridworldSparse { width: 3, height: 3 },
            TeacherMode::FeedbackCooperative,
            vec![
                LearnerKind::ImtNaive,
                LearnerKind::Ital(4),
                LearnerKind::Batch,
                LearnerKind::Sgd,
            ],
        );
        cfg.iterations = 5;
        cfg.batch_size = 6;
        cfg.seeds = 2;
        let out = run_experiment(&cfg).unwrap();
        assert!(out.failures.is_empty(), "{:?}", out.failures);
        assert_eq!(out.traces.len(), 8);
        for t in &out.traces {
            assert_eq!(t.get(Metric::PolicyTv).unwrap().len(), 6);
        }
    }

    #[test]
    fn streams_are_independent() {
        let mut a = stream_rng(5, Stream::Batch);
        let mut b = stream_rng(5, Stream::Select);
        assert_ne!(a.next_u64(), b.next_u64());
        assert_eq!(
            stream_rng(5, Stream::Data).next_u64(),
            stream_rng(5, Stream::Data).next_u64()
        );
    }
}
