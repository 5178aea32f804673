use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::SoftPlanner;
use crate::pedagogy::{BetaSchedule, TeacherMode};

/// Which learner consumes the teacher's examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LearnerKind {
    /// Mean gradient of the whole mini-batch; ignores the teacher.
    Batch,
    /// A uniformly random element of the mini-batch; ignores the teacher.
    Sgd,
    /// Plain gradient step on the teacher's pick.
    ImtNaive,
    /// Teacher-aware step with `M` sampled alternatives.
    Ital(usize),
}

impl LearnerKind {
    pub fn name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnerKind::Batch => f.write_str("batch"),
            LearnerKind::Sgd => f.write_str("sgd"),
            LearnerKind::ImtNaive => f.write_str("imt"),
            LearnerKind::Ital(m) => write!(f, "ital-{m}"),
        }
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "batch" => Ok(LearnerKind::Batch),
            "sgd" => Ok(LearnerKind::Sgd),
            "imt" | "imt-naive" | "imt_naive" | "naive" => Ok(LearnerKind::ImtNaive),
            other => other
                .strip_prefix("ital-")
                .or_else(|| other.strip_prefix("ital_"))
                .and_then(|m| m.parse().ok())
                .map(LearnerKind::Ital)
                .ok_or_else(|| Error::config(format!("unknown learner `{s}`"))),
        }
    }
}

impl TryFrom<String> for LearnerKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LearnerKind> for String {
    fn from(k: LearnerKind) -> String {
        k.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    Regression {
        dim: usize,
        samples: usize,
    },
    Classification {
        dim: usize,
        classes: usize,
        samples: usize,
        #[serde(default = "half")]
        variance: f64,
    },
    /// Paired external feature files, matched by line.
    Features {
        teacher: PathBuf,
        learner: PathBuf,
    },
    GridworldDense {
        #[serde(default = "eight")]
        width: usize,
        #[serde(default = "eight")]
        height: usize,
    },
    GridworldSparse {
        #[serde(default = "eight")]
        width: usize,
        #[serde(default = "eight")]
        height: usize,
    },
}

fn half() -> f64 {
    0.5
}

fn eight() -> usize {
    8
}

impl TaskConfig {
    pub fn is_gridworld(&self) -> bool {
        matches!(
            self,
            TaskConfig::GridworldDense { .. } | TaskConfig::GridworldSparse { .. }
        )
    }

    /// Short names accepted by `--task`.
    pub fn preset(name: &str) -> Result<TaskConfig> {
        Ok(match name {
            "regression" => TaskConfig::Regression {
                dim: 100,
                samples: 1000,
            },
            "classification" => TaskConfig::Classification {
                dim: 30,
                classes: 10,
                samples: 1000,
                variance: 0.5,
            },
            "gridworld" | "gridworld-dense" | "irl" => TaskConfig::GridworldDense { width: 8, height: 8 },
            "gridworld-sparse" | "irl-sparse" => TaskConfig::GridworldSparse { width: 8, height: 8 },
            other => return Err(Error::config(format!("unknown task preset `{other}`"))),
        })
    }

    /// Magnitude of the pedagogy temperature used when none is configured.
    pub fn default_beta(&self) -> f64 {
        match self {
            TaskConfig::Regression { .. } => 2000.0,
            TaskConfig::Classification { .. } => 60000.0,
            TaskConfig::Features { .. } => 30000.0,
            TaskConfig::GridworldDense { .. } => 25000.0,
            TaskConfig::GridworldSparse { .. } => 30000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskConfig,
    pub teacher: TeacherMode,
    pub learners: Vec<LearnerKind>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Its sign is taken from the teacher mode: negative against an
    /// adversarial teacher, positive otherwise.
    pub beta: Option<BetaSchedule>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub iterations: usize,
    pub seeds: usize,
    #[serde(default)]
    pub first_seed: u64,
    /// Give the teacher a rotated copy of the learner's features.
    #[serde(default = "yes")]
    pub feature_mismatch: bool,
    #[serde(default)]
    pub planner: SoftPlanner,
    #[serde(default = "default_discount")]
    pub discount: f64,
    pub output: Option<PathBuf>,
}

fn default_eta() -> f64 {
    1e-3
}

fn default_batch() -> usize {
    20
}

fn default_discount() -> f64 {
    0.5
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    pub fn new(task: TaskConfig, teacher: TeacherMode, learners: Vec<LearnerKind>) -> Self {
        Self {
            task,
            teacher,
            learners,
            eta: default_eta(),
            beta: None,
            batch_size: default_batch(),
            iterations: 2000,
            seeds: 20,
            first_seed: 0,
            feature_mismatch: true,
            planner: SoftPlanner::default(),
            discount: default_discount(),
            output: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.learners.is_empty() {
            return Err(Error::config("no learners configured"));
        }
        if self.iterations == 0 || self.seeds == 0 {
            return Err(Error::config("iterations and seeds must be at least 1"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::config("eta must be positive"));
        }
        let selects =
            self.teacher != TeacherMode::Random || self.learners.iter().any(|l| !matches!(l, LearnerKind::Batch));
        if selects && self.batch_size < 2 {
            return Err(Error::config("batch size must be at least 2"));
        }
        if let Some(m) = self
            .learners
            .iter()
            .find(|l| matches!(l, LearnerKind::Ital(m) if *m + 1 > self.batch_size))
        {
            return Err(Error::config(format!("{m} needs a batch larger than its subset")));
        }
        if let Some(b) = &self.beta {
            b.validate()?;
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::config("discount must lie in (0, 1)"));
        }
        self.planner.validate()?;
        match &self.task {
            TaskConfig::Regression { dim, samples } if *dim == 0 || *samples < 5 => {
                Err(Error::config("regression needs dim >= 1 and at least 5 samples"))
            }
            TaskConfig::Classification {
                dim,
                classes,
                samples,
                variance,
            } if *dim == 0 || *classes < 2 || *samples % *classes != 0 || *samples < 5 || *variance <= 0.0 => Err(
                Error::config("classification needs dim >= 1, K >= 2, samples divisible by K and variance > 0"),
            ),
            TaskConfig::GridworldDense { width, height } | TaskConfig::GridworldSparse { width, height }
                if width * height < 3 =>
            {
                Err(Error::config("gridworld needs at least 3 grids"))
            }
            _ => Ok(()),
        }
    }

    /// The schedule the aware learners use, signed by the teacher mode.
    pub fn signed_beta(&self) -> BetaSchedule {
        let beta = self.beta.unwrap_or(BetaSchedule::Constant(self.task.default_beta()));
        beta.with_sign(self.teacher == TeacherMode::Adversarial)
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.first_seed + i).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learner_names_round_trip() {
        for k in [
            LearnerKind::Batch,
            LearnerKind::Sgd,
            LearnerKind::ImtNaive,
            LearnerKind::Ital(19),
        ] {
            assert_eq!(k.name().parse::<LearnerKind>().unwrap(), k);
        }
        assert_eq!("IMT-naive".parse::<LearnerKind>().unwrap(), LearnerKind::ImtNaive);
        assert!("ital-x".parse::<LearnerKind>().is_err());
    }

    #[test]
    fn json_config() {
        let text = r#"{
            "task": {"kind": "classification", "dim": 30, "classes": 10, "samples": 1000},
            "teacher": "adversarial",
            "learners": ["imt", "ital-19"],
            "beta": {"constant": 60000.0},
            "iterations": 10,
            "seeds": 2,
            "output": null
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.batch_size, 20);
        assert_eq!(cfg.signed_beta(), BetaSchedule::Constant(-60000.0));
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(serde_json::from_str::<ExperimentConfig>(&text.replace("\"seeds\"", "\"sedes\"")).is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = ExperimentConfig::new(
            TaskConfig::preset("regression").unwrap(),
            TeacherMode::FeedbackCooperative,
            vec![LearnerKind::Ital(19)],
        );
        cfg.validate().unwrap();
        cfg.batch_size = 10;
        assert!(cfg.validate().is_err());
        cfg.batch_size = 20;
        cfg.iterations = 0;
        assert!(cfg.validate().is_err());
    }
}
