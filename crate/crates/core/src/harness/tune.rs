use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{stream_rng, IrlWorld, LinearWorld, Stream};
use crate::error::{Error, Result};
use crate::gridworld::{self, IrlObjective};
use crate::linmodel::TeachingExample;
use crate::pedagogy::{self, ital_step, BetaSchedule, LearnerState, LinearObjective, TeacherMode};

/// Mean over probe rounds of the largest selection probability, per `beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaTuning {
    pub threshold: f64,
    pub grid: Vec<(f64, f64)>,
    /// Largest grid value whose mean peak probability stays at or below the
    /// threshold; `None` if every value is already degenerate.
    pub chosen: Option<f64>,
}

/// Default grid: `1e4 * 2^k` for `k` in `-6..=6`.
pub fn default_beta_grid() -> Vec<f64> {
    (-6..=6).map(|k| 1e4 * 2f64.powi(k)).collect()
}

/// Grid search for the largest `beta` whose selection distribution over a
/// full batch is not yet a delta function, probed at the initial parameters
/// over `rounds` batches of the first configured seed.
pub fn tune_beta(config: &ExperimentConfig, grid: &[f64], rounds: usize, threshold: f64) -> Result<BetaTuning> {
    config.validate()?;
    if grid.is_empty() || rounds == 0 {
        return Err(Error::config("tune-beta needs a grid and at least one round"));
    }
    let seed = config.first_seed;
    let m = config.batch_size - 1;
    let mut mean_peak = vec![0.0; grid.len()];
    let mut select_rng = stream_rng(seed, Stream::Select);
    let mut batch_rng = stream_rng(seed, Stream::Batch);
    let signed = |beta: f64| BetaSchedule::Constant(beta).with_sign(config.teacher == TeacherMode::Adversarial);

    if config.task.is_gridworld() {
        let world = IrlWorld::build(config, seed)?;
        let objective = IrlObjective {
            mdp: &world.learner_mdp,
            planner: config.planner,
        };
        for _ in 0..rounds {
            let batch = gridworld::sample_demonstrations(&world.learner_mdp, config.batch_size, &mut batch_rng);
            let (volumes, _) =
                world
                    .teacher
                    .volumes(config.teacher, &world.learner_mdp, &world.init, config.eta, &batch)?;
            let chosen = pedagogy::select_example(&volumes, config.teacher, &mut select_rng)?;
            let others: Vec<usize> = (0..batch.len()).filter(|&i| i != chosen).collect();
            for (slot, &beta) in mean_peak.iter_mut().zip(grid) {
                let state = LearnerState::new(world.init.clone(), config.eta, signed(beta), m);
                let (_, d) = ital_step(&objective, &state, &batch, chosen, &others)?;
                *slot += peak(&d.q) / rounds as f64;
            }
        }
    } else {
        let world = LinearWorld::prepare(config, seed)?;
        let objective = LinearObjective { spec: world.spec };
        for _ in 0..rounds {
            let idx = sample(&mut batch_rng, world.train_learner.len(), config.batch_size).into_vec();
            let batch: Vec<TeachingExample> = idx.iter().map(|&i| world.train_learner[i].clone()).collect();
            let volumes = world.teacher_volumes(config.teacher, &world.init, config.eta, &idx)?;
            let chosen = pedagogy::select_example(&volumes, config.teacher, &mut select_rng)?;
            let others: Vec<usize> = (0..batch.len()).filter(|&i| i != chosen).collect();
            for (slot, &beta) in mean_peak.iter_mut().zip(grid) {
                let state = LearnerState::new(world.init.clone(), config.eta, signed(beta), m);
                let (_, d) = ital_step(&objective, &state, &batch, chosen, &others)?;
                *slot += peak(&d.q) / rounds as f64;
            }
        }
    }
    let grid_out: Vec<(f64, f64)> = grid.iter().copied().zip(mean_peak).collect();
    let chosen = grid_out
        .iter()
        .filter(|(_, p)| *p <= threshold)
        .map(|(b, _)| *b)
        .fold(None, |acc: Option<f64>, b| Some(acc.map_or(b, |a| a.max(b))));
    Ok(BetaTuning {
        threshold,
        grid: grid_out,
        chosen,
    })
}

fn peak(q: &[f64]) -> f64 {
    q.iter().copied().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{LearnerKind, TaskConfig};
    use crate::pedagogy::TeacherMode;

    #[test]
    fn peak_probability_grows_with_beta() {
        let cfg = ExperimentConfig::new(
            TaskConfig::Regression { dim: 10, samples: 200 },
            TeacherMode::FeedbackCooperative,
            vec![LearnerKind::Ital(19)],
        );
        let grid = [0.0, 1e2, 1e4, 1e6, 1e9];
        let t = tune_beta(&cfg, &grid, 5, 0.99).unwrap();
        assert!((t.grid[0].1 - 1.0 / 20.0).abs() < 1e-12);
        for w in t.grid.windows(2) {
            assert!(w[1].1 >= w[0].1 - 1e-12);
        }
        if let Some(b) = t.chosen {
            assert!(t.grid.iter().any(|(g, p)| *g == b && *p <= 0.99));
        }
    }
}
