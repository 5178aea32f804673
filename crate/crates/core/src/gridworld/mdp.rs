use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linmodel::ParameterVector;

/// Per-grid reward parameters in the holder's own encoding, stored as a
/// `1 x |S|` row so they plug into the generic learner updates.
pub type RewardParams = ParameterVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }
}

/// An `(s, a)` demonstration. `state` is a physical grid index (row-major).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Demonstration {
    pub state: usize,
    pub action: Action,
}

impl Demonstration {
    pub fn new(state: usize, action: Action) -> Self {
        Self { state, action }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionSpec {
    /// Probability of reaching the intended neighbor.
    pub success: f64,
    /// Mass spread uniformly over the four directional neighbors.
    pub neighbor: f64,
    /// Mass sent to the absorbing zero-reward sink.
    pub terminate: f64,
}

impl TransitionSpec {
    pub const PAPER: TransitionSpec = TransitionSpec {
        success: 0.8,
        neighbor: 0.18,
        terminate: 0.02,
    };

    pub const DETERMINISTIC: TransitionSpec = TransitionSpec {
        success: 1.0,
        neighbor: 0.0,
        terminate: 0.0,
    };
}

/// Rectangular gridworld with four moves. Moves off the edge stay in place.
#[derive(Debug, Clone, PartialEq)]
pub struct GridworldMdp {
    width: usize,
    height: usize,
    transition: TransitionSpec,
    discount: f64,
    /// `encoding[g]` is the parameter index holding the reward of grid `g`.
    encoding: Vec<usize>,
    /// Sparse successor lists per `(s, a)`, sink excluded.
    successors: Vec<Vec<(usize, f64)>>,
}

impl GridworldMdp {
    pub fn new(width: usize, height: usize, transition: TransitionSpec, discount: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::config("grid dimensions must be positive"));
        }
        let TransitionSpec {
            success,
            neighbor,
            terminate,
        } = transition;
        if [success, neighbor, terminate].iter().any(|p| !(0.0..=1.0).contains(p))
            || (success + neighbor + terminate - 1.0).abs() > 1e-12
        {
            return Err(Error::config("transition probabilities must be in [0,1] and sum to 1"));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::config("discount must lie in [0, 1)"));
        }
        let n = width * height;
        let mut mdp = Self {
            width,
            height,
            transition,
            discount,
            encoding: (0..n).collect(),
            successors: Vec::with_capacity(n * Action::COUNT),
        };
        for s in 0..n {
            for a in Action::ALL {
                let mut probs = vec![0.0; n];
                probs[mdp.target(s, a)] += success;
                for d in Action::ALL {
                    probs[mdp.target(s, d)] += neighbor / Action::COUNT as f64;
                }
                mdp.successors
                    .push(probs.into_iter().enumerate().filter(|&(_, p)| p > 0.0).collect());
            }
        }
        Ok(mdp)
    }

    /// The 8x8, gamma = 0.5, 80/18/2 world used for machine-teacher IRL.
    pub fn paper_default() -> Self {
        Self::new(8, 8, TransitionSpec::PAPER, 0.5).expect("valid constants")
    }

    pub fn with_encoding(mut self, encoding: Vec<usize>) -> Result<Self> {
        if encoding.len() != self.num_states() {
            return Err(Error::Permutation(format!(
                "expected {} entries, got {}",
                self.num_states(),
                encoding.len()
            )));
        }
        let mut seen = vec![false; encoding.len()];
        for &e in &encoding {
            if e >= seen.len() || std::mem::replace(&mut seen[e], true) {
                return Err(Error::Permutation(format!("{e} repeated or out of range")));
            }
        }
        self.encoding = encoding;
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_states(&self) -> usize {
        self.width * self.height
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn transition(&self) -> TransitionSpec {
        self.transition
    }

    pub fn encoding(&self) -> &[usize] {
        &self.encoding
    }

    /// Same geometry and dynamics, possibly different encoding.
    pub fn same_world(&self, other: &GridworldMdp) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.transition == other.transition
            && self.discount == other.discount
    }

    /// Adjacent grid in direction `a`, or `s` itself at the border.
    pub fn target(&self, s: usize, a: Action) -> usize {
        let (r, c) = (s / self.width, s % self.width);
        match a {
            Action::Up if r > 0 => s - self.width,
            Action::Down if r + 1 < self.height => s + self.width,
            Action::Left if c > 0 => s - 1,
            Action::Right if c + 1 < self.width => s + 1,
            _ => s,
        }
    }

    /// Successor grids and probabilities; the remaining mass goes to the sink.
    pub fn successors(&self, s: usize, a: Action) -> &[(usize, f64)] {
        &self.successors[s * Action::COUNT + a.index()]
    }

    pub(crate) fn check_params(&self, params: &RewardParams) -> Result<()> {
        if params.len() != self.num_states() {
            return Err(Error::Shape {
                what: "reward parameters",
                expected: self.num_states(),
                found: params.len(),
            });
        }
        if !params.is_finite() {
            return Err(Error::NonFinite("reward parameters"));
        }
        Ok(())
    }

    pub fn check_demo(&self, demo: &Demonstration) -> Result<()> {
        if demo.state >= self.num_states() {
            return Err(Error::InvalidIndex {
                index: demo.state,
                len: self.num_states(),
            });
        }
        Ok(())
    }

    /// Physical per-grid rewards from encoded parameters.
    pub fn rewards(&self, params: &RewardParams) -> Result<Vec<f64>> {
        self.check_params(params)?;
        let p = params.as_slice();
        Ok(self.encoding.iter().map(|&e| p[e]).collect())
    }

    /// Encode physical per-grid values into this holder's parameter order.
    pub fn encode(&self, physical: &[f64]) -> Result<RewardParams> {
        if physical.len() != self.num_states() {
            return Err(Error::Shape {
                what: "physical rewards",
                expected: self.num_states(),
                found: physical.len(),
            });
        }
        let mut out = vec![0.0; physical.len()];
        for (g, &e) in self.encoding.iter().enumerate() {
            out[e] = physical[g];
        }
        Ok(ParameterVector::row_vector(out))
    }

    /// Re-express parameters held under `from`'s encoding in this encoding.
    pub fn translate(&self, from: &GridworldMdp, params: &RewardParams) -> Result<RewardParams> {
        if !self.same_world(from) {
            return Err(Error::Permutation("worlds differ beyond encoding".into()));
        }
        self.encode(&from.rewards(params)?)
    }
}
