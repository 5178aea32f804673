//! Teacher-aware iterative learning.
//!
//! - [`linmodel`]: linear losses, logits and exact gradients.
//! - [`pedagogy`]: teachers, the Boltzmann selection model and learner updates.
//! - [`gridworld`]: gridworld MDPs, soft value iteration and the IRL likelihood.
//! - [`datagen`]: synthetic tasks, orthogonal feature maps, feature files.
//! - [`harness`]: seed-sweep experiment runner, summaries and CSV output.
//! - [`session`]: interactive teaching sessions and their HTTP service.

pub mod datagen;
pub mod error;
pub mod gridworld;
pub mod harness;
pub mod linmodel;
pub mod pedagogy;
pub mod session;

pub use error::{Error, Result};
