//! Safe imitation learning in simulated obstacle fields.
//!
//! The crate couples adversarial inverse reinforcement learning with a
//! learned neural control barrier: a discriminator recovers a reward from
//! demonstrations, a Gaussian policy maximizes it, and a barrier network
//! trained on safe and near-danger states adds a hinge penalty that steers
//! the policy away from obstacles.
//!
//! Modules:
//! - [`dynamics`]: deterministic point-mass environments (2-d racecar,
//!   3-d drone) with moving obstacles.
//! - [`diffnet`]: minimal MLPs with exact reverse-mode gradients and an
//!   adaptive optimizer.
//! - [`demos`]: scripted expert, demonstration rollouts, safe and
//!   potentially-dangerous state sets.
//! - [`airl`]: discriminator, recovered reward, clipped policy-gradient
//!   training.
//! - [`cbf`]: barrier losses, joint training, sampled feasibility checks.
//! - [`harness`]: evaluation metrics, heatmaps, config files, and the CLI.

pub mod airl;
pub mod cbf;
pub mod demos;
pub mod diffnet;
pub mod dynamics;
pub mod harness;
pub mod report;

mod error;
pub(crate) mod seeding;

pub use error::{Error, Result};
