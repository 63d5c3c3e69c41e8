//! Forward-backward (FB) representations of reward-free Markov decision
//! processes.
//!
//! The crate is organised around the three phases of the method:
//!
//! * **unsupervised training** ([`train`]): learn `F(s, a, z)` and `B(g)` from
//!   reward-free transitions stored in a [`replay::ReplayBuffer`], so that
//!   `F(s, a, z)ᵀ B(g)` approximates the successor-state density of the policy
//!   `π_z(s) = argmax_a F(s, a, z)ᵀ z`;
//! * **reward inference** ([`reward`]): turn a reward description into a task
//!   vector `z_R = E_ρ[r · B]`;
//! * **exploitation** ([`model`]): act greedily (or softly) with respect to
//!   `Q(s, a) = F(s, a, z_R)ᵀ z_R`.
//!
//! [`oracle`] provides exact tabular ground truth (successor measures, value
//! iteration, the exact finite-dimensional FB construction and the analytic
//! cycle solution) used to verify every stage.

pub mod diffnet;
pub mod envs;
pub mod error;
pub mod eval;
pub mod exec;
pub mod model;
pub mod oracle;
pub mod replay;
pub mod reward;
pub mod rng;
pub mod train;

pub use error::{FbError, Result};
pub use rng::RandomStream;
