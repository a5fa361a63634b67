//! Robot drumming engine: drum scores in, stick trajectories, a reduced
//! hand-stick-drum simulator and a residual PPO learner out.

pub mod choreography;
pub mod cli;
pub mod config;
pub mod env;
pub mod eval;
pub mod learner;
pub mod obs;
pub mod reward;
pub mod scenario;
pub mod selftest;
pub mod score;
pub mod world;
