//! Planner-guided reinforcement-learning skills for tabletop manipulation.
//!
//! - [`env`]: deterministic kinematic simulator and scenario files.
//! - [`nn`]: dense networks, Gaussian policy heads and Adam.
//! - [`rl`]: GAE, PPO, SAC and skill training.
//! - [`planner`]: instruction grammar, rule-based and LLM-backed task planning.
//! - [`integration`]: the plan / execute / monitor / replan loop.
//! - [`bench`]: benchmark batteries, metrics and report emission.

pub mod bench;
pub mod env;
pub mod integration;
pub mod nn;
pub mod planner;
pub mod rl;
