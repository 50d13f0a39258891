pub mod baselines;
pub mod cli;
pub mod env;
pub mod error;
pub mod instance;
pub mod net;
pub mod planner;
pub mod trainer;
