//! Experiment driver: trains the agent on the pendulum with no filter, the
//! QP filter or the SOS filter, and writes per-seed CSV logs.

mod config;
mod report;
mod run;

pub use config::{Algorithm, ExperimentConfig, FULL_SCALE_EPISODES};
pub use report::{
    read_seed_dir, summarize, trailing_median, write_summary, SeedReport, EPISODES_HEADER, SAFETY_HEADER, STEPS_HEADER,
    SUMMARY_HEADER,
};
pub use run::{run_experiment, run_seed, EpisodeRecord, SeedOutcome, StepRow};

use thiserror::Error;

use crate::cbf::CbfError;
use crate::ddpg::DdpgError;
use crate::gp::GpError;
use crate::pendulum::PendulumError;
use crate::poly::PolyError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed report file {path}: {msg}")]
    Report { path: String, msg: String },
    #[error(transparent)]
    Pendulum(#[from] PendulumError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Cbf(#[from] CbfError),
    #[error(transparent)]
    Ddpg(#[from] DdpgError),
}
