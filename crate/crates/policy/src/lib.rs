//! Hierarchical interaction-seeking control: subgoal graphs, a PPO-trained
//! subgoal selector with a graph-novelty bonus, and low-level controllers
//! (CEM-MPC or a Gaussian policy) that induce a target interaction.

pub mod dynamics;
pub mod high_level;
pub mod low_level;
pub mod mpc;
pub mod ppo;
pub mod run;
pub mod subgoal;
pub mod targets;

pub use dynamics::{Dynamics, LearnedDynamics, OracleDynamics};
pub use high_level::{high_level_select, policy_input, HighLevelPolicy, Selection};
pub use low_level::{LowLevelMode, PgConfig, PgPolicy};
pub use mpc::{mpc_act, mpc_plan, MpcConfig};
pub use ppo::{gae, ppo_update, HlStep, PpoConfig, PpoStats, RolloutBuffer};
pub use run::{
    run_task, run_task_from, train_high_level, Controller, EpisodeResult, HighLevelMode, LearnedController, OracleController,
    RunConfig, TraceEntry, TrainReport,
};
pub use subgoal::{diversity_reward, novelty_reward, SubgoalGraph, VisitedSet};
pub use targets::{geometric_targets, infer_target_states, GoalStates, InverseModel, TargetSource};

use fioc_env::EnvError;
use fioc_model::ModelError;
use fioc_numkit::NumError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{0} is not trained")]
    Untrained(&'static str),
    #[error("planning failed: {0}")]
    Planning(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

pub type Result<T> = std::result::Result<T, PolicyError>;
