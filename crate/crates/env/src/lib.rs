//! Bounded 2-D arena of circular objects whose pairwise contacts define the
//! ground-truth interaction graph at every step.

pub mod config;
pub mod graph;
pub mod io;
pub mod observe;
pub mod physics;
pub mod sim;
pub mod task;

pub use config::{EnvConfig, MixingKind};
pub use graph::InteractionGraph;
pub use io::{contact_summary, read_jsonl, read_jsonl_file, write_jsonl, write_jsonl_file, ContactSummary};
pub use observe::{raw_features, Mixing};
pub use physics::{
    advance, contact_impulses, ground_truth_graph, interaction_impulse, self_transition, ObjectState, SelfParams,
    WorldState,
};
pub use sim::{generate_dataset, CollectionPolicy, Env, EpisodeRecord, StepOutcome, StepRecord};
pub use task::{task_reward, TaskSpec, TaskTracker};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid env config: {0}")]
    Config(String),
    #[error("objects do not overlap (distance {distance} > {reach})")]
    NoContact { distance: f64, reach: f64 },
    #[error("unknown task `{0}` (expected reach(j) or chain(j,k))")]
    UnknownTask(String),
    #[error("unknown collection policy `{0}` (expected random or contact-seeking)")]
    UnknownPolicy(String),
    #[error("could not place {0} objects without overlap")]
    Placement(usize),
    #[error("dataset line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("dataset: {0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EnvError>;
