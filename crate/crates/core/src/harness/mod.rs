//! Training, evaluation, sweeps and verification.

mod metrics;
mod plan;
mod run;
mod trainer;
pub mod verify;

pub use metrics::{mean_std, rolling, write_jsonl, EpisodeAccumulator, EpisodeSummary, MetricsRecord, SCHEMA_VERSION};
pub use plan::ExperimentPlan;
pub use run::{
    config_hash, load_checkpoint, run_eval, run_sweep, run_training, save_checkpoint, write_sweep_csv, CheckpointMeta,
    EvalSummary, SweepAxis, SweepRow, TrainingRun,
};
pub use trainer::{act, agent_rng, env_rng, Step, Trainer};
