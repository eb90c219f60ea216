//! Training loops, evaluation, IA timing and the demand scenario.

mod demand;
mod timing;
mod training;

pub use demand::{
    capacity, energy_efficiency, run_demand_scenario, EventKind, ScenarioConfig, ScenarioEvent,
    ScenarioTrace, System, SystemTrace, TraceSample,
};
pub use timing::{ia_wait_time, IaSystem, TimingModel};
pub use training::{
    check_binding, derive_seed, evaluate, round_seed, train_round, ChannelMode, EpisodeDraw,
    EpisodeRecord, EvalMetrics, EvalPolicy, PapSelection, RewardTarget, Simulation, TrainingConfig,
    TrainingLog,
};
