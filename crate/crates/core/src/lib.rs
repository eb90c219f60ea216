//! Neighbor-aided initial access for mmWave cell-free networks.
//!
//! A sleeping access point (SAP) that is woken up has no beam to serve the
//! user until the next beam-sweep slot. This crate simulates the network
//! around it and trains a deep contextual bandit that predicts the SAP's
//! serving beam from the beams and locations of the awake neighbors (PAPs).
//!
//! Layout:
//! - [`channel`]: clustered mmWave channel realizations and channel dumps
//! - [`codebook`]: planar-array steering vectors and the DFT beam codebook
//! - [`environment`]: SNR, beam-sweep oracle, context, reward and regret
//! - [`neuralnet`]: two-branch MLP reward approximator with Adam
//! - [`agent`]: decaying epsilon-greedy contextual bandit
//! - [`scenario`]: training rounds, evaluation, IA timing, demand scenario
//! - [`config`]: the merged run configuration

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod channel;
pub mod codebook;
pub mod config;
pub mod environment;
mod error;
pub mod neuralnet;
pub mod scenario;

pub use num_complex::Complex64;

pub use agent::{Agent, AgentCheckpoint, Experience, ExplorationSchedule, ReplayConfig};
pub use channel::{ChannelParams, ChannelRealization, LosBlockage};
pub use codebook::{ArrayGeometry, ArrayOrientation, Codebook};
pub use config::RunConfig;
pub use environment::{Context, EpisodeOutcome, NetworkLayout};
pub use error::{Error, Result};
pub use neuralnet::{Mlp, MlpConfig, Mode};
pub use scenario::{ScenarioTrace, TimingModel, TrainingConfig, TrainingLog};

/// 3-D position in meters.
pub type Position = [f64; 3];

/// Converts decibels to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Converts a linear power ratio to decibels.
pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Converts dBm to milliwatts.
pub fn dbm_to_mw(dbm: f64) -> f64 {
    db_to_linear(dbm)
}
