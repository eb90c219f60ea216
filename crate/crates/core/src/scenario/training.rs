//! Training rounds and greedy evaluation of the bandit.

use std::io::Write;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{Agent, AgentBinding, Experience};
use crate::channel::{generate_channel, ChannelRealization};
use crate::codebook::{beam_gain_unchecked, Codebook};
use crate::config::RunConfig;
use crate::environment::{
    beam_efficiency, best_beam_oracle, build_context, estimate_channel, normalized_regret, regret,
    reward, solve_pap_beams, Context, EpisodeOutcome,
};
use crate::neuralnet::Scratch;
use crate::{Error, Position, Result};

/// How the PAP set is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PapSelection {
    /// One random subset per round, kept for every episode.
    PerRound,
    /// A fresh subset (same size, same SAP) every episode.
    PerEpisode,
}

/// Where per-episode channels come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    /// One realization per (AP, grid point), drawn once from the channel
    /// seed and reused every time the user lands there, like a ray-traced
    /// dataset of a static room.
    Site,
    /// A fresh realization every episode.
    Fresh,
}

/// What the network regresses onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardTarget {
    /// alpha * sigma^2 * ||h||^2: the captured fraction of the matched-filter
    /// gain, in [0, 1]. Same per-episode argmax as the raw reward.
    Normalized,
    /// The raw reward alpha.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub episodes: usize,
    /// Number of awake neighbors N.
    pub paps: usize,
    pub rounds: usize,
    pub pap_selection: PapSelection,
    /// Fix the learning SAP instead of drawing it per round.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sap_index: Option<usize>,
    pub moving_average_window: usize,
    /// Channel-estimate error; perfect estimates when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate_error_snr_db: Option<f64>,
    pub reward_target: RewardTarget,
    pub channels: ChannelMode,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            episodes: 50_000,
            paps: 5,
            rounds: 1,
            pap_selection: PapSelection::PerRound,
            sap_index: None,
            moving_average_window: 1000,
            estimate_error_snr_db: None,
            reward_target: RewardTarget::Normalized,
            channels: ChannelMode::Site,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self, num_aps: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("training: {m}")));
        if self.episodes == 0 {
            return bad("episodes must be at least 1".into());
        }
        if self.rounds == 0 {
            return bad("rounds must be at least 1".into());
        }
        if self.paps == 0 || self.paps >= num_aps {
            return bad(format!(
                "paps must satisfy 1 <= paps < {num_aps} (number of APs), got {}",
                self.paps
            ));
        }
        if let Some(s) = self.sap_index {
            if s >= num_aps {
                return bad(format!("sap_index {s} out of range"));
            }
        }
        if self.moving_average_window == 0 {
            return bad("moving_average_window must be positive".into());
        }
        Ok(())
    }
}

/// splitmix64 mixing of a base seed and a stream tag.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_SETUP: u64 = 1;
const STREAM_ENV: u64 = 2;
const STREAM_AGENT: u64 = 3;
const STREAM_INIT: u64 = 4;
const STREAM_EVAL: u64 = 5;
const STREAM_POLICY: u64 = 6;

/// Seed of training round `round`.
pub fn round_seed(seed: u64, round: usize) -> u64 {
    derive_seed(seed, 1000 + round as u64)
}

/// One drawn episode: user, channels, PAP sweep results and the context.
#[derive(Debug, Clone)]
pub struct EpisodeDraw {
    pub user: Position,
    pub pap_indices: Vec<usize>,
    pub pap_channels: Vec<ChannelRealization>,
    pub pap_beams: Vec<usize>,
    pub sap_channel: ChannelRealization,
    pub context: Context,
}

/// Fixed environment pieces shared by every episode.
#[derive(Debug, Clone)]
pub struct Simulation {
    cfg: RunConfig,
    codebook: Codebook,
    grid: Vec<Position>,
    noise: f64,
    /// `site[ap][g]` in [`ChannelMode::Site`], empty otherwise.
    site: Vec<Vec<ChannelRealization>>,
}

impl Simulation {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.layout.user_grid();
        let site = match cfg.training.channels {
            ChannelMode::Fresh => Vec::new(),
            ChannelMode::Site => {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.channel.rng_seed);
                cfg.layout
                    .ap_positions
                    .iter()
                    .map(|ap| {
                        grid.iter()
                            .map(|u| generate_channel(ap, u, &cfg.channel, &cfg.array, &mut rng))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        Ok(Self {
            codebook: cfg.build_codebook()?,
            grid,
            noise: cfg.layout.noise_power_mw(),
            cfg: cfg.clone(),
            site,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn user_grid(&self) -> &[Position] {
        &self.grid
    }

    /// Draws the PAP set and the learning SAP for a round.
    pub fn draw_binding<R: Rng>(&self, rng: &mut R) -> AgentBinding {
        let n_ap = self.cfg.layout.num_aps();
        let sap_index = self
            .cfg
            .training
            .sap_index
            .unwrap_or_else(|| rng.gen_range(0..n_ap));
        let pap_indices = self.draw_paps(rng, sap_index);
        AgentBinding {
            sap_index,
            pap_indices,
            codebook_size: self.codebook.len(),
        }
    }

    fn draw_paps<R: Rng>(&self, rng: &mut R, sap: usize) -> Vec<usize> {
        let others: Vec<usize> = (0..self.cfg.layout.num_aps())
            .filter(|&i| i != sap)
            .collect();
        let mut picked: Vec<usize> = sample(rng, others.len(), self.cfg.training.paps)
            .into_iter()
            .map(|i| others[i])
            .collect();
        picked.sort_unstable();
        picked
    }

    /// Channels from every AP in `aps` to user grid point `g`. Site mode
    /// leaves `rng` untouched.
    pub fn channels_at<R: Rng>(
        &self,
        aps: &[usize],
        g: usize,
        rng: &mut R,
    ) -> Result<Vec<ChannelRealization>> {
        let user = self
            .grid
            .get(g)
            .ok_or_else(|| Error::InvalidArgument(format!("grid point {g} out of range")))?;
        aps.iter()
            .map(|&i| {
                if self.site.is_empty() {
                    generate_channel(
                        &self.cfg.layout.ap_positions[i],
                        user,
                        &self.cfg.channel,
                        &self.cfg.array,
                        rng,
                    )
                } else {
                    Ok(self.site[i][g].clone())
                }
            })
            .collect()
    }

    pub fn context_for(&self, pap_indices: &[usize], pap_beams: &[usize]) -> Result<Context> {
        let positions: Vec<Position> = pap_indices
            .iter()
            .map(|&i| self.cfg.layout.ap_positions[i])
            .collect();
        let beams: Vec<&[crate::Complex64]> =
            pap_beams.iter().map(|&b| self.codebook.beam(b)).collect();
        build_context(&positions, &beams, self.cfg.layout.room)
    }

    pub fn draw_episode<R: Rng>(&self, binding: &AgentBinding, rng: &mut R) -> Result<EpisodeDraw> {
        let pap_indices = match self.cfg.training.pap_selection {
            PapSelection::PerRound => binding.pap_indices.clone(),
            PapSelection::PerEpisode => self.draw_paps(rng, binding.sap_index),
        };
        let g = rng.gen_range(0..self.grid.len());
        let user = self.grid[g];
        let pap_channels = self.channels_at(&pap_indices, g, rng)?;
        let sap_channel = self.channels_at(&[binding.sap_index], g, rng)?.remove(0);
        let pap_beams = solve_pap_beams(
            &pap_channels.iter().map(|c| &c.h[..]).collect::<Vec<_>>(),
            &self.codebook,
        )?;
        let context = self.context_for(&pap_indices, &pap_beams)?;
        Ok(EpisodeDraw {
            user,
            pap_indices,
            pap_channels,
            pap_beams,
            sap_channel,
            context,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Exploration probability used for this episode.
    pub epsilon: f64,
    pub outcome: EpisodeOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    pub binding: AgentBinding,
    pub records: Vec<EpisodeRecord>,
    pub window: usize,
}

impl TrainingLog {
    pub fn normalized_regrets(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.outcome.normalized_regret())
            .collect()
    }

    /// Trailing moving average of normalized regret (shorter at the start).
    pub fn moving_average(&self) -> Vec<f64> {
        let v = self.normalized_regrets();
        let mut out = Vec::with_capacity(v.len());
        let mut sum = 0.0;
        for i in 0..v.len() {
            sum += v[i];
            if i >= self.window {
                sum -= v[i - self.window];
            }
            out.push(sum / (i + 1).min(self.window) as f64);
        }
        out
    }

    /// Mean normalized regret over the last `n` episodes.
    pub fn trailing_mean_regret(&self, n: usize) -> f64 {
        let v = self.normalized_regrets();
        let tail = &v[v.len().saturating_sub(n)..];
        tail.iter().sum::<f64>() / tail.len() as f64
    }

    /// `episode,epsilon,reward,regret,normalized_regret,moving_avg`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "episode",
            "epsilon",
            "reward",
            "regret",
            "normalized_regret",
            "moving_avg",
        ])?;
        for (r, ma) in self.records.iter().zip(self.moving_average()) {
            out.write_record([
                r.episode.to_string(),
                r.epsilon.to_string(),
                r.outcome.reward.to_string(),
                r.outcome.regret.to_string(),
                r.outcome.normalized_regret().to_string(),
                ma.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs one round: a fresh agent learns over `training.episodes` episodes.
pub fn train_round(cfg: &RunConfig, round: usize) -> Result<(TrainingLog, Agent)> {
    let sim = Simulation::new(cfg)?;
    let seed = round_seed(cfg.seed, round);
    let mut setup_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_SETUP));
    let binding = sim.draw_binding(&mut setup_rng);
    let mut agent = Agent::new(
        cfg.mlp_config(derive_seed(seed, STREAM_INIT)),
        cfg.exploration,
        cfg.replay,
        binding.clone(),
        derive_seed(seed, STREAM_AGENT),
    )?;
    let mut env_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_ENV));
    let mut records = Vec::with_capacity(cfg.training.episodes);
    for episode in 0..cfg.training.episodes {
        let epsilon = agent.epsilon();
        let draw = sim.draw_episode(&binding, &mut env_rng)?;
        let (action, explored) = agent.select_action(&draw.context)?;
        let h = estimate_channel(
            &draw.sap_channel.h,
            cfg.training.estimate_error_snr_db,
            &mut env_rng,
        );
        let outcome = score(&sim, &h, action, explored)?;
        let target = match cfg.training.reward_target {
            RewardTarget::Normalized => beam_efficiency(&h, sim.codebook.beam(action))?,
            RewardTarget::Raw => outcome.reward,
        };
        agent.observe(Experience {
            context: draw.context,
            action,
            reward: target,
        })?;
        agent.decay_epsilon();
        records.push(EpisodeRecord {
            episode,
            epsilon,
            outcome,
        });
    }
    Ok((
        TrainingLog {
            binding,
            records,
            window: cfg.training.moving_average_window,
        },
        agent,
    ))
}

fn score(
    sim: &Simulation,
    h: &[crate::Complex64],
    action: usize,
    explored: bool,
) -> Result<EpisodeOutcome> {
    let alpha = reward(h, sim.codebook.beam(action), sim.noise)?;
    let (best_action, alpha_max) = best_beam_oracle(h, &sim.codebook, sim.noise)?;
    let delta = regret(alpha, alpha_max)?;
    Ok(EpisodeOutcome {
        chosen_action: action,
        reward: alpha,
        regret: delta,
        alpha_max,
        best_action,
        explored,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalPolicy {
    /// The agent's greedy choice.
    Agent,
    /// Exhaustive sweep on the true channel.
    Oracle,
    UniformRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub episodes: usize,
    /// Mean of |h b_chosen|^2 / |h b_oracle|^2.
    pub mean_snr_ratio: f64,
    pub mean_normalized_regret: f64,
    /// Fraction of episodes where the chosen beam is the oracle beam.
    pub action_accuracy: f64,
}

/// Pure evaluation on fresh episodes drawn from `seed`; no learning.
pub fn evaluate(
    agent: &Agent,
    cfg: &RunConfig,
    episodes: usize,
    seed: u64,
    policy: EvalPolicy,
) -> Result<EvalMetrics> {
    if episodes == 0 {
        return Err(Error::InvalidArgument(
            "evaluation needs at least one episode".into(),
        ));
    }
    let sim = Simulation::new(cfg)?;
    check_binding(agent.binding(), cfg, sim.codebook.len())?;
    let mut env_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_EVAL));
    let mut policy_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_POLICY));
    let mut scratch = Scratch::default();
    let (mut ratio, mut regret_sum, mut hits) = (0.0, 0.0, 0usize);
    for _ in 0..episodes {
        let draw = sim.draw_episode(agent.binding(), &mut env_rng)?;
        let h = &draw.sap_channel.h;
        let best = crate::environment::best_beam_index(h, &sim.codebook);
        let action = match policy {
            EvalPolicy::Agent => agent.greedy_action(&draw.context, &mut scratch)?,
            EvalPolicy::Oracle => best,
            EvalPolicy::UniformRandom => policy_rng.gen_range(0..sim.codebook.len()),
        };
        let g = beam_gain_unchecked(h, sim.codebook.beam(action));
        let g_best = beam_gain_unchecked(h, sim.codebook.beam(best));
        ratio += g / g_best;
        let alpha = reward(h, sim.codebook.beam(action), sim.noise)?;
        let alpha_max = reward(h, sim.codebook.beam(best), sim.noise)?;
        regret_sum += normalized_regret(alpha, alpha_max)?;
        hits += usize::from(action == best);
    }
    let n = episodes as f64;
    Ok(EvalMetrics {
        episodes,
        mean_snr_ratio: ratio / n,
        mean_normalized_regret: regret_sum / n,
        action_accuracy: hits as f64 / n,
    })
}

/// Rejects an agent whose binding does not fit the configuration.
pub fn check_binding(b: &AgentBinding, cfg: &RunConfig, m: usize) -> Result<()> {
    if b.pap_indices.len() != cfg.training.paps {
        return Err(Error::Checkpoint(format!(
            "agent was trained with {} PAPs but the configuration has {}",
            b.pap_indices.len(),
            cfg.training.paps
        )));
    }
    if b.codebook_size != m {
        return Err(Error::Checkpoint(format!(
            "agent was trained with {} beams but the codebook has {m}",
            b.codebook_size
        )));
    }
    let n = cfg.layout.num_aps();
    if b.sap_index >= n || b.pap_indices.iter().any(|&i| i >= n || i == b.sap_index) {
        return Err(Error::Checkpoint(
            "agent AP indices do not fit the layout".into(),
        ));
    }
    Ok(())
}
