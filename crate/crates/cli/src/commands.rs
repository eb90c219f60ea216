use std::path::Path;

use anyhow::{Context as _, Result};
use nbia_core::channel::{import_channels, write_channels};
use nbia_core::environment::{best_beam_index, solve_pap_beams};
use nbia_core::scenario::{
    derive_seed, evaluate, run_demand_scenario, train_round, EvalPolicy, Simulation, System,
};
use nbia_core::{linear_to_db, Agent, AgentCheckpoint, ChannelRealization, Error, RunConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::output::Outputs;
use crate::svg::{line_chart, Series};
use crate::{Common, Policy};

/// Maps the first recognizable cause to the documented exit code.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                Error::Io(_) | Error::Csv(_) => 3,
                Error::OracleViolation(_) | Error::DegenerateChannel => 4,
                _ => 2,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    4
}

#[derive(Clone, Copy, PartialEq)]
enum EpisodesFlag {
    Training,
    Evaluation,
}

fn load_config(common: &Common, episodes: EpisodesFlag) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(n) = common.paps {
        cfg.training.paps = n;
    }
    if let Some(n) = common.episodes {
        match episodes {
            EpisodesFlag::Training => cfg.training.episodes = n,
            EpisodesFlag::Evaluation => cfg.evaluation.episodes = n,
        }
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.to_string_lossy().into_owned();
    }
    cfg.validate().context("command-line overrides")?;
    Ok(cfg)
}

fn open_outputs(cfg: &RunConfig) -> Result<Outputs> {
    let mut out = Outputs::create(&cfg.output_dir)?;
    out.write("effective.config", cfg.to_toml())?;
    Ok(out)
}

fn load_agent(path: &Path) -> Result<Agent> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let ck: AgentCheckpoint = serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    Ok(Agent::from_checkpoint(ck)?)
}

fn json(value: &impl Serialize) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(Error::from)?;
    v.push(b'\n');
    Ok(v)
}

#[derive(Serialize)]
struct RoundSummary {
    round: usize,
    sap_index: usize,
    pap_indices: Vec<usize>,
    trailing_window: usize,
    trailing_mean_normalized_regret: f64,
    final_epsilon: f64,
}

pub fn train(common: &Common, jobs: usize, plot: bool) -> Result<()> {
    let cfg = load_config(common, EpisodesFlag::Training)?;
    let mut out = open_outputs(&cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .context("building thread pool")?;
    let rounds = cfg.training.rounds;
    let results: Vec<_> = pool.install(|| {
        (0..rounds)
            .into_par_iter()
            .map(|r| train_round(&cfg, r))
            .collect()
    });

    let window = 5000.min(cfg.training.episodes);
    let mut summary = Vec::with_capacity(rounds);
    for (r, res) in results.into_iter().enumerate() {
        let (log, agent) = res?;
        let prefix = if rounds == 1 {
            String::new()
        } else {
            format!("round_{r:03}/")
        };
        let mut csv = Vec::new();
        log.write_csv(&mut csv)?;
        out.write(&format!("{prefix}training_log.csv"), csv)?;
        out.write(&format!("{prefix}agent.json"), json(&agent.checkpoint())?)?;
        if plot {
            let ma = log.moving_average();
            let points = ma.iter().enumerate().map(|(i, &v)| (i as f64, v)).collect();
            let svg = line_chart(
                "Training regret",
                "episode",
                "normalized regret (moving average)",
                &[Series {
                    label: "regret",
                    points,
                }],
            );
            out.write(&format!("{prefix}regret.svg"), svg)?;
        }
        let s = RoundSummary {
            round: r,
            sap_index: log.binding.sap_index,
            pap_indices: log.binding.pap_indices.clone(),
            trailing_window: window,
            trailing_mean_normalized_regret: log.trailing_mean_regret(window),
            final_epsilon: agent.epsilon(),
        };
        println!(
            "round {r}: sap {} paps {:?} trailing regret {:.4}",
            s.sap_index, s.pap_indices, s.trailing_mean_normalized_regret
        );
        summary.push(s);
    }
    out.write("summary.json", json(&summary)?)?;
    out.commit();
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    policy: &'static str,
    seed: u64,
    #[serde(flatten)]
    metrics: nbia_core::scenario::EvalMetrics,
}

pub fn eval(common: &Common, agent_path: &Path, policy: Policy) -> Result<()> {
    let cfg = load_config(common, EpisodesFlag::Evaluation)?;
    let agent = load_agent(agent_path)?;
    let (name, policy) = match policy {
        Policy::Agent => ("agent", EvalPolicy::Agent),
        Policy::Oracle => ("oracle", EvalPolicy::Oracle),
        Policy::UniformRandom => ("uniform_random", EvalPolicy::UniformRandom),
    };
    let metrics = evaluate(&agent, &cfg, cfg.evaluation.episodes, cfg.seed, policy)?;
    let mut out = open_outputs(&cfg)?;
    out.write(
        "eval.json",
        json(&EvalReport {
            policy: name,
            seed: cfg.seed,
            metrics,
        })?,
    )?;
    out.commit();
    println!(
        "{name}: snr ratio {:.4}, normalized regret {:.4}, accuracy {:.4} over {} episodes",
        metrics.mean_snr_ratio,
        metrics.mean_normalized_regret,
        metrics.action_accuracy,
        metrics.episodes
    );
    Ok(())
}

#[derive(Serialize)]
struct ScenarioSummary {
    sap_index: usize,
    sap_agent_beam: usize,
    sap_best_beam: usize,
    systems: Vec<SystemSummary>,
}

#[derive(Serialize)]
struct SystemSummary {
    system: &'static str,
    time_averaged_ee_bpj: f64,
    mean_capacity_bps: f64,
}

pub fn scenario(common: &Common, agent_path: &Path, plot: bool) -> Result<()> {
    let cfg = load_config(common, EpisodesFlag::Training)?;
    let agent = load_agent(agent_path)?;
    let trace = run_demand_scenario(&cfg, &agent)?;
    let mut out = open_outputs(&cfg)?;
    let mut csv = Vec::new();
    trace.write_csv(&mut csv)?;
    out.write("scenario_trace.csv", csv)?;
    let systems: Vec<SystemSummary> = System::ALL
        .iter()
        .map(|&s| {
            let t = trace.system(s);
            SystemSummary {
                system: s.name(),
                time_averaged_ee_bpj: t.time_averaged_ee(),
                mean_capacity_bps: t.mean_capacity(),
            }
        })
        .collect();
    for s in &systems {
        println!(
            "{:<10} EE {:.4e} bit/J, mean capacity {:.4e} bit/s",
            s.system, s.time_averaged_ee_bpj, s.mean_capacity_bps
        );
    }
    out.write(
        "scenario.json",
        json(&ScenarioSummary {
            sap_index: trace.sap_index,
            sap_agent_beam: trace.sap_agent_beam,
            sap_best_beam: trace.sap_best_beam,
            systems,
        })?,
    )?;
    if plot {
        type Pick = fn(&nbia_core::scenario::TraceSample) -> f64;
        let charts: [(&str, &str, &str, Pick); 3] = [
            ("capacity.svg", "Network capacity", "bit/s", |s| {
                s.capacity_bps
            }),
            ("power.svg", "Network power", "W", |s| s.power_w),
            ("energy_efficiency.svg", "Energy efficiency", "bit/J", |s| {
                s.ee_bpj
            }),
        ];
        for (file, title, unit, pick) in charts {
            let series: Vec<Series> = System::ALL
                .iter()
                .map(|&sys| Series {
                    label: sys.name(),
                    points: trace
                        .system(sys)
                        .samples
                        .iter()
                        .map(|s| (s.t_s * 1e3, pick(s)))
                        .collect(),
                })
                .collect();
            out.write(file, line_chart(title, "time (ms)", unit, &series))?;
        }
    }
    out.commit();
    Ok(())
}

/// Channels from every AP to `points` evenly spaced grid points (all
/// points when `None`).
fn site_channels(cfg: &RunConfig, points: Option<usize>) -> Result<Vec<ChannelRealization>> {
    let sim = Simulation::new(cfg)?;
    let n = sim.user_grid().len();
    let k = points.unwrap_or(n).min(n);
    let aps: Vec<usize> = (0..cfg.layout.num_aps()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 8));
    let mut out = Vec::with_capacity(k * aps.len());
    for i in 0..k {
        out.extend(sim.channels_at(&aps, i * n / k, &mut rng)?);
    }
    Ok(out)
}

pub fn gen_channels(common: &Common, points: Option<usize>) -> Result<()> {
    let cfg = load_config(common, EpisodesFlag::Training)?;
    let channels = site_channels(&cfg, points)?;
    let mut out = open_outputs(&cfg)?;
    let mut buf = Vec::new();
    write_channels(&mut buf, &channels)?;
    let path = out.write("channels.jsonl", buf)?;
    out.commit();
    println!("{} channels written to {}", channels.len(), path.display());
    Ok(())
}

#[derive(Serialize)]
struct SweepRecord {
    ap: [f64; 3],
    user: [f64; 3],
    best_beam: usize,
    snr_db: f64,
}

#[derive(Serialize)]
struct SweepReport {
    codebook_size: usize,
    /// Sequential transmissions an exhaustive sweep needs per AP.
    sweep_length: usize,
    records: Vec<SweepRecord>,
}

pub fn sweep_baseline(common: &Common, channels: Option<&Path>) -> Result<()> {
    let cfg = load_config(common, EpisodesFlag::Training)?;
    let cb = cfg.build_codebook()?;
    let set = match channels {
        Some(p) => {
            import_channels(p, cb.dim()).with_context(|| format!("importing {}", p.display()))?
        }
        None => site_channels(&cfg, None)?,
    };
    let hs: Vec<&[nbia_core::Complex64]> = set.iter().map(|c| &c.h[..]).collect();
    let beams = solve_pap_beams(&hs, &cb)?;
    let mut records = Vec::with_capacity(set.len());
    for (ch, &b) in set.iter().zip(&beams) {
        if best_beam_index(&ch.h, &cb) != b {
            return Err(Error::OracleViolation("sweep disagrees with per-AP argmax".into()).into());
        }
        records.push(SweepRecord {
            ap: ch.ap_position,
            user: ch.user_position,
            best_beam: b,
            snr_db: linear_to_db(cfg.layout.snr(&ch.h, cb.beam(b))?),
        });
    }
    let mut out = open_outputs(&cfg)?;
    out.write(
        "baseline.json",
        json(&SweepReport {
            codebook_size: cb.len(),
            sweep_length: cb.len(),
            records,
        })?,
    )?;
    out.commit();
    println!("swept {} channels over {} beams", set.len(), cb.len());
    Ok(())
}

pub fn default_config(out: Option<&Path>) -> Result<()> {
    let text = RunConfig::default().to_toml();
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}
