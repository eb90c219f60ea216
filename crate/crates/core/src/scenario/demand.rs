//! Dynamic-demand comparison: the user asks for more throughput while one
//! AP sleeps, and four systems react differently.
//!
//! - proposed: the SAP wakes and serves right away with the bandit's beam,
//!   then joins the regular sweep at the next PBCH
//! - 5G IA: the SAP wakes (drawing awake power) but serves only after the
//!   next PBCH sweep
//! - always-on: every AP is awake and serving throughout
//! - genie: the SAP wakes and serves with the best beam at the demand instant

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::timing::{ia_wait_time, IaSystem};
use super::training::{check_binding, derive_seed, Simulation};
use crate::agent::Agent;
use crate::config::RunConfig;
use crate::environment::{best_beam_index, ApState};
use crate::neuralnet::Scratch;
use crate::{Error, Position, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub duration_s: f64,
    pub demand_time_s: f64,
    /// Radio frames start at `frame_phase_s + k * frame_length_s` on the
    /// scenario clock.
    pub frame_phase_s: f64,
    pub step_s: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            duration_s: 0.020,
            demand_time_s: 0.010,
            frame_phase_s: 0.005,
            step_s: 1e-4,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("scenario: {m}")));
        if !(self.step_s > 0.0 && self.duration_s >= self.step_s) {
            return bad("need 0 < step_s <= duration_s");
        }
        if !(0.0..self.duration_s).contains(&self.demand_time_s) {
            return bad("demand_time_s must lie inside the scenario");
        }
        if !(self.frame_phase_s >= 0.0) {
            return bad("frame_phase_s must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    Proposed,
    FiveG,
    AlwaysOn,
    Genie,
}

impl System {
    pub const ALL: [System; 4] = [
        System::Proposed,
        System::FiveG,
        System::AlwaysOn,
        System::Genie,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            System::Proposed => "proposed",
            System::FiveG => "5g_ia",
            System::AlwaysOn => "always_on",
            System::Genie => "genie",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    DemandChange,
    Wake,
    IaComplete,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEvent {
    pub t_s: f64,
    pub system: System,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t_s: f64,
    pub capacity_bps: f64,
    pub power_w: f64,
    pub ee_bpj: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemTrace {
    pub system: System,
    pub samples: Vec<TraceSample>,
}

impl SystemTrace {
    /// Mean of the pointwise energy efficiency over the uniform time grid.
    pub fn time_averaged_ee(&self) -> f64 {
        self.samples.iter().map(|s| s.ee_bpj).sum::<f64>() / self.samples.len() as f64
    }

    pub fn mean_capacity(&self) -> f64 {
        self.samples.iter().map(|s| s.capacity_bps).sum::<f64>() / self.samples.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTrace {
    pub user: Position,
    pub sap_index: usize,
    pub sap_agent_beam: usize,
    pub sap_best_beam: usize,
    pub systems: Vec<SystemTrace>,
    pub events: Vec<ScenarioEvent>,
}

impl ScenarioTrace {
    pub fn system(&self, s: System) -> &SystemTrace {
        self.systems
            .iter()
            .find(|t| t.system == s)
            .expect("every system is traced")
    }

    /// `t_s,system,capacity_bps,power_w,ee_bpj`, grouped by system.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t_s", "system", "capacity_bps", "power_w", "ee_bpj"])?;
        for st in &self.systems {
            for s in &st.samples {
                out.write_record([
                    s.t_s.to_string(),
                    st.system.name().to_string(),
                    s.capacity_bps.to_string(),
                    s.power_w.to_string(),
                    s.ee_bpj.to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// C = W log2(1 + sum of SNR components).
pub fn capacity(snrs: &[f64], bandwidth_hz: f64) -> Result<f64> {
    if snrs.iter().any(|&g| !(g >= 0.0)) {
        return Err(Error::InvalidArgument(
            "SNR components must be nonnegative".into(),
        ));
    }
    Ok(bandwidth_hz * (1.0 + snrs.iter().sum::<f64>()).log2())
}

/// EE = C / P_total.
pub fn energy_efficiency(capacity_bps: f64, total_power_w: f64) -> Result<f64> {
    if !(total_power_w > 0.0) {
        return Err(Error::InvalidArgument(
            "total power must be positive".into(),
        ));
    }
    Ok(capacity_bps / total_power_w)
}

fn ns(s: f64) -> i64 {
    (s * 1e9).round() as i64
}

/// Runs the demand scenario on frozen channels for a user drawn from the
/// configured seed.
pub fn run_demand_scenario(cfg: &RunConfig, agent: &Agent) -> Result<ScenarioTrace> {
    let sim = Simulation::new(cfg)?;
    check_binding(agent.binding(), cfg, sim.codebook().len())?;
    let layout = &cfg.layout;
    let b = agent.binding();
    let sc = &cfg.scenario;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 7));
    let grid = sim.user_grid();
    let g = rng.gen_range(0..grid.len());
    let user = grid[g];
    let all: Vec<usize> = (0..layout.num_aps()).collect();
    let channels = sim.channels_at(&all, g, &mut rng)?;

    let cb = sim.codebook();
    let best: Vec<usize> = channels.iter().map(|c| best_beam_index(&c.h, cb)).collect();
    let snr_with = |ap: usize, beam: usize| layout.snr(&channels[ap].h, cb.beam(beam));
    let best_snr: Vec<f64> = all
        .iter()
        .map(|&i| snr_with(i, best[i]))
        .collect::<Result<_>>()?;

    let pap_beams: Vec<usize> = b.pap_indices.iter().map(|&i| best[i]).collect();
    let context = sim.context_for(&b.pap_indices, &pap_beams)?;
    let agent_beam = agent.greedy_action(&context, &mut Scratch::default())?;
    let sap = b.sap_index;
    let sap_agent_snr = snr_with(sap, agent_beam)?;

    let tm = &cfg.timing;
    let frame = tm.frame_length_s;
    let wake_in_frame = (sc.demand_time_s - sc.frame_phase_s).rem_euclid(frame);
    let demand = ns(sc.demand_time_s);
    let t_dcb = demand + ns(ia_wait_time(wake_in_frame, tm, IaSystem::Dcb)?);
    let t_5g = demand + ns(ia_wait_time(wake_in_frame, tm, IaSystem::FiveG)?);

    let pap_sum: f64 = b.pap_indices.iter().map(|&i| best_snr[i]).sum();
    let awake = layout.state_power_w(ApState::Awake);
    let asleep = layout.state_power_w(ApState::Sleep);
    let n_ap = layout.num_aps() as f64;
    let n_pap = b.pap_indices.len() as f64;
    let base_power = n_pap * awake + (n_ap - n_pap) * asleep;

    let step = ns(sc.step_s);
    let n = (ns(sc.duration_s) + step - 1) / step;
    let mut systems = Vec::with_capacity(4);
    for system in System::ALL {
        let mut samples = Vec::with_capacity(n as usize);
        for k in 0..n {
            let t = k * step;
            let (sap_snr, sap_awake) = match system {
                System::Proposed if t >= t_5g => (best_snr[sap], true),
                System::Proposed if t >= t_dcb => (sap_agent_snr, true),
                System::FiveG if t >= t_5g => (best_snr[sap], true),
                System::Genie if t >= demand => (best_snr[sap], true),
                System::Proposed | System::FiveG | System::Genie => (0.0, t >= demand),
                System::AlwaysOn => (0.0, true),
            };
            let (snrs, power) = if system == System::AlwaysOn {
                (best_snr.clone(), n_ap * awake)
            } else {
                let extra = if sap_awake { awake - asleep } else { 0.0 };
                (vec![pap_sum, sap_snr], base_power + extra)
            };
            let c = capacity(&snrs, layout.bandwidth_hz)?;
            samples.push(TraceSample {
                t_s: t as f64 * 1e-9,
                capacity_bps: c,
                power_w: power,
                ee_bpj: energy_efficiency(c, power)?,
            });
        }
        systems.push(SystemTrace { system, samples });
    }

    let demand_s = demand as f64 * 1e-9;
    let mut events = Vec::new();
    for system in System::ALL {
        events.push(ScenarioEvent {
            t_s: demand_s,
            system,
            kind: EventKind::DemandChange,
        });
        let ia = match system {
            System::AlwaysOn => continue,
            System::Proposed => t_dcb,
            System::FiveG => t_5g,
            System::Genie => demand,
        };
        events.push(ScenarioEvent {
            t_s: demand_s,
            system,
            kind: EventKind::Wake,
        });
        events.push(ScenarioEvent {
            t_s: ia as f64 * 1e-9,
            system,
            kind: EventKind::IaComplete,
        });
    }

    Ok(ScenarioTrace {
        user,
        sap_index: sap,
        sap_agent_beam: agent_beam,
        sap_best_beam: best[sap],
        systems,
        events,
    })
}
