//! Phase II as a multi-agent constrained MDP.
//!
//! Every message holder is an agent. All agents see the same global node
//! table, receive the same reward (newly reached UAVs) and the same cost
//! (swarm slot energy in broadcast-slot units).

use std::collections::BTreeMap;

use rand::Rng;

use crate::channel::FadingDraw;
use crate::error::{config_err, protocol_err, Result};
use crate::neural::Matrix;
use crate::protocol::{all_idle, execute_slot, run_phase1, Mode, Phase1Outcome, SlotActions, SlotOutcome};
use crate::scenario::{rwp_advance, sample_initial_positions, ScenarioConfig, SwarmState};

/// Columns of one node row: index, x/R_U, y/R_U, z/H, status bit, energy headroom.
pub const NODE_FEATURES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Unicast,
    Broadcast,
    Hybrid,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Unicast => "unicast",
            Scheme::Broadcast => "broadcast",
            Scheme::Hybrid => "hybrid",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "unicast" => Ok(Scheme::Unicast),
            "broadcast" => Ok(Scheme::Broadcast),
            "hybrid" => Ok(Scheme::Hybrid),
            other => Err(config_err(format!("unknown scheme '{other}' (expected unicast, broadcast or hybrid)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchemeSpec {
    pub scheme: Scheme,
    pub n_uavs: usize,
}

impl SchemeSpec {
    pub fn new(scheme: Scheme, n_uavs: usize) -> Result<Self> {
        if n_uavs == 0 {
            return Err(config_err("scheme needs at least one UAV"));
        }
        Ok(Self { scheme, n_uavs })
    }

    pub fn action_count(&self) -> usize {
        match self.scheme {
            Scheme::Unicast => self.n_uavs,
            Scheme::Broadcast => 2,
            Scheme::Hybrid => self.n_uavs + 1,
        }
    }
}

/// Maps an action index of `agent` to its slot mode.
///
/// Unicast targets `0..n-1` are the other UAVs in ascending id order.
pub fn decode_action(agent: usize, index: usize, spec: &SchemeSpec) -> Result<Mode> {
    let n = spec.n_uavs;
    if agent >= n {
        return Err(protocol_err(format!("agent {agent} outside a swarm of {n}")));
    }
    if index >= spec.action_count() {
        return Err(protocol_err(format!(
            "action {index} out of range for the {} scheme ({} actions)",
            spec.scheme.name(),
            spec.action_count()
        )));
    }
    let target = |k: usize| if k < agent { k } else { k + 1 };
    Ok(match spec.scheme {
        Scheme::Broadcast if index == 0 => Mode::Broadcast,
        Scheme::Broadcast => Mode::Idle,
        Scheme::Unicast if index + 1 < n => Mode::Unicast(target(index)),
        Scheme::Unicast => Mode::Idle,
        Scheme::Hybrid if index + 1 < n => Mode::Unicast(target(index)),
        Scheme::Hybrid if index + 1 == n => Mode::Broadcast,
        Scheme::Hybrid => Mode::Idle,
    })
}

/// Inverse of [`decode_action`].
pub fn encode_action(agent: usize, mode: Mode, spec: &SchemeSpec) -> Result<usize> {
    let n = spec.n_uavs;
    let unicast_index = |t: usize| -> Result<usize> {
        if t == agent || t >= n {
            return Err(protocol_err(format!("agent {agent} cannot unicast to {t}")));
        }
        Ok(if t < agent { t } else { t - 1 })
    };
    match (spec.scheme, mode) {
        (Scheme::Broadcast, Mode::Broadcast) => Ok(0),
        (Scheme::Broadcast, Mode::Idle) => Ok(1),
        (Scheme::Unicast, Mode::Unicast(t)) | (Scheme::Hybrid, Mode::Unicast(t)) => unicast_index(t),
        (Scheme::Unicast, Mode::Idle) => Ok(n - 1),
        (Scheme::Hybrid, Mode::Broadcast) => Ok(n - 1),
        (Scheme::Hybrid, Mode::Idle) => Ok(n),
        (scheme, mode) => Err(protocol_err(format!("{mode:?} is not available in the {} scheme", scheme.name()))),
    }
}

/// Global node table shared by every agent, one row per UAV in id order.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub nodes: Matrix,
}

impl Observation {
    pub fn build(state: &SwarmState, config: &ScenarioConfig, headroom: f64) -> Self {
        let n = state.n_uavs();
        let mut data = Vec::with_capacity(n * NODE_FEATURES);
        for (i, p) in state.positions.iter().enumerate() {
            data.extend_from_slice(&[
                i as f64,
                p.x / config.r_swarm,
                p.y / config.r_swarm,
                p.z / config.height,
                if state.has_message[i] { 1.0 } else { 0.0 },
                headroom,
            ]);
        }
        Self { nodes: Matrix::from_vec(n, NODE_FEATURES, data).expect("node table shape") }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.rows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Message holders after the slot.
    pub n_success: usize,
    /// 1-based index of the slot just executed.
    pub slot: usize,
    /// Joules spent by the swarm in this step.
    pub raw_energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    /// Agents that act in the next slot; empty when terminal.
    pub next_agents: Vec<usize>,
    pub reward: f64,
    pub cost: f64,
    pub terminal: bool,
    pub info: StepInfo,
    pub outcome: SlotOutcome,
}

impl StepResult {
    pub fn next_observations(&self) -> BTreeMap<usize, Observation> {
        self.next_agents.iter().map(|&i| (i, self.observation.clone())).collect()
    }
}

/// UAVs that join the acting set from the next slot on.
pub fn newly_eligible_agents(outcome: &SlotOutcome) -> Vec<usize> {
    outcome.newly_successful.iter().copied().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    BeforePhase1,
    Relaying,
    Done,
}

/// One swarm, stepped slot by slot.
#[derive(Debug, Clone)]
pub struct CmdpEnv {
    pub config: ScenarioConfig,
    pub spec: SchemeSpec,
    /// Round energy budget in broadcast-slot units.
    pub e_c: f64,
    pub state: SwarmState,
    slot: usize,
    /// Normalized energy spent so far this round.
    cost: f64,
    phase1_success: usize,
    stage: Stage,
}

impl CmdpEnv {
    pub fn new<R: Rng + ?Sized>(config: ScenarioConfig, scheme: Scheme, e_c: f64, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let state = sample_initial_positions(&config, rng);
        Self::with_state(config, scheme, e_c, state)
    }

    pub fn with_state(config: ScenarioConfig, scheme: Scheme, e_c: f64, state: SwarmState) -> Result<Self> {
        config.validate()?;
        if !e_c.is_finite() || e_c < 0.0 {
            return Err(config_err(format!("energy budget must be finite and >= 0, got {e_c}")));
        }
        if state.n_uavs() != config.n_uavs {
            return Err(config_err(format!("swarm state has {} UAVs, config {}", state.n_uavs(), config.n_uavs)));
        }
        let spec = SchemeSpec::new(scheme, config.n_uavs)?;
        Ok(Self { config, spec, e_c, state, slot: 0, cost: 0.0, phase1_success: 0, stage: Stage::BeforePhase1 })
    }

    /// Moves the swarm by one inter-round interval.
    pub fn advance_mobility<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        rwp_advance(&mut self.state, self.config.round_interval, &self.config, rng)?;
        self.stage = Stage::BeforePhase1;
        Ok(())
    }

    /// Runs Phase I and arms the environment for [`CmdpEnv::reset`].
    pub fn begin_round<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Phase1Outcome> {
        let out = run_phase1(&mut self.state, &self.config, rng)?;
        self.slot = 0;
        self.cost = 0.0;
        self.phase1_success = out.successful.len();
        self.stage = if out.successful.is_empty() { Stage::Done } else { Stage::Relaying };
        Ok(out)
    }

    /// Observations for the first slot, keyed by acting agent. Empty when
    /// Phase I reached nobody.
    pub fn reset(&self) -> Result<BTreeMap<usize, Observation>> {
        if self.stage == Stage::BeforePhase1 {
            return Err(protocol_err("reset called before Phase I of the round"));
        }
        let obs = self.observation();
        Ok(self.acting_agents().into_iter().map(|i| (i, obs.clone())).collect())
    }

    pub fn observation(&self) -> Observation {
        Observation::build(&self.state, &self.config, self.e_c - self.cost)
    }

    pub fn acting_agents(&self) -> Vec<usize> {
        if self.stage == Stage::Relaying {
            self.state.holders()
        } else {
            Vec::new()
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.stage != Stage::Relaying
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    /// Normalized round energy so far.
    pub fn round_cost(&self) -> f64 {
        self.cost
    }

    pub fn phase1_success(&self) -> usize {
        self.phase1_success
    }

    pub fn success_count(&self) -> usize {
        self.state.has_message.iter().filter(|&&m| m).count()
    }

    /// Executes one slot from action indices keyed by agent, drawing fresh fading.
    pub fn step<R: Rng + ?Sized>(&mut self, actions: &BTreeMap<usize, usize>, rng: &mut R) -> Result<StepResult> {
        let fading = FadingDraw::sample(&self.config, rng);
        self.step_with_fading(actions, &fading)
    }

    /// As [`CmdpEnv::step`] with a caller-supplied fading draw.
    ///
    /// When the swarm is fully reached before the last slot, the remaining
    /// slots are all-idle and their energy is folded into this step's cost.
    pub fn step_with_fading(&mut self, actions: &BTreeMap<usize, usize>, fading: &FadingDraw) -> Result<StepResult> {
        if self.stage != Stage::Relaying {
            return Err(protocol_err("step called outside the relaying phase"));
        }
        let mut modes = SlotActions::new();
        for (&agent, &index) in actions {
            modes.insert(agent, decode_action(agent, index, &self.spec)?);
        }
        let before = self.success_count();
        let outcome = execute_slot(&mut self.state, &modes, &self.config, fading)?;
        self.slot += 1;
        let mut raw = outcome.total_energy();
        let l = self.config.n_slots();
        if self.state.waiting().is_empty() {
            while self.slot < l {
                let idle = all_idle(&self.state);
                raw += execute_slot(&mut self.state, &idle, &self.config, fading)?.total_energy();
                self.slot += 1;
            }
        }
        let terminal = self.slot >= l;
        if terminal {
            self.stage = Stage::Done;
        }
        let e_b = self.config.broadcast_energy();
        let cost = raw / e_b;
        self.cost += cost;
        let n_success = self.success_count();
        Ok(StepResult {
            observation: self.observation(),
            next_agents: self.acting_agents(),
            reward: (n_success - before) as f64,
            cost,
            terminal,
            info: StepInfo { n_success, slot: self.slot, raw_energy: raw },
            outcome,
        })
    }
}
