//! One C&C round: the GBS broadcast (Phase I) followed by slotted D2D relaying
//! (Phase II) with mode selection, unicast power control, success updates and
//! the per-slot energy ledger.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::channel::{ChannelModel, FadingDraw, LinkBudget};
use crate::error::{domain_err, protocol_err, Result};
use crate::scenario::{ScenarioConfig, SwarmState};

/// Operating mode of one message holder in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Unicast(usize),
    Broadcast,
    Idle,
}

/// Mode per acting UAV, keyed by UAV id.
pub type SlotActions = BTreeMap<usize, Mode>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ack {
    pub tx: usize,
    pub rx: usize,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub newly_successful: BTreeSet<usize>,
    /// Joules spent by each UAV in this slot.
    pub per_uav_energy: Vec<f64>,
    pub acks: Vec<Ack>,
    pub theta_u: Vec<usize>,
    pub theta_b: Vec<usize>,
    pub theta_idle: Vec<usize>,
}

impl SlotOutcome {
    pub fn total_energy(&self) -> f64 {
        self.per_uav_energy.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phase1Outcome {
    pub successful: Vec<usize>,
    pub failed: Vec<usize>,
    pub budgets: Vec<LinkBudget>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    pub phase1_success: Vec<usize>,
    pub phase1_failure: Vec<usize>,
    pub slots: Vec<SlotOutcome>,
    /// Swarm energy in joules accumulated up to and including each slot.
    pub cumulative_cost: Vec<f64>,
}

impl RoundTrace {
    pub fn final_cost(&self) -> f64 {
        self.cumulative_cost.last().copied().unwrap_or(0.0)
    }

    pub fn final_success(&self) -> usize {
        self.phase1_success.len() + self.slots.iter().map(|s| s.newly_successful.len()).sum::<usize>()
    }
}

/// Decodes the GBS broadcast at every UAV and marks the successful ones.
///
/// Starts a new round: message flags and the energy ledger are cleared first.
pub fn run_phase1<R: Rng + ?Sized>(state: &mut SwarmState, config: &ScenarioConfig, rng: &mut R) -> Result<Phase1Outcome> {
    state.begin_round();
    let fading = FadingDraw::sample(config, rng);
    let channel = ChannelModel::new(config, &state.positions, &fading);
    let mut out = Phase1Outcome { successful: Vec::new(), failed: Vec::new(), budgets: Vec::with_capacity(state.n_uavs()) };
    for n in 0..state.n_uavs() {
        let budget = channel.phase1_sinr(n)?;
        if budget.decodes(config.gamma1) {
            out.successful.push(n);
        } else {
            out.failed.push(n);
        }
        out.budgets.push(budget);
    }
    for &n in &out.successful {
        state.has_message[n] = true;
    }
    Ok(out)
}

/// Path-loss-compensating unicast transmit power, clipped at the UAV maximum.
pub fn unicast_power(d: f64, config: &ScenarioConfig) -> Result<f64> {
    if !(d > 0.0) {
        return Err(domain_err(format!("unicast distance must be > 0, got {d}")));
    }
    Ok((config.xi * d.powf(config.alpha2)).min(config.p_uav_max))
}

/// Runs one D2D cycle and charges every UAV its slot energy.
pub fn execute_slot(
    state: &mut SwarmState,
    actions: &SlotActions,
    config: &ScenarioConfig,
    fading: &FadingDraw,
) -> Result<SlotOutcome> {
    let n_uavs = state.n_uavs();
    for (&i, mode) in actions {
        if i >= n_uavs {
            return Err(protocol_err(format!("action for unknown UAV {i}")));
        }
        if !state.has_message[i] {
            return Err(protocol_err(format!("UAV {i} acted without holding the message")));
        }
        if let Mode::Unicast(target) = *mode {
            if target == i {
                return Err(protocol_err(format!("UAV {i} unicast to itself")));
            }
            if target >= n_uavs {
                return Err(protocol_err(format!("UAV {i} unicast to unknown UAV {target}")));
            }
        }
    }
    if let Some(missing) = state.holders().into_iter().find(|i| !actions.contains_key(i)) {
        return Err(protocol_err(format!("no action supplied for message holder {missing}")));
    }

    let mut outcome = SlotOutcome {
        newly_successful: BTreeSet::new(),
        per_uav_energy: vec![0.0; n_uavs],
        acks: Vec::new(),
        theta_u: Vec::new(),
        theta_b: Vec::new(),
        theta_idle: Vec::new(),
    };
    for (&i, mode) in actions {
        match mode {
            Mode::Unicast(_) => outcome.theta_u.push(i),
            Mode::Broadcast => outcome.theta_b.push(i),
            Mode::Idle => outcome.theta_idle.push(i),
        }
    }

    let channel = ChannelModel::new(config, &state.positions, fading);
    let waiting = state.waiting();

    for (&i, mode) in actions {
        if let Mode::Unicast(target) = *mode {
            let d = state.positions[i].distance(&state.positions[target]);
            let power = unicast_power(d, config)?;
            let budget = channel.unicast_sinr(i, target, power)?;
            let success = budget.decodes(config.gamma2);
            outcome.acks.push(Ack { tx: i, rx: target, success });
            if success && !state.has_message[target] {
                outcome.newly_successful.insert(target);
            }
            outcome.per_uav_energy[i] = config.tx_energy(power);
        }
    }

    if !outcome.theta_b.is_empty() {
        for &n in &waiting {
            if channel.broadcast_sinr(&outcome.theta_b, n)?.decodes(config.gamma2) {
                outcome.newly_successful.insert(n);
            }
        }
        let e_b = config.broadcast_energy();
        for &i in &outcome.theta_b {
            outcome.per_uav_energy[i] = e_b;
        }
    }

    let e_idle = config.idle_energy();
    for &i in &outcome.theta_idle {
        outcome.per_uav_energy[i] = e_idle;
    }
    let e_rx = config.rx_energy();
    for &n in &waiting {
        outcome.per_uav_energy[n] = e_rx;
    }

    for &n in &outcome.newly_successful {
        state.has_message[n] = true;
    }
    for (ledger, e) in state.round_energy.iter_mut().zip(&outcome.per_uav_energy) {
        *ledger += e;
    }
    Ok(outcome)
}

/// Every message holder stays idle.
pub fn all_idle(state: &SwarmState) -> SlotActions {
    state.holders().into_iter().map(|i| (i, Mode::Idle)).collect()
}

/// Source of per-slot actions for [`run_round`].
pub trait SlotPolicy {
    fn actions(&mut self, state: &SwarmState, slot: usize, config: &ScenarioConfig) -> SlotActions;
}

impl<F> SlotPolicy for F
where
    F: FnMut(&SwarmState, usize, &ScenarioConfig) -> SlotActions,
{
    fn actions(&mut self, state: &SwarmState, slot: usize, config: &ScenarioConfig) -> SlotActions {
        self(state, slot, config)
    }
}

/// Phase I followed by the D2D slots.
///
/// A round whose Phase I delivers nobody has no relays and is a no-op: the
/// trace carries no slots and zero cost. Once every UAV holds the message the
/// remaining slots are executed all-idle.
pub fn run_round<R: Rng + ?Sized, P: SlotPolicy + ?Sized>(
    state: &mut SwarmState,
    policy: &mut P,
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<RoundTrace> {
    let phase1 = run_phase1(state, config, rng)?;
    let mut trace = RoundTrace {
        phase1_success: phase1.successful,
        phase1_failure: phase1.failed,
        slots: Vec::new(),
        cumulative_cost: Vec::new(),
    };
    if trace.phase1_success.is_empty() {
        return Ok(trace);
    }
    let mut cost = 0.0;
    for slot in 0..config.n_slots() {
        let actions = if state.waiting().is_empty() { all_idle(state) } else { policy.actions(state, slot, config) };
        let fading = FadingDraw::sample(config, rng);
        let outcome = execute_slot(state, &actions, config, &fading)?;
        cost += outcome.total_energy();
        trace.cumulative_cost.push(cost);
        trace.slots.push(outcome);
    }
    Ok(trace)
}
