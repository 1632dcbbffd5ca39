//! Episode loop, evaluation and baseline policies.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::{Agent, LearnConfig, Transition};
use crate::env::{decode_action, CmdpEnv, Scheme, SchemeSpec, NODE_FEATURES};
use crate::error::{config_err, Result};
use crate::lagrange::{pid_update, PidCadence, PidGains};
use crate::neural::{AttentionScale, NetHyper};
use crate::protocol::{run_round, Mode, SlotActions, SlotPolicy};
use crate::scenario::{rwp_advance, sample_initial_positions, ScenarioConfig, SwarmState};

/// Width and layout of every agent's Q-network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetConfig {
    pub feature_width: usize,
    pub heads: usize,
    pub head_hidden: usize,
    pub attention_scale: AttentionScale,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self { feature_width: 32, heads: 8, head_hidden: 64, attention_scale: AttentionScale::InvSqrt }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub scheme: Scheme,
    pub episodes: usize,
    pub rounds_per_episode: usize,
    /// Per-round energy budget in broadcast-slot units.
    pub e_c: f64,
    pub epsilon_start: f64,
    pub epsilon_decay: f64,
    pub epsilon_min: f64,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub scenario: ScenarioConfig,
    pub learning: LearnConfig,
    pub net: NetConfig,
    pub pid: PidGains,
    pub pid_cadence: PidCadence,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Broadcast,
            episodes: 2000,
            rounds_per_episode: 200,
            e_c: 3.0,
            epsilon_start: 0.6,
            epsilon_decay: 0.996,
            epsilon_min: 0.01,
            seed: 0,
            checkpoint_every: 100,
            scenario: ScenarioConfig::default(),
            learning: LearnConfig::default(),
            net: NetConfig::default(),
            pid: PidGains::default(),
            pid_cadence: PidCadence::PerRound,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.learning.validate()?;
        self.pid.validate()?;
        self.hyper().validate()?;
        if self.rounds_per_episode == 0 {
            return Err(config_err("rounds_per_episode must be >= 1"));
        }
        if !(self.e_c.is_finite() && self.e_c >= 0.0) {
            return Err(config_err(format!("e_c must be finite and >= 0, got {}", self.e_c)));
        }
        for (name, v) in [("epsilon_start", self.epsilon_start), ("epsilon_min", self.epsilon_min)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(config_err(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return Err(config_err(format!("epsilon_decay must be in (0, 1], got {}", self.epsilon_decay)));
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<SchemeSpec> {
        SchemeSpec::new(self.scheme, self.scenario.n_uavs)
    }

    pub fn hyper(&self) -> NetHyper {
        let action_count = SchemeSpec { scheme: self.scheme, n_uavs: self.scenario.n_uavs }.action_count();
        NetHyper {
            in_features: NODE_FEATURES,
            feature_width: self.net.feature_width,
            heads: self.net.heads,
            head_hidden: self.net.head_hidden,
            action_count,
            attention_scale: self.net.attention_scale,
        }
    }
}

pub fn epsilon_schedule(episode: usize, config: &TrainConfig) -> f64 {
    let decayed = config.epsilon_start * config.epsilon_decay.powf(episode as f64);
    decayed.max(config.epsilon_min)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub episode: usize,
    /// Mean over rounds of the number of UAVs holding the message at the end.
    pub mean_success: f64,
    /// Mean normalized round energy.
    pub mean_energy: f64,
    /// Multiplier of each agent at the end of the episode.
    pub lambda: Vec<f64>,
    /// Mean TD loss over the episode's learning steps, NaN if none ran.
    pub loss: f64,
    pub epsilon: f64,
}

impl MetricsRecord {
    pub fn lambda_mean(&self) -> f64 {
        if self.lambda.is_empty() {
            0.0
        } else {
            self.lambda.iter().sum::<f64>() / self.lambda.len() as f64
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Full training state; everything needed to continue bit-exactly.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub env: CmdpEnv,
    pub agents: Vec<Agent>,
    /// Mobility, Phase I and fading draws.
    pub env_rng: ChaCha8Rng,
    /// Exploration and minibatch draws.
    pub learn_rng: ChaCha8Rng,
    /// Episodes completed.
    pub episode: usize,
    pub rounds_done: u64,
    pub metrics: Vec<MetricsRecord>,
}

/// Seeds the two independent streams of a run.
pub fn run_rngs(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut env_rng = ChaCha8Rng::seed_from_u64(seed);
    env_rng.set_stream(1);
    let mut learn_rng = ChaCha8Rng::seed_from_u64(seed);
    learn_rng.set_stream(2);
    (env_rng, learn_rng)
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let (mut env_rng, mut learn_rng) = run_rngs(config.seed);
        let env = CmdpEnv::new(config.scenario.clone(), config.scheme, config.e_c, &mut env_rng)?;
        let hyper = config.hyper();
        let agents = (0..config.scenario.n_uavs)
            .map(|i| Agent::new(i, hyper, config.learning, config.pid, &mut learn_rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config, env, agents, env_rng, learn_rng, episode: 0, rounds_done: 0, metrics: Vec::new() })
    }

    pub fn is_finished(&self) -> bool {
        self.episode >= self.config.episodes
    }

    /// Plays one round with learning; returns (final holders, normalized cost, losses).
    fn train_round(&mut self, epsilon: f64, losses: &mut Vec<f64>) -> Result<(usize, f64)> {
        if self.rounds_done > 0 {
            self.env.advance_mobility(&mut self.env_rng)?;
        }
        self.env.begin_round(&mut self.env_rng)?;
        self.rounds_done += 1;
        let mut obs = self.env.observation();
        while !self.env.is_terminal() {
            let mut actions = BTreeMap::new();
            for i in self.env.acting_agents() {
                actions.insert(i, self.agents[i].select_action(&obs, epsilon, &mut self.learn_rng)?);
            }
            let step = self.env.step(&actions, &mut self.env_rng)?;
            for (&i, &a) in &actions {
                let agent = &mut self.agents[i];
                agent.remember(Transition {
                    obs: obs.clone(),
                    action: a,
                    reward: step.reward,
                    next_obs: step.observation.clone(),
                    cost: step.cost,
                    terminal: step.terminal,
                });
                if let Some(l) = agent.learn_step(&mut self.learn_rng)? {
                    losses.push(l);
                }
                agent.soft_update()?;
            }
            obs = step.observation;
        }
        Ok((self.env.success_count(), self.env.round_cost()))
    }

    pub fn run_episode(&mut self) -> Result<MetricsRecord> {
        let epsilon = epsilon_schedule(self.episode, &self.config);
        let rounds = self.config.rounds_per_episode;
        let mut successes = Vec::with_capacity(rounds);
        let mut costs = Vec::with_capacity(rounds);
        let mut losses = Vec::new();
        let mut perceived: Vec<Vec<f64>> = vec![Vec::new(); self.agents.len()];
        for _ in 0..rounds {
            let (s, c) = self.train_round(epsilon, &mut losses)?;
            successes.push(s as f64);
            costs.push(c);
            // Only agents holding the message at the end of Phase II observe the round cost.
            for (i, agent) in self.agents.iter_mut().enumerate() {
                if !self.env.state.has_message[i] {
                    continue;
                }
                match self.config.pid_cadence {
                    PidCadence::PerRound => {
                        pid_update(&mut agent.lagrange, c, self.config.e_c)?;
                    }
                    PidCadence::PerEpisode => perceived[i].push(c),
                }
            }
        }
        if self.config.pid_cadence == PidCadence::PerEpisode {
            for (agent, seen) in self.agents.iter_mut().zip(&perceived) {
                if !seen.is_empty() {
                    pid_update(&mut agent.lagrange, mean(seen), self.config.e_c)?;
                }
            }
        }
        let mean_energy = mean(&costs);
        let record = MetricsRecord {
            episode: self.episode,
            mean_success: mean(&successes),
            mean_energy,
            lambda: self.agents.iter().map(|a| a.lagrange.lambda).collect(),
            loss: if losses.is_empty() { f64::NAN } else { mean(&losses) },
            epsilon,
        };
        log::debug!(
            "episode {} success {:.3} energy {:.3} lambda {:.4} eps {:.3}",
            record.episode,
            record.mean_success,
            record.mean_energy,
            record.lambda_mean(),
            epsilon
        );
        self.episode += 1;
        self.metrics.push(record.clone());
        Ok(record)
    }
}

/// Trains from scratch to completion.
pub fn train(config: TrainConfig) -> Result<Trainer> {
    let mut trainer = Trainer::new(config)?;
    while !trainer.is_finished() {
        trainer.run_episode()?;
    }
    Ok(trainer)
}

/// Means and 95% normal-approximation half-widths over evaluated rounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub rounds: usize,
    pub mean_success: f64,
    pub success_ci95: f64,
    pub mean_energy: f64,
    pub energy_ci95: f64,
}

impl EvalSummary {
    pub fn from_rounds(successes: &[f64], costs: &[f64]) -> Self {
        let ci = |xs: &[f64]| {
            let n = xs.len();
            if n < 2 {
                return 0.0;
            }
            let m = mean(xs);
            let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
            1.96 * (var / n as f64).sqrt()
        };
        Self {
            rounds: successes.len(),
            mean_success: mean(successes),
            success_ci95: ci(successes),
            mean_energy: mean(costs),
            energy_ci95: ci(costs),
        }
    }
}

/// Greedy rollout of fixed agents: no exploration, learning or multiplier updates.
pub fn evaluate(agents: &[Agent], config: &TrainConfig, episodes: usize, seed: u64) -> Result<EvalSummary> {
    config.validate()?;
    let hyper = config.hyper();
    if agents.len() != config.scenario.n_uavs {
        return Err(config_err(format!("{} agents for a swarm of {}", agents.len(), config.scenario.n_uavs)));
    }
    if let Some(a) = agents.iter().find(|a| a.q.hyper != hyper) {
        return Err(config_err(format!(
            "agent {} network ({} actions) does not match the {} scheme ({} actions)",
            a.id,
            a.q.hyper.action_count,
            config.scheme.name(),
            hyper.action_count
        )));
    }
    let (mut env_rng, mut unused) = run_rngs(seed);
    let mut env = CmdpEnv::new(config.scenario.clone(), config.scheme, config.e_c, &mut env_rng)?;
    let total = episodes * config.rounds_per_episode;
    let mut successes = Vec::with_capacity(total);
    let mut costs = Vec::with_capacity(total);
    for r in 0..total {
        if r > 0 {
            env.advance_mobility(&mut env_rng)?;
        }
        env.begin_round(&mut env_rng)?;
        let mut obs = env.observation();
        while !env.is_terminal() {
            let mut actions = BTreeMap::new();
            for i in env.acting_agents() {
                actions.insert(i, agents[i].select_action(&obs, 0.0, &mut unused)?);
            }
            obs = env.step(&actions, &mut env_rng)?.observation;
        }
        successes.push(env.success_count() as f64);
        costs.push(env.round_cost());
    }
    Ok(EvalSummary::from_rounds(&successes, &costs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    AlwaysBroadcast,
    Random,
    GreedyNearestUnicast,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::AlwaysBroadcast => "always_broadcast",
            BaselineKind::Random => "random",
            BaselineKind::GreedyNearestUnicast => "greedy_nearest_unicast",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "always_broadcast" => Ok(BaselineKind::AlwaysBroadcast),
            "random" => Ok(BaselineKind::Random),
            "greedy_nearest_unicast" => Ok(BaselineKind::GreedyNearestUnicast),
            other => Err(config_err(format!("unknown baseline '{other}'"))),
        }
    }
}

/// Hand-written action source. `Random` draws uniformly over the scheme's action indices.
#[derive(Debug, Clone)]
pub struct BaselinePolicy {
    pub kind: BaselineKind,
    pub spec: SchemeSpec,
    rng: ChaCha8Rng,
}

pub fn baseline_policy(kind: BaselineKind, spec: SchemeSpec, seed: u64) -> BaselinePolicy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    BaselinePolicy { kind, spec, rng }
}

/// Nearest UAV still waiting for the message, lowest id on ties.
pub fn nearest_waiting(state: &SwarmState, from: usize) -> Option<usize> {
    let p = state.positions[from];
    let mut best: Option<(usize, f64)> = None;
    for n in state.waiting() {
        let d = p.distance(&state.positions[n]);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((n, d));
        }
    }
    best.map(|(n, _)| n)
}

impl SlotPolicy for BaselinePolicy {
    fn actions(&mut self, state: &SwarmState, _slot: usize, _config: &ScenarioConfig) -> SlotActions {
        let mut out = SlotActions::new();
        for i in state.holders() {
            let mode = match self.kind {
                BaselineKind::AlwaysBroadcast => Mode::Broadcast,
                BaselineKind::GreedyNearestUnicast => nearest_waiting(state, i).map_or(Mode::Idle, Mode::Unicast),
                BaselineKind::Random => {
                    let idx = self.rng.random_range(0..self.spec.action_count());
                    decode_action(i, idx, &self.spec).expect("index drawn inside the action space")
                }
            };
            out.insert(i, mode);
        }
        out
    }
}

/// Runs `rounds` protocol rounds of a baseline with mobility in between.
pub fn evaluate_baseline(
    kind: BaselineKind,
    scheme: Scheme,
    scenario: &ScenarioConfig,
    rounds: usize,
    seed: u64,
) -> Result<EvalSummary> {
    scenario.validate()?;
    let (mut env_rng, _) = run_rngs(seed);
    let mut state = sample_initial_positions(scenario, &mut env_rng);
    let mut policy = baseline_policy(kind, SchemeSpec::new(scheme, scenario.n_uavs)?, seed);
    let e_b = scenario.broadcast_energy();
    let mut successes = Vec::with_capacity(rounds);
    let mut costs = Vec::with_capacity(rounds);
    for r in 0..rounds {
        if r > 0 {
            rwp_advance(&mut state, scenario.round_interval, scenario, &mut env_rng)?;
        }
        let trace = run_round(&mut state, &mut policy, scenario, &mut env_rng)?;
        successes.push(trace.final_success() as f64);
        costs.push(trace.final_cost() / e_b);
    }
    Ok(EvalSummary::from_rounds(&successes, &costs))
}
