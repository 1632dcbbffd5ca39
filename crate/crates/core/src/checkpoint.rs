//! Plain-text trainer snapshots.
//!
//! Floats are stored as the hex of their IEEE-754 bits so a save/load cycle
//! is bit-exact. The file is a whitespace-separated token stream with tags,
//! one record per line for readability.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{Agent, ReplayMemory, Transition};
use crate::env::{CmdpEnv, Observation, Scheme, NODE_FEATURES};
use crate::error::{Error, Result};
use crate::lagrange::{LagrangeState, PidGains};
use crate::neural::{AdamState, Matrix, QNetworkParams};
use crate::scenario::{Point3, SwarmState};
use crate::trainer::{MetricsRecord, Trainer, TrainConfig};

const MAGIC: &str = "swarm-cc-checkpoint";
const VERSION: u32 = 1;

fn ck(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

struct Writer {
    out: String,
}

impl Writer {
    fn tag(&mut self, t: &str) -> &mut Self {
        if !self.out.is_empty() && !self.out.ends_with('\n') {
            self.out.push('\n');
        }
        self.out.push_str(t);
        self
    }

    fn u(&mut self, v: impl std::fmt::Display) -> &mut Self {
        let _ = write!(self.out, " {v}");
        self
    }

    fn f(&mut self, v: f64) -> &mut Self {
        let _ = write!(self.out, " {:016x}", v.to_bits());
        self
    }

    fn fs(&mut self, vs: &[f64]) -> &mut Self {
        for &v in vs {
            self.f(v);
        }
        self
    }

    fn matrix(&mut self, name: &str, m: &Matrix) -> &mut Self {
        self.tag("tensor").u(name).u(m.rows()).u(m.cols()).fs(m.as_slice())
    }

    fn rng(&mut self, name: &str, r: &ChaCha8Rng) -> &mut Self {
        let seed: String = r.get_seed().iter().map(|b| format!("{b:02x}")).collect();
        self.tag("rng").u(name).u(seed).u(r.get_stream()).u(r.get_word_pos())
    }
}

struct Reader<'a> {
    tokens: std::str::SplitWhitespace<'a>,
}

impl<'a> Reader<'a> {
    fn next(&mut self) -> Result<&'a str> {
        self.tokens.next().ok_or_else(|| ck("unexpected end of checkpoint"))
    }

    fn expect(&mut self, tag: &str) -> Result<()> {
        let t = self.next()?;
        if t != tag {
            return Err(ck(format!("expected '{tag}', found '{t}'")));
        }
        Ok(())
    }

    fn u<T: std::str::FromStr>(&mut self) -> Result<T> {
        let t = self.next()?;
        t.parse().map_err(|_| ck(format!("bad integer '{t}'")))
    }

    fn f(&mut self) -> Result<f64> {
        let t = self.next()?;
        u64::from_str_radix(t, 16).map(f64::from_bits).map_err(|_| ck(format!("bad float bits '{t}'")))
    }

    fn fs(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f()).collect()
    }

    fn matrix(&mut self, name: &str) -> Result<Matrix> {
        self.expect("tensor")?;
        self.expect(name)?;
        let r: usize = self.u()?;
        let c: usize = self.u()?;
        Matrix::from_vec(r, c, self.fs(r * c)?)
    }

    fn rng(&mut self, name: &str) -> Result<ChaCha8Rng> {
        self.expect("rng")?;
        self.expect(name)?;
        let hex = self.next()?;
        if hex.len() != 64 {
            return Err(ck("rng seed must be 32 bytes"));
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).map_err(|_| ck("bad rng seed"))?;
        }
        let mut r = ChaCha8Rng::from_seed(seed);
        r.set_stream(self.u()?);
        r.set_word_pos(self.u()?);
        Ok(r)
    }
}

fn write_params(w: &mut Writer, prefix: &str, p: &QNetworkParams) {
    for (i, t) in p.tensors.iter().enumerate() {
        w.matrix(&format!("{prefix}.{i}"), t);
    }
}

fn read_params(r: &mut Reader, prefix: &str, like: &QNetworkParams) -> Result<QNetworkParams> {
    let mut tensors = Vec::with_capacity(like.tensors.len());
    for (i, shape) in like.shapes().into_iter().enumerate() {
        let m = r.matrix(&format!("{prefix}.{i}"))?;
        if m.shape() != shape {
            return Err(ck(format!("{prefix}.{i} has shape {:?}, expected {shape:?}", m.shape())));
        }
        tensors.push(m);
    }
    Ok(QNetworkParams { hyper: like.hyper, tensors })
}

fn read_observation(r: &mut Reader, n: usize) -> Result<Observation> {
    Ok(Observation { nodes: Matrix::from_vec(n, NODE_FEATURES, r.fs(n * NODE_FEATURES)?)? })
}

/// Serializes the full trainer state.
pub fn save_trainer(t: &Trainer) -> String {
    let mut w = Writer { out: String::new() };
    let n = t.config.scenario.n_uavs;
    w.tag(MAGIC).u(VERSION);
    w.tag("scheme").u(t.config.scheme.name());
    w.tag("n_uavs").u(n);
    let h = t.config.hyper();
    w.tag("network").u(h.feature_width).u(h.heads).u(h.head_hidden).u(h.action_count).u(h.attention_scale.name());
    w.tag("episode").u(t.episode);
    w.tag("rounds_done").u(t.rounds_done);
    w.rng("env", &t.env_rng);
    w.rng("learn", &t.learn_rng);
    let s = &t.env.state;
    for i in 0..n {
        let (p, q) = (s.positions[i], s.waypoints[i]);
        w.tag("uav").u(i).fs(&[p.x, p.y, p.z, q.x, q.y, q.z, s.speeds[i], s.pause_remaining[i], s.round_energy[i]]);
        w.u(u8::from(s.has_message[i]));
    }
    for a in &t.agents {
        w.tag("agent").u(a.id);
        let l = &a.lagrange;
        w.tag("lagrange").fs(&[l.gains.kp, l.gains.ki, l.gains.kd, l.integral, l.prev_cost, l.lambda]);
        write_params(&mut w, "q", &a.q);
        write_params(&mut w, "target", &a.target);
        let o = &a.optimizer;
        w.tag("adam").fs(&[o.beta1, o.beta2, o.eps]).u(o.step);
        for (i, (m, v)) in o.m.iter().zip(&o.v).enumerate() {
            w.matrix(&format!("m.{i}"), m);
            w.matrix(&format!("v.{i}"), v);
        }
        w.tag("replay").u(a.replay.capacity()).u(a.replay.len());
        for tr in a.replay.iter() {
            w.tag("transition").u(tr.action).u(u8::from(tr.terminal)).f(tr.reward).f(tr.cost);
            w.fs(tr.obs.nodes.as_slice()).fs(tr.next_obs.nodes.as_slice());
        }
    }
    w.tag("metrics").u(t.metrics.len());
    for m in &t.metrics {
        w.tag("record").u(m.episode).f(m.mean_success).f(m.mean_energy).f(m.loss).f(m.epsilon).u(m.lambda.len());
        w.fs(&m.lambda);
    }
    w.tag("end");
    w.out.push('\n');
    w.out
}

/// Rebuilds a trainer from `text`. `config` must describe the same scheme,
/// swarm size and network layout as the snapshot.
pub fn load_trainer(text: &str, config: TrainConfig) -> Result<Trainer> {
    let mut r = Reader { tokens: text.split_whitespace() };
    r.expect(MAGIC)?;
    let version: u32 = r.u()?;
    if version != VERSION {
        return Err(ck(format!("unsupported checkpoint version {version}")));
    }
    r.expect("scheme")?;
    let scheme = Scheme::parse(r.next()?)?;
    if scheme != config.scheme {
        return Err(ck(format!("checkpoint is for the {} scheme, config says {}", scheme.name(), config.scheme.name())));
    }
    r.expect("n_uavs")?;
    let n: usize = r.u()?;
    if n != config.scenario.n_uavs {
        return Err(ck(format!("checkpoint has {n} UAVs, config has {}", config.scenario.n_uavs)));
    }
    r.expect("network")?;
    let h = config.hyper();
    let stored: Vec<&str> = (0..5).map(|_| r.next()).collect::<Result<_>>()?;
    let expected = [
        h.feature_width.to_string(),
        h.heads.to_string(),
        h.head_hidden.to_string(),
        h.action_count.to_string(),
        h.attention_scale.name().to_string(),
    ];
    if stored.iter().zip(&expected).any(|(a, b)| a != b) {
        return Err(ck(format!("network layout {stored:?} does not match config {expected:?}")));
    }

    let mut trainer = Trainer::new(config)?;
    r.expect("episode")?;
    trainer.episode = r.u()?;
    r.expect("rounds_done")?;
    trainer.rounds_done = r.u()?;
    trainer.env_rng = r.rng("env")?;
    trainer.learn_rng = r.rng("learn")?;

    let mut state = SwarmState {
        positions: Vec::with_capacity(n),
        waypoints: Vec::with_capacity(n),
        speeds: Vec::with_capacity(n),
        pause_remaining: Vec::with_capacity(n),
        has_message: Vec::with_capacity(n),
        round_energy: Vec::with_capacity(n),
    };
    for i in 0..n {
        r.expect("uav")?;
        if r.u::<usize>()? != i {
            return Err(ck("UAV records out of order"));
        }
        let v = r.fs(9)?;
        state.positions.push(Point3::new(v[0], v[1], v[2]));
        state.waypoints.push(Point3::new(v[3], v[4], v[5]));
        state.speeds.push(v[6]);
        state.pause_remaining.push(v[7]);
        state.round_energy.push(v[8]);
        state.has_message.push(r.u::<u8>()? != 0);
    }
    let cfg = &trainer.config;
    trainer.env = CmdpEnv::with_state(cfg.scenario.clone(), cfg.scheme, cfg.e_c, state)?;

    let mut agents = Vec::with_capacity(n);
    for template in &trainer.agents {
        r.expect("agent")?;
        let id: usize = r.u()?;
        if id != template.id {
            return Err(ck("agent records out of order"));
        }
        r.expect("lagrange")?;
        let l = r.fs(6)?;
        let lagrange = LagrangeState {
            gains: PidGains { kp: l[0], ki: l[1], kd: l[2] },
            integral: l[3],
            prev_cost: l[4],
            lambda: l[5],
        };
        let q = read_params(&mut r, "q", &template.q)?;
        let target = read_params(&mut r, "target", &template.q)?;
        r.expect("adam")?;
        let b = r.fs(3)?;
        let mut optimizer = AdamState::with_betas(&q.shapes(), b[0], b[1], b[2]);
        optimizer.step = r.u()?;
        for i in 0..optimizer.m.len() {
            optimizer.m[i] = r.matrix(&format!("m.{i}"))?;
            optimizer.v[i] = r.matrix(&format!("v.{i}"))?;
        }
        r.expect("replay")?;
        let capacity: usize = r.u()?;
        let len: usize = r.u()?;
        if len > capacity {
            return Err(ck("replay holds more transitions than its capacity"));
        }
        let mut replay = ReplayMemory::new(capacity);
        for _ in 0..len {
            r.expect("transition")?;
            let action: usize = r.u()?;
            let terminal = r.u::<u8>()? != 0;
            let reward = r.f()?;
            let cost = r.f()?;
            let obs = read_observation(&mut r, n)?;
            let next_obs = read_observation(&mut r, n)?;
            replay.push(Transition { obs, action, reward, next_obs, cost, terminal });
        }
        agents.push(Agent { id, learn: template.learn, q, target, optimizer, replay, lagrange });
    }
    trainer.agents = agents;

    r.expect("metrics")?;
    let count: usize = r.u()?;
    for _ in 0..count {
        r.expect("record")?;
        let episode: usize = r.u()?;
        let mean_success = r.f()?;
        let mean_energy = r.f()?;
        let loss = r.f()?;
        let epsilon = r.f()?;
        let k: usize = r.u()?;
        let lambda = r.fs(k)?;
        trainer.metrics.push(MetricsRecord { episode, mean_success, mean_energy, lambda, loss, epsilon });
    }
    r.expect("end")?;
    Ok(trainer)
}

/// Writes via a temporary file and a rename so a crash never leaves a torn snapshot.
pub fn write_checkpoint(path: &Path, t: &Trainer) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, save_trainer(t))?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path, config: TrainConfig) -> Result<Trainer> {
    let text = std::fs::read_to_string(path)?;
    load_trainer(&text, config)
}
