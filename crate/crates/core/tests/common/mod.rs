//! Property checks shared by the integration tests and the acceptance harness.
//!
//! Every check returns `Ok(detail)` or `Err(reason)`. The oracles below are
//! written from the formulas directly and do not call the code under test for
//! the quantity they verify.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use swarm_cc::agent::{Agent, LearnConfig, Transition};
use swarm_cc::channel::{los_probability, sample_cn01, ChannelModel, FadingDraw};
use swarm_cc::env::{CmdpEnv, Observation, Scheme, SchemeSpec, NODE_FEATURES};
use swarm_cc::lagrange::{pid_init, pid_update, PidGains};
use swarm_cc::neural::{AttentionScale, Matrix, NetHyper, QNetworkParams, Tape};
use swarm_cc::protocol::{execute_slot, run_phase1, unicast_power, Mode, SlotActions};
use swarm_cc::scenario::{sample_in_disk, Point3, ScenarioConfig, SwarmState};

pub type Check = Result<String, String>;

/// Same rounded value the link budget uses.
const C_LIGHT: f64 = 3.0e8;

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn static_state(positions: Vec<Point3>) -> SwarmState {
    let n = positions.len();
    SwarmState {
        waypoints: positions.clone(),
        positions,
        speeds: vec![10.0; n],
        pause_remaining: vec![0.0; n],
        has_message: vec![false; n],
        round_energy: vec![0.0; n],
    }
}

fn random_positions(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<Point3> {
    (0..cfg.n_uavs)
        .map(|_| {
            let p = sample_in_disk(cfg.r_swarm, cfg.height, rng);
            Point3::new(p.x, p.y, cfg.height * rng.random_range(0.5..1.5))
        })
        .collect()
}

// ---- brute-force link oracles -------------------------------------------

fn oracle_dist(a: &Point3, b: &Point3) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt()
}

fn oracle_los(uav: &Point3, gbs: &Point3, c: &ScenarioConfig) -> f64 {
    let d = oracle_dist(uav, gbs);
    let theta = 180.0 / PI * ((uav.z - gbs.z) / d).asin();
    1.0 / (1.0 + c.los_a * (-c.los_b * (theta - c.los_a)).exp())
}

/// Average power gain of the air-to-ground link, LoS/NLoS weighted.
fn oracle_g2a_power(uav: &Point3, gbs: &Point3, c: &ScenarioConfig) -> f64 {
    let d = oracle_dist(uav, gbs);
    let p = oracle_los(uav, gbs, c);
    let fs = (4.0 * PI * d * c.f_c / C_LIGHT).powf(c.alpha1);
    (p * c.eta_los + (1.0 - p) * c.eta_nlos) * fs
}

fn oracle_gbs_power(c: &ScenarioConfig, pos: &[Point3], f: &FadingDraw, m: usize, n: usize) -> f64 {
    let amp = oracle_g2a_power(&pos[n], &c.gbs_positions[m], c).sqrt();
    let mut re = 0.0;
    let mut im = 0.0;
    for k in 0..c.n_antennas {
        let h = f.g2a(m, n, k);
        re += amp * h.re;
        im += amp * h.im;
    }
    c.p_gbs * (re * re + im * im)
}

fn oracle_interference(c: &ScenarioConfig, pos: &[Point3], f: &FadingDraw, n: usize) -> f64 {
    let mut total = 0.0;
    for m in 1..=c.n_interferers {
        total += oracle_gbs_power(c, pos, f, m, n);
    }
    total
}

fn oracle_phase1_sinr(c: &ScenarioConfig, pos: &[Point3], f: &FadingDraw, n: usize) -> f64 {
    oracle_gbs_power(c, pos, f, 0, n) / (oracle_interference(c, pos, f, n) + c.noise_power)
}

fn oracle_d2d_power(c: &ScenarioConfig, pos: &[Point3], f: &FadingDraw, i: usize, n: usize) -> f64 {
    let d = oracle_dist(&pos[i], &pos[n]);
    let b = f.u2u(i, n);
    d.powf(-c.alpha2) * (b.re * b.re + b.im * b.im)
}

fn oracle_unicast_power(c: &ScenarioConfig, d: f64) -> f64 {
    let p = c.xi * d.powf(c.alpha2);
    if p < c.p_uav_max {
        p
    } else {
        c.p_uav_max
    }
}

fn oracle_broadcast_sinr(c: &ScenarioConfig, pos: &[Point3], f: &FadingDraw, tx: &[usize], n: usize) -> f64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for &i in tx {
        let d = oracle_dist(&pos[i], &pos[n]);
        let a = d.powf(-c.alpha2 / 2.0);
        re += a * f.u2u(i, n).re;
        im += a * f.u2u(i, n).im;
    }
    c.p_uav_max * (re * re + im * im) / (oracle_interference(c, pos, f, n) + c.noise_power)
}

/// Per-UAV slot energy straight from the mode table.
fn oracle_slot_energy(c: &ScenarioConfig, pos: &[Point3], holders: &[bool], actions: &SlotActions) -> Vec<f64> {
    let dt = c.slot_duration;
    (0..pos.len())
        .map(|i| {
            if !holders[i] {
                return c.p_rx * dt;
            }
            match actions[&i] {
                Mode::Unicast(t) => (c.kappa * oracle_unicast_power(c, oracle_dist(&pos[i], &pos[t])) + c.p_overhead) * dt,
                Mode::Broadcast => (c.kappa * c.p_uav_max + c.p_overhead) * dt,
                Mode::Idle => c.p_idle * dt,
            }
        })
        .collect()
}

/// Channel, SINR and energy formulas against the oracles above.
pub fn equation_oracles(instances: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xE0);
    let mut worst = 0.0f64;
    let mut note = |e: f64, what: &str, k: usize| -> Result<(), String> {
        worst = worst.max(e);
        ensure(e <= 1e-12, || format!("{what} off by {e:e} relative on instance {k}"))
    };
    for k in 0..instances {
        let cfg = ScenarioConfig {
            f_c: rng.random_range(1e9..6e9),
            xi: 10f64.powf(rng.random_range(-8.0..-4.0)),
            kappa: rng.random_range(1.5..4.0),
            p_rx: rng.random_range(0.0..0.2),
            p_idle: rng.random_range(0.0..0.05),
            ..ScenarioConfig::default()
        };
        let pos = random_positions(&cfg, &mut rng);
        let fading = FadingDraw::sample(&cfg, &mut rng);
        let ch = ChannelModel::new(&cfg, &pos, &fading);
        let n = rng.random_range(0..cfg.n_uavs);

        let gbs = &cfg.gbs_positions[0];
        let theta = 180.0 / PI * ((pos[n].z - gbs.z) / oracle_dist(&pos[n], gbs)).asin();
        note(rel_err(los_probability(theta, cfg.los_a, cfg.los_b).unwrap(), oracle_los(&pos[n], gbs, &cfg)), "LoS probability", k)?;

        for m in 0..cfg.n_gbs() {
            for a in 0..cfg.n_antennas {
                let h = ch.phase1_channel(m, n, a).unwrap();
                let want = oracle_g2a_power(&pos[n], &cfg.gbs_positions[m], &cfg) * fading.g2a(m, n, a).norm_sqr();
                note(rel_err(h.norm_sqr(), want), "air-to-ground channel", k)?;
            }
        }
        let b = ch.phase1_sinr(n).unwrap();
        note(rel_err(b.sinr, oracle_phase1_sinr(&cfg, &pos, &fading, n)), "Phase I SINR", k)?;
        note(rel_err(b.interference_power, oracle_interference(&cfg, &pos, &fading, n)), "GBS interference", k)?;

        let i = (n + 1 + rng.random_range(0..cfg.n_uavs - 1)) % cfg.n_uavs;
        let d = oracle_dist(&pos[i], &pos[n]);
        let p_u = unicast_power(d, &cfg).unwrap();
        note(rel_err(p_u, oracle_unicast_power(&cfg, d)), "unicast power", k)?;
        let u = ch.unicast_sinr(i, n, p_u).unwrap();
        let want = p_u * oracle_d2d_power(&cfg, &pos, &fading, i, n)
            / (oracle_interference(&cfg, &pos, &fading, n) + cfg.noise_power);
        note(rel_err(u.sinr, want), "unicast SINR", k)?;

        let tx: Vec<usize> = (0..cfg.n_uavs).filter(|&j| j != n && rng.random_bool(0.6)).collect();
        if !tx.is_empty() {
            let bs = ch.broadcast_sinr(&tx, n).unwrap();
            note(rel_err(bs.sinr, oracle_broadcast_sinr(&cfg, &pos, &fading, &tx, n)), "broadcast SINR", k)?;
        }

        // Energy ledger of one slot under random modes.
        let mut state = static_state(pos.clone());
        for h in state.has_message.iter_mut() {
            *h = rng.random_bool(0.5);
        }
        state.has_message[n] = true;
        let holders = state.has_message.clone();
        let mut actions = SlotActions::new();
        for a in state.holders() {
            let mode = match rng.random_range(0..3) {
                0 => Mode::Unicast((a + 1 + rng.random_range(0..cfg.n_uavs - 1)) % cfg.n_uavs),
                1 => Mode::Broadcast,
                _ => Mode::Idle,
            };
            actions.insert(a, mode);
        }
        let want = oracle_slot_energy(&cfg, &pos, &holders, &actions);
        let out = execute_slot(&mut state, &actions, &cfg, &fading).unwrap();
        for (got, want) in out.per_uav_energy.iter().zip(&want) {
            note(rel_err(*got, *want), "slot energy", k)?;
        }
        note(rel_err(cfg.broadcast_energy(), (cfg.kappa * cfg.p_uav_max + cfg.p_overhead) * cfg.slot_duration), "E_b", k)?;
    }
    Ok(format!("{instances} instances, worst relative error {worst:.1e}"))
}

/// Mean and variance of `|beta|^2` and of the real part for CN(0,1) fading.
pub fn fading_statistics(samples: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xFAD);
    let n = samples as f64;
    let mut p_sum = 0.0;
    let mut re_sum = 0.0;
    let mut re_sq = 0.0;
    for _ in 0..samples {
        let b: Complex64 = sample_cn01(&mut rng);
        p_sum += b.norm_sqr();
        re_sum += b.re;
        re_sq += b.re * b.re;
    }
    let p_mean = p_sum / n;
    // |beta|^2 ~ Exp(1): standard error 1/sqrt(n).
    let p_sigma = 1.0 / n.sqrt();
    ensure((p_mean - 1.0).abs() <= 2.0 * p_sigma, || format!("E|beta|^2 = {p_mean}, expected 1 +- {:.1e}", 2.0 * p_sigma))?;
    let re_var = re_sq / n - (re_sum / n).powi(2);
    // Var of the sample variance of N(0, 1/2) is 2 * (1/2)^2 / n.
    let v_sigma = (0.5f64 / n).sqrt();
    ensure((re_var - 0.5).abs() <= 2.0 * v_sigma, || format!("Var Re(beta) = {re_var}, expected 0.5 +- {:.1e}", 2.0 * v_sigma))?;
    Ok(format!("E|beta|^2 = {p_mean:.4}, Var Re = {re_var:.4} over {samples} draws"))
}

/// Closed-form Phase I decode probability for a fixed UAV position.
///
/// The coherent sum of K unit fading terms is CN(0, K), so each GBS power is
/// exponential with mean `P g_m K`; conditioning on the interference gives a
/// product of Laplace transforms.
fn phase1_success_probability(c: &ScenarioConfig, uav: &Point3) -> f64 {
    let k = c.n_antennas as f64;
    let g0 = oracle_g2a_power(uav, &c.gbs_positions[0], c);
    let s_mean = c.p_gbs * g0 * k;
    let mut p = (-c.gamma1 * c.noise_power / s_mean).exp();
    for m in 1..=c.n_interferers {
        let gm = oracle_g2a_power(uav, &c.gbs_positions[m], c);
        p /= 1.0 + c.gamma1 * gm / g0;
    }
    p
}

pub fn phase1_success_rate(samples: usize) -> Check {
    let cfg = ScenarioConfig { n_uavs: 3, ..ScenarioConfig::default() };
    let pos = vec![Point3::new(0.0, 0.0, 300.0), Point3::new(42.0, -17.0, 300.0), Point3::new(-55.0, 20.0, 300.0)];
    let mut state = static_state(pos.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(0x9415);
    let mut hits = [0usize; 3];
    for _ in 0..samples {
        let out = run_phase1(&mut state, &cfg, &mut rng).map_err(|e| e.to_string())?;
        for &n in &out.successful {
            hits[n] += 1;
        }
    }
    let mut detail = Vec::new();
    for (n, p) in pos.iter().enumerate() {
        let want = phase1_success_probability(&cfg, p);
        let got = hits[n] as f64 / samples as f64;
        let sigma = (want * (1.0 - want) / samples as f64).sqrt();
        ensure((got - want).abs() <= 2.0 * sigma, || {
            format!("UAV {n}: empirical {got:.4} vs analytic {want:.4} (2 sigma = {:.4})", 2.0 * sigma)
        })?;
        detail.push(format!("{got:.4}/{want:.4}"));
    }
    Ok(format!("empirical/analytic decode rates {} over {samples} rounds", detail.join(", ")))
}

// ---- ledger identities ---------------------------------------------------

pub fn ledger_identities(rounds: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1ED6);
    let mut relayed = 0;
    for r in 0..rounds {
        let scheme = [Scheme::Unicast, Scheme::Broadcast, Scheme::Hybrid][r % 3];
        let cfg = ScenarioConfig { n_uavs: rng.random_range(2..8), ..ScenarioConfig::default() };
        let mut env = CmdpEnv::new(cfg.clone(), scheme, 3.0, &mut rng).map_err(|e| e.to_string())?;
        env.begin_round(&mut rng).map_err(|e| e.to_string())?;
        if env.acting_agents().is_empty() {
            continue;
        }
        relayed += 1;
        let n0 = env.success_count();
        let mut rewards = 0.0;
        let mut costs = 0.0;
        loop {
            let agents = env.acting_agents();
            let actions: BTreeMap<usize, usize> =
                agents.iter().map(|&a| (a, rng.random_range(0..env.spec.action_count()))).collect();
            let step = env.step(&actions, &mut rng).map_err(|e| e.to_string())?;
            rewards += step.reward;
            costs += step.cost;
            if step.terminal {
                break;
            }
        }
        let nl = env.success_count();
        ensure(rewards == (nl - n0) as f64, || format!("round {r}: rewards {rewards} != {nl} - {n0}"))?;
        ensure(costs == env.round_cost(), || format!("round {r}: slot costs {costs} != C^L {}", env.round_cost()))?;
        let ledger: f64 = env.state.round_energy.iter().sum::<f64>() / cfg.broadcast_energy();
        ensure(rel_err(costs, ledger) <= 1e-12, || format!("round {r}: slot costs {costs} vs per-UAV ledger {ledger}"))?;
    }
    ensure(relayed * 5 >= rounds, || format!("only {relayed} of {rounds} rounds had relays"))?;
    Ok(format!("{relayed} relaying rounds of {rounds}, both identities exact"))
}

// ---- network checks ------------------------------------------------------

fn random_nodes(rows: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_vec(rows, NODE_FEATURES, (0..rows * NODE_FEATURES).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

fn loss_value(p: &QNetworkParams, x: &Matrix, nodes: usize, selfs: &[usize], acts: &[usize], targets: &[f64]) -> f64 {
    let mut tape = Tape::new();
    let raw = tape.input(x.clone()).unwrap();
    let out = p.forward(&mut tape, raw, nodes, selfs).unwrap();
    let picked = tape.pick_cols(out.q_values, acts.to_vec()).unwrap();
    let loss = tape.mse(picked, targets.to_vec()).unwrap();
    tape.value(loss).get(0, 0)
}

/// Reverse-mode gradients against central differences on a small network.
pub fn gradient_check(trials: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6AD);
    let hyper = NetHyper {
        in_features: NODE_FEATURES,
        feature_width: 4,
        heads: 2,
        head_hidden: 5,
        action_count: 4,
        attention_scale: AttentionScale::InvSqrt,
    };
    let nodes = 3;
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for trial in 0..trials {
        let p = QNetworkParams::init(hyper, &mut rng).unwrap();
        let graphs = 2;
        let x = random_nodes(graphs * nodes, &mut rng);
        let selfs: Vec<usize> = (0..graphs).map(|_| rng.random_range(0..nodes)).collect();
        let acts: Vec<usize> = (0..graphs).map(|_| rng.random_range(0..hyper.action_count)).collect();
        let targets: Vec<f64> = (0..graphs).map(|_| rng.random_range(-2.0..2.0)).collect();

        let mut tape = Tape::new();
        let raw = tape.input(x.clone()).unwrap();
        let out = p.forward(&mut tape, raw, nodes, &selfs).unwrap();
        let picked = tape.pick_cols(out.q_values, acts.clone()).unwrap();
        let loss = tape.mse(picked, targets.clone()).unwrap();
        let base = tape.value(loss).get(0, 0);
        let grads = tape.backward(loss, &p.shapes()).unwrap();

        for (slot, g) in grads.iter().enumerate() {
            for idx in 0..g.as_slice().len() {
                let mut plus = p.clone();
                plus.tensors[slot].as_mut_slice()[idx] += h;
                let mut minus = p.clone();
                minus.tensors[slot].as_mut_slice()[idx] -= h;
                let fd = (loss_value(&plus, &x, nodes, &selfs, &acts, &targets)
                    - loss_value(&minus, &x, nodes, &selfs, &acts, &targets))
                    / (2.0 * h);
                let an = g.as_slice()[idx];
                let scale = an.abs().max(fd.abs());
                // Central differences cannot resolve below the rounding noise of the loss itself.
                let noise = 10.0 * f64::EPSILON * (1.0 + base.abs()) / h;
                let err = if scale == 0.0 { 0.0 } else { (an - fd).abs() / scale };
                checked += 1;
                if scale > 1e3 * noise {
                    worst = worst.max(err);
                }
                if (an - fd).abs() <= noise {
                    continue;
                }
                ensure(err <= 1e-4, || format!("trial {trial}, slot {slot}[{idx}]: analytic {an:e} vs numeric {fd:e}"))?;
            }
        }
    }
    Ok(format!("{checked} partials over {trials} trials, worst relative error {worst:.1e} where resolvable"))
}

/// Every attention row is a probability vector, in both layers and all heads.
pub fn attention_rows(forwards: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA77);
    let hyper = NetHyper {
        in_features: NODE_FEATURES,
        feature_width: 32,
        heads: 8,
        head_hidden: 16,
        action_count: 6,
        attention_scale: AttentionScale::InvSqrt,
    };
    let mut worst = 0.0f64;
    let mut rows = 0;
    for f in 0..forwards {
        let nodes = rng.random_range(1..8);
        let mut p = QNetworkParams::init(hyper, &mut rng).unwrap();
        // Larger weights push the softmax toward saturation.
        let gain = rng.random_range(0.5..4.0);
        for t in p.tensors.iter_mut() {
            t.as_mut_slice().iter_mut().for_each(|v| *v *= gain);
        }
        let mut tape = Tape::new();
        let raw = tape.input(random_nodes(nodes, &mut rng)).unwrap();
        let out = p.forward(&mut tape, raw, nodes, &[rng.random_range(0..nodes)]).unwrap();
        for layer in out.attention {
            let alpha = tape.attention_weights(layer).ok_or("attention weights missing")?;
            ensure(alpha.len() == hyper.heads * nodes * nodes, || format!("forward {f}: {} weights", alpha.len()))?;
            for row in alpha.chunks(nodes) {
                ensure(row.iter().all(|&a| (0.0..=1.0).contains(&a)), || format!("forward {f}: weight outside [0, 1]"))?;
                let dev = (row.iter().sum::<f64>() - 1.0).abs();
                worst = worst.max(dev);
                rows += 1;
                ensure(dev <= 1e-9, || format!("forward {f}: row sums to 1 {dev:+e}"))?;
            }
        }
    }
    Ok(format!("{rows} rows over {forwards} forwards, worst |sum - 1| = {worst:.1e}"))
}

// ---- PID -----------------------------------------------------------------

pub fn pid_hand_trace() -> Check {
    let mut s = pid_init(PidGains::default()).map_err(|e| e.to_string())?;
    let first = pid_update(&mut s, 5.0, 3.0).map_err(|e| e.to_string())?;
    let second = pid_update(&mut s, 4.0, 3.0).map_err(|e| e.to_string())?;
    ensure(first == 0.61 && second == 0.065, || format!("got {first} then {second}"))?;
    Ok("0.61 then 0.065".into())
}

pub fn pid_projection(sequences: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x91D);
    for s in 0..sequences {
        let gains = PidGains { kp: rng.random_range(0.0..1.0), ki: rng.random_range(0.0..0.1), kd: rng.random_range(0.0..1.0) };
        let e_c = rng.random_range(0.0..10.0);
        let mut st = pid_init(gains).unwrap();
        let (mut integral, mut prev) = (0.0f64, 0.0f64);
        for _ in 0..rng.random_range(1..40) {
            let cost = rng.random_range(0.0..20.0);
            let lambda = pid_update(&mut st, cost, e_c).unwrap();
            let d = (cost - prev).max(0.0);
            integral = (integral + cost - e_c).max(0.0);
            prev = cost;
            ensure(lambda >= 0.0 && st.integral >= 0.0 && d >= 0.0, || format!("sequence {s}: negative state"))?;
            let terms = [gains.kp * (cost - e_c), gains.ki * integral, gains.kd * d];
            let want = terms.iter().sum::<f64>().max(0.0);
            // Tolerance relative to the terms, since they may cancel.
            let tol = 1e-12 * terms.iter().map(|t| t.abs()).sum::<f64>();
            ensure((lambda - want).abs() <= tol, || format!("sequence {s}: lambda {lambda} vs {want}"))?;
        }
    }
    Ok(format!("{sequences} sequences, lambda and I never negative"))
}

// ---- TD algebra ----------------------------------------------------------

pub fn td_algebra(transitions: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7D);
    let n = 4;
    let spec = SchemeSpec::new(Scheme::Hybrid, n).unwrap();
    let hyper = NetHyper {
        in_features: NODE_FEATURES,
        feature_width: 8,
        heads: 2,
        head_hidden: 8,
        action_count: spec.action_count(),
        attention_scale: AttentionScale::InvSqrt,
    };
    let learn = LearnConfig::default();
    let mut agent = Agent::new(1, hyper, learn, PidGains::default(), &mut rng).unwrap();
    // Perturb the target so it differs from the online network.
    for t in agent.target.tensors.iter_mut() {
        t.as_mut_slice().iter_mut().for_each(|v| *v += rng.random_range(-0.1..0.1));
    }
    let batch: Vec<Transition> = (0..transitions)
        .map(|_| Transition {
            obs: Observation { nodes: random_nodes(n, &mut rng) },
            action: rng.random_range(0..spec.action_count()),
            reward: rng.random_range(0..n) as f64,
            next_obs: Observation { nodes: random_nodes(n, &mut rng) },
            cost: rng.random_range(0.0..4.0),
            terminal: rng.random_bool(0.3),
        })
        .collect();
    let refs: Vec<&Transition> = batch.iter().collect();
    agent.lagrange.lambda = 0.0;
    let y0 = agent.td_targets(&refs).map_err(|e| e.to_string())?;
    let lambda1 = rng.random_range(0.5..3.0);
    agent.lagrange.lambda = lambda1;
    let y1 = agent.td_targets(&refs).map_err(|e| e.to_string())?;
    for (k, t) in batch.iter().enumerate() {
        let q = agent.target.q_values(&t.next_obs.nodes, 1).unwrap();
        let max_q = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let plain = if t.terminal { t.reward } else { t.reward + learn.gamma * max_q };
        ensure(rel_err(y0[k], plain) <= 1e-12, || format!("sample {k}: y(0) = {} vs DQN target {plain}", y0[k]))?;
        let slope = (y1[k] - y0[k]) / lambda1;
        let want = if t.terminal { 0.0 } else { -t.cost };
        ensure((slope - want).abs() <= 1e-9 * (1.0 + t.cost), || format!("sample {k}: dy/dlambda = {slope} vs {want}"))?;
    }
    Ok(format!("{transitions} transitions, y(0) matches DQN and slope is -c (0 when terminal)"))
}

// ---- CLI determinism -----------------------------------------------------

pub const SMOKE_CONFIG: &str = "\
episodes = 1
rounds_per_episode = 4
checkpoint_every = 1
seed = 11
learning.feature_width = 8
learning.head_hidden = 8
learning.batch_size = 4
";

pub fn cli_determinism(bin: &Path, scratch: &Path) -> Check {
    let cfg = scratch.join("smoke.txt");
    std::fs::write(&cfg, SMOKE_CONFIG).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for tag in ["a", "b"] {
        let out = scratch.join(tag);
        let status = Command::new(bin)
            .args(["train", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || format!("train failed: {}", String::from_utf8_lossy(&status.stderr)))?;
        outputs.push(std::fs::read(out.join("metrics.csv")).map_err(|e| e.to_string())?);
    }
    ensure(outputs[0] == outputs[1], || "metrics.csv differs between identical runs".into())?;
    ensure(outputs[0].split(|&b| b == b'\n').filter(|l| !l.is_empty()).count() == 2, || "expected header plus one row".into())?;
    Ok(format!("{} identical bytes", outputs[0].len()))
}
