//! Flat `key = value` run configuration with dotted sections.
//!
//! ```text
//! # broadcast scheme, tighter budget
//! scheme = broadcast
//! e_c = 1
//! scenario.n_uavs = 5
//! learning.lr = 0.001
//! pid.kp = 0.05
//! ```
//!
//! All physical quantities are SI (watts, meters, seconds, hertz). GBS
//! positions are `x,y,z` triples separated by `;`, control center first.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::env::Scheme;
use crate::error::{Error, Result};
use crate::lagrange::PidCadence;
use crate::neural::AttentionScale;
use crate::scenario::Point3;
use crate::trainer::TrainConfig;

fn parse_num<T: FromStr>(value: &str) -> std::result::Result<T, String> {
    value.parse::<T>().map_err(|_| format!("cannot parse '{value}' as a number"))
}

fn parse_points(value: &str) -> std::result::Result<Vec<Point3>, String> {
    value
        .split(';')
        .map(|triple| {
            let parts: Vec<&str> = triple.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(format!("expected x,y,z but got '{}'", triple.trim()));
            }
            Ok(Point3::new(parse_num(parts[0])?, parse_num(parts[1])?, parse_num(parts[2])?))
        })
        .collect()
}

fn format_points(points: &[Point3]) -> String {
    points.iter().map(|p| format!("{:?},{:?},{:?}", p.x, p.y, p.z)).collect::<Vec<_>>().join(";")
}

/// Applies one `key = value` pair to `cfg`.
pub fn set_key(cfg: &mut TrainConfig, key: &str, value: &str) -> std::result::Result<(), String> {
    let s = &mut cfg.scenario;
    let l = &mut cfg.learning;
    match key {
        "scheme" => cfg.scheme = Scheme::parse(value).map_err(|e| e.to_string())?,
        "episodes" => cfg.episodes = parse_num(value)?,
        "rounds_per_episode" => cfg.rounds_per_episode = parse_num(value)?,
        "e_c" => cfg.e_c = parse_num(value)?,
        "seed" => cfg.seed = parse_num(value)?,
        "epsilon_start" => cfg.epsilon_start = parse_num(value)?,
        "epsilon_decay" => cfg.epsilon_decay = parse_num(value)?,
        "epsilon_min" => cfg.epsilon_min = parse_num(value)?,
        "checkpoint_every" => cfg.checkpoint_every = parse_num(value)?,

        "scenario.n_uavs" => s.n_uavs = parse_num(value)?,
        "scenario.n_interferers" => s.n_interferers = parse_num(value)?,
        "scenario.n_antennas" => s.n_antennas = parse_num(value)?,
        "scenario.r_ground" => s.r_ground = parse_num(value)?,
        "scenario.r_swarm" => s.r_swarm = parse_num(value)?,
        "scenario.height" => s.height = parse_num(value)?,
        "scenario.gbs_positions" => s.gbs_positions = parse_points(value)?,
        "scenario.p_gbs" => s.p_gbs = parse_num(value)?,
        "scenario.p_uav_max" => s.p_uav_max = parse_num(value)?,
        "scenario.p_rx" => s.p_rx = parse_num(value)?,
        "scenario.p_overhead" => s.p_overhead = parse_num(value)?,
        "scenario.p_idle" => s.p_idle = parse_num(value)?,
        "scenario.xi" => s.xi = parse_num(value)?,
        "scenario.kappa" => s.kappa = parse_num(value)?,
        "scenario.alpha1" => s.alpha1 = parse_num(value)?,
        "scenario.alpha2" => s.alpha2 = parse_num(value)?,
        "scenario.f_c" => s.f_c = parse_num(value)?,
        "scenario.eta_los" => s.eta_los = parse_num(value)?,
        "scenario.eta_nlos" => s.eta_nlos = parse_num(value)?,
        "scenario.los_a" => s.los_a = parse_num(value)?,
        "scenario.los_b" => s.los_b = parse_num(value)?,
        "scenario.gamma1" => s.gamma1 = parse_num(value)?,
        "scenario.gamma2" => s.gamma2 = parse_num(value)?,
        "scenario.noise_power" => s.noise_power = parse_num(value)?,
        "scenario.tau" => s.tau = parse_num(value)?,
        "scenario.tau1" => s.tau1 = parse_num(value)?,
        "scenario.tau2" => s.tau2 = parse_num(value)?,
        "scenario.slot_duration" => s.slot_duration = parse_num(value)?,
        "scenario.speed_min" => s.speed_min = parse_num(value)?,
        "scenario.speed_max" => s.speed_max = parse_num(value)?,
        "scenario.pause" => s.pause = parse_num(value)?,
        "scenario.round_interval" => s.round_interval = parse_num(value)?,

        "learning.lr" => l.lr = parse_num(value)?,
        "learning.gamma" => l.gamma = parse_num(value)?,
        "learning.beta" => l.beta = parse_num(value)?,
        "learning.batch_size" => l.batch_size = parse_num(value)?,
        "learning.replay_capacity" => l.replay_capacity = parse_num(value)?,
        "learning.feature_width" => cfg.net.feature_width = parse_num(value)?,
        "learning.heads" => cfg.net.heads = parse_num(value)?,
        "learning.head_hidden" => cfg.net.head_hidden = parse_num(value)?,
        "learning.attention_scale" => {
            cfg.net.attention_scale =
                AttentionScale::parse(value).ok_or_else(|| format!("attention_scale must be inv_sqrt or sqrt, got '{value}'"))?
        }

        "pid.kp" => cfg.pid.kp = parse_num(value)?,
        "pid.ki" => cfg.pid.ki = parse_num(value)?,
        "pid.kd" => cfg.pid.kd = parse_num(value)?,
        "pid.cadence" => {
            cfg.pid_cadence = PidCadence::parse(value).ok_or_else(|| format!("pid.cadence must be round or episode, got '{value}'"))?
        }
        _ => return Err(format!("unknown key '{key}'")),
    }
    Ok(())
}

/// Parses config text on top of the defaults and validates the result.
pub fn parse_config_str(text: &str) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| Error::Parse { line, message: format!("expected 'key = value', got '{content}'") })?;
        let (key, value) = (key.trim(), value.trim());
        if let Some(first) = seen.insert(key.to_string(), line) {
            return Err(Error::Parse { line, message: format!("duplicate key '{key}' (first set on line {first})") });
        }
        set_key(&mut cfg, key, value).map_err(|message| Error::Parse { line, message })?;
    }
    if let Err(e) = cfg.validate() {
        let msg = e.to_string();
        // Point at the offending line when the message names a key that was set.
        if let Some((_, &line)) = seen.iter().filter(|(k, _)| msg.contains(k.as_str())).max_by_key(|(k, _)| k.len()) {
            return Err(Error::Parse { line, message: msg });
        }
        return Err(e);
    }
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

/// Every key with its current value; parses back to an identical config.
pub fn to_config_text(cfg: &TrainConfig) -> String {
    let s = &cfg.scenario;
    let l = &cfg.learning;
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("scheme", cfg.scheme.name().into());
    kv("episodes", cfg.episodes.to_string());
    kv("rounds_per_episode", cfg.rounds_per_episode.to_string());
    kv("e_c", format!("{:?}", cfg.e_c));
    kv("seed", cfg.seed.to_string());
    kv("epsilon_start", format!("{:?}", cfg.epsilon_start));
    kv("epsilon_decay", format!("{:?}", cfg.epsilon_decay));
    kv("epsilon_min", format!("{:?}", cfg.epsilon_min));
    kv("checkpoint_every", cfg.checkpoint_every.to_string());
    kv("scenario.n_uavs", s.n_uavs.to_string());
    kv("scenario.n_interferers", s.n_interferers.to_string());
    kv("scenario.n_antennas", s.n_antennas.to_string());
    kv("scenario.gbs_positions", format_points(&s.gbs_positions));
    for (k, v) in [
        ("r_ground", s.r_ground),
        ("r_swarm", s.r_swarm),
        ("height", s.height),
        ("p_gbs", s.p_gbs),
        ("p_uav_max", s.p_uav_max),
        ("p_rx", s.p_rx),
        ("p_overhead", s.p_overhead),
        ("p_idle", s.p_idle),
        ("xi", s.xi),
        ("kappa", s.kappa),
        ("alpha1", s.alpha1),
        ("alpha2", s.alpha2),
        ("f_c", s.f_c),
        ("eta_los", s.eta_los),
        ("eta_nlos", s.eta_nlos),
        ("los_a", s.los_a),
        ("los_b", s.los_b),
        ("gamma1", s.gamma1),
        ("gamma2", s.gamma2),
        ("noise_power", s.noise_power),
        ("tau", s.tau),
        ("tau1", s.tau1),
        ("tau2", s.tau2),
        ("slot_duration", s.slot_duration),
        ("speed_min", s.speed_min),
        ("speed_max", s.speed_max),
        ("pause", s.pause),
        ("round_interval", s.round_interval),
    ] {
        kv(&format!("scenario.{k}"), format!("{v:?}"));
    }
    kv("learning.lr", format!("{:?}", l.lr));
    kv("learning.gamma", format!("{:?}", l.gamma));
    kv("learning.beta", format!("{:?}", l.beta));
    kv("learning.batch_size", l.batch_size.to_string());
    kv("learning.replay_capacity", l.replay_capacity.to_string());
    kv("learning.feature_width", cfg.net.feature_width.to_string());
    kv("learning.heads", cfg.net.heads.to_string());
    kv("learning.head_hidden", cfg.net.head_hidden.to_string());
    kv("learning.attention_scale", cfg.net.attention_scale.name().into());
    kv("pid.kp", format!("{:?}", cfg.pid.kp));
    kv("pid.ki", format!("{:?}", cfg.pid.ki));
    kv("pid.kd", format!("{:?}", cfg.pid.kd));
    kv("pid.cadence", cfg.pid_cadence.name().into());
    out
}

/// SHA-256 of the canonical config text, lowercase hex.
pub fn config_hash(cfg: &TrainConfig) -> String {
    let digest = Sha256::digest(to_config_text(cfg).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
