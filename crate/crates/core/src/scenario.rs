//! Swarm geometry, physical constants and random-waypoint mobility.
//!
//! All quantities are SI: meters, seconds, watts, hertz. UAVs live on a
//! horizontal disk of radius `r_swarm` at altitude `height`, centered above
//! the control-center GBS at the origin.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{config_err, domain_err, Result};

/// Rounded speed of light used by the link budget (wavelength 0.15 m at 2 GHz).
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn horizontal_radius(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n_uavs: usize,
    pub n_interferers: usize,
    pub n_antennas: usize,
    pub r_ground: f64,
    pub r_swarm: f64,
    pub height: f64,
    /// Control center first, then the interfering GBSs.
    pub gbs_positions: Vec<Point3>,
    pub p_gbs: f64,
    pub p_uav_max: f64,
    pub p_rx: f64,
    pub p_overhead: f64,
    pub p_idle: f64,
    /// Unicast power-control coefficient, W·m^(-alpha2).
    pub xi: f64,
    pub kappa: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub f_c: f64,
    pub eta_los: f64,
    pub eta_nlos: f64,
    pub los_a: f64,
    pub los_b: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub noise_power: f64,
    pub tau: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub slot_duration: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    pub pause: f64,
    /// Simulated time that elapses between two consecutive C&C rounds.
    pub round_interval: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_uavs: 5,
            n_interferers: 4,
            n_antennas: 4,
            r_ground: 300.0,
            r_swarm: 60.0,
            height: 300.0,
            gbs_positions: default_gbs_layout(),
            p_gbs: dbm_to_watts(43.0),
            p_uav_max: dbm_to_watts(23.0),
            p_rx: 0.05,
            p_overhead: 0.05,
            p_idle: 0.0,
            xi: 1e-6,
            kappa: 2.857,
            alpha1: -2.0,
            alpha2: 4.0,
            f_c: 2e9,
            eta_los: 10f64.powf(-0.1),
            eta_nlos: 1e-2,
            los_a: 9.61,
            los_b: 0.16,
            gamma1: 1.0,
            gamma2: 1.0,
            noise_power: dbm_to_watts(-90.0),
            tau: 1e-3,
            tau1: 0.125e-3,
            tau2: 0.875e-3,
            slot_duration: 0.25e-3,
            speed_min: 5.0,
            speed_max: 15.0,
            pause: 2.0,
            round_interval: 1.0,
        }
    }
}

/// Control center at the origin plus four interferers at (±105, ±105, 0).
pub fn default_gbs_layout() -> Vec<Point3> {
    vec![
        Point3::new(0.0, 0.0, 0.0),
        Point3::new(105.0, 105.0, 0.0),
        Point3::new(105.0, -105.0, 0.0),
        Point3::new(-105.0, 105.0, 0.0),
        Point3::new(-105.0, -105.0, 0.0),
    ]
}

impl ScenarioConfig {
    /// Number of whole D2D slots that fit in the Phase II window.
    pub fn n_slots(&self) -> usize {
        // Guard against 0.875e-3 / 0.25e-3 landing a hair under an integer.
        (self.tau2 / self.slot_duration + 1e-9).floor() as usize
    }

    pub fn n_gbs(&self) -> usize {
        self.n_interferers + 1
    }

    /// Energy of one max-power broadcast slot; the unit all reported energies use.
    pub fn broadcast_energy(&self) -> f64 {
        (self.kappa * self.p_uav_max + self.p_overhead) * self.slot_duration
    }

    pub fn rx_energy(&self) -> f64 {
        self.p_rx * self.slot_duration
    }

    pub fn idle_energy(&self) -> f64 {
        self.p_idle * self.slot_duration
    }

    pub fn tx_energy(&self, tx_power: f64) -> f64 {
        (self.kappa * tx_power + self.p_overhead) * self.slot_duration
    }

    pub fn swarm_center(&self) -> Point3 {
        Point3::new(0.0, 0.0, self.height)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_uavs == 0 {
            return Err(config_err("scenario.n_uavs must be at least 1"));
        }
        if self.n_antennas == 0 {
            return Err(config_err("scenario.n_antennas must be at least 1"));
        }
        if self.gbs_positions.len() != self.n_gbs() {
            return Err(config_err(format!(
                "scenario.gbs_positions: expected {} GBS positions (control center + {} interferers), got {}",
                self.n_gbs(),
                self.n_interferers,
                self.gbs_positions.len()
            )));
        }
        let center = self.gbs_positions[0];
        if center.x != 0.0 || center.y != 0.0 {
            return Err(config_err("scenario.gbs_positions: control-center GBS must sit at the ground-disk center"));
        }
        for (m, p) in self.gbs_positions.iter().enumerate() {
            if p.horizontal_radius() > self.r_ground * (1.0 + 1e-12) {
                return Err(config_err(format!("scenario.gbs_positions: GBS {m} lies outside the ground disk")));
            }
        }
        let positive = [
            ("scenario.r_ground", self.r_ground),
            ("scenario.height", self.height),
            ("scenario.p_gbs", self.p_gbs),
            ("scenario.p_uav_max", self.p_uav_max),
            ("scenario.p_rx", self.p_rx),
            ("scenario.p_overhead", self.p_overhead),
            ("scenario.xi", self.xi),
            ("scenario.kappa", self.kappa),
            ("scenario.alpha2", self.alpha2),
            ("scenario.f_c", self.f_c),
            ("scenario.eta_los", self.eta_los),
            ("scenario.eta_nlos", self.eta_nlos),
            ("scenario.los_a", self.los_a),
            ("scenario.los_b", self.los_b),
            ("scenario.noise_power", self.noise_power),
            ("scenario.tau", self.tau),
            ("scenario.tau1", self.tau1),
            ("scenario.tau2", self.tau2),
            ("scenario.slot_duration", self.slot_duration),
            ("scenario.speed_min", self.speed_min),
            ("scenario.round_interval", self.round_interval),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(config_err(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        let non_negative = [
            ("scenario.r_swarm", self.r_swarm),
            ("scenario.p_idle", self.p_idle),
            ("scenario.gamma1", self.gamma1),
            ("scenario.gamma2", self.gamma2),
            ("scenario.pause", self.pause),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(config_err(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.speed_max < self.speed_min || !self.speed_max.is_finite() {
            return Err(config_err("scenario.speed_max must be >= scenario.speed_min"));
        }
        if ((self.tau1 + self.tau2) - self.tau).abs() > 1e-9 * self.tau {
            return Err(config_err("scenario.tau1 + scenario.tau2 must equal scenario.tau"));
        }
        if self.n_slots() == 0 {
            return Err(config_err("Phase II window shorter than one slot"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub positions: Vec<Point3>,
    pub waypoints: Vec<Point3>,
    pub speeds: Vec<f64>,
    pub pause_remaining: Vec<f64>,
    pub has_message: Vec<bool>,
    /// Joules spent by each UAV so far in the current round.
    pub round_energy: Vec<f64>,
}

impl SwarmState {
    pub fn n_uavs(&self) -> usize {
        self.positions.len()
    }

    pub fn holders(&self) -> Vec<usize> {
        (0..self.n_uavs()).filter(|&i| self.has_message[i]).collect()
    }

    pub fn waiting(&self) -> Vec<usize> {
        (0..self.n_uavs()).filter(|&i| !self.has_message[i]).collect()
    }

    /// Clears message status and the energy ledger at the start of a round.
    pub fn begin_round(&mut self) {
        self.has_message.iter_mut().for_each(|m| *m = false);
        self.round_energy.iter_mut().for_each(|e| *e = 0.0);
    }
}

pub fn sample_in_disk<R: Rng + ?Sized>(radius: f64, height: f64, rng: &mut R) -> Point3 {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = 2.0 * PI * rng.random::<f64>();
    Point3::new(r * theta.cos(), r * theta.sin(), height)
}

fn sample_speed<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> f64 {
    if config.speed_max > config.speed_min {
        rng.random_range(config.speed_min..config.speed_max)
    } else {
        config.speed_min
    }
}

/// Uniform initial placement; every UAV starts in its pause period.
pub fn sample_initial_positions<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> SwarmState {
    let n = config.n_uavs;
    let mut state = SwarmState {
        positions: Vec::with_capacity(n),
        waypoints: Vec::with_capacity(n),
        speeds: Vec::with_capacity(n),
        pause_remaining: Vec::with_capacity(n),
        has_message: vec![false; n],
        round_energy: vec![0.0; n],
    };
    for _ in 0..n {
        let p = sample_in_disk(config.r_swarm, config.height, rng);
        state.positions.push(p);
        state.speeds.push(sample_speed(config, rng));
        if config.pause > 0.0 {
            state.waypoints.push(p);
            state.pause_remaining.push(config.pause);
        } else {
            state.waypoints.push(sample_in_disk(config.r_swarm, config.height, rng));
            state.pause_remaining.push(0.0);
        }
    }
    state
}

/// Advances every UAV by `dt` seconds of random-waypoint motion.
pub fn rwp_advance<R: Rng + ?Sized>(
    state: &mut SwarmState,
    dt: f64,
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(domain_err(format!("rwp_advance needs dt > 0, got {dt}")));
    }
    for i in 0..state.n_uavs() {
        let mut remaining = dt;
        while remaining > 0.0 {
            if state.pause_remaining[i] > 0.0 {
                let used = state.pause_remaining[i].min(remaining);
                state.pause_remaining[i] -= used;
                remaining -= used;
                if state.pause_remaining[i] <= 0.0 {
                    state.pause_remaining[i] = 0.0;
                    state.waypoints[i] = sample_in_disk(config.r_swarm, config.height, rng);
                    state.speeds[i] = sample_speed(config, rng);
                }
                continue;
            }
            let (pos, wp, speed) = (state.positions[i], state.waypoints[i], state.speeds[i]);
            let dist = pos.distance(&wp);
            let reach = speed * remaining;
            if reach < dist {
                let f = reach / dist;
                state.positions[i] = Point3::new(
                    pos.x + (wp.x - pos.x) * f,
                    pos.y + (wp.y - pos.y) * f,
                    pos.z + (wp.z - pos.z) * f,
                );
                remaining = 0.0;
            } else {
                state.positions[i] = wp;
                remaining -= dist / speed;
                if config.pause > 0.0 {
                    state.pause_remaining[i] = config.pause;
                } else {
                    state.waypoints[i] = sample_in_disk(config.r_swarm, config.height, rng);
                    state.speeds[i] = sample_speed(config, rng);
                    if dist == 0.0 && state.waypoints[i] == wp {
                        // Degenerate disk: nowhere to go.
                        break;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Elevation angle in degrees of `uav` as seen from `gbs`.
pub fn elevation_angle(gbs: &Point3, uav: &Point3) -> Result<f64> {
    let d = gbs.distance(uav);
    if d == 0.0 {
        return Err(domain_err("elevation angle undefined for coincident positions"));
    }
    let rel = ((uav.z - gbs.z) / d).clamp(-1.0, 1.0);
    Ok(rel.asin().to_degrees())
}
