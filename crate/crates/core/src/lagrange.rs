//! PID controller for the Lagrange multiplier of the energy constraint.
//!
//! Costs and budgets are in broadcast-slot units (one max-power broadcast slot = 1).

use crate::error::{config_err, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self { kp: 0.05, ki: 0.005, kd: 0.1 }
    }
}

impl PidGains {
    pub fn validate(&self) -> Result<()> {
        for (name, g) in [("pid.kp", self.kp), ("pid.ki", self.ki), ("pid.kd", self.kd)] {
            if !(g.is_finite() && g >= 0.0) {
                return Err(config_err(format!("{name} must be finite and >= 0, got {g}")));
            }
        }
        Ok(())
    }
}

/// When the controller sees a cost sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PidCadence {
    /// After every round, on that round's cost.
    #[default]
    PerRound,
    /// After every episode, on the mean round cost of the episode.
    PerEpisode,
}

impl PidCadence {
    pub fn name(self) -> &'static str {
        match self {
            PidCadence::PerRound => "round",
            PidCadence::PerEpisode => "episode",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "round" => Some(PidCadence::PerRound),
            "episode" => Some(PidCadence::PerEpisode),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagrangeState {
    pub gains: PidGains,
    pub integral: f64,
    pub prev_cost: f64,
    pub lambda: f64,
}

pub fn pid_init(gains: PidGains) -> Result<LagrangeState> {
    gains.validate()?;
    Ok(LagrangeState { gains, integral: 0.0, prev_cost: 0.0, lambda: 0.0 })
}

/// Feeds one cost sample and returns the new multiplier.
pub fn pid_update(state: &mut LagrangeState, cost: f64, e_c: f64) -> Result<f64> {
    state.gains.validate()?;
    if !cost.is_finite() || !e_c.is_finite() {
        return Err(config_err(format!("PID inputs must be finite (cost {cost}, budget {e_c})")));
    }
    let delta = cost - e_c;
    let derivative = (cost - state.prev_cost).max(0.0);
    state.integral = (state.integral + delta).max(0.0);
    let g = state.gains;
    state.lambda = (g.kp * delta + g.ki * state.integral + g.kd * derivative).max(0.0);
    state.prev_cost = cost;
    Ok(state.lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_trace() {
        let mut s = pid_init(PidGains::default()).unwrap();
        assert_eq!(s.lambda, 0.0);
        assert_eq!(pid_update(&mut s, 5.0, 3.0).unwrap(), 0.61);
        assert_eq!(s.integral, 2.0);
        assert_eq!(pid_update(&mut s, 4.0, 3.0).unwrap(), 0.065);
        assert_eq!(s.integral, 3.0);
    }

    #[test]
    fn under_budget_projects_to_zero() {
        let mut s = pid_init(PidGains::default()).unwrap();
        assert_eq!(pid_update(&mut s, 0.0, 3.0).unwrap(), 0.0);
        assert_eq!(s.integral, 0.0);
    }

    #[test]
    fn steady_state_at_budget() {
        let mut s = pid_init(PidGains::default()).unwrap();
        pid_update(&mut s, 3.0, 3.0).unwrap();
        for _ in 0..10 {
            assert_eq!(pid_update(&mut s, 3.0, 3.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn negative_gain_rejected() {
        assert!(pid_init(PidGains { kp: -0.1, ki: 0.0, kd: 0.0 }).is_err());
        assert!(PidGains { kp: 0.0, ki: f64::NAN, kd: 0.0 }.validate().is_err());
    }
}
