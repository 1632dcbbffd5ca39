//! Radio-link math: LoS probability, air-to-ground and UAV-to-UAV channels,
//! and the Phase I / unicast / broadcast SINR expressions.
//!
//! Channel amplitudes are stored so that `|h|^2` is the received power gain.
//! For the air-to-ground link that gain is the LoS/NLoS-weighted coefficient
//! times the free-space factor `(4 pi d f_c / c)^alpha1`; for D2D links it is
//! `d^-alpha2`. Small-scale fading multiplies the amplitude.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{config_err, domain_err, Result};
use crate::scenario::{elevation_angle, Point3, ScenarioConfig, SPEED_OF_LIGHT};

/// One block-fading realization: air-to-ground and UAV-to-UAV coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingDraw {
    n_gbs: usize,
    n_antennas: usize,
    n_uavs: usize,
    g2a: Vec<Complex64>,
    u2u: Vec<Complex64>,
}

pub fn sample_cn01<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

impl FadingDraw {
    pub fn sample<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Self {
        let (n_gbs, k, n) = (config.n_gbs(), config.n_antennas, config.n_uavs);
        let g2a = (0..n_gbs * k * n).map(|_| sample_cn01(rng)).collect();
        let u2u = (0..n * n).map(|_| sample_cn01(rng)).collect();
        Self { n_gbs, n_antennas: k, n_uavs: n, g2a, u2u }
    }

    /// All coefficients set to `value`; handy for deterministic checks.
    pub fn constant(config: &ScenarioConfig, value: Complex64) -> Self {
        let (n_gbs, k, n) = (config.n_gbs(), config.n_antennas, config.n_uavs);
        Self { n_gbs, n_antennas: k, n_uavs: n, g2a: vec![value; n_gbs * k * n], u2u: vec![value; n * n] }
    }

    fn g2a_index(&self, m: usize, n: usize, k: usize) -> usize {
        (m * self.n_antennas + k) * self.n_uavs + n
    }

    pub fn g2a(&self, m: usize, n: usize, k: usize) -> Complex64 {
        self.g2a[self.g2a_index(m, n, k)]
    }

    pub fn set_g2a(&mut self, m: usize, n: usize, k: usize, value: Complex64) {
        let idx = self.g2a_index(m, n, k);
        self.g2a[idx] = value;
    }

    pub fn u2u(&self, i: usize, n: usize) -> Complex64 {
        self.u2u[i * self.n_uavs + n]
    }

    pub fn set_u2u(&mut self, i: usize, n: usize, value: Complex64) {
        self.u2u[i * self.n_uavs + n] = value;
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n_gbs, self.n_antennas, self.n_uavs)
    }

    pub fn g2a_coefficients(&self) -> &[Complex64] {
        &self.g2a
    }
}

/// Received power split into its parts; `sinr = signal / (interference + noise)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub signal_power: f64,
    pub interference_power: f64,
    pub noise_power: f64,
    pub sinr: f64,
}

impl LinkBudget {
    pub fn new(signal_power: f64, interference_power: f64, noise_power: f64) -> Self {
        Self { signal_power, interference_power, noise_power, sinr: signal_power / (interference_power + noise_power) }
    }

    pub fn decodes(&self, threshold: f64) -> bool {
        self.sinr >= threshold
    }
}

/// LoS probability as a sigmoid of the elevation angle in degrees.
pub fn los_probability(theta: f64, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(config_err(format!("LoS constants must be positive, got a={a}, b={b}")));
    }
    if !(0.0..=90.0).contains(&theta) {
        return Err(domain_err(format!("elevation angle {theta} outside [0, 90] degrees")));
    }
    Ok(1.0 / (1.0 + a * (-b * (theta - a)).exp()))
}

/// Free-space factor `(4 pi d f_c / c)^alpha1`.
pub fn free_space_factor(d: f64, f_c: f64, alpha1: f64) -> f64 {
    (4.0 * PI * d * f_c / SPEED_OF_LIGHT).powf(alpha1)
}

/// Deterministic air-to-ground power gain between a GBS and a UAV.
pub fn air_to_ground_gain(gbs: &Point3, uav: &Point3, config: &ScenarioConfig) -> Result<f64> {
    let d = gbs.distance(uav);
    if d == 0.0 {
        return Err(domain_err("GBS and UAV positions coincide"));
    }
    let theta = elevation_angle(gbs, uav)?.max(0.0);
    let p_los = los_probability(theta, config.los_a, config.los_b)?;
    let eta = p_los * config.eta_los + (1.0 - p_los) * config.eta_nlos;
    Ok(eta * free_space_factor(d, config.f_c, config.alpha1))
}

/// Read-only view of one round's links: geometry, constants and a fading draw.
#[derive(Debug, Clone, Copy)]
pub struct ChannelModel<'a> {
    pub config: &'a ScenarioConfig,
    pub positions: &'a [Point3],
    pub fading: &'a FadingDraw,
}

impl<'a> ChannelModel<'a> {
    pub fn new(config: &'a ScenarioConfig, positions: &'a [Point3], fading: &'a FadingDraw) -> Self {
        Self { config, positions, fading }
    }

    fn check_uav(&self, n: usize) -> Result<()> {
        if n >= self.positions.len() {
            return Err(domain_err(format!("UAV index {n} out of range")));
        }
        Ok(())
    }

    /// Channel from antenna `k` of GBS `m` to UAV `n`.
    pub fn phase1_channel(&self, m: usize, n: usize, k: usize) -> Result<Complex64> {
        self.check_uav(n)?;
        if m >= self.config.n_gbs() || k >= self.config.n_antennas {
            return Err(domain_err(format!("GBS/antenna index ({m}, {k}) out of range")));
        }
        let gain = air_to_ground_gain(&self.config.gbs_positions[m], &self.positions[n], self.config)?;
        Ok(gain.sqrt() * self.fading.g2a(m, n, k))
    }

    /// `P |sum_k h_{m,n}^k|^2` for one GBS.
    fn gbs_received_power(&self, m: usize, n: usize) -> Result<f64> {
        let gain = air_to_ground_gain(&self.config.gbs_positions[m], &self.positions[n], self.config)?;
        let coherent: Complex64 = (0..self.config.n_antennas).map(|k| self.fading.g2a(m, n, k)).sum();
        Ok(self.config.p_gbs * gain * coherent.norm_sqr())
    }

    /// Aggregate power received at UAV `n` from all interfering GBSs.
    pub fn gbs_interference(&self, n: usize) -> Result<f64> {
        self.check_uav(n)?;
        (1..self.config.n_gbs()).map(|m| self.gbs_received_power(m, n)).sum()
    }

    pub fn phase1_sinr(&self, n: usize) -> Result<LinkBudget> {
        self.check_uav(n)?;
        let signal = self.gbs_received_power(0, n)?;
        let interference = self.gbs_interference(n)?;
        Ok(LinkBudget::new(signal, interference, self.config.noise_power))
    }

    /// D2D channel from UAV `i` to UAV `n`, `|h|^2 = d^-alpha2 |beta|^2`.
    pub fn d2d_channel(&self, i: usize, n: usize) -> Result<Complex64> {
        self.check_uav(i)?;
        self.check_uav(n)?;
        if i == n {
            return Err(domain_err(format!("D2D channel from UAV {i} to itself")));
        }
        let d = self.positions[i].distance(&self.positions[n]);
        if d == 0.0 {
            return Err(domain_err(format!("UAVs {i} and {n} coincide")));
        }
        Ok(d.powf(-self.config.alpha2 / 2.0) * self.fading.u2u(i, n))
    }

    pub fn unicast_sinr(&self, tx: usize, rx: usize, tx_power: f64) -> Result<LinkBudget> {
        if !(tx_power >= 0.0 && tx_power <= self.config.p_uav_max * (1.0 + 1e-12)) {
            return Err(domain_err(format!("unicast power {tx_power} W outside [0, P_max]")));
        }
        let h = self.d2d_channel(tx, rx)?;
        let interference = self.gbs_interference(rx)?;
        Ok(LinkBudget::new(tx_power * h.norm_sqr(), interference, self.config.noise_power))
    }

    /// Coherent max-power broadcast from every UAV in `tx_set` to `rx`.
    pub fn broadcast_sinr(&self, tx_set: &[usize], rx: usize) -> Result<LinkBudget> {
        if tx_set.is_empty() {
            return Err(domain_err("broadcast with no transmitters"));
        }
        if tx_set.contains(&rx) {
            return Err(domain_err(format!("UAV {rx} cannot receive its own broadcast")));
        }
        let mut sum = Complex64::new(0.0, 0.0);
        for &i in tx_set {
            sum += self.d2d_channel(i, rx)?;
        }
        let interference = self.gbs_interference(rx)?;
        Ok(LinkBudget::new(self.config.p_uav_max * sum.norm_sqr(), interference, self.config.noise_power))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn overhead_positions(n: usize) -> Vec<Point3> {
        (0..n).map(|i| Point3::new(10.0 * i as f64, 0.0, 300.0)).collect()
    }

    #[test]
    fn los_probability_examples() {
        let p = los_probability(9.61, 9.61, 0.16).unwrap();
        assert!((p - 1.0 / 10.61).abs() < 1e-15);
        let top = los_probability(90.0, 9.61, 0.16).unwrap();
        assert!((top - 0.999_975).abs() < 1e-6, "{top}");
        assert!(los_probability(10.0, 0.0, 0.16).is_err());
        assert!(los_probability(10.0, 9.61, -1.0).is_err());
        assert!(los_probability(91.0, 9.61, 0.16).is_err());
        let mut prev = 0.0;
        for t in 0..=90 {
            let p = los_probability(t as f64, 9.61, 0.16).unwrap();
            assert!(p > prev && p < 1.0);
            prev = p;
        }
    }

    #[test]
    fn free_space_at_300m_2ghz() {
        let f = free_space_factor(300.0, 2e9, -2.0);
        assert!((f / 1.583e-9 - 1.0).abs() < 1e-3, "{f}");
    }

    #[test]
    fn equal_etas_make_los_irrelevant() {
        let c = ScenarioConfig { eta_los: 0.3, eta_nlos: 0.3, ..Default::default() };
        let near = air_to_ground_gain(&Point3::default(), &Point3::new(0.0, 0.0, 300.0), &c).unwrap();
        assert!((near - 0.3 * free_space_factor(300.0, 2e9, -2.0)).abs() < 1e-25);
    }

    #[test]
    fn no_interferers_gives_snr() {
        let c = ScenarioConfig {
            n_interferers: 0,
            gbs_positions: vec![Point3::default()],
            n_uavs: 2,
            ..Default::default()
        };
        let pos = overhead_positions(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fading = FadingDraw::sample(&c, &mut rng);
        let ch = ChannelModel::new(&c, &pos, &fading);
        let b = ch.phase1_sinr(0).unwrap();
        assert_eq!(b.interference_power, 0.0);
        assert_eq!(b.sinr, b.signal_power / c.noise_power);
    }

    #[test]
    fn zeroed_control_center_gives_zero_sinr() {
        let c = ScenarioConfig { n_uavs: 2, ..Default::default() };
        let pos = overhead_positions(2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut fading = FadingDraw::sample(&c, &mut rng);
        for k in 0..c.n_antennas {
            fading.set_g2a(0, 1, k, Complex64::new(0.0, 0.0));
        }
        let ch = ChannelModel::new(&c, &pos, &fading);
        assert_eq!(ch.phase1_sinr(1).unwrap().sinr, 0.0);
    }

    #[test]
    fn d2d_unit_distance_and_monotonicity() {
        let c = ScenarioConfig { n_uavs: 2, ..Default::default() };
        let fading = FadingDraw::constant(&c, Complex64::new(0.6, 0.8));
        let pos = vec![Point3::new(0.0, 0.0, 300.0), Point3::new(1.0, 0.0, 300.0)];
        let ch = ChannelModel::new(&c, &pos, &fading);
        assert!((ch.d2d_channel(0, 1).unwrap().norm_sqr() - 1.0).abs() < 1e-15);
        assert!(ch.d2d_channel(1, 1).is_err());
        let mut prev = f64::INFINITY;
        for d in 1..50 {
            let pos = vec![Point3::new(0.0, 0.0, 300.0), Point3::new(d as f64, 0.0, 300.0)];
            let g = ChannelModel::new(&c, &pos, &fading).d2d_channel(0, 1).unwrap().norm_sqr();
            assert!(g < prev);
            prev = g;
        }
    }

    #[test]
    fn d2d_mean_gain_at_10m() {
        let c = ScenarioConfig { n_uavs: 2, ..Default::default() };
        let pos = vec![Point3::new(0.0, 0.0, 300.0), Point3::new(10.0, 0.0, 300.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 100_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let f = FadingDraw::sample(&c, &mut rng);
            acc += ChannelModel::new(&c, &pos, &f).d2d_channel(0, 1).unwrap().norm_sqr();
        }
        let mean = acc / draws as f64;
        assert!((mean / 1e-4 - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn unicast_clean_link_and_linearity() {
        let c = ScenarioConfig {
            n_interferers: 0,
            gbs_positions: vec![Point3::default()],
            n_uavs: 2,
            ..Default::default()
        };
        let pos = vec![Point3::new(0.0, 0.0, 300.0), Point3::new(1.0, 0.0, 300.0)];
        let fading = FadingDraw::constant(&c, Complex64::new(1.0, 0.0));
        let ch = ChannelModel::new(&c, &pos, &fading);
        let b = ch.unicast_sinr(0, 1, c.p_uav_max).unwrap();
        assert!((b.sinr - c.p_uav_max / c.noise_power).abs() / b.sinr < 1e-14);
        let half = ch.unicast_sinr(0, 1, c.p_uav_max / 2.0).unwrap();
        assert!((half.sinr * 2.0 - b.sinr).abs() / b.sinr < 1e-14);
        assert!(ch.unicast_sinr(0, 1, c.p_uav_max * 2.0).is_err());
    }

    #[test]
    fn broadcast_singleton_matches_unicast_at_max_power() {
        let c = ScenarioConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pos = overhead_positions(5);
        let fading = FadingDraw::sample(&c, &mut rng);
        let ch = ChannelModel::new(&c, &pos, &fading);
        let u = ch.unicast_sinr(2, 4, c.p_uav_max).unwrap();
        let b = ch.broadcast_sinr(&[2], 4).unwrap();
        assert_eq!(u, b);
        assert!(ch.broadcast_sinr(&[], 4).is_err());
        assert!(ch.broadcast_sinr(&[4], 4).is_err());
    }

    #[test]
    fn broadcast_coherent_combining() {
        let c = ScenarioConfig { n_uavs: 3, ..Default::default() };
        let pos = vec![
            Point3::new(-10.0, 0.0, 300.0),
            Point3::new(10.0, 0.0, 300.0),
            Point3::new(0.0, 0.0, 300.0),
        ];
        let mut fading = FadingDraw::constant(&c, Complex64::new(1.0, 0.0));
        let ch = ChannelModel::new(&c, &pos, &fading);
        let one = ch.broadcast_sinr(&[0], 2).unwrap().signal_power;
        let two = ch.broadcast_sinr(&[0, 1], 2).unwrap().signal_power;
        assert!((two / one - 4.0).abs() < 1e-12);
        fading.set_u2u(1, 2, Complex64::new(-1.0, 0.0));
        let ch = ChannelModel::new(&c, &pos, &fading);
        assert_eq!(ch.broadcast_sinr(&[0, 1], 2).unwrap().signal_power, 0.0);
    }
}
