use super::matrix::Matrix;
use crate::error::{config_err, Error, Result};

/// Adam first/second moment buffers with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
}

impl AdamState {
    pub fn new(shapes: &[(usize, usize)]) -> Self {
        Self::with_betas(shapes, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(shapes: &[(usize, usize)], beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect::<Vec<_>>();
        Self { beta1, beta2, eps, step: 0, m: zeros(), v: zeros() }
    }

    /// Applies one update to `params` in place.
    pub fn step(&mut self, params: &mut [Matrix], grads: &[Matrix], lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(config_err(format!("learning rate must be > 0, got {lr}")));
        }
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::Shape("optimizer, parameter and gradient slot counts differ".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(Error::Shape("optimizer slot shape mismatch".into()));
            }
            let (ps, gs, ms, vs) = (p.as_mut_slice(), g.as_slice(), m.as_mut_slice(), v.as_mut_slice());
            for i in 0..ps.len() {
                let gi = gs[i];
                ms[i] = self.beta1 * ms[i] + (1.0 - self.beta1) * gi;
                vs[i] = self.beta2 * vs[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = ms[i] / bc1;
                let v_hat = vs[i] / bc2;
                ps[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![Matrix::from_vec(1, 3, vec![1.0, 1.0, 1.0]).unwrap()];
        let g = vec![Matrix::from_vec(1, 3, vec![0.5, -2.0, 1e-3]).unwrap()];
        let mut adam = AdamState::new(&[(1, 3)]);
        adam.step(&mut p, &g, 0.01).unwrap();
        let moved: Vec<f64> = p[0].as_slice().iter().map(|x| x - 1.0).collect();
        assert!((moved[0] + 0.01).abs() < 1e-9);
        assert!((moved[1] - 0.01).abs() < 1e-9);
        assert!((moved[2] + 0.01).abs() < 1e-7);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![Matrix::from_vec(1, 2, vec![0.3, -0.7]).unwrap()];
        let g = vec![Matrix::zeros(1, 2)];
        let mut adam = AdamState::new(&[(1, 2)]);
        adam.step(&mut p, &g, 0.1).unwrap();
        assert_eq!(p[0].as_slice(), &[0.3, -0.7]);
    }

    #[test]
    fn rejects_non_positive_lr() {
        let mut p = vec![Matrix::zeros(1, 1)];
        let mut adam = AdamState::new(&[(1, 1)]);
        assert!(adam.step(&mut p, &[Matrix::zeros(1, 1)], 0.0).is_err());
    }

    #[test]
    fn quadratic_trace_matches_reference() {
        // Reference Adam written out scalar by scalar, minimizing (x - 3)^2 from x = 0.
        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8, 0.1);
        let (mut x, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        let mut reference = Vec::new();
        for t in 1..=10 {
            let g = 2.0 * (x - 3.0);
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);
            reference.push(x);
        }
        let mut p = vec![Matrix::zeros(1, 1)];
        let mut adam = AdamState::new(&[(1, 1)]);
        for expected in reference {
            let g = vec![Matrix::from_vec(1, 1, vec![2.0 * (p[0].get(0, 0) - 3.0)]).unwrap()];
            adam.step(&mut p, &g, lr).unwrap();
            assert!((p[0].get(0, 0) - expected).abs() < 1e-10);
        }
    }
}
