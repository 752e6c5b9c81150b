use serde::{Deserialize, Serialize};

use super::TrainConfig;

/// First and second moment estimates for Adam, shaped like the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { first_moment: vec![0.0; len], second_moment: vec![0.0; len], step: 0 }
    }

    pub(crate) fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let bias1 = 1.0 - b1.powi(self.step as i32);
        let bias2 = 1.0 - b2.powi(self.step as i32);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        // With bias correction the first update is lr * g / (|g| + eps).
        let cfg = TrainConfig::default();
        let mut state = AdamState::new(2);
        let mut params = vec![1.0, -1.0];
        state.step(&mut params, &[0.5, -2.0], &cfg);
        assert!((params[0] - (1.0 - 0.0005)).abs() < 1e-10);
        assert!((params[1] - (-1.0 + 0.0005)).abs() < 1e-10);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let cfg = TrainConfig { learning_rate: 0.05, ..TrainConfig::default() };
        let mut state = AdamState::new(1);
        let mut x = vec![3.0];
        for _ in 0..2000 {
            let g = vec![2.0 * (x[0] - 0.5)];
            state.step(&mut x, &g, &cfg);
        }
        assert!((x[0] - 0.5).abs() < 1e-3);
    }
}
