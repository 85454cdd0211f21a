use serde::{Deserialize, Serialize};

use super::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction, one moment pair per parameter matrix.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &[Matrix]) -> Self {
        let zeros: Vec<Matrix> = params
            .iter()
            .map(|p| Matrix::zeros(p.rows(), p.cols()))
            .collect();
        Self {
            cfg,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one update. Parameters with no gradient keep their value
    /// and their moments.
    pub fn step(&mut self, params: &mut [Matrix], grads: &[Option<&Matrix>]) {
        self.step += 1;
        let t = self.step as i32;
        let c = &self.cfg;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            let Some(g) = grads[i] else { continue };
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (k, (pv, &gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * gv;
                v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * gv * gv;
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                *pv -= c.learning_rate * mhat / (vhat.sqrt() + c.epsilon);
            }
        }
    }
}
