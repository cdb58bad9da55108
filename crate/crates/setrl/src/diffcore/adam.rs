//! Adam with bias correction, plus global-norm gradient clipping.

use super::tensor::Tensor;
use super::DiffError;

/// Optimizer state. Moment buffers are allocated on the first step and are
/// congruent with the parameter list from then on; callers must pass the
/// same parameters in the same order every step.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64) -> AdamState {
        AdamState::with_hyper(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(lr: f64, beta1: f64, beta2: f64, eps: f64) -> AdamState {
        AdamState {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Updates taken so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update over all parameters, reading each tensor's
    /// gradient accumulator. A non-finite gradient anywhere rejects the
    /// whole update before any parameter moves.
    pub fn step(&mut self, names: &[String], params: &mut [&mut Tensor]) -> Result<(), DiffError> {
        if names.len() != params.len() {
            return Err(DiffError::OptimizerMismatch {
                expected: names.len(),
                got: params.len(),
            });
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = params.iter().map(|p| vec![0.0; p.len()]).collect();
        } else if self.m.len() != params.len() {
            return Err(DiffError::OptimizerMismatch {
                expected: self.m.len(),
                got: params.len(),
            });
        }
        for (name, p) in names.iter().zip(params.iter()) {
            let g = p
                .grad()
                .ok_or_else(|| DiffError::MissingGrad { name: name.clone() })?;
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(DiffError::NonFiniteGrad {
                    name: name.clone(),
                    index: i,
                    value: g[i],
                });
            }
        }

        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (t, p) in params.iter_mut().enumerate() {
            let m = &mut self.m[t];
            let v = &mut self.v[t];
            let g = p.grad().expect("validated above").to_vec();
            let values = p.values_mut();
            for i in 0..values.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                values[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Scales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(params: &mut [&mut Tensor], max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for p in params.iter() {
        if let Some(g) = p.grad() {
            for v in g {
                sq += v * v;
            }
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for p in params.iter_mut() {
            p.scale_grad(scale);
        }
    }
    norm
}
