use super::{ModelError, ModelParams};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.entries().iter().map(|(_, t)| vec![0.0; t.data.len()]).collect();
        Self { m: zeros.clone(), v: zeros, t: 0 }
    }

    /// Number of completed steps.
    pub fn step(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update; the step counter advances to `t + 1`.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<(), ModelError> {
    if !params.same_layout(grads) || state.m.len() != params.len() {
        return Err(ModelError::LayoutMismatch);
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads.data(i);
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, p) in params.data_mut(i).iter_mut().enumerate() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Tensor;

    fn scalar(v: f64) -> ModelParams {
        ModelParams::from_entries(vec![("p".into(), Tensor { shape: vec![1], data: vec![v] })])
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar(0.0);
        let mut state = AdamState::new(&p);
        adam_step(&mut p, &scalar(1.0), &mut state, &AdamConfig::default()).unwrap();
        // m_hat = v_hat = 1, so the update is lr / (1 + eps)
        assert!((p.data(0)[0] + 0.001).abs() < 1e-10);
        assert_eq!(state.step(), 1);
    }

    #[test]
    fn zero_gradient_is_noop() {
        let mut p = scalar(0.25);
        let mut state = AdamState::new(&p);
        for _ in 0..3 {
            adam_step(&mut p, &scalar(0.0), &mut state, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p.data(0)[0], 0.25);
    }

    #[test]
    fn steps_are_reproducible() {
        let run = || {
            let mut p = scalar(0.5);
            let mut s = AdamState::new(&p);
            for g in [0.3, -1.2] {
                adam_step(&mut p, &scalar(g), &mut s, &AdamConfig::default()).unwrap();
            }
            p.data(0)[0]
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }
}
