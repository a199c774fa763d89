use crate::error::{Error, Result};
use crate::nn::dense::{DenseGrads, DenseNet};

/// Adam optimizer state over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon_stab: f64,
}

impl AdamState {
    pub fn new(param_count: usize, learning_rate: f64) -> Self {
        Self {
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon_stab: 1e-8,
        }
    }

    pub fn for_net(net: &DenseNet, learning_rate: f64) -> Self {
        Self::new(net.param_count(), learning_rate)
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn param_count(&self) -> usize {
        self.first_moment.len()
    }

    /// One bias-corrected Adam update over `(params, grads)` slice pairs,
    /// visited in a fixed order that must match between calls.
    pub fn update<'a, P, G>(&mut self, params: P, grads: G) -> Result<()>
    where
        P: IntoIterator<Item = &'a mut [f64]>,
        G: IntoIterator<Item = &'a [f64]>,
    {
        let mut params: Vec<&'a mut [f64]> = params.into_iter().collect();
        let grads: Vec<&'a [f64]> = grads.into_iter().collect();
        if params.len() != grads.len()
            || params.iter().zip(&grads).any(|(p, g)| p.len() != g.len())
            || params.iter().map(|p| p.len()).sum::<usize>() != self.first_moment.len()
        {
            return Err(Error::shape("Adam parameter/gradient layout mismatch"));
        }
        if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::Numeric("non-finite gradient passed to Adam".into()));
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        let mut offset = 0;
        for (p, g) in params.iter_mut().zip(&grads) {
            let m = &mut self.first_moment[offset..offset + p.len()];
            let v = &mut self.second_moment[offset..offset + p.len()];
            for k in 0..p.len() {
                let gk = g[k];
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                let m_hat = m[k] / bias1;
                let v_hat = v[k] / bias2;
                p[k] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon_stab);
            }
            offset += p.len();
        }
        Ok(())
    }
}

/// Adam step on a flat parameter vector.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<()> {
    state.update([params], [grads])
}

/// Adam step applied to every parameter of `net`.
pub fn adam_step_net(net: &mut DenseNet, grads: &DenseGrads, state: &mut AdamState) -> Result<()> {
    state.update(net.param_slices_mut(), grads.slices())
}
