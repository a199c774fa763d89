//! Gaussian radial-basis-function Q approximator trained by online TD(0).
//!
//! Centroids sit on a regular `b^d` grid over the unit cube and share one
//! isotropic variance `2 / b^2`; the Q head is linear in the features.

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::checkpoint::{read_f64s, split_header};

const MAGIC: &str = "RRLRBF";

#[derive(Debug, Clone, PartialEq)]
pub struct RbfNet {
    /// Row-major `[K x state_dim]`.
    centroids: Vec<f64>,
    kernel_variance: f64,
    /// Row-major `[num_actions x K]`.
    output_weights: Vec<f64>,
    bins_per_dim: usize,
    state_dim: usize,
    num_actions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbfQ {
    pub values: Vec<f64>,
    /// Set when the queried state had components outside `[0, 1]`.
    pub clipped: bool,
}

impl RbfNet {
    pub fn new(state_dim: usize, num_actions: usize, bins_per_dim: usize) -> Result<Self> {
        if state_dim == 0 || num_actions == 0 || bins_per_dim == 0 {
            return Err(Error::Argument("RBF dimensions must be positive".into()));
        }
        let k = bins_per_dim
            .checked_pow(state_dim as u32)
            .ok_or_else(|| Error::Argument("RBF grid too large".into()))?;
        let coord = |i: usize| {
            if bins_per_dim == 1 {
                0.5
            } else {
                i as f64 / (bins_per_dim - 1) as f64
            }
        };
        let mut centroids = Vec::with_capacity(k * state_dim);
        for idx in 0..k {
            // first dimension is the most significant digit
            let mut rest = idx;
            let mut digits = vec![0; state_dim];
            for d in (0..state_dim).rev() {
                digits[d] = rest % bins_per_dim;
                rest /= bins_per_dim;
            }
            centroids.extend(digits.into_iter().map(coord));
        }
        Ok(Self {
            centroids,
            kernel_variance: 2.0 / (bins_per_dim * bins_per_dim) as f64,
            output_weights: vec![0.0; num_actions * k],
            bins_per_dim,
            state_dim,
            num_actions,
        })
    }

    pub fn num_features(&self) -> usize {
        self.centroids.len() / self.state_dim
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn bins_per_dim(&self) -> usize {
        self.bins_per_dim
    }

    pub fn kernel_variance(&self) -> f64 {
        self.kernel_variance
    }

    pub fn centroid(&self, k: usize) -> &[f64] {
        &self.centroids[k * self.state_dim..(k + 1) * self.state_dim]
    }

    pub fn output_weights(&self) -> &[f64] {
        &self.output_weights
    }

    pub fn set_output_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        if weights.len() != self.output_weights.len() {
            return Err(Error::shape(format!(
                "expected {} output weights, got {}",
                self.output_weights.len(),
                weights.len()
            )));
        }
        self.output_weights = weights;
        Ok(())
    }

    fn weight_row(&self, a: usize) -> &[f64] {
        let k = self.num_features();
        &self.output_weights[a * k..(a + 1) * k]
    }

    fn clip_state(&self, s: &[f64]) -> Result<(Vec<f64>, Vec<bool>)> {
        if s.len() != self.state_dim {
            return Err(Error::shape(format!(
                "RBF expects state of length {}, got {}",
                self.state_dim,
                s.len()
            )));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite RBF input".into()));
        }
        let mut clipped = Vec::with_capacity(s.len());
        let x = s
            .iter()
            .map(|&v| {
                clipped.push(!(0.0..=1.0).contains(&v));
                v.clamp(0.0, 1.0)
            })
            .collect();
        Ok((x, clipped))
    }

    fn features_of(&self, x: &[f64]) -> Vec<f64> {
        let denom = 2.0 * self.kernel_variance;
        (0..self.num_features())
            .map(|k| {
                let sq: f64 = self
                    .centroid(k)
                    .iter()
                    .zip(x)
                    .map(|(c, v)| (v - c) * (v - c))
                    .sum();
                (-sq / denom).exp()
            })
            .collect()
    }

    /// Kernel activations at `s` (clipped into the unit cube).
    pub fn features(&self, s: &[f64]) -> Result<Vec<f64>> {
        let (x, _) = self.clip_state(s)?;
        Ok(self.features_of(&x))
    }

    pub fn q_values(&self, s: &[f64]) -> Result<RbfQ> {
        let (x, clipped) = self.clip_state(s)?;
        let phi = self.features_of(&x);
        let values = (0..self.num_actions)
            .map(|a| self.weight_row(a).iter().zip(&phi).map(|(w, p)| w * p).sum())
            .collect();
        Ok(RbfQ {
            values,
            clipped: clipped.into_iter().any(|c| c),
        })
    }

    /// `sum_a upstream[a] * dQ_a/ds`; clipped components get zero gradient.
    pub fn input_gradient(&self, s: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        if upstream.len() != self.num_actions {
            return Err(Error::shape("upstream length must equal the action count"));
        }
        let (x, clipped) = self.clip_state(s)?;
        let phi = self.features_of(&x);
        let mut grad = vec![0.0; self.state_dim];
        for (k, &p) in phi.iter().enumerate() {
            let coef: f64 = (0..self.num_actions)
                .map(|a| upstream[a] * self.weight_row(a)[k])
                .sum::<f64>()
                * p
                / self.kernel_variance;
            for (g, (v, c)) in grad.iter_mut().zip(x.iter().zip(self.centroid(k))) {
                *g -= coef * (v - c);
            }
        }
        for (g, c) in grad.iter_mut().zip(clipped) {
            if c {
                *g = 0.0;
            }
        }
        Ok(grad)
    }

    /// One TD(0) step on the row of `action`; returns the TD error.
    #[allow(clippy::too_many_arguments)]
    pub fn td_update(
        &mut self,
        s: &[f64],
        action: usize,
        reward: f64,
        s_next: &[f64],
        done: bool,
        gamma: f64,
        lr: f64,
    ) -> Result<f64> {
        if action >= self.num_actions {
            return Err(Error::shape(format!("action {action} out of range")));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Argument(format!("gamma must lie in [0, 1), got {gamma}")));
        }
        let bootstrap = if done {
            0.0
        } else {
            let next = self.q_values(s_next)?.values;
            gamma * next.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        };
        let (x, _) = self.clip_state(s)?;
        let phi = self.features_of(&x);
        let q_sa: f64 = self.weight_row(action).iter().zip(&phi).map(|(w, p)| w * p).sum();
        let delta = reward + bootstrap - q_sa;
        if !delta.is_finite() {
            return Err(Error::Numeric("non-finite TD error".into()));
        }
        let k = self.num_features();
        for (w, p) in self.output_weights[action * k..(action + 1) * k].iter_mut().zip(&phi) {
            *w += lr * delta * p;
        }
        Ok(delta)
    }

    /// Lipschitz constant of `Q(., a)` on the unit cube:
    /// `||w_a||_1 * max_s ||grad phi_k(s)||`, where the kernel gradient norm
    /// peaks at `exp(-1/2) / sigma`.
    pub fn lipschitz_bound(&self, action: usize) -> f64 {
        let l1: f64 = self.weight_row(action).iter().map(|w| w.abs()).sum();
        l1 * (-0.5f64).exp() / self.kernel_variance.sqrt()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!(
            "{MAGIC} v1 {};{};{};{}\n",
            self.bins_per_dim, self.state_dim, self.num_actions, self.kernel_variance
        )
        .into_bytes();
        for w in &self.output_weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (desc, payload) = split_header(bytes, MAGIC)?;
        let bad = || Error::format("<b>;<state_dim>;<num_actions>;<variance>", desc);
        let fields: Vec<&str> = desc.split(';').collect();
        if fields.len() != 4 {
            return Err(bad());
        }
        let b: usize = fields[0].parse().map_err(|_| bad())?;
        let d: usize = fields[1].parse().map_err(|_| bad())?;
        let a: usize = fields[2].parse().map_err(|_| bad())?;
        let variance: f64 = fields[3].parse().map_err(|_| bad())?;
        let mut net = Self::new(d, a, b)?;
        if variance.to_bits() != net.kernel_variance.to_bits() {
            return Err(Error::format(net.kernel_variance.to_string(), variance.to_string()));
        }
        let weights = read_f64s(payload, net.output_weights.len())?;
        net.set_output_weights(weights)?;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_and_variance() {
        let net = RbfNet::new(2, 3, 3).unwrap();
        assert_eq!(net.num_features(), 9);
        assert_eq!(net.kernel_variance(), 2.0 / 9.0);
        assert_eq!(net.centroid(0), &[0.0, 0.0]);
        assert_eq!(net.centroid(1), &[0.0, 0.5]);
        assert_eq!(net.centroid(8), &[1.0, 1.0]);
        let cp = RbfNet::new(4, 2, 3).unwrap();
        assert_eq!(cp.num_features(), 81);
    }

    #[test]
    fn feature_is_one_at_centroid_and_q_zero_for_zero_weights() {
        let net = RbfNet::new(2, 3, 3).unwrap();
        let phi = net.features(&[0.5, 0.5]).unwrap();
        assert_eq!(phi[4], 1.0);
        assert_eq!(net.q_values(&[0.3, 0.9]).unwrap().values, vec![0.0; 3]);
    }

    #[test]
    fn features_match_brute_force() {
        let net = RbfNet::new(2, 1, 3).unwrap();
        let var = 2.0 / 9.0;
        let grid = [0.0, 0.5, 1.0];
        let mut expect = Vec::new();
        for &c0 in &grid {
            for &c1 in &grid {
                let d2: f64 = (0.5f64 - c0).powi(2) + (0.5f64 - c1).powi(2);
                expect.push((-d2 / (2.0 * var)).exp());
            }
        }
        let phi = net.features(&[0.5, 0.5]).unwrap();
        for (a, b) in phi.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_state_is_clipped_and_flagged() {
        let net = RbfNet::new(2, 2, 3).unwrap();
        assert!(net.q_values(&[1.2, 0.5]).unwrap().clipped);
        assert!(!net.q_values(&[1.0, 0.0]).unwrap().clipped);
        assert_eq!(net.features(&[1.2, -0.1]).unwrap(), net.features(&[1.0, 0.0]).unwrap());
    }

    #[test]
    fn terminal_update_from_zero() {
        let mut net = RbfNet::new(2, 2, 3).unwrap();
        let s = [0.3, 0.8];
        net.td_update(&s, 1, 1.0, &[0.0, 0.0], true, 0.99, 1.0).unwrap();
        let phi = net.features(&s).unwrap();
        let norm2: f64 = phi.iter().map(|p| p * p).sum();
        let q = net.q_values(&s).unwrap().values;
        assert!((q[1] - norm2).abs() < 1e-12);
        assert_eq!(q[0], 0.0);
    }

    #[test]
    fn zero_td_error_is_no_change() {
        let mut net = RbfNet::new(1, 2, 2).unwrap();
        let before = net.clone();
        let delta = net.td_update(&[0.4], 0, 0.0, &[0.6], false, 0.9, 0.5).unwrap();
        assert_eq!(delta, 0.0);
        assert_eq!(net, before);
    }

    /// Independent two-step TD reference on a 1-D, b=2 grid (centroids 0 and 1,
    /// variance 1/2).
    #[test]
    fn two_step_update_matches_script() {
        let phi = |s: f64| [(-(s * s)).exp(), (-((s - 1.0) * (s - 1.0))).exp()];
        let mut w = [[0.0f64; 2]; 2];
        let q = |w: &[[f64; 2]; 2], s: f64, a: usize| w[a][0] * phi(s)[0] + w[a][1] * phi(s)[1];
        let (gamma, lr) = (0.9, 0.1);
        // step 1: s=0.2, a=0, r=1, s'=0.7, not done
        let d1 = 1.0 + gamma * q(&w, 0.7, 0).max(q(&w, 0.7, 1)) - q(&w, 0.2, 0);
        for k in 0..2 {
            w[0][k] += lr * d1 * phi(0.2)[k];
        }
        // step 2: s=0.7, a=1, r=-0.5, s'=0.2, not done
        let d2 = -0.5 + gamma * q(&w, 0.2, 0).max(q(&w, 0.2, 1)) - q(&w, 0.7, 1);
        for k in 0..2 {
            w[1][k] += lr * d2 * phi(0.7)[k];
        }

        let mut net = RbfNet::new(1, 2, 2).unwrap();
        assert_eq!(net.kernel_variance(), 0.5);
        net.td_update(&[0.2], 0, 1.0, &[0.7], false, gamma, lr).unwrap();
        net.td_update(&[0.7], 1, -0.5, &[0.2], false, gamma, lr).unwrap();
        let got = net.output_weights();
        let want = [w[0][0], w[0][1], w[1][0], w[1][1]];
        for (g, e) in got.iter().zip(&want) {
            assert!((g - e).abs() < 1e-12, "{g} vs {e}");
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut net = RbfNet::new(2, 3, 3).unwrap();
        let weights: Vec<f64> = (0..27).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect();
        net.set_output_weights(weights).unwrap();
        let s = [0.37, 0.61];
        let up = [0.2, -1.0, 0.7];
        let g = net.input_gradient(&s, &up).unwrap();
        let f = |x: &[f64]| -> f64 {
            net.q_values(x).unwrap().values.iter().zip(&up).map(|(q, u)| q * u).sum()
        };
        let h = 1e-6;
        for i in 0..2 {
            let mut a = s;
            let mut b = s;
            a[i] += h;
            b[i] -= h;
            let fd = (f(&a) - f(&b)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7, "{fd} vs {}", g[i]);
        }
    }

    #[test]
    fn checkpoint_round_trip_and_errors() {
        let mut net = RbfNet::new(2, 3, 4).unwrap();
        net.set_output_weights((0..48).map(|i| i as f64 * 0.125 - 2.0).collect()).unwrap();
        let bytes = net.encode();
        assert!(bytes.starts_with(b"RRLRBF v1 4;2;3;0.125\n"));
        assert_eq!(RbfNet::decode(&bytes).unwrap(), net);
        assert!(RbfNet::decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(RbfNet::decode(b"RRLCKPT v1 4;2;3;0.125\n").is_err());
    }

    proptest! {
        #[test]
        fn update_touches_only_taken_row(
            s in prop::collection::vec(0.0f64..1.0, 2),
            sn in prop::collection::vec(0.0f64..1.0, 2),
            a in 0usize..3, r in -2.0f64..2.0, done: bool,
        ) {
            let mut net = RbfNet::new(2, 3, 3).unwrap();
            net.set_output_weights((0..27).map(|i| (i as f64).sin()).collect()).unwrap();
            let before = net.output_weights().to_vec();
            net.td_update(&s, a, r, &sn, done, 0.99, 0.1).unwrap();
            for row in 0..3 {
                if row != a {
                    prop_assert_eq!(&net.output_weights()[row * 9..(row + 1) * 9], &before[row * 9..(row + 1) * 9]);
                }
            }
        }

        #[test]
        fn q_is_lipschitz(
            weights in prop::collection::vec(-5.0f64..5.0, 18),
            s in prop::collection::vec(0.0f64..1.0, 2),
            t in prop::collection::vec(0.0f64..1.0, 2),
        ) {
            let mut net = RbfNet::new(2, 2, 3).unwrap();
            net.set_output_weights(weights).unwrap();
            let qs = net.q_values(&s).unwrap().values;
            let qt = net.q_values(&t).unwrap().values;
            let dist = ((s[0] - t[0]).powi(2) + (s[1] - t[1]).powi(2)).sqrt();
            for a in 0..2 {
                prop_assert!((qs[a] - qt[a]).abs() <= net.lipschitz_bound(a) * dist + 1e-12);
            }
        }
    }
}
