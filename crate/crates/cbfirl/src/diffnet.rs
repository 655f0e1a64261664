//! Minimal differentiable multilayer perceptrons.
//!
//! One flat parameter vector per net, tanh hidden layers, identity output,
//! exact reverse-mode gradients for both parameters and inputs, an adaptive
//! moment optimizer, and a plain-text checkpoint format shared by every net
//! in the project.
//!
//! Parameter layout, per layer in order: the weight matrix row-major as
//! `[out][in]`, then the biases. Shape mismatches panic; they are programmer
//! errors, not runtime conditions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::Path;

use crate::{Error, Result};

/// Flat parameter gradient, aligned index-for-index with [`Mlp::params`].
pub type Gradient = Vec<f64>;

/// Feed-forward net with tanh hidden activations and identity output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
}

fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes
        .windows(2)
        .map(|w| w[0] * w[1] + w[1])
        .sum()
}

impl Mlp {
    /// Uniform init in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Self {
        assert!(layer_sizes.len() >= 2, "need at least input and output sizes");
        assert!(layer_sizes.iter().all(|&s| s > 0), "layer sizes must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(param_count(layer_sizes));
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(rng.gen_range(-bound..bound));
            }
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Mlp {
            layer_sizes: layer_sizes.to_vec(),
            params,
        }
    }

    /// All-zero parameters; useful as a known fixed point in tests.
    pub fn zeros(layer_sizes: &[usize]) -> Self {
        assert!(layer_sizes.len() >= 2, "need at least input and output sizes");
        Mlp {
            layer_sizes: layer_sizes.to_vec(),
            params: vec![0.0; param_count(layer_sizes)],
        }
    }

    pub fn from_params(layer_sizes: &[usize], params: Vec<f64>) -> Self {
        assert_eq!(params.len(), param_count(layer_sizes), "parameter count mismatch");
        Mlp {
            layer_sizes: layer_sizes.to_vec(),
            params,
        }
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Forward pass. Hidden layers apply tanh, the output layer is identity.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_trace(x).pop().unwrap()
    }

    /// Post-activation values for every layer, input first.
    fn forward_trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        assert_eq!(x.len(), self.input_dim(), "input dimension mismatch");
        let n_layers = self.layer_sizes.len() - 1;
        let mut trace = Vec::with_capacity(n_layers + 1);
        trace.push(x.to_vec());
        let mut offset = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let biases = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let input = &trace[l];
            let mut out = vec![0.0; n_out];
            for (r, o) in out.iter_mut().enumerate() {
                let row = &weights[r * n_in..(r + 1) * n_in];
                let mut z = biases[r];
                for (w, xi) in row.iter().zip(input) {
                    z += w * xi;
                }
                *o = if l + 1 < n_layers { z.tanh() } else { z };
            }
            trace.push(out);
            offset += n_in * n_out + n_out;
        }
        trace
    }

    /// Reverse-mode vector-Jacobian product. Returns the parameter gradient
    /// and the cotangent with respect to the input.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> (Gradient, Vec<f64>) {
        assert_eq!(upstream.len(), self.output_dim(), "upstream dimension mismatch");
        let trace = self.forward_trace(x);
        let n_layers = self.layer_sizes.len() - 1;
        let mut grad = vec![0.0; self.params.len()];
        let mut delta: Vec<f64> = upstream.to_vec();

        // Offsets of each layer's weights in the flat parameter vector.
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += self.layer_sizes[l] * self.layer_sizes[l + 1] + self.layer_sizes[l + 1];
        }

        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let offset = offsets[l];
            // Convert the post-activation cotangent to a pre-activation one.
            if l + 1 < n_layers {
                let y = &trace[l + 1];
                for (d, yi) in delta.iter_mut().zip(y) {
                    *d *= 1.0 - yi * yi;
                }
            }
            let input = &trace[l];
            let weights = &self.params[offset..offset + n_in * n_out];
            let mut next_delta = vec![0.0; n_in];
            for r in 0..n_out {
                let dr = delta[r];
                let row = &weights[r * n_in..(r + 1) * n_in];
                let grad_row = &mut grad[offset + r * n_in..offset + (r + 1) * n_in];
                for c in 0..n_in {
                    grad_row[c] += dr * input[c];
                    next_delta[c] += dr * row[c];
                }
                grad[offset + n_in * n_out + r] += dr;
            }
            delta = next_delta;
        }
        (grad, delta)
    }
}

/// Adaptive moment estimation state for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    steps: u64,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimState {
    pub fn new(n_params: usize, step_size: f64) -> Self {
        OptimState {
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
            steps: 0,
            step_size,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One bias-corrected update, in place. The gradient must align
    /// index-for-index with `params`; any non-finite entry aborts training.
    pub fn opt_step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        assert_eq!(params.len(), self.first_moment.len(), "optimizer length mismatch");
        assert_eq!(grad.len(), params.len(), "gradient length mismatch");
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDiverged);
        }
        self.steps += 1;
        let bc1 = 1.0 - self.beta1.powi(self.steps as i32);
        let bc2 = 1.0 - self.beta2.powi(self.steps as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.first_moment[i] = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            self.second_moment[i] = self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.first_moment[i] / bc1;
            let v_hat = self.second_moment[i] / bc2;
            params[i] -= self.step_size * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

/// Checkpoint text: line one is the layer sizes space-separated, then one
/// parameter per line, then any extra values (e.g. a policy's log-std) one
/// per line. Values are printed with the shortest representation that parses
/// back to the identical bits.
pub fn checkpoint_string(net: &Mlp, extra: &[f64]) -> String {
    let mut out = String::new();
    let sizes: Vec<String> = net.layer_sizes.iter().map(|s| s.to_string()).collect();
    out.push_str(&sizes.join(" "));
    out.push('\n');
    for p in &net.params {
        out.push_str(&format!("{}\n", p));
    }
    for e in extra {
        out.push_str(&format!("{}\n", e));
    }
    out
}

pub fn parse_checkpoint(text: &str) -> Result<(Mlp, Vec<f64>)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty checkpoint".to_string()))?;
    let layer_sizes: Vec<usize> = header
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad layer size '{}'", t)))
        })
        .collect::<Result<_>>()?;
    if layer_sizes.len() < 2 {
        return Err(Error::Parse("checkpoint needs at least two layer sizes".to_string()));
    }
    let values: Vec<f64> = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad parameter '{}'", l)))
        })
        .collect::<Result<_>>()?;
    let n = param_count(&layer_sizes);
    if values.len() < n {
        return Err(Error::Parse(format!(
            "checkpoint has {} values, expected at least {}",
            values.len(),
            n
        )));
    }
    let params = values[..n].to_vec();
    let extra = values[n..].to_vec();
    Ok((Mlp::from_params(&layer_sizes, params), extra))
}

pub fn save_checkpoint(path: &Path, net: &Mlp, extra: &[f64]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(checkpoint_string(net, extra).as_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Mlp, Vec<f64>)> {
    let text = std::fs::read_to_string(path)?;
    parse_checkpoint(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng as _;

    /// Relative error with a floor so near-zero entries are compared on an
    /// absolute scale instead of blowing up the quotient.
    pub(crate) fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
    }

    fn central_diff(mut f: impl FnMut(&[f64]) -> f64, at: &[f64], h: f64) -> Vec<f64> {
        let mut grad = vec![0.0; at.len()];
        let mut point = at.to_vec();
        for i in 0..at.len() {
            let orig = point[i];
            point[i] = orig + h;
            let fp = f(&point);
            point[i] = orig - h;
            let fm = f(&point);
            point[i] = orig;
            grad[i] = (fp - fm) / (2.0 * h);
        }
        grad
    }

    #[test]
    fn identity_single_layer_passes_input_through() {
        // 2-2 net with identity weights and zero bias; output layer is
        // identity activation, so forward(x) = x.
        let params = vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let net = Mlp::from_params(&[2, 2], params);
        assert_eq!(net.forward(&[0.3, -1.7]), vec![0.3, -1.7]);
    }

    #[test]
    fn zero_params_give_zero_output() {
        let net = Mlp::zeros(&[3, 5, 2]);
        assert_eq!(net.forward(&[1.0, -2.0, 0.5]), vec![0.0, 0.0]);
    }

    #[test]
    fn forward_matches_independent_evaluation() {
        // 2-3-1 net evaluated by spelling out every neuron by hand.
        let net = Mlp::new(&[2, 3, 1], 42);
        let p = net.params();
        let x = [0.7, -0.4];
        let h0 = (p[0] * x[0] + p[1] * x[1] + p[6]).tanh();
        let h1 = (p[2] * x[0] + p[3] * x[1] + p[7]).tanh();
        let h2 = (p[4] * x[0] + p[5] * x[1] + p[8]).tanh();
        let y = p[9] * h0 + p[10] * h1 + p[11] * h2 + p[12];
        let out = net.forward(&x);
        assert!((out[0] - y).abs() < 1e-15);
    }

    #[test]
    fn backward_zero_upstream_gives_zero_gradients() {
        let net = Mlp::new(&[3, 4, 2], 1);
        let (grad, input_cot) = net.backward(&[0.1, 0.2, 0.3], &[0.0, 0.0]);
        assert!(grad.iter().all(|&g| g == 0.0));
        assert!(input_cot.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn linear_net_gradient_identities() {
        // y = w * x + b with w = 2, b = 0.5; upstream 1 gives dL/dw = x,
        // dL/db = 1, input cotangent = w.
        let net = Mlp::from_params(&[1, 1], vec![2.0, 0.5]);
        let (grad, input_cot) = net.backward(&[3.0], &[1.0]);
        assert_eq!(grad, vec![3.0, 1.0]);
        assert_eq!(input_cot, vec![2.0]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        for seed in 0..10u64 {
            let net = Mlp::new(&[4, 8, 8, 1], seed);
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (grad, input_cot) = net.backward(&x, &[1.0]);

            let sizes = net.layer_sizes().to_vec();
            let numeric = central_diff(
                |p| Mlp::from_params(&sizes, p.to_vec()).forward(&x)[0],
                net.params(),
                1e-5,
            );
            for (a, n) in grad.iter().zip(&numeric) {
                assert!(rel_err(*a, *n) < 1e-4, "param grad {} vs {}", a, n);
            }
            let numeric_in = central_diff(|xv| net.forward(xv)[0], &x, 1e-5);
            for (a, n) in input_cot.iter().zip(&numeric_in) {
                assert!(rel_err(*a, *n) < 1e-4, "input grad {} vs {}", a, n);
            }
        }
    }

    #[test]
    fn backward_does_not_mutate_inputs() {
        let net = Mlp::new(&[2, 3, 1], 9);
        let before = net.clone();
        let x = vec![0.4, -0.6];
        let up = vec![2.0];
        let _ = net.backward(&x, &up);
        assert_eq!(net, before);
        assert_eq!(x, vec![0.4, -0.6]);
    }

    #[test]
    #[should_panic(expected = "input dimension mismatch")]
    fn forward_panics_on_dimension_mismatch() {
        let net = Mlp::zeros(&[2, 2]);
        net.forward(&[1.0, 2.0, 3.0]);
    }

    #[test]
    fn optimizer_zero_gradient_is_a_fixed_point() {
        let mut net = Mlp::new(&[2, 3, 1], 5);
        let before = net.params().to_vec();
        let mut opt = OptimState::new(net.n_params(), 1e-3);
        for _ in 0..7 {
            opt.opt_step(net.params_mut(), &vec![0.0; before.len()]).unwrap();
        }
        assert_eq!(net.params(), &before[..]);
    }

    #[test]
    fn optimizer_first_step_moves_by_step_size() {
        // Fresh moments with g = 1: bias-corrected m and v are both 1, so
        // the update is exactly alpha / (1 + epsilon).
        let alpha = 0.05;
        let mut params = vec![1.0];
        let mut opt = OptimState::new(1, alpha);
        opt.opt_step(&mut params, &[1.0]).unwrap();
        let expected = 1.0 - alpha / (1.0 + opt.epsilon);
        assert!((params[0] - expected).abs() < 1e-15);
        assert!((params[0] - (1.0 - alpha)).abs() < 1e-8);
    }

    #[test]
    fn optimizer_is_deterministic() {
        let grad = vec![0.3, -0.7, 0.1];
        let run = || {
            let mut params = vec![0.5, -0.5, 0.25];
            let mut opt = OptimState::new(3, 1e-2);
            for _ in 0..5 {
                opt.opt_step(&mut params, &grad).unwrap();
            }
            params
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn optimizer_rejects_non_finite_gradients() {
        let mut params = vec![0.0];
        let mut opt = OptimState::new(1, 1e-2);
        let err = opt.opt_step(&mut params, &[f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::TrainingDiverged));
    }

    #[test]
    fn optimizer_depends_on_gradient_layout() {
        // Permuting the gradient must change the result; index alignment is
        // part of the contract.
        let grad = vec![0.9, -0.1, 0.3];
        let mut permuted = grad.clone();
        permuted.swap(0, 2);
        let apply = |g: &[f64]| {
            let mut params = vec![0.5, 0.5, 0.5];
            let mut opt = OptimState::new(3, 1e-2);
            opt.opt_step(&mut params, g).unwrap();
            params
        };
        assert_ne!(apply(&grad), apply(&permuted));
    }

    proptest! {
        #[test]
        fn checkpoint_round_trips_bit_exactly(seed in 0u64..1000, extra in proptest::collection::vec(-10.0f64..10.0, 0..4)) {
            let net = Mlp::new(&[3, 5, 2], seed);
            let text = checkpoint_string(&net, &extra);
            let (loaded, loaded_extra) = parse_checkpoint(&text).unwrap();
            prop_assert_eq!(loaded, net);
            prop_assert_eq!(loaded_extra, extra);
        }
    }
}
