//! Small dense networks with ReLU hidden layers and explicit reverse-mode
//! backward passes. Everything is plain `Vec<f64>` arithmetic; parameter
//! tensors are row-major.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
}

#[derive(Debug, Clone)]
pub struct Mlp {
    dims: Vec<usize>,
    /// weights[l] has shape dims[l+1] × dims[l], row-major.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    final_activation: Activation,
}

/// Post-activation values of every layer (index 0 is the input), enough to
/// replay the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }
}

impl Mlp {
    /// Seeded uniform init in ±sqrt(1/fan_in) for weights and biases.
    pub fn new(dims: &[usize], final_activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        assert!(dims.len() >= 2, "an mlp needs input and output dims");
        let mut weights = Vec::with_capacity(dims.len() - 1);
        let mut biases = Vec::with_capacity(dims.len() - 1);
        for l in 0..dims.len() - 1 {
            let bound = (1.0 / dims[l] as f64).sqrt();
            weights.push(
                (0..dims[l + 1] * dims[l])
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect(),
            );
            biases.push(
                (0..dims[l + 1])
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect(),
            );
        }
        Self {
            dims: dims.to_vec(),
            weights,
            biases,
            final_activation,
        }
    }

    /// Builds an mlp from explicit tensors (used by tests and checkpoints).
    pub fn from_tensors(
        dims: &[usize],
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        final_activation: Activation,
    ) -> Result<Self> {
        if weights.len() != dims.len() - 1 || biases.len() != dims.len() - 1 {
            return Err(Error::Shape("wrong layer count".into()));
        }
        for l in 0..weights.len() {
            if weights[l].len() != dims[l + 1] * dims[l] || biases[l].len() != dims[l + 1] {
                return Err(Error::Shape(format!("layer {l} tensor size mismatch")));
            }
        }
        Ok(Self {
            dims: dims.to_vec(),
            weights,
            biases,
            final_activation,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn final_activation(&self) -> Activation {
        self.final_activation
    }

    fn layer_forward(&self, l: usize, x: &[f64]) -> Vec<f64> {
        let n_in = self.dims[l];
        let mut y = self.biases[l].clone();
        let w = &self.weights[l];
        for (i, y_i) in y.iter_mut().enumerate() {
            let row = &w[i * n_in..(i + 1) * n_in];
            let mut acc = 0.0;
            for (w_ij, x_j) in row.iter().zip(x) {
                acc += w_ij * x_j;
            }
            *y_i += acc;
        }
        let last = l == self.num_layers() - 1;
        for y_i in y.iter_mut() {
            *y_i = match (last, self.final_activation) {
                (false, _) => y_i.max(0.0),
                (true, Activation::Identity) => *y_i,
                (true, Activation::Tanh) => y_i.tanh(),
            };
        }
        y
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.input_dim());
        let mut act = x.to_vec();
        for l in 0..self.num_layers() {
            act = self.layer_forward(l, &act);
        }
        act
    }

    pub fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, MlpCache) {
        let mut acts = Vec::with_capacity(self.num_layers() + 1);
        acts.push(x.to_vec());
        for l in 0..self.num_layers() {
            let next = self.layer_forward(l, acts.last().unwrap());
            acts.push(next);
        }
        (acts.last().unwrap().clone(), MlpCache { acts })
    }

    /// Reverse pass: accumulates dL/dW and dL/db into `grads` (alternating
    /// weight, bias per layer) and returns dL/dx.
    pub fn backward(&self, cache: &MlpCache, d_out: &[f64], grads: &mut [Vec<f64>]) -> Vec<f64> {
        let layers = self.num_layers();
        debug_assert_eq!(grads.len(), 2 * layers);
        // Gradient wrt the final layer's pre-activation.
        let y = &cache.acts[layers];
        let mut delta: Vec<f64> = match self.final_activation {
            Activation::Identity => d_out.to_vec(),
            Activation::Tanh => d_out
                .iter()
                .zip(y)
                .map(|(g, y)| g * (1.0 - y * y))
                .collect(),
        };
        for l in (0..layers).rev() {
            let n_in = self.dims[l];
            let x = &cache.acts[l];
            let (dw, db) = {
                let (a, b) = grads.split_at_mut(2 * l + 1);
                (&mut a[2 * l], &mut b[0])
            };
            for (i, d_i) in delta.iter().enumerate() {
                db[i] += d_i;
                let row = &mut dw[i * n_in..(i + 1) * n_in];
                for (dw_ij, x_j) in row.iter_mut().zip(x) {
                    *dw_ij += d_i * x_j;
                }
            }
            let w = &self.weights[l];
            let mut dx = vec![0.0; n_in];
            for (i, d_i) in delta.iter().enumerate() {
                let row = &w[i * n_in..(i + 1) * n_in];
                for (dx_j, w_ij) in dx.iter_mut().zip(row) {
                    *dx_j += d_i * w_ij;
                }
            }
            if l > 0 {
                // Gate through the previous hidden ReLU.
                let prev = &cache.acts[l];
                delta = dx
                    .iter()
                    .zip(prev)
                    .map(|(g, y)| if *y > 0.0 { *g } else { 0.0 })
                    .collect();
            } else {
                delta = dx;
            }
        }
        delta
    }

    pub(crate) fn collect_params(&self, out: &mut Vec<Vec<f64>>) {
        for l in 0..self.num_layers() {
            out.push(self.weights[l].clone());
            out.push(self.biases[l].clone());
        }
    }

    pub(crate) fn assign_params(&mut self, tensors: &[Vec<f64>]) -> Result<()> {
        if tensors.len() != 2 * self.num_layers() {
            return Err(Error::Shape("wrong tensor count for mlp".into()));
        }
        for l in 0..self.num_layers() {
            if tensors[2 * l].len() != self.weights[l].len()
                || tensors[2 * l + 1].len() != self.biases[l].len()
            {
                return Err(Error::Shape(format!("layer {l} tensor size mismatch")));
            }
            self.weights[l].copy_from_slice(&tensors[2 * l]);
            self.biases[l].copy_from_slice(&tensors[2 * l + 1]);
        }
        Ok(())
    }

    pub(crate) fn num_tensors(&self) -> usize {
        2 * self.num_layers()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn finite_diff_check(dims: &[usize], act: Activation, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mlp = Mlp::new(dims, act, &mut rng);
        let x: Vec<f64> = (0..dims[0]).map(|i| 0.3 * i as f64 - 0.4).collect();
        // Scalar objective: sum of outputs squared.
        let (y, cache) = mlp.forward_cached(&x);
        let d_out: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        let mut grads: Vec<Vec<f64>> = Vec::new();
        mlp.collect_params(&mut grads);
        for g in grads.iter_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let dx = mlp.backward(&cache, &d_out, &mut grads);

        let eps = 1e-6;
        let objective = |m: &Mlp, x: &[f64]| -> f64 { m.forward(x).iter().map(|v| v * v).sum() };
        for j in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += eps;
            xm[j] -= eps;
            let fd = (objective(&mlp, &xp) - objective(&mlp, &xm)) / (2.0 * eps);
            assert!(
                (fd - dx[j]).abs() <= 1e-6 * (1.0 + fd.abs()),
                "input grad {j}"
            );
        }
        let mut tensors: Vec<Vec<f64>> = Vec::new();
        mlp.collect_params(&mut tensors);
        for (ti, tensor) in tensors.iter().enumerate() {
            for pi in (0..tensor.len()).step_by(3) {
                let mut tp = tensors.clone();
                let mut tm = tensors.clone();
                tp[ti][pi] += eps;
                tm[ti][pi] -= eps;
                let mut mp = mlp.clone();
                let mut mm = mlp.clone();
                mp.assign_params(&tp).unwrap();
                mm.assign_params(&tm).unwrap();
                let fd = (objective(&mp, &x) - objective(&mm, &x)) / (2.0 * eps);
                assert!(
                    (fd - grads[ti][pi]).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "tensor {ti} param {pi}"
                );
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        finite_diff_check(&[3, 5, 4], Activation::Tanh, 1);
        finite_diff_check(&[2, 6, 6, 3], Activation::Identity, 2);
        finite_diff_check(&[4, 2], Activation::Identity, 3);
    }

    #[test]
    fn relu_hidden_and_final_activation() {
        let mlp = Mlp::from_tensors(
            &[1, 2, 1],
            vec![vec![1.0, -1.0], vec![1.0, 1.0]],
            vec![vec![0.0, 0.0], vec![0.0]],
            Activation::Tanh,
        )
        .unwrap();
        // x = 2: hidden = relu([2, -2]) = [2, 0]; out = tanh(2).
        let y = mlp.forward(&[2.0]);
        assert!((y[0] - 2.0_f64.tanh()).abs() <= 1e-15);
    }
}
