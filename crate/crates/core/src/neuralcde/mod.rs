//! The trainable CDE model: an initial network mapping the first knot to the
//! hidden state, a vector-field network whose output matrix multiplies
//! dX/ds, and a linear readout. Gradients are reverse-mode through the
//! unrolled fixed-step solver (discretise-then-optimise).

mod adam;
mod mlp;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};

pub use mlp::{Activation, Mlp, MlpCache};
pub use train::{
    task_metric, train, EpochStats, PlateauSchedule, ScheduleAction, TrainConfig, TrainLoopState,
    TrainResult,
};

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::ControlPath;
use crate::error::{Error, Result};
use crate::solver::{self, integrate, Method, SolveConfig};

/// Flat view of every model parameter tensor, in a fixed traversal order
/// (zeta, field, readout; weight then bias per layer).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub tensors: Vec<Vec<f64>>,
}

impl ParamSet {
    pub fn zeros_like(other: &ParamSet) -> Self {
        Self {
            tensors: other.tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get_flat(&self, mut index: usize) -> f64 {
        for t in &self.tensors {
            if index < t.len() {
                return t[index];
            }
            index -= t.len();
        }
        panic!("flat index out of range");
    }

    pub fn set_flat(&mut self, mut index: usize, value: f64) {
        for t in self.tensors.iter_mut() {
            if index < t.len() {
                t[index] = value;
                return;
            }
            index -= t.len();
        }
        panic!("flat index out of range");
    }

    pub fn add_scaled(&mut self, other: &ParamSet, factor: f64) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += factor * y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors.iter_mut() {
            for x in t.iter_mut() {
                *x *= factor;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.iter())
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

/// Architecture knobs, mirroring the usual hidden/hidden-hidden/num-layers
/// vocabulary for CDE models.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Hidden state size w.
    pub hidden_dim: usize,
    /// Width of the vector-field network's hidden layers.
    pub hidden_hidden_dim: usize,
    /// Number of hidden layers in the vector-field network.
    pub num_layers: usize,
    /// Readout dimension (1 for binary classification).
    pub output_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 8,
            hidden_hidden_dim: 16,
            num_layers: 1,
            output_dim: 1,
        }
    }
}

/// ζ (initial network), f (vector field), and the linear readout.
#[derive(Debug, Clone)]
pub struct CdeModel {
    pub zeta: Mlp,
    pub field_net: Mlp,
    pub readout: Mlp,
    hidden_dim: usize,
    control_dim: usize,
}

impl CdeModel {
    /// Fresh seeded model: ζ is affine v → w, the field is an MLP
    /// w → (hidden_hidden × num_layers) → w·v with ReLU hidden layers and a
    /// tanh output (keeping the integrand bounded), the readout affine.
    pub fn new(config: &ModelConfig, control_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = config.hidden_dim;
        let zeta = Mlp::new(&[control_dim, w], Activation::Identity, &mut rng);
        let mut field_dims = vec![w];
        field_dims.resize(1 + config.num_layers, config.hidden_hidden_dim);
        field_dims.push(w * control_dim);
        let field_net = Mlp::new(&field_dims, Activation::Tanh, &mut rng);
        let readout = Mlp::new(&[w, config.output_dim], Activation::Identity, &mut rng);
        Self {
            zeta,
            field_net,
            readout,
            hidden_dim: w,
            control_dim,
        }
    }

    /// Assembles a model from explicit networks, validating the shape
    /// contract field_out = hidden·control.
    pub fn from_parts(zeta: Mlp, field_net: Mlp, readout: Mlp) -> Result<Self> {
        let w = zeta.output_dim();
        let v = zeta.input_dim();
        if field_net.input_dim() != w || field_net.output_dim() != w * v {
            return Err(Error::Shape(format!(
                "field net must map {w} -> {}, got {} -> {}",
                w * v,
                field_net.input_dim(),
                field_net.output_dim()
            )));
        }
        if readout.input_dim() != w {
            return Err(Error::Shape("readout input must be the hidden size".into()));
        }
        Ok(Self {
            zeta,
            field_net,
            readout,
            hidden_dim: w,
            control_dim: v,
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn output_dim(&self) -> usize {
        self.readout.output_dim()
    }

    pub fn params(&self) -> ParamSet {
        let mut tensors = Vec::new();
        self.zeta.collect_params(&mut tensors);
        self.field_net.collect_params(&mut tensors);
        self.readout.collect_params(&mut tensors);
        ParamSet { tensors }
    }

    pub fn set_params(&mut self, params: &ParamSet) -> Result<()> {
        let nz = self.zeta.num_tensors();
        let nf = self.field_net.num_tensors();
        let nr = self.readout.num_tensors();
        if params.tensors.len() != nz + nf + nr {
            return Err(Error::Shape("wrong tensor count for model".into()));
        }
        self.zeta.assign_params(&params.tensors[..nz])?;
        self.field_net.assign_params(&params.tensors[nz..nz + nf])?;
        self.readout.assign_params(&params.tensors[nz + nf..])?;
        Ok(())
    }

    /// Tensor index ranges of the three sub-networks inside a ParamSet.
    fn tensor_ranges(&self) -> [std::ops::Range<usize>; 3] {
        let nz = self.zeta.num_tensors();
        let nf = self.field_net.num_tensors();
        let nr = self.readout.num_tensors();
        [0..nz, nz..nz + nf, nz + nf..nz + nf + nr]
    }
}

/// The integrand of the CDE: (s, z) ↦ f(z)·dX/ds(s).
///
/// Each call performs one field-net forward pass and one `eval_deriv`.
pub fn cde_field<'a>(
    model: &'a CdeModel,
    path: &'a ControlPath,
) -> Result<impl Fn(f64, &[f64]) -> Vec<f64> + 'a> {
    if path.out_dim() != model.control_dim {
        return Err(Error::Shape(format!(
            "path emits {} channels but the model expects {}",
            path.out_dim(),
            model.control_dim
        )));
    }
    let (w, v) = (model.hidden_dim, model.control_dim);
    Ok(move |s: f64, z: &[f64]| -> Vec<f64> {
        let y = model.field_net.forward(z);
        let dx = path
            .eval_deriv(s)
            .expect("solver keeps evaluations inside the path domain");
        let mut out = vec![0.0; w];
        for (r, out_r) in out.iter_mut().enumerate() {
            let row = &y[r * v..(r + 1) * v];
            let mut acc = 0.0;
            for (y_rc, dx_c) in row.iter().zip(&dx) {
                acc += y_rc * dx_c;
            }
            *out_r = acc;
        }
        out
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    Terminal,
    Sequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    BinaryClassification,
    Regression,
}

#[derive(Debug, Clone)]
pub struct ForwardResult {
    /// readout(z) at the terminal parameter, or at every knot parameter.
    pub outputs: Vec<Vec<f64>>,
    pub states: Vec<Vec<f64>>,
    pub query_points: Vec<f64>,
    pub nfe: usize,
}

/// Runs the model forward: z(s_0) = ζ(X(s_0)), integrate to s_m, read out.
/// The path's own discontinuity list is handed to the solver.
pub fn forward(
    model: &CdeModel,
    path: &ControlPath,
    config: &SolveConfig,
    mode: OutputMode,
) -> Result<ForwardResult> {
    let (s0, sm) = path.domain();
    let x0 = path.eval(s0)?;
    let z0 = model.zeta.forward(&x0);
    let queries: Vec<f64> = match mode {
        OutputMode::Terminal => vec![sm],
        OutputMode::Sequence => path.breakpoints().to_vec(),
    };
    let mut cfg = config.clone();
    cfg.discontinuities = path.discontinuities().to_vec();
    let field = cde_field(model, path)?;
    let solved = integrate(field, &z0, (s0, sm), &queries, &cfg)?;
    let outputs = solved
        .states
        .iter()
        .map(|z| model.readout.forward(z))
        .collect();
    Ok(ForwardResult {
        outputs,
        states: solved.states,
        query_points: solved.query_points,
        nfe: solved.nfe,
    })
}

/// Mean binary cross-entropy with logits, or mean squared error, over every
/// (query, output) element.
pub fn loss(outputs: &[Vec<f64>], targets: &[Vec<f64>], task: Task) -> Result<f64> {
    Ok(loss_backward(outputs, targets, task)?.0)
}

/// Loss value plus its gradient with respect to the outputs.
pub fn loss_backward(
    outputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    task: Task,
) -> Result<(f64, Vec<Vec<f64>>)> {
    if outputs.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} outputs vs {} targets",
            outputs.len(),
            targets.len()
        )));
    }
    let count: usize = outputs.iter().map(Vec::len).sum();
    if count == 0 {
        return Err(Error::Shape("no outputs".into()));
    }
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(outputs.len());
    for (out, tgt) in outputs.iter().zip(targets) {
        if out.len() != tgt.len() {
            return Err(Error::Shape(format!(
                "output width {} vs target width {}",
                out.len(),
                tgt.len()
            )));
        }
        let mut g = Vec::with_capacity(out.len());
        for (&x, &y) in out.iter().zip(tgt) {
            match task {
                Task::BinaryClassification => {
                    // Stable BCE-with-logits.
                    total += x.max(0.0) - x * y + (-x.abs()).exp().ln_1p();
                    let sigma = 1.0 / (1.0 + (-x).exp());
                    g.push((sigma - y) / count as f64);
                }
                Task::Regression => {
                    total += (x - y) * (x - y);
                    g.push(2.0 * (x - y) / count as f64);
                }
            }
        }
        grads.push(g);
    }
    Ok((total / count as f64, grads))
}

#[derive(Debug, Clone)]
pub struct BackwardResult {
    pub loss: f64,
    pub grads: ParamSet,
    pub outputs: Vec<Vec<f64>>,
    /// Vector-field evaluations spent on the forward sweep.
    pub nfe: usize,
}

/// Exact reverse-mode gradients of the discretised loss through an unrolled
/// euler or rk4 solve. The forward sweep reproduces `forward` bit for bit
/// (same step schedule and stage arithmetic).
pub fn backward_fixed_step(
    model: &CdeModel,
    path: &ControlPath,
    config: &SolveConfig,
    targets: &[Vec<f64>],
    mode: OutputMode,
    task: Task,
) -> Result<BackwardResult> {
    if !config.method.is_fixed_step() {
        return Err(Error::UnsupportedForTraining);
    }
    if path.out_dim() != model.control_dim {
        return Err(Error::Shape("path/model channel mismatch".into()));
    }
    let (s0, sm) = path.domain();
    let endpoints =
        solver::fixed_step_schedule((s0, sm), path.discontinuities(), config.fixed_step);
    let steps = endpoints.len() - 1;

    let x0 = path.eval(s0)?;
    let (z0, zeta_cache) = model.zeta.forward_cached(&x0);

    // Forward sweep, storing the state at every step endpoint.
    let mut nfe = 0usize;
    let mut states: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    states.push(z0);
    {
        let field = cde_field(model, path)?;
        let mut counted = |s: f64, z: &[f64]| {
            nfe += 1;
            field(s, z)
        };
        for k in 0..steps {
            let s = endpoints[k];
            let h = endpoints[k + 1] - s;
            let z = states.last().unwrap();
            let next = match config.method {
                Method::Euler => solver::euler_step(&mut counted, s, z, h),
                Method::Rk4 => solver::rk4_step(&mut counted, s, z, h),
                Method::Dopri5 => unreachable!(),
            };
            if !next.iter().all(|x| x.is_finite()) {
                return Err(Error::NumericalBlowup);
            }
            states.push(next);
        }
    }

    // Query states exactly as the solver's dense output would produce them.
    let queries: Vec<f64> = match mode {
        OutputMode::Terminal => vec![sm],
        OutputMode::Sequence => path.breakpoints().to_vec(),
    };
    struct QueryRef {
        step: usize,
        theta: f64,
    }
    let mut refs = Vec::with_capacity(queries.len());
    let mut outputs = Vec::with_capacity(queries.len());
    let mut readout_caches = Vec::with_capacity(queries.len());
    for &q in &queries {
        let k = endpoints
            .partition_point(|&e| e <= q)
            .saturating_sub(1)
            .min(steps - 1);
        let (step, theta, state) = if endpoints[k] == q {
            (k, 0.0, states[k].clone())
        } else if endpoints[k + 1] == q {
            (k + 1, 0.0, states[k + 1].clone())
        } else {
            let h = endpoints[k + 1] - endpoints[k];
            let theta = (q - endpoints[k]) / h;
            let state: Vec<f64> = states[k]
                .iter()
                .zip(&states[k + 1])
                .map(|(a, b)| a + theta * (b - a))
                .collect();
            (k, theta, state)
        };
        let (out, cache) = model.readout.forward_cached(&state);
        refs.push(QueryRef { step, theta });
        outputs.push(out);
        readout_caches.push(cache);
    }

    let (loss_value, d_outputs) = loss_backward(&outputs, targets, task)?;

    let mut grads = ParamSet::zeros_like(&model.params());
    let [zr, fr, rr] = model.tensor_ranges();

    // Readout backward, scattering adjoint seeds onto step endpoints.
    let dim = model.hidden_dim;
    let mut adjoint_at = vec![vec![0.0; dim]; steps + 1];
    for (i, r) in refs.iter().enumerate() {
        let d_state = model.readout.backward(
            &readout_caches[i],
            &d_outputs[i],
            &mut grads.tensors[rr.clone()],
        );
        if r.theta == 0.0 {
            for (a, g) in adjoint_at[r.step].iter_mut().zip(&d_state) {
                *a += g;
            }
        } else {
            for (a, g) in adjoint_at[r.step].iter_mut().zip(&d_state) {
                *a += (1.0 - r.theta) * g;
            }
            for (a, g) in adjoint_at[r.step + 1].iter_mut().zip(&d_state) {
                *a += r.theta * g;
            }
        }
    }

    // Reverse sweep through the solver steps.
    let mut lambda = vec![0.0; dim];
    for k in (0..steps).rev() {
        for (l, a) in lambda.iter_mut().zip(&adjoint_at[k + 1]) {
            *l += a;
        }
        let s = endpoints[k];
        let h = endpoints[k + 1] - s;
        lambda = match config.method {
            Method::Euler => euler_step_vjp(
                model,
                path,
                s,
                &states[k],
                h,
                &lambda,
                &mut grads.tensors[fr.clone()],
            ),
            Method::Rk4 => rk4_step_vjp(
                model,
                path,
                s,
                &states[k],
                h,
                &lambda,
                &mut grads.tensors[fr.clone()],
            ),
            Method::Dopri5 => unreachable!(),
        };
    }
    for (l, a) in lambda.iter_mut().zip(&adjoint_at[0]) {
        *l += a;
    }
    model
        .zeta
        .backward(&zeta_cache, &lambda, &mut grads.tensors[zr]);

    Ok(BackwardResult {
        loss: loss_value,
        grads,
        outputs,
        nfe,
    })
}

/// Forward pass of the integrand with everything the VJP needs.
fn field_forward_cached(
    model: &CdeModel,
    path: &ControlPath,
    s: f64,
    z: &[f64],
) -> (Vec<f64>, MlpCache, Vec<f64>) {
    let (w, v) = (model.hidden_dim, model.control_dim);
    let (y, cache) = model.field_net.forward_cached(z);
    let dx = path
        .eval_deriv(s)
        .expect("solver keeps evaluations inside the path domain");
    let mut out = vec![0.0; w];
    for (r, out_r) in out.iter_mut().enumerate() {
        let row = &y[r * v..(r + 1) * v];
        let mut acc = 0.0;
        for (y_rc, dx_c) in row.iter().zip(&dx) {
            acc += y_rc * dx_c;
        }
        *out_r = acc;
    }
    (out, cache, dx)
}

/// VJP of F(s, z) = f(z)·dX/ds: maps a cotangent on F to one on z,
/// accumulating field-net parameter gradients.
fn field_vjp(
    model: &CdeModel,
    cache: &MlpCache,
    dx: &[f64],
    cot_f: &[f64],
    grads: &mut [Vec<f64>],
) -> Vec<f64> {
    let v = model.control_dim;
    let mut cot_y = vec![0.0; model.hidden_dim * v];
    for (r, g_r) in cot_f.iter().enumerate() {
        let row = &mut cot_y[r * v..(r + 1) * v];
        for (c_rc, dx_c) in row.iter_mut().zip(dx) {
            *c_rc = g_r * dx_c;
        }
    }
    model.field_net.backward(cache, &cot_y, grads)
}

fn euler_step_vjp(
    model: &CdeModel,
    path: &ControlPath,
    s: f64,
    z: &[f64],
    h: f64,
    lambda_next: &[f64],
    grads: &mut [Vec<f64>],
) -> Vec<f64> {
    let (_, cache, dx) = field_forward_cached(model, path, s, z);
    let g: Vec<f64> = lambda_next.iter().map(|l| h * l).collect();
    let dz = field_vjp(model, &cache, &dx, &g, grads);
    lambda_next.iter().zip(&dz).map(|(l, d)| l + d).collect()
}

fn rk4_step_vjp(
    model: &CdeModel,
    path: &ControlPath,
    s: f64,
    z: &[f64],
    h: f64,
    lambda_next: &[f64],
    grads: &mut [Vec<f64>],
) -> Vec<f64> {
    let axpy = |z: &[f64], a: f64, k: &[f64]| -> Vec<f64> {
        z.iter().zip(k).map(|(zi, ki)| zi + a * ki).collect()
    };
    let (k1, c1, dx1) = field_forward_cached(model, path, s, z);
    let z2 = axpy(z, 0.5 * h, &k1);
    let (k2, c2, dx2) = field_forward_cached(model, path, s + 0.5 * h, &z2);
    let z3 = axpy(z, 0.5 * h, &k2);
    let (k3, c3, dx3) = field_forward_cached(model, path, s + 0.5 * h, &z3);
    let z4 = axpy(z, h, &k3);
    let (_k4, c4, dx4) = field_forward_cached(model, path, s + h, &z4);

    let lam = lambda_next;
    let g4: Vec<f64> = lam.iter().map(|l| h / 6.0 * l).collect();
    let d4 = field_vjp(model, &c4, &dx4, &g4, grads);
    let g3: Vec<f64> = lam
        .iter()
        .zip(&d4)
        .map(|(l, d)| h / 3.0 * l + h * d)
        .collect();
    let d3 = field_vjp(model, &c3, &dx3, &g3, grads);
    let g2: Vec<f64> = lam
        .iter()
        .zip(&d3)
        .map(|(l, d)| h / 3.0 * l + 0.5 * h * d)
        .collect();
    let d2 = field_vjp(model, &c2, &dx2, &g2, grads);
    let g1: Vec<f64> = lam
        .iter()
        .zip(&d2)
        .map(|(l, d)| h / 6.0 * l + 0.5 * h * d)
        .collect();
    let d1 = field_vjp(model, &c1, &dx1, &g1, grads);
    (0..lam.len())
        .map(|i| lam[i] + d1[i] + d2[i] + d3[i] + d4[i])
        .collect()
}

/// Runs (a) the discrete recurrence z_{i+1} = h(z_i, x_i) and (b) unit-step
/// Euler on dz/ds = h(z, X(s)) - z with X piecewise-constant at the knots,
/// returning the largest deviation over the knots. The two are the same
/// computation up to rounding.
pub fn rnn_euler_equivalence<H>(
    recurrence: H,
    series: &crate::series::AugmentedSeries,
    z0: &[f64],
) -> Result<f64>
where
    H: Fn(&[f64], &[f64]) -> Vec<f64>,
{
    let n = series.num_knots() - 1;
    let knots: Vec<Vec<f64>> = (0..=n).map(|i| series.knot_vector(i)).collect();

    let mut discrete = Vec::with_capacity(n + 1);
    discrete.push(z0.to_vec());
    for knot in knots.iter().take(n) {
        let prev = discrete.last().unwrap();
        discrete.push(recurrence(prev, knot));
    }

    let discs: Vec<f64> = (1..n).map(|i| i as f64).collect();
    let queries: Vec<f64> = (0..=n).map(|i| i as f64).collect();
    let config = SolveConfig::fixed(Method::Euler, 1.0).with_discontinuities(&discs);
    let field = |s: f64, z: &[f64]| -> Vec<f64> {
        let i = (s.floor() as usize).min(n - 1);
        let target = recurrence(z, &knots[i]);
        target.iter().zip(z).map(|(t, zi)| t - zi).collect()
    };
    let solved = integrate(field, z0, (0.0, n as f64), &queries, &config)?;

    let mut dev = 0.0_f64;
    for (a, b) in discrete.iter().zip(&solved.states) {
        for (x, y) in a.iter().zip(b) {
            dev = dev.max((x - y).abs());
        }
    }
    Ok(dev)
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// JSON checkpoint: named row-major parameter tensors plus the architecture.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub hidden_dim: usize,
    pub control_dim: usize,
    pub output_dim: usize,
    pub field_dims: Vec<usize>,
    pub tensors: BTreeMap<String, Vec<f64>>,
}

impl CdeModel {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut tensors = BTreeMap::new();
        let params = self.params();
        let mut names = Vec::new();
        for (net, mlp) in [
            ("zeta", &self.zeta),
            ("field", &self.field_net),
            ("readout", &self.readout),
        ] {
            for l in 0..mlp.num_layers() {
                names.push(format!("{net}.{l}.weight"));
                names.push(format!("{net}.{l}.bias"));
            }
        }
        for (name, tensor) in names.into_iter().zip(params.tensors) {
            tensors.insert(name, tensor);
        }
        Checkpoint {
            hidden_dim: self.hidden_dim,
            control_dim: self.control_dim,
            output_dim: self.output_dim(),
            field_dims: self.field_net.dims().to_vec(),
            tensors,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let (w, v) = (ckpt.hidden_dim, ckpt.control_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let zeta = Mlp::new(&[v, w], Activation::Identity, &mut rng);
        let field_net = Mlp::new(&ckpt.field_dims, Activation::Tanh, &mut rng);
        let readout = Mlp::new(&[w, ckpt.output_dim], Activation::Identity, &mut rng);
        let mut model = Self::from_parts(zeta, field_net, readout)?;
        let mut tensors = Vec::new();
        let layer_counts = [
            ("zeta", model.zeta.num_layers()),
            ("field", model.field_net.num_layers()),
            ("readout", model.readout.num_layers()),
        ];
        for (net, layers) in layer_counts {
            for l in 0..layers {
                for part in ["weight", "bias"] {
                    let name = format!("{net}.{l}.{part}");
                    tensors.push(
                        ckpt.tensors
                            .get(&name)
                            .ok_or_else(|| Error::Shape(format!("missing tensor {name}")))?
                            .clone(),
                    );
                }
            }
        }
        model.set_params(&ParamSet { tensors })?;
        Ok(model)
    }
}
