//! Fixed-step (Euler, RK4) and adaptive Dormand–Prince 5(4) integrators with
//! exact function-evaluation counting and step alignment to control-path
//! discontinuities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euler,
    Rk4,
    Dopri5,
}

impl Method {
    pub fn is_fixed_step(&self) -> bool {
        matches!(self, Method::Euler | Method::Rk4)
    }
}

/// Solver settings. Tolerances follow the usual adaptive-solver defaults
/// (rtol 1e-3, atol 1e-5); `fixed_step` is the parameter increment for the
/// fixed-step methods; `discontinuities` lists parameters every accepted
/// step must land on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveConfig {
    pub method: Method,
    pub rtol: f64,
    pub atol: f64,
    pub fixed_step: f64,
    #[serde(default)]
    pub discontinuities: Vec<f64>,
    pub max_steps: usize,
    #[serde(default)]
    pub initial_step: Option<f64>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            method: Method::Dopri5,
            rtol: 1e-3,
            atol: 1e-5,
            fixed_step: 0.25,
            discontinuities: Vec::new(),
            max_steps: 1 << 20,
            initial_step: None,
        }
    }
}

impl SolveConfig {
    pub fn fixed(method: Method, fixed_step: f64) -> Self {
        Self {
            method,
            fixed_step,
            ..Self::default()
        }
    }

    pub fn with_discontinuities(mut self, discs: &[f64]) -> Self {
        self.discontinuities = discs.to_vec();
        self
    }

    fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.rtol) || !positive(self.atol) {
            return Err(Error::BadConfig("tolerances must be positive".into()));
        }
        if self.method.is_fixed_step() && !positive(self.fixed_step) {
            return Err(Error::BadConfig("fixed_step must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::BadConfig("max_steps must be positive".into()));
        }
        if let Some(h0) = self.initial_step {
            if !positive(h0) {
                return Err(Error::BadConfig("initial_step must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Solution states at the requested query points plus solver cost counters.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub query_points: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub nfe: usize,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    /// Parameters of every accepted step endpoint, including the span start.
    pub accepted_endpoints: Vec<f64>,
}

/// Integrates dz/ds = field(s, z) over `span`, reporting states at `queries`.
///
/// Fixed-step methods subdivide each inter-discontinuity segment uniformly
/// and interpolate off-grid queries linearly between step endpoints. Dopri5
/// clamps each step to end no later than the next discontinuity or query
/// point and evaluates queries with its fourth-order dense interpolant.
/// Every call to `field` counts toward `nfe`.
pub fn integrate<F>(
    mut field: F,
    z0: &[f64],
    span: (f64, f64),
    queries: &[f64],
    config: &SolveConfig,
) -> Result<SolveResult>
where
    F: FnMut(f64, &[f64]) -> Vec<f64>,
{
    config.validate()?;
    let (s_a, s_b) = span;
    if !s_a.is_finite() || !s_b.is_finite() || s_b <= s_a {
        return Err(Error::BadConfig("span must be increasing".into()));
    }
    for w in queries.windows(2) {
        if w[1] < w[0] {
            return Err(Error::BadConfig("queries must be sorted".into()));
        }
    }
    if let Some(&q) = queries.first() {
        if q < s_a {
            return Err(Error::OutOfDomain {
                s: q,
                lo: s_a,
                hi: s_b,
            });
        }
    }
    if let Some(&q) = queries.last() {
        if q > s_b {
            return Err(Error::OutOfDomain {
                s: q,
                lo: s_a,
                hi: s_b,
            });
        }
    }
    let mut discs: Vec<f64> = config
        .discontinuities
        .iter()
        .copied()
        .filter(|&d| d > s_a && d < s_b)
        .collect();
    discs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    discs.dedup();

    match config.method {
        Method::Euler | Method::Rk4 => {
            fixed_step_solve(&mut field, z0, span, queries, &discs, config)
        }
        Method::Dopri5 => dopri5_solve(&mut field, z0, span, queries, &discs, config),
    }
}

fn all_finite(z: &[f64]) -> bool {
    z.iter().all(|x| x.is_finite())
}

// ---------------------------------------------------------------------------
// Fixed-step methods
// ---------------------------------------------------------------------------

/// Step endpoints for a fixed-step solve: every inter-discontinuity segment
/// is subdivided uniformly into ceil(len / fixed_step) steps. Shared between
/// `integrate` and reverse-mode training so the two agree bit for bit.
pub(crate) fn fixed_step_schedule(span: (f64, f64), discs: &[f64], fixed_step: f64) -> Vec<f64> {
    let mut stops = Vec::with_capacity(discs.len() + 2);
    stops.push(span.0);
    stops.extend(discs.iter().copied().filter(|&d| d > span.0 && d < span.1));
    stops.push(span.1);
    let mut points = vec![span.0];
    for w in stops.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = b - a;
        let nsteps = ((len / fixed_step) - 1e-9).ceil().max(1.0) as usize;
        let h = len / nsteps as f64;
        for k in 1..nsteps {
            points.push(a + k as f64 * h);
        }
        points.push(b);
    }
    points
}

pub(crate) fn euler_step(
    f: &mut dyn FnMut(f64, &[f64]) -> Vec<f64>,
    s: f64,
    z: &[f64],
    h: f64,
) -> Vec<f64> {
    let k = f(s, z);
    z.iter().zip(&k).map(|(zi, ki)| zi + h * ki).collect()
}

pub(crate) fn rk4_step(
    f: &mut dyn FnMut(f64, &[f64]) -> Vec<f64>,
    s: f64,
    z: &[f64],
    h: f64,
) -> Vec<f64> {
    let k1 = f(s, z);
    let z2: Vec<f64> = z
        .iter()
        .zip(&k1)
        .map(|(zi, ki)| zi + 0.5 * h * ki)
        .collect();
    let k2 = f(s + 0.5 * h, &z2);
    let z3: Vec<f64> = z
        .iter()
        .zip(&k2)
        .map(|(zi, ki)| zi + 0.5 * h * ki)
        .collect();
    let k3 = f(s + 0.5 * h, &z3);
    let z4: Vec<f64> = z.iter().zip(&k3).map(|(zi, ki)| zi + h * ki).collect();
    let k4 = f(s + h, &z4);
    (0..z.len())
        .map(|i| z[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

fn fixed_step_solve(
    field: &mut dyn FnMut(f64, &[f64]) -> Vec<f64>,
    z0: &[f64],
    span: (f64, f64),
    queries: &[f64],
    discs: &[f64],
    config: &SolveConfig,
) -> Result<SolveResult> {
    let endpoints = fixed_step_schedule(span, discs, config.fixed_step);
    if endpoints.len() - 1 > config.max_steps {
        return Err(Error::MaxStepsExceeded(config.max_steps));
    }
    let mut nfe = 0usize;
    let mut f = |s: f64, z: &[f64]| -> Vec<f64> {
        nfe += 1;
        field(s, z)
    };
    let mut states = Vec::with_capacity(queries.len());
    let mut qi = 0;
    while qi < queries.len() && queries[qi] <= endpoints[0] {
        states.push(z0.to_vec());
        qi += 1;
    }
    let mut z = z0.to_vec();
    for w in endpoints.windows(2) {
        let (s, s_next) = (w[0], w[1]);
        let h = s_next - s;
        let z_next = match config.method {
            Method::Euler => euler_step(&mut f, s, &z, h),
            Method::Rk4 => rk4_step(&mut f, s, &z, h),
            Method::Dopri5 => unreachable!(),
        };
        if !all_finite(&z_next) {
            return Err(Error::NumericalBlowup);
        }
        while qi < queries.len() && queries[qi] <= s_next {
            let q = queries[qi];
            if q == s_next {
                states.push(z_next.clone());
            } else {
                let theta = (q - s) / h;
                states.push(
                    z.iter()
                        .zip(&z_next)
                        .map(|(a, b)| a + theta * (b - a))
                        .collect(),
                );
            }
            qi += 1;
        }
        z = z_next;
    }
    Ok(SolveResult {
        query_points: queries.to_vec(),
        states,
        nfe,
        steps_accepted: endpoints.len() - 1,
        steps_rejected: 0,
        accepted_endpoints: endpoints,
    })
}

// ---------------------------------------------------------------------------
// Dormand–Prince 5(4)
// ---------------------------------------------------------------------------

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];
/// Dense-output weights for the standard fourth-order interpolant.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

const SAFETY: f64 = 0.9;
const FACTOR_MIN: f64 = 0.2;
const FACTOR_MAX: f64 = 10.0;
const PI_ALPHA: f64 = 0.7 / 5.0;
const PI_BETA: f64 = 0.4 / 5.0;

/// Fifth-order candidate, fourth-order candidate, and the stages k1..k7.
pub type EmbeddedStep = (Vec<f64>, Vec<f64>, Vec<Vec<f64>>);

/// One embedded 5(4) candidate step from a freshly evaluated first stage;
/// the seventh stage is the FSAL slope.
pub fn dopri5_step<F>(field: &mut F, s: f64, z: &[f64], h: f64) -> Result<EmbeddedStep>
where
    F: FnMut(f64, &[f64]) -> Vec<f64>,
{
    let k1 = field(s, z);
    dopri5_step_with_k1(field, s, z, h, k1)
}

fn dopri5_step_with_k1(
    field: &mut dyn FnMut(f64, &[f64]) -> Vec<f64>,
    s: f64,
    z: &[f64],
    h: f64,
    k1: Vec<f64>,
) -> Result<EmbeddedStep> {
    let dim = z.len();
    let mut stages: Vec<Vec<f64>> = Vec::with_capacity(7);
    stages.push(k1);
    let mut z5 = Vec::new();
    for i in 1..7 {
        let mut zi = z.to_vec();
        for (j, stage) in stages.iter().enumerate() {
            let a = A[i][j];
            if a != 0.0 {
                for (zi_c, k_c) in zi.iter_mut().zip(stage) {
                    *zi_c += h * a * k_c;
                }
            }
        }
        if i == 6 {
            // The stage-7 input is the fifth-order solution itself (FSAL).
            z5 = zi.clone();
        }
        if !all_finite(&zi) {
            return Err(Error::NumericalBlowup);
        }
        stages.push(field(s + C[i] * h, &zi));
    }
    let mut z4 = z.to_vec();
    for (j, stage) in stages.iter().enumerate() {
        if B4[j] != 0.0 {
            for c in 0..dim {
                z4[c] += h * B4[j] * stage[c];
            }
        }
    }
    if !all_finite(&z5) || !all_finite(&z4) {
        return Err(Error::NumericalBlowup);
    }
    Ok((z5, z4, stages))
}

/// Weighted RMS error of z5 - z4 with weights atol + rtol·max(|z|, |z5|).
pub fn error_norm(z: &[f64], z5: &[f64], z4: &[f64], atol: f64, rtol: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..z.len() {
        let w = atol + rtol * z[i].abs().max(z5[i].abs());
        let e = (z5[i] - z4[i]) / w;
        acc += e * e;
    }
    (acc / z.len() as f64).sqrt()
}

/// Automatic initial step from the field magnitude at the span start
/// (the usual Hairer–Nørsett–Wanner heuristic; costs one field evaluation).
fn initial_step(
    field: &mut dyn FnMut(f64, &[f64]) -> Vec<f64>,
    s_a: f64,
    z0: &[f64],
    f0: &[f64],
    span_len: f64,
    atol: f64,
    rtol: f64,
) -> f64 {
    let scale: Vec<f64> = z0.iter().map(|&z| atol + rtol * z.abs()).collect();
    let rms = |v: &[f64]| -> f64 {
        let s: f64 = v.iter().zip(&scale).map(|(x, w)| (x / w) * (x / w)).sum();
        (s / v.len() as f64).sqrt()
    };
    let d0 = rms(z0);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(0.5 * span_len);
    let z1: Vec<f64> = z0.iter().zip(f0).map(|(z, f)| z + h0 * f).collect();
    let f1 = field(s_a + h0, &z1);
    let df: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&df) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span_len)
}

fn dopri5_solve(
    field: &mut dyn FnMut(f64, &[f64]) -> Vec<f64>,
    z0: &[f64],
    span: (f64, f64),
    queries: &[f64],
    discs: &[f64],
    config: &SolveConfig,
) -> Result<SolveResult> {
    let (s_a, s_b) = span;
    let span_len = s_b - s_a;
    let mut nfe = 0usize;
    let mut f = |s: f64, z: &[f64]| -> Vec<f64> {
        nfe += 1;
        field(s, z)
    };

    // Hard step endpoints: discontinuities, query points, and the span end.
    let mut stops: Vec<f64> = discs.to_vec();
    stops.extend(queries.iter().copied().filter(|&q| q > s_a && q < s_b));
    stops.push(s_b);
    stops.sort_by(|a, b| a.partial_cmp(b).unwrap());
    stops.dedup();

    let mut states = Vec::with_capacity(queries.len());
    let mut qi = 0;
    while qi < queries.len() && queries[qi] <= s_a {
        states.push(z0.to_vec());
        qi += 1;
    }

    let mut s = s_a;
    let mut z = z0.to_vec();
    let mut k1 = f(s, &z);
    if !all_finite(&k1) {
        return Err(Error::NumericalBlowup);
    }
    let mut h = match config.initial_step {
        Some(h0) => h0.min(span_len),
        None => initial_step(&mut f, s_a, &z, &k1, span_len, config.atol, config.rtol),
    };
    let mut err_prev = 1e-4_f64;
    let mut steps_accepted = 0usize;
    let mut steps_rejected = 0usize;
    let mut accepted_endpoints = vec![s_a];
    let mut stop_cursor = 0usize;

    while s < s_b {
        if steps_accepted + steps_rejected >= config.max_steps {
            return Err(Error::MaxStepsExceeded(config.max_steps));
        }
        if h < 1e-12 * span_len {
            return Err(Error::StepUnderflow(s));
        }
        while stops[stop_cursor] <= s {
            stop_cursor += 1;
        }
        let target = stops[stop_cursor];
        let clamped = h >= target - s;
        let h_eff = if clamped { target - s } else { h };

        let (z5, z4, stages) = dopri5_step_with_k1(&mut f, s, &z, h_eff, k1.clone())?;
        let err = error_norm(&z, &z5, &z4, config.atol, config.rtol);
        if err <= 1.0 {
            let s_new = if clamped { target } else { s + h_eff };
            if qi < queries.len() && queries[qi] <= s_new {
                let cont = dense_coefficients(&z, &z5, &stages, h_eff);
                while qi < queries.len() && queries[qi] <= s_new {
                    let theta = (queries[qi] - s) / h_eff;
                    states.push(dense_eval(&cont, theta));
                    qi += 1;
                }
            }
            let factor = (SAFETY * err.powf(-PI_ALPHA) * err_prev.powf(PI_BETA))
                .clamp(FACTOR_MIN, FACTOR_MAX);
            h = h_eff * factor;
            err_prev = err.max(1e-10);
            k1 = stages.into_iter().nth(6).unwrap();
            z = z5;
            s = s_new;
            steps_accepted += 1;
            accepted_endpoints.push(s);
        } else {
            steps_rejected += 1;
            h = h_eff * (SAFETY * err.powf(-0.2)).clamp(FACTOR_MIN, 1.0);
        }
    }

    Ok(SolveResult {
        query_points: queries.to_vec(),
        states,
        nfe,
        steps_accepted,
        steps_rejected,
        accepted_endpoints,
    })
}

/// Coefficients of the fourth-order dense interpolant over one step.
fn dense_coefficients(z: &[f64], z5: &[f64], stages: &[Vec<f64>], h: f64) -> [Vec<f64>; 5] {
    let dim = z.len();
    let delta: Vec<f64> = z5.iter().zip(z).map(|(a, b)| a - b).collect();
    let cont2: Vec<f64> = (0..dim).map(|c| h * stages[0][c] - delta[c]).collect();
    let cont3: Vec<f64> = (0..dim)
        .map(|c| delta[c] - h * stages[6][c] - cont2[c])
        .collect();
    let mut cont4 = vec![0.0; dim];
    for (j, stage) in stages.iter().enumerate() {
        if D[j] != 0.0 {
            for c in 0..dim {
                cont4[c] += D[j] * stage[c];
            }
        }
    }
    for v in cont4.iter_mut() {
        *v *= h;
    }
    [z.to_vec(), delta, cont2, cont3, cont4]
}

fn dense_eval(cont: &[Vec<f64>; 5], theta: f64) -> Vec<f64> {
    let omt = 1.0 - theta;
    (0..cont[0].len())
        .map(|c| {
            cont[0][c]
                + theta
                    * (cont[1][c] + omt * (cont[2][c] + theta * (cont[3][c] + omt * cont[4][c])))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Convergence-order measurement
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FittedOrder {
    /// Every ladder error was zero to round-off; the method is exact here.
    Exact,
    Order(f64),
}

/// Fits the classical convergence order of a fixed-step method by
/// least-squares regression of log(error) against log(step size).
pub fn measure_convergence_order<F>(
    mut field: F,
    z0: &[f64],
    span: (f64, f64),
    reference: &[f64],
    method: Method,
    step_ladder: &[f64],
) -> Result<FittedOrder>
where
    F: FnMut(f64, &[f64]) -> Vec<f64>,
{
    if !method.is_fixed_step() {
        return Err(Error::BadConfig(
            "convergence order is measured on fixed-step methods".into(),
        ));
    }
    let mut sizes: Vec<f64> = step_ladder.to_vec();
    if sizes.iter().any(|h| !h.is_finite() || *h <= 0.0) {
        return Err(Error::BadLadder);
    }
    sizes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sizes.dedup();
    if sizes.len() < 4 {
        return Err(Error::BadLadder);
    }
    let ref_scale = 1.0 + reference.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let mut points = Vec::new();
    for &h in &sizes {
        let config = SolveConfig::fixed(method, h);
        let result = integrate(&mut field, z0, span, &[span.1], &config)?;
        let err = result.states[0]
            .iter()
            .zip(reference)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        if err > 1e-14 * ref_scale {
            points.push((h.ln(), err.ln()));
        }
    }
    if points.len() < 2 {
        return Ok(FittedOrder::Exact);
    }
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    Ok(FittedOrder::Order(
        (n * sxy - sx * sy) / (n * sxx - sx * sx),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_field(_s: f64, z: &[f64]) -> Vec<f64> {
        z.to_vec()
    }

    #[test]
    fn zero_field_keeps_state_exactly() {
        for method in [Method::Euler, Method::Rk4, Method::Dopri5] {
            let config = SolveConfig {
                method,
                fixed_step: 0.3,
                ..Default::default()
            };
            let result = integrate(
                |_s, z| vec![0.0; z.len()],
                &[2.5, -1.0],
                (0.0, 3.0),
                &[0.0, 1.1, 2.9, 3.0],
                &config,
            )
            .unwrap();
            for state in &result.states {
                assert_eq!(state, &vec![2.5, -1.0], "{method:?}");
            }
        }
    }

    #[test]
    fn dopri5_defaults_hit_e_within_tolerance_scale() {
        let result = integrate(
            exp_field,
            &[1.0],
            (0.0, 1.0),
            &[1.0],
            &SolveConfig::default(),
        )
        .unwrap();
        let e = std::f64::consts::E;
        assert!(
            (result.states[0][0] - e).abs() <= 5.0 * 1e-3 * e,
            "got {}",
            result.states[0][0]
        );
    }

    #[test]
    fn rk4_counts_four_evaluations_per_step() {
        let config = SolveConfig::fixed(Method::Rk4, 0.1);
        let result = integrate(exp_field, &[1.0], (0.0, 1.0), &[1.0], &config).unwrap();
        assert_eq!(result.steps_accepted, 10);
        assert_eq!(result.nfe, 40);
    }

    #[test]
    fn euler_counts_one_evaluation_per_step() {
        let config = SolveConfig::fixed(Method::Euler, 0.25);
        let result = integrate(exp_field, &[1.0], (0.0, 1.0), &[0.5, 1.0], &config).unwrap();
        assert_eq!(result.nfe, 4);
        assert_eq!(result.states.len(), 2);
    }

    #[test]
    fn dopri5_accounting_matches_attempts() {
        let result = integrate(
            exp_field,
            &[1.0],
            (0.0, 4.0),
            &[4.0],
            &SolveConfig::default(),
        )
        .unwrap();
        // One eval for the first stage, one for the init heuristic, six per
        // attempted step (FSAL reuses the last stage on acceptance).
        assert_eq!(
            result.nfe,
            2 + 6 * (result.steps_accepted + result.steps_rejected)
        );
    }

    #[test]
    fn dopri5_step_is_exact_on_constant_slope() {
        let mut f = |_s: f64, _z: &[f64]| vec![3.0];
        let (z5, z4, _) = dopri5_step(&mut f, 0.0, &[1.0], 0.5).unwrap();
        assert!((z5[0] - 2.5).abs() <= 1e-15);
        assert!((z4[0] - 2.5).abs() <= 1e-15);
        assert!(error_norm(&[1.0], &z5, &z4, 1e-5, 1e-3) <= 1e-12);
    }

    #[test]
    fn dopri5_step_matches_exponential_closed_form() {
        let mut f = |_s: f64, z: &[f64]| z.to_vec();
        let (z5, _, _) = dopri5_step(&mut f, 0.0, &[1.0], 0.1).unwrap();
        assert!((z5[0] - 0.1_f64.exp()).abs() <= 1e-8, "{}", z5[0]);
    }

    #[test]
    fn halving_h_shrinks_local_error_fifth_order() {
        let local_err = |h: f64| {
            let mut f = |s: f64, z: &[f64]| vec![z[0] * s.cos()];
            let (z5, _, _) = dopri5_step(&mut f, 0.2, &[1.3], h).unwrap();
            let exact = 1.3 * ((0.2 + h).sin() - 0.2_f64.sin()).exp();
            (z5[0] - exact).abs()
        };
        let ratio = local_err(0.2) / local_err(0.1);
        // Local truncation error is O(h^6); the 5(4) error estimate ladder
        // contracts at least like 2^5 on a smooth field.
        assert!(ratio > 2.0_f64.powi(5), "ratio {ratio}");
    }

    #[test]
    fn measured_orders_match_classical_theory() {
        let ladder = [0.2, 0.1, 0.05, 0.025, 0.0125];
        let e = std::f64::consts::E;
        match measure_convergence_order(exp_field, &[1.0], (0.0, 1.0), &[e], Method::Euler, &ladder)
            .unwrap()
        {
            FittedOrder::Order(p) => assert!((p - 1.0).abs() <= 0.2, "euler order {p}"),
            FittedOrder::Exact => panic!("euler is not exact on exp"),
        }
        match measure_convergence_order(exp_field, &[1.0], (0.0, 1.0), &[e], Method::Rk4, &ladder)
            .unwrap()
        {
            FittedOrder::Order(p) => assert!((p - 4.0).abs() <= 0.2, "rk4 order {p}"),
            FittedOrder::Exact => panic!("rk4 is not exact on exp"),
        }
    }

    #[test]
    fn zero_field_reports_exact_order() {
        let ladder = [0.2, 0.1, 0.05, 0.025];
        let got = measure_convergence_order(
            |_s, z: &[f64]| vec![0.0; z.len()],
            &[1.0],
            (0.0, 1.0),
            &[1.0],
            Method::Rk4,
            &ladder,
        )
        .unwrap();
        assert_eq!(got, FittedOrder::Exact);
    }

    #[test]
    fn degenerate_ladder_is_rejected() {
        assert!(matches!(
            measure_convergence_order(
                exp_field,
                &[1.0],
                (0.0, 1.0),
                &[1.0],
                Method::Euler,
                &[0.1, 0.1, 0.1, 0.1]
            ),
            Err(Error::BadLadder)
        ));
        assert!(matches!(
            measure_convergence_order(
                exp_field,
                &[1.0],
                (0.0, 1.0),
                &[1.0],
                Method::Euler,
                &[0.2, 0.1, 0.05]
            ),
            Err(Error::BadLadder)
        ));
    }

    #[test]
    fn accepted_endpoints_contain_discontinuities() {
        let discs = [0.7, 1.3, 2.6];
        for method in [Method::Euler, Method::Rk4, Method::Dopri5] {
            let config = SolveConfig {
                method,
                fixed_step: 0.4,
                discontinuities: discs.to_vec(),
                ..Default::default()
            };
            let result = integrate(
                |s: f64, _z: &[f64]| vec![s.sin()],
                &[0.0],
                (0.0, 3.0),
                &[3.0],
                &config,
            )
            .unwrap();
            for d in discs {
                assert!(
                    result.accepted_endpoints.contains(&d),
                    "{method:?} missed {d}"
                );
            }
        }
    }

    #[test]
    fn identical_inputs_give_bit_identical_results() {
        let run = || {
            integrate(
                |s: f64, z: &[f64]| vec![z[1], -z[0] + (3.0 * s).sin()],
                &[1.0, 0.0],
                (0.0, 5.0),
                &[2.5, 5.0],
                &SolveConfig::default(),
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn max_steps_is_enforced() {
        let config = SolveConfig {
            max_steps: 3,
            ..Default::default()
        };
        assert!(matches!(
            integrate(exp_field, &[1.0], (0.0, 100.0), &[100.0], &config),
            Err(Error::MaxStepsExceeded(3))
        ));
    }

    #[test]
    fn wild_field_underflows_step_size() {
        let config = SolveConfig {
            max_steps: 1 << 24,
            ..Default::default()
        };
        let got = integrate(
            |s: f64, _z: &[f64]| vec![1e12 * (1e12 * s).sin()],
            &[0.0],
            (0.0, 1.0),
            &[1.0],
            &config,
        );
        assert!(matches!(
            got,
            Err(Error::StepUnderflow(_)) | Err(Error::MaxStepsExceeded(_))
        ));
    }

    #[test]
    fn non_finite_state_is_a_blowup() {
        let config = SolveConfig::fixed(Method::Euler, 0.5);
        let got = integrate(
            |_s: f64, _z: &[f64]| vec![f64::NAN],
            &[1.0],
            (0.0, 1.0),
            &[1.0],
            &config,
        );
        assert!(matches!(got, Err(Error::NumericalBlowup)));
    }

    #[test]
    fn dense_interpolant_is_accurate_inside_a_step() {
        let mid_error = |h: f64| -> f64 {
            let mut f = |_s: f64, z: &[f64]| z.to_vec();
            let (z5, _, stages) = dopri5_step(&mut f, 0.0, &[1.0], h).unwrap();
            let cont = dense_coefficients(&[1.0], &z5, &stages, h);
            (0..=4)
                .map(|k| {
                    let theta = k as f64 / 4.0;
                    (dense_eval(&cont, theta)[0] - (theta * h).exp()).abs()
                })
                .fold(0.0_f64, f64::max)
        };
        assert!(mid_error(0.4) <= 1e-5, "{}", mid_error(0.4));
        // Fourth-order interpolant: halving h contracts by at least 2^4.
        assert!(mid_error(0.2) <= mid_error(0.4) / 16.0);
        assert!(mid_error(0.1) <= mid_error(0.2) / 16.0);
    }

    #[test]
    fn solver_types_are_shareable_across_threads() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<SolveConfig>();
        assert_send_sync::<SolveResult>();
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad_step = SolveConfig {
            method: Method::Euler,
            fixed_step: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            integrate(exp_field, &[1.0], (0.0, 1.0), &[1.0], &bad_step),
            Err(Error::BadConfig(_))
        ));
        let bad_tol = SolveConfig {
            rtol: -1.0,
            ..Default::default()
        };
        assert!(matches!(
            integrate(exp_field, &[1.0], (0.0, 1.0), &[1.0], &bad_tol),
            Err(Error::BadConfig(_))
        ));
    }

    #[test]
    fn fixed_schedule_subdivides_between_discontinuities() {
        let pts = fixed_step_schedule((0.0, 2.0), &[0.5], 0.4);
        assert_eq!(pts, vec![0.0, 0.25, 0.5, 0.875, 1.25, 1.625, 2.0]);
    }
}
