//! Control paths: four piecewise-polynomial embeddings of a discrete series
//! into continuous time, with value/derivative evaluation and the
//! derivative-discontinuity list consumed by the solvers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::AugmentedSeries;

/// The four control-path construction schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    NaturalCubic,
    Linear,
    HermiteBackward,
    Rectilinear,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::NaturalCubic,
        Scheme::Linear,
        Scheme::HermiteBackward,
        Scheme::Rectilinear,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Scheme::NaturalCubic => "natural_cubic",
            Scheme::Linear => "linear",
            Scheme::HermiteBackward => "hermite_backward",
            Scheme::Rectilinear => "rectilinear",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "natural_cubic" | "natural-cubic" | "cubic" => Ok(Scheme::NaturalCubic),
            "linear" => Ok(Scheme::Linear),
            "hermite_backward" | "hermite-backward" | "hermite" => Ok(Scheme::HermiteBackward),
            "rectilinear" => Ok(Scheme::Rectilinear),
            other => Err(Error::BadConfig(format!("unknown scheme `{other}`"))),
        }
    }
}

/// Where knot i sits on the parameter axis.
///
/// `UnitIndex` places knots at s_i = i (the default; time enters as an
/// explicit channel), `Time` places them at s_i = t_i.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterisation {
    UnitIndex,
    Time,
}

/// A continuous piecewise-cubic path on [s_0, s_m] with one polynomial per
/// (piece, channel) in the local coordinate u = s - s_k.
#[derive(Debug, Clone)]
pub struct ControlPath {
    breakpoints: Vec<f64>,
    /// coeffs[piece][channel] = [a, b, c, d]: a + b·u + c·u² + d·u³.
    coeffs: Vec<Vec<[f64; 4]>>,
    out_dim: usize,
    scheme: Scheme,
    deriv_discontinuities: Vec<f64>,
}

impl ControlPath {
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.breakpoints[0], *self.breakpoints.last().unwrap())
    }

    pub fn num_pieces(&self) -> usize {
        self.coeffs.len()
    }

    /// Interior breakpoints where dX/ds jumps, sorted, for the solver.
    pub fn discontinuities(&self) -> &[f64] {
        &self.deriv_discontinuities
    }

    /// Local coefficients of one piece for one channel.
    pub fn piece_coeffs(&self, piece: usize, channel: usize) -> [f64; 4] {
        self.coeffs[piece][channel]
    }

    /// Piece index and local coordinate for a parameter. Pieces are
    /// half-open [s_k, s_{k+1}) with the final piece closed.
    fn locate(&self, s: f64) -> Result<(usize, f64)> {
        let (lo, hi) = self.domain();
        if !s.is_finite() || s < lo || s > hi {
            return Err(Error::OutOfDomain { s, lo, hi });
        }
        let k = self
            .breakpoints
            .partition_point(|&b| b <= s)
            .saturating_sub(1)
            .min(self.num_pieces() - 1);
        Ok((k, s - self.breakpoints[k]))
    }

    pub fn eval_into(&self, s: f64, out: &mut [f64]) -> Result<()> {
        let (k, u) = self.locate(s)?;
        for (y, p) in out.iter_mut().zip(&self.coeffs[k]) {
            *y = ((p[3] * u + p[2]) * u + p[1]) * u + p[0];
        }
        Ok(())
    }

    /// Path value at a parameter; right-continuous at interior breakpoints.
    pub fn eval(&self, s: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.out_dim];
        self.eval_into(s, &mut out)?;
        Ok(out)
    }

    pub fn eval_deriv_into(&self, s: f64, out: &mut [f64]) -> Result<()> {
        let (k, u) = self.locate(s)?;
        for (y, p) in out.iter_mut().zip(&self.coeffs[k]) {
            *y = (3.0 * p[3] * u + 2.0 * p[2]) * u + p[1];
        }
        Ok(())
    }

    /// dX/ds at a parameter; the right limit at derivative discontinuities.
    pub fn eval_deriv(&self, s: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.out_dim];
        self.eval_deriv_into(s, &mut out)?;
        Ok(out)
    }

    /// Left limit of dX/ds at the end of a piece (`eval_deriv` gives the
    /// right limit at breakpoints).
    pub fn deriv_left_limit(&self, piece: usize, channel: usize) -> f64 {
        let h = self.breakpoints[piece + 1] - self.breakpoints[piece];
        let p = self.coeffs[piece][channel];
        (3.0 * p[3] * h + 2.0 * p[2]) * h + p[1]
    }
}

/// Builds a control path with the default unit-index parameterisation.
pub fn build(scheme: Scheme, series: &AugmentedSeries) -> Result<ControlPath> {
    build_with(scheme, series, Parameterisation::UnitIndex)
}

/// Builds a control path with an explicit knot parameterisation.
pub fn build_with(
    scheme: Scheme,
    series: &AugmentedSeries,
    param: Parameterisation,
) -> Result<ControlPath> {
    match scheme {
        Scheme::Linear => build_interpolant(series, param, Scheme::Linear),
        Scheme::NaturalCubic => build_interpolant(series, param, Scheme::NaturalCubic),
        Scheme::HermiteBackward => build_interpolant(series, param, Scheme::HermiteBackward),
        Scheme::Rectilinear => match param {
            Parameterisation::UnitIndex => rectilinear_path(series),
            Parameterisation::Time => Err(Error::BadConfig(
                "rectilinear paths require the unit-index parameterisation \
                 (time is frozen on feature-update segments)"
                    .into(),
            )),
        },
    }
}

pub fn build_linear(series: &AugmentedSeries) -> Result<ControlPath> {
    build(Scheme::Linear, series)
}

pub fn build_natural_cubic(series: &AugmentedSeries) -> Result<ControlPath> {
    build(Scheme::NaturalCubic, series)
}

pub fn build_hermite_backward(series: &AugmentedSeries) -> Result<ControlPath> {
    build(Scheme::HermiteBackward, series)
}

pub fn build_rectilinear(series: &AugmentedSeries) -> Result<ControlPath> {
    build(Scheme::Rectilinear, series)
}

/// One output channel's knot data: values at all knots plus which of them
/// are actually observed. Time and intensity channels are observed
/// everywhere; feature channels follow the mask.
struct ChannelData {
    name: String,
    values: Vec<f64>,
    observed: Vec<bool>,
}

fn channel_data(series: &AugmentedSeries) -> Vec<ChannelData> {
    let base = series.base();
    let n = base.len();
    let v = base.num_channels();
    let mut channels = Vec::with_capacity(series.out_dim());
    if series.include_time() {
        channels.push(ChannelData {
            name: "time".into(),
            values: base.timestamps().to_vec(),
            observed: vec![true; n],
        });
    }
    for j in 0..v {
        channels.push(ChannelData {
            name: base.channel_names()[j].clone(),
            values: (0..n).map(|i| base.value(i, j).unwrap_or(0.0)).collect(),
            observed: (0..n).map(|i| base.observed(i, j)).collect(),
        });
    }
    if series.include_intensity() {
        for j in 0..v {
            channels.push(ChannelData {
                name: format!("count_{}", base.channel_names()[j]),
                values: (0..n).map(|i| f64::from(series.intensity(i, j))).collect(),
                observed: vec![true; n],
            });
        }
    }
    channels
}

fn knot_positions(series: &AugmentedSeries, param: Parameterisation) -> Vec<f64> {
    match param {
        Parameterisation::UnitIndex => (0..series.num_knots()).map(|i| i as f64).collect(),
        Parameterisation::Time => series.base().timestamps().to_vec(),
    }
}

/// Shifts a + b·u + c·u² + d·u³ to the coordinate u' = u - delta.
fn shift_poly(p: [f64; 4], delta: f64) -> [f64; 4] {
    let [a, b, c, d] = p;
    [
        ((d * delta + c) * delta + b) * delta + a,
        (3.0 * d * delta + 2.0 * c) * delta + b,
        3.0 * d * delta + c,
        d,
    ]
}

/// A cubic valid from global breakpoint `start` to `end`, local to
/// `positions[start]`.
struct Span {
    start: usize,
    end: usize,
    poly: [f64; 4],
}

/// Per-channel interpolation over observed knots for the three gap-spanning
/// schemes, plus linear extension outside the channel's observed range.
fn channel_spans(positions: &[f64], channel: &ChannelData, scheme: Scheme) -> Result<Vec<Span>> {
    let obs: Vec<usize> = (0..positions.len())
        .filter(|&i| channel.observed[i])
        .collect();
    let min_obs = match scheme {
        Scheme::NaturalCubic => 2,
        _ => 1,
    };
    if obs.len() < min_obs {
        return Err(Error::EmptyChannel(channel.name.clone()));
    }
    let m = positions.len() - 1;
    let y: Vec<f64> = obs.iter().map(|&i| channel.values[i]).collect();
    let p: Vec<f64> = obs.iter().map(|&i| positions[i]).collect();
    let segs = obs.len() - 1;

    let mut spans = Vec::new();
    if obs.len() == 1 {
        // A single observation makes the channel constant.
        spans.push(Span {
            start: 0,
            end: m,
            poly: [y[0], 0.0, 0.0, 0.0],
        });
        return Ok(spans);
    }

    // Per-segment cubics between consecutive observed knots.
    let mut polys = Vec::with_capacity(segs);
    let (slope_first, slope_last);
    match scheme {
        Scheme::Linear => {
            for k in 0..segs {
                let slope = (y[k + 1] - y[k]) / (p[k + 1] - p[k]);
                polys.push([y[k], slope, 0.0, 0.0]);
            }
            // Constant extension outside the observed range.
            slope_first = 0.0;
            slope_last = 0.0;
        }
        Scheme::HermiteBackward => {
            // Node slopes are backward differences; the first node (which
            // has no predecessor) uses the forward difference instead.
            let mut slopes = Vec::with_capacity(obs.len());
            slopes.push((y[1] - y[0]) / (p[1] - p[0]));
            for k in 1..obs.len() {
                slopes.push((y[k] - y[k - 1]) / (p[k] - p[k - 1]));
            }
            for k in 0..segs {
                let h = p[k + 1] - p[k];
                polys.push(hermite_piece(y[k], y[k + 1], slopes[k], slopes[k + 1], h));
            }
            slope_first = slopes[0];
            slope_last = slopes[obs.len() - 1];
        }
        Scheme::NaturalCubic => {
            let second = natural_spline_second_derivatives(&p, &y);
            for k in 0..segs {
                let h = p[k + 1] - p[k];
                let a = y[k];
                let b = (y[k + 1] - y[k]) / h - h * (2.0 * second[k] + second[k + 1]) / 6.0;
                let c = second[k] / 2.0;
                let d = (second[k + 1] - second[k]) / (6.0 * h);
                polys.push([a, b, c, d]);
            }
            slope_first = polys[0][1];
            let h = p[segs] - p[segs - 1];
            let q = polys[segs - 1];
            slope_last = (3.0 * q[3] * h + 2.0 * q[2]) * h + q[1];
        }
        Scheme::Rectilinear => unreachable!("rectilinear is built directly"),
    }

    if obs[0] > 0 {
        // Linear extension left of the first observation, meeting it with
        // the interpolant's boundary slope (zero for the linear scheme).
        let gap = positions[0] - p[0];
        spans.push(Span {
            start: 0,
            end: obs[0],
            poly: [y[0] + slope_first * gap, slope_first, 0.0, 0.0],
        });
    }
    for k in 0..segs {
        spans.push(Span {
            start: obs[k],
            end: obs[k + 1],
            poly: polys[k],
        });
    }
    let last = obs[obs.len() - 1];
    if last < m {
        spans.push(Span {
            start: last,
            end: m,
            poly: [y[obs.len() - 1], slope_last, 0.0, 0.0],
        });
    }
    Ok(spans)
}

/// The unique cubic on [0, h] with endpoint values y0, y1 and endpoint
/// slopes m0, m1.
fn hermite_piece(y0: f64, y1: f64, m0: f64, m1: f64, h: f64) -> [f64; 4] {
    let p = y1 - y0 - m0 * h;
    let q = m1 - m0;
    let c = 3.0 * p / (h * h) - q / h;
    let d = (q * h - 2.0 * p) / (h * h * h);
    [y0, m0, c, d]
}

/// Natural-boundary second derivatives via the tridiagonal (Thomas) solve of
/// h_{k-1}·M_{k-1} + 2(h_{k-1}+h_k)·M_k + h_k·M_{k+1}
///   = 6((y_{k+1}-y_k)/h_k - (y_k-y_{k-1})/h_{k-1}), with M at both ends 0.
fn natural_spline_second_derivatives(p: &[f64], y: &[f64]) -> Vec<f64> {
    let n = p.len();
    let mut second = vec![0.0; n];
    if n < 3 {
        return second;
    }
    let unknowns = n - 2;
    let mut diag = vec![0.0; unknowns];
    let mut rhs = vec![0.0; unknowns];
    let mut lower = vec![0.0; unknowns];
    let mut upper = vec![0.0; unknowns];
    for k in 0..unknowns {
        let i = k + 1;
        let h0 = p[i] - p[i - 1];
        let h1 = p[i + 1] - p[i];
        lower[k] = h0;
        diag[k] = 2.0 * (h0 + h1);
        upper[k] = h1;
        rhs[k] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
    }
    // Thomas forward sweep (strictly diagonally dominant, no pivoting).
    for k in 1..unknowns {
        let w = lower[k] / diag[k - 1];
        diag[k] -= w * upper[k - 1];
        rhs[k] -= w * rhs[k - 1];
    }
    let mut sol = vec![0.0; unknowns];
    sol[unknowns - 1] = rhs[unknowns - 1] / diag[unknowns - 1];
    for k in (0..unknowns - 1).rev() {
        sol[k] = (rhs[k] - upper[k] * sol[k + 1]) / diag[k];
    }
    second[1..=unknowns].copy_from_slice(&sol);
    second
}

fn build_interpolant(
    series: &AugmentedSeries,
    param: Parameterisation,
    scheme: Scheme,
) -> Result<ControlPath> {
    let positions = knot_positions(series, param);
    let m = positions.len() - 1;
    let channels = channel_data(series);
    let mut coeffs = vec![Vec::with_capacity(channels.len()); m];
    for channel in &channels {
        let spans = channel_spans(&positions, channel, scheme)?;
        for span in spans {
            for k in span.start..span.end {
                let delta = positions[k] - positions[span.start];
                coeffs[k].push(shift_poly(span.poly, delta));
            }
        }
    }
    let deriv_discontinuities = match scheme {
        Scheme::Linear => positions[1..m].to_vec(),
        _ => Vec::new(),
    };
    Ok(ControlPath {
        breakpoints: positions,
        coeffs,
        out_dim: channels.len(),
        scheme,
        deriv_discontinuities,
    })
}

/// Lead-lag path on [0, 2n]: even breakpoints carry (t_i, x̃_i, c_i), odd
/// breakpoints (t_{i+1}, x̃_i, c_i), so time advances with features frozen
/// and then features/intensity update with time held fixed.
fn rectilinear_path(series: &AugmentedSeries) -> Result<ControlPath> {
    let base = series.base();
    let n = base.len() - 1;
    let out_dim = series.out_dim();
    let mut knots: Vec<Vec<f64>> = Vec::with_capacity(2 * n + 1);
    for i in 0..n {
        let even = series.knot_vector(i);
        let mut odd = even.clone();
        if series.include_time() {
            odd[0] = base.timestamps()[i + 1];
        }
        knots.push(even);
        knots.push(odd);
    }
    knots.push(series.knot_vector(n));

    let breakpoints: Vec<f64> = (0..=2 * n).map(|r| r as f64).collect();
    let mut coeffs = Vec::with_capacity(2 * n);
    for r in 0..2 * n {
        let piece: Vec<[f64; 4]> = (0..out_dim)
            .map(|ci| [knots[r][ci], knots[r + 1][ci] - knots[r][ci], 0.0, 0.0])
            .collect();
        coeffs.push(piece);
    }
    Ok(ControlPath {
        deriv_discontinuities: breakpoints[1..2 * n].to_vec(),
        breakpoints,
        coeffs,
        out_dim,
        scheme: Scheme::Rectilinear,
    })
}
