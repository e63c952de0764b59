//! Empirical verification probes: measurability (causality) classification,
//! boundedness norms, uniqueness counterexamples, reparameterisation
//! invariance, and solver-cost benchmarking.

use serde::{Deserialize, Serialize};

use crate::control::{build, build_with, ControlPath, Parameterisation, Scheme};
use crate::error::{Error, Result};
use crate::neuralcde::{cde_field, forward, task_metric, CdeModel, ModelConfig, OutputMode, Task};
use crate::series::{augment, AugmentedSeries, Dataset, RawSeries};
use crate::solver::{integrate, Method, SolveConfig};

/// Measurability classes: how far forward in the data a prediction at a
/// parameter may depend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnlineClass {
    ContinuouslyOnline,
    DiscretelyOnline,
    Offline,
}

/// Outcome of a causality probe, serializable for the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeReport {
    pub scheme: Scheme,
    pub kind: String,
    pub classification: OnlineClass,
    pub query_points: Vec<f64>,
    pub affected: Vec<bool>,
    pub perturb_index: usize,
    pub epsilon: f64,
    pub tolerance: f64,
    /// Parameter at which the perturbed datum legitimately arrives.
    pub arrival_parameter: f64,
}

/// Pure classification of an affected-flag pattern.
///
/// No flag strictly before `arrival` means continuously online; flags
/// confined to the single inter-knot interval (`prev_knot`, `arrival`)
/// mean discretely online; anything earlier is offline.
pub fn classify(
    queries: &[f64],
    affected: &[bool],
    arrival: f64,
    prev_knot: Option<f64>,
) -> OnlineClass {
    let early: Vec<f64> = queries
        .iter()
        .zip(affected)
        .filter(|(q, &flag)| flag && **q < arrival)
        .map(|(q, _)| *q)
        .collect();
    if early.is_empty() {
        OnlineClass::ContinuouslyOnline
    } else if prev_knot.is_some_and(|p| early.iter().all(|&q| q > p)) {
        OnlineClass::DiscretelyOnline
    } else {
        OnlineClass::Offline
    }
}

/// Query grid for probes: `per_piece` points placed strictly inside every
/// piece, avoiding the breakpoints themselves.
pub fn probe_grid(path: &ControlPath, per_piece: usize) -> Vec<f64> {
    let b = path.breakpoints();
    let mut grid = Vec::with_capacity((b.len() - 1) * per_piece);
    for w in b.windows(2) {
        let h = w[1] - w[0];
        for i in 0..per_piece {
            grid.push(w[0] + h * (i as f64 + 0.5) / per_piece as f64);
        }
    }
    grid
}

/// Perturbs observation `perturb_index` by `epsilon`, rebuilds the control,
/// and flags every query parameter where the path values or a reference CDE
/// solution (fixed seeded model, rk4) move beyond `tolerance`.
pub fn causality_probe(
    scheme: Scheme,
    series: &AugmentedSeries,
    perturb_index: usize,
    epsilon: f64,
    queries: &[f64],
    tolerance: f64,
) -> Result<ProbeReport> {
    if perturb_index >= series.num_knots() {
        return Err(Error::BadIndex(perturb_index));
    }
    if epsilon == 0.0 {
        return Err(Error::BadConfig("epsilon must be nonzero".into()));
    }
    let base_path = build(scheme, series)?;
    let perturbed_raw = series.base().perturb_row(perturb_index, epsilon)?;
    let perturbed = augment(
        &perturbed_raw,
        series.include_intensity(),
        series.include_time(),
    );
    let perturbed_path = build(scheme, &perturbed)?;

    // Reference solve with a fixed random model; bitwise identical step
    // schedules make the unaffected prefix compare exactly. Euler evaluates
    // the field at left step endpoints only, so the discretised solution
    // depends on exactly the same data prefix as the exact one (an rk4
    // stage at a segment end would read the right limit across the kink
    // and leak one piece ahead).
    let model = CdeModel::new(
        &ModelConfig {
            hidden_dim: 4,
            hidden_hidden_dim: 8,
            num_layers: 1,
            output_dim: 1,
        },
        base_path.out_dim(),
        0x5eed,
    );
    let config = SolveConfig::fixed(Method::Euler, 0.25);
    let solve = |path: &ControlPath| -> Result<Vec<Vec<f64>>> {
        let (s0, sm) = path.domain();
        let z0 = model.zeta.forward(&path.eval(s0)?);
        let mut cfg = config.clone();
        cfg.discontinuities = path.discontinuities().to_vec();
        let field = cde_field(&model, path)?;
        Ok(integrate(field, &z0, (s0, sm), queries, &cfg)?.states)
    };
    let z_base = solve(&base_path)?;
    let z_pert = solve(&perturbed_path)?;

    let mut affected = Vec::with_capacity(queries.len());
    for (k, &q) in queries.iter().enumerate() {
        let a = base_path.eval(q)?;
        let b = perturbed_path.eval(q)?;
        let path_moved = a.iter().zip(&b).any(|(x, y)| (x - y).abs() > tolerance);
        let state_moved = z_base[k]
            .iter()
            .zip(&z_pert[k])
            .any(|(x, y)| (x - y).abs() > tolerance);
        affected.push(path_moved || state_moved);
    }

    let breakpoints = base_path.breakpoints();
    let arrival_idx = match scheme {
        Scheme::Rectilinear => (2 * perturb_index).saturating_sub(1),
        _ => perturb_index,
    };
    let arrival = breakpoints[arrival_idx];
    let prev_knot = arrival_idx.checked_sub(1).map(|i| breakpoints[i]);
    let classification = classify(queries, &affected, arrival, prev_knot);
    Ok(ProbeReport {
        scheme,
        kind: "causality".into(),
        classification,
        query_points: queries.to_vec(),
        affected,
        perturb_index,
        epsilon,
        tolerance,
        arrival_parameter: arrival,
    })
}

// ---------------------------------------------------------------------------
// Boundedness norms
// ---------------------------------------------------------------------------

/// Per-channel ‖X‖∞, ‖dX/ds‖∞ and |dX/ds|_BV: exact piecewise values from
/// polynomial extrema alongside dense-grid estimates at `grid_resolution`
/// samples per piece.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathNorms {
    pub sup_norm: Vec<f64>,
    pub deriv_sup_norm: Vec<f64>,
    pub deriv_bv: Vec<f64>,
    pub grid_sup_norm: Vec<f64>,
    pub grid_deriv_sup_norm: Vec<f64>,
    pub grid_deriv_bv: Vec<f64>,
    pub grid_resolution: usize,
}

fn poly_value(p: [f64; 4], u: f64) -> f64 {
    ((p[3] * u + p[2]) * u + p[1]) * u + p[0]
}

fn poly_deriv(p: [f64; 4], u: f64) -> f64 {
    (3.0 * p[3] * u + 2.0 * p[2]) * u + p[1]
}

/// Real roots of b + 2c·u + 3d·u² inside (0, h), i.e. critical points of the
/// cubic piece.
fn deriv_roots(p: [f64; 4], h: f64) -> Vec<f64> {
    let (b, c, d) = (p[1], p[2], p[3]);
    let mut roots = Vec::new();
    if d != 0.0 {
        let (qa, qb, qc) = (3.0 * d, 2.0 * c, b);
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for r in [(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)] {
                if r > 0.0 && r < h {
                    roots.push(r);
                }
            }
        }
    } else if c != 0.0 {
        let r = -b / (2.0 * c);
        if r > 0.0 && r < h {
            roots.push(r);
        }
    }
    roots
}

pub fn path_norms(path: &ControlPath, grid_resolution: usize) -> PathNorms {
    let res = grid_resolution.max(10);
    let dim = path.out_dim();
    let pieces = path.num_pieces();
    let b = path.breakpoints();

    let mut sup = vec![0.0_f64; dim];
    let mut dsup = vec![0.0_f64; dim];
    let mut bv = vec![0.0_f64; dim];
    let mut gsup = vec![0.0_f64; dim];
    let mut gdsup = vec![0.0_f64; dim];
    let mut gbv = vec![0.0_f64; dim];

    for ch in 0..dim {
        let mut prev_end_slope: Option<f64> = None;
        for k in 0..pieces {
            let h = b[k + 1] - b[k];
            let p = path.piece_coeffs(k, ch);

            // Exact extrema of the value: endpoints plus critical points.
            let mut m = poly_value(p, 0.0).abs().max(poly_value(p, h).abs());
            for r in deriv_roots(p, h) {
                m = m.max(poly_value(p, r).abs());
            }
            sup[ch] = sup[ch].max(m);

            // The derivative is quadratic: extrema at endpoints and vertex.
            let d0 = poly_deriv(p, 0.0);
            let dh = poly_deriv(p, h);
            let mut dm = d0.abs().max(dh.abs());
            let vertex = if p[3] != 0.0 {
                Some(-p[2] / (3.0 * p[3]))
            } else {
                None
            };
            let interior_vertex = vertex.filter(|&u| u > 0.0 && u < h);
            if let Some(u) = interior_vertex {
                dm = dm.max(poly_deriv(p, u).abs());
            }
            dsup[ch] = dsup[ch].max(dm);

            // Total variation of the quadratic derivative on the piece.
            bv[ch] += match interior_vertex {
                Some(u) => {
                    let dv = poly_deriv(p, u);
                    (dv - d0).abs() + (dh - dv).abs()
                }
                None => (dh - d0).abs(),
            };
            // Plus the jump against the previous piece.
            if let Some(left) = prev_end_slope {
                bv[ch] += (d0 - left).abs();
            }
            prev_end_slope = Some(dh);

            // Grid estimates on the same piece.
            let mut prev_d: Option<f64> = None;
            for i in 0..=res {
                let u = h * i as f64 / res as f64;
                gsup[ch] = gsup[ch].max(poly_value(p, u).abs());
                let dv = poly_deriv(p, u);
                gdsup[ch] = gdsup[ch].max(dv.abs());
                if let Some(pd) = prev_d {
                    gbv[ch] += (dv - pd).abs();
                }
                prev_d = Some(dv);
            }
            if k > 0 {
                let left = poly_deriv(path.piece_coeffs(k - 1, ch), b[k] - b[k - 1]);
                gbv[ch] += (d0 - left).abs();
            }
        }
    }
    PathNorms {
        sup_norm: sup,
        deriv_sup_norm: dsup,
        deriv_bv: bv,
        grid_sup_norm: gsup,
        grid_deriv_sup_norm: gdsup,
        grid_deriv_bv: gbv,
        grid_resolution: res,
    }
}

// ---------------------------------------------------------------------------
// Uniqueness
// ---------------------------------------------------------------------------

/// Largest channel-wise gap between two series' control paths, compared as
/// functions of time on a shared window. The three interpolating schemes are
/// rebuilt on the time parameterisation; rectilinear paths are inverted
/// through their (non-decreasing) time channel with a right-limit convention
/// at knots.
pub fn uniqueness_probe(
    x1: &RawSeries,
    x2: &RawSeries,
    scheme: Scheme,
    with_intensity: bool,
    grid_points: usize,
) -> Result<f64> {
    if x1.num_channels() != x2.num_channels() {
        return Err(Error::Shape("series have different channel counts".into()));
    }
    let (a0, a1) = (x1.timestamps()[0], *x1.timestamps().last().unwrap());
    let (b0, b1) = (x2.timestamps()[0], *x2.timestamps().last().unwrap());
    if a0 != b0 || a1 != b1 {
        return Err(Error::Shape(
            "series must share the reference time window".into(),
        ));
    }
    let s1 = augment(x1, with_intensity, true);
    let s2 = augment(x2, with_intensity, true);
    let param = match scheme {
        Scheme::Rectilinear => Parameterisation::UnitIndex,
        _ => Parameterisation::Time,
    };
    let p1 = build_with(scheme, &s1, param)?;
    let p2 = build_with(scheme, &s2, param)?;
    let eval_at_time = |series: &AugmentedSeries, path: &ControlPath, tau: f64| {
        if scheme == Scheme::Rectilinear {
            // Invert the non-decreasing time channel, taking the right
            // limit (end of the update segment) at knot times.
            let ts = series.base().timestamps();
            let i = ts.partition_point(|&t| t <= tau).saturating_sub(1);
            let s = if ts[i] == tau || i + 1 == ts.len() {
                2.0 * i as f64
            } else {
                2.0 * i as f64 + (tau - ts[i]) / (ts[i + 1] - ts[i])
            };
            path.eval(s)
        } else {
            path.eval(tau)
        }
    };

    let mut worst = 0.0_f64;
    let n = grid_points.max(2);
    for g in 0..n {
        let tau = if g == n - 1 {
            a1
        } else {
            (a0 + (a1 - a0) * g as f64 / (n - 1) as f64).min(a1)
        };
        let v1 = eval_at_time(&s1, &p1, tau)?;
        let v2 = eval_at_time(&s2, &p2, tau)?;
        for (x, y) in v1.iter().zip(&v2) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Reparameterisation invariance
// ---------------------------------------------------------------------------

/// Increasing piecewise-linear change of variables mapping `from`-positions
/// onto `to`-positions. Segments with identical endpoints short-circuit to
/// the identity so an identity reparameterisation is bit-exact.
struct PiecewiseLinearMap {
    from: Vec<f64>,
    to: Vec<f64>,
    slopes: Vec<f64>,
}

impl PiecewiseLinearMap {
    fn new(from: Vec<f64>, to: Vec<f64>) -> Result<Self> {
        if from.len() != to.len() || from.len() < 2 {
            return Err(Error::Shape("parameterisations must pair up".into()));
        }
        for w in from.windows(2) {
            if !w[1].is_finite() || w[1] <= w[0] {
                return Err(Error::BadConfig(
                    "parameterisation must be strictly increasing".into(),
                ));
            }
        }
        let slopes = from
            .windows(2)
            .zip(to.windows(2))
            .map(|(f, t)| (t[1] - t[0]) / (f[1] - f[0]))
            .collect();
        Ok(Self { from, to, slopes })
    }

    fn segment(&self, tau: f64) -> usize {
        self.from
            .partition_point(|&p| p <= tau)
            .saturating_sub(1)
            .min(self.from.len() - 2)
    }

    fn eval(&self, tau: f64) -> f64 {
        let k = self.segment(tau);
        if self.from[k] == self.to[k] && self.from[k + 1] == self.to[k + 1] {
            return tau;
        }
        self.to[k] + (tau - self.from[k]) * self.slopes[k]
    }

    fn deriv(&self, tau: f64) -> f64 {
        self.slopes[self.segment(tau)]
    }

    /// Interior `from`-positions where the slope actually changes.
    fn kinks(&self) -> Vec<f64> {
        (1..self.from.len() - 1)
            .filter(|&k| self.slopes[k] != self.slopes[k - 1])
            .map(|k| self.from[k])
            .collect()
    }
}

/// Solves the same CDE under the path's own parameterisation and under the
/// increasing reparameterisation that moves knot i to `positions_b[i]`,
/// returning the largest hidden-state deviation over corresponding knots.
pub fn reparam_check(
    model: &CdeModel,
    series: &AugmentedSeries,
    scheme: Scheme,
    param_a: Parameterisation,
    positions_b: &[f64],
    config: &SolveConfig,
) -> Result<f64> {
    let path = build_with(scheme, series, param_a)?;
    let breakpoints = path.breakpoints().to_vec();
    let alt: Vec<f64> = match scheme {
        Scheme::Rectilinear => {
            // Double the knot positions in lead-lag fashion.
            if positions_b.len() != series.num_knots() {
                return Err(Error::Shape("one position per knot required".into()));
            }
            let mut alt = Vec::with_capacity(2 * positions_b.len() - 1);
            for i in 0..positions_b.len() - 1 {
                alt.push(2.0 * positions_b[i]);
                alt.push(positions_b[i] + positions_b[i + 1]);
            }
            alt.push(2.0 * positions_b[positions_b.len() - 1]);
            alt
        }
        _ => positions_b.to_vec(),
    };
    let map = PiecewiseLinearMap::new(alt.clone(), breakpoints.clone())?;

    let z0 = model.zeta.forward(&path.eval(breakpoints[0])?);

    let mut cfg_a = config.clone();
    cfg_a.discontinuities = path.discontinuities().to_vec();
    let field = cde_field(model, &path)?;
    let span_a = (breakpoints[0], *breakpoints.last().unwrap());
    let solve_a = integrate(&field, &z0, span_a, &breakpoints, &cfg_a)?;

    // Composed control X ∘ ψ: kinks of ψ plus the path's own jumps pulled
    // back through ψ (their indices match, so alt positions serve directly).
    let mut discs_b = map.kinks();
    for (i, bp) in breakpoints.iter().enumerate() {
        if path.discontinuities().iter().any(|d| d == bp) {
            discs_b.push(alt[i]);
        }
    }
    discs_b.sort_by(|a, b| a.partial_cmp(b).unwrap());
    discs_b.dedup();
    let mut cfg_b = config.clone();
    cfg_b.discontinuities = discs_b;
    let field_b = |tau: f64, z: &[f64]| -> Vec<f64> {
        let mut dz = field(map.eval(tau), z);
        let scale = map.deriv(tau);
        for x in dz.iter_mut() {
            *x *= scale;
        }
        dz
    };
    let span_b = (alt[0], *alt.last().unwrap());
    let solve_b = integrate(field_b, &z0, span_b, &alt, &cfg_b)?;

    let mut dev = 0.0_f64;
    for (a, b) in solve_a.states.iter().zip(&solve_b.states) {
        for (x, y) in a.iter().zip(b) {
            dev = dev.max((x - y).abs());
        }
    }
    Ok(dev)
}

// ---------------------------------------------------------------------------
// Solver-cost benchmark
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub scheme: Scheme,
    pub mean_nfe: f64,
    pub metric: f64,
}

/// Runs a fixed model over every sample with each scheme's control path and
/// reports mean function evaluations per sample plus the task metric.
pub fn nfe_benchmark(
    dataset: &Dataset,
    schemes: &[Scheme],
    model: &CdeModel,
    config: &SolveConfig,
    task: Task,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(schemes.len());
    for &scheme in schemes {
        let mut total_nfe = 0usize;
        let mut outputs = Vec::with_capacity(dataset.len());
        let mut targets = Vec::with_capacity(dataset.len());
        for (sample, label) in dataset.samples.iter().zip(&dataset.labels) {
            let path = build(scheme, sample)?;
            let fwd = forward(model, &path, config, OutputMode::Terminal)?;
            total_nfe += fwd.nfe;
            outputs.extend(fwd.outputs);
            targets.push(label.as_target());
        }
        rows.push(BenchRow {
            scheme,
            mean_nfe: total_nfe as f64 / dataset.len().max(1) as f64,
            metric: task_metric(&outputs, &targets, task),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::parse_csv;
    use crate::synth;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn series(csv: &str, intensity: bool) -> AugmentedSeries {
        augment(&parse_csv(csv).unwrap(), intensity, true)
    }

    #[test]
    fn natural_cubic_classifies_offline() {
        let s = series("time,a\n0,0\n1,2\n2,-1\n3,1\n4,0\n5,2", false);
        let path = build(Scheme::NaturalCubic, &s).unwrap();
        let grid = probe_grid(&path, 8);
        let report = causality_probe(Scheme::NaturalCubic, &s, 5, 1e-3, &grid, 1e-9).unwrap();
        assert_eq!(report.classification, OnlineClass::Offline);
        // A query at s = 0.5 is affected by perturbing the last knot.
        let idx = grid.iter().position(|&q| (q - 0.5).abs() < 0.1).unwrap();
        assert!(report.affected[idx]);
    }

    #[test]
    fn rectilinear_classifies_continuously_online() {
        let s = series("time,a,b\n0,0,1\n1,2,\n2.5,-1,0\n3,1,2\n4,0,1", true);
        let path = build(Scheme::Rectilinear, &s).unwrap();
        let grid = probe_grid(&path, 8);
        for j in [1, 2, 4] {
            let report = causality_probe(Scheme::Rectilinear, &s, j, 1e-3, &grid, 1e-9).unwrap();
            assert_eq!(
                report.classification,
                OnlineClass::ContinuouslyOnline,
                "knot {j}"
            );
            assert_eq!(report.arrival_parameter, 2.0 * j as f64 - 1.0);
        }
    }

    #[test]
    fn linear_is_discretely_online_until_data_goes_missing() {
        let full = series("time,a,b\n0,0,1\n1,2,0\n2,-1,1\n3,1,0\n4,0,1", false);
        let path = build(Scheme::Linear, &full).unwrap();
        let grid = probe_grid(&path, 8);
        let report = causality_probe(Scheme::Linear, &full, 3, 1e-3, &grid, 1e-9).unwrap();
        assert_eq!(report.classification, OnlineClass::DiscretelyOnline);

        // Channel a missing at rows 2..3, bridged by the observation at row 4.
        let gappy = series("time,a,b\n0,0,1\n1,2,0\n2,,1\n3,,0\n4,5,1", false);
        let report = causality_probe(
            Scheme::Linear,
            &gappy,
            4,
            1e-3,
            &probe_grid(&build(Scheme::Linear, &gappy).unwrap(), 8),
            1e-9,
        )
        .unwrap();
        assert_eq!(report.classification, OnlineClass::Offline);
    }

    #[test]
    fn hermite_matches_linear_classification() {
        let full = series("time,a\n0,0\n1,2\n2,-1\n3,1\n4,0", false);
        let path = build(Scheme::HermiteBackward, &full).unwrap();
        let report = causality_probe(
            Scheme::HermiteBackward,
            &full,
            2,
            1.0,
            &probe_grid(&path, 8),
            1e-9,
        )
        .unwrap();
        assert_eq!(report.classification, OnlineClass::DiscretelyOnline);
    }

    #[test]
    fn probe_rejects_bad_index() {
        let s = series("time,a\n0,0\n1,1", false);
        assert!(matches!(
            causality_probe(Scheme::Linear, &s, 9, 1e-3, &[0.5], 1e-9),
            Err(Error::BadIndex(9))
        ));
    }

    #[test]
    fn zero_path_has_zero_norms() {
        let s = series("time,a\n0,0\n1,0\n2,0", false);
        let path = build(Scheme::Linear, &s).unwrap();
        let norms = path_norms(&path, 16);
        // Feature channel (index 1) is identically zero.
        assert_eq!(norms.sup_norm[1], 0.0);
        assert_eq!(norms.deriv_sup_norm[1], 0.0);
        assert_eq!(norms.deriv_bv[1], 0.0);
    }

    #[test]
    fn tent_path_norms_by_hand() {
        // Feature knots (0, 2, 0) unit spaced: slope +2 then -2.
        let s = series("time,a\n0,0\n1,2\n2,0", false);
        let path = build(Scheme::Linear, &s).unwrap();
        let norms = path_norms(&path, 32);
        assert_eq!(norms.sup_norm[1], 2.0);
        assert_eq!(norms.deriv_sup_norm[1], 2.0);
        assert_eq!(norms.deriv_bv[1], 4.0);
    }

    #[test]
    fn norms_scale_linearly_with_data() {
        let csv = "time,a,b\n0,1.5,\n0.6,,2\n2,0.25,-3\n3.1,4,0.5";
        let raw = parse_csv(csv).unwrap();
        let scaled = raw.scale_values(3.0);
        for scheme in Scheme::ALL {
            let n1 = path_norms(&build(scheme, &augment(&raw, true, true)).unwrap(), 16);
            let n3 = path_norms(&build(scheme, &augment(&scaled, true, true)).unwrap(), 16);
            for ch in 1..=2 {
                for (a, b) in [
                    (n1.sup_norm[ch], n3.sup_norm[ch]),
                    (n1.deriv_sup_norm[ch], n3.deriv_sup_norm[ch]),
                    (n1.deriv_bv[ch], n3.deriv_bv[ch]),
                ] {
                    if a == 0.0 {
                        assert_eq!(b, 0.0);
                    } else {
                        assert!(((b / a) - 3.0).abs() <= 1e-12, "{scheme:?} {a} {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn grid_estimates_converge_to_exact_norms() {
        let s = series("time,a\n0,0\n1,3\n2,-2\n3,1", false);
        for scheme in [Scheme::NaturalCubic, Scheme::HermiteBackward] {
            let path = build(scheme, &s).unwrap();
            let coarse = path_norms(&path, 10);
            let fine = path_norms(&path, 20);
            for ch in 0..path.out_dim() {
                let gap_c = (coarse.deriv_bv[ch] - coarse.grid_deriv_bv[ch]).abs();
                let gap_f = (fine.deriv_bv[ch] - fine.grid_deriv_bv[ch]).abs();
                assert!(
                    gap_f <= 0.5 * gap_c + 1e-12,
                    "{scheme:?} ch {ch}: {gap_c} -> {gap_f}"
                );
                assert!(coarse.grid_sup_norm[ch] <= coarse.sup_norm[ch] + 1e-12);
            }
        }
    }

    fn counterexample_pair() -> (RawSeries, RawSeries) {
        let x0 = 1.7;
        let x1 = RawSeries::from_options(
            vec![0.0, 1.0],
            vec![vec![Some(x0)], vec![Some(x0)]],
            vec!["a".into()],
        )
        .unwrap();
        let x2 = RawSeries::from_options(
            vec![0.0, 0.4, 1.0],
            vec![vec![Some(x0)], vec![Some(x0)], vec![Some(x0)]],
            vec!["a".into()],
        )
        .unwrap();
        (x1, x2)
    }

    #[test]
    fn constant_series_are_indistinguishable_without_intensity() {
        let (x1, x2) = counterexample_pair();
        for scheme in Scheme::ALL {
            let diff = uniqueness_probe(&x1, &x2, scheme, false, 101).unwrap();
            assert!(diff <= 1e-12, "{scheme:?}: {diff}");
        }
    }

    #[test]
    fn intensity_separates_the_counterexample() {
        let (x1, x2) = counterexample_pair();
        for scheme in [Scheme::Linear, Scheme::HermiteBackward, Scheme::Rectilinear] {
            let diff = uniqueness_probe(&x1, &x2, scheme, true, 101).unwrap();
            assert!(diff > 0.5, "{scheme:?}: {diff}");
        }
    }

    #[test]
    fn identical_series_have_zero_difference() {
        let (x1, _) = counterexample_pair();
        for scheme in Scheme::ALL {
            let diff = uniqueness_probe(&x1, &x1, scheme, true, 51).unwrap();
            assert_eq!(diff, 0.0, "{scheme:?}");
        }
    }

    #[test]
    fn uniqueness_probe_is_symmetric() {
        let (x1, x2) = counterexample_pair();
        let a = uniqueness_probe(&x1, &x2, Scheme::Linear, true, 77).unwrap();
        let b = uniqueness_probe(&x2, &x1, Scheme::Linear, true, 77).unwrap();
        assert_eq!(a, b);
    }

    fn irregular_series(seed: u64) -> AugmentedSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = synth::IrregularSpec {
            min_len: 6,
            max_len: 10,
            channels: 2,
            missing_fraction: 0.0,
            min_gap: 0.3,
            max_gap: 1.2,
        };
        augment(
            &synth::random_irregular_series(&mut rng, &spec),
            false,
            true,
        )
    }

    #[test]
    fn identity_reparameterisation_is_exact() {
        let s = irregular_series(4);
        let model = CdeModel::new(&ModelConfig::default(), s.out_dim(), 8);
        let positions: Vec<f64> = (0..s.num_knots()).map(|i| i as f64).collect();
        for scheme in Scheme::ALL {
            let dev = reparam_check(
                &model,
                &s,
                scheme,
                Parameterisation::UnitIndex,
                &positions,
                &SolveConfig::default(),
            )
            .unwrap();
            assert_eq!(dev, 0.0, "{scheme:?}");
        }
    }

    #[test]
    fn unit_vs_time_parameterisation_agrees_at_knots() {
        let s = irregular_series(11);
        let model = CdeModel::new(&ModelConfig::default(), s.out_dim(), 8);
        let dev = reparam_check(
            &model,
            &s,
            Scheme::Linear,
            Parameterisation::UnitIndex,
            s.base().timestamps(),
            &SolveConfig::default(),
        )
        .unwrap();
        assert!(dev <= 1e-2, "deviation {dev}");
    }

    #[test]
    fn affine_dilation_matches_within_solver_error() {
        let s = irregular_series(12);
        let model = CdeModel::new(&ModelConfig::default(), s.out_dim(), 8);
        let positions: Vec<f64> = (0..s.num_knots()).map(|i| 2.0 * i as f64).collect();
        let config = SolveConfig::default();
        for scheme in [Scheme::Linear, Scheme::HermiteBackward, Scheme::Rectilinear] {
            let path = build(scheme, &s).unwrap();
            let fwd = forward(&model, &path, &config, OutputMode::Sequence).unwrap();
            let scale = fwd
                .states
                .iter()
                .flatten()
                .fold(0.0_f64, |m, x| m.max(x.abs()));
            let dev = reparam_check(
                &model,
                &s,
                scheme,
                Parameterisation::UnitIndex,
                &positions,
                &config,
            )
            .unwrap();
            let bound = 10.0 * config.rtol * (1.0 + scale);
            assert!(dev <= bound, "{scheme:?}: {dev} vs {bound}");
        }
    }

    #[test]
    fn zero_field_nfe_tracks_forced_step_counts() {
        let dataset = synth::irregular_dataset(5, 10, 12, 2, 0.2, true);
        let mut model = CdeModel::new(&ModelConfig::default(), dataset.samples[0].out_dim(), 1);
        let mut params = model.params();
        let nf = params.tensors.len() - 2;
        for t in [nf - 2, nf - 1] {
            params.tensors[t].iter_mut().for_each(|x| *x = 0.0);
        }
        model.set_params(&params).unwrap();
        let rows = nfe_benchmark(
            &dataset,
            &Scheme::ALL,
            &model,
            &SolveConfig::default(),
            Task::BinaryClassification,
        )
        .unwrap();
        let nfe = |s: Scheme| rows.iter().find(|r| r.scheme == s).unwrap().mean_nfe;
        // Cost is dominated by forced step endpoints: rectilinear doubles
        // linear's knot count; the smooth schemes are cheapest.
        assert!(nfe(Scheme::Rectilinear) > nfe(Scheme::Linear));
        assert!(nfe(Scheme::Linear) > nfe(Scheme::HermiteBackward));
        assert!(nfe(Scheme::Linear) > nfe(Scheme::NaturalCubic));
    }
}
