//! Seeded synthetic data: random irregular series for property checks and
//! benchmarks, and a spiral-direction classification task for end-to-end
//! training runs.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::series::{augment, Dataset, Label, RawSeries};

/// Shape of a randomly generated irregular series.
#[derive(Debug, Clone, Copy)]
pub struct IrregularSpec {
    pub min_len: usize,
    pub max_len: usize,
    pub channels: usize,
    pub missing_fraction: f64,
    /// Bounds on the random time gaps t_{i+1} - t_i.
    pub min_gap: f64,
    pub max_gap: f64,
}

impl Default for IrregularSpec {
    fn default() -> Self {
        Self {
            min_len: 2,
            max_len: 50,
            channels: 2,
            missing_fraction: 0.3,
            min_gap: 0.1,
            max_gap: 1.5,
        }
    }
}

/// Random irregular series with strictly increasing times. Guarantees every
/// row has at least one observation and every channel at least two, so all
/// four control schemes accept the result.
pub fn random_irregular_series(rng: &mut ChaCha8Rng, spec: &IrregularSpec) -> RawSeries {
    let len = rng.gen_range(spec.min_len..=spec.max_len);
    let mut t = 0.0;
    let mut timestamps = Vec::with_capacity(len);
    for _ in 0..len {
        timestamps.push(t);
        t += rng.gen_range(spec.min_gap..spec.max_gap);
    }
    loop {
        let cells: Vec<Vec<Option<f64>>> = (0..len)
            .map(|_| {
                let mut row: Vec<Option<f64>> = (0..spec.channels)
                    .map(|_| {
                        (!rng.gen_bool(spec.missing_fraction)).then(|| rng.gen_range(-2.0..2.0))
                    })
                    .collect();
                if row.iter().all(Option::is_none) {
                    let j = rng.gen_range(0..spec.channels);
                    row[j] = Some(rng.gen_range(-2.0..2.0));
                }
                row
            })
            .collect();
        let per_channel_ok =
            (0..spec.channels).all(|j| cells.iter().filter(|row| row[j].is_some()).count() >= 2);
        if !per_channel_ok {
            continue;
        }
        let names = (0..spec.channels).map(|j| format!("ch{j}")).collect();
        return RawSeries::from_options(timestamps.clone(), cells, names).unwrap();
    }
}

/// A dataset of random irregular series with random binary labels, used by
/// the solver-cost benchmark.
pub fn irregular_dataset(
    seed: u64,
    n_series: usize,
    length: usize,
    channels: usize,
    missing_fraction: f64,
    include_intensity: bool,
) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = IrregularSpec {
        min_len: length,
        max_len: length,
        channels,
        missing_fraction,
        ..Default::default()
    };
    let mut samples = Vec::with_capacity(n_series);
    let mut labels = Vec::with_capacity(n_series);
    for _ in 0..n_series {
        let raw = random_irregular_series(&mut rng, &spec);
        samples.push(augment(&raw, include_intensity, true));
        labels.push(Label::Class(usize::from(rng.gen_bool(0.5))));
    }
    Dataset::new(samples, labels).unwrap()
}

/// Spiral-direction binary classification: each sample traces a growing
/// spiral clockwise or counter-clockwise, observed at irregular times.
pub fn spiral_dataset(
    seed: u64,
    n_samples: usize,
    min_len: usize,
    max_len: usize,
) -> (Vec<RawSeries>, Vec<Label>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut series = Vec::with_capacity(n_samples);
    let mut labels = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let clockwise = rng.gen_bool(0.5);
        let len = rng.gen_range(min_len..=max_len);
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        // Irregular subsampling of [0, 4π].
        let mut times: Vec<f64> = (0..len)
            .map(|_| rng.gen_range(0.0..4.0 * std::f64::consts::PI))
            .collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        while times.len() < 2 {
            times.push(times.last().copied().unwrap_or(0.0) + 1.0);
        }
        let cells: Vec<Vec<Option<f64>>> = times
            .iter()
            .map(|&t| {
                let theta = if clockwise { -(t + phase) } else { t + phase };
                let r = 0.5 + t / (4.0 * std::f64::consts::PI);
                vec![Some(r * theta.cos()), Some(r * theta.sin())]
            })
            .collect();
        let raw = RawSeries::from_options(times, cells, vec!["x".into(), "y".into()]).unwrap();
        series.push(raw);
        labels.push(Label::Class(usize::from(clockwise)));
    }
    (series, labels)
}

/// Assembles the spiral task into a split dataset (70/15/15 by default).
pub fn spiral_task(seed: u64, n_samples: usize) -> Dataset {
    let (series, labels) = spiral_dataset(seed, n_samples, 10, 20);
    let samples = series.iter().map(|raw| augment(raw, false, true)).collect();
    let dataset = Dataset::new(samples, labels).unwrap();
    crate::series::split(dataset, (0.70, 0.15, 0.15), seed ^ 0x5eed, true).unwrap()
}
