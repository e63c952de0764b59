//! Irregular time series: parsing, missing-data masks, forward fill,
//! observational intensity, normalization, and dataset splits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::format_f64;

/// An irregularly sampled, partially observed multivariate series.
///
/// `values[i][j]` is only meaningful where `mask[i][j]` is true; masked-out
/// cells hold a sentinel (0.0) and are never read by downstream numerics.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    timestamps: Vec<f64>,
    values: Vec<Vec<f64>>,
    mask: Vec<Vec<bool>>,
    channel_names: Vec<String>,
}

impl RawSeries {
    pub fn new(
        timestamps: Vec<f64>,
        values: Vec<Vec<f64>>,
        mask: Vec<Vec<bool>>,
        channel_names: Vec<String>,
    ) -> Result<Self> {
        if timestamps.len() < 2 {
            return Err(Error::TooShort);
        }
        if values.len() != timestamps.len() || mask.len() != timestamps.len() {
            return Err(Error::InvalidSeries(
                "timestamps, values and mask must have equal length".into(),
            ));
        }
        let v = channel_names.len();
        for (i, (row, mrow)) in values.iter().zip(&mask).enumerate() {
            if row.len() != v || mrow.len() != v {
                return Err(Error::InvalidSeries(format!("row {i} has wrong width")));
            }
            if !mrow.iter().any(|&m| m) {
                return Err(Error::InvalidSeries(format!(
                    "row {i} has no observed channel"
                )));
            }
            for (j, (&x, &m)) in row.iter().zip(mrow).enumerate() {
                if m && !x.is_finite() {
                    return Err(Error::InvalidSeries(format!(
                        "non-finite observed value at row {i}, channel {j}"
                    )));
                }
            }
        }
        if timestamps.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidSeries("timestamps must be finite".into()));
        }
        for w in timestamps.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidSeries(
                    "timestamps must be strictly increasing".into(),
                ));
            }
        }
        // Masked-out cells carry a fixed sentinel so accidental reads are at
        // least deterministic.
        let mut values = values;
        for (row, mrow) in values.iter_mut().zip(&mask) {
            for (x, &m) in row.iter_mut().zip(mrow) {
                if !m {
                    *x = 0.0;
                }
            }
        }
        Ok(Self {
            timestamps,
            values,
            mask,
            channel_names,
        })
    }

    /// Builds a series from optional cells; `None` marks missing data.
    pub fn from_options(
        timestamps: Vec<f64>,
        cells: Vec<Vec<Option<f64>>>,
        channel_names: Vec<String>,
    ) -> Result<Self> {
        let values = cells
            .iter()
            .map(|row| row.iter().map(|c| c.unwrap_or(0.0)).collect())
            .collect();
        let mask = cells
            .iter()
            .map(|row| row.iter().map(|c| c.is_some()).collect())
            .collect();
        Self::new(timestamps, values, mask, channel_names)
    }

    /// Number of observation rows, n + 1.
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction guarantees at least two rows
    }

    pub fn num_channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn observed(&self, row: usize, channel: usize) -> bool {
        self.mask[row][channel]
    }

    /// Observed value at a cell, `None` when the cell is missing.
    pub fn value(&self, row: usize, channel: usize) -> Option<f64> {
        self.mask[row][channel].then(|| self.values[row][channel])
    }

    pub fn mask(&self) -> &[Vec<bool>] {
        &self.mask
    }

    /// Inter-observation gaps t_{i+1} - t_i.
    pub fn intervals(&self) -> Vec<f64> {
        self.timestamps.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Returns a copy with `epsilon` added to every observed cell of `row`.
    pub fn perturb_row(&self, row: usize, epsilon: f64) -> Result<Self> {
        if row >= self.len() {
            return Err(Error::BadIndex(row));
        }
        let mut out = self.clone();
        for j in 0..self.num_channels() {
            if out.mask[row][j] {
                out.values[row][j] += epsilon;
            }
        }
        Ok(out)
    }

    /// Returns a copy with every observed cell scaled by `alpha`.
    pub fn scale_values(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        for (row, mrow) in out.values.iter_mut().zip(&out.mask) {
            for (x, &m) in row.iter_mut().zip(mrow) {
                if m {
                    *x *= alpha;
                }
            }
        }
        out
    }

    /// Serializes to the CSV interchange format; missing cells are empty.
    pub fn emit_csv(&self) -> String {
        let mut out = String::from("time");
        for name in &self.channel_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(&format_f64(self.timestamps[i]));
            for j in 0..self.num_channels() {
                out.push(',');
                if self.mask[i][j] {
                    out.push_str(&format_f64(self.values[i][j]));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Parses the CSV interchange format: header `time,<ch1>,...,<chv>`, one row
/// per observation time, empty cells meaning missing.
pub fn parse_csv(text: &str) -> Result<RawSeries> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or(Error::TooShort)?;
    let mut cols = header.split(',').map(str::trim);
    match cols.next() {
        Some("time") => {}
        _ => {
            return Err(Error::Parse {
                row: 0,
                col: Some(0),
                message: "header must start with `time`".into(),
            })
        }
    }
    let channel_names: Vec<String> = cols.map(String::from).collect();
    if channel_names.is_empty() {
        return Err(Error::Parse {
            row: 0,
            col: None,
            message: "header names no channels".into(),
        });
    }

    let mut timestamps = Vec::new();
    let mut cells: Vec<Vec<Option<f64>>> = Vec::new();
    for (idx, line) in lines.enumerate() {
        let row = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != channel_names.len() + 1 {
            return Err(Error::Parse {
                row,
                col: None,
                message: format!(
                    "expected {} fields, found {}",
                    channel_names.len() + 1,
                    fields.len()
                ),
            });
        }
        let t: f64 = fields[0].parse().map_err(|_| Error::Parse {
            row,
            col: Some(0),
            message: format!("invalid time `{}`", fields[0]),
        })?;
        if let Some(&prev) = timestamps.last() {
            if !t.is_finite() || t <= prev {
                return Err(Error::Parse {
                    row,
                    col: Some(0),
                    message: format!("time {t} does not increase past {prev}"),
                });
            }
        }
        let mut row_cells = Vec::with_capacity(channel_names.len());
        for (j, field) in fields[1..].iter().enumerate() {
            if field.is_empty() {
                row_cells.push(None);
            } else {
                let x: f64 = field.parse().map_err(|_| Error::Parse {
                    row,
                    col: Some(j + 1),
                    message: format!("invalid value `{field}`"),
                })?;
                row_cells.push(Some(x));
            }
        }
        timestamps.push(t);
        cells.push(row_cells);
    }
    if timestamps.len() < 2 {
        return Err(Error::TooShort);
    }
    RawSeries::from_options(timestamps, cells, channel_names)
}

/// A series augmented with forward fill and per-channel observation counts,
/// plus the channel-layout flags consumed by control-path construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSeries {
    base: RawSeries,
    filled: Vec<Vec<f64>>,
    intensity: Vec<Vec<u32>>,
    include_time: bool,
    include_intensity: bool,
}

/// Fill value for channels with no observation yet. Data is expected to be
/// normalized before augmentation, which makes this the train-split mean.
pub const LEADING_FILL: f64 = 0.0;

/// Computes forward fill and cumulative observation counts.
pub fn augment(raw: &RawSeries, include_intensity: bool, include_time: bool) -> AugmentedSeries {
    let n = raw.len();
    let v = raw.num_channels();
    let mut filled = vec![vec![LEADING_FILL; v]; n];
    let mut intensity = vec![vec![0u32; v]; n];
    for j in 0..v {
        let mut last: Option<f64> = None;
        let mut count = 0u32;
        for i in 0..n {
            if let Some(x) = raw.value(i, j) {
                last = Some(x);
                count += 1;
            }
            filled[i][j] = last.unwrap_or(LEADING_FILL);
            intensity[i][j] = count;
        }
    }
    AugmentedSeries {
        base: raw.clone(),
        filled,
        intensity,
        include_time,
        include_intensity,
    }
}

impl AugmentedSeries {
    pub fn base(&self) -> &RawSeries {
        &self.base
    }

    pub fn num_knots(&self) -> usize {
        self.base.len()
    }

    pub fn include_time(&self) -> bool {
        self.include_time
    }

    pub fn include_intensity(&self) -> bool {
        self.include_intensity
    }

    pub fn filled_value(&self, row: usize, channel: usize) -> f64 {
        self.filled[row][channel]
    }

    pub fn intensity(&self, row: usize, channel: usize) -> u32 {
        self.intensity[row][channel]
    }

    /// Output dimension of a control path built from this series.
    pub fn out_dim(&self) -> usize {
        let v = self.base.num_channels();
        usize::from(self.include_time) + v + if self.include_intensity { v } else { 0 }
    }

    /// The knot vector ([t_i,] x̃_i [, c_i]) emitted by control paths.
    pub fn knot_vector(&self, i: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.out_dim());
        if self.include_time {
            out.push(self.base.timestamps()[i]);
        }
        out.extend_from_slice(&self.filled[i]);
        if self.include_intensity {
            out.extend(self.intensity[i].iter().map(|&c| f64::from(c)));
        }
        out
    }
}

/// Per-sample target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Class(usize),
    Value(Vec<f64>),
}

impl Label {
    /// Target vector fed to the loss.
    pub fn as_target(&self) -> Vec<f64> {
        match self {
            Label::Class(c) => vec![*c as f64],
            Label::Value(v) => v.clone(),
        }
    }

    pub fn class(&self) -> Option<usize> {
        match self {
            Label::Class(c) => Some(*c),
            Label::Value(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
}

/// A collection of augmented samples with labels and split tags.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<AugmentedSeries>,
    pub labels: Vec<Label>,
    pub split_assignment: Vec<Split>,
    pub normalization_stats: Option<Vec<ChannelStats>>,
}

impl Dataset {
    pub fn new(samples: Vec<AugmentedSeries>, labels: Vec<Label>) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} samples vs {} labels",
                samples.len(),
                labels.len()
            )));
        }
        let split_assignment = vec![Split::Train; samples.len()];
        Ok(Self {
            samples,
            labels,
            split_assignment,
            normalization_stats: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.split_assignment[i] == split)
            .collect()
    }
}

/// Deterministic, optionally label-stratified split assignment.
///
/// Procedure (per stratum, the whole set when unstratified): shuffle the
/// indices with a ChaCha8 stream seeded by `seed`, compute per-split counts
/// by largest remainder (ties resolved in train, val, test order), then
/// assign the shuffled indices in that order.
pub fn split(
    mut dataset: Dataset,
    ratios: (f64, f64, f64),
    seed: u64,
    stratify_labels: bool,
) -> Result<Dataset> {
    let (rt, rv, rs) = ratios;
    if (rt + rv + rs - 1.0).abs() > 1e-9 || rt < 0.0 || rv < 0.0 || rs < 0.0 {
        return Err(Error::BadRatios(rt, rv, rs));
    }
    let mut strata: Vec<Vec<usize>> = if stratify_labels {
        let mut classes: Vec<(Option<usize>, Vec<usize>)> = Vec::new();
        for i in 0..dataset.len() {
            let key = dataset.labels[i].class();
            match classes.iter_mut().find(|(k, _)| *k == key) {
                Some((_, v)) => v.push(i),
                None => classes.push((key, vec![i])),
            }
        }
        classes.sort_by_key(|(k, _)| *k);
        classes.into_iter().map(|(_, v)| v).collect()
    } else {
        vec![(0..dataset.len()).collect()]
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for stratum in &mut strata {
        stratum.shuffle(&mut rng);
        let counts = largest_remainder(stratum.len(), [rt, rv, rs]);
        let mut cursor = 0usize;
        for (split, count) in [Split::Train, Split::Val, Split::Test]
            .into_iter()
            .zip(counts)
        {
            for &idx in &stratum[cursor..cursor + count] {
                dataset.split_assignment[idx] = split;
            }
            cursor += count;
        }
    }
    Ok(dataset)
}

/// Largest-remainder apportionment of `n` items into three buckets.
fn largest_remainder(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|&e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    // Ties broken by bucket order: train before val before test.
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for k in 0..(n - assigned) {
        counts[order[k % 3]] += 1;
    }
    [counts[0], counts[1], counts[2]]
}

/// Standardizes every channel with train-split statistics.
///
/// Mean and (population) standard deviation are computed over observed cells
/// of the train split only and applied identically to every split. Channels
/// with std below 1e-12 are only centered. Forward fill is recomputed from
/// the transformed values, so leading gaps hold 0 — the train-split mean in
/// normalized units.
pub fn normalize(dataset: Dataset) -> Result<Dataset> {
    let train = dataset.indices_of(Split::Train);
    if train.is_empty() {
        return Err(Error::EmptySplit);
    }
    let v = dataset.samples[0].base().num_channels();
    let mut sums = vec![0.0_f64; v];
    let mut counts = vec![0usize; v];
    for &i in &train {
        let base = dataset.samples[i].base();
        for row in 0..base.len() {
            for j in 0..v {
                if let Some(x) = base.value(row, j) {
                    sums[j] += x;
                    counts[j] += 1;
                }
            }
        }
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let mut sq = vec![0.0_f64; v];
    for &i in &train {
        let base = dataset.samples[i].base();
        for row in 0..base.len() {
            for j in 0..v {
                if let Some(x) = base.value(row, j) {
                    sq[j] += (x - means[j]) * (x - means[j]);
                }
            }
        }
    }
    let stds: Vec<f64> = sq
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { (s / c as f64).sqrt() } else { 0.0 })
        .collect();

    let stats: Vec<ChannelStats> = means
        .iter()
        .zip(&stds)
        .map(|(&mean, &std)| ChannelStats { mean, std })
        .collect();

    let mut out = dataset;
    for sample in &mut out.samples {
        let base = sample.base();
        let mut cells: Vec<Vec<Option<f64>>> = Vec::with_capacity(base.len());
        for row in 0..base.len() {
            cells.push(
                (0..v)
                    .map(|j| {
                        base.value(row, j).map(|x| {
                            let centered = x - stats[j].mean;
                            if stats[j].std < 1e-12 {
                                centered
                            } else {
                                centered / stats[j].std
                            }
                        })
                    })
                    .collect(),
            );
        }
        let raw = RawSeries::from_options(
            base.timestamps().to_vec(),
            cells,
            base.channel_names().to_vec(),
        )?;
        *sample = augment(&raw, sample.include_intensity(), sample.include_time());
    }
    out.normalization_stats = Some(stats);
    Ok(out)
}

/// One entry of a dataset manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: String,
    pub label: Label,
    pub split: Split,
}

/// JSON manifest listing sample files, labels, and split tags.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub samples: Vec<ManifestEntry>,
}

impl Manifest {
    /// Loads every sample relative to the manifest's directory.
    pub fn load_dataset(
        manifest_path: &std::path::Path,
        include_intensity: bool,
        include_time: bool,
    ) -> Result<Dataset> {
        let text = std::fs::read_to_string(manifest_path)?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let dir = manifest_path.parent().unwrap_or(std::path::Path::new("."));
        let mut samples = Vec::with_capacity(manifest.samples.len());
        let mut labels = Vec::with_capacity(manifest.samples.len());
        let mut splits = Vec::with_capacity(manifest.samples.len());
        for entry in &manifest.samples {
            let raw = parse_csv(&std::fs::read_to_string(dir.join(&entry.path))?)?;
            samples.push(augment(&raw, include_intensity, include_time));
            labels.push(entry.label.clone());
            splits.push(entry.split);
        }
        let mut dataset = Dataset::new(samples, labels)?;
        dataset.split_assignment = splits;
        Ok(dataset)
    }
}
