//! Datasets of labelled spectra: CSV I/O, a synthetic generator, stratified
//! splitting, minority replication, standardization and batching.
//!
//! Labels are `0` (healthy, majority) and `1` (frosted, minority).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::NumericArray;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: NumericArray,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(features: NumericArray, labels: Vec<u8>) -> Result<Self> {
        if features.rank() != 2 {
            return Err(Error::shape(
                "Dataset::new",
                format!("features must be [N, D], got {:?}", features.shape()),
            ));
        }
        if features.dim(0) != labels.len() {
            return Err(Error::shape(
                "Dataset::new",
                format!("{} feature rows for {} labels", features.dim(0), labels.len()),
            ));
        }
        if let Some(i) = labels.iter().position(|&l| l > 1) {
            return Err(Error::invalid(format!(
                "label {} of sample {i} is not 0 or 1",
                labels[i]
            )));
        }
        Ok(Self { features, labels })
    }

    pub fn features(&self) -> &NumericArray {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.dim(1)
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.labels.iter().filter(|&&l| l == 1).count();
        [self.labels.len() - ones, ones]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features.outer(i)
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let features = self.features.select_outer(indices)?;
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Ok(Self { features, labels })
    }

    pub fn with_features(&self, features: NumericArray) -> Result<Self> {
        Self::new(features, self.labels.clone())
    }

    /// Fails unless both classes are present.
    pub fn require_both_classes(&self, what: &str) -> Result<()> {
        let [n0, n1] = self.class_counts();
        if n0 == 0 || n1 == 0 {
            return Err(Error::invalid(format!(
                "{what} needs both classes, got {n0} negatives and {n1} positives"
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// CSV

fn parse_f64(field: &str) -> Option<f64> {
    field.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads `band_0, ..., band_{D-1}, label` rows. A first row that does not
/// parse as numbers is taken as a header.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let csv_err = |row: usize, msg: String| Error::Csv {
        path: path.to_path_buf(),
        row,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_err(0, e.to_string()))?;

    let mut width: Option<usize> = None;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(i + 1, e.to_string()))?;
        let row = record.position().map_or(i + 1, |p| p.line() as usize);
        if i == 0 && record.iter().any(|f| parse_f64(f).is_none()) {
            width = Some(record.len());
            continue;
        }
        match width {
            Some(w) if w != record.len() => {
                return Err(csv_err(row, format!("expected {w} columns, found {}", record.len())))
            }
            None => width = Some(record.len()),
            _ => {}
        }
        if record.len() < 2 {
            return Err(csv_err(row, "need at least one feature column and a label".into()));
        }
        let last = record.len() - 1;
        for (col, field) in record.iter().take(last).enumerate() {
            let v = parse_f64(field)
                .ok_or_else(|| csv_err(row, format!("column {col}: {field:?} is not a finite number")))?;
            data.push(v);
        }
        let label = match parse_f64(&record[last]) {
            Some(v) if v == 0.0 => 0,
            Some(v) if v == 1.0 => 1,
            _ => return Err(csv_err(row, format!("label {:?} is not 0 or 1", &record[last]))),
        };
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(csv_err(0, "no data rows".into()));
    }
    let dim = data.len() / labels.len();
    Dataset::new(NumericArray::new(vec![labels.len(), dim], data)?, labels)
}

/// Writes a header row and one line per sample. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let mut line = String::new();
    for b in 0..dataset.dim() {
        line.push_str(&format!("band_{b},"));
    }
    line.push_str("label\n");
    out.write_all(line.as_bytes())?;
    for i in 0..dataset.len() {
        line.clear();
        for v in dataset.row(i) {
            line.push_str(&format!("{v},"));
        }
        line.push_str(&format!("{}\n", dataset.labels[i]));
        out.write_all(line.as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Synthetic spectra

/// A Gaussian bump on the normalized band axis `[0, 1]`, with one amplitude
/// per class. Bumps whose amplitudes differ are the class signatures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralBump {
    pub center: f64,
    pub width: f64,
    pub amplitude: [f64; 2],
}

impl SpectralBump {
    fn at(&self, x: f64, class: usize) -> f64 {
        let z = (x - self.center) / self.width;
        self.amplitude[class] * (-0.5 * z * z).exp()
    }

    pub fn is_signature(&self) -> bool {
        self.amplitude[0] != self.amplitude[1]
    }
}

/// Parameters of the synthetic spectrum generator.
///
/// Each class has a smooth mean spectrum `baseline + sum of bumps`. Samples
/// add AR(1) noise along the band axis with lag-one correlation
/// `smoothness` and standard deviation `noise_scale`, and each bump's
/// amplitude varies per sample with standard deviation
/// `noise_scale * amplitude_jitter`. Each positive sample carries the
/// positive-class signature at a strength drawn uniformly from
/// `minority_severity`, where 0 is the negative spectrum and 1 the full
/// positive one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_per_class: Vec<usize>,
    pub dim: usize,
    pub baseline: f64,
    pub bumps: Vec<SpectralBump>,
    pub noise_scale: f64,
    pub smoothness: f64,
    pub amplitude_jitter: f64,
    pub minority_severity: [f64; 2],
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let bump = |center, width, a0, a1| SpectralBump {
            center,
            width,
            amplitude: [a0, a1],
        };
        Self {
            n_per_class: vec![940, 60],
            dim: 2151,
            baseline: 0.3,
            bumps: vec![
                bump(0.12, 0.04, 0.08, 0.08),
                bump(0.45, 0.12, 0.35, 0.35),
                bump(0.80, 0.08, 0.15, 0.15),
                // class signatures
                bump(0.30, 0.03, 0.00, 0.05),
                bump(0.62, 0.04, 0.04, 0.00),
            ],
            noise_scale: 0.01,
            smoothness: 0.9,
            amplitude_jitter: 0.0,
            minority_severity: [0.2, 1.0],
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_class.len() != 2 || self.n_per_class.iter().any(|&n| n == 0) {
            return Err(Error::Config(format!(
                "n_per_class must hold two positive counts, got {:?}",
                self.n_per_class
            )));
        }
        if self.dim == 0 {
            return Err(Error::Config("dim must be positive".into()));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Config(format!(
                "noise_scale must be >= 0, got {}",
                self.noise_scale
            )));
        }
        if !(self.amplitude_jitter >= 0.0 && self.amplitude_jitter.is_finite()) {
            return Err(Error::Config(format!(
                "amplitude_jitter must be >= 0, got {}",
                self.amplitude_jitter
            )));
        }
        let [lo, hi] = self.minority_severity;
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
            return Err(Error::Config(format!(
                "minority_severity must be a range lo <= hi with lo >= 0, got [{lo}, {hi}]"
            )));
        }
        if !(0.0..1.0).contains(&self.smoothness) {
            return Err(Error::Config(format!(
                "smoothness must be in [0, 1), got {}",
                self.smoothness
            )));
        }
        if let Some(b) = self.bumps.iter().find(|b| !(b.width > 0.0)) {
            return Err(Error::Config(format!("bump at {} has non-positive width", b.center)));
        }
        Ok(())
    }

    fn band_position(&self, band: usize) -> f64 {
        if self.dim == 1 {
            0.0
        } else {
            band as f64 / (self.dim - 1) as f64
        }
    }

    /// Noise-free spectrum of `class`.
    pub fn mean_spectrum(&self, class: usize) -> Vec<f64> {
        (0..self.dim)
            .map(|band| {
                let x = self.band_position(band);
                self.baseline + self.bumps.iter().map(|b| b.at(x, class)).sum::<f64>()
            })
            .collect()
    }

    /// Bands within one width of a signature bump's center.
    pub fn signature_bands(&self) -> Vec<usize> {
        (0..self.dim)
            .filter(|&band| {
                let x = self.band_position(band);
                self.bumps
                    .iter()
                    .any(|b| b.is_signature() && (x - b.center).abs() <= b.width)
            })
            .collect()
    }
}

/// Draws the dataset described by `spec`: all negatives first, then all positives.
pub fn synth_generate(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let total: usize = spec.n_per_class.iter().sum();
    let mut data = Vec::with_capacity(total * spec.dim);
    let mut labels = Vec::with_capacity(total);
    let rho = spec.smoothness;
    let innovation = (1.0 - rho * rho).sqrt();
    let jitter = spec.noise_scale * spec.amplitude_jitter;
    let shapes: Vec<Vec<f64>> = spec
        .bumps
        .iter()
        .map(|b| {
            let unit = SpectralBump {
                amplitude: [1.0, 1.0],
                ..b.clone()
            };
            (0..spec.dim).map(|band| unit.at(spec.band_position(band), 0)).collect()
        })
        .collect();
    let negative = spec.mean_spectrum(0);
    let shift: Vec<f64> = spec
        .mean_spectrum(1)
        .iter()
        .zip(&negative)
        .map(|(p, n)| p - n)
        .collect();
    let [lo, hi] = spec.minority_severity;
    let mut row = vec![0.0; spec.dim];
    for class in 0..2 {
        for _ in 0..spec.n_per_class[class] {
            row.copy_from_slice(&negative);
            if class == 1 {
                let severity = if lo < hi { rng.gen_range(lo..=hi) } else { lo };
                for (r, d) in row.iter_mut().zip(&shift) {
                    *r += severity * d;
                }
            }
            if jitter > 0.0 {
                for shape in &shapes {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    for (r, &v) in row.iter_mut().zip(shape) {
                        *r += jitter * z * v;
                    }
                }
            }
            let mut e: f64 = StandardNormal.sample(&mut rng);
            for (band, r) in row.iter().enumerate() {
                if band > 0 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    e = rho * e + innovation * z;
                }
                data.push(r + spec.noise_scale * e);
            }
            labels.push(class as u8);
        }
    }
    Dataset::new(NumericArray::new(vec![total, spec.dim], data)?, labels)
}

// ---------------------------------------------------------------------------
// Splitting, replication, standardization, batching

/// Per-class split: `floor(count * train_fraction)` samples of each class go
/// to train, the rest to test. Classes are shuffled by `seed`; both halves
/// keep the original row order.
pub fn stratified_split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..2u8 {
        let mut idx: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.labels[i] == class).collect();
        if idx.len() < 2 {
            return Err(Error::invalid(format!(
                "class {class} has {} samples; a split needs at least 2",
                idx.len()
            )));
        }
        // the epsilon keeps exact products such as 940 * 0.7 from rounding down
        let n_train = (idx.len() as f64 * train_fraction + 1e-9).floor() as usize;
        if n_train == 0 || n_train == idx.len() {
            return Err(Error::invalid(format!(
                "train fraction {train_fraction} leaves class {class} with {n_train} of {} samples in train",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((dataset.subset(&train)?, dataset.subset(&test)?))
}

/// Appends whole copies of minority rows, cycling through them in order,
/// until `majority / minority <= max_ratio`.
pub fn replicate_minority(train: &Dataset, max_ratio: f64) -> Result<Dataset> {
    if !(max_ratio >= 1.0 && max_ratio.is_finite()) {
        return Err(Error::invalid(format!("max_ratio must be >= 1, got {max_ratio}")));
    }
    train.require_both_classes("replication")?;
    let counts = train.class_counts();
    let (minority, majority) = if counts[1] < counts[0] {
        (1u8, counts[0])
    } else {
        (0u8, counts[1])
    };
    let have = counts[minority as usize];
    let target = (majority as f64 / max_ratio).ceil() as usize;
    if have >= target {
        return Ok(train.clone());
    }
    let minority_rows: Vec<usize> = (0..train.len()).filter(|&i| train.labels[i] == minority).collect();
    let mut indices: Vec<usize> = (0..train.len()).collect();
    indices.extend(minority_rows.iter().cycle().take(target - have));
    train.subset(&indices)
}

/// Per-band z-score fitted on one dataset and applied to others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population statistics; bands with (near) zero spread get unit scale.
    pub fn fit(features: &NumericArray) -> Self {
        let (n, d) = (features.dim(0), features.dim(1));
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, &v) in mean.iter_mut().zip(features.outer(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for i in 0..n {
            for ((s, &v), &m) in var.iter_mut().zip(features.outer(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, features: &NumericArray) -> Result<NumericArray> {
        if features.rank() != 2 || features.dim(1) != self.dim() {
            return Err(Error::shape(
                "Standardizer::transform",
                format!("features {:?} vs {} fitted bands", features.shape(), self.dim()),
            ));
        }
        let d = self.dim();
        let mut data = features.data().to_vec();
        for row in data.chunks_exact_mut(d) {
            for ((v, &m), &s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        NumericArray::new(features.shape().to_vec(), data)
    }

    pub fn transform_dataset(&self, dataset: &Dataset) -> Result<Dataset> {
        dataset.with_features(self.transform(&dataset.features)?)
    }
}

/// Shuffled index batches for one epoch. The order depends only on
/// `(seed, epoch)`; the last batch may be short.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch_size must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

pub fn batch_iter(dataset: &Dataset, batch_size: usize, seed: u64, epoch: u64) -> impl Iterator<Item = Dataset> + '_ {
    batch_indices(dataset.len(), batch_size, seed, epoch)
        .into_iter()
        .map(move |idx| dataset.subset(&idx).expect("batch indices are in range"))
}
