//! Experiment harness: data preparation, the training loop with per-epoch
//! cost updates, evaluation, the loss-mode ablation grid and the KNN
//! baseline, plus JSON and text reports.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{save_checkpoint, Checkpoint};
use crate::data::{self, Dataset, Standardizer, SynthSpec};
use crate::error::{Error, Result};
use crate::knn;
use crate::loss::{self, CostWeights, INITIAL_R1};
use crate::metrics::{confusion, predict_labels, ConfusionMatrix, MetricSummary};
use crate::model::{build_model, ArchitectureConfig, ModelParams};
use crate::optim::{adam_step, lr_at_epoch, AdamState, TrainConfig};

/// Rows per chunk when predicting whole datasets in eval mode.
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    PlainCe,
    AlphaOnly,
    ROnly,
    FullCsbl,
}

impl LossMode {
    /// Ablation order: Baseline, +alpha, +R, CSBL.
    pub const ALL: [LossMode; 4] = [
        LossMode::PlainCe,
        LossMode::AlphaOnly,
        LossMode::ROnly,
        LossMode::FullCsbl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LossMode::PlainCe => "plain_ce",
            LossMode::AlphaOnly => "alpha_only",
            LossMode::ROnly => "r_only",
            LossMode::FullCsbl => "full_csbl",
        }
    }

    pub fn table_label(self) -> &'static str {
        match self {
            LossMode::PlainCe => "Baseline",
            LossMode::AlphaOnly => "+α",
            LossMode::ROnly => "+R",
            LossMode::FullCsbl => "CSBL",
        }
    }

    fn uses_alpha(self) -> bool {
        matches!(self, LossMode::AlphaOnly | LossMode::FullCsbl)
    }

    fn uses_r(self) -> bool {
        matches!(self, LossMode::ROnly | LossMode::FullCsbl)
    }
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ce" | "plain_ce" => Ok(LossMode::PlainCe),
            "alpha" | "alpha_only" => Ok(LossMode::AlphaOnly),
            "r" | "r_only" => Ok(LossMode::ROnly),
            "csbl" | "full_csbl" => Ok(LossMode::FullCsbl),
            other => Err(Error::invalid(format!(
                "unknown loss mode {other:?} (expected ce, alpha, r or csbl)"
            ))),
        }
    }
}

/// How the per-class weights are chosen during training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weighting {
    Mode(LossMode),
    /// Fixed weights for every epoch, with no `R` updates.
    Pinned(CostWeights),
}

/// Class counts that the fixed factor `alpha` is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaCounts {
    /// The training split as drawn, before minority replication.
    Split,
    /// The training set after minority replication.
    Replicated,
}

/// Everything that defines a run. Serialized into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub arch: ArchitectureConfig,
    pub synth: SynthSpec,
    pub loss_mode: LossMode,
    pub max_ratio: f64,
    pub alpha_counts: AlphaCounts,
    pub standardize: bool,
    pub train_fraction: f64,
    pub knn_k: usize,
    /// CSV input; the synthetic generator is used when absent.
    pub data: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            arch: ArchitectureConfig::default(),
            synth: SynthSpec::default(),
            loss_mode: LossMode::FullCsbl,
            max_ratio: 4.0,
            alpha_counts: AlphaCounts::Split,
            standardize: true,
            train_fraction: 0.7,
            knn_k: knn::DEFAULT_K,
            data: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Desk,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            other => Err(Error::invalid(format!("unknown preset {other:?} (expected desk)"))),
        }
    }
}

impl ExperimentConfig {
    /// Downsized settings: 256 bands, 150 epochs with a decay every 30.
    /// The smaller input needs smaller pooling windows to keep every stage
    /// length positive.
    pub fn desk() -> Self {
        let mut cfg = Self::default();
        cfg.apply_preset(Preset::Desk);
        cfg
    }

    pub fn apply_preset(&mut self, preset: Preset) {
        match preset {
            Preset::Desk => {
                self.arch.input_length = 256;
                self.arch.conv_filters = vec![8, 8, 8];
                self.arch.pool_windows = vec![4, 3, 2];
                self.synth.dim = 256;
                self.train.epochs = 150;
                self.train.batch_size = 32;
                self.train.lr_decay_every = 50;
            }
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.arch.validate()?;
        if self.arch.num_classes != 2 {
            return Err(Error::Config(format!(
                "num_classes must be 2 for binary detection, got {}",
                self.arch.num_classes
            )));
        }
        if !(self.max_ratio >= 1.0 && self.max_ratio.is_finite()) {
            return Err(Error::Config(format!("max_ratio must be >= 1, got {}", self.max_ratio)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must be in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.data.is_none() {
            self.synth.validate()?;
            if self.synth.dim != self.arch.input_length {
                return Err(Error::Config(format!(
                    "synthetic dim {} does not match input_length {}",
                    self.synth.dim, self.arch.input_length
                )));
            }
        }
        Ok(())
    }

    /// Reads the CSV named by `data`, or generates the synthetic dataset.
    pub fn load_dataset(&self) -> Result<Dataset> {
        match &self.data {
            Some(path) => data::load_csv(path),
            None => data::synth_generate(&self.synth),
        }
    }
}

/// Seeds for the independent random streams of one run.
fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const SPLIT_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const SHUFFLE_STREAM: u64 = 3;

/// Split, standardized and replicated views of one dataset.
#[derive(Debug, Clone)]
pub struct PreparedData {
    /// Training split before replication, standardized.
    pub train: Dataset,
    /// Training split after minority replication, standardized.
    pub train_fit: Dataset,
    pub test: Dataset,
    /// Test split as loaded, before standardization.
    pub test_raw: Dataset,
    pub standardizer: Option<Standardizer>,
}

pub fn prepare_data(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<PreparedData> {
    if dataset.dim() != cfg.arch.input_length {
        return Err(Error::shape(
            "prepare_data",
            format!(
                "dataset has {} bands, input_length is {}",
                dataset.dim(),
                cfg.arch.input_length
            ),
        ));
    }
    let (train_raw, test_raw) =
        data::stratified_split(dataset, cfg.train_fraction, derive_seed(cfg.train.seed, SPLIT_STREAM))?;
    let standardizer = cfg.standardize.then(|| Standardizer::fit(train_raw.features()));
    let scale = |d: &Dataset| match &standardizer {
        Some(s) => s.transform_dataset(d),
        None => Ok(d.clone()),
    };
    let train = scale(&train_raw)?;
    let test = scale(&test_raw)?;
    let train_fit = data::replicate_minority(&train, cfg.max_ratio)?;
    Ok(PreparedData {
        train,
        train_fit,
        test,
        test_raw,
        standardizer,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub negatives: usize,
    pub positives: usize,
}

impl From<[usize; 2]> for ClassCounts {
    fn from(c: [usize; 2]) -> Self {
        Self {
            negatives: c[0],
            positives: c[1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub train: ClassCounts,
    pub train_replicated: ClassCounts,
    pub test: ClassCounts,
}

impl SplitSummary {
    fn of(p: &PreparedData) -> Self {
        Self {
            train: p.train.class_counts().into(),
            train_replicated: p.train_fit.class_counts().into(),
            test: p.test.class_counts().into(),
        }
    }
}

/// One line of the training trajectory. `r1`, `w0` and `w1` are the values
/// used during the epoch; `train_confusion` is measured after it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub r1: f64,
    pub w0: f64,
    pub w1: f64,
    pub train_confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub run_id: String,
    pub method: String,
    pub loss_mode: Option<LossMode>,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub split: SplitSummary,
    /// Fixed class factors.
    pub alpha: Option<[f64; 2]>,
    pub epochs: Vec<EpochLog>,
    pub test: MetricSummary,
    pub wall_clock_seconds: f64,
}

pub struct TrainOutcome {
    pub report: ExperimentReport,
    pub checkpoint: Checkpoint,
    pub prepared: PreparedData,
}

fn evaluate(params: &ModelParams, set: &Dataset) -> Result<ConfusionMatrix> {
    let probs = params.predict_proba(set.features(), EVAL_CHUNK)?;
    confusion(&predict_labels(&probs)?, set.labels())
}

/// Trains one network on `dataset` and evaluates it on the held-out split.
pub fn train_run(cfg: &ExperimentConfig, dataset: &Dataset, weighting: Weighting) -> Result<TrainOutcome> {
    let started = Instant::now();
    cfg.validate()?;
    let prepared = prepare_data(cfg, dataset)?;
    let t = &cfg.train;
    let mode = match weighting {
        Weighting::Mode(m) => Some(m),
        Weighting::Pinned(_) => None,
    };

    let counts = match cfg.alpha_counts {
        AlphaCounts::Split => prepared.train.class_counts(),
        AlphaCounts::Replicated => prepared.train_fit.class_counts(),
    };
    let alpha = loss::compute_alpha(&counts, t.c)?;
    let alpha = [alpha[0], alpha[1]];
    let mut r1 = INITIAL_R1;

    let mut params = build_model(&cfg.arch, derive_seed(t.seed, INIT_STREAM))?;
    let mut adam = AdamState::new(params.learnable());
    let shuffle_seed = derive_seed(t.seed, SHUFFLE_STREAM);
    let fit = &prepared.train_fit;
    let mut log = Vec::with_capacity(t.epochs);

    for epoch in 0..t.epochs {
        let weights = match weighting {
            Weighting::Pinned(w) => w,
            Weighting::Mode(LossMode::PlainCe) => CostWeights::unit(),
            Weighting::Mode(m) => {
                let a = if m.uses_alpha() { alpha } else { [1.0, 1.0] };
                let r = if m.uses_r() { r1 } else { 0.0 };
                CostWeights::new(a, r, t.c)?
            }
        };
        let lr = lr_at_epoch(t, epoch);
        let mut loss_sum = 0.0;
        for batch in data::batch_iter(fit, t.batch_size, shuffle_seed, epoch as u64) {
            let (probs, cache) = params.forward_train(batch.features())?;
            let p1 = loss::positive_column(&probs);
            let (batch_loss, d_logits) = if mode == Some(LossMode::PlainCe) {
                (
                    loss::cross_entropy(&p1, batch.labels())?,
                    loss::cross_entropy_logit_grad(&probs, batch.labels())?,
                )
            } else {
                (
                    loss::csbl_loss(&p1, batch.labels(), &weights)?.loss,
                    loss::csbl_logit_grad(&probs, batch.labels(), &weights)?,
                )
            };
            loss_sum += batch_loss * batch.len() as f64;
            let grads = params.backward(&cache, &d_logits)?;
            let grads = grads.arrays();
            adam_step(&mut params.learnable_mut(), &grads, &mut adam, lr, t)?;
        }
        let train_confusion = evaluate(&params, &prepared.train)?;
        log.push(EpochLog {
            epoch,
            lr,
            mean_loss: loss_sum / fit.len() as f64,
            r1: weights.r[1],
            w0: weights.w[0],
            w1: weights.w[1],
            train_confusion,
        });
        r1 = loss::update_r(&train_confusion, r1)[1];
        log::debug!(
            "epoch {epoch}: loss {:.6} r1 {:.4} train {:?}",
            loss_sum / fit.len() as f64,
            weights.r[1],
            train_confusion
        );
    }

    let test = MetricSummary::from_confusion(evaluate(&params, &prepared.test)?)?;
    let label = mode.map_or("pinned", LossMode::as_str);
    let report = ExperimentReport {
        run_id: format!("cnn-{label}-seed{}", t.seed),
        method: "cnn".into(),
        loss_mode: mode,
        seed: t.seed,
        config: cfg.clone(),
        split: SplitSummary::of(&prepared),
        alpha: Some(alpha),
        epochs: log,
        test,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    let checkpoint = Checkpoint {
        params,
        standardizer: prepared.standardizer.clone(),
    };
    Ok(TrainOutcome {
        report,
        checkpoint,
        prepared,
    })
}

/// KNN on the same split and standardization as a network run with the same seed.
pub fn baseline_run(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<ExperimentReport> {
    let started = Instant::now();
    cfg.validate()?;
    let prepared = prepare_data(cfg, dataset)?;
    let model = knn::knn_fit(&prepared.train, cfg.knn_k)?;
    let predicted = model.predict(prepared.test.features())?;
    let test = MetricSummary::from_confusion(confusion(&predicted, prepared.test.labels())?)?;
    Ok(ExperimentReport {
        run_id: format!("knn-k{}-seed{}", cfg.knn_k, cfg.train.seed),
        method: "knn".into(),
        loss_mode: None,
        seed: cfg.train.seed,
        config: cfg.clone(),
        split: SplitSummary::of(&prepared),
        alpha: None,
        epochs: Vec::new(),
        test,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    pub samples: usize,
    pub metrics: MetricSummary,
}

/// Evaluates a saved network on a CSV dataset, applying the standardizer
/// stored with it.
pub fn eval_checkpoint(checkpoint: &Checkpoint, dataset: &Dataset) -> Result<MetricSummary> {
    let params = &checkpoint.params;
    if dataset.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty dataset"));
    }
    if dataset.dim() != params.config.input_length {
        return Err(Error::shape(
            "eval",
            format!(
                "dataset has {} bands, the checkpoint expects {}",
                dataset.dim(),
                params.config.input_length
            ),
        ));
    }
    let set = match &checkpoint.standardizer {
        Some(s) => s.transform_dataset(dataset)?,
        None => dataset.clone(),
    };
    MetricSummary::from_confusion(evaluate(params, &set)?)
}

// ---------------------------------------------------------------------------
// Ablation

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<&MetricSummary> for MetricValues {
    fn from(m: &MetricSummary) -> Self {
        Self {
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub metrics: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub loss_mode: LossMode,
    pub median: MetricValues,
    pub per_seed: Vec<SeedResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, mode: LossMode) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.loss_mode == mode)
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub struct AblationOutcome {
    pub table: AblationTable,
    /// Mode-major, then seed order.
    pub runs: Vec<ExperimentReport>,
}

/// Trains every loss mode for every seed. Independent cells run on up to
/// `threads` threads; results do not depend on scheduling.
pub fn run_ablation(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    seeds: &[u64],
    threads: usize,
) -> Result<AblationOutcome> {
    if seeds.is_empty() {
        return Err(Error::invalid("ablation needs at least one seed"));
    }
    cfg.validate()?;
    let cells: Vec<(LossMode, u64)> = LossMode::ALL
        .iter()
        .flat_map(|&m| seeds.iter().map(move |&s| (m, s)))
        .collect();
    let run_cell = |&(mode, seed): &(LossMode, u64)| -> Result<ExperimentReport> {
        let mut c = cfg.clone();
        c.loss_mode = mode;
        c.train.seed = seed;
        log::info!("ablation cell {mode} seed {seed}");
        Ok(train_run(&c, dataset, Weighting::Mode(mode))?.report)
    };
    let threads = threads.clamp(1, cells.len());
    let mut results: Vec<Option<Result<ExperimentReport>>> = (0..cells.len()).map(|_| None).collect();
    if threads == 1 {
        for (slot, cell) in results.iter_mut().zip(&cells) {
            *slot = Some(run_cell(cell));
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let done = std::sync::Mutex::new(&mut results);
        std::thread::scope(|scope| {
            for _ in 0..threads {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if i >= cells.len() {
                        break;
                    }
                    let r = run_cell(&cells[i]);
                    done.lock().expect("result lock")[i] = Some(r);
                });
            }
        });
    }
    let runs = results
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect::<Result<Vec<_>>>()?;

    let rows = LossMode::ALL
        .iter()
        .enumerate()
        .map(|(m, &mode)| {
            let cell_runs = &runs[m * seeds.len()..(m + 1) * seeds.len()];
            let per_seed: Vec<SeedResult> = cell_runs
                .iter()
                .map(|r| SeedResult {
                    seed: r.seed,
                    metrics: r.test,
                })
                .collect();
            let pick =
                |f: fn(&MetricSummary) -> f64| median(&per_seed.iter().map(|s| f(&s.metrics)).collect::<Vec<_>>());
            AblationRow {
                label: mode.table_label().into(),
                loss_mode: mode,
                median: MetricValues {
                    accuracy: pick(|m| m.accuracy),
                    precision: pick(|m| m.precision),
                    recall: pick(|m| m.recall),
                    f1: pick(|m| m.f1),
                },
                per_seed,
            }
        })
        .collect();
    Ok(AblationOutcome {
        table: AblationTable {
            seeds: seeds.to_vec(),
            rows,
        },
        runs,
    })
}

// ---------------------------------------------------------------------------
// Text rendering and files

fn pct(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

fn pad(s: &str, width: usize) -> String {
    let n = s.chars().count();
    format!("{s}{}", " ".repeat(width.saturating_sub(n)))
}

fn render_rows(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<String>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, &w)| pad(c, w)).collect();
        padded.join("  ").trim_end().to_owned() + "\n"
    };
    let mut out = line(header.iter().map(|h| h.to_string()).collect());
    out.push_str(&line(widths.iter().map(|&w| "-".repeat(w)).collect()));
    for r in rows {
        out.push_str(&line(r.clone()));
    }
    out
}

pub fn render_report(report: &ExperimentReport) -> String {
    let m = &report.test;
    let c = &m.confusion;
    let mut out = String::new();
    let mode = report.loss_mode.map_or("-", LossMode::as_str);
    let _ = writeln!(
        out,
        "run {} (method {}, loss {mode}, seed {})",
        report.run_id, report.method, report.seed
    );
    let s = &report.split;
    let _ = writeln!(
        out,
        "train {}/{} (replicated {}/{}), test {}/{}",
        s.train.negatives,
        s.train.positives,
        s.train_replicated.negatives,
        s.train_replicated.positives,
        s.test.negatives,
        s.test.positives
    );
    if let Some(last) = report.epochs.last() {
        let _ = writeln!(
            out,
            "epochs {}, final loss {:.6}, final R1 {:.4}",
            report.epochs.len(),
            last.mean_loss,
            last.r1
        );
    }
    out.push('\n');
    out.push_str(&render_rows(
        &["Acc %", "P %", "R %", "F1 %", "TN", "FP", "FN", "TP"],
        &[vec![
            pct(m.accuracy),
            pct(m.precision),
            pct(m.recall),
            pct(m.f1),
            c.n00.to_string(),
            c.n01.to_string(),
            c.n10.to_string(),
            c.n11.to_string(),
        ]],
    ));
    out
}

pub fn render_ablation(table: &AblationTable) -> String {
    let mut rows = Vec::new();
    for r in &table.rows {
        let m = &r.median;
        rows.push(vec![
            r.label.clone(),
            "median".into(),
            pct(m.accuracy),
            pct(m.precision),
            pct(m.recall),
            pct(m.f1),
        ]);
        for s in &r.per_seed {
            rows.push(vec![
                String::new(),
                format!("seed {}", s.seed),
                pct(s.metrics.accuracy),
                pct(s.metrics.precision),
                pct(s.metrics.recall),
                pct(s.metrics.f1),
            ]);
        }
    }
    render_rows(&["Method", "Run", "Acc %", "P %", "R %", "F1 %"], &rows)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes `report.json` and `report.txt` into `dir`.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(report, &dir.join("report.json"))?;
    fs::write(dir.join("report.txt"), render_report(report))?;
    Ok(())
}

/// Writes the report, checkpoint and raw test split of a training run.
pub fn write_train_outputs(outcome: &TrainOutcome, dir: &Path) -> Result<()> {
    write_report(&outcome.report, dir)?;
    save_checkpoint(&outcome.checkpoint, dir.join("model.ckpt"))?;
    data::save_csv(&outcome.prepared.test_raw, dir.join("test.csv"))?;
    Ok(())
}

pub fn write_ablation(outcome: &AblationOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&outcome.table, &dir.join("report.json"))?;
    fs::write(dir.join("report.txt"), render_ablation(&outcome.table))?;
    for run in &outcome.runs {
        write_report(run, &dir.join("runs").join(&run.run_id))?;
    }
    Ok(())
}

pub fn write_eval(report: &EvalReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(report, &dir.join("report.json"))?;
    let m = &report.metrics;
    let c = &m.confusion;
    let text = render_rows(
        &["Samples", "Acc %", "P %", "R %", "F1 %", "TN", "FP", "FN", "TP"],
        &[vec![
            report.samples.to_string(),
            pct(m.accuracy),
            pct(m.precision),
            pct(m.recall),
            pct(m.f1),
            c.n00.to_string(),
            c.n01.to_string(),
            c.n10.to_string(),
            c.n11.to_string(),
        ]],
    );
    fs::write(dir.join("report.txt"), text)?;
    Ok(())
}
