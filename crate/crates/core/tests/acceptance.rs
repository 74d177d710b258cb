//! Acceptance suite. Prints one PASS/FAIL line per criterion and fails if
//! any criterion fails.
//!
//! Run with `cargo test --release -p frostnet --test acceptance`.

mod common;

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use frostnet::checkpoint::encode_checkpoint;
use frostnet::data::{stratified_split, Dataset};
use frostnet::experiment::{self, ExperimentConfig, LossMode, Weighting};
use frostnet::knn::knn_fit;
use frostnet::loss::{self, compute_alpha, csbl_loss, update_r, CostWeights, INITIAL_R1};
use frostnet::metrics::{ConfusionMatrix, MetricSummary};
use frostnet::model::{build_model, feature_lengths, ArchitectureConfig};
use frostnet::NumericArray;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Writes past the test harness's output capture so the lines always show.
fn emit(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

struct Suite {
    failed: Vec<String>,
}

impl Suite {
    fn run(&mut self, id: &str, name: &str, f: impl FnOnce() -> Outcome) {
        let started = Instant::now();
        let outcome = f();
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => emit(&format!("{id:<5} PASS  {name} ({detail}; {secs:.1} s)")),
            Err(why) => {
                emit(&format!("{id:<5} FAIL  {name}: {why} ({secs:.1} s)"));
                self.failed.push(format!("{id} {name}"));
            }
        }
    }
}

fn ac1_gradients() -> Outcome {
    let started = Instant::now();
    for (name, check) in common::GRADIENT_CHECKS {
        check().map_err(|e| format!("{name}: {e}"))?;
    }
    let elapsed = started.elapsed();
    ensure(elapsed <= Duration::from_secs(60), || {
        format!("took {:.1} s, limit 60 s", elapsed.as_secs_f64())
    })?;
    Ok(format!(
        "{} checks x 100 trials, rel <= 1e-4",
        common::GRADIENT_CHECKS.len()
    ))
}

fn ac2_equivalence(desk: &ExperimentConfig, dataset: &Dataset) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let unit = CostWeights::unit();
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=64);
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let y: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
        let a = csbl_loss(&p, &y, &unit).map_err(|e| e.to_string())?.loss;
        let b = loss::cross_entropy(&p, &y).map_err(|e| e.to_string())?;
        worst = worst.max((a - b).abs());
    }
    ensure(worst <= 1e-12, || format!("max |csbl - ce| = {worst:e} > 1e-12"))?;

    let mut cfg = desk.clone();
    cfg.train.seed = 5;
    cfg.loss_mode = LossMode::PlainCe;
    let ce = experiment::train_run(&cfg, dataset, Weighting::Mode(LossMode::PlainCe)).map_err(|e| e.to_string())?;
    let pinned =
        experiment::train_run(&cfg, dataset, Weighting::Pinned(CostWeights::unit())).map_err(|e| e.to_string())?;
    ensure(ce.report.epochs == pinned.report.epochs, || {
        "per-epoch logs differ".into()
    })?;
    ensure(ce.report.test == pinned.report.test, || "test metrics differ".into())?;
    let (a, b) = (
        encode_checkpoint(&ce.checkpoint).map_err(|e| e.to_string())?,
        encode_checkpoint(&pinned.checkpoint).map_err(|e| e.to_string())?,
    );
    ensure(a == b, || "final parameters differ".into())?;
    Ok(format!(
        "10^4 batches max diff {worst:e}; {}-epoch runs bit-identical",
        cfg.train.epochs
    ))
}

fn ac3_alpha() -> Outcome {
    let alpha = compute_alpha(&[940, 60], 2.0).map_err(|e| e.to_string())?;
    let expected = [0.531915, 8.333333];
    for (a, e) in alpha.iter().zip(expected) {
        ensure((a - e).abs() <= 1e-6, || format!("alpha {alpha:?} vs {expected:?}"))?;
    }
    Ok(format!("alpha = [{:.6}, {:.6}]", alpha[0], alpha[1]))
}

fn ac4_r() -> Outcome {
    let cm = ConfusionMatrix::new(269, 13, 4, 14);
    let r = update_r(&cm, INITIAL_R1);
    ensure(
        (r[1] - 0.222222).abs() <= 1e-6 && (r[1] - 4.0 / 18.0).abs() <= 1e-9,
        || format!("R1 = {}", r[1]),
    )?;
    ensure(r[0] == 0.0, || format!("R0 = {}", r[0]))?;
    ensure(INITIAL_R1 == 1.0, || format!("initial R1 = {INITIAL_R1}"))?;
    Ok(format!("R1 = {:.9}, initial R1 = 1", r[1]))
}

fn ac5_metrics() -> Outcome {
    let m = MetricSummary::from_confusion(ConfusionMatrix::new(269, 13, 4, 14)).map_err(|e| e.to_string())?;
    let pairs = [
        ("accuracy", m.accuracy, 94.3),
        ("precision", m.precision, 51.9),
        ("recall", m.recall, 77.8),
        ("f1", m.f1, 62.3),
    ];
    for (name, got, expected) in pairs {
        let pct = 100.0 * got;
        ensure((pct - expected).abs() <= 0.1 + 1e-9, || {
            format!("{name} {pct:.4}% vs expected {expected}%")
        })?;
    }
    Ok(format!(
        "A {:.2}% P {:.2}% R {:.2}% F1 {:.2}%",
        100.0 * m.accuracy,
        100.0 * m.precision,
        100.0 * m.recall,
        100.0 * m.f1
    ))
}

fn ac6_shapes() -> Outcome {
    let config = ArchitectureConfig::default();
    let audit = feature_lengths(&config);
    ensure(audit.stage_lengths == [2145, 238, 232, 46, 40, 5], || {
        format!("stage lengths {:?}", audit.stage_lengths)
    })?;
    ensure(audit.dense_input == 160, || {
        format!("dense input {}", audit.dense_input)
    })?;
    build_model(&config, 0).map_err(|e| e.to_string())?;
    for input_length in [6, 100, 300] {
        let bad = ArchitectureConfig {
            input_length,
            ..ArchitectureConfig::default()
        };
        ensure(build_model(&bad, 0).is_err(), || {
            format!("input_length {input_length} accepted")
        })?;
    }
    let bad_pool = ArchitectureConfig {
        pool_windows: vec![9, 5, 50],
        ..ArchitectureConfig::default()
    };
    ensure(build_model(&bad_pool, 0).is_err(), || "oversized pool accepted".into())?;
    Ok("[2145, 238, 232, 46, 40, 5], dense 160".into())
}

fn ac7_split() -> Outcome {
    let mut labels = vec![0u8; 940];
    labels.extend([1u8; 60]);
    let features = NumericArray::new(vec![1000, 1], (0..1000).map(f64::from).collect()).map_err(|e| e.to_string())?;
    let d = Dataset::new(features, labels).map_err(|e| e.to_string())?;
    for seed in 0..5 {
        let (train, test) = stratified_split(&d, 0.7, seed).map_err(|e| e.to_string())?;
        ensure(test.class_counts() == [282, 18], || {
            format!("test {:?}", test.class_counts())
        })?;
        ensure(train.class_counts() == [658, 42], || {
            format!("train {:?}", train.class_counts())
        })?;
    }
    Ok("test 282/18, train 658/42".into())
}

fn ac8_effectiveness(table: &experiment::AblationTable, elapsed: Duration) -> Outcome {
    let row = |m: LossMode| table.row(m).ok_or_else(|| format!("missing row {m}"));
    let (ce, alpha, r, csbl) = (
        row(LossMode::PlainCe)?,
        row(LossMode::AlphaOnly)?,
        row(LossMode::ROnly)?,
        row(LossMode::FullCsbl)?,
    );
    let summary = format!(
        "ablation {:.0} s; median recall ce {:.3} csbl {:.3}; median F1 ce {:.3} alpha {:.3} r {:.3} csbl {:.3}",
        elapsed.as_secs_f64(),
        ce.median.recall,
        csbl.median.recall,
        ce.median.f1,
        alpha.median.f1,
        r.median.f1,
        csbl.median.f1
    );
    ensure(csbl.median.recall > ce.median.recall, || {
        format!("recall not improved: {summary}")
    })?;
    ensure(csbl.median.f1 >= ce.median.f1, || format!("F1 csbl < ce: {summary}"))?;
    ensure(alpha.median.f1 >= ce.median.f1, || format!("F1 alpha < ce: {summary}"))?;
    ensure(r.median.f1 >= ce.median.f1, || format!("F1 r < ce: {summary}"))?;
    ensure(elapsed <= Duration::from_secs(15 * 60), || {
        format!("took {:.0} s, limit 900 s", elapsed.as_secs_f64())
    })?;
    Ok(summary)
}

fn ac9_determinism(dir: &Path) -> Outcome {
    let bin = env!("CARGO_BIN_EXE_frostnet");
    let mut reports = Vec::new();
    let mut checkpoints = Vec::new();
    for run in ["a", "b"] {
        let out = dir.join(run);
        let status = Command::new(bin)
            .args([
                "train",
                "--preset",
                "desk",
                "--loss-mode",
                "csbl",
                "--seed",
                "3",
                "--out",
            ])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || {
            format!(
                "train exited with {}: {}",
                status.status,
                String::from_utf8_lossy(&status.stderr)
            )
        })?;
        let mut report: serde_json::Value =
            serde_json::from_slice(&std::fs::read(out.join("report.json")).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
        report
            .as_object_mut()
            .ok_or("report is not an object")?
            .remove("wall_clock_seconds")
            .ok_or("report has no wall-clock field")?;
        reports.push(serde_json::to_vec(&report).map_err(|e| e.to_string())?);
        checkpoints.push(std::fs::read(out.join("model.ckpt")).map_err(|e| e.to_string())?);
    }
    ensure(reports[0] == reports[1], || "reports differ".into())?;
    ensure(checkpoints[0] == checkpoints[1], || "checkpoints differ".into())?;
    Ok(format!(
        "2 CLI runs, checkpoint {} bytes identical",
        checkpoints[0].len()
    ))
}

fn ac10_r_trajectory(runs: &[experiment::ExperimentReport]) -> Outcome {
    let csbl: Vec<_> = runs
        .iter()
        .filter(|r| r.loss_mode == Some(LossMode::FullCsbl))
        .collect();
    ensure(!csbl.is_empty(), || "no full_csbl runs".into())?;
    let mut epochs = 0;
    for run in &csbl {
        let first = run.epochs.first().ok_or_else(|| format!("{}: empty log", run.run_id))?;
        ensure(first.r1 == 1.0, || format!("{}: first R1 = {}", run.run_id, first.r1))?;
        for e in &run.epochs {
            ensure((0.0..=1.0).contains(&e.r1), || {
                format!("{}: epoch {} R1 = {}", run.run_id, e.epoch, e.r1)
            })?;
        }
        epochs += run.epochs.len();
    }
    Ok(format!("{} runs, {epochs} logged epochs", csbl.len()))
}

fn brute_force_knn(train: &[(Vec<f64>, u8)], query: &[f64], k: usize) -> u8 {
    let mut order: Vec<(f64, usize)> = train
        .iter()
        .enumerate()
        .map(|(i, (x, _))| (x.iter().zip(query).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let ones = order[..k].iter().filter(|(_, i)| train[*i].1 == 1).count();
    u8::from(2 * ones > k)
}

fn ac11_knn() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut queries = 0;
    for instance in 0..200 {
        let n = rng.gen_range(5..=50);
        let d = rng.gen_range(1..=5);
        let k = [1, 3, 5][instance % 3];
        // a coarse grid makes exact distance ties common
        let point = |rng: &mut ChaCha8Rng| (0..d).map(|_| f64::from(rng.gen_range(-3..=3))).collect::<Vec<f64>>();
        let train: Vec<(Vec<f64>, u8)> = (0..n).map(|_| (point(&mut rng), rng.gen_range(0..=1))).collect();
        let rows: Vec<Vec<f64>> = train.iter().map(|(x, _)| x.clone()).collect();
        let labels = train.iter().map(|(_, y)| *y).collect();
        let ds = Dataset::new(NumericArray::from_rows(&rows).map_err(|e| e.to_string())?, labels)
            .map_err(|e| e.to_string())?;
        let model = knn_fit(&ds, k).map_err(|e| e.to_string())?;
        let q: Vec<Vec<f64>> = (0..10).map(|_| point(&mut rng)).collect();
        let got = model
            .predict(&NumericArray::from_rows(&q).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        for (qi, query) in q.iter().enumerate() {
            let want = brute_force_knn(&train, query, k);
            ensure(got[qi] == want, || {
                format!("instance {instance} query {qi}: {} vs oracle {want}", got[qi])
            })?;
        }
        queries += q.len();
    }
    Ok(format!("200 instances, {queries} queries"))
}

#[test]
fn acceptance() {
    emit("");
    let mut suite = Suite { failed: Vec::new() };
    let desk = ExperimentConfig::desk();
    let dataset = desk.load_dataset().expect("default synthetic dataset");
    let tmp = tempfile::tempdir().expect("temp dir");

    suite.run("AC1", "gradient suite", ac1_gradients);
    suite.run("AC2", "loss equivalence", || ac2_equivalence(&desk, &dataset));
    suite.run("AC3", "alpha oracle", ac3_alpha);
    suite.run("AC4", "R oracle", ac4_r);
    suite.run("AC5", "metric oracle", ac5_metrics);
    suite.run("AC6", "shape audit", ac6_shapes);
    suite.run("AC7", "split oracle", ac7_split);

    let started = Instant::now();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let ablation = experiment::run_ablation(&desk, &dataset, &[0, 1, 2, 3, 4], threads);
    let elapsed = started.elapsed();
    match &ablation {
        Ok(outcome) => {
            emit(&experiment::render_ablation(&outcome.table));
            suite.run("AC8", "desk-scale effectiveness", || {
                ac8_effectiveness(&outcome.table, elapsed)
            });
            suite.run("AC10", "R trajectory", || ac10_r_trajectory(&outcome.runs));
        }
        Err(e) => {
            let msg = format!("ablation failed: {e}");
            suite.run("AC8", "desk-scale effectiveness", || Err(msg.clone()));
            suite.run("AC10", "R trajectory", || Err(msg));
        }
    }
    suite.run("AC9", "determinism", || ac9_determinism(tmp.path()));
    suite.run("AC11", "KNN oracle", ac11_knn);

    assert!(suite.failed.is_empty(), "failed criteria: {:?}", suite.failed);
}
