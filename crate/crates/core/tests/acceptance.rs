//! Acceptance criteria, run in sequence. Prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pga_core::config::ExperimentConfig;
use pga_core::data::{DepthSequence, DepthSequenceBatch};
use pga_core::models::{Dropout, ModelKind};
use pga_core::physics::density_from_temperature;
use pga_core::pipeline::{self, ModelResult, Prepared, Stage, WindowIndex};
use pga_core::training::{
    deterministic_rmse, initial_model, objective, train, TrainConfig, TrainData,
};
use pga_core::uq::{calibration_curve, two_tailed_percentile, CalibrationCurve, MetricsReport};
use pga_core::Tape;

type Outcome = Result<String, String>;

fn config() -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/acceptance.conf");
    ExperimentConfig::from_file(&path).expect("acceptance config parses")
}

fn within(limit: Duration, elapsed: Duration) -> Result<(), String> {
    if elapsed <= limit {
        Ok(())
    } else {
        Err(format!("took {elapsed:.1?}, limit {limit:?}"))
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

struct SeedRun {
    seed: u64,
    pga: ModelResult,
    lstm: ModelResult,
    pga_seconds: f64,
}

fn experiment(seed: u64) -> SeedRun {
    let mut cfg = config();
    cfg.seed = seed;
    let prep = pipeline::prepare(pipeline::synthetic_dataset(&cfg).unwrap(), &cfg).unwrap();
    let windows = WindowIndex::new(&prep, &cfg);
    let start = Instant::now();
    let (encoder, _) = pipeline::pretrain_encoder(&prep, &windows, &cfg).unwrap();
    let stage = Stage {
        prep: &prep,
        windows: &windows,
        encoder: &encoder,
    };
    let pga = pipeline::run_model(&stage, ModelKind::Pga, &cfg).unwrap();
    let pga_seconds = start.elapsed().as_secs_f64();
    let lstm = pipeline::run_model(&stage, ModelKind::Lstm, &cfg).unwrap();
    SeedRun {
        seed,
        pga,
        lstm,
        pga_seconds,
    }
}

/// PGA samples never violate density-depth ordering.
fn architectural_consistency(run: &SeedRun) -> Outcome {
    let m = &run.pga.metrics;
    within(
        Duration::from_secs(300),
        Duration::from_secs_f64(run.pga_seconds),
    )?;
    let v = m.pooled.violations;
    let detail = format!(
        "{} violations in {} adjacent pairs ({} dates x {} samples), {:.0} s",
        v.violations, v.pairs, m.n_test_dates, m.n_samples, run.pga_seconds
    );
    if m.n_samples != 100 || m.dropout != 0.2 {
        return Err(format!("wrong protocol: {detail}"));
    }
    if v.violations == 0
        && m.pooled.inconsistency_per_sample.mean == 0.0
        && m.pooled.inconsistency_mean.mean == 0.0
    {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// LSTM samples are inconsistent and PGA is at least as accurate.
fn baseline_contrast(runs: &[SeedRun]) -> Outcome {
    let lstm_incons = median(
        runs.iter()
            .map(|r| r.lstm.metrics.pooled.inconsistency_per_sample.mean)
            .collect(),
    );
    let pga_rmse = median(
        runs.iter()
            .map(|r| r.pga.metrics.pooled.rmse_per_sample.mean)
            .collect(),
    );
    let lstm_rmse = median(
        runs.iter()
            .map(|r| r.lstm.metrics.pooled.rmse_per_sample.mean)
            .collect(),
    );
    let per_seed: Vec<String> = runs
        .iter()
        .map(|r| {
            format!(
                "seed {}: {:.3}/{:.3}",
                r.seed,
                r.pga.metrics.pooled.rmse_per_sample.mean,
                r.lstm.metrics.pooled.rmse_per_sample.mean
            )
        })
        .collect();
    let detail = format!(
        "median LSTM inconsistency {lstm_incons:.4} (> 0.05), median per-sample RMSE PGA {pga_rmse:.3} vs LSTM {lstm_rmse:.3} °C [{}]",
        per_seed.join(", ")
    );
    if lstm_incons > 0.05 && pga_rmse <= lstm_rmse {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Reference values of the density equation evaluated by hand in exact
/// rational arithmetic, rounded to double precision.
fn density_equation() -> Outcome {
    let start = Instant::now();
    let reference = [
        (0.0, 999.867_579_161_904_9),
        (3.9863, 1000.0),
        (4.0, 999.999_998_502_210_4),
        (10.0, 999.728_107_990_091_1),
        (25.0, 997.075_117_666_444_2),
    ];
    let mut worst: f64 = 0.0;
    for (t, rho) in reference {
        worst = worst.max((density_from_temperature(t).unwrap() - rho).abs());
    }
    let (mut arg, mut best) = (0.0, f64::NEG_INFINITY);
    for i in 0..=10_000 {
        let t = i as f64 * 0.001;
        let rho = density_from_temperature(t).unwrap();
        if rho > best {
            best = rho;
            arg = t;
        }
    }
    within(Duration::from_secs(1), start.elapsed())?;
    let detail = format!("max error {worst:.2e} kg/m³ (< 1e-5), grid maximum at {arg:.3} °C");
    if worst < 1e-5 && (arg - 3.9863f64).abs() <= 0.01 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Real pipeline pieces on a 3-depth lake: data, split, normalization and a
/// pretrained encoder, then two labelled dates.
fn toy_batch() -> (Prepared, Vec<DepthSequence>, ExperimentConfig) {
    let mut cfg = ExperimentConfig::default();
    cfg.apply_text("years = 2\ndepths = 3\ntrain_years = 1\npadding = 2\nae_epochs = 3\nobs_depth_fraction = 1")
        .unwrap();
    let prep = pipeline::prepare(pipeline::synthetic_dataset(&cfg).unwrap(), &cfg).unwrap();
    let windows = WindowIndex::new(&prep, &cfg);
    let (encoder, _) = pipeline::pretrain_encoder(&prep, &windows, &cfg).unwrap();
    let (seqs, _) =
        pipeline::embedded_sequences(&prep, &windows, &encoder, &prep.fit, &cfg).unwrap();
    (prep, seqs, cfg)
}

/// Composite-loss gradients agree with central differences.
fn gradient_check() -> Outcome {
    let start = Instant::now();
    let (prep, seqs, cfg) = toy_batch();
    let two: Vec<&DepthSequence> = seqs
        .iter()
        .filter(|s| s.n_observed() == 3)
        .take(2)
        .collect();
    if two.len() != 2 {
        return Err("toy data lacks two fully observed dates".into());
    }
    let batch = DepthSequenceBatch::stack(&two).unwrap();
    let model = initial_model(
        ModelKind::Pga,
        cfg.model_dims(prep.normalized.n_features()),
        &seqs,
        5,
    )
    .unwrap();
    let train_cfg = TrainConfig::default();
    let scale = prep.density_scale();
    let loss = |m: &pga_core::models::DepthModel| {
        let mut tape = Tape::new();
        let o = objective(&mut tape, m, &batch, &train_cfg, scale, &mut Dropout::off()).unwrap();
        tape.value(o.total).item().unwrap()
    };
    let mut tape = Tape::new();
    let o = objective(
        &mut tape,
        &model,
        &batch,
        &train_cfg,
        scale,
        &mut Dropout::off(),
    )
    .unwrap();
    let analytic: Vec<f64> = tape
        .backward(o.total)
        .unwrap()
        .for_params(&tape, &model.store)
        .iter()
        .flat_map(|g| g.data().to_vec())
        .collect();
    // the loss is O(100), so rounding error ~1e-16 * 100 / h swamps small
    // gradients for h much below 1e-3
    let h = 1e-3;
    let mut worst: f64 = 0.0;
    let mut probe = model.clone();
    for (k, &a) in analytic.iter().enumerate() {
        let x = model.store.scalar(k);
        let mut at = |v: f64| {
            probe.store.set_scalar(k, v);
            loss(&probe)
        };
        let numeric = (at(x + h) - at(x - h)) / (2.0 * h);
        probe.store.set_scalar(k, x);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    within(Duration::from_secs(30), start.elapsed())?;
    let detail = format!(
        "max relative error {worst:.2e} (< 1e-4) over {} parameters, 3 depths x 2 dates",
        analytic.len()
    );
    if worst < 1e-4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn simulated_curve(sample_sd: f64, seed: u64) -> CalibrationCurve {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let percentiles: Vec<_> = (0..2000)
        .map(|_| {
            let mu = 10.0 * rng.random::<f64>();
            let samples: Vec<f64> = (0..100)
                .map(|_| mu + sample_sd * gaussian(&mut rng))
                .collect();
            let y = mu + gaussian(&mut rng);
            two_tailed_percentile(&samples, y).unwrap()
        })
        .collect();
    calibration_curve(&percentiles)
}

fn calibration() -> Outcome {
    let start = Instant::now();
    let matched = simulated_curve(1.0, 17);
    let narrow = simulated_curve(0.5, 17);
    within(Duration::from_secs(10), start.elapsed())?;
    let below = narrow.points.iter().filter(|(x, y)| y < x).count();
    let above = narrow.points.iter().filter(|(x, y)| y > x).count();
    let detail = format!(
        "matched max deviation {:.2} points (< 5); halved std: mean signed deviation {:.1}, {below} points below and {above} above the diagonal",
        matched.max_deviation(),
        narrow.mean_signed_deviation()
    );
    if matched.max_deviation() < 5.0
        && above == 0
        && below > 0
        && narrow.mean_signed_deviation() < 0.0
    {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Averaging samples never hurts RMSE, per model and per date.
fn mean_vs_sample(runs: &[SeedRun]) -> Outcome {
    let reports: Vec<&MetricsReport> = runs
        .iter()
        .flat_map(|r| [&r.pga.metrics, &r.lstm.metrics])
        .collect();
    let cases: usize = reports
        .iter()
        .flat_map(|m| &m.runs)
        .map(|r| r.n_dates)
        .sum();
    let held: usize = reports
        .iter()
        .flat_map(|m| &m.runs)
        .map(|r| r.mean_beats_samples)
        .sum();
    let overall = reports
        .iter()
        .flat_map(|m| &m.runs)
        .all(|r| r.rmse_mean <= r.rmse_per_sample.mean);
    let detail = format!("{held}/{cases} model-dates, overall ordering held: {overall}");
    if held == cases && overall && reports.iter().all(|m| m.mean_never_worse()) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// PGA can fit ten observations almost exactly.
fn capacity() -> Outcome {
    let start = Instant::now();
    let cfg = config();
    let prep = pipeline::prepare(pipeline::synthetic_dataset(&cfg).unwrap(), &cfg).unwrap();
    let windows = WindowIndex::new(&prep, &cfg);
    let (encoder, _) = pipeline::pretrain_encoder(&prep, &windows, &cfg).unwrap();
    let (seqs, _) =
        pipeline::embedded_sequences(&prep, &windows, &encoder, &prep.fit, &cfg).unwrap();
    // ten observations: five depths on each of two dates
    let mut subset: Vec<DepthSequence> = seqs
        .into_iter()
        .filter(|s| s.n_observed() >= 5)
        .take(2)
        .collect();
    for s in &mut subset {
        let keep: Vec<usize> = (0..s.n_depths())
            .filter(|&d| s.mask[d])
            .step_by(4)
            .take(5)
            .collect();
        for d in 0..s.n_depths() {
            s.mask[d] = keep.contains(&d);
        }
    }
    let n_obs: usize = subset.iter().map(DepthSequence::n_observed).sum();
    if n_obs != 10 {
        return Err(format!("subset has {n_obs} observations"));
    }
    let dims = cfg.model_dims(prep.normalized.n_features());
    let model = initial_model(ModelKind::Pga, dims, &subset, 11).unwrap();
    let train_cfg = TrainConfig {
        epochs: 500,
        learning_rate: 5e-2,
        batch_size: 2,
        train_dropout: false,
        lambda_r: 0.0,
        seed: 11,
        ..TrainConfig::default()
    };
    let data = TrainData {
        train: &subset,
        val: &[],
        density_scale: prep.density_scale(),
    };
    let (fitted, report) = train(model, data, &train_cfg).map_err(|e| e.to_string())?;
    let rmse = deterministic_rmse(&fitted, &subset).unwrap();
    within(Duration::from_secs(120), start.elapsed())?;
    let detail = format!(
        "training RMSE {rmse:.4} °C (< 0.1) after {} epochs on {n_obs} observations, {:.1} s",
        report.epochs.len(),
        start.elapsed().as_secs_f64()
    );
    if rmse < 0.1 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// A second identical pipeline run writes the same metrics bytes.
fn determinism(first: &SeedRun) -> Outcome {
    let again = experiment(first.seed);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for (name, result) in [
        ("a", &first.pga),
        ("b", &again.pga),
        ("c", &first.lstm),
        ("d", &again.lstm),
    ] {
        let p = dir.path().join(format!("{name}.json"));
        std::fs::write(&p, result.metrics.to_json()).map_err(|e| e.to_string())?;
        files.push(std::fs::read(&p).map_err(|e| e.to_string())?);
    }
    let detail = format!(
        "PGA report {} bytes, LSTM report {} bytes",
        files[0].len(),
        files[2].len()
    );
    if files[0] == files[1] && files[2] == files[3] {
        Ok(detail)
    } else {
        Err(format!("metrics differ between runs; {detail}"))
    }
}

fn main() {
    // `cargo test -- --list` and filters from the harness are not meaningful here
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut failed = 0;
    let mut report = |n: usize, name: &str, outcome: Outcome| match &outcome {
        Ok(d) => println!("criterion {n} {name}: PASS ({d})"),
        Err(d) => {
            failed += 1;
            println!("criterion {n} {name}: FAIL ({d})")
        }
    };
    let runs: Vec<SeedRun> = (1..=5).map(experiment).collect();
    report(
        1,
        "architectural consistency",
        architectural_consistency(&runs[0]),
    );
    report(2, "baseline contrast", baseline_contrast(&runs));
    report(3, "density equation", density_equation());
    report(4, "gradient check", gradient_check());
    report(5, "calibration machinery", calibration());
    report(6, "mean vs per-sample RMSE", mean_vs_sample(&runs));
    report(7, "capacity", capacity());
    report(8, "determinism", determinism(&runs[0]));
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
