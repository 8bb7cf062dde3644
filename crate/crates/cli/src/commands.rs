use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::ArgMatches;
use serde::{Deserialize, Serialize};

use pga_core::config::ExperimentConfig;
use pga_core::data::{load_csv, write_csv, CsvSchema, LakeDataset};
use pga_core::math::Checkpoint;
use pga_core::models::{Autoencoder, DepthModel, ModelKind};
use pga_core::pipeline::{self, seeds, PipelineError, Prepared, Stage, WindowIndex};
use pga_core::training::TrainError;
use pga_core::uq::{
    calibration_curve, evaluate as evaluate_runs, two_tailed_percentile, write_profiles_csv,
    McSampleSet, MetricsReport, Truth,
};

use crate::manifest::{FileDigest, RunManifest};
use crate::CliError;

/// MC samples of one trained run, as written by `sample`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplesFile {
    pub model: ModelKind,
    pub run: usize,
    pub sets: Vec<McSampleSet>,
}

fn path<'a>(m: &'a ArgMatches, name: &str) -> &'a Path {
    Path::new(m.get_one::<String>(name).expect("required argument"))
}

fn paths<'a>(m: &'a ArgMatches, name: &str) -> Vec<&'a Path> {
    m.get_many::<String>(name)
        .expect("required argument")
        .map(Path::new)
        .collect()
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn create(p: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(p)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(p, e))
}

fn write_text(p: &Path, text: &str) -> Result<(), CliError> {
    let mut w = create(p)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(p, e))
}

fn read_input(p: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(p).map_err(|e| CliError::io(p, e))
}

fn load_dataset(p: &Path) -> Result<LakeDataset, CliError> {
    if !p.exists() {
        return Err(CliError::Data(format!("dataset {} not found", p.display())));
    }
    Ok(load_csv(p, &CsvSchema::standard())?)
}

fn load_checkpoint(p: &Path, what: &str) -> Result<Checkpoint, CliError> {
    if !p.exists() {
        return Err(CliError::Data(format!(
            "{what} checkpoint {} not found; run the stage that produces it first",
            p.display()
        )));
    }
    Checkpoint::load(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
}

fn load_encoder(p: &Path) -> Result<Autoencoder, CliError> {
    let ckpt = load_checkpoint(p, "encoder")?;
    pipeline::read_encoder_checkpoint(&ckpt)
        .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
}

fn load_model(p: &Path, prep: &Prepared) -> Result<DepthModel, CliError> {
    let ckpt = load_checkpoint(p, "model")?;
    let (model, norm) = pipeline::read_model_checkpoint(&ckpt)
        .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
    if norm != prep.norm {
        return Err(CliError::Usage(format!(
            "{} was trained on a different dataset or split; pass the same --data and configuration",
            p.display()
        )));
    }
    Ok(model)
}

fn manifest(name: &str, cfg: &ExperimentConfig, inputs: &[&Path]) -> Result<RunManifest, CliError> {
    let mut m = RunManifest::new(name, cfg.to_text());
    for p in inputs {
        m.inputs.push(FileDigest::of(p)?);
    }
    Ok(m)
}

struct Loaded {
    prep: Prepared,
    windows: WindowIndex,
}

fn prepare(data: &Path, cfg: &ExperimentConfig) -> Result<Loaded, CliError> {
    let prep = pipeline::prepare(load_dataset(data)?, cfg)?;
    let windows = WindowIndex::new(&prep, cfg);
    Ok(Loaded { prep, windows })
}

pub fn generate_data(m: &ArgMatches, cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let out = path(m, "out");
    let data = pipeline::synthetic_dataset(cfg)?;
    let mut w = create(out)?;
    write_csv(&data, &mut w)?;
    w.flush().map_err(|e| CliError::io(out, e))?;
    let mut man = manifest("generate-data", cfg, &[])?;
    man.seeds.insert("data".into(), cfg.data_seed);
    man.finish(&[out])
}

pub fn pretrain_encoder(m: &ArgMatches, cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let (data, out) = (path(m, "data"), path(m, "out"));
    let l = prepare(data, cfg)?;
    let (ae, losses) = pipeline::pretrain_encoder(&l.prep, &l.windows, cfg)?;
    pipeline::encoder_checkpoint(&ae)
        .save(out)
        .map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
    let log = sibling(out, ".log.csv");
    let mut text = String::from("epoch,reconstruction_mse\n");
    for (e, l) in losses.iter().enumerate() {
        writeln!(text, "{},{l}", e + 1).unwrap();
    }
    write_text(&log, &text)?;
    let mut man = manifest("pretrain-encoder", cfg, &[data])?;
    man.seeds.insert("split".into(), seeds::split(cfg.seed));
    man.seeds.insert("encoder".into(), seeds::encoder(cfg.seed));
    man.finish(&[out, &log])
}

pub fn train(m: &ArgMatches, cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let (data, enc, out) = (path(m, "data"), path(m, "encoder"), path(m, "out"));
    let kind: ModelKind = m
        .get_one::<String>("model")
        .unwrap()
        .parse()
        .expect("validated by clap");
    let run = *m.get_one::<usize>("run").unwrap();
    let l = prepare(data, cfg)?;
    let encoder = load_encoder(enc)?;
    let stage = Stage {
        prep: &l.prep,
        windows: &l.windows,
        encoder: &encoder,
    };
    let log = sibling(out, ".log.csv");
    let (model, report) = match pipeline::train_run(&stage, kind, cfg, run) {
        Ok(r) => r,
        Err(PipelineError::Train(TrainError::Diverged {
            epoch,
            reason,
            last_good,
            report,
        })) => {
            let keep = sibling(out, ".last-good");
            pipeline::model_checkpoint(&last_good, &l.prep.norm)
                .save(&keep)
                .map_err(|e| CliError::Data(format!("{}: {e}", keep.display())))?;
            let mut w = create(&log)?;
            report
                .write_csv(&mut w)
                .map_err(|e| CliError::io(&log, e))?;
            return Err(CliError::Numerical(format!(
                "training diverged in epoch {epoch}: {reason}; parameters before the failing update saved to {}",
                keep.display()
            )));
        }
        Err(e) => return Err(e.into()),
    };
    pipeline::model_checkpoint(&model, &l.prep.norm)
        .save(out)
        .map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
    let mut w = create(&log)?;
    report
        .write_csv(&mut w)
        .map_err(|e| CliError::io(&log, e))?;
    drop(w);
    let mut man = manifest("train", cfg, &[data, enc])?;
    man.arguments.insert("model".into(), kind.to_string());
    man.arguments.insert("run".into(), run.to_string());
    man.seeds.insert("split".into(), seeds::split(cfg.seed));
    man.seeds
        .insert("training".into(), seeds::training(cfg.seed, run));
    // the log carries wall-clock times, so only the checkpoint is digested
    man.finish(&[out])
}

fn sample_run(
    stage: &Stage<'_>,
    model: &DepthModel,
    cfg: &ExperimentConfig,
    run: usize,
) -> Result<(Vec<McSampleSet>, Vec<Truth>), CliError> {
    Ok(pipeline::sample_test(stage, model, cfg, run)?)
}

pub fn sample(m: &ArgMatches, cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let (data, enc, ckpt, out) = (
        path(m, "data"),
        path(m, "encoder"),
        path(m, "checkpoint"),
        path(m, "out"),
    );
    let run = *m.get_one::<usize>("run").unwrap();
    let l = prepare(data, cfg)?;
    let encoder = load_encoder(enc)?;
    let model = load_model(ckpt, &l.prep)?;
    let stage = Stage {
        prep: &l.prep,
        windows: &l.windows,
        encoder: &encoder,
    };
    let (sets, truth) = sample_run(&stage, &model, cfg, run)?;
    let file = SamplesFile {
        model: model.kind,
        run,
        sets,
    };
    write_text(
        out,
        &serde_json::to_string(&file).expect("samples serialize"),
    )?;
    let profiles = sibling(out, ".profiles.csv");
    let mut w = create(&profiles)?;
    write_profiles_csv(&mut w, &file.sets, &truth, l.prep.raw.depths_m())
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(&profiles, e))?;
    let mut man = manifest("sample", cfg, &[data, enc, ckpt])?;
    man.arguments.insert("run".into(), run.to_string());
    man.seeds
        .insert("sampling".into(), seeds::sampling(cfg.seed, run));
    man.finish(&[out, &profiles])
}

pub fn evaluate(m: &ArgMatches, cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let (data, enc, out) = (path(m, "data"), path(m, "encoder"), path(m, "out"));
    let ckpts = paths(m, "checkpoint");
    let l = prepare(data, cfg)?;
    let encoder = load_encoder(enc)?;
    let stage = Stage {
        prep: &l.prep,
        windows: &l.windows,
        encoder: &encoder,
    };
    let mut kind = None;
    let mut runs = Vec::new();
    let mut truth = Vec::new();
    for (r, p) in ckpts.iter().enumerate() {
        let model = load_model(p, &l.prep)?;
        if *kind.get_or_insert(model.kind) != model.kind {
            return Err(CliError::Usage(format!(
                "{} holds a {} model; all checkpoints of one evaluation must be the same model",
                p.display(),
                model.kind
            )));
        }
        let (sets, t) = sample_run(&stage, &model, cfg, r)?;
        runs.push(sets);
        truth = t;
    }
    let kind = kind.expect("at least one checkpoint");
    let report = evaluate_runs(kind.as_str(), &runs, &truth, pipeline::tolerance(cfg)?)
        .map_err(PipelineError::from)?;
    write_text(out, &(report.to_json() + "\n"))?;
    let mut inputs = vec![data, enc];
    inputs.extend(&ckpts);
    let mut man = manifest("evaluate", cfg, &inputs)?;
    man.arguments.insert("model".into(), kind.to_string());
    for r in 0..ckpts.len() {
        man.seeds
            .insert(format!("sampling.{r}"), seeds::sampling(cfg.seed, r));
    }
    man.finish(&[out])
}

fn truth_of(data: &LakeDataset, set: &McSampleSet) -> Result<Truth, CliError> {
    let t = set.date_index;
    if data.dates().get(t) != Some(&set.date) || data.n_depths() != set.n_depths {
        return Err(CliError::Data(format!(
            "samples for {} do not match the dataset",
            set.date
        )));
    }
    Ok((0..data.n_depths())
        .map(|d| data.temperature(t, d))
        .collect())
}

pub fn calibrate(m: &ArgMatches, cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let (data, out) = (path(m, "data"), path(m, "out"));
    let files = paths(m, "samples");
    let dataset = load_dataset(data)?;
    let mut percentiles = Vec::new();
    for p in &files {
        let file: SamplesFile = serde_json::from_slice(&read_input(p)?)
            .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
        for set in &file.sets {
            for (d, y) in truth_of(&dataset, set)?.iter().enumerate() {
                if let Some(y) = y {
                    let pct = two_tailed_percentile(&set.temperature_column(d), *y)
                        .map_err(PipelineError::from)?;
                    percentiles.push(pct);
                }
            }
        }
    }
    let curve = calibration_curve(&percentiles);
    let mut w = create(out)?;
    curve
        .write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(out, e))?;
    eprintln!(
        "{} observations, {} degenerate, max deviation {:.2} points",
        curve.n_observations,
        curve.n_degenerate,
        curve.max_deviation()
    );
    let mut inputs = vec![data];
    inputs.extend(&files);
    manifest("calibrate", cfg, &inputs)?.finish(&[out])
}

fn table(reports: &[MetricsReport]) -> String {
    let mut s = String::new();
    s.push_str("| model | runs | RMSE per sample | RMSE mean | inconsistency per sample | inconsistency mean | calibration max dev |\n");
    s.push_str("|---|---|---|---|---|---|---|\n");
    for r in reports {
        let p = &r.pooled;
        writeln!(
            s,
            "| {} | {} | {:.3} ± {:.3} | {:.3} ± {:.3} | {:.4} ± {:.4} | {:.4} ± {:.4} | {:.2} |",
            r.model,
            r.n_runs,
            p.rmse_per_sample.mean,
            p.rmse_per_sample.std,
            p.rmse_mean.mean,
            p.rmse_mean.std,
            p.inconsistency_per_sample.mean,
            p.inconsistency_per_sample.std,
            p.inconsistency_mean.mean,
            p.inconsistency_mean.std,
            r.calibration.max_deviation()
        )
        .unwrap();
    }
    s
}

pub fn report(m: &ArgMatches, cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let out = path(m, "out");
    let files = paths(m, "metrics");
    let mut reports = Vec::new();
    for p in &files {
        let r: MetricsReport = serde_json::from_slice(&read_input(p)?)
            .map_err(|e| CliError::Data(format!("{}: not a metrics report: {e}", p.display())))?;
        reports.push(r);
    }
    write_text(out, &table(&reports))?;
    manifest("report", cfg, &files)?.finish(&[out])
}
