//! `pga`: batch front end over the pga-core pipeline. Every command writes
//! its outputs plus `<output>.manifest.json`.
//!
//! Exit status: 0 success, 1 usage or configuration error, 2 data error
//! (missing or malformed input), 3 numerical failure.

mod commands;
mod manifest;

use std::path::Path;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use pga_core::config::{ConfigError, ExperimentConfig};
use pga_core::data::DataError;
use pga_core::models::ModelError;
use pga_core::pipeline::PipelineError;
use pga_core::training::TrainError;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        if e.is_numerical() {
            return CliError::Numerical(e.to_string());
        }
        match e {
            PipelineError::Invalid(_)
            | PipelineError::Model(ModelError::Config(_))
            | PipelineError::Train(TrainError::Config(_))
            | PipelineError::Data(DataError::InvalidConfig(_)) => CliError::Usage(e.to_string()),
            PipelineError::Uq(pga_core::uq::UqError::InvalidDropout(_)) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn config_args() -> Vec<Arg> {
    let mut args = vec![Arg::new("config")
        .long("config")
        .value_name("FILE")
        .help("key = value configuration file; flags override it")];
    for key in ExperimentConfig::KEYS {
        let long = key.replace('_', "-");
        let mut arg = Arg::new(*key)
            .long(long.clone())
            .value_name("VALUE")
            .hide(true);
        if long != *key {
            arg = arg.alias(*key);
        }
        args.push(arg);
    }
    args
}

fn path_arg(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name)
        .long(name)
        .value_name("FILE")
        .required(true)
        .help(help)
}

fn paths_arg(name: &'static str, help: &'static str) -> Arg {
    path_arg(name, help).action(ArgAction::Append)
}

fn run_arg() -> Arg {
    Arg::new("run")
        .long("run")
        .value_name("N")
        .value_parser(clap::value_parser!(usize))
        .default_value("0")
        .help("Training run index; selects the run's seeds")
}

fn cli() -> Command {
    let cmd = |name: &'static str, about: &'static str| {
        Command::new(name)
            .about(about)
            .args(config_args())
            .after_help("Every configuration key is also accepted as a flag, e.g. --epochs 300.")
    };
    Command::new("pga")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Monotone-density LSTM for lake temperature profiles")
        .subcommand_required(true)
        .subcommand(
            cmd("generate-data", "Write a synthetic lake dataset as CSV")
                .arg(path_arg("out", "Output CSV"))
                .after_help("Here --seed sets the data seed (same as --data-seed)."),
        )
        .subcommand(
            cmd(
                "pretrain-encoder",
                "Fit the weather autoencoder on the training years",
            )
            .arg(path_arg("data", "Dataset CSV"))
            .arg(path_arg("out", "Encoder checkpoint")),
        )
        .subcommand(
            cmd("train", "Train one model and write its checkpoint")
                .arg(path_arg("data", "Dataset CSV"))
                .arg(path_arg("encoder", "Encoder checkpoint"))
                .arg(
                    Arg::new("model")
                        .long("model")
                        .required(true)
                        .value_parser(["pga", "lstm", "pgl"]),
                )
                .arg(run_arg())
                .arg(path_arg(
                    "out",
                    "Model checkpoint; the training log goes to <out>.log.csv",
                )),
        )
        .subcommand(
            cmd("sample", "Draw MC dropout samples on the test dates")
                .arg(path_arg("data", "Dataset CSV"))
                .arg(path_arg("encoder", "Encoder checkpoint"))
                .arg(path_arg("checkpoint", "Model checkpoint"))
                .arg(run_arg())
                .arg(path_arg(
                    "out",
                    "Samples JSON; mean ± 2 std profiles go to <out>.profiles.csv",
                )),
        )
        .subcommand(
            cmd(
                "evaluate",
                "Sample each checkpoint and write a metrics report",
            )
            .arg(path_arg("data", "Dataset CSV"))
            .arg(path_arg("encoder", "Encoder checkpoint"))
            .arg(paths_arg(
                "checkpoint",
                "Model checkpoint of one run; repeat for more runs",
            ))
            .arg(path_arg("out", "Metrics JSON")),
        )
        .subcommand(
            cmd("calibrate", "Percentile calibration curve of sample files")
                .arg(path_arg("data", "Dataset CSV"))
                .arg(paths_arg("samples", "Samples JSON; repeat to pool runs"))
                .arg(path_arg("out", "Calibration CSV")),
        )
        .subcommand(
            cmd("report", "Side-by-side table of metrics reports")
                .arg(paths_arg("metrics", "Metrics JSON; repeat per model"))
                .arg(path_arg("out", "Markdown table")),
        )
}

/// Defaults, then the config file, then flags.
fn load_config(m: &ArgMatches, seed_is_data_seed: bool) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match m.get_one::<String>("config") {
        Some(path) => {
            let path = Path::new(path);
            if !path.exists() {
                return Err(CliError::Usage(format!(
                    "config file {} does not exist",
                    path.display()
                )));
            }
            ExperimentConfig::from_file(path)?
        }
        None => ExperimentConfig::default(),
    };
    for key in ExperimentConfig::KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            let key = if seed_is_data_seed && *key == "seed" {
                "data_seed"
            } else {
                key
            };
            cfg.set(key, v)?;
        }
    }
    Ok(cfg)
}

fn run(m: &ArgMatches) -> Result<(), CliError> {
    let (name, sub) = m.subcommand().expect("subcommand required");
    let cfg = load_config(sub, name == "generate-data")?;
    let manifest = match name {
        "generate-data" => commands::generate_data(sub, &cfg)?,
        "pretrain-encoder" => commands::pretrain_encoder(sub, &cfg)?,
        "train" => commands::train(sub, &cfg)?,
        "sample" => commands::sample(sub, &cfg)?,
        "evaluate" => commands::evaluate(sub, &cfg)?,
        "calibrate" => commands::calibrate(sub, &cfg)?,
        "report" => commands::report(sub, &cfg)?,
        other => unreachable!("unknown subcommand {other}"),
    };
    eprintln!("wrote {}", manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pga: {e}");
            ExitCode::from(e.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_definition_is_consistent() {
        cli().debug_assert();
    }

    #[test]
    fn flags_override_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("exp.conf");
        std::fs::write(&file, "epochs = 5\nbatch_size = 4\n").unwrap();
        let m = cli()
            .try_get_matches_from([
                "pga",
                "report",
                "--config",
                file.to_str().unwrap(),
                "--epochs",
                "9",
                "--metrics",
                "a.json",
                "--out",
                "r.md",
            ])
            .unwrap();
        let cfg = load_config(m.subcommand().unwrap().1, false).unwrap();
        assert_eq!(cfg.train.epochs, 9);
        assert_eq!(cfg.train.batch_size, 4);
        assert_eq!(
            cfg.train.patience,
            ExperimentConfig::default().train.patience
        );
    }

    #[test]
    fn seed_means_data_seed_for_generate_data() {
        let m = cli()
            .try_get_matches_from(["pga", "generate-data", "--seed", "11", "--out", "x.csv"])
            .unwrap();
        let cfg = load_config(m.subcommand().unwrap().1, true).unwrap();
        assert_eq!(cfg.data_seed, 11);
        assert_eq!(cfg.seed, ExperimentConfig::default().seed);
    }

    #[test]
    fn bad_values_are_usage_errors() {
        let m = cli()
            .try_get_matches_from([
                "pga",
                "report",
                "--epochs",
                "many",
                "--metrics",
                "a",
                "--out",
                "b",
            ])
            .unwrap();
        let err = load_config(m.subcommand().unwrap().1, false).unwrap_err();
        assert_eq!(err.code(), 1);
    }
}
