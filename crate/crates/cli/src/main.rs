use std::path::PathBuf;
use std::process::ExitCode;

use chanlab_core::experiment::{load_config, parse_config, run_and_write, ExperimentConfig};
use chanlab_core::Error;
use clap::Parser;

/// Runs one channel-estimation sweep and writes its results as CSV.
///
/// Settings come from the optional config file, then from the flags below,
/// then from `--set` in order; later sources win. The effective config is
/// written next to the CSV with a `.config` extension.
#[derive(Debug, Parser)]
#[command(name = "chanlab", version)]
struct Cli {
    /// linear_snr, width_sweep, trainsize_sweep, nonlinear_snr,
    /// mismatch_snr or mismatch_eta.
    experiment: String,
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of antennas.
    #[arg(long)]
    d: Option<String>,
    /// Comma-separated SNR grid in dB.
    #[arg(long = "snr-db", allow_hyphen_values = true)]
    snr_db: Option<String>,
    /// Covariance ratio for mismatch_snr.
    #[arg(long)]
    eta: Option<String>,
    /// Training samples per sweep point.
    #[arg(long = "train-size")]
    train_size: Option<String>,
    /// Test samples per sweep point.
    #[arg(long = "test-size")]
    test_size: Option<String>,
    /// Master seed; every point derives its own streams from it.
    #[arg(long)]
    seed: Option<String>,
    /// Repetitions averaged per sweep point.
    #[arg(long)]
    seeds: Option<String>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<String>,
    /// Output CSV path.
    #[arg(long)]
    out: Option<String>,
    /// Any config key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Cli {
    fn overrides(&self) -> Result<Vec<(String, String)>, Error> {
        let mut out = vec![("experiment".to_string(), self.experiment.clone())];
        let flags = [
            ("d", &self.d),
            ("snr_db", &self.snr_db),
            ("eta", &self.eta),
            ("train_size", &self.train_size),
            ("test_size", &self.test_size),
            ("seed", &self.seed),
            ("seeds", &self.seeds),
            ("threads", &self.threads),
            ("out", &self.out),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                out.push((key.to_string(), v.clone()));
            }
        }
        for item in &self.set {
            let Some((k, v)) = item.split_once('=') else {
                return Err(Error::Config {
                    line: None,
                    key: item.clone(),
                    message: "--set expects KEY=VALUE".into(),
                });
            };
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }

    fn config(&self) -> Result<ExperimentConfig, Error> {
        let overrides = self.overrides()?;
        match &self.config {
            Some(path) => load_config(path, &overrides),
            None => parse_config("", &overrides),
        }
    }
}

fn fail(err: &Error) -> ExitCode {
    eprintln!("chanlab: {err}");
    if err.is_config_error() {
        ExitCode::from(1)
    } else {
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let cfg = match cli.config() {
        Ok(cfg) => cfg,
        Err(e) => return fail(&e),
    };
    match run_and_write(&cfg) {
        Ok(rows) => {
            println!(
                "{}: wrote {} rows to {} (config: {})",
                cfg.experiment,
                rows.len(),
                cfg.out.display(),
                cfg.echo_path().display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
