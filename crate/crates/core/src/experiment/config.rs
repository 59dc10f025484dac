//! Flat `key = value` experiment configuration.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::estimators::DimFactor;
use crate::relu_net::{LrSchedule, MlpSpec, Optimizer, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    LinearSnr,
    WidthSweep,
    TrainsizeSweep,
    NonlinearSnr,
    MismatchSnr,
    MismatchEta,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::LinearSnr,
        ExperimentKind::WidthSweep,
        ExperimentKind::TrainsizeSweep,
        ExperimentKind::NonlinearSnr,
        ExperimentKind::MismatchSnr,
        ExperimentKind::MismatchEta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::LinearSnr => "linear_snr",
            ExperimentKind::WidthSweep => "width_sweep",
            ExperimentKind::TrainsizeSweep => "trainsize_sweep",
            ExperimentKind::NonlinearSnr => "nonlinear_snr",
            ExperimentKind::MismatchSnr => "mismatch_snr",
            ExperimentKind::MismatchEta => "mismatch_eta",
        }
    }

    fn is_mismatch(self) -> bool {
        matches!(
            self,
            ExperimentKind::MismatchSnr | ExperimentKind::MismatchEta
        )
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
                format!(
                    "unknown experiment `{s}` (expected one of {})",
                    names.join(", ")
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Number of antennas.
    pub d: usize,
    /// Per-antenna channel variance of the deployed channel.
    pub sigma2: f64,
    pub snr_db: Vec<f64>,
    /// Hidden widths for `width_sweep`.
    pub widths: Vec<usize>,
    /// Training-set sizes for `trainsize_sweep`.
    pub train_sizes: Vec<usize>,
    /// Covariance ratio for `mismatch_snr`.
    pub eta: f64,
    /// Covariance ratios for `mismatch_eta`.
    pub eta_grid: Vec<f64>,
    pub train_size: usize,
    pub test_size: usize,
    pub width: usize,
    pub hidden_layers: usize,
    pub train: TrainConfig,
    pub x_sat: f64,
    pub omega: f64,
    pub mc_trials: usize,
    /// Test points evaluated by the Monte-Carlo MMSE oracle.
    pub mc_test_points: usize,
    pub dim_factor: DimFactor,
    pub seed: u64,
    /// Independent repetitions averaged per sweep point.
    pub seeds: usize,
    /// Worker threads; 0 lets the pool pick.
    pub threads: usize,
    pub out: PathBuf,
}

impl ExperimentConfig {
    /// Defaults for `kind` before any key is applied.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let snr_db = match kind {
            ExperimentKind::WidthSweep | ExperimentKind::TrainsizeSweep => vec![0.0, 10.0, 25.0],
            ExperimentKind::MismatchEta => vec![0.0, 25.0],
            _ => vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0],
        };
        Self {
            experiment: kind,
            d: if kind.is_mismatch() { 1 } else { 2 },
            sigma2: 1.0,
            snr_db,
            widths: vec![1, 2, 4, 8, 16, 32, 64],
            train_sizes: vec![50, 100, 500, 1_000, 5_000, 10_000, 20_000],
            eta: 2.0,
            eta_grid: vec![0.2, 0.4, 0.6, 0.8, 1.0, 1.5, 2.0, 3.0, 4.0],
            train_size: 20_000,
            test_size: 5_000,
            width: 40,
            hidden_layers: 4,
            // Decaying the step size removes most of the excess loss that a
            // constant Adam step leaves at high SNR.
            train: TrainConfig {
                schedule: LrSchedule::Cosine {
                    final_fraction: 0.01,
                },
                ..TrainConfig::default()
            },
            x_sat: 1.5,
            omega: 1.0,
            mc_trials: 100_000,
            mc_test_points: 500,
            dim_factor: DimFactor::AsPrinted,
            seed: 0,
            seeds: 1,
            threads: 0,
            out: PathBuf::from(format!("{}.csv", kind.name())),
        }
    }

    pub fn mlp_spec(&self, width: usize) -> Result<MlpSpec> {
        MlpSpec::uniform(self.d, width, self.hidden_layers)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(Error::config(None, key, msg));
        if self.d == 0 {
            return bad("d", "must be >= 1");
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return bad("sigma2", "must be > 0");
        }
        if self.snr_db.is_empty() {
            return bad("snr_db", "grid must be nonempty");
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("snr_db", "values must be finite");
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return bad("widths", "grid must be nonempty with entries >= 1");
        }
        if self.train_sizes.is_empty() || self.train_sizes.contains(&0) {
            return bad("train_sizes", "grid must be nonempty with entries >= 1");
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("eta", "must be > 0");
        }
        if self.eta_grid.is_empty() || self.eta_grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return bad("eta_grid", "grid must be nonempty with entries > 0");
        }
        if self.train_size == 0 {
            return bad("train_size", "must be >= 1");
        }
        if self.test_size == 0 {
            return bad("test_size", "must be >= 1");
        }
        if self.width == 0 {
            return bad("width", "must be >= 1");
        }
        if self.seeds == 0 {
            return bad("seeds", "must be >= 1");
        }
        if self.mc_test_points == 0 {
            return bad("mc_test_points", "must be >= 1");
        }
        if self.experiment == ExperimentKind::NonlinearSnr && self.mc_trials < 1000 {
            return bad("mc_trials", "must be >= 1000");
        }
        if !(self.x_sat > 0.0 && self.x_sat.is_finite()) {
            return bad("x_sat", "must be > 0");
        }
        if !(self.omega >= 1.0 && self.omega.is_finite()) {
            return bad("omega", "must be >= 1");
        }
        self.train
            .validate()
            .map_err(|e| Error::config(None, "training", e.to_string()))
    }

    /// Applies one `key = value` setting. `line` is reported in errors.
    pub fn set(&mut self, key: &str, value: &str, line: Option<usize>) -> Result<()> {
        let err = |msg: String| Error::config(line, key, msg);
        let v = value.trim();
        match key {
            "experiment" => self.experiment = parse(v).map_err(err)?,
            "d" => self.d = parse(v).map_err(err)?,
            "sigma2" => self.sigma2 = parse(v).map_err(err)?,
            "snr_db" => self.snr_db = parse_list(v).map_err(err)?,
            "widths" => self.widths = parse_list(v).map_err(err)?,
            "train_sizes" => self.train_sizes = parse_list(v).map_err(err)?,
            "eta" => self.eta = parse(v).map_err(err)?,
            "eta_grid" => self.eta_grid = parse_list(v).map_err(err)?,
            "train_size" => self.train_size = parse(v).map_err(err)?,
            "test_size" => self.test_size = parse(v).map_err(err)?,
            "width" => self.width = parse(v).map_err(err)?,
            "hidden_layers" => self.hidden_layers = parse(v).map_err(err)?,
            "optimizer" => {
                self.train.optimizer = match v {
                    "adam" => match self.train.optimizer {
                        o @ Optimizer::Adam { .. } => o,
                        Optimizer::Sgd => Optimizer::adam(),
                    },
                    "sgd" => Optimizer::Sgd,
                    _ => return Err(err(format!("expected `adam` or `sgd`, got `{v}`"))),
                }
            }
            "adam_beta1" | "adam_beta2" | "adam_eps" => {
                let x: f64 = parse(v).map_err(err)?;
                let Optimizer::Adam { beta1, beta2, eps } = &mut self.train.optimizer else {
                    return Err(err("only valid with optimizer = adam".into()));
                };
                *match key {
                    "adam_beta1" => beta1,
                    "adam_beta2" => beta2,
                    _ => eps,
                } = x;
            }
            "learning_rate" => self.train.learning_rate = parse(v).map_err(err)?,
            "lr_schedule" => {
                self.train.schedule = match v {
                    "constant" => LrSchedule::Constant,
                    "cosine" => match self.train.schedule {
                        s @ LrSchedule::Cosine { .. } => s,
                        LrSchedule::Constant => LrSchedule::Cosine {
                            final_fraction: 0.0,
                        },
                    },
                    _ => return Err(err(format!("expected `constant` or `cosine`, got `{v}`"))),
                }
            }
            "lr_final_fraction" => {
                let x: f64 = parse(v).map_err(err)?;
                let LrSchedule::Cosine { final_fraction } = &mut self.train.schedule else {
                    return Err(err("only valid with lr_schedule = cosine".into()));
                };
                *final_fraction = x;
            }
            "batch_size" => self.train.batch_size = parse(v).map_err(err)?,
            "epochs" => self.train.epochs = parse(v).map_err(err)?,
            "shuffle" => self.train.shuffle = parse(v).map_err(err)?,
            "x_sat" => self.x_sat = parse(v).map_err(err)?,
            "omega" => self.omega = parse(v).map_err(err)?,
            "mc_trials" => self.mc_trials = parse(v).map_err(err)?,
            "mc_test_points" => self.mc_test_points = parse(v).map_err(err)?,
            "dim_factor" => {
                self.dim_factor = match v {
                    "as_printed" => DimFactor::AsPrinted,
                    "omitted" => DimFactor::Omitted,
                    _ => {
                        return Err(err(format!(
                            "expected `as_printed` or `omitted`, got `{v}`"
                        )))
                    }
                }
            }
            "seed" => self.seed = parse(v).map_err(err)?,
            "seeds" => self.seeds = parse(v).map_err(err)?,
            "threads" => self.threads = parse(v).map_err(err)?,
            "out" => {
                if v.is_empty() {
                    return Err(err("path must be nonempty".into()));
                }
                self.out = PathBuf::from(v)
            }
            _ => return Err(err("unknown key".into())),
        }
        Ok(())
    }

    /// Every key, one per line, in a form [`parse_config`] reads back to an
    /// equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("experiment", self.experiment.to_string());
        put("d", self.d.to_string());
        put("sigma2", self.sigma2.to_string());
        put("snr_db", join(&self.snr_db));
        put("widths", join(&self.widths));
        put("train_sizes", join(&self.train_sizes));
        put("eta", self.eta.to_string());
        put("eta_grid", join(&self.eta_grid));
        put("train_size", self.train_size.to_string());
        put("test_size", self.test_size.to_string());
        put("width", self.width.to_string());
        put("hidden_layers", self.hidden_layers.to_string());
        match self.train.optimizer {
            Optimizer::Sgd => put("optimizer", "sgd".into()),
            Optimizer::Adam { beta1, beta2, eps } => {
                put("optimizer", "adam".into());
                put("adam_beta1", beta1.to_string());
                put("adam_beta2", beta2.to_string());
                put("adam_eps", eps.to_string());
            }
        }
        put("learning_rate", self.train.learning_rate.to_string());
        match self.train.schedule {
            LrSchedule::Constant => put("lr_schedule", "constant".into()),
            LrSchedule::Cosine { final_fraction } => {
                put("lr_schedule", "cosine".into());
                put("lr_final_fraction", final_fraction.to_string());
            }
        }
        put("batch_size", self.train.batch_size.to_string());
        put("epochs", self.train.epochs.to_string());
        put("shuffle", self.train.shuffle.to_string());
        put("x_sat", self.x_sat.to_string());
        put("omega", self.omega.to_string());
        put("mc_trials", self.mc_trials.to_string());
        put("mc_test_points", self.mc_test_points.to_string());
        put(
            "dim_factor",
            match self.dim_factor {
                DimFactor::AsPrinted => "as_printed",
                DimFactor::Omitted => "omitted",
            }
            .into(),
        );
        put("seed", self.seed.to_string());
        put("seeds", self.seeds.to_string());
        put("threads", self.threads.to_string());
        put("out", self.out.display().to_string());
        s
    }

    /// Where the effective-config echo for this run is written.
    pub fn echo_path(&self) -> PathBuf {
        effective_config_path(&self.out)
    }
}

/// `results.csv` → `results.config`.
pub fn effective_config_path(out: &Path) -> PathBuf {
    out.with_extension("config")
}

fn parse<T: FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| format!("invalid value `{v}`: {e}"))
}

fn parse_list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    if v.is_empty() {
        return Err("list must be nonempty".into());
    }
    v.split(',').map(|item| parse(item.trim())).collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// One `key = value` line of a config file.
#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub key: String,
    pub value: String,
    /// 1-based line number; `None` for command-line overrides.
    pub line: Option<usize>,
}

/// Splits config text into settings. Blank lines and `#` comments are
/// skipped; a key may appear at most once.
pub fn parse_settings(text: &str) -> Result<Vec<Setting>> {
    let mut out: Vec<Setting> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(Error::config(Some(line), content, "expected `key = value`"));
        };
        let key = k.trim();
        if key.is_empty() {
            return Err(Error::config(Some(line), "", "empty key"));
        }
        if let Some(prev) = out.iter().find(|s| s.key == key) {
            return Err(Error::config(
                Some(line),
                key,
                format!(
                    "duplicate key (first set on line {})",
                    prev.line.unwrap_or(0)
                ),
            ));
        }
        out.push(Setting {
            key: key.to_string(),
            value: v.trim().to_string(),
            line: Some(line),
        });
    }
    Ok(out)
}

/// Builds a validated config from file text followed by overrides; later
/// settings win. The `experiment` key must be present in one of them and
/// selects the defaults every other key starts from.
pub fn parse_config(text: &str, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let mut settings = parse_settings(text)?;
    settings.extend(overrides.iter().map(|(k, v)| Setting {
        key: k.clone(),
        value: v.clone(),
        line: None,
    }));
    let kind_setting = settings
        .iter()
        .rev()
        .find(|s| s.key == "experiment")
        .ok_or_else(|| Error::config(None, "experiment", "missing required key"))?;
    let kind: ExperimentKind = kind_setting
        .value
        .parse()
        .map_err(|e: String| Error::config(kind_setting.line, "experiment", e))?;
    let mut cfg = ExperimentConfig::defaults(kind);
    // Optimizer and schedule come first so their sub-keys apply regardless
    // of file order.
    let priority = |k: &str| match k {
        "optimizer" | "lr_schedule" => 0,
        _ => 1,
    };
    let mut ordered: Vec<&Setting> = settings.iter().collect();
    ordered.sort_by_key(|s| priority(&s.key));
    for s in ordered {
        cfg.set(&s.key, &s.value, s.line)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and parses a config file.
pub fn load_config(path: &Path, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::config(
            None,
            "config",
            format!("cannot read {}: {e}", path.display()),
        )
    })?;
    parse_config(&text, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_experiment_is_named() {
        let err = parse_config("d = 2\n", &[]).unwrap_err();
        assert!(err.is_config_error());
        assert!(err.to_string().contains("`experiment`"), "{err}");
    }

    #[test]
    fn defaults_by_kind() {
        let c = parse_config("experiment = mismatch_eta\n", &[]).unwrap();
        assert_eq!(c.d, 1);
        assert_eq!(c.snr_db, vec![0.0, 25.0]);
        let c = parse_config("experiment = linear_snr", &[]).unwrap();
        assert_eq!(c.d, 2);
        assert_eq!(c.snr_db, vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0]);
        assert_eq!(
            (c.train_size, c.test_size, c.width, c.hidden_layers),
            (20_000, 5_000, 40, 4)
        );
        assert_eq!(
            c.train.schedule,
            LrSchedule::Cosine {
                final_fraction: 0.01
            }
        );
        assert_eq!(
            (c.train.learning_rate, c.train.batch_size, c.train.epochs),
            (1e-3, 128, 200)
        );
    }

    #[test]
    fn comments_lines_and_unknown_keys() {
        let text = "# header\nexperiment = linear_snr  # trailing\n\nd = 4\nbogus = 1\n";
        let err = parse_config(text, &[]).unwrap_err();
        assert_eq!(err.to_string(), "config line 5, key `bogus`: unknown key");
        let err = parse_config("experiment = linear_snr\nd = two\n", &[]).unwrap_err();
        assert!(
            err.to_string().starts_with("config line 2, key `d`"),
            "{err}"
        );
        let err = parse_config("experiment = linear_snr\nd 2\n", &[]).unwrap_err();
        assert!(err.to_string().contains("line 2"));
        let err = parse_config("experiment = linear_snr\nd=1\nd=2\n", &[]).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn overrides_win() {
        let text = "experiment = linear_snr\nd = 4\nseed = 3\n";
        let c = parse_config(text, &[("d".into(), "1".into())]).unwrap();
        assert_eq!((c.d, c.seed), (1, 3));
        let c = parse_config("", &[("experiment".into(), "width_sweep".into())]).unwrap();
        assert_eq!(c.experiment, ExperimentKind::WidthSweep);
    }

    #[test]
    fn validation_errors_are_config_errors() {
        for text in [
            "experiment = linear_snr\neta = 0\n",
            "experiment = linear_snr\ntrain_size = 0\n",
            "experiment = linear_snr\nsnr_db =\n",
            "experiment = linear_snr\nlearning_rate = -1\n",
            "experiment = nope\n",
            "experiment = linear_snr\nlr_schedule = constant\nlr_final_fraction = 0.1\n",
        ] {
            let err = parse_config(text, &[]).unwrap_err();
            assert!(err.is_config_error(), "{text}: {err}");
        }
    }

    #[test]
    fn sub_keys_independent_of_order() {
        let text = "lr_final_fraction = 0.05\nexperiment = linear_snr\nlr_schedule = cosine\n";
        let c = parse_config(text, &[]).unwrap();
        assert_eq!(
            c.train.schedule,
            LrSchedule::Cosine {
                final_fraction: 0.05
            }
        );
    }

    #[test]
    fn text_round_trip() {
        let text = "experiment = nonlinear_snr\nsnr_db = 0, 12.5 ,25\neta = 0.3\nlr_schedule = cosine\n\
                    lr_final_fraction = 0.01\nadam_eps = 1e-7\nseed = 18446744073709551615\nout = a b/c.csv\n";
        let c = parse_config(text, &[]).unwrap();
        assert_eq!(c.snr_db, vec![0.0, 12.5, 25.0]);
        let back = parse_config(&c.to_text(), &[]).unwrap();
        assert_eq!(back, c);
        let sgd = parse_config("experiment = width_sweep\noptimizer = sgd\n", &[]).unwrap();
        assert_eq!(parse_config(&sgd.to_text(), &[]).unwrap(), sgd);
    }

    #[test]
    fn echo_path_sits_beside_results() {
        assert_eq!(
            effective_config_path(Path::new("out/run.csv")),
            PathBuf::from("out/run.config")
        );
    }
}
