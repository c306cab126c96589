//! Command-line interface: dataset generation, training and evaluation.
//!
//! Every flag can also come from a TOML file passed with `--config`, under a
//! table named after the subcommand; flags win over file values. The seed falls
//! back to the `CURVNET_SEED` environment variable, then to 0.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{
    circle_count, generate_circle_samples, hex_digest, read_samples_csv_verified, split, subsample,
    write_samples_csv, DatasetError, DatasetSpec, SplitSet,
};
use crate::eval::{emit_report, run_experiments, select_experiments, sort_reports, EvalError, ModelStore};
use crate::nnet::{mean_absolute_error, parse_architecture, train_with_progress, NnetError, TrainConfig};
use crate::numerics::{ReinitParams, ReinitScheme, DEFAULT_CFL};

pub const SEED_ENV: &str = "CURVNET_SEED";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "curvnet-dataset";
pub const MANIFEST_VERSION: u32 = 1;

/// Training-set size of the desk-scale profile.
pub const DESK_TRAIN_SAMPLES: usize = 300_000;
/// Epoch cap of the desk-scale profile.
pub const DESK_MAX_EPOCHS: usize = 60;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Data(_) => 3,
            Self::Numerical(_) => 4,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::InvalidSpec(_) | DatasetError::EmptyRadiusRange { .. } => Self::Usage(e.to_string()),
            DatasetError::Numerics(_) => Self::Numerical(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<NnetError> for CliError {
    fn from(e: NnetError) -> Self {
        match e {
            NnetError::NonFiniteLoss { .. } => Self::Numerical(e.to_string()),
            NnetError::InvalidArchitecture(_) | NnetError::InvalidConfig(_) => Self::Usage(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::UnknownExperiment(_) => Self::Usage(e.to_string()),
            EvalError::Numerics(_) => Self::Numerical(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "curvnet", version, about = "Level-set curvature: numerical baseline and learned stencil model")]
pub struct Cli {
    /// TOML file with defaults for any flag, in [gen], [train] and [eval] tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the circle training set with a 70/15/15 split.
    Gen(GenArgs),
    /// Train a network on a generated dataset.
    Train(TrainArgs),
    /// Run flower experiments and write error reports.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReinitArgs {
    /// Reinitialization scheme: first-order, eno2 or eno2-subcell.
    #[arg(long)]
    pub scheme: Option<ReinitScheme>,
    /// Pseudo-time CFL number.
    #[arg(long)]
    pub cfl: Option<f64>,
}

impl ReinitArgs {
    fn or(self, file: Self) -> Self {
        Self {
            scheme: self.scheme.or(file.scheme),
            cfl: self.cfl.or(file.cfl),
        }
    }

    fn params(&self) -> ReinitParams {
        ReinitParams {
            scheme: self.scheme.unwrap_or_default(),
            cfl: self.cfl.unwrap_or(DEFAULT_CFL),
            ..ReinitParams::default()
        }
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenArgs {
    /// Grid nodes per unit length (at least 64).
    #[arg(long)]
    pub rho: Option<usize>,
    /// Random seed; falls back to the config file, then CURVNET_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated reinitialization checkpoints.
    #[arg(long, value_delimiter = ',')]
    pub iters: Option<Vec<u32>>,
    /// Random centers per radius.
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Write into a non-empty output directory.
    #[arg(long)]
    #[serde(default)]
    pub force: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub reinit: ReinitArgs,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainArgs {
    /// Dataset directory written by `gen`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Hidden layers as WIDTHxDEPTH, e.g. 128x4 or 140x4.
    #[arg(long)]
    pub arch: Option<String>,
    /// Model file to write; the epoch log goes next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Subsample to 300k training samples and cap at 60 epochs (default).
    #[arg(long, conflicts_with = "full_scale")]
    #[serde(default)]
    pub desk_scale: bool,
    /// Train on the complete dataset.
    #[arg(long)]
    #[serde(default)]
    pub full_scale: bool,
    /// Random seed; falls back to the config file, then CURVNET_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Mini-batch size (default 32).
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate (default 1.5e-4).
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Epoch cap (default 200; the desk-scale profile limits it to 60).
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Epochs without validation improvement before stopping (default 30).
    #[arg(long)]
    pub patience: Option<usize>,
    /// Training-set size of the desk-scale profile.
    #[arg(long)]
    pub train_samples: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalArgs {
    /// Directory of model files, matched to experiments by training resolution.
    #[arg(long)]
    pub models: Option<PathBuf>,
    /// Report output directory.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Catalog entry name, or `all`.
    #[arg(long)]
    pub experiment: Option<String>,
    /// Score only the numerical method.
    #[arg(long)]
    #[serde(default)]
    pub numerical_only: bool,
    /// Experiments run concurrently.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub reinit: ReinitArgs,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    gen: GenArgs,
    #[serde(default)]
    train: TrainArgs,
    #[serde(default)]
    eval: EvalArgs,
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile, CliError> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}

fn default_seed() -> Result<u64, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got '{v}'"))),
        Err(_) => Ok(0),
    }
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("missing required option --{flag}")))
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let started = Instant::now();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    eprintln!("wall time: {:.3} s", started.elapsed().as_secs_f64());
    code
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Gen(args) => cmd_gen(args, config.gen),
        Command::Train(args) => cmd_train(args, config.train),
        Command::Eval(args) => cmd_eval(args, config.eval),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub path: String,
    pub samples: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReinitEcho {
    pub scheme: ReinitScheme,
    pub cfl: f64,
}

/// Description of a generated dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub spec: DatasetSpec,
    pub reinit: ReinitEcho,
    pub h: f64,
    pub circle_count: usize,
    pub total_samples: usize,
    pub train: ManifestFile,
    pub validation: ManifestFile,
    pub test: ManifestFile,
    /// SHA-256 over the three file digests, in train/validation/test order.
    pub digest: String,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Data(format!("cannot read dataset manifest {}: {e}", path.display())))?;
        let manifest: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("invalid manifest {}: {e}", path.display())))?;
        if manifest.format != MANIFEST_FORMAT || manifest.version != MANIFEST_VERSION {
            return Err(CliError::Data(format!(
                "{} is not a version {MANIFEST_VERSION} {MANIFEST_FORMAT} manifest",
                path.display()
            )));
        }
        Ok(manifest)
    }

    /// Reads the three splits, verifying every file digest.
    pub fn read_splits(&self, dir: &Path) -> Result<SplitSet, CliError> {
        let read = |f: &ManifestFile| -> Result<_, CliError> {
            let samples = read_samples_csv_verified(&dir.join(&f.path), &f.sha256)?;
            if samples.len() != f.samples {
                return Err(CliError::Data(format!(
                    "{} holds {} samples, manifest says {}",
                    f.path,
                    samples.len(),
                    f.samples
                )));
            }
            Ok(samples)
        };
        Ok(SplitSet {
            train: read(&self.train)?,
            validation: read(&self.validation)?,
            test: read(&self.test)?,
        })
    }
}

fn combined_digest(files: [&ManifestFile; 3]) -> String {
    let mut hasher = Sha256::new();
    for f in files {
        hasher.update(f.sha256.as_bytes());
    }
    hex_digest(&hasher.finalize())
}

fn cmd_gen(args: GenArgs, file: GenArgs) -> Result<(), CliError> {
    let reinit = args.reinit.or(file.reinit);
    let out = required(args.out.or(file.out), "out")?;
    let defaults = DatasetSpec::new(0, 0);
    let spec = DatasetSpec {
        rho: required(args.rho.or(file.rho), "rho")?,
        reinit_iterations: args.iters.or(file.iters).unwrap_or(defaults.reinit_iterations),
        repeats_per_radius: args.repeats.or(file.repeats).unwrap_or(defaults.repeats_per_radius),
        seed: args.seed.or(file.seed).map_or_else(default_seed, Ok)?,
    };
    spec.validate()?;
    let params = reinit.params();
    params.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let non_empty = out.is_dir() && fs::read_dir(&out).map(|mut d| d.next().is_some()).unwrap_or(false);
    if non_empty && !(args.force || file.force) {
        return Err(CliError::Usage(format!(
            "{} exists and is not empty; pass --force to overwrite",
            out.display()
        )));
    }
    fs::create_dir_all(&out).map_err(|e| CliError::Data(format!("cannot create {}: {e}", out.display())))?;

    eprintln!(
        "generating rho={} ({} radii x {} repeats, iterations {:?})",
        spec.rho,
        circle_count(spec.rho),
        spec.repeats_per_radius,
        spec.reinit_iterations
    );
    let samples = generate_circle_samples(&spec, &params)?;
    let total = samples.len();
    let parts = split(&samples, spec.seed)?;
    drop(samples);

    let write = |name: &str, samples: &[crate::dataset::Sample]| -> Result<ManifestFile, CliError> {
        let sha256 = write_samples_csv(&out.join(name), samples)?;
        Ok(ManifestFile {
            path: name.to_string(),
            samples: samples.len(),
            sha256,
        })
    };
    let train = write("train.csv", &parts.train)?;
    let validation = write("validation.csv", &parts.validation)?;
    let test = write("test.csv", &parts.test)?;
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        h: spec.h(),
        circle_count: circle_count(spec.rho),
        reinit: ReinitEcho {
            scheme: params.scheme,
            cfl: params.cfl,
        },
        spec,
        total_samples: total,
        digest: combined_digest([&train, &validation, &test]),
        train,
        validation,
        test,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let path = out.join(MANIFEST_FILE);
    fs::write(&path, text + "\n").map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    println!(
        "wrote {total} samples (train {}, validation {}, test {}) to {}; digest {}",
        manifest.train.samples,
        manifest.validation.samples,
        manifest.test.samples,
        out.display(),
        manifest.digest
    );
    Ok(())
}

/// Applies the desk-scale profile: the training split is subsampled to
/// `train_samples` and the validation and test splits by the same fraction.
pub fn desk_scale_split(parts: &SplitSet, train_samples: usize, seed: u64) -> SplitSet {
    let fraction = (train_samples as f64 / parts.train.len() as f64).min(1.0);
    let scaled = |n: usize| ((n as f64 * fraction).round() as usize).max(1);
    SplitSet {
        train: subsample(&parts.train, train_samples, seed),
        validation: subsample(&parts.validation, scaled(parts.validation.len()), seed.wrapping_add(1)),
        test: subsample(&parts.test, scaled(parts.test.len()), seed.wrapping_add(2)),
    }
}

/// Path of the per-epoch log written next to a model file.
pub fn log_path(model_path: &Path) -> PathBuf {
    let mut name = model_path.file_stem().unwrap_or_default().to_os_string();
    name.push(".log.csv");
    model_path.with_file_name(name)
}

fn cmd_train(args: TrainArgs, file: TrainArgs) -> Result<(), CliError> {
    let data = required(args.data.or(file.data), "data")?;
    let out = required(args.out.or(file.out), "out")?;
    let arch = parse_architecture(&args.arch.or(file.arch).unwrap_or_else(|| "128x4".into()))?;
    let full_scale = args.full_scale || (file.full_scale && !args.desk_scale);
    let defaults = TrainConfig::default();
    let mut config = TrainConfig {
        batch_size: args.batch_size.or(file.batch_size).unwrap_or(defaults.batch_size),
        learning_rate: args.learning_rate.or(file.learning_rate).unwrap_or(defaults.learning_rate),
        max_epochs: args.max_epochs.or(file.max_epochs).unwrap_or(defaults.max_epochs),
        patience: args.patience.or(file.patience).unwrap_or(defaults.patience),
        seed: args.seed.or(file.seed).map_or_else(default_seed, Ok)?,
        ..defaults
    };
    config.validate()?;

    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::Data(format!("cannot create {}: {e}", parent.display())))?;
    }
    let manifest = Manifest::load(&data)?;
    let mut parts = manifest.read_splits(&data)?;
    if !full_scale {
        let train_samples = args.train_samples.or(file.train_samples).unwrap_or(DESK_TRAIN_SAMPLES);
        parts = desk_scale_split(&parts, train_samples, config.seed);
        config.max_epochs = config.max_epochs.min(DESK_MAX_EPOCHS);
    }
    eprintln!(
        "training {:?} on {} samples ({} validation, {} test), up to {} epochs",
        arch,
        parts.train.len(),
        parts.validation.len(),
        parts.test.len(),
        config.max_epochs
    );

    let (mut model, log) = train_with_progress(&parts, &arch, &config, |e| {
        eprintln!(
            "epoch {:>3}  train MSE {:.6e}  validation MAE {:.6e}",
            e.epoch + 1,
            e.train_mse,
            e.validation_mae
        );
    })?;
    model.rho_tag = Some(manifest.spec.rho);
    model.save(&out)?;

    let mut text = String::from("epoch,train_mse,validation_mae\n");
    for e in &log.epochs {
        text.push_str(&format!("{},{:.16e},{:.16e}\n", e.epoch + 1, e.train_mse, e.validation_mae));
    }
    let log_file = log_path(&out);
    fs::write(&log_file, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", log_file.display())))?;

    let test_mae = if parts.test.is_empty() {
        f64::NAN
    } else {
        mean_absolute_error(&model, &parts.test)
    };
    println!(
        "best epoch {} of {}: validation MAE {:.6e}, test MAE {:.6e}; model written to {}",
        log.best_epoch + 1,
        log.epochs.len(),
        log.best_validation_mae(),
        test_mae,
        out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs, file: EvalArgs) -> Result<(), CliError> {
    let reinit = args.reinit.or(file.reinit).params();
    reinit.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let report_dir = required(args.report.or(file.report), "report")?;
    let experiments = select_experiments(&args.experiment.or(file.experiment).unwrap_or_else(|| "all".into()))?;
    let numerical_only = args.numerical_only || file.numerical_only;
    let jobs = args.jobs.or(file.jobs).unwrap_or(1);
    if jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let models = if numerical_only {
        ModelStore::default()
    } else {
        let dir = args.models.or(file.models).ok_or_else(|| {
            CliError::Usage("missing required option --models (or pass --numerical-only)".into())
        })?;
        ModelStore::load_dir(&dir)?
    };

    let mut reports = Vec::new();
    for result in run_experiments(&experiments, &models, &reinit, jobs) {
        let result = result?;
        if result.neural_missing && !numerical_only {
            eprintln!(
                "warning: no model with rho_tag {} for {}; numerical method only",
                result.spec.rho_tag, result.spec.name
            );
        }
        reports.extend(result.reports);
    }
    sort_reports(&mut reports);
    emit_report(&reports, &report_dir)?;

    let mut stdout = std::io::stdout().lock();
    for r in &reports {
        let _ = writeln!(
            stdout,
            "{:<24} {:<9} it{:<3} n={:<4} MAE {:.6e}  MaxAE {:.6e}",
            r.experiment,
            r.method.label(),
            r.iterations,
            r.stats.n,
            r.stats.mae,
            r.stats.max_ae
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_win_over_config_values() {
        let config: ConfigFile = toml::from_str(
            "[gen]\nrho = 128\nrepeats = 2\nscheme = \"eno2\"\n[eval]\njobs = 3\nnumerical_only = true\n",
        )
        .unwrap();
        let cli = Cli::try_parse_from(["curvnet", "gen", "--rho", "64", "--out", "x"]).unwrap();
        let Command::Gen(args) = cli.command else { panic!("expected gen") };
        assert_eq!(args.rho.or(config.gen.rho), Some(64));
        assert_eq!(args.repeats.or(config.gen.repeats), Some(2));
        assert_eq!(args.reinit.or(config.gen.reinit).scheme, Some(ReinitScheme::Eno2));
        assert_eq!(config.eval.jobs, Some(3));
        assert!(config.eval.numerical_only);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(toml::from_str::<ConfigFile>("[gen]\nrhoo = 1\n").is_err());
    }

    #[test]
    fn iteration_list_parses() {
        let cli = Cli::try_parse_from(["curvnet", "gen", "--iters", "5,10,20"]).unwrap();
        let Command::Gen(args) = cli.command else { panic!("expected gen") };
        assert_eq!(args.iters, Some(vec![5, 10, 20]));
    }

    #[test]
    fn desk_and_full_scale_conflict() {
        assert!(Cli::try_parse_from(["curvnet", "train", "--desk-scale", "--full-scale"]).is_err());
    }

    #[test]
    fn log_path_sits_next_to_the_model() {
        assert_eq!(log_path(Path::new("m/rho256.json")), PathBuf::from("m/rho256.log.csv"));
    }

    #[test]
    fn desk_scale_split_scales_every_part() {
        let sample = |k: usize| crate::dataset::Sample {
            stencil: [k as f64; 9],
            target: 0.0,
        };
        let parts = SplitSet {
            train: (0..1000).map(sample).collect(),
            validation: (0..200).map(sample).collect(),
            test: (0..300).map(sample).collect(),
        };
        let desk = desk_scale_split(&parts, 100, 1);
        assert_eq!((desk.train.len(), desk.validation.len(), desk.test.len()), (100, 20, 30));
    }
}
