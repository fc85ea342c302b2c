//! Command line front end. `run_cli` is the whole program; `main` only
//! forwards the process arguments and exit code.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use axisreg_core::geometry::AxisLabel;
use axisreg_core::io::{load_cloud, load_correspondences, save_cloud, save_correspondences};
use axisreg_core::pipeline::{register, register_spcr, RegistrationConfig};
use axisreg_core::report::{run_bench, write_csv, BenchConfig, ExperimentReport, GroundTruthJson, PoseErrors, ResultJson};
use axisreg_core::synth::{synth_correspondences, synth_spcr, SpcrSynthConfig, SynthConfig};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_REGISTRATION_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "axisreg", version, about = "Globally optimal rigid registration by axis-wise branch and bound")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Axis {
    X,
    Y,
    Z,
}

impl From<Axis> for AxisLabel {
    fn from(a: Axis) -> Self {
        match a {
            Axis::X => AxisLabel::X,
            Axis::Y => AxisLabel::Y,
            Axis::Z => AxisLabel::Z,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Register a correspondence file (`px py pz qx qy qz` per line).
    Register {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        epsilon: f64,
        /// Least-squares refit on the final joint inliers.
        #[arg(long)]
        refine: bool,
        /// Write the result JSON here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Register two clouds without correspondences.
    Spcr {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        epsilon: f64,
        /// Axis solved with the correspondence-free objective.
        #[arg(long, value_enum, default_value = "x")]
        axis: Axis,
        #[arg(long)]
        refine: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate a synthetic correspondence set with planted ground truth.
    Synth {
        #[arg(long)]
        n: usize,
        /// Outlier rate.
        #[arg(long, default_value_t = 0.5)]
        eta: f64,
        /// Gaussian noise standard deviation on the targets.
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100.0)]
        cube: f64,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Generate a partially overlapping cloud pair.
    SynthSpcr {
        #[arg(long, default_value_t = 100)]
        m: usize,
        /// Fraction of points kept in the target.
        #[arg(long, default_value_t = 0.6)]
        rho: f64,
        #[arg(long, default_value_t = 0.001)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// XYZ or ASCII PLY cloud to sample from; a built-in shape otherwise.
        #[arg(long)]
        cloud: Option<PathBuf>,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Rotation and translation error of a result against ground truth.
    Eval {
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Run repeated synthetic trials described by a JSON config; emits CSV.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Registration(String),
}

impl From<axisreg_core::Error> for Failure {
    fn from(e: axisreg_core::Error) -> Self {
        if e.is_registration_failure() {
            Failure::Registration(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_failure(path, e))
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Usage(e.to_string()))?;
    text.push('\n');
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| io_failure(p, e)),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Usage(e.to_string())),
    }
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Register {
            input,
            epsilon,
            refine,
            output,
        } => {
            let set = load_correspondences(&input)?;
            let config = RegistrationConfig {
                refine,
                ..RegistrationConfig::default()
            };
            let result = register(&set, epsilon, &config)?;
            info!("consensus {} of {}", result.consensus, set.len());
            write_json(output.as_deref(), &ResultJson::from_result(&result, epsilon, "correspondence"))
        }
        Command::Spcr {
            source,
            target,
            epsilon,
            axis,
            refine,
            output,
        } => {
            let p = load_cloud(&source)?;
            let q = load_cloud(&target)?;
            let config = RegistrationConfig {
                refine,
                spcr_axis: axis.into(),
                ..RegistrationConfig::default()
            };
            let result = register_spcr(&p, &q, epsilon, &config)?;
            info!("consensus {} of {}", result.consensus, p.len());
            write_json(output.as_deref(), &ResultJson::from_result(&result, epsilon, "spcr"))
        }
        Command::Synth {
            n,
            eta,
            sigma,
            seed,
            cube,
            output,
            gt,
        } => {
            let cfg = SynthConfig {
                n,
                cube_half_width: cube,
                noise_sigma: sigma,
                outlier_rate: eta,
                seed,
            };
            let (set, truth) = synth_correspondences(&cfg)?;
            save_correspondences(&output, &set)?;
            write_json(Some(&gt), &GroundTruthJson::from_transform(&truth))
        }
        Command::SynthSpcr {
            m,
            rho,
            sigma,
            seed,
            cloud,
            source,
            target,
            gt,
        } => {
            let cfg = SpcrSynthConfig {
                m,
                overlap_rate: rho,
                noise_sigma: sigma,
                seed,
                cloud,
            };
            let (p, q, truth) = synth_spcr(&cfg)?;
            save_cloud(&source, &p)?;
            save_cloud(&target, &q)?;
            write_json(Some(&gt), &GroundTruthJson::from_transform(&truth))
        }
        Command::Eval { result, gt } => {
            let est = read_json::<ResultJson>(&result)?.transform()?;
            let truth = read_json::<GroundTruthJson>(&gt)?.transform()?;
            write_json(None, &PoseErrors::between(&truth, &est))
        }
        Command::Bench { config, output } => {
            let cfg: BenchConfig = read_json(&config)?;
            let records = run_bench(&cfg)?;
            let written = match &output {
                Some(path) => {
                    let file = File::create(path).map_err(|e| io_failure(path, e))?;
                    write_csv(&records, BufWriter::new(file)).map_err(|e| io_failure(path, e))
                }
                None => write_csv(&records, io::stdout().lock()).map_err(|e| Failure::Usage(e.to_string())),
            };
            written?;
            let summary = ExperimentReport::from_records(&records);
            eprintln!(
                "{} trials, success rate {:.1}%, mean E_R {:.4} deg, mean E_t {:.4}, mean runtime {:.1} ms",
                summary.trials,
                summary.success_rate * 100.0,
                summary.mean_er_deg,
                summary.mean_et,
                summary.mean_runtime_ms
            );
            Ok(())
        }
    }
}

/// Parses `argv` (program name first) and runs the command.
///
/// Returns 0 on success, 1 when registration fails, 2 on usage or I/O errors.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Registration(msg)) => {
            eprintln!("registration failed: {msg}");
            EXIT_REGISTRATION_FAILED
        }
    }
}
