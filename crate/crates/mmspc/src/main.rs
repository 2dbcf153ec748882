use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mmspc::config::{MethodName, ScenarioFile};
use mmspc::core::analysis::{ageing_metric, randles_impedance};
use mmspc::core::sim::{run_scenario, Method, ScenarioConfig};
use mmspc::experiment::{analyze, compare_methods, sweep_modulation, DEFAULT_SWEEP};
use mmspc::output;
use mmspc::{Error, Result};

#[derive(Parser)]
#[command(
    name = "mmspc",
    version,
    about = "Module-current scheduling simulator for series-parallel battery strings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Scheduler: proposed, proposed-sensorless or reference.
    #[arg(long, global = true)]
    method: Option<String>,
    /// Feedback delay in milliseconds.
    #[arg(long, global = true)]
    delay_ms: Option<f64>,
    /// Simulated time in seconds.
    #[arg(long, global = true)]
    duration_s: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trace.
    Simulate,
    /// Run the proposed and the reference scheduler on the same load.
    Compare,
    /// Compare both schedulers over a range of modulation indexes.
    Sweep {
        /// Comma-separated modulation indexes.
        #[arg(long, value_delimiter = ',')]
        m: Option<Vec<f64>>,
    },
    /// Amplitude spectrum of one module current.
    Spectrum {
        /// Module index; defaults to the configured target.
        #[arg(long)]
        module: Option<usize>,
    },
    /// Ripple ratios after the degradation filter.
    Degrade {
        /// Module index; defaults to the configured target.
        #[arg(long)]
        module: Option<usize>,
    },
    /// Randles impedance over a logarithmic frequency grid.
    Randles {
        /// Lowest frequency in hertz.
        #[arg(long, default_value_t = 0.01)]
        f_min: f64,
        /// Highest frequency in hertz.
        #[arg(long, default_value_t = 10_000.0)]
        f_max: f64,
        /// Points per decade.
        #[arg(long, default_value_t = 20)]
        per_decade: usize,
    },
}

fn load(common: &Common) -> Result<ScenarioFile> {
    let mut file = match &common.config {
        Some(p) => ScenarioFile::load(p).map_err(|e| match e {
            Error::Io { path, source } => Error::Config(format!("{}: {source}", path.display())),
            other => other,
        })?,
        None => ScenarioFile::default(),
    };
    if let Some(m) = &common.method {
        file.method = match Method::from_name(m) {
            Some(Method::Proposed) => MethodName::Proposed,
            Some(Method::ProposedSensorless) => MethodName::ProposedSensorless,
            Some(Method::Reference) => MethodName::Reference,
            None => return Err(Error::Config(format!("unknown method {m:?}"))),
        };
    }
    if let Some(d) = common.delay_ms {
        file.control.feedback_delay_s = d / 1000.0;
    }
    if let Some(d) = common.duration_s {
        file.duration_s = d;
    }
    Ok(file)
}

fn module_arg(file: &ScenarioFile, module: Option<usize>) -> Result<usize> {
    let m = module.unwrap_or_else(|| file.target());
    if m >= file.n_modules {
        return Err(Error::Config(format!("module {m} out of range")));
    }
    Ok(m)
}

fn out_dir(dir: &Path) -> Result<&Path> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    Ok(dir)
}

fn written(path: &Path) {
    println!("{}", path.display());
}

fn simulate(cfg: &ScenarioConfig, file: &ScenarioFile, dir: &Path) -> Result<()> {
    let trace = run_scenario(cfg)?;
    let path = dir.join(format!("{}_trace.csv", cfg.method.name()));
    output::write_trace(&path, &trace)?;
    written(&path);
    match analyze(cfg, &trace, file.target()) {
        Ok(s) => eprintln!(
            "{}: module {} rms/avg {:.4}, ripple {:.4}, pattern {:.3}, {:.0} switch/s",
            cfg.method.name(),
            s.module,
            s.rms_avg,
            s.ripple,
            s.pattern,
            s.switch_rate
        ),
        Err(e) => eprintln!("no summary: {e}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let file = load(&cli.common)?;
    let dir = cli.common.out.as_path();
    match cli.command {
        Command::Randles {
            f_min,
            f_max,
            per_decade,
        } => {
            if !(f_min > 0.0 && f_max > f_min && per_decade > 0) {
                return Err(Error::Config(
                    "need 0 < f_min < f_max and per_decade > 0".into(),
                ));
            }
            let p = file.randles_params()?;
            let decades = (f_max / f_min).log10();
            let count = (decades * per_decade as f64).round() as usize + 1;
            let rows = (0..count)
                .map(|k| {
                    let f = f_min * 10f64.powf(k as f64 / per_decade as f64);
                    randles_impedance(f, &p).map(|z| (f, z))
                })
                .collect::<mmspc::core::Result<Vec<_>>>()?;
            let path = out_dir(dir)?.join("randles.csv");
            output::write_impedance(&path, &rows)?;
            written(&path);
        }
        Command::Simulate => {
            let cfg = file.scenario()?;
            simulate(&cfg, &file, out_dir(dir)?)?;
        }
        Command::Compare => {
            let cfg = file.scenario()?;
            let c = compare_methods(&cfg, file.target())?;
            let dir = out_dir(dir)?;
            for run in c.runs() {
                let name = run.summary.method.name();
                let path = dir.join(format!("{name}_trace.csv"));
                output::write_trace(&path, &run.trace)?;
                written(&path);
                let path = dir.join(format!("{name}_spectrum.csv"));
                output::write_spectrum(&path, &run.summary.spectrum)?;
                written(&path);
            }
            let path = dir.join("comparison.csv");
            output::write_comparison(&path, &c)?;
            written(&path);
        }
        Command::Sweep { m } => {
            let cfg = file.scenario()?;
            let ms = m.unwrap_or_else(|| DEFAULT_SWEEP.to_vec());
            let s = sweep_modulation(&cfg, &ms, file.target())?;
            let dir = out_dir(dir)?;
            let path = dir.join("sweep.csv");
            output::write_sweep(&path, &s)?;
            written(&path);
            let path = dir.join("switching.csv");
            output::write_switching(&path, &s)?;
            written(&path);
        }
        Command::Spectrum { module } => {
            let cfg = file.scenario()?;
            let module = module_arg(&file, module)?;
            let trace = run_scenario(&cfg)?;
            let spectrum =
                mmspc::spectrum::amplitude_spectrum(&trace.module_current(module), trace.f_rate)?;
            let path = out_dir(dir)?.join(format!("{}_spectrum_{module}.csv", cfg.method.name()));
            output::write_spectrum(&path, &spectrum)?;
            written(&path);
        }
        Command::Degrade { module } => {
            let cfg = file.scenario()?;
            let module = module_arg(&file, module)?;
            let trace = run_scenario(&cfg)?;
            let report = ageing_metric(&trace.module_current(module), &cfg.cutoffs, trace.f_rate)?;
            let path = out_dir(dir)?.join(format!("{}_ageing_{module}.csv", cfg.method.name()));
            output::write_ageing(&path, &report)?;
            written(&path);
            eprintln!(
                "raw rms/avg {:.4}, raw ripple {:.4}",
                report.raw_rms_avg, report.raw_ripple
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
