use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, warn};
use serde::Serialize;

use perifract::config::{parse_config, RunConfig};
use perifract::harness::{desk_scale_preset, run_convergence_study, DESK_EPSILONS};
use perifract::material::{calibrate, gc_closed_form, Calibration, InfluenceFunction, MaterialModel};
use perifract::output::{create_dir, write_json};
use perifract::run::{resolve_threads, run};
use perifract::verify::{render, verify_all};
use perifract::Result;

#[derive(Parser)]
#[command(name = "perifract", version, about = "Peridynamic mode-I fracture simulator")]
struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "PERIFRACT_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one configuration.
    Run {
        #[arg(short, long)]
        config: PathBuf,
        /// Output directory (default: output.dir).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Print the calibrated material in both calibration modes.
    Calibrate {
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Also write calibration.json here.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the property suites.
    Verify {
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for verify.json (default: current directory).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run one configuration at several horizons and compare them.
    Converge {
        /// Base configuration (default: the desk-scale preset).
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Horizons in m, coarse to fine.
        #[arg(long, value_delimiter = ',')]
        epsilons: Option<Vec<f64>>,
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Run the horizons concurrently.
        #[arg(long)]
        parallel: bool,
    },
    /// Print the desk-scale preset as a config file.
    Preset,
}

fn load(config: Option<&Path>) -> Result<RunConfig> {
    match config {
        Some(p) => parse_config(p),
        None => Ok(RunConfig::default()),
    }
}

fn with_pool<T>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T>
where
    T: Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_threads(threads))
        .build()
        .map_err(|e| perifract::Error::Domain(format!("thread pool: {e}")))?;
    pool.install(f)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

#[derive(Serialize)]
struct CalibrationRow {
    mode: &'static str,
    target_youngs_modulus: f64,
    target_gc: f64,
    c: f64,
    beta: f64,
    r_c: f64,
    r_plus: f64,
    mu: f64,
    lambda: f64,
    youngs_modulus: f64,
    gc: f64,
    gc_closed_form: f64,
    cs: f64,
    cl: f64,
    rayleigh: f64,
}

fn calibration_row(m: &MaterialModel) -> CalibrationRow {
    CalibrationRow {
        mode: m.calibration.name(),
        target_youngs_modulus: m.target_youngs_modulus,
        target_gc: m.target_gc,
        c: m.potential.c(),
        beta: m.potential.beta(),
        r_c: m.potential.r_c(),
        r_plus: m.potential.r_plus(),
        mu: m.mu,
        lambda: m.lambda,
        youngs_modulus: m.youngs_modulus,
        gc: m.gc,
        gc_closed_form: gc_closed_form(m),
        cs: m.cs,
        cl: m.cl,
        rayleigh: m.rayleigh_speed(),
    }
}

fn cmd_calibrate(config: Option<&Path>, out: Option<&Path>) -> Result<bool> {
    let cfg = load(config)?;
    let printed = match cfg.calibration() {
        p @ Calibration::Printed { .. } => p,
        Calibration::SelfConsistent => Calibration::printed(),
    };
    let rows: Vec<CalibrationRow> = [Calibration::SelfConsistent, printed]
        .iter()
        .map(|c| {
            calibrate(
                cfg.youngs_modulus,
                cfg.gc,
                cfg.rho,
                InfluenceFunction::linear_decay(),
                c,
            )
            .map(|m| calibration_row(&m))
        })
        .collect::<Result<_>>()?;
    println!(
        "{:<16} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>10} {:>10} {:>10}",
        "mode", "c", "beta", "mu_Pa", "lambda_Pa", "E_Pa", "Gc_J/m2", "cs_m/s", "cl_m/s", "cR_m/s"
    );
    for r in &rows {
        println!(
            "{:<16} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e} {:>10.2} {:>10.2} {:>10.2}",
            r.mode, r.c, r.beta, r.mu, r.lambda, r.youngs_modulus, r.gc, r.cs, r.cl, r.rayleigh
        );
    }
    if let Some(dir) = out {
        create_dir(dir)?;
        write_json(&dir.join("calibration.json"), &rows)?;
    }
    Ok(true)
}

fn cmd_verify(config: Option<&Path>, seed: Option<u64>, out: Option<&Path>, threads: usize) -> Result<bool> {
    let cfg = load(config)?;
    let model = cfg.material()?;
    let seed = seed.unwrap_or(cfg.seed);
    let report = with_pool(threads, || verify_all(&model, seed, cfg.gauss_order, cfg.n_sub))?;
    print!("{}", render(&report));
    let dir = out.unwrap_or(Path::new("."));
    create_dir(dir)?;
    write_json(&dir.join("verify.json"), &report)?;
    Ok(report.pass)
}

fn cmd_converge(
    config: Option<&Path>,
    epsilons: Option<Vec<f64>>,
    out: Option<PathBuf>,
    parallel: bool,
    threads: usize,
) -> Result<bool> {
    let mut base = match config {
        Some(p) => parse_config(p)?,
        None => desk_scale_preset(),
    };
    if threads > 0 {
        base.threads = threads;
    }
    let epsilons = epsilons.unwrap_or_else(|| DESK_EPSILONS.to_vec());
    let dir = out.unwrap_or_else(|| base.dir.clone());
    let report = run_convergence_study(&base, &epsilons, &dir, parallel)?;
    print_json(&report)?;
    for f in &report.failures {
        warn!("horizon {:e}: {}", f.epsilon, f.error.as_deref().unwrap_or("failed"));
    }
    Ok(report.failures.is_empty() && report.tip_ordering_pass && report.sz_nesting_pass)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let threads = cli.threads;
    let result = match cli.cmd {
        Cmd::Run { config, out } => parse_config(&config).and_then(|mut cfg| {
            if threads > 0 {
                cfg.threads = threads;
            }
            let dir = out.unwrap_or_else(|| cfg.dir.clone());
            let summary = run(&cfg, &dir)?;
            print_json(&summary)?;
            Ok(true)
        }),
        Cmd::Calibrate { config, out } => cmd_calibrate(config.as_deref(), out.as_deref()),
        Cmd::Verify { config, seed, out } => cmd_verify(config.as_deref(), seed, out.as_deref(), threads),
        Cmd::Converge {
            config,
            epsilons,
            out,
            parallel,
        } => cmd_converge(config.as_deref(), epsilons, out, parallel, threads),
        Cmd::Preset => {
            print!("{}", desk_scale_preset().echo());
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            error!("one or more checks failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            error!("{e}");
            ExitCode::from(2)
        }
    }
}
