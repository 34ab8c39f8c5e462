//! `fracmono`: run scenario files through the monotonicity pipeline.
//!
//! Exit codes: 0 success, 1 a check failed, 2 configuration error,
//! 3 numerical or i/o failure. A `report.json` is written whenever the
//! output directory is known.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod error;
mod report;
mod scenario;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use fracmono_core::Schedule;

use commands::{Log, Mode};
use error::Failure;
use report::{sha256_hex, write_report, Outputs, RunReport};

#[derive(Parser, Debug)]
#[command(name = "fracmono", version, about = "Monotonicity-based inversion for the 1D fractional Schroedinger equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; overrides the scenario's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// PRNG seed; overrides `prng.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for per-pixel sweeps; 1 runs sequentially.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Randomized order and inequality checks on the scenario grid.
    Verify(Common),
    /// Exterior-value Dirichlet solve for q0.
    Forward(Common),
    /// DtN matrices for q0, q1 and their difference.
    Dtn(Common),
    /// Pixel-wise reconstruction of q0 from its DtN matrix.
    ReconPotential(Common),
    /// Pixel-wise support of q1 - q0.
    ReconShape {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "indefinite")]
        mode: Mode,
    },
    /// Localized potentials over the lambda_reg sweep.
    Localize(Common),
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::Verify(c) => ("verify", c),
            Command::Forward(c) => ("forward", c),
            Command::Dtn(c) => ("dtn", c),
            Command::ReconPotential(c) => ("recon-potential", c),
            Command::ReconShape { common, .. } => ("recon-shape", common),
            Command::Localize(c) => ("localize", c),
        }
    }
}

fn schedule_for(threads: Option<usize>, notes: &mut Vec<String>) -> Result<Schedule, Failure> {
    match threads {
        Some(0) => Err(Failure::Config("--threads: must be at least 1".into())),
        Some(1) => Ok(Schedule::Sequential),
        Some(n) => {
            #[cfg(feature = "parallel")]
            {
                if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
                    notes.push("rayon pool was already initialized; --threads ignored".into());
                }
                Ok(Schedule::Parallel)
            }
            #[cfg(not(feature = "parallel"))]
            {
                notes.push(format!("built without the parallel feature; --threads {n} runs sequentially"));
                Ok(Schedule::Sequential)
            }
        }
        None if cfg!(feature = "parallel") => Ok(Schedule::Parallel),
        None => Ok(Schedule::Sequential),
    }
}

struct Run {
    digest: Option<String>,
    seed: Option<u64>,
    schedule: Schedule,
    out_dir: Option<PathBuf>,
    log: Log,
    files: Vec<report::FileEntry>,
}

fn execute(cmd: &Command, run: &mut Run) -> Result<(), Failure> {
    let (_, common) = cmd.parts();
    run.out_dir = common.out.clone();
    let bytes = std::fs::read(&common.scenario)
        .map_err(|e| Failure::Config(format!("--scenario {}: {e}", common.scenario.display())))?;
    run.digest = Some(sha256_hex(&bytes));
    let text = String::from_utf8(bytes).map_err(|_| Failure::Config("scenario: not valid UTF-8".into()))?;
    let sc = scenario::parse(&text)?;
    if let Some(d) = &sc.description {
        run.log.notes.push(format!("scenario: {d}"));
    }
    if run.out_dir.is_none() {
        run.out_dir = Some(sc.output_dir.clone());
    }
    let seed = common.seed.unwrap_or(sc.prng.seed);
    run.seed = Some(seed);
    run.schedule = schedule_for(common.threads, &mut run.log.notes)?;
    let prepared = sc.prepare(run.schedule)?;
    if prepared.q0.min() == 0.0 {
        run.log.notes.push("q0 vanishes somewhere; the system stays coercive on the grid".into());
    }

    let dir = run.out_dir.clone().expect("output directory");
    let mut out = Outputs::create(&dir)?;
    let log = &mut run.log;
    let result = match cmd {
        Command::Verify(_) => commands::verify(&prepared, seed, &mut out, log),
        Command::Forward(_) => commands::forward(&prepared, &mut out, log),
        Command::Dtn(_) => commands::dtn(&prepared, &mut out, log),
        Command::ReconPotential(_) => commands::recon_potential(&prepared, &mut out, log),
        Command::ReconShape { mode, .. } => commands::recon_shape(&prepared, *mode, &mut out, log),
        Command::Localize(_) => commands::localize(&prepared, &mut out, log),
    };
    run.files = out.into_files();
    result
}

fn finish(command: &str, scenario: &Path, threads: Option<usize>, run: Run, start: Instant, err: Option<Failure>) -> i32 {
    let checks_ok = run.log.checks.iter().all(|c| c.pass);
    let (code, status) = match &err {
        Some(e) => (e.exit_code(), e.status()),
        None if checks_ok => (0, "ok"),
        None => (1, "check_failed"),
    };
    for c in &run.log.checks {
        println!("{} {}: {:e} (tolerance {:e})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.tolerance);
    }
    if let Some(e) = &err {
        eprintln!("fracmono {command}: {e}");
    }
    let report = RunReport {
        command: command.to_string(),
        scenario: scenario.display().to_string(),
        scenario_sha256: run.digest,
        seed: run.seed,
        threads,
        schedule: format!("{:?}", run.schedule).to_lowercase(),
        wall_time_s: start.elapsed().as_secs_f64(),
        status: status.to_string(),
        exit_code: code,
        error: err.as_ref().map(|e| e.to_string()),
        checks: run.log.checks,
        files: run.files,
        notes: run.log.notes,
    };
    if let Some(dir) = &run.out_dir {
        if let Err(e) = write_report(dir, &report) {
            eprintln!("fracmono {command}: could not write report: {e}");
            return 3;
        }
        println!("report: {}", dir.join("report.json").display());
    }
    code
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let (name, common) = cli.command.parts();
    let mut run = Run {
        digest: None,
        seed: None,
        schedule: Schedule::Sequential,
        out_dir: None,
        log: Log::default(),
        files: Vec::new(),
    };
    let err = execute(&cli.command, &mut run).err();
    let code = finish(name, &common.scenario, common.threads, run, start, err);
    ExitCode::from(code as u8)
}
