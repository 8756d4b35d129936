use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ipm_lab::evolution::{run_with, SolverState};
use ipm_lab::experiments::{self, ExperimentParams, Report};
use ipm_lab::io::{self, RunConfig, RunManifest};
use ipm_lab::kernel_quad::KernelQuadOptions;
use ipm_lab::model_flow::{self, DeformationSchedule};
use ipm_lab::profiles::{self, ConeStackSpec, HoleProfileSpec, OscillatorySpec};
use ipm_lab::{make_grid, LabError, Result};

#[derive(Parser)]
#[command(name = "ipm-lab", version, about = "Stable IPM laboratory")]
struct Cli {
    /// Output file (field, trace or report depending on the command).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write a run manifest here.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Worker threads; runs are deterministic and single-threaded, so only 1 is accepted.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Hole,
    ConeStack,
    Oscillatory,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Check {
    Lemma23,
    Gluing,
    Quadratic,
    Oscillatory,
    Deform,
    Growth,
    Construct,
    Unique,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an initial-data profile into an IPMF field file.
    BuildData {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long = "K", default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 1.25)]
        lambda1: f64,
        #[arg(long, default_value_t = 2.1)]
        ratio: f64,
        #[arg(long, default_value_t = 2.0)]
        delta0: f64,
        #[arg(long = "cone-constant", default_value_t = 2.0)]
        cone_constant: f64,
        #[arg(long = "N", default_value_t = 16)]
        n: u32,
        #[arg(long, default_value_t = 0.0)]
        theta0: f64,
        #[arg(long = "l2-target", default_value_t = 0.25)]
        l2_target: f64,
        #[arg(long = "grid-n", default_value_t = 512)]
        grid_n: usize,
        #[arg(long = "grid-l", default_value_t = 1.6)]
        grid_l: f64,
    },
    /// Evolve an initial field and write its norm trace.
    Evolve {
        #[arg(long)]
        config: PathBuf,
        /// Directory for IPMF snapshots at every output time.
        #[arg(long)]
        snapshots: Option<PathBuf>,
        /// Output spacing; defaults to T/100.
        #[arg(long)]
        every: Option<f64>,
    },
    /// One deformation step on the configured background.
    Deform {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run one verification experiment and write its report.
    Verify {
        #[arg(value_enum)]
        check: Check,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of random cases (lemma23 without a schedule).
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// lemma23: cone constant of the certified layer.
        #[arg(long = "cone-constant")]
        cone_constant: Option<f64>,
        /// lemma23: total deformation M; with --T alone gives k = -M/T.
        #[arg(long = "M")]
        m: Option<f64>,
        #[arg(long = "T")]
        t_end: Option<f64>,
        /// lemma23: `t,k` schedule CSV.
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
}

fn out_path(cli: &Cli) -> Result<&Path> {
    cli.out
        .as_deref()
        .ok_or_else(|| LabError::Param("--out is required".into()))
}

fn load_config(path: Option<&Path>, manifest: &mut RunManifest) -> Result<RunConfig> {
    match path {
        Some(p) => {
            manifest.add_input(p)?;
            io::parse_config(p)
        }
        None => Ok(RunConfig::default()),
    }
}

fn build_data(cli: &Cli, manifest: &mut RunManifest) -> Result<()> {
    let Command::BuildData {
        kind,
        k,
        lambda1,
        ratio,
        delta0,
        cone_constant,
        n,
        theta0,
        l2_target,
        grid_n,
        grid_l,
    } = &cli.command
    else {
        unreachable!()
    };
    let grid = make_grid(*grid_n, *grid_l)?;
    manifest.grid = Some((*grid_n, *grid_l));
    let field = match kind {
        Kind::Hole => {
            profiles::build_hole_profile(&HoleProfileSpec::geometric(*k, *lambda1, *ratio)?, &grid)?
        }
        Kind::ConeStack => {
            profiles::build_cone_stack(&ConeStackSpec::new(*k, *delta0, *cone_constant), &grid)?
        }
        Kind::Oscillatory => profiles::build_oscillatory_layer(
            &OscillatorySpec {
                n: *n,
                theta0: *theta0,
                l2_target: *l2_target,
            },
            &grid,
        )?,
    };
    let out = out_path(cli)?;
    io::write_field(&field, out)?;
    manifest.add_output(out)
}

fn evolve(cli: &Cli, manifest: &mut RunManifest) -> Result<()> {
    let Command::Evolve {
        config,
        snapshots,
        every,
    } = &cli.command
    else {
        unreachable!()
    };
    let cfg = load_config(Some(config), manifest)?;
    let e = &cfg.evolve;
    let initial_rel = io::require(&e.initial, "initial")?;
    let base = config.parent().unwrap_or(Path::new("."));
    let initial = base.join(initial_rel);
    manifest.add_input(&initial)?;
    let field = io::read_field(&initial)?;
    let (n, l) = (field.grid.n(), field.grid.half_width);
    if e.grid_n.is_some_and(|g| g != n) || e.grid_l.is_some_and(|g| g != l) {
        return Err(LabError::Param(format!(
            "initial field grid ({n}, {l}) does not match grid_n/grid_l"
        )));
    }
    manifest.grid = Some((n, l));
    if let Some(f) = &e.forcing_csv {
        manifest.add_input(&base.join(f))?;
    }
    let t_end = *io::require(&e.t_end, "T")?;
    let solver = e.solver_config(base)?;
    let every = every.unwrap_or(t_end / 100.0);
    if let Some(dir) = snapshots {
        fs::create_dir_all(dir)?;
    }
    let mut index = 0usize;
    let mut written = Vec::new();
    let (trace, _) = run_with(&SolverState::new(field, solver), t_end, every, |_, integ| {
        if let Some(dir) = snapshots {
            let p = dir.join(format!("snap_{index:04}.ipmf"));
            io::write_field(&integ.field(0), &p)?;
            written.push(p);
        }
        index += 1;
        Ok(())
    })?;
    let out = out_path(cli)?;
    io::write_trace(&trace, out)?;
    manifest.add_output(out)?;
    for p in written {
        manifest.add_output(&p)?;
    }
    if !cli.quiet {
        let last = trace.rows.last().copied().unwrap_or_default();
        println!(
            "evolved to t = {} in {} steps: M = {:.6e}, H2 = {:.6e}",
            last.t, trace.steps, last.m, last.h2
        );
    }
    Ok(())
}

struct Lemma23Args {
    count: usize,
    seed: u64,
    cone_constant: Option<f64>,
    m: Option<f64>,
    t_end: Option<f64>,
    schedule: Option<PathBuf>,
}

/// One certification on a cone layer of the given constant, or a random batch
/// when no schedule is described.
fn lemma23(a: &Lemma23Args, manifest: &mut RunManifest) -> Result<Report> {
    let schedule = match (&a.schedule, a.m, a.t_end) {
        (Some(path), _, _) => {
            manifest.add_input(path)?;
            io::read_schedule(path)?
        }
        (None, Some(m), Some(t)) => DeformationSchedule::constant(-m / t, t, 101)?,
        (None, None, None) if a.cone_constant.is_none() => {
            return Ok(experiments::verify_lemma23_batch(a.count, a.seed, 41)?.1)
        }
        _ => {
            return Err(LabError::Param(
                "lemma23 needs --schedule, or both --M and --T".into(),
            ))
        }
    };
    let c = a.cone_constant.unwrap_or(4.0);
    let m = a.m.unwrap_or_else(|| schedule.total());
    let rho = profiles::cone_layer((1.0, 2.0), c)?.density();
    let cert = model_flow::verify_lemma23(&rho, &schedule, c, m, &KernelQuadOptions::default())?;
    let mut report = Report::new("lemma23", serde_json::json!({"cone_constant": c, "M": m}));
    report.check("sign_persists", cert.margins.sign);
    report.check("monotone", cert.margins.monotone + 1e-8);
    report.check("e7m_bound", cert.margins.e7m);
    Ok(report)
}

fn run_check(
    check: Check,
    p: &ExperimentParams,
    a: &Lemma23Args,
    manifest: &mut RunManifest,
) -> Result<Report> {
    Ok(match check {
        Check::Lemma23 => lemma23(a, manifest)?,
        Check::Gluing => experiments::sweep_gluing_error(p)?.report,
        Check::Quadratic => experiments::sweep_quadratic_error(p)?.report,
        Check::Oscillatory => experiments::verify_oscillatory(p)?.1,
        Check::Deform => experiments::run_deform_iteration(p)?.report,
        Check::Growth => experiments::run_growth_experiment(p)?.report,
        Check::Construct => experiments::run_full_construction(p)?.report,
        Check::Unique => experiments::uniqueness_smoke(p)?,
    })
}

fn finish_report(cli: &Cli, report: &Report, manifest: &mut RunManifest) -> Result<()> {
    if let Some(out) = &cli.out {
        io::emit_report(report, out)?;
        manifest.add_output(out)?;
    }
    if !cli.quiet {
        for c in &report.checks {
            println!(
                "{} {} margin={:e}",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.margin
            );
        }
    }
    let failed = report.failures().len();
    if failed > 0 {
        return Err(LabError::Hypothesis(format!(
            "{failed} of {} checks failed in {}",
            report.checks.len(),
            report.experiment
        )));
    }
    Ok(())
}

fn execute(cli: &Cli, manifest: &mut RunManifest) -> Result<()> {
    if cli.threads != 1 {
        return Err(LabError::Param(format!(
            "--threads {} unsupported; runs are single-threaded for determinism",
            cli.threads
        )));
    }
    match &cli.command {
        Command::BuildData { .. } => build_data(cli, manifest),
        Command::Evolve { .. } => evolve(cli, manifest),
        Command::Deform { config } => {
            let cfg = load_config(config.as_deref(), manifest)?;
            manifest.params = cfg.params.to_value();
            let report = experiments::run_deform_iteration(&cfg.params)?.report;
            finish_report(cli, &report, manifest)
        }
        Command::Verify {
            check,
            config,
            count,
            seed,
            cone_constant,
            m,
            t_end,
            schedule,
        } => {
            let cfg = load_config(config.as_deref(), manifest)?;
            manifest.params = cfg.params.to_value();
            let a = Lemma23Args {
                count: *count,
                seed: *seed,
                cone_constant: *cone_constant,
                m: *m,
                t_end: *t_end,
                schedule: schedule.clone(),
            };
            let report = run_check(*check, &cfg.params, &a, manifest)?;
            finish_report(cli, &report, manifest)
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::BuildData { .. } => "build-data",
        Command::Evolve { .. } => "evolve",
        Command::Deform { .. } => "deform",
        Command::Verify { .. } => "verify",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut manifest = RunManifest::new(command_name(&cli.command), serde_json::Value::Null);
    let result = (|| {
        if let Some(m) = &cli.manifest {
            manifest.begin(m)?;
        }
        let r = execute(&cli, &mut manifest);
        if let Some(m) = &cli.manifest {
            manifest.finish(m, if r.is_ok() { "ok" } else { "failed" })?;
        }
        r
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ERROR:{}:{}", e.code(), e);
            ExitCode::FAILURE
        }
    }
}
