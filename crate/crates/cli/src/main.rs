//! `cosim`: batch runner for co-simulations, convergence sweeps and
//! one-step error studies.
//!
//! Exit codes: 0 success, 1 output could not be written, 2 bad
//! configuration or usage, 3 a run aborted (the last reached time goes to
//! standard error).

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cosim::experiments::{self, common_base, convergence_sweep, step_error_sweep, StepErrorConfig, SweepError, REFERENCE_MICRO_DT};
use cosim::models::{self, ModelId};
use cosim::orchestrator::reference::integrate_monolithic;
use cosim::orchestrator::{run_cosimulation, CosimConfig, CouplingGraph, ReplayMode};

use config::{ConfigError, ConfigFile, Experiment};
use output::{dt_comment, mode_path, num, suffixed, write_atomic};

#[derive(Parser)]
#[command(name = "cosim", version, about = "Iterative co-simulation with and without rollback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One co-simulation per mode, written as a trace CSV.
    Run {
        #[command(flatten)]
        common: Common,
        /// Also write the monolithic reference on the macro-grid.
        #[arg(long)]
        reference: bool,
    },
    /// Errors against the monolithic reference over a list of step sizes.
    Convergence {
        #[command(flatten)]
        common: Common,
    },
    /// One-step estimator error on the isolated prey.
    Steperror {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the modes listed in the configuration.
    #[arg(long)]
    mode: Option<ReplayMode>,
    /// Micro-step of reference and truth integrations.
    #[arg(long, default_value_t = REFERENCE_MICRO_DT)]
    micro_dt: f64,
}

enum Failure {
    Config(String),
    Abort { message: String, last_time: f64 },
    Io(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<cosim::CosimError> for Failure {
    fn from(e: cosim::CosimError) -> Self {
        match e.last_time() {
            Some(t) => Failure::Abort {
                message: e.to_string(),
                last_time: t,
            },
            None => Failure::Config(e.to_string()),
        }
    }
}

impl From<SweepError> for Failure {
    fn from(e: SweepError) -> Self {
        let message = e.to_string();
        match e {
            SweepError::Setup(e) => e.into(),
            SweepError::Run { abort, .. } => Failure::Abort {
                message,
                last_time: abort.last_time,
            },
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

fn threads() -> usize {
    std::env::var("COSIM_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn load(common: &Common) -> Result<Experiment, Failure> {
    Ok(ConfigFile::load(&common.config)?.into_experiment(common.mode)?)
}

fn default_output(exp: &Experiment, cmd: &str) -> PathBuf {
    exp.output_path
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}_{cmd}.csv", exp.model_id.name().to_lowercase())))
}

fn cmd_run(common: &Common, reference: bool) -> Result<(), Failure> {
    let exp = load(common)?;
    let dt = exp.macro_dt.ok_or_else(|| Failure::Config("run needs macro_dt".into()))?;
    let graph = CouplingGraph::from_model(&exp.model);
    let out = default_output(&exp, "run");
    let several = exp.modes.len() > 1;
    for &mode in &exp.modes {
        let cfg = CosimConfig { macro_dt: dt, mode, ..exp.template };
        let trace = run_cosimulation(&graph, &cfg).map_err(|a| Failure::Abort {
            message: a.to_string(),
            last_time: a.last_time,
        })?;
        let path = mode_path(&out, mode, several);
        write_atomic(&path, None, &output::output_header(&exp.model), &output::trace_rows(&trace)).map_err(io(&path))?;
    }
    if reference {
        let t = &exp.template;
        let r = integrate_monolithic(&exp.model.monolithic, t.t_init, t.t_end, common.micro_dt, dt)?;
        let path = suffixed(&out, "reference");
        write_atomic(&path, None, &output::state_header(&exp.model), &output::reference_rows(&r)).map_err(io(&path))?;
    }
    Ok(())
}

fn default_dts(id: ModelId) -> Option<Vec<f64>> {
    match id {
        ModelId::MechTwoBody => Some(experiments::MECH_DTS.to_vec()),
        ModelId::LvClassic | ModelId::LvTimeModified => Some(experiments::LV_DTS.to_vec()),
        ModelId::ToughTimeOnly => None,
    }
}

fn slope_text(s: Option<f64>) -> String {
    s.map(|v| v.to_string()).unwrap_or_else(|| "undefined".into())
}

fn cmd_convergence(common: &Common) -> Result<(), Failure> {
    let exp = load(common)?;
    let dts = match exp.dt_list.clone().or_else(|| default_dts(exp.model_id)) {
        Some(d) => d,
        None => return Err(Failure::Config("convergence needs dt_list for this model".into())),
    };
    cosim::orchestrator::convergence::check_dt_list(&dts, 4)?;
    let base = common_base(&dts).ok_or_else(|| Failure::Config("step sizes share no common grid".into()))?;
    let t = &exp.template;
    let reference = integrate_monolithic(&exp.model.monolithic, t.t_init, t.t_end, common.micro_dt, base)?;
    let outcomes = convergence_sweep(&exp.model, &dts, &exp.modes, t, &reference, threads())?;
    let out = default_output(&exp, "convergence");
    let several = exp.modes.len() > 1;
    let header = ["dt", "error", "iterations_mean"].map(String::from);
    for o in &outcomes {
        let rows: Vec<Vec<String>> = o
            .report
            .points
            .iter()
            .map(|p| vec![num(p.dt), num(p.error), num(p.iterations_mean)])
            .collect();
        let path = mode_path(&out, o.mode, several);
        write_atomic(&path, Some(&dt_comment(&dts)), &header, &rows).map_err(io(&path))?;
    }
    for o in &outcomes {
        println!("{} slope {}", o.mode, slope_text(o.report.slope));
    }
    Ok(())
}

fn cmd_steperror(common: &Common) -> Result<(), Failure> {
    let exp = load(common)?;
    let prey = match exp.model_id {
        ModelId::LvClassic => models::isolated_prey(false),
        ModelId::LvTimeModified => models::isolated_prey(true),
        other => return Err(Failure::Config(format!("steperror needs LV_CLASSIC or LV_TIME_MODIFIED, got {other}"))),
    };
    let dts = exp.dt_list.clone().unwrap_or_else(experiments::steperror_dts);
    let cfg = StepErrorConfig {
        stehfest_n: exp.template.stehfest_n,
        rich_factor: exp.template.rich_factor,
        micro_dt: common.micro_dt,
    };
    let (points, slope) = step_error_sweep(&prey, &dts, &cfg, threads())?;
    let rows: Vec<Vec<String>> = points.iter().map(|p| vec![num(p.dt), num(p.error)]).collect();
    let path = default_output(&exp, "steperror");
    write_atomic(&path, Some(&dt_comment(&dts)), &["dt".into(), "error".into()], &rows).map_err(io(&path))?;
    println!("steperror slope {}", slope_text(slope));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run { common, reference } => cmd_run(common, *reference),
        Command::Convergence { common } => cmd_convergence(common),
        Command::Steperror { common } => cmd_steperror(common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Abort { message, last_time }) => {
            eprintln!("error: {message}");
            eprintln!("last reached time: {}", num(last_time));
            ExitCode::from(3)
        }
    }
}
