//! Command-line front end.
//!
//! Values are resolved as flags, then the `--config` file, then defaults.
//! Every run echoes the resolved configuration to
//! `<out>/effective_config.json`, which can be fed back with `--config`.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::circuit::CircuitSpec;
use crate::optimizer::Parametrization;
use crate::simulator::Method;
use commands::Failure;
use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "cascade-transfer",
    version,
    about = "State transfer between cascaded oscillators"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the link for one coupling profile.
    Simulate(RunArgs),
    /// Optimize the coupling profile of the first oscillator.
    Optimize(RunArgs),
    /// Simulate a range of parameter values in parallel.
    Sweep(RunArgs),
    /// Infidelity budget and validity windows, without simulation.
    Budget(RunArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Rk4,
    Heun,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ParamArg {
    Direct,
    Gdot,
}

#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long = "gamma-loss")]
    pub gamma_loss: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub omega0: Option<f64>,
    /// Transfer time.
    #[arg(long = "T")]
    pub transfer_time: Option<f64>,
    #[arg(long = "dt-cut")]
    pub dt_cut: Option<f64>,
    #[arg(long = "gamma1-max")]
    pub gamma1_max: Option<f64>,
    /// optimal | constant:<rate> | file:<csv>
    #[arg(long)]
    pub profile: Option<String>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Track noise kernels and write the commutator deficit.
    #[arg(long)]
    pub kernels: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// param:lo:hi:n or param=v1,v2,... with param in gamma, gamma_loss,
    /// eta, T, dt_cut.
    #[arg(long)]
    pub sweep: Option<String>,
    #[arg(long = "max-iters")]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long = "step-size")]
    pub step_size: Option<f64>,
    #[arg(long, value_enum)]
    pub param: Option<ParamArg>,
    /// Constant starting rate(s) for the optimizer, comma separated.
    #[arg(long = "init-rate", value_delimiter = ',')]
    pub init_rate: Vec<f64>,
    #[arg(long = "target-f")]
    pub target_f: Option<f64>,
    #[arg(long)]
    pub margin: Option<f64>,
    /// topology:R:L:C of the switched oscillator, e.g. series:50:1e-9:1e-12.
    #[arg(long)]
    pub circuit1: Option<String>,
    /// topology:R:L:C of the receiving oscillator; sets gamma and omega0.
    #[arg(long)]
    pub circuit2: Option<String>,
    #[arg(long)]
    pub hbar: Option<f64>,
}

impl RunArgs {
    /// Applies the precedence flags > config file > defaults.
    pub fn resolve(&self) -> crate::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:expr => $field:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v;
                }
            };
        }
        set!(self.gamma => cfg.gamma);
        set!(self.gamma_loss => cfg.gamma_loss);
        set!(self.eta => cfg.eta);
        set!(self.transfer_time => cfg.transfer_time);
        set!(self.dt_cut => cfg.dt_cut);
        set!(self.profile => cfg.profile);
        set!(self.steps => cfg.integrator.n_steps);
        set!(self.out => cfg.out);
        set!(self.max_iters => cfg.optimizer.max_iters);
        set!(self.tolerance => cfg.optimizer.tolerance);
        set!(self.step_size => cfg.optimizer.step_size);
        set!(self.target_f => cfg.target_fidelity);
        set!(self.margin => cfg.margin);
        set!(self.hbar => cfg.hbar);
        if self.omega0.is_some() {
            cfg.omega0 = self.omega0;
        }
        if self.gamma1_max.is_some() {
            cfg.gamma1_max = self.gamma1_max;
        }
        if self.sweep.is_some() {
            cfg.sweep = self.sweep.clone();
        }
        if let Some(m) = self.method {
            cfg.integrator.method = match m {
                MethodArg::Rk4 => Method::Rk4,
                MethodArg::Heun => Method::Heun,
            };
        }
        if self.kernels {
            cfg.integrator.kernel_tracking = true;
        }
        if let Some(p) = self.param {
            cfg.optimizer.parametrization = match p {
                ParamArg::Direct => Parametrization::DirectGamma1,
                ParamArg::Gdot => Parametrization::GDot,
            };
        }
        if !self.init_rate.is_empty() {
            cfg.optimizer.initial_rates = self.init_rate.clone();
        }
        if let Some(c) = &self.circuit1 {
            cfg.circuit1 = Some(c.parse::<CircuitSpec>()?);
        }
        if let Some(c) = &self.circuit2 {
            cfg.circuit2 = Some(c.parse::<CircuitSpec>()?);
        }
        Ok(cfg)
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli.command) {
        Ok(line) => {
            println!("{line}");
            0
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn execute(command: &Command) -> Result<String, Failure> {
    let (Command::Simulate(args) | Command::Optimize(args) | Command::Sweep(args) | Command::Budget(args)) = command;
    let cfg = args.resolve()?;
    let out = cfg.out.display().to_string();
    Ok(match command {
        Command::Simulate(_) => {
            let s = commands::simulate(&cfg)?;
            format!(
                "fidelity {:.10} at t = {:.6} (oracle {:.10}); peak {:.10} at t = {:.6}; artifacts in {out}",
                s.fidelity, s.readout_time, s.oracle_fidelity, s.peak.fidelity, s.peak.t
            )
        }
        Command::Optimize(_) => {
            let s = commands::optimize(&cfg)?;
            format!(
                "functional {:.10} (closed form {:.10}) after {} iterations; artifacts in {out}",
                s.functional, s.closed_form_functional, s.iterations
            )
        }
        Command::Sweep(_) => {
            let rows = commands::sweep(&cfg)?;
            let passed = rows.iter().filter(|r| r.pass).count();
            format!(
                "{passed}/{} sweep points within tolerance; artifacts in {out}",
                rows.len()
            )
        }
        Command::Budget(_) => {
            let s = commands::budget(&cfg)?;
            format!(
                "predicted infidelity {:.6e} (fidelity {:.10}); artifacts in {out}",
                s.report.predicted_infidelity, s.report.fidelity
            )
        }
    })
}
