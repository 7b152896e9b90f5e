//! `sepmix <module> <verb> --config FILE [--seed S] [--out PATH]`
//!
//! Exit status: 0 on success, 1 on usage, schema or runtime errors, 2 when a
//! checked property fails (the output is still written).

mod commands;
mod config;
mod output;

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::commands::{Ctx, Outcome};
use crate::config::{parse_config, Format, SchemaError};
use crate::output::{render_csv, render_json, write_atomic, Payload, Stamp};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Schema(SchemaError),
    Core(sepmix_core::Error),
    Io(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Schema(e) => write!(f, "{e}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<sepmix_core::Error> for CliError {
    fn from(e: sepmix_core::Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Parser, Debug)]
#[command(name = "sepmix", version, about = "Exclusion process in a random environment")]
struct Cli {
    #[command(subcommand)]
    module: Module,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// output file; overrides the config, stdout when neither is set
    #[arg(long)]
    out: Option<PathBuf>,
    /// worker threads; results do not depend on it
    #[arg(long, env = "SEPMIX_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Module {
    /// environment and potential
    Env {
        #[arg(value_enum)]
        verb: EnvVerb,
        #[command(flatten)]
        common: Common,
    },
    /// exact equilibrium
    Equilibrium {
        #[arg(value_enum)]
        verb: EquilibriumVerb,
        #[command(flatten)]
        common: Common,
    },
    /// full-enumeration analysis
    Exact {
        #[arg(value_enum)]
        verb: ExactVerb,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo runs of the dynamics
    Simulate {
        #[arg(value_enum)]
        verb: SimulateVerb,
        #[command(flatten)]
        common: Common,
    },
    /// mixing-time estimates across sizes
    Scaling {
        #[arg(value_enum)]
        verb: Option<ScalingVerb>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum EnvVerb {
    Dump,
    Traps,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum EquilibriumVerb {
    Report,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ExactVerb {
    Gap,
    Tmix,
    Paths,
    CensorCheck,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SimulateVerb {
    Couple,
    Hit,
    Flow,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ScalingVerb {
    Run,
}

type Command = fn(&Ctx) -> Result<Outcome, CliError>;

fn dispatch(module: &Module) -> (String, Command, &Common) {
    match module {
        Module::Env { verb, common } => match verb {
            EnvVerb::Dump => ("env dump".into(), commands::env_dump, common),
            EnvVerb::Traps => ("env traps".into(), commands::env_traps, common),
        },
        Module::Equilibrium { common, .. } => ("equilibrium report".into(), commands::equilibrium_report, common),
        Module::Exact { verb, common } => match verb {
            ExactVerb::Gap => ("exact gap".into(), commands::exact_gap, common),
            ExactVerb::Tmix => ("exact tmix".into(), commands::exact_tmix, common),
            ExactVerb::Paths => ("exact paths".into(), commands::exact_paths, common),
            ExactVerb::CensorCheck => ("exact censor-check".into(), commands::exact_censor_check, common),
        },
        Module::Simulate { verb, common } => match verb {
            SimulateVerb::Couple => ("simulate couple".into(), commands::simulate_couple, common),
            SimulateVerb::Hit => ("simulate hit".into(), commands::simulate_hit, common),
            SimulateVerb::Flow => ("simulate flow".into(), commands::simulate_flow, common),
        },
        Module::Scaling { common, .. } => ("scaling".into(), commands::scaling, common),
    }
}

/// Runs one command; `Ok(Some(msg))` reports a failed property check.
fn run(cli: &Cli) -> Result<Option<String>, CliError> {
    let (name, command, common) = dispatch(&cli.module);
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| CliError::Io(format!("{}: {e}", common.config.display())))?;
    let cfg = parse_config(&text).map_err(CliError::Schema)?;
    if let Some(threads) = common.threads {
        if threads == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Some(exp) = &cfg.experiment {
        let expected = match name.as_str() {
            "simulate flow" => "flow",
            other => other.split(' ').next().expect("non-empty command"),
        };
        if exp.kind() != expected {
            return Err(CliError::Usage(format!(
                "experiment.kind is `{}` but `{name}` expects `{expected}`",
                exp.kind()
            )));
        }
    }
    let seed = common.seed.unwrap_or(cfg.seed);
    let ctx = Ctx { cfg: &cfg, seed };
    let outcome = command(&ctx)?;
    let stamp = Stamp { command: name, config_sha256: commands::hex(&Sha256::digest(text.as_bytes())), seed };
    let bytes = match (&outcome.payload, cfg.format) {
        (Payload::Table(t), None | Some(Format::Csv)) => render_csv(t, &stamp),
        (Payload::Report(_), Some(Format::Csv)) => {
            return Err(CliError::Usage(format!("`{}` writes a JSON report; use format \"json\"", stamp.command)))
        }
        (p, _) => render_json(p, &stamp),
    };
    match common.out.as_ref().or(cfg.output.as_ref()) {
        Some(path) => write_atomic(path, &bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
        None => std::io::stdout().write_all(&bytes).map_err(|e| CliError::Io(e.to_string()))?,
    }
    Ok(outcome.violation)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = run(&cli);
    match &result {
        Ok(Some(v)) => eprintln!("property violated: {v}"),
        Err(e) => eprintln!("{e}"),
        Ok(None) => {}
    }
    ExitCode::from(exit_code(&result))
}

fn exit_code(result: &Result<Option<String>, CliError>) -> u8 {
    match result {
        Ok(None) => 0,
        Ok(Some(_)) => 2,
        Err(_) => 1,
    }
}
