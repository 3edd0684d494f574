use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use heavyball::experiment::{self, ConfigError, ConfigOverrides, ExperimentConfig, Preset, RunError, OUT_ENV};

#[derive(Parser)]
#[command(name = "heavyball", version, about = "Heavy-ball versus gradient-flow experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset and write CSV and JSON artifacts.
    Run(Flags),
    /// Check a configuration and print it with its derived constants.
    Validate(Flags),
}

#[derive(Args)]
struct Flags {
    /// figure1, epsilon-sweep, claims, diagnostics or custom.
    #[arg(long)]
    preset: Option<Preset>,
    /// Flat key = value config file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    objective: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    epsilon: Option<f64>,
    /// Comma separated, strictly decreasing.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    epsilons: Option<Vec<f64>>,
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    b: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    horizon: Option<f64>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u32>,
    #[arg(long)]
    box_half_width: Option<f64>,
    /// Output directory; also settable through HEAVYBALL_OUT.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Flags {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            preset: self.preset,
            objective: self.objective.clone(),
            epsilon: self.epsilon,
            epsilons: self.epsilons.clone(),
            gamma: self.gamma,
            a: self.a,
            b: self.b,
            horizon: self.horizon,
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            samples: self.samples,
            seed: self.seed,
            box_half_width: self.box_half_width,
            out: self.out.as_ref().map(|p| p.to_string_lossy().into_owned()),
            ..Default::default()
        }
    }

    fn resolve(&self) -> Result<ExperimentConfig, ConfigError> {
        let file = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
                ConfigOverrides::parse(&text)?
            }
            None => ConfigOverrides::default(),
        };
        let env_out = std::env::var(OUT_ENV).ok();
        let cfg = ExperimentConfig::resolve(&file, env_out, &self.overrides());
        cfg.validate()?;
        Ok(cfg)
    }
}

fn fail(code: u8, kind: &str, message: String, extra: serde_json::Value) -> ExitCode {
    let mut rec = json!({ "error": kind, "exit_code": code, "message": message });
    if let (Some(obj), Some(more)) = (rec.as_object_mut(), extra.as_object()) {
        obj.extend(more.clone());
    }
    let _ = writeln!(std::io::stderr().lock(), "{rec}");
    ExitCode::from(code)
}

/// Prints to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn config_failure(e: &ConfigError) -> ExitCode {
    fail(2, "config", e.to_string(), json!({ "fields": e.fields() }))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(2, "usage", e.to_string().trim().to_string(), json!({})),
    };
    match cli.command {
        Command::Validate(flags) => {
            let cfg = match flags.resolve() {
                Ok(c) => c,
                Err(e) => return config_failure(&e),
            };
            match cfg.derived() {
                Ok(d) => {
                    let doc = json!({ "config": cfg.to_canonical(), "derived": d });
                    emit(&serde_json::to_string_pretty(&doc).expect("json"));
                    ExitCode::SUCCESS
                }
                Err(e) => config_failure(&e),
            }
        }
        Command::Run(flags) => {
            let cfg = match flags.resolve() {
                Ok(c) => c,
                Err(e) => return config_failure(&e),
            };
            match experiment::run(&cfg) {
                Ok(outcome) => {
                    let files: Vec<String> = outcome.files.iter().map(|p| p.display().to_string()).collect();
                    let failed = outcome.failed_checks();
                    emit(&json!({ "preset": cfg.preset.name(), "files": files, "checks": outcome.checks }).to_string());
                    if failed.is_empty() {
                        ExitCode::SUCCESS
                    } else {
                        fail(
                            1,
                            "check_failed",
                            format!("{} check(s) failed", failed.len()),
                            json!({ "failed": failed }),
                        )
                    }
                }
                Err(RunError::Config(e)) => config_failure(&e),
                Err(e @ RunError::Integrator(_)) => fail(3, e.kind(), e.to_string(), json!({})),
                Err(e @ RunError::Io(_)) => fail(2, e.kind(), e.to_string(), json!({})),
            }
        }
    }
}
