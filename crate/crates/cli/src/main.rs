//! `ansctl`: keys, CA, registration, discovery, attestation, policy and
//! admission checks, the registry server, and the benchmark harness.

mod cli;
mod commands;
mod config;
mod error;
mod store;

use std::process::ExitCode;

use clap::Parser;

use crate::cli::Cli;
use crate::config::{CliConfig, OutputFormat, Overrides};
use crate::error::{CliError, Exit};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = &cli.global;
    let overrides = Overrides {
        registry_url: g.registry_url.clone(),
        anchors_path: g.anchors_path.clone(),
        policy_path: g.policy_path.clone(),
        key_dir: g.key_dir.clone(),
        output: g.output,
    };
    let output = g.output.unwrap_or_default();
    let config = match CliConfig::load(overrides, g.config.as_deref()) {
        Ok(c) => c,
        Err(e) => return report_error(output, &e).into(),
    };
    match commands::run(&config, cli.command) {
        Ok(exit) => exit.into(),
        Err(e) => report_error(config.output, &e).into(),
    }
}

fn report_error(output: OutputFormat, e: &CliError) -> Exit {
    let exit = e.exit();
    match output {
        OutputFormat::Json => {
            let code = e.code().unwrap_or(match exit {
                Exit::Usage => ans_core::ErrorCode::Malformed,
                _ => ans_core::ErrorCode::Internal,
            });
            let body = ans_core::wire::ApiError::new(code, e.to_string());
            println!("{}", serde_json::to_string(&body).expect("error bodies serialize"));
        }
        OutputFormat::Human => eprintln!("error: {e}"),
    }
    exit
}
