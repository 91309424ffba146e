use std::fs;
use std::process::ExitCode;

use clap::Parser;

use obstacle_control::cli::{
    grad_check, oracle_compare, parse_config, run_case, run_sweep, Cli, CliError, Command,
};

fn run(cli: Cli) -> Result<(), CliError> {
    let args = cli.command.args();
    let file = match &args.config {
        Some(path) => Some(fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?),
        None => None,
    };
    let cfg = parse_config(file.as_deref(), &args.overrides())?;
    let dir = cfg.output_dir.clone();

    match &cli.command {
        Command::Solve(_) => {
            let report = run_case(&cfg, &dir)?;
            println!(
                "{} after {} iterations, J = {:e}",
                report.outcome.termination,
                report.outcome.log.len(),
                report.final_cost()
            );
            if let Some(reason) = &report.outcome.singular_reason {
                println!("  {reason}");
            }
        }
        Command::Sweep(_) => {
            for row in run_sweep(&cfg, &dir)? {
                println!(
                    "{} = {}: {} after {} iterations, J = {:e}",
                    cfg.sweep.as_ref().map_or("value", |s| s.axis.name()),
                    row.value,
                    row.report.outcome.termination,
                    row.report.outcome.log.len(),
                    row.report.final_cost()
                );
            }
        }
        Command::OracleCompare(_) => {
            let report = oracle_compare(&cfg, &dir)?;
            for r in &report.rows {
                println!(
                    "delta = {:e}: |y - y_psor| = {:e}, violation = {:e}",
                    r.delta, r.err_sup, r.violation
                );
            }
        }
        Command::GradCheck(_) => {
            for c in grad_check(&cfg, &dir)? {
                println!(
                    "adjoint = {:e}, finite difference = {:e}, rel_err = {:e}",
                    c.adjoint_value, c.fd_value, c.rel_err
                );
            }
        }
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
