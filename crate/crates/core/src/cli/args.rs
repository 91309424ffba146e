use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "obstacle-control",
    version,
    about = "Optimal control of a bilateral obstacle problem by its obstacles"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the damped-Newton Gauss–Seidel iteration once.
    Solve(ConfigArgs),
    /// Run one case per value of `sweep_axis` and tabulate them.
    Sweep(ConfigArgs),
    /// Compare penalized states with a PSOR solution across a δ schedule.
    OracleCompare(ConfigArgs),
    /// Check the adjoint gradient against finite differences.
    GradCheck(ConfigArgs),
}

impl Command {
    pub fn args(&self) -> &ConfigArgs {
        match self {
            Command::Solve(a) | Command::Sweep(a) | Command::OracleCompare(a) | Command::GradCheck(a) => a,
        }
    }
}

/// Flags mirror the config-file keys and override them.
#[derive(Debug, Default, Args)]
pub struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<String>,
    #[arg(long)]
    pub n: Option<String>,
    /// Number or expression in `h`, e.g. `h^2`.
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<String>,
    #[arg(long)]
    pub nu: Option<String>,
    /// Sets all three damping factors.
    #[arg(long)]
    pub omega: Option<String>,
    #[arg(long)]
    pub omega_y: Option<String>,
    #[arg(long)]
    pub omega_phi: Option<String>,
    #[arg(long)]
    pub omega_psi: Option<String>,
    #[arg(long)]
    pub eps: Option<String>,
    #[arg(long)]
    pub max_iter: Option<String>,
    #[arg(long)]
    pub inner_newton: Option<String>,
    #[arg(long)]
    pub lin_tol: Option<String>,
    #[arg(long)]
    pub lin_max_iter: Option<String>,
    /// Built-in problem: test1d or test2d.
    #[arg(long)]
    pub problem: Option<String>,
    /// Source term as an expression in x (and y).
    #[arg(long, allow_hyphen_values = true)]
    pub f: Option<String>,
    /// Tracking target as an expression in x (and y).
    #[arg(long, allow_hyphen_values = true)]
    pub z: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub y0: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub phi0: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub psi0: Option<String>,
    /// Output directory.
    #[arg(long, short)]
    pub output: Option<String>,
    #[arg(long)]
    pub contact_tol: Option<String>,
    /// One of omega, n, nu, delta.
    #[arg(long)]
    pub sweep_axis: Option<String>,
    /// Comma-separated values.
    #[arg(long)]
    pub sweep_values: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub oracle_deltas: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub oracle_force: Option<String>,
    #[arg(long)]
    pub grad_step: Option<String>,
    #[arg(long)]
    pub grad_samples: Option<String>,
}

impl ConfigArgs {
    /// Flags that were given, as `(key, value)` overrides.
    pub fn overrides(&self) -> Vec<(String, String)> {
        let flags = [
            ("dim", &self.dim),
            ("n", &self.n),
            ("delta", &self.delta),
            ("nu", &self.nu),
            ("omega", &self.omega),
            ("omega_y", &self.omega_y),
            ("omega_phi", &self.omega_phi),
            ("omega_psi", &self.omega_psi),
            ("eps", &self.eps),
            ("max_iter", &self.max_iter),
            ("inner_newton", &self.inner_newton),
            ("lin_tol", &self.lin_tol),
            ("lin_max_iter", &self.lin_max_iter),
            ("problem", &self.problem),
            ("f", &self.f),
            ("z", &self.z),
            ("y0", &self.y0),
            ("phi0", &self.phi0),
            ("psi0", &self.psi0),
            ("output", &self.output),
            ("contact_tol", &self.contact_tol),
            ("sweep_axis", &self.sweep_axis),
            ("sweep_values", &self.sweep_values),
            ("seed", &self.seed),
            ("oracle_deltas", &self.oracle_deltas),
            ("oracle_force", &self.oracle_force),
            ("grad_step", &self.grad_step),
            ("grad_samples", &self.grad_samples),
        ];
        flags
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::KEYS;

    #[test]
    fn every_key_has_a_flag() {
        let mut args = ConfigArgs::default();
        for field in [
            &mut args.dim, &mut args.n, &mut args.delta, &mut args.nu, &mut args.omega,
            &mut args.omega_y, &mut args.omega_phi, &mut args.omega_psi, &mut args.eps,
            &mut args.max_iter, &mut args.inner_newton, &mut args.lin_tol,
            &mut args.lin_max_iter, &mut args.problem, &mut args.f, &mut args.z, &mut args.y0,
            &mut args.phi0, &mut args.psi0, &mut args.output, &mut args.contact_tol,
            &mut args.sweep_axis, &mut args.sweep_values, &mut args.seed,
            &mut args.oracle_deltas, &mut args.oracle_force, &mut args.grad_step,
            &mut args.grad_samples,
        ] {
            *field = Some("1".into());
        }
        let keys: Vec<String> = args.overrides().into_iter().map(|(k, _)| k).collect();
        assert_eq!(keys, KEYS);
    }

    #[test]
    fn parses_subcommand_flags() {
        let cli = Cli::try_parse_from([
            "obstacle-control", "sweep", "--sweep-axis", "omega", "--sweep-values", "0.5,1",
            "--delta", "h^2", "-o", "runs",
        ])
        .unwrap();
        assert!(matches!(cli.command, Command::Sweep(_)));
        let o = cli.command.args().overrides();
        assert!(o.contains(&("sweep_axis".into(), "omega".into())));
        assert!(o.contains(&("output".into(), "runs".into())));
    }
}
