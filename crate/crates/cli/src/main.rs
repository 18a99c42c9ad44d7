use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod io;
mod report;

/// Exact ergodicity quantities and convergence/perturbation bounds for
/// finite Markov chains.
#[derive(Debug, Parser)]
#[command(name = "ergobound", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    /// Chain file: {"labels": [...], "kernel": [[...], ...]}.
    #[arg(long)]
    pub chain: PathBuf,
}

#[derive(Debug, Args)]
pub struct SetArgs {
    /// Target set as 0-based indices or labels, e.g. "0,2".
    #[arg(long)]
    pub set: String,
}

#[derive(Debug, Args)]
pub struct CertificateArgs {
    /// Minorization constant replacing the maximal certificate on the set.
    #[arg(long, requires = "nu")]
    pub delta: Option<f64>,
    /// Minorizing probability vector, comma separated.
    #[arg(long, requires = "delta")]
    pub nu: Option<String>,
}

#[derive(Debug, Args)]
pub struct LambdaArgs {
    /// Explicit lambda values, comma separated. Overrides the grid.
    #[arg(long)]
    pub lambda: Option<String>,
    /// Points of the log-spaced lambda grid inside the admissible window.
    #[arg(long, default_value_t = 21)]
    pub grid: usize,
    /// Relative margin kept from both ends of the window.
    #[arg(long, default_value_t = 1e-3)]
    pub margin: f64,
    /// Largest N searched for a contracting Dobrushin coefficient.
    #[arg(long, default_value_t = 64)]
    pub max_steps: usize,
    /// Exact head length of the gamma-series bound.
    #[arg(long, default_value_t = 200)]
    pub horizon: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Stationary law, reversibility and spectral summary.
    Stationary {
        #[command(flatten)]
        chain: ChainArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Exact ||P^n - pi|| for n = 0..=N.
    TvProfile {
        #[command(flatten)]
        chain: ChainArgs,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Hitting and return means, M, and optionally the return law.
    Hitting {
        #[command(flatten)]
        chain: ChainArgs,
        #[command(flatten)]
        set: SetArgs,
        /// Also report E_x[sigma_A^l] for l up to this order.
        #[arg(long, default_value_t = 1)]
        orders: usize,
        /// Also tabulate F^n(x, A) for n = 1..=H.
        #[arg(long)]
        law_horizon: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Geometric moments E_x[lambda^sigma_A] and E_x[lambda^tau_A].
    Moments {
        #[command(flatten)]
        chain: ChainArgs,
        #[command(flatten)]
        set: SetArgs,
        /// Lambda values, comma separated.
        #[arg(long)]
        lambda: String,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Split chain on the set, as a chain file plus a sidecar.
    Split {
        #[command(flatten)]
        chain: ChainArgs,
        #[command(flatten)]
        set: SetArgs,
        #[command(flatten)]
        cert: CertificateArgs,
        /// Sidecar path; defaults to <out stem>.sidecar.json when --out is given.
        #[arg(long)]
        sidecar: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Two-step kernel, its certificate and its atom measure.
    Squared {
        #[command(flatten)]
        chain: ChainArgs,
        #[command(flatten)]
        set: SetArgs,
        #[command(flatten)]
        cert: CertificateArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Evaluate one bound family on a chain and set.
    Bound {
        /// Bound family, e.g. atomic_rate, hitmoment, general_perturbation.
        #[arg(long)]
        name: String,
        #[command(flatten)]
        chain: ChainArgs,
        #[command(flatten)]
        set: SetArgs,
        #[command(flatten)]
        lambda: LambdaArgs,
        #[command(flatten)]
        cert: CertificateArgs,
        /// Curve length.
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// Add the exact ||P^n - pi|| column.
        #[arg(long)]
        with_exact: bool,
        /// Perturbation size ||P~ - P|| for stationary and kernel bounds.
        #[arg(long)]
        dp: Option<f64>,
        /// Steps at which kernel perturbation bounds are reported.
        #[arg(long, default_value = "1,2,5,20")]
        steps: String,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Compare perturbation bounds with the exact effect of a perturbation.
    Perturb {
        #[command(flatten)]
        chain: ChainArgs,
        #[command(flatten)]
        set: SetArgs,
        /// Perturbed chain file. Without it a random perturbation is drawn.
        #[arg(long)]
        perturbed: Option<PathBuf>,
        /// Row L1 size of the random perturbation.
        #[arg(long, default_value_t = 1e-2)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Save the drawn perturbed chain.
        #[arg(long)]
        write_perturbed: Option<PathBuf>,
        /// Bound families, comma separated, or "all".
        #[arg(long, default_value = "all")]
        bound: String,
        #[arg(long, default_value = "1,2,5,20")]
        steps: String,
        #[command(flatten)]
        lambda: LambdaArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Seeded soundness sweep of a bound family against exact values.
    Verify {
        /// Bound family or "all".
        #[arg(long)]
        bound: String,
        /// Chain construction; defaults to the one each bound is built for.
        #[arg(long)]
        recipe: Option<String>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        min_states: usize,
        #[arg(long, default_value_t = 12)]
        max_states: usize,
        #[arg(long, default_value_t = 200)]
        n_max: usize,
        /// Random perturbations per feasible chain and set.
        #[arg(long, default_value_t = 10)]
        perturbations: usize,
        /// Weight on the identity mixed into every chain.
        #[arg(long)]
        laziness: Option<f64>,
        /// Include per-trial records.
        #[arg(long)]
        records: bool,
        /// Also run the identity suites with this many checked trials each.
        #[arg(long)]
        identities: Option<usize>,
        /// Also run the feasibility audit with this many draws.
        #[arg(long)]
        audit: Option<usize>,
        /// Worker threads; 0 picks the available parallelism.
        #[arg(long, default_value_t = 0)]
        threads: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
