mod args;
mod commands;

use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use args::OutputArgs;

/// Finite-scale experiments with integer-part polynomial averages.
///
/// Every run is deterministic. ERGOLAB_THREADS sets the worker count without
/// changing any output byte.
#[derive(Parser, Debug)]
#[command(name = "ergolab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decide strong independence of a polynomial family (exit 0 independent, 1 not)
    CheckIndependence(commands::CheckIndependence),
    /// Weyl sums (1/N) sum e(q(n)) at each checkpoint
    Weyl(commands::Weyl),
    /// Multiple ergodic average of f_1(T^[p_1(n)] x) ... f_l(T^[p_l(n)] x)
    Average(commands::Average),
    /// Average along [q(n)], 2[q(n)], ..., l[q(n)] against the linear reference
    Furstenberg(commands::Furstenberg),
    /// Character and box discrepancy of a product orbit
    Equidistribution(commands::Equidistribution),
    /// W-trick discrepancy, maximized over residues coprime to W
    Wtrick(commands::Wtrick),
    /// Recurrence profile of a set against the d(E)^(l+1) bound
    Recurrence(commands::Recurrence),
    /// First polynomial configuration (or dilated-system solution) in a set
    Configurations(commands::Configurations),
    /// Exhaustive search for cyclic sets below the recurrence bound
    CounterexampleSearch(commands::CounterexampleSearch),
    /// Uniformity norm of a function on Z_m
    Gowers(commands::Gowers),
    /// Prime average against the log-weighted average of e(q(n))
    PrimesAverage(commands::PrimesAverage),
    /// Density, sliding upper density and gaps of a set
    Density(commands::Density),
}

/// Rendered report and the exit status it implies.
pub struct Outcome {
    pub text: String,
    pub pass: bool,
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("ERGOLAB_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("ERGOLAB_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            anyhow::bail!("ERGOLAB_THREADS must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<(Outcome, Option<OutputArgs>)> {
    Ok(match cli.command {
        Command::CheckIndependence(c) => (c.run()?, None),
        Command::Weyl(c) => (c.run()?, Some(c.output)),
        Command::Average(c) => (c.run()?, Some(c.output)),
        Command::Furstenberg(c) => (c.run()?, Some(c.output)),
        Command::Equidistribution(c) => (c.run()?, Some(c.output)),
        Command::Wtrick(c) => (c.run()?, Some(c.output)),
        Command::Recurrence(c) => (c.run()?, Some(c.output)),
        Command::Configurations(c) => (c.run()?, Some(c.output)),
        Command::CounterexampleSearch(c) => (c.run()?, Some(c.output)),
        Command::Gowers(c) => (c.run()?, Some(c.output)),
        Command::PrimesAverage(c) => (c.run()?, Some(c.output)),
        Command::Density(c) => (c.run()?, Some(c.output)),
    })
}

fn emit(outcome: &Outcome, output: Option<&OutputArgs>) -> anyhow::Result<()> {
    match output.and_then(|o| o.out.as_ref()) {
        Some(path) => std::fs::write(path, &outcome.text)?,
        None => std::io::stdout().write_all(outcome.text.as_bytes())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| run(cli)).and_then(|(outcome, output)| {
        emit(&outcome, output.as_ref())?;
        Ok(outcome.pass)
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
