use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use oldroyd_cli::check::CheckLine;
use oldroyd_cli::commands::{cmd_compare, cmd_convergence, cmd_run};
use oldroyd_cli::{CliError, RunConfig};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Run,
    Convergence,
    Compare,
}

/// Galerkin and two-level finite element solvers for order-one Oldroyd flow.
#[derive(Debug, Parser)]
#[command(name = "oldroyd", version)]
struct Args {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum, default_value = "run")]
    mode: Mode,
    /// Apply the built-in acceptance thresholds; exit 4 on a miss.
    #[arg(long)]
    check: bool,
    /// Concurrent runs in a convergence study.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write VTK snapshots of the final state.
    #[arg(long)]
    vtk: bool,
}

fn report(checks: &[CheckLine], enforce: bool) -> Result<(), CliError> {
    for c in checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    if enforce && failed > 0 {
        return Err(CliError::Check(failed));
    }
    Ok(())
}

fn execute(args: &Args) -> Result<(), CliError> {
    let mut cfg = RunConfig::from_path(&args.config)?;
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    cfg.vtk |= args.vtk;
    let p = &cfg.params;
    println!("mu = {}, gamma = {}, delta = {}", p.mu, p.gamma, p.delta);
    match args.mode {
        Mode::Run => {
            let r = cmd_run(&cfg)?;
            let o = &r.outcome;
            println!(
                "steps = {}, picard = {}, wall = {:.3} s",
                o.diagnostics.len() - 1,
                o.picard_total,
                o.wall_seconds
            );
            if let Some(e) = o.errors {
                println!(
                    "final errors: errL2_u = {:e}, errH1_u = {:e}, errL2_p = {:e}",
                    e.velocity_l2, e.velocity_h1, e.pressure_l2
                );
            }
            report(&r.checks, args.check)
        }
        Mode::Convergence => {
            let (_, checks) = cmd_convergence(&cfg, args.jobs)?;
            println!("wrote {}", cfg.out_dir.join("convergence.csv").display());
            report(&checks, args.check)
        }
        Mode::Compare => {
            let (r, checks) = cmd_compare(&cfg)?;
            println!(
                "galerkin {:.3} s, two-level {:.3} s, ratio {:.3}, relative H1 gap {:e}",
                r.galerkin.wall_seconds, r.two_level.wall_seconds, r.ratio, r.relative_gap_h1
            );
            report(&checks, args.check)
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
