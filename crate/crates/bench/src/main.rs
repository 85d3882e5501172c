//! Benchmark driver for the matrix-free multigrid Stokes solver: single runs,
//! parameter sweeps, the closed-form cost model and the Schur relaxation
//! estimate. Exit codes: 0 success, 2 infeasible optimization, 1 error.

mod config;
mod emit;
mod exact;
mod metrics;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mgstokes::cost::{
    asymptotic_ratios, block_limit, fmg_work, fmg_work_finite, smoother_limit, vcycle_work_bound,
    Block, Kind, WorkLedger,
};
use num_traits::ToPrimitive;

use config::{parse_config, parse_params, BenchmarkConfig};
use runner::Problem;

#[derive(Parser)]
#[command(name = "bench", about = "Stokes multigrid benchmark driver", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one FMG parameterization against the converged reference.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a parameter sweep and query the work-minimal feasible tuple.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate the work-unit cost model for one parameterization.
    Cost {
        /// Tuple `nu_pre,nu_post,nu_inc,kappa,F|S,xi`.
        #[arg(long)]
        params: String,
        #[arg(long, value_parser = parse_kind)]
        kind: Kind,
        /// Also evaluate the exact finite-level work at this level.
        #[arg(long)]
        level: Option<u32>,
    },
    /// Estimate the Schur relaxation parameter by power iteration.
    Omega {
        #[arg(long)]
        config: PathBuf,
    },
}

fn parse_kind(s: &str) -> Result<Kind, String> {
    match s {
        "p1p1" => Ok(Kind::P1P1),
        "p2p1" => Ok(Kind::P2P1),
        other => Err(format!("kind must be p1p1 or p2p1, got {other}")),
    }
}

fn load_config(path: &PathBuf) -> Result<(BenchmarkConfig, String), Box<dyn std::error::Error>> {
    let text = std::fs::read_to_string(path)?;
    let cfg = parse_config(&text)?;
    Ok((cfg, text))
}

fn emit_outputs(
    cfg: &BenchmarkConfig,
    echo: &str,
    results: &[emit::BenchResult],
) -> Result<(), Box<dyn std::error::Error>> {
    if let Some(p) = &cfg.out_csv {
        emit::write_file(p, &emit::to_csv(results))?;
        println!("wrote {}", p.display());
    }
    if let Some(p) = &cfg.out_json {
        emit::write_file(p, &emit::to_json(echo, results))?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_run(path: &PathBuf) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let (cfg, echo) = load_config(path)?;
    let params = cfg.params.ok_or("run requires `params = ...` in the config")?;
    let problem = Problem::setup(cfg)?;
    let reference = problem.reference()?;
    let r = problem.run_one(params, &reference);
    print_result(&r);
    emit_outputs(&problem.cfg, &echo, std::slice::from_ref(&r))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(path: &PathBuf) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let (cfg, echo) = load_config(path)?;
    let wants_opt = cfg.gamma_u_max.is_some();
    let problem = Problem::setup(cfg)?;
    let (results, best) = problem.sweep()?;
    for r in &results {
        print_result(r);
    }
    emit_outputs(&problem.cfg, &echo, &results)?;
    if wants_opt {
        match best {
            Some(i) => {
                let b = &results[i];
                println!(
                    "optimal: s = {} with predicted work {:.4} WU (gamma_u = {:.4}, gamma_p = {:.4})",
                    b.params,
                    b.predicted_wu,
                    b.gamma_u.unwrap_or(f64::NAN),
                    b.gamma_p.unwrap_or(f64::NAN)
                );
            }
            None => {
                println!("infeasible: no parameterization satisfies the gamma bounds");
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn print_result(r: &emit::BenchResult) {
    let fmt = |x: Option<f64>| x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
    println!(
        "s = {:<16} W = {:>7.3} WU ({})  ratio = {}  gamma = ({}, {})  delta = ({}, {})  err = ({}, {})  {:.2}s",
        r.params.to_string(),
        r.predicted_wu,
        r.predicted_wu_exact,
        fmt(r.measured_ratio),
        fmt(r.gamma_u),
        fmt(r.gamma_p),
        fmt(r.delta_u),
        fmt(r.delta_p),
        r.err_u.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "-".into()),
        r.err_p.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "-".into()),
        r.wall_seconds
    );
}

fn cmd_cost(
    params: &str,
    kind: Kind,
    level: Option<u32>,
) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let p = parse_params(params)?;
    let rat = |r: &num_rational::BigRational| -> String {
        format!("{}/{} ~ {:.6}", r.numer(), r.denom(), r.to_f64().unwrap_or(f64::NAN))
    };
    println!("kind {kind}, parameterization {p}");
    println!("  smoother      W(P^-1)      = {}", rat(&smoother_limit(kind, p.a_hat, p.xi)));
    println!("  v-cycle bound W*(V)        = {}", rat(&vcycle_work_bound(kind, &p)));
    println!("  full multigrid W(FMG)      = {}", rat(&fmg_work(kind, &p)));
    println!(
        "  block limits: A = {}, B = {}, C = {}",
        rat(&block_limit(kind, Block::A)),
        rat(&block_limit(kind, Block::B)),
        rat(&block_limit(kind, Block::C)),
    );
    let t = asymptotic_ratios();
    println!(
        "  asymptotic p2p1(l)/p1p1(l+1): A = {}, B = {}, Stokes = {}, unknowns = {}",
        rat(&t.a),
        rat(&t.b),
        rat(&t.stokes),
        rat(&t.unknowns)
    );
    if let Some(l) = level {
        let finite = fmg_work_finite(kind, &p, l);
        let wu = mgstokes::cost::block_work(kind, Block::Stokes, l);
        let normalized = finite.clone() / wu;
        println!("  finite-level L = {l}: absolute flops/macro-cell = {}", rat(&finite));
        println!("  finite-level L = {l}: normalized by W(A_L)      = {}", rat(&normalized));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_omega(path: &PathBuf) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let (cfg, _) = load_config(path)?;
    let kind = cfg.kind;
    let level = cfg.level;
    let problem = Problem::setup(cfg)?;
    let mut ledger = WorkLedger::default();
    let est = problem.hier.estimate_omega_inv(level, 100, &mut ledger);
    let default = runner::default_omega_inv(kind);
    println!("omega_inv estimate at level {level}: {est:.6}");
    println!(
        "paper cube value: {default:.6} (deviation {:+.2}%, convention-dependent)",
        100.0 * (est / default - 1.0)
    );
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = match &cli.command {
        Command::Run { config } => cmd_run(config),
        Command::Sweep { config } => cmd_sweep(config),
        Command::Cost { params, kind, level } => cmd_cost(params, *kind, *level),
        Command::Omega { config } => cmd_omega(config),
    };
    match out {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
