use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sgfem::cli::{run_benchmark, run_oracle, ORACLE_SUITES};
use sgfem::config::load_config;

#[derive(Parser)]
#[command(name = "sgfem", version, about = "Adaptive stochastic Galerkin FEM for lognormal diffusion")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the adaptive benchmark described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; SGFEM_THREADS takes precedence.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Regenerate golden files for an oracle suite (triple, galerkin, marking or all).
    Oracle {
        suite: String,
        #[arg(long, default_value = "golden")]
        out: PathBuf,
    },
}

fn init_threads(flag: Option<usize>) -> Result<(), String> {
    let env = std::env::var("SGFEM_THREADS").ok();
    let n = match env {
        Some(v) => Some(v.parse::<usize>().map_err(|_| format!("invalid SGFEM_THREADS '{v}'"))?),
        None => flag,
    };
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let outcome = match args.command {
        Command::Run { config, out, seed, threads } => (|| -> Result<(), String> {
            init_threads(threads)?;
            let mut cfg = load_config(&config).map_err(|e| e.to_string())?;
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            if let Some(s) = seed {
                cfg.mc.seed = s;
            }
            run_benchmark(&cfg, |line| eprintln!("{line}")).map_err(|e| e.to_string())?;
            eprintln!("artifacts written to {}", cfg.out_dir.display());
            Ok(())
        })(),
        Command::Oracle { suite, out } => (|| -> Result<(), String> {
            let suites: Vec<&str> = if suite == "all" { ORACLE_SUITES.to_vec() } else { vec![suite.as_str()] };
            for s in suites {
                let worst = run_oracle(s, &out).map_err(|e| e.to_string())?;
                println!("{s}: max discrepancy {worst:e}");
            }
            Ok(())
        })(),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
