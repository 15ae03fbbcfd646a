//! `pbo`: exact-oracle verification, simulated benchmarks, regret plots and
//! the session server.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use pbo_bench::bench::{aggregate, run_bench, write_csv, read_csv, BenchConfig};
use pbo_bench::plot::{curves, render_svg};
use pbo_core::acquisition::{AcquisitionKind, AcquisitionSpec};
use pbo_core::exact::{lemma_suite, theorem1_suite, theorem2_suite, theorem4_suite, SuiteReport};
use pbo_service::SessionManager;

#[derive(Parser)]
#[command(name = "pbo", version, about = "Preferential Bayesian optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Theorem1,
    Theorem2,
    Theorem4,
    Lemmas,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Check the optimality and consistency properties on the exact
    /// finite-hypothesis engine.
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Instances per suite. Defaults: 100 (theorem1, theorem2), 500 runs
        /// (theorem4), 200 states with 50 vectors each (lemmas).
        #[arg(long)]
        trials: Option<usize>,
        /// JSON report with per-trial witnesses.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replicated runs against a simulated decision-maker, written as CSV.
    Bench {
        #[arg(long)]
        problem: String,
        #[arg(long, default_value = "qeubo")]
        algo: AcquisitionKind,
        #[arg(long, default_value_t = 2)]
        q: usize,
        #[arg(long, default_value_t = 150)]
        queries: usize,
        #[arg(long, default_value_t = 1)]
        reps: usize,
        /// Target mistake rate of the simulated decision-maker.
        #[arg(long, default_value_t = 0.2)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        mc_samples: Option<usize>,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Regret curves from one or more bench CSV files.
    Plot {
        #[arg(long = "in", required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// HTTP session server.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Session journals; sessions are kept in memory only when omitted.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

fn run_suite(suite: Suite, seed: u64, trials: Option<usize>) -> Result<Vec<SuiteReport>> {
    let one = |s: Suite| -> Result<SuiteReport> {
        Ok(match s {
            Suite::Theorem1 => theorem1_suite(seed, trials.unwrap_or(100))?,
            Suite::Theorem2 => theorem2_suite(seed, trials.unwrap_or(100))?,
            Suite::Theorem4 => theorem4_suite(seed, trials.unwrap_or(500), 100)?,
            Suite::Lemmas => {
                let n = trials.unwrap_or(200);
                lemma_suite(seed, 50 * n, n)?
            }
            Suite::All => unreachable!(),
        })
    };
    match suite {
        Suite::All => [Suite::Theorem1, Suite::Theorem2, Suite::Theorem4, Suite::Lemmas]
            .into_iter()
            .map(one)
            .collect(),
        s => Ok(vec![one(s)?]),
    }
}

fn verify(suite: Suite, seed: u64, trials: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let reports = run_suite(suite, seed, trials)?;
    let mut ok = true;
    for r in &reports {
        let verdict = if r.all_passed() { "PASS" } else { "FAIL" };
        println!(
            "{verdict} {:<9} {}/{} passed in {:.2}s (seed {})",
            r.suite, r.passed, r.trials, r.seconds, r.seed
        );
        for f in r.failures().take(3) {
            println!("  {} [{}]: {}", f.theorem, f.instance, f.witness);
        }
        ok &= r.all_passed();
    }
    if let Some(path) = out {
        std::fs::write(&path, serde_json::to_string_pretty(&reports)?)
            .with_context(|| format!("writing {}", path.display()))?;
        println!("report written to {}", path.display());
    }
    if !ok {
        bail!("verification failed");
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Verify { suite, seed, trials, out } => verify(suite, seed, trials, out),
        Command::Bench {
            problem,
            algo,
            q,
            queries,
            reps,
            noise,
            seed,
            mc_samples,
            restarts,
            out,
        } => {
            let mut spec = AcquisitionSpec::new(algo, q);
            if let Some(n) = mc_samples {
                spec.mc_samples = n;
            }
            if let Some(n) = restarts {
                spec.restarts = n;
            }
            let mut cfg = BenchConfig::new(&problem, spec);
            cfg.n_queries = queries;
            cfg.n_replications = reps;
            cfg.noise = noise;
            cfg.seed = seed;
            let result = run_bench(&cfg)?;
            for t in result.traces.iter().filter(|t| t.failure.is_some()) {
                eprintln!("seed {} stopped after {} queries: {}", t.seed, t.len(), t.failure.as_deref().unwrap_or(""));
            }
            let file = std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            write_csv(file, &result.traces)?;
            println!("simulated noise lambda = {:.5}", result.lambda_sim);
            if let Ok(summary) = aggregate(&result.traces) {
                let last = summary.rows.last().expect("at least one row");
                println!(
                    "{} {algo} q={q}: final mean log10 regret {:.3} ± {:.3} over {} reps",
                    problem, last.mean_log10_regret, last.half_width, summary.replications
                );
                for (a, s) in &summary.mean_acq_seconds {
                    println!("mean acquisition time {a}: {s:.3}s");
                }
            }
            Ok(())
        }
        Command::Plot { input, out } => {
            let mut rows = Vec::new();
            for path in &input {
                let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
                rows.extend(read_csv(file)?);
            }
            std::fs::write(&out, render_svg(&curves(&rows)?))?;
            Ok(())
        }
        Command::Serve { port, host, data_dir } => {
            let manager = match data_dir {
                Some(dir) => SessionManager::open(&dir)?,
                None => SessionManager::in_memory(),
            };
            let addr = SocketAddr::new(host, port);
            let rt = tokio::runtime::Runtime::new()?;
            println!("listening on http://{addr}");
            rt.block_on(pbo_service::http::serve(Arc::new(manager), addr))?;
            Ok(())
        }
    }
}
