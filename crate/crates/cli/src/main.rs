use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use maskmatch_cli::accuracy;
use maskmatch_cli::bench::{self, BenchRow};
use maskmatch_cli::config::BenchConfig;
use maskmatch_cli::db::{DbDir, DbParams};
use maskmatch_cli::selftest;
use maskmatch_cli::synth;
use maskmatch_core::ring::ntt::{NTT_PRIMES_49, NTT_PRIMES_60};

/// Privacy-preserving vector-similarity matching: enroll encrypted feature
/// vectors, then learn a single bit per query - whether anything in the
/// database clears the similarity threshold.
#[derive(Parser)]
#[command(name = "maskmatch", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a database directory with fresh keys
    Keygen {
        #[arg(long)]
        out: PathBuf,
        /// parameter preset: standard (N=4096), desk (N=2048), small (N=1024)
        #[arg(long, default_value = "standard")]
        preset: String,
        /// feature dimension
        #[arg(long, default_value_t = 128)]
        dim: usize,
        /// quantization scale
        #[arg(long, default_value_t = 0)]
        precision: u64,
        /// key-generation seed (random when omitted)
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate synthetic unit-norm vectors
    Gen {
        #[arg(long)]
        count: usize,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 8)]
        clusters: usize,
        #[arg(long, default_value_t = 0.1)]
        jitter: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Enroll vectors from a file into a database
    Enroll {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        vectors: PathBuf,
    },
    /// Query a database: prints 1 (match) or 0, plus session accounting
    Query {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        vector: PathBuf,
        /// cosine-similarity threshold
        #[arg(long)]
        threshold: f64,
        /// switch the stored database to the verifier key once at setup
        #[arg(long)]
        switch_at_setup: bool,
        /// drop this many low bits from every response coefficient
        #[arg(long, default_value_t = 0)]
        truncate_bits: u32,
    },
    /// Run a benchmark sweep from a JSON config, writing CSV
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Precision-scaling agreement study
    Accuracy {
        /// optional JSON config; defaults match the study parameters
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the oracle self-check suites
    Selftest,
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Keygen {
            out,
            preset,
            dim,
            precision,
            seed,
        } => {
            let (n, log_t, default_p) = match preset.as_str() {
                "standard" => (4096usize, 20u32, 400u64),
                "desk" => (2048, 12, 30),
                "small" => (1024, 20, 400),
                other => bail!("unknown preset {other} (expected standard, desk or small)"),
            };
            let q_factors = if log_t >= 14 {
                vec![NTT_PRIMES_60[0], NTT_PRIMES_49[0]]
            } else {
                vec![NTT_PRIMES_60[0]]
            };
            let precision = if precision == 0 { default_p } else { precision };
            let kg_seed = seed.unwrap_or_else(rand::random);
            let params = DbParams {
                kg_seed,
                n,
                q_factors,
                log_t,
                d: dim,
                precision,
            };
            let db = DbDir::init(&out, params)?;
            // fail early on inconsistent geometry
            db.system_config()?;
            println!(
                "initialized {} (N={n}, log2 t={log_t}, d={dim}, precision {precision})",
                out.display()
            );
            Ok(())
        }
        Command::Gen {
            count,
            dim,
            clusters,
            jitter,
            seed,
            out,
        } => {
            if count == 0 {
                bail!("count must be at least 1");
            }
            let set = synth::gen_synthetic(count, dim, clusters, jitter, seed);
            synth::write_vectors(&out, &set.vectors)?;
            println!(
                "wrote {count} {dim}-dimensional vectors to {}",
                out.display()
            );
            Ok(())
        }
        Command::Enroll { db, vectors } => {
            let mut dbdir = DbDir::open(&db)?;
            let vecs = synth::read_vectors(&vectors)?;
            if vecs[0].len() != dbdir.params.d {
                bail!(
                    "vector dimension {} does not match database dimension {}",
                    vecs[0].len(),
                    dbdir.params.d
                );
            }
            let salt = dbdir.bump_uploads()?;
            let mut sim = dbdir.simulation(salt)?;
            sim.enroll(&vecs).context("enrollment failed")?;
            dbdir.save_database(&sim)?;
            println!(
                "enrolled {} vectors; database now holds {} rows in {} ciphertexts",
                vecs.len(),
                sim.m(),
                sim.cs().db().s()
            );
            Ok(())
        }
        Command::Query {
            db,
            vector,
            threshold,
            switch_at_setup,
            truncate_bits,
        } => {
            let mut dbdir = DbDir::open(&db)?;
            let vecs = synth::read_vectors(&vector)?;
            if vecs.len() != 1 {
                bail!(
                    "query file must hold exactly one vector, found {}",
                    vecs.len()
                );
            }
            let salt = dbdir.bump_sessions()?.wrapping_add(1 << 32);
            let cfg = dbdir
                .system_config()?
                .with_switch_at_setup(switch_at_setup)
                .with_truncation(truncate_bits);
            let mut sim = dbdir.simulation_with(cfg, salt)?;
            let (hit, metrics) = sim.query(&vecs[0], threshold)?;
            println!("{}", hit as u8);
            eprintln!(
                "m={} s={} he_mults={} he_adds={} relins={} switchings={}",
                metrics.m,
                metrics.s,
                metrics.he_mults,
                metrics.he_adds,
                metrics.relins,
                metrics.switchings
            );
            eprint!("{}", sim.stats().render());
            Ok(())
        }
        Command::Bench { config, out } => {
            let cfg = BenchConfig::load(&config)?;
            let rows = bench::bench_sweep(&cfg)?;
            std::fs::write(&out, bench::rows_to_csv(&rows))?;
            print_bench_summary(&cfg, &rows);
            Ok(())
        }
        Command::Accuracy { config } => {
            let (n, d, log_t, threshold, repeats, seed) = match config {
                Some(path) => {
                    let cfg = BenchConfig::load(&path)?;
                    (cfg.n, cfg.d, cfg.log_t, cfg.threshold, 3, cfg.seed)
                }
                None => (1024, 32, 30, 0.5, 3, 7),
            };
            let report = accuracy::accuracy_study(n, d, log_t, threshold, repeats, seed)?;
            print!("{}", report.render());
            Ok(())
        }
        Command::Selftest => selftest::run(),
    }
}

fn print_bench_summary(cfg: &BenchConfig, rows: &[BenchRow]) {
    if let Ok(sys) = cfg.system_config() {
        let (r2_time, r2_bytes) = bench::linearity_check(rows, sys.delta());
        println!("sweep points: {}", cfg.m_sweep.len());
        println!("HE-phase linearity in s: R^2(time) = {r2_time:.5}, R^2(bytes) = {r2_bytes:.5}");
    }
    for r in rows.iter().filter(|r| r.phase.starts_with("he")) {
        println!(
            "d={} m={:>8} {}: {:.4}s, {} B, {} mult",
            r.d, r.m, r.phase, r.seconds, r.bytes, r.he_mults
        );
    }
}
