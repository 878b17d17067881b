use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sopt_core::cache::{Cache, RankPolicy};
use sopt_core::solver::{SolverConfig, UbPolicy};
use sopt_core::synth::SynthMode;
use sopt_cli::commands::{self, exit};
use sopt_cli::{mine, RunConfig};

/// A synthesizing superoptimizer for a bitvector dataflow IR.
#[derive(Parser)]
#[command(name = "sopt", version)]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Opts {
    /// SMT solver executable [default: $SOPT_SOLVER or z3]
    #[arg(long, global = true)]
    solver: Option<String>,
    /// Argument for the solver; repeatable [default: -in]
    #[arg(long = "solver-arg", global = true, allow_hyphen_values = true)]
    solver_args: Vec<String>,
    /// Per-query solver timeout
    #[arg(long, global = true, default_value_t = 10_000)]
    timeout_ms: u64,
    /// Budget for synthesizing one LHS
    #[arg(long, global = true, default_value_t = 60_000)]
    lhs_timeout_ms: u64,
    /// Require replacements to match the LHS even where it is poison
    #[arg(long, global = true)]
    no_exploit_ub: bool,
    /// Cache file
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    /// Write every solver query into this directory
    #[arg(long, global = true)]
    emit_queries: Option<PathBuf>,
    /// Worker threads [default: number of CPUs]
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Largest RHS cost to search
    #[arg(long, global = true, default_value_t = 3)]
    max_cost: u32,
    /// Only look for constant replacements
    #[arg(long, global = true, conflicts_with = "bool_roots_only")]
    constants_only: bool,
    /// Only synthesize for one-bit roots
    #[arg(long, global = true)]
    bool_roots_only: bool,
    /// Drop LHSs whose text is longer than this
    #[arg(long, global = true, default_value_t = 1024)]
    max_lhs_bytes: usize,
    /// Do not harvest path conditions
    #[arg(long, global = true)]
    no_pcs: bool,
    /// Do not harvest block path conditions
    #[arg(long, global = true)]
    no_blockpcs: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rank {
    Static,
    Dynamic,
    Benefit,
}

#[derive(Subcommand)]
enum Cmd {
    /// Verify optimizations; exit 0 if all are valid, 1 if any is invalid,
    /// 2 on timeouts or errors
    Check { files: Vec<PathBuf> },
    /// Synthesize a cheaper right-hand side for a LHS
    Infer { file: PathBuf },
    /// Write the candidate LHSs of a CFG file, one per file, plus a manifest
    Extract {
        file: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract, look up and synthesize over a corpus of CFG files
    Mine { corpus: PathBuf },
    /// Print the cached optimizations, ranked
    Report {
        #[arg(long, value_enum, default_value = "static")]
        rank: Rank,
        /// Leave out LHSs with more instructions than this
        #[arg(long)]
        max_lhs_nodes: Option<usize>,
        /// Add the dynamic counts in a `site<TAB>count` file first
        #[arg(long)]
        ingest_dynamic: Option<PathBuf>,
    },
}

fn run_config(o: &Opts) -> RunConfig {
    let mut solver = SolverConfig::default();
    if let Some(s) = &o.solver {
        solver.program = s.clone();
    }
    if !o.solver_args.is_empty() {
        solver.args = o.solver_args.clone();
    }
    solver.dump_dir = o.emit_queries.clone();
    let mut cfg = RunConfig {
        solver,
        query_timeout: Duration::from_millis(o.timeout_ms),
        lhs_timeout: Duration::from_millis(o.lhs_timeout_ms),
        policy: if o.no_exploit_ub {
            UbPolicy::NoExploit
        } else {
            UbPolicy::Exploit
        },
        mode: if o.constants_only {
            SynthMode::ConstantsOnly
        } else if o.bool_roots_only {
            SynthMode::BoolRootsOnly
        } else {
            SynthMode::Full
        },
        max_cost: o.max_cost,
        cache: o.cache.clone(),
        ..RunConfig::default()
    };
    if let Some(j) = o.jobs {
        cfg.jobs = j;
    }
    cfg.extraction.max_bytes = o.max_lhs_bytes;
    cfg.extraction.pcs = !o.no_pcs;
    cfg.extraction.blockpcs = !o.no_blockpcs;
    cfg
}

fn open_cache(cfg: &RunConfig) -> Result<Option<Cache>> {
    Ok(match &cfg.cache {
        Some(p) => Some(Cache::open(p)?),
        None => None,
    })
}

fn run(cli: Cli) -> Result<i32> {
    let cfg = run_config(&cli.opts);
    let needs_solver = matches!(cli.cmd, Cmd::Check { .. } | Cmd::Infer { .. } | Cmd::Mine { .. });
    cfg.validate(needs_solver)?;
    let solver = cfg.make_solver();
    match cli.cmd {
        Cmd::Check { files } => {
            if files.is_empty() {
                bail!("no files to check");
            }
            let (out, code) = commands::check(&files, &cfg, &solver);
            print!("{out}");
            return Ok(code);
        }
        Cmd::Infer { file } => {
            let cache = open_cache(&cfg)?;
            print!("{}", commands::infer(&file, &cfg, &solver, cache.as_ref())?);
        }
        Cmd::Extract { file, out } => {
            let s = commands::extract(&file, &cfg, &out)?;
            println!("total\t{}\nemitted\t{}\ndropped\t{}", s.total, s.emitted, s.dropped);
        }
        Cmd::Mine { corpus } => {
            let cache = open_cache(&cfg)?.unwrap_or_else(Cache::in_memory);
            print!("{}", mine(&corpus, &cfg, &cache, &solver)?);
        }
        Cmd::Report {
            rank,
            max_lhs_nodes,
            ingest_dynamic,
        } => {
            let Some(cache) = open_cache(&cfg)? else {
                bail!("report needs --cache");
            };
            if let Some(f) = ingest_dynamic {
                let text = std::fs::read_to_string(&f)?;
                let got = cache.ingest_dynamic(&text)?;
                cache.flush()?;
                eprintln!("ingested {} counts, {} for unknown sites", got.applied, got.unknown);
            }
            let mut policy = match rank {
                Rank::Static => RankPolicy::StaticCount,
                Rank::Dynamic => RankPolicy::DynamicCount,
                Rank::Benefit => RankPolicy::Benefit,
            };
            if let Some(n) = max_lhs_nodes {
                policy = RankPolicy::ComplexityFiltered {
                    max_nodes: n,
                    then: Box::new(policy),
                };
            }
            print!("{}", commands::report(&cache, &cfg, &policy));
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("sopt: {e:#}");
            ExitCode::from(exit::TROUBLE as u8)
        }
    }
}
