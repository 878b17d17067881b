use std::fmt::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Result};
use sopt_core::cache::fingerprint;
use sopt_core::extract::ExtractionConfig;
use sopt_core::solver::{Solver, SolverConfig, UbPolicy};
use sopt_core::synth::{SynthConfig, SynthMode};

/// Everything a run depends on.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub query_timeout: Duration,
    pub lhs_timeout: Duration,
    pub policy: UbPolicy,
    pub mode: SynthMode,
    pub max_cost: u32,
    pub cache: Option<PathBuf>,
    pub extraction: ExtractionConfig,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        RunConfig {
            solver: SolverConfig::default(),
            query_timeout: synth.per_query_timeout,
            lhs_timeout: synth.per_lhs_timeout,
            policy: synth.policy,
            mode: synth.mode,
            max_cost: synth.max_cost,
            cache: None,
            extraction: ExtractionConfig::default(),
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

fn on_path(program: &str) -> bool {
    if program.contains('/') {
        return Path::new(program).is_file();
    }
    std::env::var_os("PATH").is_some_and(|paths| std::env::split_paths(&paths).any(|d| d.join(program).is_file()))
}

impl RunConfig {
    /// Rejects settings no run can use. The solver is only looked up when
    /// `needs_solver` is set.
    pub fn validate(&self, needs_solver: bool) -> Result<()> {
        if self.query_timeout.is_zero() || self.lhs_timeout.is_zero() {
            bail!("timeouts must be positive");
        }
        if self.jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        if self.extraction.max_bytes == 0 {
            bail!("--max-lhs-bytes must be positive");
        }
        if needs_solver && !on_path(&self.solver.program) {
            bail!("solver `{}` not found", self.solver.program);
        }
        Ok(())
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            max_cost: self.max_cost,
            mode: self.mode,
            policy: self.policy,
            per_lhs_timeout: self.lhs_timeout,
            per_query_timeout: self.query_timeout,
            ..SynthConfig::default()
        }
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.synth_config())
    }

    pub fn make_solver(&self) -> Solver {
        Solver::new(self.solver.clone())
    }

    /// `#`-prefixed `key<TAB>value` lines describing the run.
    pub fn header(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| writeln!(s, "# {k}\t{v}").unwrap();
        let mut solver = vec![self.solver.program.clone()];
        solver.extend(self.solver.args.iter().cloned());
        line("solver", solver.join(" "));
        line("query_timeout_ms", self.query_timeout.as_millis().to_string());
        line("lhs_timeout_ms", self.lhs_timeout.as_millis().to_string());
        line("ub_policy", self.policy.name().to_string());
        line(
            "mode",
            match self.mode {
                SynthMode::Full => "full",
                SynthMode::ConstantsOnly => "constants-only",
                SynthMode::BoolRootsOnly => "bool-roots-only",
            }
            .to_string(),
        );
        line("max_cost", self.max_cost.to_string());
        line("max_lhs_bytes", self.extraction.max_bytes.to_string());
        line("pcs", self.extraction.pcs.to_string());
        line("blockpcs", self.extraction.blockpcs.to_string());
        line(
            "cache",
            self.cache.as_ref().map_or("-".to_string(), |p| p.display().to_string()),
        );
        line("jobs", self.jobs.to_string());
        line("fingerprint", self.fingerprint());
        s
    }
}
