use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use rayon::prelude::*;
use sopt_core::cache::{Cache, CacheKey, Lookup};
use sopt_core::extract::{extract_text, Candidate};
use sopt_core::solver::Solver;

use crate::solve::{solve, Resolution};
use crate::RunConfig;

/// Counters of one mining run. `opportunities == hits + misses` and
/// `distinct` is the number of cache keys the run touched.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MineSummary {
    pub files: usize,
    pub failed_files: usize,
    pub distinct: usize,
    pub opportunities: usize,
    pub hits: usize,
    pub misses: usize,
    /// Distinct LHSs with a cheaper RHS, cached or new.
    pub found: usize,
    /// Opportunities whose LHS has a cheaper RHS.
    pub applications: usize,
    /// Candidates over the size limit.
    pub dropped: usize,
    pub timeouts: usize,
    pub errors: usize,
    pub solver_calls: u64,
    pub wall: Duration,
}

impl fmt::Display for MineSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = [
            ("files", self.files.to_string()),
            ("failed_files", self.failed_files.to_string()),
            ("distinct", self.distinct.to_string()),
            ("opportunities", self.opportunities.to_string()),
            ("hits", self.hits.to_string()),
            ("misses", self.misses.to_string()),
            ("found", self.found.to_string()),
            ("applications", self.applications.to_string()),
            ("dropped", self.dropped.to_string()),
            ("timeouts", self.timeouts.to_string()),
            ("errors", self.errors.to_string()),
            ("solver_calls", self.solver_calls.to_string()),
            ("wall_ms", self.wall.as_millis().to_string()),
        ];
        for (k, v) in rows {
            writeln!(f, "{k}\t{v}")?;
        }
        Ok(())
    }
}

/// The `.cfg` files under `corpus` in sorted order, with the names they go
/// by in site ids. A single file is its own corpus.
pub fn corpus_files(corpus: &Path) -> Result<Vec<(PathBuf, String)>> {
    if corpus.is_file() {
        let name = corpus.file_name().map_or_else(|| corpus.display().to_string(), |n| n.to_string_lossy().into_owned());
        return Ok(vec![(corpus.to_path_buf(), name)]);
    }
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(corpus).sort_by_file_name() {
        let entry = entry.with_context(|| format!("reading {}", corpus.display()))?;
        let path = entry.path();
        if entry.file_type().is_file() && path.extension().is_some_and(|e| e == "cfg") {
            let rel = path.strip_prefix(corpus).unwrap_or(path);
            out.push((path.to_path_buf(), rel.to_string_lossy().replace('\\', "/")));
        }
    }
    Ok(out)
}

/// Extracts every candidate of the corpus, looks each up in `cache`,
/// synthesizes the misses and records the outcomes and static counts.
pub fn mine(corpus: &Path, cfg: &RunConfig, cache: &Cache, solver: &Solver) -> Result<MineSummary> {
    let start = Instant::now();
    let calls_before = solver.calls();
    let mut summary = MineSummary::default();
    let fp = cfg.fingerprint();

    let mut sites: Vec<(String, CacheKey)> = Vec::new();
    let mut distinct: Vec<(CacheKey, Candidate)> = Vec::new();
    let mut seen: HashMap<CacheKey, usize> = HashMap::new();
    for (path, name) in corpus_files(corpus)? {
        summary.files += 1;
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) => {
                log::error!("{}: {e}", path.display());
                summary.failed_files += 1;
                continue;
            }
        };
        let ex = match extract_text(&text, &cfg.extraction) {
            Ok(ex) => ex,
            Err(diags) => {
                for d in diags {
                    log::error!("{}:{d}", path.display());
                }
                summary.failed_files += 1;
                continue;
            }
        };
        summary.dropped += ex.dropped;
        for c in ex.candidates {
            let key = CacheKey::new(&c.lhs, &fp);
            sites.push((format!("{name}:{}", c.site), key.clone()));
            if !seen.contains_key(&key) {
                seen.insert(key.clone(), distinct.len());
                distinct.push((key, c));
            }
        }
    }
    summary.distinct = distinct.len();
    summary.opportunities = sites.len();

    let mut outcome: HashMap<CacheKey, Option<String>> = HashMap::new();
    let mut misses = Vec::new();
    for (key, c) in &distinct {
        match cache.lookup(key) {
            Lookup::Hit(e) => {
                outcome.insert(key.clone(), e.rhs);
            }
            Lookup::Miss => misses.push((key, c)),
        }
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build()?;
    let solved: Vec<Resolution> = pool.install(|| misses.par_iter().map(|(_, c)| solve(&c.lhs, cfg, solver)).collect());
    for ((key, c), r) in misses.iter().zip(solved) {
        match &r {
            Resolution::Timeout => {
                log::warn!("{}: synthesis timed out", c.site);
                summary.timeouts += 1;
            }
            Resolution::Error(e) => {
                log::error!("{}: {e}", c.site);
                summary.errors += 1;
            }
            _ => {}
        }
        if let Some(rhs) = r.cached() {
            cache.record(key, rhs)?;
            outcome.insert((*key).clone(), rhs.map(str::to_string));
        }
    }

    let missed: std::collections::HashSet<&CacheKey> = misses.iter().map(|(k, _)| *k).collect();
    for (site, key) in &sites {
        if missed.contains(key) {
            summary.misses += 1;
        } else {
            summary.hits += 1;
        }
        if let Some(rhs) = outcome.get(key) {
            cache.bump_static(key)?;
            cache.map_site(site, key);
            if rhs.is_some() {
                summary.applications += 1;
            }
        }
    }
    summary.found = distinct
        .iter()
        .filter(|(k, _)| outcome.get(k).is_some_and(Option::is_some))
        .count();
    cache.flush()?;
    summary.solver_calls = solver.calls() - calls_before;
    summary.wall = start.elapsed();
    Ok(summary)
}
