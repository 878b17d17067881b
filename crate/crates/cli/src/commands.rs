use std::fmt::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use sopt_core::cache::{rank, Cache, CacheKey, Lookup, RankPolicy, ReportRow};
use sopt_core::extract::{extract_text, manifest};
use sopt_core::interp::Env;
use sopt_core::ir::{
    canonicalize, parse_lhs, parse_optimization, print_optimization, print_optimization_with_names,
    Diagnostic, Optimization,
};
use sopt_core::solver::Solver;
use sopt_core::verify::{check_batch, Counterexample, Verdict};

use crate::solve::{solve, Resolution};
use crate::RunConfig;

/// Exit status of `check`.
pub mod exit {
    pub const VALID: i32 = 0;
    pub const INVALID: i32 = 1;
    pub const TROUBLE: i32 = 2;
}

fn diagnostics(path: &Path, diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| format!("{}:{d}", path.display())).collect::<Vec<_>>().join("\n")
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// The inputs of a counterexample as `;` comments, named as in the source
/// where the source named them.
pub fn describe_counterexample(opt: &Optimization, ce: &Counterexample) -> String {
    let (_, names) = print_optimization_with_names(opt);
    let name = |id| match &opt.lhs.dag.get(id).name {
        Some(n) => format!("%{n}"),
        None => names.get(id).unwrap_or("?").to_string(),
    };
    let Env { vars, blocks } = &ce.env;
    let mut parts: Vec<String> = vars
        .iter()
        .map(|(&id, &v)| format!("{} = {v}:i{}", name(id), opt.lhs.dag.get(id).width))
        .collect();
    parts.extend(blocks.iter().map(|(&id, &p)| format!("{} = predecessor {p}", name(id))));
    format!("; counterexample: {}\n; lhs: {}\n; rhs: {}\n", parts.join(", "), ce.lhs, ce.rhs)
}

/// Verifies the optimization in each file. Returns the printed report and
/// the exit status: 0 when all are valid, 1 when any is invalid, otherwise
/// 2 if any timed out or failed.
pub fn check(paths: &[PathBuf], cfg: &RunConfig, solver: &Solver) -> (String, i32) {
    let mut out = String::new();
    let (mut invalid, mut trouble) = (false, false);
    let mut parsed = Vec::new();
    for p in paths {
        match read(p).map_err(|e| e.to_string()).and_then(|t| parse_optimization(&t).map_err(|d| diagnostics(p, &d))) {
            Ok(opt) => parsed.push((p, opt)),
            Err(e) => {
                writeln!(out, "{}: error\n; {}", p.display(), e.replace('\n', "\n; ")).unwrap();
                trouble = true;
            }
        }
    }
    let opts: Vec<Optimization> = parsed.iter().map(|(_, o)| o.clone()).collect();
    let verdicts = check_batch(solver, &opts, cfg.policy, cfg.query_timeout, cfg.jobs);
    for ((p, opt), v) in parsed.iter().zip(verdicts) {
        match v {
            Ok(Verdict::Valid) => writeln!(out, "{}: valid", p.display()).unwrap(),
            Ok(Verdict::Invalid(ce)) => {
                invalid = true;
                write!(out, "{}: invalid\n{}", p.display(), describe_counterexample(opt, &ce)).unwrap();
            }
            Ok(Verdict::Timeout) => {
                trouble = true;
                writeln!(out, "{}: timeout", p.display()).unwrap();
            }
            Err(e) => {
                trouble = true;
                writeln!(out, "{}: error\n; {e}", p.display()).unwrap();
            }
        }
    }
    let code = if invalid {
        exit::INVALID
    } else if trouble {
        exit::TROUBLE
    } else {
        exit::VALID
    };
    (out, code)
}

/// Synthesizes a cheaper RHS for the LHS in `path`. Prints the complete
/// optimization, or `; no result`. With a cache, known outcomes are reused
/// and new definitive ones recorded.
pub fn infer(path: &Path, cfg: &RunConfig, solver: &Solver, cache: Option<&Cache>) -> Result<String> {
    let text = read(path)?;
    let lhs = canonicalize(&parse_lhs(&text).map_err(|d| anyhow!(diagnostics(path, &d)))?);
    let key = CacheKey::new(&lhs, &cfg.fingerprint());
    let show = |rhs: Option<&str>| match rhs {
        Some(r) => format!("{}{r}", key.lhs),
        None => "; no result\n".to_string(),
    };
    if let Some(Lookup::Hit(e)) = cache.map(|c| c.lookup(&key)) {
        return Ok(show(e.rhs.as_deref()));
    }
    let r = solve(&lhs, cfg, solver);
    if let (Some(c), Some(rhs)) = (cache, r.cached()) {
        c.record(&key, rhs)?;
        c.flush()?;
    }
    match r {
        Resolution::Found { opt, .. } => Ok(print_optimization(&opt)),
        Resolution::NotFound => Ok(show(None)),
        Resolution::Timeout => Err(anyhow!("synthesis timed out")),
        Resolution::Error(e) => Err(anyhow!(e)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtractSummary {
    pub total: usize,
    pub emitted: usize,
    pub dropped: usize,
}

/// Writes one `.sopt` file per candidate of `path` into `out`, plus
/// `manifest.tsv`.
pub fn extract(path: &Path, cfg: &RunConfig, out: &Path) -> Result<ExtractSummary> {
    let text = read(path)?;
    let ex = extract_text(&text, &cfg.extraction).map_err(|d| anyhow!(diagnostics(path, &d)))?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut entries = Vec::new();
    for c in &ex.candidates {
        let file = format!("{}.{}.{}.sopt", c.site.function, c.site.block, c.site.index);
        std::fs::write(out.join(&file), &c.text).with_context(|| format!("writing {file}"))?;
        entries.push((file, c));
    }
    let m = manifest(&entries, ex.total, ex.dropped);
    std::fs::write(out.join("manifest.tsv"), m).context("writing manifest.tsv")?;
    Ok(ExtractSummary {
        total: ex.total,
        emitted: ex.candidates.len(),
        dropped: ex.dropped,
    })
}

/// The run header, a column header and one row per ranked optimization
/// recorded under the configuration's fingerprint.
pub fn report(cache: &Cache, cfg: &RunConfig, policy: &RankPolicy) -> String {
    let fp = cfg.fingerprint();
    let entries: Vec<_> = cache.entries().into_iter().filter(|(k, _)| k.fingerprint == fp).collect();
    let rows = rank(&entries, policy, &cfg.synth_config().cost_model);
    let mut out = cfg.header();
    writeln!(out, "# rank\t{policy:?}").unwrap();
    writeln!(out, "{}", ReportRow::HEADER).unwrap();
    for r in rows {
        writeln!(out, "{r}").unwrap();
    }
    out
}
