//! Runs an external SMT solver, one child process per query.

use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::Duration;

use wait_timeout::ChildExt;

/// Environment variable naming the solver executable.
pub const SOLVER_ENV: &str = "SOPT_SOLVER";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolverConfig {
    pub program: String,
    pub args: Vec<String>,
    /// Directory that receives a copy of every query, if set.
    pub dump_dir: Option<PathBuf>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            program: std::env::var(SOLVER_ENV).unwrap_or_else(|_| "z3".to_string()),
            args: vec!["-in".to_string()],
            dump_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RunError {
    #[error("solver timed out")]
    Timeout,
    #[error("solver error: {0}")]
    Failed(String),
}

/// A solver handle. Cheap to share between threads; every call spawns its own
/// process.
#[derive(Debug, Default)]
pub struct Solver {
    pub config: SolverConfig,
    calls: AtomicU64,
    dumped: AtomicU64,
}

impl Solver {
    pub fn new(config: SolverConfig) -> Solver {
        Solver {
            config,
            calls: AtomicU64::new(0),
            dumped: AtomicU64::new(0),
        }
    }

    /// Number of solver processes started so far.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn dump(&self, tag: &str, script: &str) {
        let Some(dir) = &self.config.dump_dir else {
            return;
        };
        let n = self.dumped.fetch_add(1, Ordering::Relaxed);
        let path = dir.join(format!("q{n:06}-{tag}.smt2"));
        if let Err(e) = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(&path, script)) {
            log::warn!("cannot write {}: {e}", path.display());
        }
    }

    /// Feeds `script` to a fresh solver process and returns its standard
    /// output. The process is killed once `timeout` elapses.
    pub fn run_script(&self, tag: &str, script: &str, timeout: Duration) -> Result<String, RunError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.dump(tag, script);
        let mut child = Command::new(&self.config.program)
            .args(&self.config.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| RunError::Failed(format!("cannot start `{}`: {e}", self.config.program)))?;

        let mut stdin = child.stdin.take().unwrap();
        let input = script.to_string();
        let writer = thread::spawn(move || {
            let _ = stdin.write_all(input.as_bytes());
        });
        let mut stdout = child.stdout.take().unwrap();
        let reader = thread::spawn(move || {
            let mut s = String::new();
            let _ = stdout.read_to_string(&mut s);
            s
        });
        let mut stderr = child.stderr.take().unwrap();
        let err_reader = thread::spawn(move || {
            let mut s = String::new();
            let _ = stderr.read_to_string(&mut s);
            s
        });

        let status = match child.wait_timeout(timeout) {
            Ok(Some(status)) => status,
            Ok(None) => {
                let _ = child.kill();
                let _ = child.wait();
                let _ = writer.join();
                let _ = reader.join();
                let _ = err_reader.join();
                return Err(RunError::Timeout);
            }
            Err(e) => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(RunError::Failed(e.to_string()));
            }
        };
        let _ = writer.join();
        let out = reader.join().unwrap_or_default();
        let err = err_reader.join().unwrap_or_default();
        if out.trim().is_empty() && !status.success() {
            return Err(RunError::Failed(format!(
                "exit status {status}: {}",
                err.trim()
            )));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_executable_is_an_error() {
        let solver = Solver::new(SolverConfig {
            program: "/nonexistent/solver".into(),
            args: vec![],
            dump_dir: None,
        });
        let r = solver.run_script("t", "(check-sat)", Duration::from_secs(1));
        assert!(matches!(r, Err(RunError::Failed(_))));
        assert_eq!(solver.calls(), 1);
    }
}
