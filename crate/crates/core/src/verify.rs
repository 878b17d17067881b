//! Checking complete optimizations.

use std::time::Duration;

use rayon::prelude::*;

use crate::interp::{
    all_envs, eval_dag, eval_lhs_full, input_bits, Env, EvalResult, LhsEval, Raw, Status,
    StateSpaceTooLarge,
};
use crate::ir::{typecheck, Optimization, Ty};
use crate::solver::{build_refinement_query, model_env, QueryKind, Solver, SolverVerdict, UbPolicy};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_millis(10_000);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    pub env: Env,
    pub lhs: EvalResult,
    pub rhs: EvalResult,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    Invalid(Counterexample),
    Timeout,
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VerifyError {
    #[error("ill-typed optimization: {0}")]
    IllTyped(String),
    #[error("{0}")]
    Solver(String),
    #[error("solver counterexample does not replay: {0}")]
    ReplayMismatch(String),
}

/// Whether `rhs` is an acceptable replacement for the LHS in one
/// environment. `None` means the environment imposes no obligation.
pub fn refines(lhs: &LhsEval, rhs: Raw, policy: UbPolicy) -> Option<bool> {
    if !lhs.constrained {
        return None;
    }
    let applies = match policy {
        UbPolicy::Exploit => lhs.root.status == Status::Ok,
        UbPolicy::NoExploit => lhs.root.status != Status::Ub,
    };
    applies.then(|| rhs.status == Status::Ok && rhs.value == lhs.root.value)
}

/// The value a replacement must produce in an environment with obligations.
pub fn target_value(lhs: &LhsEval) -> u64 {
    lhs.root.value
}

fn eval_pair(opt: &Optimization, env: &Env) -> (LhsEval, Raw) {
    let lhs = eval_lhs_full(&opt.lhs, env);
    let rhs = eval_dag(&opt.lhs.dag, &[opt.rhs], env)[opt.rhs.index()].unwrap();
    (lhs, rhs)
}

fn result_of(raw: Raw, ty: Ty) -> EvalResult {
    crate::interp::eval_raw_result(raw, ty)
}

fn counterexample(opt: &Optimization, env: Env) -> Counterexample {
    let (lhs, rhs) = eval_pair(opt, &env);
    let ty = opt.lhs.dag.get(opt.rhs).ty();
    Counterexample {
        env,
        lhs: lhs.result,
        rhs: result_of(rhs, ty),
    }
}

fn well_typed(opt: &Optimization) -> Result<(), VerifyError> {
    let mut errs = typecheck(&opt.lhs);
    errs.extend(crate::ir::typecheck_dag(&opt.lhs.dag, &opt.rhs_only()));
    if let Some(e) = errs.first() {
        return Err(VerifyError::IllTyped(e.to_string()));
    }
    if opt.lhs.dag.get(opt.lhs.root).ty() != opt.lhs.dag.get(opt.rhs).ty() {
        return Err(VerifyError::IllTyped(
            "result and infer widths differ".into(),
        ));
    }
    Ok(())
}

pub(crate) fn check_kind(
    solver: &Solver,
    opt: &Optimization,
    policy: UbPolicy,
    timeout: Duration,
    kind: QueryKind,
) -> Result<Verdict, VerifyError> {
    well_typed(opt)?;
    let q = build_refinement_query(opt, policy, kind);
    match solver.check(&q, timeout) {
        SolverVerdict::Unsat => Ok(Verdict::Valid),
        SolverVerdict::Timeout => Ok(Verdict::Timeout),
        SolverVerdict::SolverError(e) => Err(VerifyError::Solver(e)),
        SolverVerdict::Sat(model) => {
            let env = model_env(&opt.lhs, &model);
            let (lhs, rhs) = eval_pair(opt, &env);
            if refines(&lhs, rhs, policy) != Some(false) {
                return Err(VerifyError::ReplayMismatch(format!(
                    "{env:?}: lhs {} rhs {:?}",
                    lhs.result, rhs
                )));
            }
            Ok(Verdict::Invalid(counterexample(opt, env)))
        }
    }
}

/// Proves `opt` correct or finds a counterexample. Counterexamples are
/// replayed through the interpreter before being returned.
pub fn check(
    solver: &Solver,
    opt: &Optimization,
    policy: UbPolicy,
    timeout: Duration,
) -> Result<Verdict, VerifyError> {
    check_kind(solver, opt, policy, timeout, QueryKind::Equivalence)
}

/// Checks many optimizations on a pool of `parallelism` threads; results are
/// in input order.
pub fn check_batch(
    solver: &Solver,
    opts: &[Optimization],
    policy: UbPolicy,
    timeout: Duration,
    parallelism: usize,
) -> Vec<Result<Verdict, VerifyError>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        opts.par_iter()
            .map(|o| check(solver, o, policy, timeout))
            .collect()
    })
}

/// Decides `opt` by enumerating every environment. The first failing
/// environment in enumeration order is reported.
pub fn check_exhaustive(
    opt: &Optimization,
    policy: UbPolicy,
    max_bits: u32,
) -> Result<Verdict, StateSpaceTooLarge> {
    let bits = input_bits(&opt.lhs);
    if bits > max_bits {
        return Err(StateSpaceTooLarge {
            bits,
            limit: max_bits,
        });
    }
    for env in all_envs(&opt.lhs) {
        let (lhs, rhs) = eval_pair(opt, &env);
        if refines(&lhs, rhs, policy) == Some(false) {
            return Ok(Verdict::Invalid(counterexample(opt, env)));
        }
    }
    Ok(Verdict::Valid)
}
