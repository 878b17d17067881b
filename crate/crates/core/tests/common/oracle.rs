//! Ground-term cross-check of the SMT encoding against the interpreter.
//!
//! Each case binds every input of a DAG to a literal, so the solver only has
//! to evaluate closed terms; thousands of cases share one solver process.

use std::collections::HashMap;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use sopt_core::interp::{all_envs, eval_dag, input_bits, Env, Raw, Status};
use sopt_core::ir::gen::{random_lhs, GenConfig};
use sopt_core::ir::{print_lhs, InstKind, LeftHandSide, Ty};
use sopt_core::solver::encode::{bv, selector_width, Encoder};
use sopt_core::solver::sexp::{self, Sexp};
use sopt_core::solver::Solver;

pub struct Case {
    pub lhs: LeftHandSide,
    pub env: Env,
}

/// Random DAGs with at most `max_nodes` non-constant instructions over widths
/// 1 to 4, each paired with up to `envs_per_dag` environments (all of them
/// when there are fewer).
pub fn random_cases(seed: u64, dags: usize, max_nodes: usize, envs_per_dag: usize) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = GenConfig {
        max_vars: 2,
        max_ops: 5,
        ..GenConfig::small()
    };
    let mut cases = Vec::new();
    let mut made = 0;
    while made < dags {
        let lhs = random_lhs(&mut rng, &cfg);
        if lhs.node_count() > max_nodes {
            continue;
        }
        made += 1;
        let mut envs: Vec<Env> = if input_bits(&lhs) <= 10 {
            all_envs(&lhs).collect()
        } else {
            (0..envs_per_dag * 4).map(|_| random_env(&mut rng, &lhs)).collect()
        };
        envs.shuffle(&mut rng);
        envs.truncate(envs_per_dag);
        for env in envs {
            cases.push(Case {
                lhs: lhs.clone(),
                env,
            });
        }
    }
    cases
}

fn random_env(rng: &mut ChaCha8Rng, lhs: &LeftHandSide) -> Env {
    let mut env = Env::new();
    for v in lhs.vars() {
        let w = lhs.dag.get(v).width;
        env.vars.insert(v, rng.gen::<u64>() & ((1u64 << w) - 1));
    }
    for b in lhs.blocks() {
        if let InstKind::Block(n) = lhs.dag.get(b).kind {
            env.blocks.insert(b, rng.gen_range(0..n));
        }
    }
    env
}

enum Term {
    Literal(Sexp),
    Named(String),
}

fn term(t: &str) -> Term {
    if t.starts_with('c') && !t.starts_with('(') {
        Term::Named(t.to_string())
    } else {
        Term::Literal(sexp::parse_all(t).unwrap().remove(0))
    }
}

struct Expect {
    case: usize,
    node: usize,
    value: Term,
    poison: Term,
    ub: Term,
    raw: Raw,
    ty: Ty,
}

/// Runs `cases` through the solver in batches and returns the number of
/// instruction evaluations compared and a description of each disagreement.
pub fn cross_check(solver: &Solver, cases: &[Case], batch: usize) -> (usize, Vec<String>) {
    let results: Vec<(usize, Vec<String>)> = cases
        .par_chunks(batch)
        .enumerate()
        .map(|(chunk_no, chunk)| check_chunk(solver, chunk, chunk_no * batch))
        .collect();
    let mut total = 0;
    let mut bad = Vec::new();
    for (n, b) in results {
        total += n;
        bad.extend(b);
    }
    (total, bad)
}

fn check_chunk(solver: &Solver, chunk: &[Case], base: usize) -> (usize, Vec<String>) {
    let mut script = String::from("(set-logic QF_BV)\n");
    let mut expects = Vec::new();
    for (k, case) in chunk.iter().enumerate() {
        let dag = &case.lhs.dag;
        let env = &case.env;
        let mut enc = Encoder::new(dag, &format!("c{k}_"), |id| match dag.get(id).kind {
            InstKind::Block(n) => bv(env.blocks[&id] as u64, selector_width(n)),
            _ => bv(env.vars[&id], dag.get(id).width),
        });
        let roots = case.lhs.roots();
        enc.encode(&roots);
        for d in &enc.defs {
            script.push_str(d);
            script.push('\n');
        }
        let raws = eval_dag(dag, &roots, env);
        for id in dag.reachable(roots.iter().copied()) {
            let inst = dag.get(id);
            if matches!(inst.kind, InstKind::Block(_)) {
                continue;
            }
            let t = enc.terms(id);
            expects.push(Expect {
                case: k,
                node: id.index(),
                value: term(&t.value),
                poison: term(&t.poison),
                ub: term(&t.ub),
                raw: raws[id.index()].unwrap(),
                ty: inst.ty(),
            });
        }
    }
    script.push_str("(check-sat)\n");
    let mut names = Vec::new();
    for e in &expects {
        for t in [&e.value, &e.poison, &e.ub] {
            if let Term::Named(n) = t {
                names.push(n.clone());
            }
        }
    }
    for group in names.chunks(500) {
        script.push_str(&format!("(get-value ({}))\n", group.join(" ")));
    }
    let out = solver
        .run_script("oracle", &script, Duration::from_secs(300))
        .expect("solver run");
    let mut lines = out.lines();
    assert_eq!(lines.next().map(str::trim), Some("sat"), "{out}");
    let rest: Vec<&str> = lines.collect();
    let mut values: HashMap<String, Sexp> = HashMap::new();
    for item in sexp::parse_all(&rest.join("\n")).expect("model text") {
        let Sexp::List(pairs) = item else { panic!("unexpected output") };
        for pair in pairs {
            let Sexp::List(kv) = pair else { panic!("unexpected output") };
            let Sexp::Atom(name) = &kv[0] else { panic!("unexpected output") };
            values.insert(name.clone(), kv[1].clone());
        }
    }
    let resolve = |t: &Term| match t {
        Term::Literal(s) => s.clone(),
        Term::Named(n) => values[n].clone(),
    };
    let mut bad = Vec::new();
    for e in &expects {
        let (v, _) = sexp::bitvector(&resolve(&e.value)).expect("bitvector value");
        let p = sexp::boolean(&resolve(&e.poison)).expect("bool");
        let u = sexp::boolean(&resolve(&e.ub)).expect("bool");
        let (value, flag) = match e.ty {
            Ty::Tuple(w) => (v & ((1u64 << w) - 1), (v >> w) & 1 == 1),
            _ => (v, false),
        };
        let status = match (p, u) {
            (false, false) => Status::Ok,
            (true, false) => Status::Poison,
            (false, true) => Status::Ub,
            (true, true) => {
                bad.push(format!("case {}: node {} both poison and ub", base + e.case, e.node));
                continue;
            }
        };
        let got = Raw {
            value,
            flag,
            status,
        };
        if got != e.raw {
            let case = &chunk[e.case];
            bad.push(format!(
                "case {} node %{}: smt {:?} interp {:?}\nenv {:?}\n{}",
                base + e.case,
                e.node,
                got,
                e.raw,
                case.env,
                print_lhs(&case.lhs)
            ));
        }
    }
    (expects.len(), bad)
}
