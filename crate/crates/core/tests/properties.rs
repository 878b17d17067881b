mod common;

use std::collections::HashMap;
use std::time::Duration;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sopt_core::interp::{all_envs, apply_raw, eval_lhs, eval_lhs_full, input_bits, Env, Raw, Status};
use sopt_core::ir::gen::{random_lhs, GenConfig};
use sopt_core::ir::{
    canonicalize, parse_lhs, print_lhs, Constant, InstId, LeftHandSide, Opcode, Optimization, OverflowFlags, Width,
};
use sopt_core::solver::UbPolicy;
use sopt_core::verify::{check_batch, check_exhaustive, Verdict};

fn lhs_from(seed: u64) -> LeftHandSide {
    random_lhs(&mut ChaCha8Rng::seed_from_u64(seed), &GenConfig::small())
}

/// Inputs of `lhs` by name.
fn inputs_by_name(lhs: &LeftHandSide) -> HashMap<String, InstId> {
    lhs.vars()
        .into_iter()
        .chain(lhs.blocks())
        .map(|id| (lhs.dag.get(id).name.clone().expect("parsed inputs are named"), id))
        .collect()
}

/// `lhs` with `rhs` appended as a constant result.
fn with_constant(lhs: &LeftHandSide, value: u64) -> Optimization {
    let mut lhs = lhs.clone();
    let w = Width::new(lhs.root_width()).unwrap();
    let rhs = lhs.dag.constant(Constant::new(value, w));
    Optimization { lhs, rhs }
}

/// A constant the LHS takes somewhere, so that validity is not trivially
/// false.
fn plausible_constant(lhs: &LeftHandSide) -> u64 {
    all_envs(lhs)
        .map(|env| eval_lhs_full(lhs, &env))
        .find(|e| e.constrained)
        .map_or(0, |e| e.root.value)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn printing_round_trips(seed: u64) {
        let text = print_lhs(&lhs_from(seed));
        let back = parse_lhs(&text).map_err(|d| TestCaseError::fail(format!("{d:?}\n{text}")))?;
        prop_assert_eq!(print_lhs(&back), text);
    }

    #[test]
    fn canonicalize_is_idempotent(seed: u64) {
        let once = canonicalize(&lhs_from(seed));
        prop_assert_eq!(print_lhs(&canonicalize(&once)), print_lhs(&once));
    }

    #[test]
    fn canonicalize_preserves_meaning(seed: u64) {
        let lhs = parse_lhs(&print_lhs(&lhs_from(seed))).unwrap();
        prop_assume!(input_bits(&lhs) <= 12);
        let canon = canonicalize(&lhs);
        let names = inputs_by_name(&lhs);
        for env in all_envs(&canon) {
            let mut orig = Env::new();
            for (&id, &v) in &env.vars {
                orig.vars.insert(names[canon.dag.get(id).name.as_ref().unwrap()], v);
            }
            for (&id, &p) in &env.blocks {
                orig.blocks.insert(names[canon.dag.get(id).name.as_ref().unwrap()], p);
            }
            // Inputs the canonical form dropped cannot matter; bind them to 0.
            for &id in names.values() {
                if let sopt_core::ir::InstKind::Block(_) = lhs.dag.get(id).kind {
                    orig.blocks.entry(id).or_insert(0);
                } else {
                    orig.vars.entry(id).or_insert(0);
                }
            }
            prop_assert_eq!(eval_lhs(&lhs, &orig), eval_lhs(&canon, &env));
        }
    }

    /// Exploiting poison only removes obligations.
    #[test]
    fn strict_validity_implies_exploiting_validity(seed: u64) {
        let lhs = lhs_from(seed);
        prop_assume!(input_bits(&lhs) <= 12);
        let opt = with_constant(&lhs, plausible_constant(&lhs));
        let strict = check_exhaustive(&opt, UbPolicy::NoExploit, 12).unwrap();
        let loose = check_exhaustive(&opt, UbPolicy::Exploit, 12).unwrap();
        prop_assert!(!strict.is_valid() || loose.is_valid());
    }
}

fn signed(v: u64, w: u32) -> i128 {
    let v = v as i128;
    if v >> (w - 1) & 1 == 1 {
        v - (1 << w)
    } else {
        v
    }
}

/// Whether the flags of `op` make `a op b` poison, from exact integer
/// arithmetic.
fn flag_violation(op: Opcode, w: u32, a: u64, b: u64) -> bool {
    let (sa, sb, ua, ub) = (signed(a, w), signed(b, w), a as i128, b as i128);
    let smin = -(1i128 << (w - 1));
    let smax = (1i128 << (w - 1)) - 1;
    let umax = (1i128 << w) - 1;
    let out_s = |v: i128| v < smin || v > smax;
    let out_u = |v: i128| v < 0 || v > umax;
    let base = op.base();
    let arith = |s: i128, u: i128| (op.overflow_flags().nsw() && out_s(s)) || (op.overflow_flags().nuw() && out_u(u));
    match base {
        Opcode::Add => arith(sa + sb, ua + ub),
        Opcode::Sub => arith(sa - sb, ua - ub),
        Opcode::Mul => arith(sa * sb, ua * ub),
        Opcode::Shl => {
            // An oversized shift is poison with or without flags.
            ub < w as i128 && arith(sa * (1 << ub), ua * (1 << ub))
        }
        Opcode::UDiv => ub != 0 && ua % ub != 0,
        Opcode::SDiv => sb != 0 && sa % sb != 0,
        Opcode::LShr | Opcode::AShr => ub < w as i128 && ua & ((1 << ub) - 1) != 0,
        _ => unreachable!("{op:?}"),
    }
}

/// Flagged opcodes agree with their base opcode wherever they are defined
/// and are poison exactly where the flags are violated.
#[test]
fn flagged_and_plain_opcodes_agree() {
    let ok = |value| Raw {
        value,
        flag: false,
        status: Status::Ok,
    };
    let mut checked = 0;
    for &op in Opcode::ALL {
        if op.overflow_flags() == OverflowFlags::None && !op.is_exact() {
            continue;
        }
        for w in 1..=6 {
            for a in 0..1u64 << w {
                for b in 0..1u64 << w {
                    let flagged = apply_raw(op, w, w, &[ok(a), ok(b)]);
                    let plain = apply_raw(op.base(), w, w, &[ok(a), ok(b)]);
                    if plain.status != Status::Ok {
                        assert_eq!(flagged.status, plain.status, "{op:?} i{w} {a} {b}");
                        continue;
                    }
                    let poison = flag_violation(op, w, a, b);
                    let want = if poison { Status::Poison } else { Status::Ok };
                    assert_eq!(flagged.status, want, "{op:?} i{w} {a} {b}");
                    assert_eq!(flagged.value, plain.value, "{op:?} i{w} {a} {b}");
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 50_000, "{checked}");
}

#[test]
fn intrinsics_match_bit_counting() {
    let ok = |value| Raw {
        value,
        flag: false,
        status: Status::Ok,
    };
    for w in 1..=16u32 {
        for x in 0..1u64 << w {
            let pad = 64 - w;
            let run = |op| apply_raw(op, w, w, &[ok(x)]);
            assert_eq!(run(Opcode::CtPop), ok(x.count_ones() as u64), "ctpop i{w} {x}");
            assert_eq!(run(Opcode::CtLz), ok((x << pad).leading_zeros().min(w) as u64), "ctlz i{w} {x}");
            assert_eq!(run(Opcode::CtTz), ok(x.trailing_zeros().min(w) as u64), "cttz i{w} {x}");
            if w == 16 {
                assert_eq!(run(Opcode::BSwap), ok((x as u16).swap_bytes() as u64), "bswap {x}");
            }
        }
    }
}

#[test]
fn batch_checking_is_deterministic() {
    let opts: Vec<Optimization> = (0..24u64)
        .map(lhs_from)
        .filter(|l| l.pcs.is_empty())
        .map(|l| {
            let k = plausible_constant(&l);
            with_constant(&l, k)
        })
        .collect();
    let solver = common::solver();
    let t = Duration::from_secs(30);
    let run = |jobs| {
        check_batch(&solver, &opts, UbPolicy::Exploit, t, jobs)
            .into_iter()
            .map(|v| v.map(|v| v.is_valid()))
            .collect::<Vec<_>>()
    };
    let serial = run(1);
    assert!(serial.contains(&Ok(true)) && serial.contains(&Ok(false)), "{serial:?}");
    assert_eq!(run(4), serial);
    assert_eq!(run(4), serial);
    // The exhaustive oracle agrees with every verdict.
    for (o, v) in opts.iter().zip(&serial) {
        let want = check_exhaustive(o, UbPolicy::Exploit, 20).unwrap() == Verdict::Valid;
        assert_eq!(v.as_ref().ok(), Some(&want), "{}", print_lhs(&o.lhs));
    }
}
