//! Small-instance oracle suites, runnable from the binary.

use std::io::Write;

use mss::charsum::{applicable_kinds, weil_audit_summary, Coverage};
use mss::counting::{
    count_brute, count_exact_dp, duality_transform, reduce_targets, MomentTarget,
};
use mss::evalsets::{fiber_size_enumerated, image_set, preimage_count, value_set_size_formula, EvalSetDesc};
use mss::field::prime_power;
use mss::regimes::{decide, Answer};
use mss::{FieldCtx, FieldElement, Result};
use serde::Serialize;

use crate::{emit_json, emit_line, Failure, Format, Header, Run, RunConfig};

#[derive(Serialize)]
struct SuiteResult {
    suite: &'static str,
    checks: u64,
    failures: u64,
    pass: bool,
}

fn field(q: u64) -> FieldCtx {
    let (p, s) = prime_power(q).expect("prime power");
    FieldCtx::new(p, s, None).expect("field")
}

fn sets(ctx: &FieldCtx, nmax: u64) -> Vec<EvalSetDesc> {
    let q = ctx.q();
    let mut out: Vec<EvalSetDesc> = (1..=nmax.min(q - 1)).map(|n| EvalSetDesc::Monomial { n }).collect();
    for n in 1..=nmax.min(q - 1) {
        for a in [1, q - 1] {
            out.push(EvalSetDesc::Dickson {
                n,
                a: FieldElement::from_encoding(a as u32),
            });
        }
    }
    out.dedup();
    out
}

/// Exact DP, brute force and the dispatcher agree on every target.
fn counting() -> Result<(u64, u64)> {
    let (mut checks, mut bad) = (0, 0);
    for q in [4u64, 5, 7, 8, 9] {
        let f = field(q);
        for desc in sets(&f, 3) {
            let d = image_set(&f, &desc)?;
            for m in 1..=2u32 {
                for b0 in 0..q as u32 {
                    let b: Vec<FieldElement> = (0..m).map(|j| FieldElement::from_encoding((b0 * (j + 1)) % q as u32)).collect();
                    let t = MomentTarget::new(m, b)?;
                    let rt = reduce_targets(&f, &t);
                    for k in 0..=d.len() {
                        let dp = count_exact_dp(&f, &d, &rt, k)?.value;
                        let brute = count_brute(&f, &d, &rt, k)?.value;
                        let yes = decide(&f, &desc, &t, k)?.answer == Answer::Yes;
                        checks += 1;
                        if dp != brute || yes == (dp.bits() == 0) {
                            bad += 1;
                        }
                    }
                }
            }
        }
    }
    Ok((checks, bad))
}

fn duality() -> Result<(u64, u64)> {
    let (mut checks, mut bad) = (0, 0);
    for q in [5u64, 7, 8, 9, 11] {
        let f = field(q);
        for desc in sets(&f, 2) {
            let d = image_set(&f, &desc)?;
            for b0 in 0..q as u32 {
                let t = MomentTarget::new(2, vec![FieldElement::from_encoding(b0), FieldElement::ZERO])?;
                let rt = reduce_targets(&f, &t);
                for k in 0..=d.len() {
                    let (rt2, k2) = duality_transform(&f, &d, &rt, k);
                    checks += 1;
                    if count_brute(&f, &d, &rt, k)?.value != count_brute(&f, &d, &rt2, k2)?.value {
                        bad += 1;
                    }
                }
            }
        }
    }
    Ok((checks, bad))
}

fn value_sets() -> Result<(u64, u64)> {
    let (mut checks, mut bad) = (0, 0);
    for q in (3..=49u64).filter(|&q| q % 2 == 1 && prime_power(q).is_some()) {
        let f = field(q);
        for n in 1..=6u64.min(q - 1) {
            for a in 1..q as u32 {
                let desc = EvalSetDesc::Dickson {
                    n,
                    a: FieldElement::from_encoding(a),
                };
                checks += 1;
                if value_set_size_formula(&f, &desc)? != image_set(&f, &desc)?.len() as u64 {
                    bad += 1;
                }
            }
        }
    }
    Ok((checks, bad))
}

fn fibers() -> Result<(u64, u64)> {
    let (mut checks, mut bad) = (0, 0);
    for q in (3..=16u64).filter(|&q| prime_power(q).is_some()) {
        let f = field(q);
        for n in 2..=4u64.min(q - 1) {
            for a in 1..q as u32 {
                let a = FieldElement::from_encoding(a);
                for x0 in f.elements() {
                    let s = preimage_count(&f, n, a, x0)?.size;
                    checks += 1;
                    if !s.is_integer() || *s.numer() != fiber_size_enumerated(&f, n, a, x0) {
                        bad += 1;
                    }
                }
            }
        }
    }
    Ok((checks, bad))
}

fn audits() -> Result<(u64, u64)> {
    let (mut checks, mut bad) = (0, 0);
    for q in [7u64, 8, 9, 16, 25, 27, 32] {
        let f = field(q);
        for desc in sets(&f, 3) {
            for kind in applicable_kinds(&f, &desc) {
                let s = weil_audit_summary(&f, &desc, kind, 2, Coverage::Exhaustive)?;
                checks += s.tests;
                bad += s.violations;
            }
        }
    }
    Ok((checks, bad))
}

pub(crate) fn run(format: Format, out: &mut impl Write) -> Run {
    let cfg = RunConfig {
        command: "selftest",
        format,
        ..RunConfig::default()
    };
    type Suite = fn() -> Result<(u64, u64)>;
    let suites: [(&'static str, Suite); 5] = [
        ("counting", counting),
        ("duality", duality),
        ("value-sets", value_sets),
        ("fibers", fibers),
        ("audits", audits),
    ];
    let mut results = Vec::new();
    for (name, f) in suites {
        let (checks, failures) = f()?;
        results.push(SuiteResult {
            suite: name,
            checks,
            failures,
            pass: failures == 0,
        });
    }
    match format {
        Format::Text => {
            writeln!(out, "{}", cfg.header())?;
            for r in &results {
                let verdict = if r.pass { "PASS" } else { "FAIL" };
                writeln!(out, "{verdict} {} checks={} failures={}", r.suite, r.checks, r.failures)?;
            }
        }
        Format::Json => emit_json(out, &cfg, &serde_json::json!({ "suites": results }))?,
        Format::Ldjson => {
            emit_line(out, &Header { config: &cfg })?;
            for r in &results {
                emit_line(out, r)?;
            }
        }
    }
    if results.iter().all(|r| r.pass) {
        Ok(())
    } else {
        Err(Failure::Other("selftest found mismatches".into()))
    }
}
