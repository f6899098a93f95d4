//! Acceptance criteria at pinned tolerances, one line per criterion.
//!
//! Runs without the libtest harness so the lines always reach the log.

use std::f64::consts::FRAC_PI_3;

use fracform::coords::{self, CoordMap};
use fracform::covariant::{self, CovariantSpec, VectorField};
use fracform::differint::{differint, gl_differint, power_rule_value, DifferintSpec};
use fracform::expr::Expr;
use fracform::field;
use fracform::identities::{run_suite, Profile, Status, SuiteReport, DEFAULT_SEED};
use fracform::par::Execution;
use fracform::Error;

struct Line {
    ok: bool,
    detail: String,
    /// a documented shortfall: printed red, not counted as a regression
    known_red: Option<String>,
}

fn suite(ids: &[u32]) -> SuiteReport {
    run_suite(Some(ids), Profile::Fast, DEFAULT_SEED, Execution::Parallel)
}

/// Every selected case passes (comparisons excepted) at a tolerance no looser
/// than `pinned`.
fn suite_line(ids: &[u32], pinned: f64) -> Line {
    let r = suite(ids);
    let mut bad = Vec::new();
    let mut worst: f64 = 0.0;
    for c in &r.cases {
        if c.status == Status::Comparison {
            continue;
        }
        if c.status != Status::Pass || c.tolerance > pinned {
            bad.push(format!("{} [{}] {:?} {}", c.id, c.params, c.status, c.reason.clone().unwrap_or_default()));
        }
        worst = worst.max(c.measured.unwrap_or(f64::NAN));
    }
    let ok = bad.is_empty() && !r.cases.is_empty();
    let detail = if ok {
        format!("{} cases, worst {:.3e} <= {:.0e}", r.cases.len(), worst, pinned)
    } else {
        format!("{} of {} cases off: {}", bad.len(), r.cases.len(), bad.join("; "))
    };
    Line { ok, detail, known_red: None }
}

fn both(a: Line, b: Line) -> Line {
    Line {
        ok: a.ok && b.ok,
        detail: format!("{}; {}", a.detail, b.detail),
        known_red: a.known_red.or(b.known_red),
    }
}

fn c1() -> Line {
    let mut worst: f64 = 0.0;
    let mut fails = Vec::new();
    for p in [0.5, 1.0, 2.0, 3.0] {
        let f = field::expr(Expr::parse(&format!("x1^{p}")).unwrap());
        for lam in [-1.5, -0.5, 0.5, 1.5] {
            let spec = DifferintSpec::new(0, lam, 0.0);
            for x in [0.5, 1.0, 2.0] {
                let exact = power_rule_value(p, lam, 0.0, x).unwrap();
                for (name, got) in [
                    ("quadrature", differint(f.as_ref(), &spec, &[x]).map(|r| r.value)),
                    ("grunwald", gl_differint(f.as_ref(), &spec, &[x]).map(|r| r.value)),
                ] {
                    match got {
                        Ok(v) => {
                            // x^0.5 lies in the kernel of D^1.5, so relative error needs a floor
                            let e = (v - exact).abs() / exact.abs().max(1.0);
                            worst = worst.max(e);
                            if e > 1e-4 {
                                fails.push(format!("{name} p={p} l={lam} x={x}: {e:.2e}"));
                            }
                        }
                        Err(e) => fails.push(format!("{name} p={p} l={lam} x={x}: {e}")),
                    }
                }
            }
        }
    }
    Line {
        ok: fails.is_empty(),
        detail: if fails.is_empty() {
            format!("96 evaluations, worst relative {worst:.3e} <= 1e-4")
        } else {
            fails.join("; ")
        },
        known_red: None,
    }
}

fn c2() -> Line {
    let a = suite_line(&[6, 9], 1e-3);
    let b = suite_line(&[7, 12], 1e-4);
    let c = suite_line(&[8], 1e-6);
    both(both(a, b), c)
}

fn c8() -> Line {
    let mut fails = Vec::new();
    let ex = coords::polar_example(2.0, FRAC_PI_3);
    let detail = match &ex {
        Ok(ex) => {
            if ex.transform.residual > 1e-9 {
                fails.push(format!("residual {:.3e}", ex.transform.residual));
            }
            if ex.comparison.len() != 2 {
                fails.push("comparison missing".into());
            }
            let deltas: Vec<String> = ex
                .comparison
                .iter()
                .map(|c| format!("{} {:.6} vs {:.6}", c.component, c.computed, c.reference))
                .collect();
            format!("residual {:.3e}, comparison: {}", ex.transform.residual, deltas.join(", "))
        }
        Err(e) => {
            fails.push(e.to_string());
            String::new()
        }
    };
    let (r, th) = (1.7, 0.6);
    match coords::jacobian(&CoordMap::polar(), 1.0, &[r, th]) {
        Ok(t) => {
            let exact = [[th.cos(), -r * th.sin()], [th.sin(), r * th.cos()]];
            let d = (0..2)
                .flat_map(|i| (0..2).map(move |j| (i, j)))
                .map(|(i, j)| (t.forward[i][j] - exact[i][j]).abs())
                .fold(0.0, f64::max);
            if d > 1e-8 {
                fails.push(format!("classical Jacobian off by {d:.3e}"));
            }
        }
        Err(e) => fails.push(e.to_string()),
    }
    Line {
        ok: fails.is_empty(),
        detail: if fails.is_empty() { detail } else { fails.join("; ") },
        known_red: None,
    }
}

fn c9() -> Line {
    [
        suite_line(&[106, 107, 108], 1e-12),
        suite_line(&[134, 135], 1e-3),
        suite_line(&[137], 1e-4),
        suite_line(&[128, 129], 1e-10),
        suite_line(&[143], 1e-4),
        suite_line(&[130, 131, 132, 133], 1e-3),
        suite_line(&[126], 1e-4),
    ]
    .into_iter()
    .reduce(both)
    .unwrap()
}

fn c10() -> Line {
    // order 1: the connection series terminates and the split is exact
    let classical = suite_line(&[78, 79, 80], 2e-6);
    let limit = suite_line(&[68, 76, 77], 1e-6);
    let tensor = suite_line(&[70, 73], 1e-3);
    let slices = suite_line(&[96, 97, 98, 99, 100], 1e-6);
    let mut line = [classical, limit, tensor, slices].into_iter().reduce(both).unwrap();
    // the order-1 case of the decomposition must pass
    let r = suite(&[81]);
    for c in &r.cases {
        if c.params.contains("order 1,") && c.status != Status::Pass {
            line.ok = false;
            line.detail.push_str(&format!("; eq81 at order 1 failed: {:?}", c.reason));
        }
    }
    // fractional order: the series converges only algebraically
    let spec = CovariantSpec::new(0.5);
    let v = VectorField::parse(&["x1*x2", "cos(x2)"]).unwrap();
    let map = CoordMap::shear().with_limits(vec![0.0, 0.0], vec![0.5, 0.5]).unwrap();
    let frac = covariant::decomposition(&v, &map, &spec, 0, &[1.0, 1.0]);
    let target = 2.0 * spec.tolerance;
    line.known_red = match frac {
        Ok(d) if d.residual <= target => None,
        Ok(d) => Some(format!("eq81 at order 0.5: residual {:.3e} > {target:.0e}", d.residual)),
        Err(Error::SeriesNoConverge { terms, tail }) => {
            Some(format!("eq81 at order 0.5: series not converged after {terms} terms, tail {tail:.3e} > {target:.0e}"))
        }
        Err(e) => Some(format!("eq81 at order 0.5: {e}")),
    };
    line
}

fn c12() -> Line {
    let a = run_suite(None, Profile::Fast, DEFAULT_SEED, Execution::Parallel);
    let b = run_suite(None, Profile::Fast, DEFAULT_SEED, Execution::Parallel);
    let c = run_suite(None, Profile::Fast, DEFAULT_SEED, Execution::Sequential);
    let ja = serde_json::to_string(&a).unwrap();
    let jb = serde_json::to_string(&b).unwrap();
    let jc = serde_json::to_string(&c).unwrap();
    Line {
        ok: ja == jb && ja == jc,
        detail: format!("{} cases, {} bytes, parallel/parallel/sequential identical: {}", a.cases.len(), ja.len(), ja == jb && ja == jc),
        known_red: None,
    }
}

fn main() {
    let criteria: Vec<(&str, fn() -> Line)> = vec![
        ("differintegral oracle grid", c1),
        ("differintegral identities", c2),
        ("composition with corrections", || suite_line(&[10, 11], 1e-3)),
        ("product rule", || suite_line(&[13], 1e-4)),
        ("fractional Poincare lemma", || suite_line(&[55], 1e-3)),
        ("dimensions by brute force", || suite_line(&[17, 18, 19, 20, 21, 22], 0.0)),
        ("Hodge signs and 3-D duals", || suite_line(&[31, 33, 39, 47], 0.0)),
        ("polar worked example", c8),
        ("matrix order", c9),
        ("covariant derivative", c10),
        ("matrix-order Poincare lemma", || suite_line(&[101], 1e-3)),
        ("determinism", c12),
    ];
    let mut regressions = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = std::time::Instant::now();
        let line = f();
        let secs = start.elapsed().as_secs_f64();
        let status = if !line.ok {
            regressions += 1;
            "FAIL"
        } else if line.known_red.is_some() {
            "FAIL"
        } else {
            "PASS"
        };
        println!("criterion {:>2} {status} {name} ({secs:.2}s): {}", i + 1, line.detail);
        if let Some(red) = &line.known_red {
            println!("             known shortfall, not counted: {red}");
        }
    }
    if regressions > 0 {
        eprintln!("{regressions} acceptance criteria regressed");
        std::process::exit(1);
    }
}
