//! One PASS/FAIL line per acceptance criterion, written straight to stderr
//! so the lines show up without `--nocapture`.
//!
//! Criterion 8 is unattainable at finite deficiency indices (see the
//! decisions ledger); it is expected to print FAIL, and the test fails if it
//! ever starts passing so that the ledger entry gets revisited.

use std::io::Write;
use std::time::{Duration, Instant};

use extcalc::suites::{self, CaseResult, RunReport, SuiteConfig, SuiteName};
use extcalc::TolerancePolicy;

const SEED: u64 = 20_240_611;
const KNOWN_UNATTAINABLE: &[u32] = &[8];

struct Verdict {
    id: u32,
    what: &'static str,
    pass: bool,
    detail: String,
}

fn run(suite: SuiteName, trials: usize) -> (RunReport, Duration) {
    let start = Instant::now();
    let report = suites::run_suite(&SuiteConfig::new(suite, SEED, trials)).expect("valid configuration");
    (report, start.elapsed())
}

fn failures(cases: &[CaseResult]) -> String {
    let bad: Vec<String> = cases
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{} ({})", c.name, c.detail.as_deref().unwrap_or("no trials")))
        .collect();
    if bad.is_empty() {
        let worst = cases.iter().filter_map(|c| c.max_residual).fold(0.0, f64::max);
        format!("{} cases, worst residual {worst:.2e}", cases.len())
    } else {
        bad.join("; ")
    }
}

fn criterion(id: u32, what: &'static str, reports: &[&RunReport], extra: Option<(bool, String)>) -> Verdict {
    let cases: Vec<CaseResult> = reports.iter().flat_map(|r| r.cases.clone()).collect();
    let mut pass = reports.iter().all(|r| r.passed);
    let mut detail = failures(&cases);
    if let Some((ok, why)) = extra {
        pass &= ok;
        detail = format!("{detail}; {why}");
    }
    Verdict { id, what, pass, detail }
}

#[test]
fn acceptance_criteria() {
    let mut verdicts = Vec::new();

    let (r, t) = run(SuiteName::Stenger, 50);
    let fast = t < Duration::from_secs(10);
    verdicts.push(criterion(1, "selfadjoint compressions (stenger)", &[&r], Some((fast, format!("runtime {:.2}s", t.as_secs_f64())))));

    let (r, _) = run(SuiteName::Nudelman, 50);
    verdicts.push(criterion(2, "dissipative compressions (nudelman)", &[&r], None));

    let (r, _) = run(SuiteName::Bef25a, 100);
    verdicts.push(criterion(3, "two-route compression agreement (bef25a)", &[&r], None));

    let (r, _) = run(SuiteName::L1, 200);
    verdicts.push(criterion(4, "contraction identity (l1)", &[&r], None));

    let (r, _) = run(SuiteName::Mar14a, 200);
    verdicts.push(criterion(5, "range calculus and shift certificates (mar14a)", &[&r], None));

    let (a, _) = run(SuiteName::CharfnIdentities, 20);
    let (b, _) = run(SuiteName::SchurCharfn, 20);
    verdicts.push(criterion(6, "characteristic function (charfn_identities, schur_charfn)", &[&a, &b], None));

    let (a, ta) = run(SuiteName::Bef29abRoundtrip, 100);
    let (b, tb) = run(SuiteName::Juni18aRoundtrip, 100);
    let total = ta + tb;
    verdicts.push(criterion(
        7,
        "synthesis round trips (bef29ab_roundtrip, juni18a_roundtrip)",
        &[&a, &b],
        Some((total < Duration::from_secs(30), format!("runtime {:.2}s", total.as_secs_f64()))),
    ));

    let (r, _) = run(SuiteName::Aug06a, 1);
    verdicts.push(criterion(8, "exit-space extensions (aug06a)", &[&r], None));

    let sanity = suites::model_sanity(&TolerancePolicy::default());
    let pass = sanity.iter().all(|c| c.pass);
    verdicts.push(Verdict { id: 9, what: "model sanity", pass, detail: failures(&sanity) });

    let mut err = std::io::stderr().lock();
    for v in &verdicts {
        let note = if KNOWN_UNATTAINABLE.contains(&v.id) { " [known unattainable, see decisions ledger]" } else { "" };
        writeln!(err, "criterion {}: {} {}: {}{note}", v.id, if v.pass { "PASS" } else { "FAIL" }, v.what, v.detail).unwrap();
    }
    let unexpected: Vec<u32> = verdicts.iter().filter(|v| v.pass == KNOWN_UNATTAINABLE.contains(&v.id)).map(|v| v.id).collect();
    assert!(unexpected.is_empty(), "criteria with an unexpected verdict: {unexpected:?}");
}
