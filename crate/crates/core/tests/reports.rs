//! Suite runner and report formats, including the cli examples of the spec.

use extcalc::charfn::{self, GridSpec};
use extcalc::suites::{self, SuiteConfig, SuiteName, GRID_CSV_HEADER, SCHEMA_VERSION};
use extcalc::symop::I;
use extcalc::{Error, TolerancePolicy, C64};

fn grid_csv(model: &str, lambda: C64, grid: &GridSpec) -> Vec<csv::StringRecord> {
    let model = suites::parse_model(model).unwrap();
    let g = charfn::charfn_grid(&model, lambda, grid, &TolerancePolicy::default()).unwrap();
    let mut buf = Vec::new();
    suites::write_grid_csv(&g, &mut buf).unwrap();
    let mut rd = csv::Reader::from_reader(buf.as_slice());
    assert_eq!(rd.headers().unwrap().iter().collect::<Vec<_>>(), GRID_CSV_HEADER);
    rd.records().map(Result::unwrap).collect()
}

fn parse_entry(s: &str) -> C64 {
    let body = s.strip_suffix('i').unwrap();
    let cut = body.rfind(['+', '-']).filter(|&k| k > 0).unwrap();
    C64::new(body[..cut].parse().unwrap(), body[cut..].trim_start_matches('+').parse().unwrap())
}

#[test]
fn stenger_seed_seven_passes() {
    let r = suites::run_suite(&SuiteConfig::new(SuiteName::Stenger, 7, 50)).unwrap();
    assert!(r.passed);
    assert_eq!(r.schema_version, SCHEMA_VERSION);
    assert_eq!(r.trials, 50);
    assert!(r.residuals.max < 1e-8 && r.residuals.count >= 300);
}

#[test]
fn unknown_suite_is_rejected() {
    assert_eq!("bogus".parse::<SuiteName>(), Err(Error::UnknownSuite("bogus".into())));
}

#[test]
fn report_json_shape() {
    let r = suites::run_suite(&SuiteConfig::new(SuiteName::Mar14a, 1, 5)).unwrap();
    let v: serde_json::Value = serde_json::to_value(&r).unwrap();
    for key in ["schema_version", "suite", "seed", "trials", "tolerances", "passed", "cases", "residuals", "wall_time_ms"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["suite"], "mar14a");
    let certs = v["cases"].as_array().unwrap().iter().find(|c| c.get("certificates").is_some()).unwrap();
    assert_eq!(certs["certificates"][0]["certificate"]["kind"], "non_member");
    let back: suites::RunReport = serde_json::from_value(v).unwrap();
    assert_eq!(back, r);
}

#[test]
fn shift_model_grid_vanishes() {
    let rows = grid_csv("shift:1", I, &GridSpec::default());
    assert_eq!(rows.len(), 2 * GridSpec::default().points().len());
    for row in &rows {
        assert_eq!(&row[8], "");
        for e in row[5].split(' ') {
            assert!(parse_entry(e).norm() < 1e-12, "{e}");
        }
    }
}

#[test]
fn restricted_model_grid_is_nonzero_and_bounded() {
    let rows = grid_csv("restricted:1:0@2", I, &GridSpec::default());
    let mut largest = 0.0f64;
    for row in &rows {
        assert_eq!((&row[3], &row[4]), ("2", "2"));
        assert!(row[6].parse::<f64>().unwrap() >= 0.0);
        let entries: Vec<C64> = row[5].split(' ').map(parse_entry).collect();
        assert_eq!(entries.len(), 4);
        largest = largest.max(entries.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    assert!(largest > 0.1);
}

#[test]
fn empty_grid_is_header_only() {
    assert!(grid_csv("restricted:1:0@2", I, &GridSpec::empty()).is_empty());
}

#[test]
fn grid_spec_parsing() {
    let g: GridSpec = "x=0, 1; y=2; ray=10".parse().unwrap();
    assert_eq!(g.points(), vec![C64::new(0.0, 2.0), C64::new(1.0, 2.0), C64::new(0.0, 10.0)]);
    assert!("y=-1".parse::<GridSpec>().is_err());
    assert!("w=1".parse::<GridSpec>().is_err());
}
