//! Named verification suites, their JSON reports, and the grid CSV writer.
//!
//! Every suite is deterministic in `(suite, seed, trials, tolerances)`: the
//! only nondeterministic field of a [`RunReport`] is `wall_time_ms`.
//! Mathematical failures become failing cases; only an invalid
//! configuration is an `Err`.

use std::fmt;
use std::io;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::charfn::{self, CharFnGrid, GridSpec};
use crate::compressor::{self, NamedCertificate};
use crate::error::{Error, Result};
use crate::extenders::{build_extension, random_admissible_contraction, random_admissible_unitary};
use crate::matkit::{self, TolerancePolicy};
use crate::random;
use crate::seqspace::{CertKind, EvGeoSeq};
use crate::symop::{self, DefectData, HVec, Model, ShiftModel, I};
use crate::synthesizer::{self, DualPairSpec, ExitMode, StructuredBlocks, StructuredY};
use crate::{CMat, CSub, C64};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteName {
    Stenger,
    Nudelman,
    Mar14a,
    L1,
    Bef25a,
    Bef29abRoundtrip,
    Juni18aRoundtrip,
    Aug06a,
    CharfnIdentities,
    SchurCharfn,
}

impl SuiteName {
    pub const ALL: [SuiteName; 10] = [
        SuiteName::Stenger,
        SuiteName::Nudelman,
        SuiteName::Mar14a,
        SuiteName::L1,
        SuiteName::Bef25a,
        SuiteName::Bef29abRoundtrip,
        SuiteName::Juni18aRoundtrip,
        SuiteName::Aug06a,
        SuiteName::CharfnIdentities,
        SuiteName::SchurCharfn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SuiteName::Stenger => "stenger",
            SuiteName::Nudelman => "nudelman",
            SuiteName::Mar14a => "mar14a",
            SuiteName::L1 => "l1",
            SuiteName::Bef25a => "bef25a",
            SuiteName::Bef29abRoundtrip => "bef29ab_roundtrip",
            SuiteName::Juni18aRoundtrip => "juni18a_roundtrip",
            SuiteName::Aug06a => "aug06a",
            SuiteName::CharfnIdentities => "charfn_identities",
            SuiteName::SchurCharfn => "schur_charfn",
        }
    }
}

impl fmt::Display for SuiteName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SuiteName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SuiteName::ALL.into_iter().find(|n| n.as_str() == s).ok_or_else(|| Error::UnknownSuite(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub suite: SuiteName,
    pub seed: u64,
    pub trials: usize,
    pub tolerances: TolerancePolicy,
}

impl SuiteConfig {
    pub fn new(suite: SuiteName, seed: u64, trials: usize) -> Self {
        SuiteConfig { suite, seed, trials, tolerances: TolerancePolicy::default() }
    }
}

/// One named check, aggregated over its trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub name: String,
    pub pass: bool,
    pub trials: usize,
    pub failures: usize,
    pub max_residual: Option<f64>,
    pub threshold: Option<f64>,
    /// Diagnostic of the first failing trial.
    pub detail: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub certificates: Vec<NamedCertificate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    pub count: usize,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub suite: String,
    pub seed: u64,
    pub trials: usize,
    pub tolerances: TolerancePolicy,
    pub passed: bool,
    pub cases: Vec<CaseResult>,
    pub residuals: ResidualStats,
    pub wall_time_ms: f64,
}

impl RunReport {
    fn assemble(suite: &str, cfg: &SuiteConfig, cases: Vec<CaseResult>, residuals: Vec<f64>, started: Instant) -> Self {
        let count = residuals.len();
        let max = residuals.iter().copied().fold(0.0, f64::max);
        let mean = if count == 0 { 0.0 } else { residuals.iter().sum::<f64>() / count as f64 };
        RunReport {
            schema_version: SCHEMA_VERSION,
            suite: suite.to_string(),
            seed: cfg.seed,
            trials: cfg.trials,
            tolerances: cfg.tolerances,
            passed: cases.iter().all(|c| c.pass),
            cases,
            residuals: ResidualStats { count, max, mean },
            wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        }
    }

    pub fn case(&self, name: &str) -> Option<&CaseResult> {
        self.cases.iter().find(|c| c.name == name)
    }
}

/// Accumulates trials of one case. A trial yields `(pass, residual)`; an
/// `Err` counts as a failure with the error as diagnostic.
struct Case {
    name: String,
    threshold: Option<f64>,
    trials: usize,
    failures: usize,
    max_residual: Option<f64>,
    detail: Option<String>,
    certificates: Vec<NamedCertificate>,
}

impl Case {
    fn new(name: impl Into<String>, threshold: Option<f64>) -> Self {
        Case { name: name.into(), threshold, trials: 0, failures: 0, max_residual: None, detail: None, certificates: Vec::new() }
    }

    /// Residual trial: passes when `residual < threshold` and `ok` holds.
    fn residual(&mut self, sink: &mut Vec<f64>, r: Result<(bool, f64)>) {
        self.trials += 1;
        match r {
            Ok((ok, res)) => {
                sink.push(res);
                self.max_residual = Some(self.max_residual.map_or(res, |m: f64| m.max(res)));
                let within = self.threshold.is_none_or(|t| res < t);
                if !(ok && within) {
                    self.fail(format!("trial {}: residual {res:e}, structural check {}", self.trials, if ok { "held" } else { "failed" }));
                }
            }
            Err(e) => self.fail(format!("trial {}: {e}", self.trials)),
        }
    }

    /// Yes/no trial with a diagnostic for the failing case.
    fn flag(&mut self, r: Result<(bool, String)>) {
        self.trials += 1;
        match r {
            Ok((true, _)) => {}
            Ok((false, why)) => self.fail(format!("trial {}: {why}", self.trials)),
            Err(e) => self.fail(format!("trial {}: {e}", self.trials)),
        }
    }

    fn fail(&mut self, why: String) {
        self.failures += 1;
        if self.detail.is_none() {
            self.detail = Some(why);
        }
    }

    fn finish(self) -> CaseResult {
        CaseResult {
            pass: self.failures == 0 && self.trials > 0,
            name: self.name,
            trials: self.trials,
            failures: self.failures,
            max_residual: self.max_residual,
            threshold: self.threshold,
            detail: self.detail,
            certificates: self.certificates,
        }
    }
}

pub fn run_suite(cfg: &SuiteConfig) -> Result<RunReport> {
    if cfg.trials == 0 {
        return Err(Error::PreconditionViolated("trials must be at least 1".into()));
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sink = Vec::new();
    let tol = &cfg.tolerances;
    let cases = match cfg.suite {
        SuiteName::Stenger => selfadjoint_compressions(cfg.trials, &mut rng, tol, &mut sink),
        SuiteName::Nudelman => dissipative_compressions(cfg.trials, &mut rng, tol, &mut sink),
        SuiteName::Mar14a => range_calculus(cfg.trials, &mut rng, tol, &mut sink),
        SuiteName::L1 => contraction_identity(cfg.trials, &mut rng, tol, &mut sink),
        SuiteName::Bef25a => compression_routes(cfg.trials, &mut rng, tol, &mut sink),
        SuiteName::Bef29abRoundtrip => selfadjoint_synthesis(cfg.trials, &mut rng, tol, &mut sink),
        SuiteName::Juni18aRoundtrip => dissipative_synthesis(cfg.trials, &mut rng, tol, &mut sink),
        SuiteName::Aug06a => exit_space(tol, &mut sink),
        SuiteName::CharfnIdentities => charfn_identities(cfg.trials, &mut rng, tol, &mut sink),
        SuiteName::SchurCharfn => schur_charfn(cfg.trials, &mut rng, tol, &mut sink),
    };
    Ok(RunReport::assemble(cfg.suite.as_str(), cfg, cases, sink, started))
}

/// Exit and restricted models with `dim L = p` for `p = 1, 2, 3`.
pub fn finite_codim_models() -> Vec<(String, Model)> {
    let specs = ["exit:1:1", "exit:2:2", "exit:1:3", "restricted:1:0@2", "restricted:2:0@2,1@-1", "restricted:2:0@2,1@-1,0@4"];
    specs.iter().map(|s| (s.to_string(), parse_model(s).expect("built-in model spec"))).collect()
}

fn with_defects<F>(name: &str, model: &Model, tol: &TolerancePolicy, threshold: Option<f64>, f: F) -> CaseResult
where
    F: FnOnce(&DefectData, &mut Case),
{
    let mut case = Case::new(name, threshold);
    match DefectData::new(model, tol) {
        Ok(dd) => f(&dd, &mut case),
        Err(e) => case.fail(format!("deficiency data: {e}")),
    }
    case.finish()
}

fn selfadjoint_compressions(trials: usize, rng: &mut ChaCha8Rng, tol: &TolerancePolicy, sink: &mut Vec<f64>) -> Vec<CaseResult> {
    finite_codim_models()
        .iter()
        .map(|(name, model)| {
            with_defects(&format!("selfadjoint compression on {name}"), model, tol, Some(1e-8), |dd, case| {
                for _ in 0..trials {
                    let r = random_admissible_unitary(dd, rng, tol).and_then(|p| compressor::compress(dd, &p, tol)).map(|r| {
                        let res = r.residuals.isometry.max(r.residuals.inverse).max(r.residuals.duality);
                        (r.classification.selfadjoint && r.dom_u0.dim() == dd.np_plus, res)
                    });
                    case.residual(sink, r);
                }
            })
        })
        .collect()
}

fn dissipative_compressions(trials: usize, rng: &mut ChaCha8Rng, tol: &TolerancePolicy, sink: &mut Vec<f64>) -> Vec<CaseResult> {
    finite_codim_models()
        .iter()
        .map(|(name, model)| {
            with_defects(&format!("dissipative compression on {name}"), model, tol, Some(1e-9), |dd, case| {
                for _ in 0..trials {
                    let r = random_admissible_contraction(dd, rng, tol).and_then(|p| compressor::compress(dd, &p, tol)).map(|r| {
                        let c = &r.classification;
                        (c.maximal_dissipative && c.dual_pair_adjoint, r.residuals.duality)
                    });
                    case.residual(sink, r);
                }
            })
        })
        .collect()
}

fn compression_routes(trials: usize, rng: &mut ChaCha8Rng, tol: &TolerancePolicy, sink: &mut Vec<f64>) -> Vec<CaseResult> {
    let models = finite_codim_models();
    let mut out: Vec<CaseResult> = models
        .iter()
        .map(|(name, model)| {
            with_defects(&format!("two-route compression on {name}"), model, tol, Some(1e-8), |dd, case| {
                for k in 0..trials {
                    let r = (|| {
                        let p = if k % 2 == 0 { random_admissible_unitary(dd, rng, tol)? } else { random_admissible_contraction(dd, rng, tol)? };
                        let a = compressor::compress(dd, &p, tol)?;
                        let b = compressor::compress_blocks(dd, &p, tol)?;
                        let c = compressor::compress_direct(dd, &build_extension(dd, &p)?, tol)?;
                        let d = a.discrepancy(&b, tol).max(a.discrepancy(&c, tol));
                        Ok((a.classification == c.classification, d))
                    })();
                    case.residual(sink, r);
                }
            })
        })
        .collect();
    // Compression equals S_0 exactly when ker M = {0} and Ω_Y = {0}.
    let mut case = Case::new("structured compression equals S_0 iff ker M and Omega_Y are trivial", None);
    for _ in 0..trials {
        let r = (|| {
            let np = rng.gen_range(1..=3);
            let nmp = rng.gen_range(1..=3);
            let a = rng.gen_range(0..=np + 1);
            let b = rng.gen_range(0..=nmp);
            let y = StructuredY::shifts(a, b, tol)?;
            let m = random::contraction(a, np, rng);
            let g = random::contraction(nmp, b, rng);
            let x = random::contraction(nmp, np, rng);
            let omega = y.facts.omega_trivial;
            let blocks = StructuredBlocks::new(y, m.clone(), g, x, tol)?;
            let r = compressor::compress_structured(&blocks, tol)?;
            let ker_m_trivial = a >= np && matkit::sigma_min(&m) >= tol.rank_tol;
            let predicted = ker_m_trivial && omega;
            Ok((r.dom_u0.is_zero() == predicted, format!("dom U_0 = {} dims, predicted trivial: {predicted}", r.dom_u0.dim())))
        })();
        case.flag(r);
    }
    out.push(case.finish());
    out
}

/// A random contraction of size `n` with `ker(I - Y) = {0}`; half of the
/// draws touch the unit circle so that the defect spaces are proper.
fn random_admissible_y(rng: &mut ChaCha8Rng) -> CMat {
    loop {
        let n = rng.gen_range(2..=6);
        let y = if rng.gen_bool(0.5) { random::contraction(n, n, rng) } else { random::contraction_with_norm(n, n, 1.0, rng) };
        if matkit::sigma_min(&(matkit::identity::<f64>(n) - &y)) >= 1e-6 {
            return y;
        }
    }
}

fn range_calculus(trials: usize, rng: &mut ChaCha8Rng, tol: &TolerancePolicy, sink: &mut Vec<f64>) -> Vec<CaseResult> {
    let mut sums = Case::new("item 1: ran D_Y* + ran(I-Y) = ran D_Y + ran(I-Y^H)", None);
    let mut together = Case::new("item 2: Omega_Y trivial iff Omega_Y* trivial", None);
    let mut mapping = Case::new("item 3: (I-Y^H)(I-Y)^-1 maps Omega_Y onto Omega_Y*", None);
    let mut norm = Case::new("item 4: norm identity", Some(1e-9));
    let mut last = Case::new("item 8: ran D_Y^2 in ran(I-Y^H) iff ran(I-Y) in ran(I-Y^H)", None);
    for _ in 0..trials {
        let y = random_admissible_y(rng);
        match compressor::range_predicates(&y, tol) {
            Ok(r) => {
                sums.flag(Ok((r.sums_equal == Some(true), "sums differ".into())));
                together.flag(Ok((r.trivial_together, "only one of the Omega spaces is trivial".into())));
                mapping.flag(Ok((r.omega_map_holds == Some(true), "image differs from Omega_Y*".into())));
                norm.residual(sink, r.norm_identity_residual.map(|v| (true, v)).ok_or(Error::SingularPivot(0.0)));
                last.flag(Ok((r.last_equivalence == Some(true), "equivalence fails".into())));
            }
            Err(e) => {
                for c in [&mut sums, &mut together, &mut mapping, &mut last] {
                    c.flag(Err(e.clone()));
                }
                norm.residual(sink, Err(e));
            }
        }
    }
    let mut cert = Case::new("structured shift certificates", None);
    let fwd = compressor::forward_shift_certificate();
    let bwd = compressor::backward_kernel_certificate();
    cert.flag(Ok((fwd.kind == CertKind::NonMember, format!("forward shift certificate {fwd:?}"))));
    cert.flag(Ok((bwd.kind == CertKind::NonMember, format!("backward shift certificate {bwd:?}"))));
    let empty = CMat::zeros(0, 0);
    for (a, b) in [(1, 0), (0, 1), (2, 1)] {
        match compressor::range_predicates_structured(a, b, &empty, tol) {
            Ok(r) => {
                let ok = r.omega_y_trivial && r.omega_ystar_trivial && r.ker_trivial && r.trivial_together;
                cert.flag(Ok((ok, format!("shifts ({a}, {b}): {r:?}"))));
                if cert.certificates.is_empty() {
                    cert.certificates = r.certificates;
                }
            }
            Err(e) => cert.flag(Err(e)),
        }
    }
    vec![sums.finish(), together.finish(), mapping.finish(), norm.finish(), last.finish(), cert.finish()]
}

fn contraction_identity(trials: usize, rng: &mut ChaCha8Rng, tol: &TolerancePolicy, sink: &mut Vec<f64>) -> Vec<CaseResult> {
    let mut generic = Case::new("contraction identity on random ingredients", Some(1e-10));
    for _ in 0..trials {
        let mut d = || rng.gen_range(1..=5);
        let (kr, kc, mr, n) = (d(), d(), d(), d());
        let k = random::contraction(kr, kc, rng);
        let m = random::contraction(mr, n, rng);
        let f = random::contraction(kc, mr, rng);
        let x = random::contraction(kr, n, rng);
        let pairs: Vec<(CMat, CMat)> = (0..3)
            .map(|_| {
                let phi = random::gaussian_matrix(n, 1, rng);
                let fm = &f * &m * &phi;
                (phi, fm)
            })
            .collect();
        generic.residual(sink, compressor::l1_identity_check(&k, &pairs, &m, &x, tol).map(|r| (true, r)));
    }
    // K, M^H, X isometries and F isometric on ran M: W is isometric.
    let mut iso = Case::new("isometric ingredients give an isometry", Some(1e-10));
    for _ in 0..trials {
        let r = (|| {
            let k = random::unitary(4, rng).columns(0, 3).into_owned();
            let m = random::unitary(3, rng).rows(0, 2).into_owned();
            let f = random::unitary(3, rng).columns(0, 2).into_owned();
            let x = matkit::null_basis(&k.adjoint(), tol) * matkit::null_basis(&m, tol).adjoint();
            let phi = random::gaussian_matrix(3, 1, rng);
            let fm = &f * &m * &phi;
            let (dm, _) = matkit::defect_pair(&m, tol)?;
            let (_, dks) = matkit::defect_pair(&k, tol)?;
            let w = &k * &fm + dks * &x * dm * &phi;
            let id = compressor::l1_identity_check(&k, &[(phi.clone(), fm)], &m, &x, tol)?;
            Ok((true, (w.norm() - phi.norm()).abs().max(id)))
        })();
        iso.residual(sink, r);
    }
    vec![generic.finish(), iso.finish()]
}

fn selfadjoint_synthesis(trials: usize, rng: &mut ChaCha8Rng, tol: &TolerancePolicy, sink: &mut Vec<f64>) -> Vec<CaseResult> {
    let mut dd_by_n = Vec::new();
    for n in 1..=3 {
        match Model::exit(n, 1).and_then(|m| DefectData::new(&m, tol)) {
            Ok(dd) => dd_by_n.push(dd),
            Err(e) => {
                let mut c = Case::new("selfadjoint synthesis round trip", Some(1e-8));
                c.fail(format!("deficiency data: {e}"));
                return vec![c.finish()];
            }
        }
    }
    let check = |dd: &DefectData, target: &synthesizer::IsometricTarget| {
        synthesizer::synthesize_selfadjoint(dd, target, tol)
            .map(|r| (r.roundtrip.classification.symmetric && r.unitarity_residual < 1e-10, r.roundtrip_error))
    };
    let mut random_case = Case::new("selfadjoint synthesis round trip", Some(1e-8));
    for _ in 0..trials {
        let dd = &dd_by_n[rng.gen_range(0..3)];
        let n = dd.np_plus;
        let target = synthesizer::random_isometric_target(n, n, rng.gen_range(0..=n), rng);
        random_case.residual(sink, check(dd, &target));
    }
    let mut degenerate = Case::new("selfadjoint synthesis of degenerate targets", Some(1e-8));
    for dd in &dd_by_n {
        let n = dd.np_plus;
        for d in [0, n] {
            let target = synthesizer::random_isometric_target(n, n, d, rng);
            degenerate.residual(sink, check(dd, &target));
        }
    }
    vec![random_case.finish(), degenerate.finish()]
}

/// Degenerate dual pairs: both compressions `S_0`, an everywhere defined
/// adjoint pair, a one-sided pair, and a pair whose `U_0` has parts both
/// inside and outside `dom U_{*0}`.
pub fn degenerate_dual_pairs<R: Rng + ?Sized>(rng: &mut R, tol: &TolerancePolicy) -> Vec<(String, DualPairSpec)> {
    let c = |x: f64| C64::new(x, 0.0);
    let u0 = random::contraction(2, 2, rng);
    let strict = random::contraction_with_norm(2, 2, 0.9, rng);
    let a = CMat::from_column_slice(2, 1, &[c(1.0), c(0.0)]);
    vec![
        (
            "both compressions equal S_0".into(),
            DualPairSpec { dom_u0: CSub::zero(2), u0: CMat::zeros(2, 2), dom_ustar0: CSub::zero(2), ustar0: CMat::zeros(2, 2) },
        ),
        ("adjoint pair".into(), DualPairSpec { dom_u0: CSub::full(2), u0: u0.clone(), dom_ustar0: CSub::full(2), ustar0: u0.adjoint() }),
        (
            "one-sided pair".into(),
            DualPairSpec { dom_u0: CSub::full(2), u0: strict, dom_ustar0: CSub::zero(2), ustar0: CMat::zeros(2, 2) },
        ),
        (
            "mixed cross part".into(),
            DualPairSpec {
                dom_u0: CSub::full(1),
                u0: CMat::from_column_slice(2, 1, &[c(0.6), c(0.6)]),
                dom_ustar0: CSub::span(&a, tol),
                ustar0: CMat::from_row_slice(1, 2, &[c(0.6), c(0.0)]),
            },
        ),
    ]
}

fn dissipative_synthesis(trials: usize, rng: &mut ChaCha8Rng, tol: &TolerancePolicy, sink: &mut Vec<f64>) -> Vec<CaseResult> {
    let mut structured = Case::new("dissipative synthesis round trip (structured specs)", Some(1e-8));
    for _ in 0..trials {
        let np = rng.gen_range(1..=3);
        let nmp = rng.gen_range(1..=3);
        let r = synthesizer::random_structured_spec(np, nmp, rng, tol)
            .and_then(|spec| synthesizer::synthesize_dissipative_blocks(&spec, 1, tol))
            .map(|r| (true, r.roundtrip_error));
        structured.residual(sink, r);
    }
    let mut finite = Case::new("dissipative synthesis round trip (compressions of finite-codimension extensions)", Some(1e-8));
    let models: Vec<DefectData> = (1..=3).filter_map(|n| Model::exit(n, 1).and_then(|m| DefectData::new(&m, tol)).ok()).collect();
    for _ in 0..trials {
        let dd = &models[rng.gen_range(0..models.len())];
        let r = random_admissible_contraction(dd, rng, tol)
            .and_then(|p| compressor::compress(dd, &p, tol))
            .and_then(|rep| synthesizer::synthesize_dissipative(dd, &DualPairSpec::from_report(&rep), tol))
            .map(|r| (true, r.roundtrip_error));
        finite.residual(sink, r);
    }
    let mut out = vec![structured.finish(), finite.finish()];
    let dd = DefectData::new(&Model::exit(2, 2).expect("exit model"), tol);
    for (name, spec) in degenerate_dual_pairs(rng, tol) {
        let mut case = Case::new(format!("dissipative synthesis of a degenerate spec: {name}"), Some(1e-8));
        let r = match (&dd, spec.np_plus()) {
            (Ok(dd), 2) => synthesizer::synthesize_dissipative(dd, &spec, tol),
            _ => synthesizer::synthesize_dissipative_blocks(&spec, 1, tol),
        };
        case.residual(sink, r.map(|r| (true, r.roundtrip_error)));
        out.push(case.finish());
    }
    out
}

fn exit_space(tol: &TolerancePolicy, sink: &mut Vec<f64>) -> Vec<CaseResult> {
    let mut out = Vec::new();
    for mode in [ExitMode::Selfadjoint, ExitMode::Dissipative] {
        let label = match mode {
            ExitMode::Selfadjoint => "selfadjoint",
            ExitMode::Dissipative => "dissipative",
        };
        let mut h = Case::new(format!("{label}: dom S^ meets H exactly in dom S"), None);
        let mut h1 = Case::new(format!("{label}: dom S^ meets H_1 trivially"), None);
        let mut unit = Case::new(format!("{label}: block parameter residual"), Some(1e-10));
        for m in 1..=3 {
            let r = ShiftModel::new(m).and_then(|base| synthesizer::exit_space_extensions(&base, 2 * m, mode, tol));
            match r {
                Ok(r) => {
                    let adj_h = r.h_intersection_adjoint.as_ref().is_none_or(|v| v.trivial);
                    h.flag(Ok((r.h_intersection.trivial && adj_h, format!("m = {m}: {}", r.h_intersection.reason))));
                    let adj_h1 = r.h1_intersection_adjoint.as_ref().is_none_or(|v| v.trivial);
                    let why = match &r.h1_intersection.witness {
                        Some(w) => format!("m = {m}: {}; witness {}", r.h1_intersection.reason, describe_witness(w)),
                        None => format!("m = {m}: {}", r.h1_intersection.reason),
                    };
                    h1.flag(Ok((r.h1_intersection.trivial && adj_h1, why)));
                    let res = match mode {
                        ExitMode::Selfadjoint => r.unitarity_residual,
                        ExitMode::Dissipative => r.compression.residuals.duality,
                    };
                    unit.residual(sink, Ok((true, res)));
                }
                Err(e) => {
                    h.flag(Err(e.clone()));
                    h1.flag(Err(e.clone()));
                    unit.residual(sink, Err(e));
                }
            }
        }
        out.extend([h.finish(), h1.finish(), unit.finish()]);
    }
    out
}

fn describe_witness(w: &[EvGeoSeq]) -> String {
    let parts: Vec<String> = w
        .iter()
        .enumerate()
        .map(|(c, s)| {
            let entries: Vec<String> = s.explicit().iter().map(|(k, v)| format!("{v}*e{k}")).collect();
            format!("channel {c}: {}", if entries.is_empty() { "0".into() } else { entries.join(" + ") })
        })
        .collect();
    parts.join("; ")
}

fn random_upper<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(0.2..5.0))
}

fn charfn_models() -> Vec<(String, Model)> {
    ["restricted:1:0@2", "exit:1:1", "restricted:2:1@-1"].iter().map(|s| (s.to_string(), parse_model(s).expect("built-in model spec"))).collect()
}

fn charfn_identities(trials: usize, rng: &mut ChaCha8Rng, tol: &TolerancePolicy, sink: &mut Vec<f64>) -> Vec<CaseResult> {
    let mut out = Vec::new();
    let lambdas = [I, C64::new(1.0, 2.0)];
    for (name, model) in charfn_models() {
        let mut agree = Case::new(format!("route agreement on {name}, default grid"), Some(1e-9));
        let mut bound = Case::new(format!("norm bound on {name}, default grid"), None);
        for lam in lambdas {
            match charfn::charfn_grid(&model, lam, &GridSpec::default(), tol) {
                Ok(g) => {
                    agree.residual(sink, Ok((g.flagged == 0, g.max_discrepancy)));
                    bound.flag(Ok((g.min_bound_slack >= -1e-10, format!("lambda = {lam}: slack {:e}", g.min_bound_slack))));
                }
                Err(e) => {
                    agree.residual(sink, Err(e.clone()));
                    bound.flag(Err(e));
                }
            }
        }
        let mut random_pts = Case::new(format!("route agreement on {name}, random points"), Some(1e-9));
        for _ in 0..trials {
            let lam = lambdas[rng.gen_range(0..2)];
            let z = random_upper(rng);
            let r = charfn::charfn_via_nz(&model, lam, z, tol).and_then(|a| {
                let b = charfn::charfn_via_cayley(&model, lam, z, tol)?;
                Ok((a.bound_slack() >= -1e-10, compressor::max_abs(&(&a.matrix - &b.matrix))))
            });
            random_pts.residual(sink, r);
        }
        out.extend([agree.finish(), bound.finish(), random_pts.finish()]);
    }
    let model = parse_model("restricted:1:0@2").expect("built-in model spec");
    let ts: Vec<f64> = (1..=6).map(|k| 10f64.powi(k)).collect();
    let mut boundary = Case::new("boundary limit on restricted:1:0@2 up the imaginary axis", Some(1e-4));
    boundary.residual(sink, charfn::boundary_limit_check(&model, I, &ts, tol).map(|t| (t.monotone && !t.vacuous, t.last_deviation())));
    let mut rescale = Case::new("rescaling identity at lambda = 1+2i", Some(1e-9));
    for _ in 0..trials.min(10) {
        let z = random_upper(rng);
        rescale.residual(sink, charfn::rescaling_check(&model, C64::new(1.0, 2.0), z, tol).map(|r| (true, r.residual)));
    }
    let mut neumann = Case::new("Neumann series oracle at lambda = i", Some(1e-8));
    for s in [0.1, 0.3, -0.2] {
        let z = I * (1.0 + s) / (1.0 - s);
        let r = charfn::charfn_via_cayley(&model, I, z, tol)
            .and_then(|c| Ok((true, compressor::max_abs(&(c.matrix - charfn::neumann_oracle(&model, z, 30, tol)?)))));
        neumann.residual(sink, r);
    }
    let mut cayley = Case::new("Cayley defect and L-resolvent identities", Some(1e-10));
    for _ in 0..trials.min(10) {
        let z = random_upper(rng);
        let vecs: Vec<HVec> = (0..20).map(|_| random_finite_vector(rng)).collect();
        let r = charfn::cayley_defect_residual(&model, z, &vecs, tol)
            .and_then(|a| Ok((true, a.max(charfn::l_resolvent_residual(&model, z, tol)?))));
        cayley.residual(sink, r);
    }
    let mut vanish = Case::new("shift model: C vanishes identically", Some(1e-12));
    let shift = Model::shift(1).expect("shift model");
    for _ in 0..trials.min(10) {
        let z = random_upper(rng);
        vanish.residual(sink, charfn::charfn_via_nz(&shift, I, z, tol).map(|c| (true, compressor::max_abs(&c.matrix))));
    }
    out.extend([boundary.finish(), rescale.finish(), neumann.finish(), cayley.finish(), vanish.finish()]);
    out
}

fn random_finite_vector<R: Rng + ?Sized>(rng: &mut R) -> HVec {
    let entries: Vec<(i64, C64)> = (-4..=4).map(|k| (k, random::gaussian(rng))).collect();
    HVec::from_chans(vec![EvGeoSeq::from_entries(entries)])
}

fn schur_charfn(trials: usize, rng: &mut ChaCha8Rng, tol: &TolerancePolicy, sink: &mut Vec<f64>) -> Vec<CaseResult> {
    let model = parse_model("restricted:1:0@2").expect("built-in model spec");
    let mut fixed = Case::new("Schur relation at z = 2i, 1+i, 3i", Some(1e-8));
    let mut factor = Case::new("block factorization of C - V P_L", Some(1e-10));
    for z in [C64::new(0.0, 2.0), C64::new(1.0, 1.0), C64::new(0.0, 3.0)] {
        match charfn::schur_relation_check(&model, I, z, tol) {
            Ok(r) => {
                fixed.residual(sink, Ok((true, r.residual)));
                factor.residual(sink, Ok((true, r.factorization_residual)));
            }
            Err(e) => {
                fixed.residual(sink, Err(e.clone()));
                factor.residual(sink, Err(e));
            }
        }
    }
    let mut random_pts = Case::new("Schur relation at random lambda and z", Some(1e-8));
    for _ in 0..trials {
        let (lam, z) = (random_upper(rng), random_upper(rng));
        random_pts.residual(sink, charfn::schur_relation_check(&model, lam, z, tol).map(|r| (true, r.residual)));
    }
    let mut compression = Case::new("compression of the Shtraus extension is the Shtraus extension of S_0", Some(1e-9));
    let mut livsic = Case::new("Livsic scalar form of C^{S_0}", Some(1e-12));
    for _ in 0..trials.min(10) {
        let z = random_upper(rng);
        compression.residual(sink, charfn::shtraus_compression_residual(&model, z, tol).map(|r| (true, r)));
        let r = charfn::livsic_scalar(&model, z, tol).and_then(|w| {
            let s = charfn::schur_relation_check(&model, I, z, tol)?;
            Ok(match w {
                Some(w) => (true, (w - s.c_s0[(0, 0)]).norm()),
                None => (false, f64::NAN),
            })
        });
        livsic.residual(sink, r);
    }
    let mut dense = Case::new("densely defined model: C^S = C^{S_0}", Some(1e-12));
    let shift = Model::shift(2).expect("shift model");
    for _ in 0..trials.min(10) {
        let z = random_upper(rng);
        dense.residual(sink, charfn::schur_relation_check(&shift, I, z, tol).map(|r| (true, r.residual)));
    }
    vec![fixed.finish(), factor.finish(), random_pts.finish(), compression.finish(), livsic.finish(), dense.finish()]
}

/// Model checks outside the named suites: the Krasnoselskii identity at
/// five points, unitarity of `V_i`, and the indices of the shift models.
pub fn model_sanity(tol: &TolerancePolicy) -> Vec<CaseResult> {
    let mut sink = Vec::new();
    let mut kras = Case::new("Krasnoselskii identity on L at five points", Some(1e-10));
    let points = [I, -I, I * 2.0, -I * 2.0, C64::new(1.0, 1.0)];
    for (_, model) in finite_codim_models() {
        for &lam in &points {
            for h in model.l_vectors() {
                kras.residual(&mut sink, symop::krasnoselskii_residual(&model, lam, &h, tol).map(|r| (true, r)));
            }
        }
    }
    let mut vi = Case::new("V_i is unitary", Some(1e-12));
    for (_, model) in finite_codim_models() {
        let r = DefectData::new(&model, tol).map(|dd| (true, matkit::op_norm(&(dd.v_i.adjoint() * &dd.v_i - matkit::identity::<f64>(dd.p)))));
        vi.residual(&mut sink, r);
    }
    let mut idx = Case::new("shift model indices are (m, m)", None);
    for m in 1..=3 {
        let r = Model::shift(m).and_then(|model| {
            let dd = DefectData::new(&model, tol)?;
            let base = ShiftModel::new(m)?;
            let (up, down) = (base.deficiency(C64::new(0.3, 1.2))?.len(), base.deficiency(C64::new(0.3, -1.2))?.len());
            Ok(((dd.n_plus, dd.n_minus, up, down) == (m, m, m, m), format!("m = {m}: ({}, {}), raw ({up}, {down})", dd.n_plus, dd.n_minus)))
        });
        idx.flag(r);
    }
    vec![kras.finish(), vi.finish(), idx.finish()]
}

/// `shift:<m>`, `exit:<m>:<m1>`, or `restricted:<m>:<c>@<k>,...` where each
/// `<c>@<k>` removes the direction `e_k` of channel `c`.
pub fn parse_model(s: &str) -> Result<Model> {
    let bad = |why: &str| Error::PreconditionViolated(format!("model spec {s:?}: {why}"));
    let parts: Vec<&str> = s.trim().split(':').collect();
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad("expected a channel count"));
    match parts.as_slice() {
        ["shift", m] => Model::shift(num(m)?),
        ["exit", m, m1] => Model::exit(num(m)?, num(m1)?),
        ["restricted", m, list] => {
            let m = num(m)?;
            let mut us = Vec::new();
            for item in list.split(',').filter(|t| !t.trim().is_empty()) {
                let (c, k) = item.split_once('@').ok_or_else(|| bad("removed directions are written <channel>@<index>"))?;
                let c = num(c)?;
                let k = k.trim().parse::<i64>().map_err(|_| bad("expected an integer index"))?;
                if c >= m {
                    return Err(bad("channel out of range"));
                }
                us.push(HVec::unit(m, c, k));
            }
            Model::restricted(m, us)
        }
        _ => Err(bad("expected shift:<m>, exit:<m>:<m1> or restricted:<m>:<c>@<k>,...")),
    }
}

/// `<re>,<im>` or the shorthand `i`.
pub fn parse_point(s: &str) -> Result<C64> {
    let s = s.trim();
    if s == "i" {
        return Ok(I);
    }
    let (re, im) = s.split_once(',').ok_or_else(|| Error::PreconditionViolated(format!("point {s:?}: expected <re>,<im>")))?;
    let p = |t: &str| t.trim().parse::<f64>().map_err(|e| Error::PreconditionViolated(format!("point {s:?}: {e}")));
    Ok(C64::new(p(re)?, p(im)?))
}

/// `a+bi` or `a-bi` with shortest round-trip decimals; negative zeros are
/// written as zeros.
pub fn format_entry(z: C64) -> String {
    let (re, im) = (z.re + 0.0, z.im + 0.0);
    if im < 0.0 {
        format!("{re}-{}i", -im)
    } else {
        format!("{re}+{im}i")
    }
}

pub const GRID_CSV_HEADER: [&str; 9] = ["re_z", "im_z", "route", "rows", "cols", "entries", "bound_slack", "condition", "flag"];

/// One row per grid point and route. `entries` lists the matrix row-major as
/// space-separated `a+bi` tokens; a failed route has empty numeric fields
/// and the error in `flag`.
pub fn write_grid_csv<W: io::Write>(grid: &CharFnGrid, w: W) -> std::result::Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(GRID_CSV_HEADER)?;
    for p in &grid.points {
        for (route, sample) in [(charfn::CharFnRoute::ViaNz, &p.via_nz), (charfn::CharFnRoute::ViaCayley, &p.via_cayley)] {
            let (re, im) = (p.z.re.to_string(), p.z.im.to_string());
            match sample {
                Some(s) => {
                    let m = &s.matrix;
                    let entries: Vec<String> = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| format_entry(m[(i, j)]))).collect();
                    out.write_record([
                        re,
                        im,
                        route.to_string(),
                        m.nrows().to_string(),
                        m.ncols().to_string(),
                        entries.join(" "),
                        s.bound_slack().to_string(),
                        s.condition.to_string(),
                        String::new(),
                    ])?;
                }
                None => {
                    let flag = p.flags.iter().find(|f| f.starts_with(&route.to_string())).cloned().unwrap_or_default();
                    out.write_record([re, im, route.to_string(), String::new(), String::new(), String::new(), String::new(), String::new(), flag])?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}
