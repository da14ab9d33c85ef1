//! Inverse constructions: parameters whose compressions are prescribed.
//!
//! The defect spaces of `Y` carry the whole construction, so `Y` is taken
//! from a catalog of shift sums on `ℓ²(ℕ)` whose range facts are decided by
//! exact certificates. Synthesis therefore runs at parameter level: the
//! blocks `(Y, M, G, X)` are produced in the coordinates `𝔇_{Y*} ≅ C^a`
//! (the `e_0` of each forward channel) and `𝔇_Y ≅ C^b` (the `e_0` of each
//! backward channel).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::compressor::{self, compress, max_abs, CompressionReport, NamedCertificate};
use crate::error::{Error, Result};
use crate::extenders::{assemble_blocks, defect_op, pinv_op, ParamBlocks};
use crate::matkit::{self, serde_cmat, TolerancePolicy};
use crate::random;
use crate::seqspace::EvGeoSeq;
use crate::symop::{DefectData, ShiftModel};
use crate::{CMat, CSub, C64};

const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YKind {
    ForwardShift,
    BackwardShift,
    DirectSum,
    FiniteUnitary,
}

/// Facts about `Y` established when it is built, never assumed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertifiedFacts {
    /// `ker(I - Y) = {0}`.
    pub ker_trivial: bool,
    /// `ran(I - Y) ∩ ran D_{Y*} = {0}`.
    pub omega_trivial: bool,
    /// `ran(I - Y^H) ∩ ran D_Y = {0}`.
    pub omega_star_trivial: bool,
    pub dim_dy: usize,
    pub dim_dys: usize,
    pub certificates: Vec<NamedCertificate>,
}

/// `Y = W_+^{(forward)} ⊕ (W_+^H)^{(backward)} ⊕ unitary`.
///
/// `D_{Y*} = P_{e_0}` on each forward channel and `D_Y = P_{e_0}` on each
/// backward channel; all other defects vanish.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructuredY {
    pub forward: usize,
    pub backward: usize,
    #[serde(with = "serde_cmat")]
    pub unitary: CMat,
    pub facts: CertifiedFacts,
}

impl StructuredY {
    pub fn new(forward: usize, backward: usize, unitary: CMat, tol: &TolerancePolicy) -> Result<Self> {
        let n = unitary.nrows();
        if unitary.ncols() != n {
            return Err(Error::DimensionMismatch(format!("unitary summand is {:?}", unitary.shape())));
        }
        let res = crate::extenders::unitarity_residual(&unitary);
        if res > tol.eq_tol {
            return Err(Error::NotUnitary(res));
        }
        let report = compressor::range_predicates_structured(forward, backward, &unitary, tol)?;
        let facts = CertifiedFacts {
            ker_trivial: report.ker_trivial,
            omega_trivial: report.omega_y_trivial,
            omega_star_trivial: report.omega_ystar_trivial,
            dim_dy: backward,
            dim_dys: forward,
            certificates: report.certificates,
        };
        Ok(StructuredY { forward, backward, unitary, facts })
    }

    /// Pure shift sum with `dim 𝔇_{Y*} = a` and `dim 𝔇_Y = b`.
    pub fn shifts(a: usize, b: usize, tol: &TolerancePolicy) -> Result<Self> {
        StructuredY::new(a, b, CMat::zeros(0, 0), tol)
    }

    /// Catalog lookup: shifts when a defect is required, otherwise the
    /// finite unitary `-I_p`, which has `ker(I - Y) = {0}`.
    pub fn catalog(a: usize, b: usize, p: usize, tol: &TolerancePolicy) -> Result<Self> {
        let y = if a + b > 0 {
            StructuredY::shifts(a, b, tol)?
        } else {
            StructuredY::new(0, 0, -matkit::identity::<f64>(p), tol)?
        };
        if !(y.facts.ker_trivial && y.facts.omega_trivial) {
            return Err(Error::CatalogMiss(format!("no certified Y with defects ({a}, {b})")));
        }
        Ok(y)
    }

    pub fn kind(&self) -> YKind {
        let fin = self.unitary.nrows() > 0;
        match (self.forward > 0, self.backward > 0, fin) {
            (true, false, false) => YKind::ForwardShift,
            (false, true, false) => YKind::BackwardShift,
            (false, false, _) => YKind::FiniteUnitary,
            _ => YKind::DirectSum,
        }
    }

    /// Number of summands.
    pub fn multiplicity(&self) -> usize {
        self.forward + self.backward + usize::from(self.unitary.nrows() > 0)
    }

    pub fn is_finite(&self) -> bool {
        self.forward + self.backward == 0
    }

    /// `Y` applied to one vector per shift channel (forward channels first).
    pub fn apply_shifts(&self, x: &[EvGeoSeq]) -> Result<Vec<EvGeoSeq>> {
        self.map_shifts(x, false)
    }

    /// `Y^H` applied channelwise.
    pub fn apply_shifts_adjoint(&self, x: &[EvGeoSeq]) -> Result<Vec<EvGeoSeq>> {
        self.map_shifts(x, true)
    }

    fn map_shifts(&self, x: &[EvGeoSeq], adjoint: bool) -> Result<Vec<EvGeoSeq>> {
        if x.len() != self.forward + self.backward {
            return Err(Error::DimensionMismatch(format!("{} channels for {} shifts", x.len(), self.forward + self.backward)));
        }
        Ok(x.iter()
            .enumerate()
            .map(|(j, v)| if (j < self.forward) != adjoint { v.shift(1) } else { v.shift(-1).truncate_below(0) })
            .collect())
    }
}

/// Blocks of a parameter with structured `Y`: `M : N'_i → 𝔇_{Y*}`,
/// `G : 𝔇_Y → N'_{-i}`, and `X`, stored as an `N'_i → N'_{-i}` matrix of
/// which only `P_{𝔇_{G*}} X P_{𝔇_M}` matters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructuredBlocks {
    pub y: StructuredY,
    #[serde(with = "serde_cmat")]
    pub m: CMat,
    #[serde(with = "serde_cmat")]
    pub g: CMat,
    #[serde(with = "serde_cmat")]
    pub x: CMat,
}

impl StructuredBlocks {
    pub fn new(y: StructuredY, m: CMat, g: CMat, x: CMat, tol: &TolerancePolicy) -> Result<Self> {
        let (np, nmp) = (m.ncols(), g.nrows());
        if m.nrows() != y.forward || g.ncols() != y.backward || x.shape() != (nmp, np) {
            return Err(Error::RangeCompatibility(format!(
                "M {:?}, G {:?}, X {:?} for defects ({}, {})",
                m.shape(),
                g.shape(),
                x.shape(),
                y.forward,
                y.backward
            )));
        }
        for (mat, name) in [(&m, "M"), (&g, "G"), (&x, "X")] {
            matkit::ensure_finite(mat)?;
            let nrm = matkit::op_norm(mat);
            if nrm > 1.0 + tol.eq_tol {
                return Err(Error::PreconditionViolated(format!("{name} has norm {nrm}")));
            }
        }
        Ok(StructuredBlocks { y, m, g, x })
    }

    pub fn np_plus(&self) -> usize {
        self.m.ncols()
    }

    pub fn np_minus(&self) -> usize {
        self.g.nrows()
    }

    /// Largest of `|D_G D_Y|`, `|D_{M*} D_{Y*}|`, `|D_X D_M|`, `|D_{X*} D_{G*}|`,
    /// each evaluated through squares so that no square root amplifies
    /// roundoff. Zero exactly when the parameter is unitary.
    pub fn unitarity_residual(&self) -> f64 {
        let (np, nmp) = (self.np_plus(), self.np_minus());
        let dm2 = matkit::identity::<f64>(np) - self.m.adjoint() * &self.m;
        let dgs2 = matkit::identity::<f64>(nmp) - &self.g * self.g.adjoint();
        let pm = range_projector(&dm2);
        let pgs = range_projector(&dgs2);
        let xe = &pgs * &self.x * &pm;
        let dg2 = matkit::identity::<f64>(self.y.backward) - self.g.adjoint() * &self.g;
        let dms2 = matkit::identity::<f64>(self.y.forward) - &self.m * self.m.adjoint();
        let dx2 = matkit::identity::<f64>(np) - xe.adjoint() * &xe;
        let dxs2 = matkit::identity::<f64>(nmp) - &xe * xe.adjoint();
        [norm0(&dg2), norm0(&dms2), norm0(&(dx2 * dm2)), norm0(&(dxs2 * dgs2))]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

fn norm0(m: &CMat) -> f64 {
    if m.is_empty() {
        0.0
    } else {
        matkit::op_norm(m)
    }
}

/// Projector onto the range of a positive semidefinite contraction-sized
/// matrix, with the absolute cutoff used for defect spaces.
fn range_projector(d2: &CMat) -> CMat {
    let n = d2.nrows();
    if n == 0 {
        return CMat::zeros(0, 0);
    }
    matkit::herm_fn(d2, |l| if l > DEFECT_CUT { 1.0 } else { 0.0 })
}

/// Eigenvalues of `D^2` below this are roundoff (`D^2` entries are O(1)).
const DEFECT_CUT: f64 = 1e-12;

/// Target `(dom Ũ_0, Ũ_0)` of a selfadjoint synthesis: `Ũ_0` is isometric on
/// its domain and zero on the complement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsometricTarget {
    pub dom_u0: CSub,
    #[serde(with = "serde_cmat")]
    pub u0: CMat,
}

/// Dual pair of compressions in parameter form. `u0` and `ustar0` vanish on
/// the complements of their domains.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualPairSpec {
    pub dom_u0: CSub,
    #[serde(with = "serde_cmat")]
    pub u0: CMat,
    pub dom_ustar0: CSub,
    #[serde(with = "serde_cmat")]
    pub ustar0: CMat,
}

/// Diagnostics of [`DualPairSpec::validate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecChecks {
    pub duality: f64,
    /// `1 - |Ψ_0|` for the weighted cross part of [`cross_part`]; positive
    /// exactly when the first strictness condition holds.
    pub strictness_margin: f64,
    pub strictness_margin_adjoint: f64,
}

impl DualPairSpec {
    pub fn from_report(r: &CompressionReport) -> Self {
        DualPairSpec { dom_u0: r.dom_u0.clone(), u0: r.u0.clone(), dom_ustar0: r.dom_ustar0.clone(), ustar0: r.ustar0.clone() }
    }

    pub fn np_plus(&self) -> usize {
        self.dom_u0.ambient_dim
    }

    pub fn np_minus(&self) -> usize {
        self.dom_ustar0.ambient_dim
    }

    /// Checks contractivity, the duality pairing and the strictness
    /// conditions `U_0 h ∉ dom U_{*0} ⟹ |U_0 h| < |h|` (and symmetrically).
    /// Strictness is decided spectrally through the weighted cross part.
    pub fn validate(&self, tol: &TolerancePolicy) -> Result<SpecChecks> {
        let (np, nmp) = (self.np_plus(), self.np_minus());
        if self.u0.shape() != (nmp, np) || self.ustar0.shape() != (np, nmp) {
            return Err(Error::DimensionMismatch(format!(
                "U_0 {:?}, U_*0 {:?} for N' dims ({np}, {nmp})",
                self.u0.shape(),
                self.ustar0.shape()
            )));
        }
        let u0 = &self.u0 * self.dom_u0.projector();
        let us = &self.ustar0 * self.dom_ustar0.projector();
        for (m, name) in [(&u0, "U_0"), (&us, "U_*0")] {
            matkit::ensure_finite(m)?;
            let nrm = norm0(m);
            if nrm > 1.0 + tol.eq_tol {
                return Err(Error::SpecViolation(format!("{name} has norm {nrm}")));
            }
        }
        let b = &self.dom_u0.basis;
        let bs = &self.dom_ustar0.basis;
        let duality = max_abs(&(bs.adjoint() * &u0 * b - (&us * bs).adjoint() * b));
        if duality > tol.eq_tol {
            return Err(Error::SpecViolation(format!("duality residual {duality}")));
        }
        let c0 = cross_part(&u0, &self.dom_u0.projector(), &self.dom_ustar0.projector(), tol);
        let cs = cross_part(&us, &self.dom_ustar0.projector(), &self.dom_u0.projector(), tol);
        let strictness_margin = 1.0 - c0.psi_norm;
        let strictness_margin_adjoint = 1.0 - cs.psi_norm;
        if strictness_margin < tol.rank_tol || strictness_margin_adjoint < tol.rank_tol {
            return Err(Error::SpecViolation(format!(
                "strictness fails: weighted cross parts have norms {} and {}",
                c0.psi_norm, cs.psi_norm
            )));
        }
        Ok(SpecChecks { duality, strictness_margin, strictness_margin_adjoint })
    }

    /// Largest distance to a compression report, infinity when the domains
    /// differ.
    pub fn distance(&self, r: &CompressionReport, tol: &TolerancePolicy) -> f64 {
        if !self.dom_u0.same_as(&r.dom_u0, tol) || !self.dom_ustar0.same_as(&r.dom_ustar0, tol) {
            return f64::INFINITY;
        }
        let u0 = &self.u0 * self.dom_u0.projector();
        let us = &self.ustar0 * self.dom_ustar0.projector();
        max_abs(&(u0 - &r.u0)).max(max_abs(&(us - &r.ustar0)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: String,
    pub action: String,
    /// The residual that certifies the step, when it has one.
    pub residual: Option<f64>,
}

fn step(trace: &mut Vec<TraceStep>, step: &str, action: impl Into<String>, residual: Option<f64>) {
    trace.push(TraceStep { step: step.into(), action: action.into(), residual });
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub blocks: StructuredBlocks,
    /// The full parameter `U : N_i → N_{-i}`, available when `Y` is a finite
    /// unitary on `L_{-i}`.
    #[serde(with = "opt_cmat")]
    pub assembled: Option<CMat>,
    pub unitarity_residual: f64,
    /// Compression of the synthesized blocks.
    pub roundtrip: CompressionReport,
    pub roundtrip_error: f64,
    /// Schur-route compression of `assembled` against the target.
    pub assembled_error: Option<f64>,
    pub trace: Vec<TraceStep>,
}

mod opt_cmat {
    use crate::matkit::MatrixJson;
    use crate::CMat;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<CMat>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(MatrixJson::from).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<CMat>, D::Error> {
        let j = Option::<MatrixJson>::deserialize(d)?;
        j.map(|j| CMat::try_from(&j).map_err(serde::de::Error::custom)).transpose()
    }
}

/// Isometry onto the orthogonal complement of `sub`, as its basis.
fn complement(sub: &CSub, tol: &TolerancePolicy) -> CMat {
    if sub.dim() == sub.ambient_dim {
        return CMat::zeros(sub.ambient_dim, 0);
    }
    sub.complement(tol).basis
}

fn check_dims(dd: &DefectData, np: usize, nmp: usize) -> Result<()> {
    if (np, nmp) != (dd.np_plus, dd.np_minus) {
        return Err(Error::DimensionMismatch(format!(
            "target lives on N' dims ({np}, {nmp}), model has ({}, {})",
            dd.np_plus, dd.np_minus
        )));
    }
    Ok(())
}

/// Assembles the finite parameter when `Y` is a finite unitary on `L_{-i}`.
fn assemble_finite(dd: &DefectData, b: &StructuredBlocks, tol: &TolerancePolicy) -> Result<Option<CMat>> {
    if !b.y.is_finite() || b.y.unitary.nrows() != dd.p {
        return Ok(None);
    }
    let pb = ParamBlocks {
        y: b.y.unitary.clone(),
        m: CMat::zeros(dd.p, dd.np_plus),
        g: CMat::zeros(dd.np_minus, dd.p),
        x: b.x.clone(),
    };
    assemble_blocks(dd, &pb, tol).map(Some)
}

/// Selfadjoint extension whose compression has parameter `Ũ_0`:
/// `M` a co-isometry with `ker M = dom Ũ_0`, `G` an isometry onto
/// `N'_{-i} ⊖ ran Ũ_0`, `X = Ũ_0`, and `Y` from the catalog with
/// `dim 𝔇_{Y*} = n'_+ - dim dom Ũ_0`, `dim 𝔇_Y = n'_- - dim ran Ũ_0`.
pub fn synthesize_selfadjoint(dd: &DefectData, target: &IsometricTarget, tol: &TolerancePolicy) -> Result<SynthesisResult> {
    let np = target.dom_u0.ambient_dim;
    let nmp = target.u0.nrows();
    check_dims(dd, np, nmp)?;
    if target.u0.ncols() != np {
        return Err(Error::DimensionMismatch(format!("Ũ_0 is {:?}", target.u0.shape())));
    }
    let mut trace = Vec::new();
    let b = &target.dom_u0.basis;
    let ub = &target.u0 * b;
    let iso = norm0(&(ub.adjoint() * &ub - matkit::identity::<f64>(b.ncols())));
    if iso > tol.eq_tol {
        return Err(Error::SpecViolation(format!("Ũ_0 is not isometric on its domain (residual {iso})")));
    }
    step(&mut trace, "target", format!("Ũ_0 isometric on a {}-dimensional domain", b.ncols()), Some(iso));
    let ran = CSub::span(&ub, tol);
    let q = complement(&target.dom_u0, tol);
    let r = complement(&ran, tol);
    let (a, bdim) = (q.ncols(), r.ncols());
    let y = StructuredY::catalog(a, bdim, dd.p, tol)?;
    step(&mut trace, "Y", format!("{:?} with dim D_Y* = {a}, dim D_Y = {bdim}", y.kind()), None);
    let m = q.adjoint();
    let x = &target.u0 * target.dom_u0.projector();
    let blocks = StructuredBlocks::new(y, m, r, x, tol)?;
    let unitarity_residual = blocks.unitarity_residual();
    step(&mut trace, "assemble", "M = Q^H, G = R, X = Ũ_0; unitarity by the four defect conditions", Some(unitarity_residual));
    if unitarity_residual > tol.eq_tol {
        return Err(Error::NotUnitary(unitarity_residual));
    }
    let roundtrip = compressor::compress_structured(&blocks, tol)?;
    let spec = DualPairSpec {
        dom_u0: target.dom_u0.clone(),
        u0: target.u0.clone(),
        dom_ustar0: ran,
        ustar0: target.u0.adjoint(),
    };
    let roundtrip_error = spec.distance(&roundtrip, tol);
    step(&mut trace, "round trip", "compress the blocks and compare with Ũ_0 and Ũ_0^H", Some(roundtrip_error));
    let assembled = assemble_finite(dd, &blocks, tol)?;
    let assembled_error = assembled
        .as_ref()
        .map(|u| -> Result<f64> {
            let p = crate::extenders::ExtensionParam::new(dd, u.clone(), crate::extenders::ParamKind::Unitary, tol)?;
            Ok(spec.distance(&compress(dd, &p, tol)?, tol))
        })
        .transpose()?;
    Ok(SynthesisResult { blocks, assembled, unitarity_residual, roundtrip, roundtrip_error, assembled_error, trace })
}

/// Maximal dissipative extension whose compressions are the given dual
/// pair, following the four-step construction: polar parts of the cross
/// maps, `M` and `G` with the prescribed kernels, a contractive completion
/// `X` of the dual pair `<X_0, X_{*0}>`, and assembly.
pub fn synthesize_dissipative(dd: &DefectData, spec: &DualPairSpec, tol: &TolerancePolicy) -> Result<SynthesisResult> {
    let (np, nmp) = (spec.np_plus(), spec.np_minus());
    check_dims(dd, np, nmp)?;
    synthesize_dissipative_blocks(spec, dd.p, tol).and_then(|mut res| {
        res.assembled = assemble_finite(dd, &res.blocks, tol)?;
        res.assembled_error = res
            .assembled
            .as_ref()
            .map(|u| -> Result<f64> {
                let p = crate::extenders::ExtensionParam::new(dd, u.clone(), crate::extenders::ParamKind::Contraction, tol)?;
                Ok(spec.distance(&compress(dd, &p, tol)?, tol))
            })
            .transpose()?;
        Ok(res)
    })
}

/// Model-free part of [`synthesize_dissipative`]; `p` only sizes the finite
/// unitary `Y` used when no defect is needed.
pub fn synthesize_dissipative_blocks(spec: &DualPairSpec, p: usize, tol: &TolerancePolicy) -> Result<SynthesisResult> {
    let checks = spec.validate(tol)?;
    let (np, nmp) = (spec.np_plus(), spec.np_minus());
    let mut trace = Vec::new();
    step(&mut trace, "0", "dual pair validated (duality, contractivity, strictness)", Some(checks.duality));
    let id_p = matkit::identity::<f64>(np);
    let id_m = matkit::identity::<f64>(nmp);
    let p0 = spec.dom_u0.projector();
    let ps = spec.dom_ustar0.projector();
    let u0 = &spec.u0 * &p0;
    let us = &spec.ustar0 * &ps;

    // Step 1: cross parts and 𝒜_0 = P^⊥ (I - |Ψ_0^H|^2) P^⊥, 𝒜_{*0} likewise.
    let c0 = cross_part(&u0, &p0, &ps, tol);
    let cs = cross_part(&us, &ps, &p0, tol);
    let a0 = (&id_m - &ps) * (&id_m - &c0.psi_abs * &c0.psi_abs) * (&id_m - &ps);
    let as0 = (&id_p - &p0) * (&id_p - &cs.psi_abs * &cs.psi_abs) * (&id_p - &p0);
    let ker_a0 = kernel_sub(&a0, tol);
    let ker_as0 = kernel_sub(&as0, tol);
    if !ker_a0.same_as(&spec.dom_ustar0, tol) || !ker_as0.same_as(&spec.dom_u0, tol) {
        return Err(Error::SpecViolation("ker A_0 or ker A_*0 differs from the prescribed domain".into()));
    }
    let phi_max = matkit::op_norm(&c0.phi).max(matkit::op_norm(&cs.phi));
    step(
        &mut trace,
        "1",
        format!("weighted polar parts of the cross maps (|Φ| max {phi_max:.3e}); ker A_0 = dom U_*0, ker A_*0 = dom U_0"),
        Some(c0.psi_norm.max(cs.psi_norm)),
    );

    // Step 2: Y from the catalog, M = Z_{*0} 𝒜_{*0}^{1/2}, G^H = Z_0 𝒜_0^{1/2}.
    let q = complement(&spec.dom_u0, tol);
    let r = complement(&spec.dom_ustar0, tol);
    let (a, b) = (q.ncols(), r.ncols());
    let y = StructuredY::catalog(a, b, p, tol)?;
    let m = q.adjoint() * matkit::herm_sqrt(&as0);
    let g = matkit::herm_sqrt(&a0) * &r;
    let ker_m = kernel_sub(&m, tol);
    let ker_gh = kernel_sub(&g.adjoint(), tol);
    let kernels_ok = ker_m.same_as(&spec.dom_u0, tol) && ker_gh.same_as(&spec.dom_ustar0, tol);
    step(&mut trace, "2", format!("{:?} Y with dim D_Y* = {a}, dim D_Y = {b}; ker M = dom U_0, ker G^H = dom U_*0", y.kind()), None);
    if !kernels_ok {
        return Err(Error::SpecViolation("kernels of M and G^H do not match the domains".into()));
    }

    // Step 3: X_0 = P_{*0} U_0 + W_0 Q_0^{1/2} on ker M and the mirrored
    // X_{*0} on ker G^H, completed over ker M ⊕ (𝔇_M ⊖ ker M).
    let x0 = (&ps * &u0 + &c0.psi_iso * &c0.q_half) * &p0;
    let xs0 = (&p0 * &us + &cs.psi_iso * &cs.q_half) * &ps;
    let dm2 = &id_p - m.adjoint() * &m;
    let dgs2 = &id_m - &g * g.adjoint();
    let x = complete_dual_pair(&x0, &xs0, &spec.dom_u0, &spec.dom_ustar0, &dm2, &dgs2, tol)?;
    let ext_res = norm0(&((&x - &x0) * &spec.dom_u0.basis)).max(norm0(&((x.adjoint() - &xs0) * &spec.dom_ustar0.basis)));
    step(&mut trace, "3", "contractive completion X ⊇ X_0, X^H ⊇ X_*0 with free parameter 0", Some(ext_res));
    if ext_res > tol.eq_tol {
        return Err(Error::SpecViolation(format!("completion misses the dual pair by {ext_res}")));
    }

    // Step 4: assemble and compress.
    let blocks = StructuredBlocks::new(y, m, g, x, tol)?;
    let unitarity_residual = blocks.unitarity_residual();
    let roundtrip = compressor::compress_structured(&blocks, tol)?;
    let roundtrip_error = spec.distance(&roundtrip, tol);
    step(&mut trace, "4", "assemble the block parameter and compress it", Some(roundtrip_error));
    Ok(SynthesisResult { blocks, assembled: None, unitarity_residual, roundtrip, roundtrip_error, assembled_error: None, trace })
}

/// Cross part of one map of a dual pair. With `Φ = P_far^⊥ U`,
/// `Q = P_dom - U^H P_far U` (the room `U` leaves after its part inside the
/// far domain) and `Ψ = Φ Q^{-1/2} = |Ψ^H| W`, the decomposition
/// `U = P_far U + |Ψ^H| W Q^{1/2}` holds and `P_far U + W Q^{1/2}` is a
/// contraction. Strictness of the pair is `|Ψ| < 1`.
struct CrossPart {
    phi: CMat,
    psi_abs: CMat,
    psi_iso: CMat,
    q_half: CMat,
    psi_norm: f64,
}

fn cross_part(u: &CMat, p_dom: &CMat, p_far: &CMat, tol: &TolerancePolicy) -> CrossPart {
    let far_perp = matkit::identity::<f64>(p_far.nrows()) - p_far;
    let phi = &far_perp * u;
    let q = p_dom - u.adjoint() * p_far * u;
    let cut = tol.rank_tol;
    let q_inv_half = if q.is_empty() { q.clone() } else { matkit::herm_fn(&q, |l| if l > cut { 1.0 / l.sqrt() } else { 0.0 }) };
    let q_half = if q.is_empty() { q.clone() } else { matkit::herm_sqrt(&q) };
    let psi = &phi * q_inv_half;
    let (psi_abs, psi_iso) = polar_op(&psi, tol);
    CrossPart { psi_norm: matkit::op_norm(&psi), phi, psi_abs, psi_iso, q_half }
}

fn polar_op(t: &CMat, tol: &TolerancePolicy) -> (CMat, CMat) {
    if t.is_empty() || max_abs(t) == 0.0 {
        return (CMat::zeros(t.nrows(), t.nrows()), CMat::zeros(t.nrows(), t.ncols()));
    }
    matkit::polar(t, tol)
}

fn kernel_sub(a: &CMat, tol: &TolerancePolicy) -> CSub {
    let n = a.ncols();
    if a.nrows() == 0 || max_abs(a) <= tol.rank_tol {
        return CSub::full(n);
    }
    CSub::kernel(a, tol)
}

fn range_sub(d2: &CMat) -> CSub {
    let n = d2.nrows();
    let p = range_projector(d2);
    if n == 0 {
        return CSub::zero(0);
    }
    let (vals, vecs) = matkit::herm_eigen(&p);
    let cols: Vec<usize> = (0..n).filter(|&k| vals[k] > 0.5).collect();
    let mut basis = CMat::zeros(n, cols.len());
    for (j, &k) in cols.iter().enumerate() {
        basis.set_column(j, &vecs.column(k));
    }
    CSub { ambient_dim: n, basis }
}

/// Contraction `X : 𝔇_M → 𝔇_{G*}` with `X ↾ K_1 = X_0` and
/// `X^H ↾ K_2 = X_{*0}`. In the splittings `K_1 ⊕ C_1` and `K_2 ⊕ C_2`
/// the prescribed entries are a column `[A; C]` and a row `[A B]`; the
/// corner is `-K A^H M'` from the block parametrization with `C = K D_A`,
/// `B = D_{A*} M'` and free parameter zero.
fn complete_dual_pair(
    x0: &CMat,
    xs0: &CMat,
    k1: &CSub,
    k2: &CSub,
    dm2: &CMat,
    dgs2: &CMat,
    tol: &TolerancePolicy,
) -> Result<CMat> {
    let h1 = range_sub(dm2);
    let h2 = range_sub(dgs2);
    let c1 = orth_part(&h1, k1, tol);
    let c2 = orth_part(&h2, k2, tol);
    let (b1, b2) = (&k1.basis, &k2.basis);
    let a = b2.adjoint() * x0 * b1;
    let col = c2.adjoint() * x0 * b1;
    let row = (c1.adjoint() * xs0 * b2).adjoint();
    let da = defect_op(&a, tol)?;
    let das = defect_op(&a.adjoint(), tol)?;
    let kc = &col * pinv_op(&da, tol);
    let mc = pinv_op(&das, tol) * &row;
    let bp = compressor::block_parametrize(&a, &mc, &kc, &CMat::zeros(kc.nrows(), mc.ncols()), tol)?;
    let left = hcat(b2, &c2);
    let right = hcat(b1, &c1);
    Ok(left * bp.u * right.adjoint())
}

/// Orthonormal basis of `h ⊖ k` for `k ⊆ h`.
fn orth_part(h: &CSub, k: &CSub, tol: &TolerancePolicy) -> CMat {
    let d = h.projector() - k.projector();
    if max_abs(&d) <= tol.rank_tol {
        return CMat::zeros(h.ambient_dim, 0);
    }
    matkit::range_basis(&d, tol)
}

fn hcat(a: &CMat, b: &CMat) -> CMat {
    let mut out = CMat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitMode {
    Selfadjoint,
    Dissipative,
}

/// Verdict on one intersection `dom Ŝ ∩ H` or `dom Ŝ ∩ H_1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntersectionVerdict {
    pub trivial: bool,
    pub reason: String,
    /// A nonzero element of the intersection, one sequence per `H_1`
    /// channel, when it is not trivial.
    pub witness: Option<Vec<EvGeoSeq>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExitSpaceResult {
    pub mode: ExitMode,
    pub m: usize,
    pub m1: usize,
    pub blocks: StructuredBlocks,
    pub unitarity_residual: f64,
    pub compression: CompressionReport,
    /// `dom Ŝ ∩ H = dom S`.
    pub h_intersection: IntersectionVerdict,
    /// `dom Ŝ^* ∩ H = dom S` (dissipative mode).
    pub h_intersection_adjoint: Option<IntersectionVerdict>,
    /// `dom Ŝ ∩ H_1 = {0}`.
    pub h1_intersection: IntersectionVerdict,
    pub h1_intersection_adjoint: Option<IntersectionVerdict>,
    pub trace: Vec<TraceStep>,
}

impl ExitSpaceResult {
    pub fn all_trivial(&self) -> bool {
        [Some(&self.h_intersection), self.h_intersection_adjoint.as_ref(), Some(&self.h1_intersection), self.h1_intersection_adjoint.as_ref()]
            .into_iter()
            .flatten()
            .all(|v| v.trivial)
    }
}

/// Exit-space extension of `ShiftModel(m)` into `H ⊕ H_1`, with `H_1`
/// realized as `m1 = 2m` channels of `ℓ²(ℕ)` carrying
/// `𝒴 = W_+^{(m)} ⊕ (W_+^H)^{(m)}`, so that `L_λ = H_1`, `V_λ = I` and
/// `N'_{±i} = N_{±i}(S)`. The parameter is `[[𝒴, D_{𝒴*} ℳ], [𝒢 D_𝒴, -𝒢 𝒴^H ℳ]]`
/// with `ℳ`, `𝒢` unitary (selfadjoint mode) or injective strict contractions
/// (dissipative mode).
///
/// Both intersections are computed, not assumed: `dom Ŝ ∩ H = dom S` is
/// decided by `ker ℳ` and the certified `Ω_𝒴 = {0}`; `dom Ŝ ∩ H_1` equals
/// `(I - 𝒴) ker(𝒢 D_𝒴)`, which is reported with a witness when nonzero.
pub fn exit_space_extensions(base: &ShiftModel, m1: usize, mode: ExitMode, tol: &TolerancePolicy) -> Result<ExitSpaceResult> {
    let m = base.m;
    if m1 == 0 {
        return Err(Error::CatalogMiss("m1 = 0: there is no exit space".into()));
    }
    if m1 != 2 * m {
        return Err(Error::CatalogMiss(format!("the shift catalog realizes H_1 with {} channels, got m1 = {m1}", 2 * m)));
    }
    let mut trace = Vec::new();
    let y = StructuredY::shifts(m, m, tol)?;
    step(&mut trace, "Y", format!("{m} forward and {m} backward shifts; Ω_Y = {{0}} certified"), None);
    let (mm, g) = match mode {
        ExitMode::Selfadjoint => (matkit::identity::<f64>(m), matkit::identity::<f64>(m)),
        ExitMode::Dissipative => {
            let half = matkit::identity::<f64>(m) * C64::new(0.5, 0.0);
            (half.clone(), half)
        }
    };
    let blocks = StructuredBlocks::new(y, mm, g, CMat::zeros(m, m), tol)?;
    let unitarity_residual = blocks.unitarity_residual();
    step(&mut trace, "assemble", format!("{mode:?} block parameter"), Some(unitarity_residual));
    if mode == ExitMode::Selfadjoint && unitarity_residual > tol.eq_tol {
        return Err(Error::NotUnitary(unitarity_residual));
    }
    let compression = compressor::compress_structured(&blocks, tol)?;
    let omega = blocks.y.facts.omega_trivial;
    let h_intersection = IntersectionVerdict {
        trivial: compression.dom_u0.is_zero() && omega,
        reason: format!("dim ker M = {}, Ω_Y trivial: {omega}", compression.dom_u0.dim()),
        witness: None,
    };
    let h_intersection_adjoint = (mode == ExitMode::Dissipative).then(|| IntersectionVerdict {
        trivial: compression.dom_ustar0.is_zero() && blocks.y.facts.omega_star_trivial,
        reason: format!("dim ker G^H = {}, Ω_Y* trivial: {}", compression.dom_ustar0.dim(), blocks.y.facts.omega_star_trivial),
        witness: None,
    });
    step(&mut trace, "H", "dom Ŝ ∩ H from the compression and the Ω certificates", None);
    let h1_intersection = h1_verdict(&blocks, false)?;
    let h1_intersection_adjoint = (mode == ExitMode::Dissipative).then(|| h1_verdict(&blocks, true)).transpose()?;
    step(&mut trace, "H1", "dom Ŝ ∩ H_1 = (I - Y) ker(G D_Y); ker(G D_Y) contains every forward channel", None);
    Ok(ExitSpaceResult {
        mode,
        m,
        m1,
        blocks,
        unitarity_residual,
        compression,
        h_intersection,
        h_intersection_adjoint,
        h1_intersection,
        h1_intersection_adjoint,
        trace,
    })
}

/// `(I - 𝒴) f_1` with `f_1 = e_0` in the first channel on which the relevant
/// defect operator vanishes: a forward channel for `𝒢 D_𝒴`, a backward one
/// for `ℳ^H D_{𝒴*}` (the adjoint extension uses `𝒴^H`).
fn h1_verdict(b: &StructuredBlocks, adjoint: bool) -> Result<IntersectionVerdict> {
    let y = &b.y;
    let channels = y.forward + y.backward;
    let (free, count) = if adjoint { (y.forward, y.backward) } else { (0, y.forward) };
    if count == 0 {
        return Ok(IntersectionVerdict { trivial: true, reason: "no channel on which the defect vanishes".into(), witness: None });
    }
    let mut f1 = vec![EvGeoSeq::zero(); channels];
    f1[free] = EvGeoSeq::unit(0).one_sided()?;
    let yf = if adjoint { y.apply_shifts_adjoint(&f1)? } else { y.apply_shifts(&f1)? };
    let g: Vec<EvGeoSeq> = f1.iter().zip(&yf).map(|(a, b)| a.axpy(-ONE, b)).collect();
    // The defect of the witness channel is zero, so its image under the
    // off-diagonal block vanishes identically.
    let nonzero = g.iter().any(|s| s.norm() > 0.0);
    Ok(IntersectionVerdict {
        trivial: !nonzero,
        reason: format!(
            "{count} channel(s) lie in the kernel of the {} block; (I - Y) is injective there, so the intersection is infinite-dimensional",
            if adjoint { "M^H D_Y*" } else { "G D_Y" }
        ),
        witness: nonzero.then_some(g),
    })
}

/// Random `d`-dimensional subspace of `C^n`.
pub fn random_subspace<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> CSub {
    let u = random::unitary(n, rng);
    CSub { ambient_dim: n, basis: u.columns(0, d).into_owned() }
}

/// Isometric target on a random `d`-dimensional domain in `N'_i` with
/// values in `N'_{-i}`; needs `d <= min(np, nmp)`.
pub fn random_isometric_target<R: Rng + ?Sized>(np: usize, nmp: usize, d: usize, rng: &mut R) -> IsometricTarget {
    let dom = random_subspace(np, d, rng);
    let w = random::unitary(nmp, rng).columns(0, d).into_owned();
    IsometricTarget { u0: &w * dom.basis.adjoint(), dom_u0: dom }
}

/// Dual pair realized by random structured blocks over shift channels,
/// so that it satisfies every condition the synthesis needs.
pub fn random_structured_spec<R: Rng + ?Sized>(np: usize, nmp: usize, rng: &mut R, tol: &TolerancePolicy) -> Result<DualPairSpec> {
    let a = rng.gen_range(0..=np);
    let b = rng.gen_range(0..=nmp);
    let q = random::unitary(np, rng).columns(0, a).into_owned();
    let r = random::unitary(nmp, rng).columns(0, b).into_owned();
    let m = random::contraction(a, a, rng) * q.adjoint();
    let g = &r * random::contraction(b, b, rng);
    let x = random::contraction(nmp, np, rng);
    let blocks = StructuredBlocks::new(StructuredY::shifts(a, b, tol)?, m, g, x, tol)?;
    Ok(DualPairSpec::from_report(&compressor::compress_structured(&blocks, tol)?))
}
