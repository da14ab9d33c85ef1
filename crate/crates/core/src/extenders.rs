//! Extensions of a model operator built from a parameter `U : N_i → N_{-i}`
//! and Shtraus extensions at a point `z`.
//!
//! An extension is stored as its domain decomposition: every domain vector is
//! `f = f_S + sum_k c_k d_k` with `f_S ∈ dom S`, and the action is fixed by
//! the images `a_k = T d_k`. Nothing is ever assembled into a matrix.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matkit::{self, serde_cmat, TolerancePolicy};
use crate::random;
use crate::seqspace::{EvGeoSeq, SeqCertificate};
use crate::symop::{self, lincomb, orthonormalize, DefectData, HVec, Model, I};
use crate::{CMat, C64};

const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Unitary,
    Contraction,
}

/// Evidence that `ker(U - V_i) ∩ L_i = {0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Admissibility {
    /// `L_i = {0}`: the condition is empty.
    Vacuous,
    /// `sigma_min(U_11 - V_i)`, which equals `sigma_min(I - Y)`.
    Certified { sigma_min: f64 },
}

impl Admissibility {
    pub fn margin(&self) -> f64 {
        match self {
            Admissibility::Vacuous => f64::INFINITY,
            Admissibility::Certified { sigma_min } => *sigma_min,
        }
    }
}

/// The four free blocks of an admissible contraction in the splitting
/// `L_i ⊕ N'_i → L_{-i} ⊕ N'_{-i}`:
///
/// ```text
/// U = [ Y V_i        D_{Y*} M              ]
///     [ G D_Y V_i    -G Y^H M + D_{G*} X D_M ]
/// ```
///
/// `Y` acts in `L_{-i}`, `M : N'_i → L_{-i}`, `G : L_{-i} → N'_{-i}` and
/// `X : N'_i → N'_{-i}`; each is stored as a full matrix in the fixed bases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBlocks {
    #[serde(with = "serde_cmat")]
    pub y: CMat,
    #[serde(with = "serde_cmat")]
    pub m: CMat,
    #[serde(with = "serde_cmat")]
    pub g: CMat,
    #[serde(with = "serde_cmat")]
    pub x: CMat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionParam {
    /// Columns are images of the `N_i` basis in `N_{-i}` coordinates.
    #[serde(with = "serde_cmat")]
    pub u: CMat,
    pub kind: ParamKind,
    #[serde(default)]
    pub blocks: Option<ParamBlocks>,
    pub admissibility: Admissibility,
}

/// `(U_11, U_12, U_21, U_22)` in the adapted splitting.
pub fn split_blocks(dd: &DefectData, u: &CMat) -> (CMat, CMat, CMat, CMat) {
    let p = dd.p;
    let (r, c) = (u.nrows(), u.ncols());
    (
        u.view((0, 0), (p, p)).into_owned(),
        u.view((0, p), (p, c - p)).into_owned(),
        u.view((p, 0), (r - p, p)).into_owned(),
        u.view((p, p), (r - p, c - p)).into_owned(),
    )
}

fn check_shape(dd: &DefectData, u: &CMat) -> Result<()> {
    if u.nrows() != dd.n_minus || u.ncols() != dd.n_plus {
        return Err(Error::DimensionMismatch(format!(
            "parameter is {}x{}, deficiency indices ({}, {})",
            u.nrows(),
            u.ncols(),
            dd.n_plus,
            dd.n_minus
        )));
    }
    matkit::ensure_finite(u)
}

pub fn check_admissible(dd: &DefectData, u: &CMat, tol: &TolerancePolicy) -> Result<Admissibility> {
    check_shape(dd, u)?;
    let nrm = matkit::op_norm(u);
    if nrm > 1.0 + tol.eq_tol {
        return Err(Error::NotAContraction(nrm));
    }
    if dd.p == 0 {
        return Ok(Admissibility::Vacuous);
    }
    let (u11, ..) = split_blocks(dd, u);
    let s = matkit::sigma_min(&(u11 - &dd.v_i));
    if s < tol.rank_tol {
        return Err(Error::Inadmissible(s));
    }
    Ok(Admissibility::Certified { sigma_min: s })
}

pub fn unitarity_residual(u: &CMat) -> f64 {
    let a = u.adjoint() * u - matkit::identity::<f64>(u.ncols());
    let b = u * u.adjoint() - matkit::identity::<f64>(u.nrows());
    matkit::op_norm(&a).max(matkit::op_norm(&b))
}

impl ExtensionParam {
    pub fn new(dd: &DefectData, u: CMat, kind: ParamKind, tol: &TolerancePolicy) -> Result<Self> {
        let admissibility = check_admissible(dd, &u, tol)?;
        if kind == ParamKind::Unitary {
            let res = unitarity_residual(&u);
            if res > tol.eq_tol {
                return Err(Error::NotUnitary(res));
            }
        }
        Ok(ExtensionParam { u, kind, blocks: None, admissibility })
    }

    /// Assembles `U` from its blocks and keeps them alongside.
    pub fn from_blocks(dd: &DefectData, blocks: ParamBlocks, kind: ParamKind, tol: &TolerancePolicy) -> Result<Self> {
        let u = assemble_blocks(dd, &blocks, tol)?;
        let mut out = ExtensionParam::new(dd, u, kind, tol)?;
        out.blocks = Some(blocks);
        Ok(out)
    }

    /// Blocks as stored, or recovered from `U`.
    pub fn blocks_or_decompose(&self, dd: &DefectData, tol: &TolerancePolicy) -> Result<ParamBlocks> {
        match &self.blocks {
            Some(b) => Ok(b.clone()),
            None => decompose_blocks(dd, &self.u, tol),
        }
    }

    /// `Y = P_{L_{-i}} U V_{-i}` on `L_{-i}`.
    pub fn y(&self, dd: &DefectData) -> CMat {
        let (u11, ..) = split_blocks(dd, &self.u);
        u11 * dd.v_minus_i()
    }
}

/// Defect operator that tolerates empty matrices.
pub fn defect_op(z: &CMat, tol: &TolerancePolicy) -> Result<CMat> {
    if z.ncols() == 0 {
        return Ok(CMat::zeros(0, 0));
    }
    matkit::defect(z, tol)
}

pub fn pinv_op(a: &CMat, tol: &TolerancePolicy) -> CMat {
    if a.nrows() == 0 || a.ncols() == 0 {
        return CMat::zeros(a.ncols(), a.nrows());
    }
    matkit::pinv(a, tol)
}

pub fn assemble_blocks(dd: &DefectData, b: &ParamBlocks, tol: &TolerancePolicy) -> Result<CMat> {
    let (p, np, nmp) = (dd.p, dd.np_plus, dd.np_minus);
    let shapes = [(&b.y, p, p, "Y"), (&b.m, p, np, "M"), (&b.g, nmp, p, "G"), (&b.x, nmp, np, "X")];
    for (mat, r, c, name) in shapes {
        if mat.nrows() != r || mat.ncols() != c {
            return Err(Error::RangeCompatibility(format!("{name} is {}x{}, expected {r}x{c}", mat.nrows(), mat.ncols())));
        }
    }
    let (dy, dys) = matkit::defect_pair(&b.y, tol)?;
    let dm = defect_op(&b.m, tol)?;
    let dgs = defect_op(&b.g.adjoint(), tol)?;
    let v = &dd.v_i;
    let mut u = CMat::zeros(dd.n_minus, dd.n_plus);
    u.view_mut((0, 0), (p, p)).copy_from(&(&b.y * v));
    u.view_mut((0, p), (p, np)).copy_from(&(&dys * &b.m));
    u.view_mut((p, 0), (nmp, p)).copy_from(&(&b.g * &dy * v));
    let u22 = -(&b.g * b.y.adjoint() * &b.m) + &dgs * &b.x * &dm;
    u.view_mut((p, p), (nmp, np)).copy_from(&u22);
    Ok(u)
}

/// Overshoot of the unit ball tolerated in blocks read off from `U`.
const BLOCK_SLACK: f64 = 1e-6;

/// Pseudo-inverse of a defect operator `D` that drops directions with
/// `D^2 <= rank_tol`, the same cut that decides `dim ran D` elsewhere.
fn defect_pinv(d: &CMat, tol: &TolerancePolicy) -> CMat {
    let (r, c) = d.shape();
    if r == 0 || c == 0 {
        return CMat::zeros(c, r);
    }
    let (u, s, v) = matkit::svd_full(d);
    let k = s.len();
    let inv = CMat::from_fn(k, k, |i, j| if i == j && s[i] * s[i] > tol.rank_tol { C64::new(1.0 / s[i], 0.0) } else { C64::new(0.0, 0.0) });
    v.columns(0, k) * inv * u.columns(0, k).adjoint()
}

/// Inverse of [`assemble_blocks`] with pseudo-inverses of the defect
/// operators; each block is the minimal-norm choice.
pub fn decompose_blocks(dd: &DefectData, u: &CMat, tol: &TolerancePolicy) -> Result<ParamBlocks> {
    check_shape(dd, u)?;
    let (u11, u12, u21, u22) = split_blocks(dd, u);
    let y = &u11 * dd.v_minus_i();
    let (dy, dys) = matkit::defect_pair(&y, tol)?;
    let m = matkit::clamp_contraction(&(defect_pinv(&dys, tol) * &u12), BLOCK_SLACK)?;
    let g = matkit::clamp_contraction(&(&u21 * dd.v_minus_i() * defect_pinv(&dy, tol)), BLOCK_SLACK)?;
    let dm = defect_op(&m, tol)?;
    let dgs = defect_op(&g.adjoint(), tol)?;
    let x = defect_pinv(&dgs, tol) * (&u22 + &g * y.adjoint() * &m) * defect_pinv(&dm, tol);
    let x = matkit::clamp_contraction(&x, BLOCK_SLACK)?;
    Ok(ParamBlocks { y, m, g, x })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExtKind {
    Selfadjoint,
    MaximalDissipative,
    /// `T^*` of a parametrized extension.
    Adjoint,
    Shtraus { z: C64 },
}

/// `(T - μ̄) d_k = γ b_k` with `b_k` spanning `N_μ`, the relation that
/// splits a domain vector back into its parts.
#[derive(Debug, Clone)]
struct Probe {
    mu: C64,
    gamma: C64,
    vecs: Vec<HVec>,
}

/// Data of the Cayley transform at the point where the extension is
/// parametrized: `Y = U_λ` on `M_λ̄` and `M` on `N_λ`.
#[derive(Debug, Clone)]
struct NaturalCayley {
    lambda: C64,
    basis_n: Vec<HVec>,
    basis_nbar: Vec<HVec>,
    m: CMat,
}

#[derive(Debug, Clone)]
pub struct ExtensionOp {
    pub model: Model,
    pub kind: ExtKind,
    pub param: Option<ExtensionParam>,
    /// Domain vectors `d_k` completing `dom S`.
    pub defect_vecs: Vec<HVec>,
    /// `T d_k`.
    pub defect_images: Vec<HVec>,
    probe: Probe,
    natural: Option<NaturalCayley>,
}

pub fn build_extension(dd: &DefectData, param: &ExtensionParam) -> Result<ExtensionOp> {
    let u = &param.u;
    let phi = &dd.basis_ni;
    let uphi = symop::combine(&dd.basis_nmi, u);
    let d = phi.iter().zip(&uphi).map(|(a, b)| a.minus(b)).collect();
    let a = phi.iter().zip(&uphi).map(|(a, b)| a.plus(b).scaled(I)).collect();
    let kind = match param.kind {
        ParamKind::Unitary => ExtKind::Selfadjoint,
        ParamKind::Contraction => ExtKind::MaximalDissipative,
    };
    Ok(ExtensionOp {
        model: dd.model.clone(),
        kind,
        param: Some(param.clone()),
        defect_vecs: d,
        defect_images: a,
        probe: Probe { mu: I, gamma: 2.0 * I, vecs: phi.clone() },
        natural: Some(NaturalCayley {
            lambda: I,
            basis_n: dd.basis_ni.clone(),
            basis_nbar: dd.basis_nmi.clone(),
            m: u.clone(),
        }),
    })
}

/// `T^*(f_S + (I - U^H)ψ) = S f_S - iψ - i U^H ψ` for `ψ ∈ N_{-i}`.
pub fn adjoint_extension(dd: &DefectData, param: &ExtensionParam) -> Result<ExtensionOp> {
    let psi = &dd.basis_nmi;
    let uh_psi = symop::combine(&dd.basis_ni, &param.u.adjoint());
    let d = psi.iter().zip(&uh_psi).map(|(a, b)| a.minus(b)).collect();
    let a = psi.iter().zip(&uh_psi).map(|(a, b)| a.plus(b).scaled(-I)).collect();
    Ok(ExtensionOp {
        model: dd.model.clone(),
        kind: ExtKind::Adjoint,
        param: Some(param.clone()),
        defect_vecs: d,
        defect_images: a,
        probe: Probe { mu: -I, gamma: -2.0 * I, vecs: psi.clone() },
        natural: None,
    })
}

/// `dom S ∔ N_z` with `T φ_z = z φ_z`. Points in the lower half-plane are
/// accepted so that the adjoint `T_z^* = T_z̄` can be formed.
pub fn shtraus_extension(model: &Model, z: C64, tol: &TolerancePolicy) -> Result<ExtensionOp> {
    if z.im == 0.0 || !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::UnsupportedPoint(format!("z = {z}")));
    }
    let nz = orthonormalize(&model.deficiency_raw(z, tol)?, tol)?;
    let nzb = orthonormalize(&model.deficiency_raw(z.conj(), tol)?, tol)?;
    let images = nz.iter().map(|v| v.scaled(z)).collect();
    let m = CMat::zeros(nzb.len(), nz.len());
    Ok(ExtensionOp {
        model: model.clone(),
        kind: ExtKind::Shtraus { z },
        param: None,
        defect_vecs: nz.clone(),
        defect_images: images,
        probe: Probe { mu: z, gamma: z - z.conj(), vecs: nz.clone() },
        natural: Some(NaturalCayley { lambda: z, basis_n: nz, basis_nbar: nzb, m }),
    })
}

impl ExtensionOp {
    pub fn defect_count(&self) -> usize {
        self.defect_vecs.len()
    }

    /// `(f, T f)` for `f = (I - V)h + sum_k c_k d_k`.
    pub fn eval(&self, h: &[EvGeoSeq], c: &[C64], tol: &TolerancePolicy) -> Result<(HVec, HVec)> {
        if c.len() != self.defect_vecs.len() {
            return Err(Error::DimensionMismatch(format!("{} coefficients for {} defect vectors", c.len(), self.defect_count())));
        }
        let (fs, sfs) = self.model.apply(h, tol)?;
        let f = fs.plus(&lincomb(&self.defect_vecs, c.iter().copied()));
        let tf = sfs.plus(&lincomb(&self.defect_images, c.iter().copied()));
        Ok((self.model.embed(f), self.model.embed(tf)))
    }

    /// A random domain vector and its image.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, tol: &TolerancePolicy) -> Result<(HVec, HVec)> {
        let h = self.model.sample_domain(rng);
        let c: Vec<C64> = (0..self.defect_count()).map(|_| random::gaussian(rng)).collect();
        self.eval(&h, &c, tol)
    }

    /// Coefficients `a` of the orthogonal projection of `x` onto
    /// `span b_k` together with the projection itself.
    fn probe_split(&self, x: &HVec, tol: &TolerancePolicy) -> Result<(Vec<C64>, HVec)> {
        let vs = &self.probe.vecs;
        if vs.is_empty() {
            return Ok((Vec::new(), self.model.zero_vec()));
        }
        let g = symop::gram(vs);
        let b = CMat::from_fn(vs.len(), 1, |j, _| x.inner(&vs[j]));
        let a = matkit::solve_square(&g, &b, tol)?;
        let coeffs: Vec<C64> = a.iter().copied().collect();
        let proj = lincomb(vs, coeffs.iter().copied());
        Ok((coeffs, proj))
    }

    /// `(T - μ̄)^{-1} x` at the probe point `μ` (`i` for parametrized
    /// extensions, `-i` for their adjoints, `z` for Shtraus extensions).
    pub fn resolvent_at_probe(&self, x: &HVec, tol: &TolerancePolicy) -> Result<HVec> {
        let (a, proj) = self.probe_split(x, tol)?;
        let c: Vec<C64> = a.iter().map(|v| v / self.probe.gamma).collect();
        let h = self.model.resolvent_solve(self.probe.mu.conj(), &x.minus(&proj), tol)?;
        Ok(self.eval(&h, &c, tol)?.0)
    }

    pub fn probe_point(&self) -> C64 {
        self.probe.mu
    }

    /// Splits a domain vector given with its image into `(h, c)`; the
    /// decomposition is unique because `dom S ∩ span d_k = {0}`.
    pub fn decompose(&self, f: &HVec, tf: &HVec, tol: &TolerancePolicy) -> Result<(Vec<EvGeoSeq>, Vec<C64>)> {
        let g = tf.axpy(-self.probe.mu.conj(), f);
        let (a, proj) = self.probe_split(&g, tol)?;
        let c = a.iter().map(|v| v / self.probe.gamma).collect();
        let h = self.model.resolvent_solve(self.probe.mu.conj(), &g.minus(&proj), tol)?;
        Ok((h, c))
    }
}

/// Cayley transform `Y_λ = (T - λ)(T - λ̄)^{-1}` in explicit form:
/// `Y ψ = U_λ (ψ - P_{N_λ} ψ) + M P_{N_λ} ψ` with `U_λ = (S - λ)(S - λ̄)^{-1}`
/// the isometry of the model.
#[derive(Debug, Clone)]
pub struct CayleyData {
    pub lambda: C64,
    pub model: Model,
    /// Orthonormal basis of `N_λ`.
    pub basis_n: Vec<HVec>,
    /// Orthonormal basis of `N_λ̄`.
    pub basis_nbar: Vec<HVec>,
    /// Parameter block `N_λ → N_λ̄`.
    pub m: CMat,
}

/// Available at the point where the extension is parametrized: `λ = i` for
/// parametrized extensions and `λ = z` for Shtraus extensions.
pub fn cayley(ext: &ExtensionOp, lambda: C64, tol: &TolerancePolicy) -> Result<CayleyData> {
    let nat = ext
        .natural
        .as_ref()
        .ok_or_else(|| Error::UnsupportedPoint("Cayley data of an adjoint extension".into()))?;
    if (nat.lambda - lambda).norm() > tol.eq_tol * lambda.norm().max(1.0) {
        return Err(Error::UnsupportedPoint(format!("lambda = {lambda}, extension parametrized at {}", nat.lambda)));
    }
    Ok(CayleyData {
        lambda: nat.lambda,
        model: ext.model.clone(),
        basis_n: nat.basis_n.clone(),
        basis_nbar: nat.basis_nbar.clone(),
        m: nat.m.clone(),
    })
}

impl CayleyData {
    pub fn apply(&self, psi: &HVec, tol: &TolerancePolicy) -> Result<HVec> {
        let c = symop::coords(&self.basis_n, psi);
        let rest = psi.minus(&lincomb(&self.basis_n, c.iter().copied()));
        let k = self.model.resolvent_solve(self.lambda.conj(), &rest, tol)?;
        let iso = HVec::from_chans(k.iter().map(|s| s.apply_affine(I - self.lambda, I + self.lambda)).collect());
        let par = lincomb(&self.basis_nbar, (&self.m * c).iter().copied());
        Ok(self.model.embed(iso).plus(&par))
    }

    /// `||D_Y ψ||^2 = ||ψ||^2 - ||Y ψ||^2`.
    pub fn defect_norm_sq(&self, psi: &HVec, tol: &TolerancePolicy) -> Result<f64> {
        let y = self.apply(psi, tol)?;
        Ok(psi.inner(psi).re - y.inner(&y).re)
    }
}

/// Verdict on whether `ran(I - Y) = L_{-i}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityCert {
    pub regular: bool,
    /// `sigma_min(I - Y)`; infinite when `L = {0}`.
    pub sigma_min: f64,
    /// Exact witness for structured parameters.
    #[serde(default)]
    pub certificate: Option<SeqCertificate>,
}

pub fn regularity_cert(dd: &DefectData, param: &ExtensionParam, tol: &TolerancePolicy) -> RegularityCert {
    if dd.p == 0 {
        return RegularityCert { regular: true, sigma_min: f64::INFINITY, certificate: None };
    }
    let y = param.y(dd);
    let s = matkit::sigma_min(&(matkit::identity::<f64>(dd.p) - y));
    RegularityCert { regular: s >= tol.rank_tol, sigma_min: s, certificate: None }
}

/// Random admissible unitary parameter, rejecting draws whose admissibility
/// margin is below `1e-6`.
pub fn random_admissible_unitary<R: Rng + ?Sized>(dd: &DefectData, rng: &mut R, tol: &TolerancePolicy) -> Result<ExtensionParam> {
    if dd.n_plus != dd.n_minus {
        return Err(Error::DimensionMismatch("unequal deficiency indices admit no unitary parameter".into()));
    }
    random_admissible(dd, rng, tol, ParamKind::Unitary)
}

pub fn random_admissible_contraction<R: Rng + ?Sized>(dd: &DefectData, rng: &mut R, tol: &TolerancePolicy) -> Result<ExtensionParam> {
    random_admissible(dd, rng, tol, ParamKind::Contraction)
}

pub const REJECTION_MARGIN: f64 = 1e-6;

fn random_admissible<R: Rng + ?Sized>(dd: &DefectData, rng: &mut R, tol: &TolerancePolicy, kind: ParamKind) -> Result<ExtensionParam> {
    for _ in 0..1000 {
        let u = match kind {
            ParamKind::Unitary => random::unitary(dd.n_plus, rng),
            ParamKind::Contraction => random::contraction(dd.n_minus, dd.n_plus, rng),
        };
        match ExtensionParam::new(dd, u, kind, tol) {
            Ok(p) if p.admissibility.margin() >= REJECTION_MARGIN => return Ok(p),
            Ok(_) | Err(Error::Inadmissible(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Inadmissible(0.0))
}

/// Scales `v` to unit norm; used to build test vectors of comparable size.
pub fn normalized(v: &HVec) -> HVec {
    let n = v.norm();
    if n == 0.0 {
        v.clone()
    } else {
        v.scaled(ONE / n)
    }
}
