//! Compressions `Ŝ_0 = P_{H_0} Ŝ ↾ (dom Ŝ ∩ H_0)` of parametrized
//! extensions, computed by a parameter-level route and a vector-level route,
//! plus the contraction-range predicates and the block-contraction calculus
//! the parameter route rests on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extenders::{adjoint_extension, defect_op, pinv_op, ExtKind, ExtensionOp, ExtensionParam};
use crate::matkit::{self, serde_cmat, subspace_meet, TolerancePolicy};
use crate::seqspace::{solve_affine_shift, AffineSolution, CertKind, EvGeoSeq, SeqCertificate};
use crate::symop::{self, DefectData, HVec, I};
use crate::synthesizer::StructuredBlocks;
use crate::{CMat, CSub, C64};

const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// `ker(P_{L_{-i}} U - V_i P_{L_i})` and its adjoint counterpart, in
/// deficiency coordinates (columns are orthonormal).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntersectionKernel {
    #[serde(with = "serde_cmat")]
    pub ker_i: CMat,
    #[serde(with = "serde_cmat")]
    pub ker_minus_i: CMat,
    /// `max_j |<(I - U) φ, l_j>| / |φ|` over the kernel basis: zero when
    /// `(I - U) ker_i ⊆ H_0`.
    pub h0_residual: f64,
    /// Same for `(I - U^H) ker_minus_i`.
    pub h0_residual_adjoint: f64,
}

pub fn intersection_kernels(dd: &DefectData, param: &ExtensionParam, tol: &TolerancePolicy) -> Result<IntersectionKernel> {
    let p = dd.p;
    let u = &param.u;
    let mut a = u.rows(0, p).into_owned();
    let pivot = a.view((0, 0), (p, p)) - &dd.v_i;
    a.view_mut((0, 0), (p, p)).copy_from(&pivot);
    let mut b = u.adjoint().rows(0, p).into_owned();
    let pivot = b.view((0, 0), (p, p)) - dd.v_minus_i();
    b.view_mut((0, 0), (p, p)).copy_from(&pivot);
    let ker_i = kernel_of(&a, dd.n_plus, tol);
    let ker_minus_i = kernel_of(&b, dd.n_minus, tol);
    let uphi = symop::combine(&dd.basis_nmi, &(u * &ker_i));
    let phi = symop::combine(&dd.basis_ni, &ker_i);
    let f: Vec<HVec> = phi.iter().zip(&uphi).map(|(x, y)| x.minus(y)).collect();
    let uh_psi = symop::combine(&dd.basis_ni, &(u.adjoint() * &ker_minus_i));
    let psi = symop::combine(&dd.basis_nmi, &ker_minus_i);
    let g: Vec<HVec> = psi.iter().zip(&uh_psi).map(|(x, y)| x.minus(y)).collect();
    Ok(IntersectionKernel {
        h0_residual: l_leak(&f, &dd.basis_l),
        h0_residual_adjoint: l_leak(&g, &dd.basis_l),
        ker_i,
        ker_minus_i,
    })
}

fn kernel_of(a: &CMat, n: usize, tol: &TolerancePolicy) -> CMat {
    if a.nrows() == 0 {
        return matkit::identity(n);
    }
    matkit::null_basis(a, tol)
}

fn l_leak(vs: &[HVec], l: &[HVec]) -> f64 {
    vs.iter()
        .flat_map(|v| l.iter().map(move |w| v.inner(w).norm()))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Schur complement of the parameter in the adapted splitting.
    Schur,
    /// Block formula in terms of `(Y, M, G, X)`.
    Blocks,
    /// Vector-level intersection `dom Ŝ ∩ H_0`.
    Direct,
    /// Block formula with a structured `Y` in `ℓ²(ℕ)`.
    Structured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Classification {
    pub equals_s0: bool,
    pub symmetric: bool,
    pub selfadjoint: bool,
    pub dissipative: bool,
    pub maximal_dissipative: bool,
    pub dual_pair_adjoint: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CompressionResiduals {
    /// `max |<U_0 f, g> - <f, U_{*0} g>|` over orthonormal domain bases.
    pub duality: f64,
    /// `|B^H U_0^H U_0 B - I|` on `dom U_0`.
    pub isometry: f64,
    /// `|U_{*0} U_0 B - B|` on `dom U_0`.
    pub inverse: f64,
}

/// `U_0 : dom U_0 ⊆ N'_i → N'_{-i}` and `U_{*0} : dom U_{*0} ⊆ N'_{-i} → N'_i`
/// in the semi-deficiency coordinates of [`DefectData`]. Both matrices act
/// as zero on the orthogonal complement of their domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompressionReport {
    pub route: Route,
    pub dom_u0: CSub,
    #[serde(with = "serde_cmat")]
    pub u0: CMat,
    pub dom_ustar0: CSub,
    #[serde(with = "serde_cmat")]
    pub ustar0: CMat,
    pub classification: Classification,
    /// `(dim N_i(Ŝ_0), dim N_{-i}(Ŝ_0))`.
    pub deficiency_of_compression: (usize, usize),
    pub residuals: CompressionResiduals,
}

impl CompressionReport {
    /// Builds the report from domains and restricted maps; `u0` and
    /// `ustar0` are replaced by their compositions with the domain
    /// projectors.
    pub fn assemble(route: Route, dom_u0: CSub, u0: CMat, dom_ustar0: CSub, ustar0: CMat, tol: &TolerancePolicy) -> Self {
        let u0 = &u0 * dom_u0.projector();
        let ustar0 = &ustar0 * dom_ustar0.projector();
        let (np, nmp) = (dom_u0.ambient_dim, dom_ustar0.ambient_dim);
        let b = &dom_u0.basis;
        let bs = &dom_ustar0.basis;
        let ub = &u0 * b;
        let d = b.ncols();
        let isometry = matkit::op_norm(&(ub.adjoint() * &ub - matkit::identity::<f64>(d)));
        let duality = max_abs(&(bs.adjoint() * &u0 * b - (&ustar0 * bs).adjoint() * b));
        let inverse = matkit::op_norm(&(&ustar0 * &ub - b));
        let rank_u0 = if d == 0 { 0 } else { matkit::rank(&ub, tol) };
        let norm_u0 = matkit::op_norm(&ub);
        let symmetric = isometry < tol.eq_tol;
        let full = d == np;
        let classification = Classification {
            equals_s0: d == 0,
            symmetric,
            selfadjoint: symmetric && full && rank_u0 == nmp,
            dissipative: norm_u0 <= 1.0 + tol.eq_tol,
            maximal_dissipative: norm_u0 <= 1.0 + tol.eq_tol && full,
            dual_pair_adjoint: full && dom_ustar0.dim() == nmp && matkit::op_norm(&(&ustar0 - u0.adjoint())) < tol.eq_tol,
        };
        CompressionReport {
            route,
            deficiency_of_compression: (np - d, nmp - rank_u0),
            residuals: CompressionResiduals { duality, isometry: if d == 0 { 0.0 } else { isometry }, inverse },
            classification,
            dom_u0,
            u0,
            dom_ustar0,
            ustar0,
        }
    }

    /// Largest entrywise difference of the two reports' matrices, or
    /// infinity when their domains differ.
    pub fn discrepancy(&self, other: &CompressionReport, tol: &TolerancePolicy) -> f64 {
        if !self.dom_u0.same_as(&other.dom_u0, tol) || !self.dom_ustar0.same_as(&other.dom_ustar0, tol) {
            return f64::INFINITY;
        }
        max_abs(&(&self.u0 - &other.u0)).max(max_abs(&(&self.ustar0 - &other.ustar0)))
    }
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Parameter route: `U_0 = U_22 - U_21 (U_11 - V_i)^{-1} U_12` and
/// `U_{*0} = U_22^H - U_12^H (U_11^H - V_{-i})^{-1} U_21^H` on the whole
/// semi-deficiency spaces.
pub fn compress(dd: &DefectData, param: &ExtensionParam, tol: &TolerancePolicy) -> Result<CompressionReport> {
    let p = dd.p;
    let u0 = matkit::schur_complement(&param.u, (p, p), &dd.v_i, tol)?;
    let ustar0 = matkit::schur_complement(&param.u.adjoint(), (p, p), &dd.v_minus_i(), tol)?;
    Ok(CompressionReport::assemble(
        Route::Schur,
        CSub::full(dd.np_plus),
        u0,
        CSub::full(dd.np_minus),
        ustar0,
        tol,
    ))
}

/// Block route: `U_0 = G[-Y^H + D_Y (I - Y)^{-1} D_{Y*}] M + D_{G*} X D_M`
/// on `{φ' : D_{Y*} M φ' ∈ ran(I - Y)}`, and the mirrored formula for
/// `U_{*0}`.
pub fn compress_blocks(dd: &DefectData, param: &ExtensionParam, tol: &TolerancePolicy) -> Result<CompressionReport> {
    let b = param.blocks_or_decompose(dd, tol)?;
    let p = dd.p;
    let id = matkit::identity::<f64>(p);
    let (dy, dys) = matkit::defect_pair(&b.y, tol)?;
    let dm = defect_op(&b.m, tol)?;
    let dgs = defect_op(&b.g.adjoint(), tol)?;
    let iy = matkit::solve_square(&(&id - &b.y), &(&dys * &b.m), tol)?;
    let u0 = &b.g * (-b.y.adjoint() * &b.m + &dy * iy) + &dgs * &b.x * &dm;
    let iys = matkit::solve_square(&(&id - b.y.adjoint()), &(&dy * b.g.adjoint()), tol)?;
    let ustar0 = b.m.adjoint() * (-(&b.y * b.g.adjoint()) + &dys * iys) + &dm * b.x.adjoint() * &dgs;
    Ok(CompressionReport::assemble(
        Route::Blocks,
        CSub::full(dd.np_plus),
        u0,
        CSub::full(dd.np_minus),
        ustar0,
        tol,
    ))
}

/// Vector route: intersects `dom Ŝ` with `H_0` by the linear conditions
/// `<(I - U)φ, l_j> = 0`, projects the action onto `H_0` and reads off
/// `U_0` from `P_{N'_i}(Ŝ_0 + i)F = 2i φ'` and
/// `P_{N'_{-i}}(Ŝ_0 - i)F = 2i U_0 φ'`.
pub fn compress_direct(dd: &DefectData, ext: &ExtensionOp, tol: &TolerancePolicy) -> Result<CompressionReport> {
    let param = match (ext.kind, &ext.param) {
        (ExtKind::Selfadjoint | ExtKind::MaximalDissipative, Some(p)) => p,
        _ => return Err(Error::PreconditionViolated("direct compression needs a parametrized extension".into())),
    };
    let nip = dd.nip_vectors();
    let nmip = dd.nmip_vectors();
    let (dom_u0, u0) = direct_side(dd, ext, &nip, &nmip, 2.0 * I, tol)?;
    let adj = adjoint_extension(dd, param)?;
    let (dom_ustar0, ustar0) = direct_side(dd, &adj, &nmip, &nip, -2.0 * I, tol)?;
    Ok(CompressionReport::assemble(Route::Direct, dom_u0, u0, dom_ustar0, ustar0, tol))
}

/// For `T(f_S + sum c_k d_k)`: `P_from((T_0 + s i)F) = γ φ'` and
/// `P_to((T_0 - s i)F) = γ U φ'`, where `s = γ / 2i`.
fn direct_side(
    dd: &DefectData,
    ext: &ExtensionOp,
    from: &[HVec],
    to: &[HVec],
    gamma: C64,
    tol: &TolerancePolicy,
) -> Result<(CSub, CMat)> {
    let model = &dd.model;
    let n = ext.defect_count();
    let c = CMat::from_fn(dd.basis_l.len(), n, |j, k| ext.defect_vecs[k].inner(&dd.basis_l[j]));
    let ker = kernel_of(&c, n, tol);
    let s = gamma / (2.0 * I);
    let mut phi = CMat::zeros(from.len(), ker.ncols());
    let mut psi = CMat::zeros(to.len(), ker.ncols());
    for j in 0..ker.ncols() {
        let coeffs: Vec<C64> = ker.column(j).iter().copied().collect();
        let f = symop::lincomb(&ext.defect_vecs, coeffs.iter().copied());
        let tf = symop::lincomb(&ext.defect_images, coeffs.iter().copied());
        let t0f = model.project_h0(&tf, tol)?;
        let plus = t0f.axpy(s * I, &f);
        let minus = t0f.axpy(-s * I, &f);
        phi.set_column(j, &(symop::coords(from, &plus) / gamma).column(0));
        psi.set_column(j, &(symop::coords(to, &minus) / gamma).column(0));
    }
    let dom = CSub::span(&phi, tol);
    let map = if phi.ncols() == 0 { CMat::zeros(to.len(), from.len()) } else { psi * pinv_op(&phi, tol) };
    Ok((dom, map))
}

/// Block contraction of the `2 × 2` parametrization together with the
/// unitarity verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockParam {
    #[serde(with = "serde_cmat")]
    pub u: CMat,
    pub unitary: bool,
}

/// Projector onto `ran D` computed from `D^2`, whose small eigenvalues are
/// not inflated by the square root.
fn defect_range(z: &CMat, tol: &TolerancePolicy) -> CSub {
    let n = z.ncols();
    let d2 = matkit::identity::<f64>(n) - z.adjoint() * z;
    range_of(&d2, n, tol)
}

fn range_of(a: &CMat, n: usize, tol: &TolerancePolicy) -> CSub {
    if a.ncols() == 0 || a.nrows() == 0 {
        return CSub::zero(n);
    }
    let top = matkit::op_norm(a);
    // Absolute threshold: the operands are contractions of norm about one.
    if top <= tol.rank_tol {
        return CSub::zero(n);
    }
    CSub::span(a, tol)
}

fn ensure_contraction(m: &CMat, name: &str, tol: &TolerancePolicy) -> Result<()> {
    matkit::ensure_finite(m)?;
    let nrm = matkit::op_norm(m);
    if nrm > 1.0 + tol.eq_tol {
        return Err(Error::PreconditionViolated(format!("{name} has norm {nrm}")));
    }
    Ok(())
}

/// `[[A, D_{A*} M], [K D_A, -K A^H M + D_{K*} X D_M]]` for
/// `A : H → K`, `M : M → D_{A*}`, `K : D_A → N`, `X : D_M → D_{K*}`.
///
/// `M` and `K` are checked against the defect spaces of `A`; `X` enters only
/// through `D_{K*} X D_M`, so components outside those spaces are inert.
pub fn block_parametrize(a: &CMat, m: &CMat, k: &CMat, x: &CMat, tol: &TolerancePolicy) -> Result<BlockParam> {
    let (kd, hd) = a.shape();
    let md = m.ncols();
    let nd = k.nrows();
    if m.nrows() != kd || k.ncols() != hd || x.shape() != (nd, md) {
        return Err(Error::RangeCompatibility(format!(
            "A {:?}, M {:?}, K {:?}, X {:?}",
            a.shape(),
            m.shape(),
            k.shape(),
            x.shape()
        )));
    }
    for (mat, name) in [(a, "A"), (m, "M"), (k, "K"), (x, "X")] {
        ensure_contraction(mat, name, tol)?;
    }
    let ran_das = defect_range(&a.adjoint(), tol);
    let ran_da = defect_range(a, tol);
    let m_out = m - ran_das.projector() * m;
    if max_abs(&m_out) > tol.eq_tol {
        return Err(Error::RangeCompatibility("M leaves the defect space of A^H".into()));
    }
    let k_out = k - k * ran_da.projector();
    if max_abs(&k_out) > tol.eq_tol {
        return Err(Error::RangeCompatibility("K does not vanish off the defect space of A".into()));
    }
    let (da, das) = matkit::defect_pair(a, tol)?;
    let dm = defect_op(m, tol)?;
    let dks = defect_op(&k.adjoint(), tol)?;
    let mut u = CMat::zeros(kd + nd, hd + md);
    u.view_mut((0, 0), (kd, hd)).copy_from(a);
    u.view_mut((0, hd), (kd, md)).copy_from(&(&das * m));
    u.view_mut((kd, 0), (nd, hd)).copy_from(&(k * &da));
    u.view_mut((kd, hd), (nd, md)).copy_from(&(-(k * a.adjoint() * m) + &dks * x * &dm));
    let nrm = matkit::op_norm(&u);
    if nrm > 1.0 + tol.eq_tol {
        return Err(Error::NotAContraction(nrm));
    }
    // Unitarity: D_X D_M = 0, D_K D_A = 0, D_{X*} D_{K*} = 0, D_{M*} D_{A*} = 0,
    // with X cut down to an operator D_M → D_{K*}.
    let x_eff = defect_range(&k.adjoint(), tol).projector() * x * defect_range(m, tol).projector();
    let sq = |z: &CMat| matkit::identity::<f64>(z.ncols()) - z.adjoint() * z;
    let small = |p: &CMat| matkit::op_norm(p) < tol.eq_tol;
    let unitary = small(&(sq(&x_eff) * &dm * &dm))
        && small(&(sq(k) * &da * &da))
        && small(&(sq(&x_eff.adjoint()) * &dks * &dks))
        && small(&(sq(&m.adjoint()) * &das * &das));
    Ok(BlockParam { u, unitary })
}

/// Both sides of the contraction identity
/// `|φ|^2 - |Wφ|^2 = |Mφ|^2 - |FMφ|^2 + |D_X D_M φ|^2 + |(D_K F M - K^H X D_M)φ|^2`
/// with `W φ = K F M φ + D_{K*} X D_M φ`, evaluated on the supplied pairs
/// `(φ, F M φ)`. Returns the largest absolute discrepancy.
pub fn l1_identity_check(k: &CMat, pairs: &[(CMat, CMat)], m: &CMat, x: &CMat, tol: &TolerancePolicy) -> Result<f64> {
    for (mat, name) in [(k, "K"), (m, "M"), (x, "X")] {
        ensure_contraction(mat, name, tol)?;
    }
    if x.shape() != (k.nrows(), m.ncols()) {
        return Err(Error::DimensionMismatch(format!("X {:?} for K {:?}, M {:?}", x.shape(), k.shape(), m.shape())));
    }
    let dm = defect_op(m, tol)?;
    let dks = defect_op(&k.adjoint(), tol)?;
    let dk = defect_op(k, tol)?;
    let dx = defect_op(x, tol)?;
    let mut worst: f64 = 0.0;
    for (phi, fm) in pairs {
        if phi.nrows() != m.ncols() || fm.nrows() != k.ncols() {
            return Err(Error::DimensionMismatch("pair does not match M and K".into()));
        }
        let mphi = m * phi;
        if fm.norm() > mphi.norm() * (1.0 + tol.eq_tol) + tol.eq_tol {
            return Err(Error::PreconditionViolated(format!("|FMφ| = {} exceeds |Mφ| = {}", fm.norm(), mphi.norm())));
        }
        let dmphi = &dm * phi;
        let w = k * fm + &dks * x * &dmphi;
        let lhs = phi.norm_squared() - w.norm_squared();
        let rhs = mphi.norm_squared() - fm.norm_squared() + (&dx * &dmphi).norm_squared() + (&dk * fm - k.adjoint() * x * &dmphi).norm_squared();
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// Flags of the contraction-range calculus for one contraction `Y`.
///
/// Finite inputs fill the subspace fields and numerical residuals; structured
/// inputs fill the flags that exact certificates decide and leave the rest
/// `None`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RangePredicateReport {
    pub dim: Option<usize>,
    pub ker_trivial: bool,
    /// `sigma_min(I - Y)` for finite `Y`.
    pub sigma_min: Option<f64>,
    pub omega_y_trivial: bool,
    pub omega_ystar_trivial: bool,
    pub omega_y: Option<CSub>,
    pub omega_ystar: Option<CSub>,
    /// `ran D_{Y*} + ran(I-Y) = ran D_Y + ran(I-Y^H) = ran(I - Y_R)^{1/2}`.
    pub sums_equal: Option<bool>,
    /// `Ω_Y = {0} ⟺ Ω_{Y*} = {0}`.
    pub trivial_together: bool,
    /// `(I - Y^H)(I - Y)^{-1} Ω_Y = Ω_{Y*}`.
    pub omega_map_holds: Option<bool>,
    /// `max | |T h| - |h| |` with `T = -Y^H + D_Y (I-Y)^{-1} D_{Y*}` over
    /// unit `h` with `D_{Y*} h ∈ ran(I - Y)`.
    pub norm_identity_residual: Option<f64>,
    /// `ran D_{Y*} ⊆ ran(I - Y)`.
    pub dys_in_ran: Option<bool>,
    /// `ran D_Y ⊆ ran(I - Y^H)`.
    pub dy_in_ran_adj: Option<bool>,
    /// `ran(I - Y) ⊆ ran(I - Y^H)`.
    pub ran_in_ran_adj: Option<bool>,
    /// `ran D_Y^2 ⊆ ran(I - Y^H) ⟺ ran(I - Y) ⊆ ran(I - Y^H)`.
    pub last_equivalence: Option<bool>,
    #[serde(default)]
    pub certificates: Vec<NamedCertificate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedCertificate {
    pub claim: String,
    pub certificate: SeqCertificate,
}

pub fn range_predicates(y: &CMat, tol: &TolerancePolicy) -> Result<RangePredicateReport> {
    let n = y.nrows();
    if y.ncols() != n {
        return Err(Error::DimensionMismatch(format!("Y is {:?}", y.shape())));
    }
    let nrm = matkit::op_norm(y);
    if nrm > 1.0 + tol.eq_tol {
        return Err(Error::NotAContraction(nrm));
    }
    let id = matkit::identity::<f64>(n);
    let iy = &id - y;
    let iys = iy.adjoint();
    let smin = matkit::sigma_min(&iy);
    let ker_trivial = smin >= tol.rank_tol;
    let ran_iy = range_of(&iy, n, tol);
    let ran_iys = range_of(&iys, n, tol);
    let ran_dy = defect_range(y, tol);
    let ran_dys = defect_range(&y.adjoint(), tol);
    let yr = (y + y.adjoint()) * C64::new(0.5, 0.0);
    let ran_yr = range_of(&(&id - yr), n, tol);
    let omega_y = subspace_meet(&ran_iy, &ran_dys, tol)?;
    let omega_ystar = subspace_meet(&ran_iys, &ran_dy, tol)?;
    let s1 = ran_dys.sum(&ran_iy, tol)?;
    let s2 = ran_dy.sum(&ran_iys, tol)?;
    let sums_equal = s1.same_as(&s2, tol) && s1.same_as(&ran_yr, tol);
    let (omega_map_holds, norm_identity_residual) = if ker_trivial {
        let inv = matkit::solve_square(&iy, &id, tol)?;
        let img = omega_y.image(&(&iys * &inv), tol);
        let (dy, dys) = matkit::defect_pair(y, tol)?;
        let t = -y.adjoint() + &dy * &inv * &dys;
        // With I - Y invertible every h qualifies; the identity is that T is
        // an isometry.
        let res = matkit::op_norm(&(t.adjoint() * &t - &id));
        (Some(img.same_as(&omega_ystar, tol)), Some(res))
    } else {
        (None, None)
    };
    let dys_in_ran = ran_iy.contains(&ran_dys, tol);
    let dy_in_ran_adj = ran_iys.contains(&ran_dy, tol);
    let ran_in_ran_adj = ran_iys.contains(&ran_iy, tol);
    let dy2 = range_of(&(&id - y.adjoint() * y), n, tol);
    let last_equivalence = ran_iys.contains(&dy2, tol) == ran_in_ran_adj;
    Ok(RangePredicateReport {
        dim: Some(n),
        ker_trivial,
        sigma_min: Some(smin),
        omega_y_trivial: omega_y.is_zero(),
        omega_ystar_trivial: omega_ystar.is_zero(),
        trivial_together: omega_y.is_zero() == omega_ystar.is_zero(),
        omega_y: Some(omega_y),
        omega_ystar: Some(omega_ystar),
        sums_equal: Some(sums_equal),
        omega_map_holds,
        norm_identity_residual,
        dys_in_ran: Some(dys_in_ran),
        dy_in_ran_adj: Some(dy_in_ran_adj),
        ran_in_ran_adj: Some(ran_in_ran_adj),
        last_equivalence: Some(last_equivalence),
        certificates: Vec::new(),
    })
}

/// `e_0 ∉ ran(I - W_+)` in `ℓ²(ℕ)`: the equation forces the constant tail
/// `x_k = 1`.
pub fn forward_shift_certificate() -> SeqCertificate {
    let rhs = EvGeoSeq::unit(0).one_sided().expect("e_0 is one-sided");
    let exact = TolerancePolicy { rank_tol: 0.0, eq_tol: 0.0 };
    match solve_affine_shift(ONE, -ONE, &rhs, &exact) {
        Ok(AffineSolution::NonMember(c)) => c,
        other => unreachable!("e_0 is not in ran(I - W_+): {other:?}"),
    }
}

/// `ker(I - W_+^H) = {0}`: a kernel vector is constant on `k >= 0`.
pub fn backward_kernel_certificate() -> SeqCertificate {
    crate::seqspace::backward_kernel_trivial(ONE, -ONE)
}

/// Predicates for `Y = W_+^{(forward)} ⊕ (W_+^H)^{(backward)} ⊕ unitary`,
/// decided by exact certificates for the shift channels.
pub fn range_predicates_structured(forward: usize, backward: usize, unitary: &CMat, tol: &TolerancePolicy) -> Result<RangePredicateReport> {
    let fwd = forward_shift_certificate();
    let mut certificates = Vec::new();
    let mut ker_trivial = true;
    if forward > 0 {
        // (I - W_+)x = 0 forces x_0 = 0 and then every x_k = 0.
        certificates.push(NamedCertificate { claim: "ker(I - W+) = {0}".into(), certificate: trivial_kernel() });
    }
    if backward > 0 {
        let bwd = backward_kernel_certificate();
        ker_trivial &= bwd.kind == CertKind::NonMember;
        certificates.push(NamedCertificate { claim: "ker(I - W+^H) = {0}".into(), certificate: bwd });
    }
    if forward + backward > 0 {
        certificates.push(NamedCertificate { claim: "e0 not in ran(I - W+)".into(), certificate: fwd });
    }
    let n = unitary.nrows();
    if n > 0 {
        ker_trivial &= matkit::sigma_min(&(matkit::identity::<f64>(n) - unitary)) >= tol.rank_tol;
    }
    let fwd_nonmember = fwd.kind == CertKind::NonMember;
    // Forward channels: D_{Y*} = P_{e0}, D_Y = 0. Backward channels:
    // D_Y = P_{e0}, D_{Y*} = 0, and I - Y^H = I - W_+ there. The unitary
    // summand has no defect. A nonzero vector of ran D_{Y*} (resp. ran D_Y)
    // has an e0 component in some channel, which the forward certificate
    // excludes from ran(I - W_+); channels do not interact.
    let omega_y_trivial = forward == 0 || fwd_nonmember;
    let omega_ystar_trivial = backward == 0 || fwd_nonmember;
    Ok(RangePredicateReport {
        dim: None,
        ker_trivial,
        sigma_min: None,
        omega_y_trivial,
        omega_ystar_trivial,
        omega_y: None,
        omega_ystar: None,
        sums_equal: None,
        trivial_together: omega_y_trivial == omega_ystar_trivial,
        omega_map_holds: None,
        norm_identity_residual: None,
        dys_in_ran: Some(forward == 0),
        dy_in_ran_adj: Some(backward == 0),
        ran_in_ran_adj: None,
        last_equivalence: None,
        certificates,
    })
}

/// Compression of a parameter with structured `Y`. Since
/// `Ω_Y = Ω_{Y*} = {0}`, `dom U_0 = ker M` with `U_0 = D_{G*} X` there and
/// `dom U_{*0} = ker G^H` with `U_{*0} = D_M X^H` there.
pub fn compress_structured(b: &StructuredBlocks, tol: &TolerancePolicy) -> Result<CompressionReport> {
    let f = &b.y.facts;
    if !(f.ker_trivial && f.omega_trivial && f.omega_star_trivial) {
        return Err(Error::PreconditionViolated("structured Y lacks its certified facts".into()));
    }
    let (np, nmp) = (b.np_plus(), b.np_minus());
    let dom_u0 = CSub { ambient_dim: np, basis: kernel_of(&b.m, np, tol) };
    let dom_ustar0 = CSub { ambient_dim: nmp, basis: kernel_of(&b.g.adjoint(), nmp, tol) };
    let dm = defect_op(&b.m, tol)?;
    let dgs = defect_op(&b.g.adjoint(), tol)?;
    let u0 = &dgs * &b.x;
    let ustar0 = &dm * b.x.adjoint();
    Ok(CompressionReport::assemble(Route::Structured, dom_u0, u0, dom_ustar0, ustar0, tol))
}

fn trivial_kernel() -> SeqCertificate {
    SeqCertificate { kind: CertKind::NonMember, witness_ratio: None, obstruction: ONE }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extenders::{build_extension, random_admissible_contraction, random_admissible_unitary, ParamKind};
    use crate::random;
    use crate::symop::Model;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tol() -> TolerancePolicy {
        TolerancePolicy::default()
    }

    fn models() -> Vec<Model> {
        vec![
            Model::restricted(1, vec![HVec::unit(1, 0, 2)]).unwrap(),
            Model::exit(1, 1).unwrap(),
            Model::exit(2, 1).unwrap(),
            Model::exit(2, 2).unwrap(),
            Model::restricted(2, vec![HVec::unit(2, 0, 3), HVec::unit(2, 1, -2).plus(&HVec::unit(2, 0, 1))]).unwrap(),
        ]
    }

    fn swap() -> CMat {
        let mut u = CMat::zeros(2, 2);
        u[(0, 1)] = ONE;
        u[(1, 0)] = ONE;
        u
    }

    #[test]
    fn swap_example() {
        let t = tol();
        let dd = DefectData::new(&Model::exit(1, 1).unwrap(), &t).unwrap();
        assert!((dd.v_i[(0, 0)] - ONE).norm() < 1e-14);
        let p = ExtensionParam::new(&dd, swap(), ParamKind::Unitary, &t).unwrap();
        let k = intersection_kernels(&dd, &p, &t).unwrap();
        assert_eq!(k.ker_i.ncols(), 1);
        let v = k.ker_i.column(0);
        assert!((v[0] - v[1]).norm() < 1e-12);
        assert!(k.h0_residual < 1e-12);
        let r = compress(&dd, &p, &t).unwrap();
        assert!((r.u0[(0, 0)] - ONE).norm() < 1e-12);
        assert!(r.classification.selfadjoint);
        let ext = build_extension(&dd, &p).unwrap();
        let d = compress_direct(&dd, &ext, &t).unwrap();
        assert!(r.discrepancy(&d, &t) < 1e-10);
    }

    #[test]
    fn zero_parameter_gives_dual_pair() {
        let t = tol();
        let dd = DefectData::new(&Model::exit(1, 1).unwrap(), &t).unwrap();
        let p = ExtensionParam::new(&dd, CMat::zeros(2, 2), ParamKind::Contraction, &t).unwrap();
        let r = compress(&dd, &p, &t).unwrap();
        assert!(r.u0.norm() < 1e-14 && r.ustar0.norm() < 1e-14);
        assert!(r.classification.maximal_dissipative && r.classification.dual_pair_adjoint);
        assert!(!r.classification.selfadjoint);
    }

    #[test]
    fn block_diagonal_decouples() {
        let t = tol();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dd = DefectData::new(&Model::exit(2, 1).unwrap(), &t).unwrap();
        let u22 = random::unitary(2, &mut rng);
        let mut u = CMat::zeros(3, 3);
        u[(0, 0)] = -dd.v_i[(0, 0)];
        u.view_mut((1, 1), (2, 2)).copy_from(&u22);
        let p = ExtensionParam::new(&dd, u, ParamKind::Unitary, &t).unwrap();
        let k = intersection_kernels(&dd, &p, &t).unwrap();
        assert_eq!(k.ker_i.ncols(), 2);
        assert!(k.ker_i.row(0).norm() < 1e-12);
        let r = compress(&dd, &p, &t).unwrap();
        assert!((&r.u0 - u22).norm() < 1e-12);
    }

    #[test]
    fn routes_agree_and_classify() {
        let t = tol();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for model in models() {
            let dd = DefectData::new(&model, &t).unwrap();
            for trial in 0..10 {
                let p = if trial % 2 == 0 {
                    random_admissible_unitary(&dd, &mut rng, &t).unwrap()
                } else {
                    random_admissible_contraction(&dd, &mut rng, &t).unwrap()
                };
                let a = compress(&dd, &p, &t).unwrap();
                let b = compress_blocks(&dd, &p, &t).unwrap();
                let ext = build_extension(&dd, &p).unwrap();
                let c = compress_direct(&dd, &ext, &t).unwrap();
                assert!(a.discrepancy(&b, &t) < 1e-8, "{}", a.discrepancy(&b, &t));
                assert!(a.discrepancy(&c, &t) < 1e-8, "{}", a.discrepancy(&c, &t));
                let k = intersection_kernels(&dd, &p, &t).unwrap();
                assert!(k.h0_residual < 1e-10 && k.h0_residual_adjoint < 1e-10);
                assert!(a.residuals.duality < 1e-9);
                if trial % 2 == 0 {
                    assert!(a.classification.selfadjoint, "{:?}", a.classification);
                    assert!(a.residuals.inverse < 1e-8);
                } else {
                    assert!(a.classification.maximal_dissipative && a.classification.dual_pair_adjoint);
                }
            }
        }
    }

    #[test]
    fn densely_defined_compression_is_the_extension() {
        let t = tol();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dd = DefectData::new(&Model::shift(2).unwrap(), &t).unwrap();
        let p = random_admissible_contraction(&dd, &mut rng, &t).unwrap();
        let ext = build_extension(&dd, &p).unwrap();
        let d = compress_direct(&dd, &ext, &t).unwrap();
        assert!((&d.u0 - &p.u).norm() < 1e-10);
        let r = compress(&dd, &p, &t).unwrap();
        assert!((&r.u0 - &p.u).norm() < 1e-14);
    }

    #[test]
    fn block_parametrize_examples() {
        let t = tol();
        let one = CMat::from_element(1, 1, ONE);
        let zero = CMat::zeros(1, 1);
        let bp = block_parametrize(&zero, &one, &one, &one, &t).unwrap();
        let mut sw = CMat::zeros(2, 2);
        sw[(0, 1)] = ONE;
        sw[(1, 0)] = ONE;
        assert!((&bp.u - sw).norm() < 1e-15);
        assert!(bp.unitary);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random::unitary(2, &mut rng);
        let x = random::contraction(1, 1, &mut rng);
        let bp = block_parametrize(&a, &CMat::zeros(2, 1), &CMat::zeros(1, 2), &x, &t).unwrap();
        assert!((bp.u.view((0, 0), (2, 2)) - &a).norm() < 1e-14);
        assert!((bp.u[(2, 2)] - x[(0, 0)]).norm() < 1e-14);
        assert!(matches!(
            block_parametrize(&a, &CMat::from_element(2, 1, C64::new(0.5, 0.0)), &CMat::zeros(1, 2), &x, &t),
            Err(Error::RangeCompatibility(_))
        ));
    }

    #[test]
    fn l1_scalar_and_isometric_cases() {
        let t = tol();
        let one = CMat::from_element(1, 1, ONE);
        let r = l1_identity_check(&one, &[(one.clone(), one.clone())], &one, &one, &t).unwrap();
        assert!(r < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // K: C^3 → C^4 isometry, M: C^3 → C^2 co-isometry, F: C^2 → C^3
        // isometry, X: D_M (dim 1) → ker K^H (dim 1) isometry.
        let k = random::unitary(4, &mut rng).columns(0, 3).into_owned();
        let m = random::unitary(3, &mut rng).rows(0, 2).into_owned();
        let f = random::unitary(3, &mut rng).columns(0, 2).into_owned();
        let ker_m = matkit::null_basis(&m, &t);
        let ker_kh = matkit::null_basis(&k.adjoint(), &t);
        let x = &ker_kh * ker_m.adjoint();
        for _ in 0..20 {
            let phi = random::gaussian_matrix(3, 1, &mut rng);
            let fm = &f * &m * &phi;
            let w = &k * &fm + defect_op(&k.adjoint(), &t).unwrap() * &x * defect_op(&m, &t).unwrap() * &phi;
            assert!((w.norm() - phi.norm()).abs() < 1e-10);
            assert!(l1_identity_check(&k, &[(phi, fm)], &m, &x, &t).unwrap() < 1e-10);
        }
    }

    #[test]
    fn l1_rejects_expanding_f() {
        let t = tol();
        let one = CMat::from_element(1, 1, ONE);
        let two = CMat::from_element(1, 1, C64::new(2.0, 0.0));
        assert!(matches!(l1_identity_check(&one, &[(one.clone(), two)], &one, &one, &t), Err(Error::PreconditionViolated(_))));
    }

    #[test]
    fn range_predicates_zero_and_random() {
        let t = tol();
        let r = range_predicates(&CMat::zeros(3, 3), &t).unwrap();
        assert!(r.ker_trivial && r.sums_equal == Some(true));
        assert_eq!(r.omega_y.as_ref().unwrap().dim(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for n in 2..6 {
            let y = random::contraction(n, n, &mut rng);
            let r = range_predicates(&y, &t).unwrap();
            assert!(r.trivial_together && r.omega_map_holds == Some(true));
            assert!(r.norm_identity_residual.unwrap() < 1e-9);
        }
    }

    #[test]
    fn structured_certificates_are_exact() {
        let c = forward_shift_certificate();
        assert_eq!(c.kind, CertKind::NonMember);
        assert_eq!(c.witness_ratio, Some(ONE));
        assert_eq!(c.obstruction, ONE);
        let b = backward_kernel_certificate();
        assert_eq!(b.kind, CertKind::NonMember);
        let t = tol();
        let empty = CMat::zeros(0, 0);
        let r = range_predicates_structured(0, 1, &empty, &t).unwrap();
        assert!(r.omega_y_trivial && r.omega_ystar_trivial && r.ker_trivial);
        let r = range_predicates_structured(2, 0, &empty, &t).unwrap();
        assert!(r.omega_y_trivial && r.ker_trivial && r.dys_in_ran == Some(false));
        let r = range_predicates_structured(0, 0, &matkit::identity::<f64>(1), &t).unwrap();
        assert!(!r.ker_trivial);
    }

    #[test]
    fn report_json_round_trip() {
        let t = tol();
        let dd = DefectData::new(&Model::exit(1, 1).unwrap(), &t).unwrap();
        let p = ExtensionParam::new(&dd, swap(), ParamKind::Unitary, &t).unwrap();
        let r = compress(&dd, &p, &t).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        let back: CompressionReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back.classification, r.classification);
        assert!((back.u0 - r.u0).norm() == 0.0);
    }
}
