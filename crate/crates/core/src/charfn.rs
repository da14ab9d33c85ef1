//! Shtraus characteristic function `C_λ(z) : N_λ → N_λ̄` by two independent
//! routes, and the identities it satisfies.
//!
//! Matrices are written in the adapted orthonormal bases of
//! [`AdaptedPair`]: the first `p` basis vectors of `N_λ` span `L_λ`, the
//! first `p` of `N_λ̄` span `L_λ̄`. At `λ = i` the bases coincide with those
//! of [`DefectData`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::compressor;
use crate::error::{Error, Result};
use crate::extenders::{self, ExtensionOp, ExtensionParam, ParamKind};
use crate::matkit::{self, serde_cmat, TolerancePolicy};
use crate::symop::{coords, coords_many, lincomb, orthonormalize, AdaptedPair, DefectData, HVec, Model, I};
use crate::{CMat, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CharFnRoute {
    ViaNz,
    ViaCayley,
}

impl fmt::Display for CharFnRoute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CharFnRoute::ViaNz => "via_nz",
            CharFnRoute::ViaCayley => "via_cayley",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharFnSample {
    pub lambda: C64,
    pub z: C64,
    #[serde(with = "serde_cmat")]
    pub matrix: CMat,
    pub route: CharFnRoute,
    /// Condition number of `P_{N_λ}↾N_z` (via_nz) or of the range system
    /// of the resolvent (via_cayley).
    pub condition: f64,
}

impl CharFnSample {
    /// `|ξ| - ||C||`, nonnegative by the norm bound.
    pub fn bound_slack(&self) -> f64 {
        xi(self.lambda, self.z).norm() - matkit::op_norm(&self.matrix)
    }
}

/// `ξ = (z - λ)/(z - λ̄)`.
pub fn xi(lambda: C64, z: C64) -> C64 {
    (z - lambda) / (z - lambda.conj())
}

fn check_points(lambda: C64, z: C64) -> Result<()> {
    for (name, w) in [("lambda", lambda), ("z", z)] {
        if !(w.im > 0.0) || !w.re.is_finite() || !w.im.is_finite() {
            return Err(Error::UnsupportedPoint(format!("{name} = {w} is not in the open upper half-plane")));
        }
    }
    Ok(())
}

/// Raw deficiency vectors at `w`. At `±i` the finite formulas are used so
/// that the bases agree with [`DefectData`].
fn deficiency(model: &Model, w: C64, tol: &TolerancePolicy) -> Result<Vec<HVec>> {
    if w == I {
        model.deficiency_at_pm_i(1.0)
    } else if w == -I {
        model.deficiency_at_pm_i(-1.0)
    } else {
        model.deficiency_raw(w, tol)
    }
}

/// Adapted orthonormal bases of `N_λ` and `N_λ̄`.
pub fn bases(model: &Model, lambda: C64, tol: &TolerancePolicy) -> Result<AdaptedPair> {
    AdaptedPair::build(model, lambda, deficiency(model, lambda, tol)?, deficiency(model, lambda.conj(), tol)?, tol)
}

/// `ξ [P_{N_λ̄} Φ] [P_{N_λ} Φ]^{-1}` for a basis `Φ` of `N_z`, with the
/// projections taken against the orthonormal lists `on` and `onb`.
fn ratio_formula(on: &[HVec], onb: &[HVec], nz: &[HVec], xi: C64, tol: &TolerancePolicy) -> Result<(CMat, f64)> {
    // Far up the imaginary axis the shift part of N_z has norm ~ sqrt(|z|);
    // normalizing first keeps the rank test scale free.
    let nz: Vec<HVec> = nz.iter().map(extenders::normalized).collect();
    let phi = orthonormalize(&nz, tol)?;
    let a = coords_many(on, &phi);
    let b = coords_many(onb, &phi);
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!("dim N_z = {} but dim N_lambda = {}", a.ncols(), a.nrows())));
    }
    if a.is_empty() {
        return Ok((CMat::zeros(onb.len(), 0), 1.0));
    }
    let (smax, smin) = (matkit::op_norm(&a), matkit::sigma_min(&a));
    let condition = smax / smin;
    if !(smin > tol.rank_tol * smax) {
        return Err(Error::DegenerateProjection(condition));
    }
    // C = ξ b a^{-1}, through a^H C^H = ξ̄ b^H.
    let ct = matkit::solve_square(&a.adjoint(), &(b.adjoint() * xi.conj()), tol)?;
    Ok((ct.adjoint(), condition))
}

/// `C φ = ξ P_{N_λ̄} φ'` where `φ' ∈ N_z` has `P_{N_λ} φ' = φ`.
pub fn charfn_via_nz(model: &Model, lambda: C64, z: C64, tol: &TolerancePolicy) -> Result<CharFnSample> {
    check_points(lambda, z)?;
    let pair = bases(model, lambda, tol)?;
    via_nz_in(&pair, model, z, tol)
}

fn via_nz_in(pair: &AdaptedPair, model: &Model, z: C64, tol: &TolerancePolicy) -> Result<CharFnSample> {
    let lambda = pair.lambda;
    let x = xi(lambda, z);
    let (matrix, condition) = ratio_formula(&pair.basis_n, &pair.basis_nbar, &deficiency(model, z, tol)?, x, tol)?;
    Ok(CharFnSample { lambda, z, matrix, route: CharFnRoute::ViaNz, condition })
}

/// `C = ξ P_{N_λ̄} (I - ξ Y_λ^H)^{-1}↾N_λ`. `Y_λ^H` is the Cayley transform
/// at `λ̄` of the Shtraus extension `T = S̃_λ̄`, so
/// `(I - ξ Y_λ^H)^{-1} = (I + (z - λ)(T - z)^{-1}) / (1 - ξ)` and only the
/// resolvent of `T` at `z` is needed.
pub fn charfn_via_cayley(model: &Model, lambda: C64, z: C64, tol: &TolerancePolicy) -> Result<CharFnSample> {
    check_points(lambda, z)?;
    let pair = bases(model, lambda, tol)?;
    via_cayley_in(&pair, model, z, tol)
}

fn via_cayley_in(pair: &AdaptedPair, model: &Model, z: C64, tol: &TolerancePolicy) -> Result<CharFnSample> {
    let lambda = pair.lambda;
    let x = xi(lambda, z);
    if z == lambda {
        // The resolvent enters with the factor z - λ, and ξ = 0.
        let matrix = CMat::zeros(pair.nbar_dim(), pair.n_dim());
        return Ok(CharFnSample { lambda, z, matrix, route: CharFnRoute::ViaCayley, condition: 1.0 });
    }
    let t = extenders::shtraus_extension(model, lambda.conj(), tol)?;
    let solver = ResolventSolver::new(&t, z, tol)?;
    let mut matrix = CMat::zeros(pair.nbar_dim(), pair.n_dim());
    for (j, f) in pair.basis_n.iter().enumerate() {
        let r = solver.solve(f, tol)?;
        let y = f.axpy(z - lambda, &r).scaled(x / (C64::new(1.0, 0.0) - x));
        matrix.set_column(j, &coords(&pair.basis_nbar, &y).column(0));
    }
    Ok(CharFnSample { lambda, z, matrix, route: CharFnRoute::ViaCayley, condition: solver.condition })
}

/// `(T - μ)^{-1}` for an extension `T = S ∔ span d_k`. A solution
/// `x = (I - V)h + Σ c_k d_k` of `(T - μ)x = y` needs
/// `y - Σ c_k (T - μ) d_k ∈ ran(S - μ) = H ⊖ N_μ̄`, a square system for `c`.
struct ResolventSolver<'a> {
    ext: &'a ExtensionOp,
    mu: C64,
    targets: Vec<HVec>,
    nbar: Vec<HVec>,
    system: CMat,
    condition: f64,
}

impl<'a> ResolventSolver<'a> {
    fn new(ext: &'a ExtensionOp, mu: C64, tol: &TolerancePolicy) -> Result<Self> {
        let nbar = orthonormalize(&deficiency(&ext.model, mu.conj(), tol)?, tol)?;
        let targets: Vec<HVec> = ext.defect_vecs.iter().zip(&ext.defect_images).map(|(d, a)| a.axpy(-mu, d)).collect();
        let system = coords_many(&nbar, &targets);
        if system.nrows() != system.ncols() {
            return Err(Error::DimensionMismatch(format!("{} range conditions for {} unknowns", system.nrows(), system.ncols())));
        }
        let condition = if system.is_empty() { 1.0 } else { matkit::op_norm(&system) / matkit::sigma_min(&system) };
        Ok(ResolventSolver { ext, mu, targets, nbar, system, condition })
    }

    fn solve(&self, y: &HVec, tol: &TolerancePolicy) -> Result<HVec> {
        let c = matkit::solve_square(&self.system, &coords(&self.nbar, y), tol)?;
        let c: Vec<C64> = c.iter().copied().collect();
        let rest = y.minus(&lincomb(&self.targets, c.iter().copied()));
        let h = self.ext.model.resolvent_solve(self.mu, &rest, tol)?;
        Ok(self.ext.eval(&h, &c, tol)?.0)
    }
}

/// `Y_i^H x = W^*(x - P_{N_{-i}} x)`: at `λ = i` the isometry of every model
/// is the shift `W` on `D`, so `Y_i^H` is a closed-form sequence operation.
fn y_i_adjoint(model: &Model, nmi: &[HVec], x: &HVec) -> HVec {
    let rest = x.minus(&lincomb(nmi, coords(nmi, x).iter().copied()));
    model.embed(HVec::from_chans(rest.chans.iter().map(|c| c.shift(-1)).collect()))
}

/// Neumann-series oracle `ξ P_{N_{-i}} Σ_{k<=order} ξ^k (Y_i^H)^k` at `λ = i`.
pub fn neumann_oracle(model: &Model, z: C64, order: usize, tol: &TolerancePolicy) -> Result<CMat> {
    check_points(I, z)?;
    let pair = bases(model, I, tol)?;
    let x = xi(I, z);
    let mut matrix = CMat::zeros(pair.nbar_dim(), pair.n_dim());
    for (j, f) in pair.basis_n.iter().enumerate() {
        let mut term = f.clone();
        let mut sum = f.clone();
        for _ in 0..order {
            term = y_i_adjoint(model, &pair.basis_nbar, &term).scaled(x).canonical(tol);
            sum = sum.plus(&term);
        }
        matrix.set_column(j, &(coords(&pair.basis_nbar, &sum) * x).column(0));
    }
    Ok(matrix)
}

/// One grid point with both routes; a route that fails leaves a flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub z: C64,
    pub via_nz: Option<CharFnSample>,
    pub via_cayley: Option<CharFnSample>,
    /// Largest entrywise difference of the two routes.
    pub discrepancy: Option<f64>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharFnGrid {
    pub lambda: C64,
    pub points: Vec<GridPoint>,
    pub max_discrepancy: f64,
    pub min_bound_slack: f64,
    pub flagged: usize,
}

/// `z = x + iy` over the product of `xs` and `ys`, followed by the ray
/// `z = it`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub ray: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { xs: vec![-1.0, 0.0, 1.0], ys: vec![0.5, 1.0, 2.0, 5.0], ray: vec![10.0, 100.0, 1000.0] }
    }
}

impl GridSpec {
    pub fn empty() -> Self {
        GridSpec { xs: Vec::new(), ys: Vec::new(), ray: Vec::new() }
    }

    pub fn points(&self) -> Vec<C64> {
        let mut out: Vec<C64> = self.xs.iter().flat_map(|&x| self.ys.iter().map(move |&y| C64::new(x, y))).collect();
        out.extend(self.ray.iter().map(|&t| C64::new(0.0, t)));
        out
    }
}

/// `default`, `empty`, or `x=<list>;y=<list>;ray=<list>` with comma
/// separated numbers; omitted keys are empty.
impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "default" => return Ok(GridSpec::default()),
            "empty" | "" => return Ok(GridSpec::empty()),
            _ => {}
        }
        let mut g = GridSpec::empty();
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, vals) = part
                .split_once('=')
                .ok_or_else(|| Error::PreconditionViolated(format!("grid part {part:?} has no '='")))?;
            let nums = vals
                .split(',')
                .map(str::trim)
                .filter(|v| !v.is_empty())
                .map(|v| v.parse::<f64>().map_err(|e| Error::PreconditionViolated(format!("grid value {v:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            match key.trim() {
                "x" => g.xs = nums,
                "y" => g.ys = nums,
                "ray" => g.ray = nums,
                other => return Err(Error::PreconditionViolated(format!("unknown grid key {other:?}"))),
            }
        }
        if g.ys.iter().chain(&g.ray).any(|&y| !(y > 0.0)) {
            return Err(Error::PreconditionViolated("grid points must lie in the upper half-plane".into()));
        }
        Ok(g)
    }
}

pub fn charfn_grid(model: &Model, lambda: C64, spec: &GridSpec, tol: &TolerancePolicy) -> Result<CharFnGrid> {
    check_points(lambda, lambda)?;
    let pair = bases(model, lambda, tol)?;
    let mut points = Vec::new();
    for z in spec.points() {
        let mut flags = Vec::new();
        let mut run = |route: CharFnRoute| {
            let r = match route {
                CharFnRoute::ViaNz => check_points(lambda, z).and_then(|_| via_nz_in(&pair, model, z, tol)),
                CharFnRoute::ViaCayley => check_points(lambda, z).and_then(|_| via_cayley_in(&pair, model, z, tol)),
            };
            r.map_err(|e| flags.push(format!("{route}: {e}"))).ok()
        };
        let a = run(CharFnRoute::ViaNz);
        let b = run(CharFnRoute::ViaCayley);
        let discrepancy = match (&a, &b) {
            (Some(a), Some(b)) => Some(compressor::max_abs(&(&a.matrix - &b.matrix))),
            _ => None,
        };
        points.push(GridPoint { z, via_nz: a, via_cayley: b, discrepancy, flags });
    }
    let max_discrepancy = points.iter().filter_map(|p| p.discrepancy).fold(0.0, f64::max);
    let min_bound_slack = points
        .iter()
        .flat_map(|p| p.via_nz.iter().chain(&p.via_cayley))
        .map(CharFnSample::bound_slack)
        .fold(f64::INFINITY, f64::min);
    let flagged = points.iter().filter(|p| !p.flags.is_empty()).count();
    Ok(CharFnGrid { lambda, points, max_discrepancy, min_bound_slack, flagged })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRow {
    pub t: f64,
    /// `||C_λ(it)↾L_λ - V_λ||`.
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryTable {
    pub lambda: C64,
    pub rows: Vec<BoundaryRow>,
    /// `L = {0}`: nothing to check.
    pub vacuous: bool,
    pub monotone: bool,
}

impl BoundaryTable {
    pub fn last_deviation(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.deviation)
    }
}

pub fn boundary_limit_check(model: &Model, lambda: C64, t_list: &[f64], tol: &TolerancePolicy) -> Result<BoundaryTable> {
    let pair = bases(model, lambda, tol)?;
    let p = pair.p;
    if p == 0 {
        return Ok(BoundaryTable { lambda, rows: Vec::new(), vacuous: true, monotone: true });
    }
    let mut target = CMat::zeros(pair.nbar_dim(), p);
    target.view_mut((0, 0), (p, p)).copy_from(&pair.v);
    let mut rows = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let z = C64::new(0.0, t);
        check_points(lambda, z)?;
        let c = via_nz_in(&pair, model, z, tol)?.matrix;
        let deviation = matkit::op_norm(&(c.columns(0, p).into_owned() - &target));
        rows.push(BoundaryRow { t, deviation });
    }
    let monotone = rows.windows(2).all(|w| w[1].deviation < w[0].deviation);
    Ok(BoundaryTable { lambda, rows, vacuous: false, monotone })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchurRelation {
    pub lambda: C64,
    pub z: C64,
    /// `A_22 - A_21 (A_11 - V_λ)^{-1} A_12`.
    #[serde(with = "serde_cmat")]
    pub schur: CMat,
    /// `C^{S_0}_λ(z)` from the semi-deficiency subspaces.
    #[serde(with = "serde_cmat")]
    pub c_s0: CMat,
    pub residual: f64,
    /// Residual of the LDU factorization of `C - V_λ P_{L_λ}`.
    pub factorization_residual: f64,
    pub pivot_sigma_min: f64,
}

/// Schur relation between `C^S` and `C^{S_0}` at one point.
pub fn schur_relation_check(model: &Model, lambda: C64, z: C64, tol: &TolerancePolicy) -> Result<SchurRelation> {
    check_points(lambda, z)?;
    let pair = bases(model, lambda, tol)?;
    let p = pair.p;
    let c = via_nz_in(&pair, model, z, tol)?.matrix;
    let (n, nb) = (pair.n_dim(), pair.nbar_dim());
    let pivot = c.view((0, 0), (p, p)) - &pair.v;
    let pivot_sigma_min = matkit::sigma_min(&pivot);
    if p > 0 && pivot_sigma_min < tol.rank_tol {
        return Err(Error::SingularPivot(pivot_sigma_min));
    }
    let schur = matkit::schur_complement(&c, (p, p), &pair.v, tol)?;
    let c_s0 = semi_charfn(&pair, model, z, tol)?;
    let residual = compressor::max_abs(&(&schur - &c_s0));

    let a12 = c.view((0, p), (p, n - p)).into_owned();
    let a21 = c.view((p, 0), (nb - p, p)).into_owned();
    let left_gain = matkit::solve_square(&pivot.adjoint(), &a21.adjoint(), tol)?.adjoint();
    let right_gain = matkit::solve_square(&pivot, &a12, tol)?;
    let mut lower = matkit::identity::<f64>(nb);
    lower.view_mut((p, 0), (nb - p, p)).copy_from(&left_gain);
    let mut upper = matkit::identity::<f64>(n);
    upper.view_mut((0, p), (p, n - p)).copy_from(&right_gain);
    let mut diag = CMat::zeros(nb, n);
    diag.view_mut((0, 0), (p, p)).copy_from(&pivot);
    diag.view_mut((p, p), (nb - p, n - p)).copy_from(&c_s0);
    let mut shifted = c.clone();
    shifted.view_mut((0, 0), (p, p)).copy_from(&pivot);
    let factorization_residual = compressor::max_abs(&(shifted - lower * diag * upper));
    Ok(SchurRelation { lambda, z, schur, c_s0, residual, factorization_residual, pivot_sigma_min })
}

/// `C^{S_0}_λ(z)` by the ratio formula inside `H_0`, using
/// `N'_z = N_z ⊖ P_{N_z} L` and the trailing adapted bases at `λ`.
fn semi_charfn(pair: &AdaptedPair, model: &Model, z: C64, tol: &TolerancePolicy) -> Result<CMat> {
    let at_z = AdaptedPair::build(model, z, deficiency(model, z, tol)?, deficiency(model, z.conj(), tol)?, tol)?;
    let p = pair.p;
    let (m, _) = ratio_formula(&pair.basis_n[p..], &pair.basis_nbar[p..], &at_z.basis_n[at_z.p..], xi(pair.lambda, z), tol)?;
    Ok(m)
}

/// Livšic form `w(z) = ξ <φ_z, e_-> / <φ_z, e_+>` of `C^{S_0}_i(z)` when the
/// semi-deficiency indices are `(1, 1)`; `None` otherwise.
pub fn livsic_scalar(model: &Model, z: C64, tol: &TolerancePolicy) -> Result<Option<C64>> {
    check_points(I, z)?;
    let pair = bases(model, I, tol)?;
    let at_z = AdaptedPair::build(model, z, deficiency(model, z, tol)?, deficiency(model, z.conj(), tol)?, tol)?;
    let p = pair.p;
    if pair.n_dim() - p != 1 || pair.nbar_dim() - p != 1 || at_z.n_dim() - at_z.p != 1 {
        return Ok(None);
    }
    let phi = &at_z.basis_n[at_z.p];
    let (ep, em) = (&pair.basis_n[p], &pair.basis_nbar[p]);
    Ok(Some(xi(I, z) * phi.inner(em) / phi.inner(ep)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescalingCheck {
    pub lambda: C64,
    pub z: C64,
    pub residual: f64,
}

/// `C_λ^S(z) = C_i^{S_{a,b}}((z - a)/b)` for `λ = a + ib`, where
/// `S_{a,b} = (S - a)/b` has `N_w(S_{a,b}) = N_{a + bw}(S)`. The right side
/// is evaluated in plain orthonormal bases of `S_{a,b}` and carried to the
/// adapted bases before comparing.
pub fn rescaling_check(model: &Model, lambda: C64, z: C64, tol: &TolerancePolicy) -> Result<RescalingCheck> {
    check_points(lambda, z)?;
    let (a, b) = (lambda.re, lambda.im);
    let scaled_def = |w: C64| deficiency(model, C64::new(a, 0.0) + w * b, tol);
    let w = (z - a) / b;
    let on = orthonormalize(&scaled_def(I)?, tol)?;
    let onb = orthonormalize(&scaled_def(-I)?, tol)?;
    let (c_scaled, _) = ratio_formula(&on, &onb, &scaled_def(w)?, xi(I, w), tol)?;
    let pair = bases(model, lambda, tol)?;
    let c = via_nz_in(&pair, model, z, tol)?.matrix;
    let tn = coords_many(&pair.basis_n, &on);
    let tnb = coords_many(&pair.basis_nbar, &onb);
    let carried = tnb * c_scaled * tn.adjoint();
    Ok(RescalingCheck { lambda, z, residual: compressor::max_abs(&(carried - c)) })
}

/// The compression of `S̃_z` onto `H_0` against the Shtraus extension of
/// `S_0`: with `U = C_i(z)` as extension parameter, the compressed
/// parameter must be `C^{S_0}_i(z)` on all of `N'_i`.
pub fn shtraus_compression_residual(model: &Model, z: C64, tol: &TolerancePolicy) -> Result<f64> {
    check_points(I, z)?;
    let dd = DefectData::new(model, tol)?;
    let pair = bases(model, I, tol)?;
    let c = via_nz_in(&pair, model, z, tol)?.matrix;
    let param = ExtensionParam::new(&dd, c, ParamKind::Contraction, tol)?;
    let report = compressor::compress(&dd, &param, tol)?;
    if report.dom_u0.dim() != dd.np_plus {
        return Err(Error::SpecViolation(format!("compression defined on {} of {} dimensions", report.dom_u0.dim(), dd.np_plus)));
    }
    let s0 = semi_charfn(&pair, model, z, tol)?;
    Ok(compressor::max_abs(&(report.u0 - s0)))
}

/// `||D_{Y_z} ψ||² = ||P_{N_z} ψ||²` for the Cayley transform at `z` of the
/// Shtraus extension `S̃_z`; returns the largest discrepancy over `vecs`.
pub fn cayley_defect_residual(model: &Model, z: C64, vecs: &[HVec], tol: &TolerancePolicy) -> Result<f64> {
    let ext = extenders::shtraus_extension(model, z, tol)?;
    let cay = extenders::cayley(&ext, z, tol)?;
    let mut worst = 0.0f64;
    for v in vecs {
        let d = cay.defect_norm_sq(v, tol)?;
        let pn = coords(&cay.basis_n, v).norm_squared();
        worst = worst.max((d - pn).abs());
    }
    Ok(worst)
}

/// `(I - Y_z)^{-1} P_{N_z̄} h = h` for `h ∈ L`, checked as
/// `h - Y_z h = P_{N_z̄} h`; returns the largest residual over `L`.
pub fn l_resolvent_residual(model: &Model, z: C64, tol: &TolerancePolicy) -> Result<f64> {
    let ext = extenders::shtraus_extension(model, z, tol)?;
    let cay = extenders::cayley(&ext, z, tol)?;
    let nzb = orthonormalize(&deficiency(model, z.conj(), tol)?, tol)?;
    let mut worst = 0.0f64;
    for h in orthonormalize(&model.l_vectors(), tol)? {
        let h = model.embed(h);
        let lhs = h.minus(&cay.apply(&h, tol)?);
        let rhs = lincomb(&nzb, coords(&nzb, &h).iter().copied());
        worst = worst.max(lhs.minus(&rhs).canonical(tol).norm());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqspace::EvGeoSeq;

    fn tol() -> TolerancePolicy {
        TolerancePolicy::default()
    }

    fn restricted() -> Model {
        Model::restricted(1, vec![HVec::unit(1, 0, 2)]).unwrap()
    }

    #[test]
    fn shift_model_vanishes() {
        let t = tol();
        let m = Model::shift(1).unwrap();
        for z in [C64::new(0.0, 2.0), C64::new(1.0, 1.0), C64::new(-0.5, 0.3)] {
            let a = charfn_via_nz(&m, I, z, &t).unwrap();
            let b = charfn_via_cayley(&m, I, z, &t).unwrap();
            assert!(a.matrix.norm() < 1e-14 && b.matrix.norm() < 1e-12);
        }
    }

    #[test]
    fn vanishes_at_lambda() {
        let t = tol();
        let lam = C64::new(0.5, 1.5);
        let c = charfn_via_nz(&restricted(), lam, lam, &t).unwrap();
        assert!(c.matrix.norm() < 1e-14);
    }

    #[test]
    fn restricted_bound_at_2i() {
        let t = tol();
        let c = charfn_via_nz(&restricted(), I, C64::new(0.0, 2.0), &t).unwrap();
        assert_eq!(c.matrix.shape(), (2, 2));
        assert!(c.matrix.norm() > 1e-3);
        assert!(matkit::op_norm(&c.matrix) <= 1.0 / 3.0 + 1e-12);
    }

    #[test]
    fn routes_agree_on_5x5_grid() {
        let t = tol();
        let models = [restricted(), Model::exit(1, 1).unwrap(), Model::restricted(2, vec![HVec::unit(2, 1, -1)]).unwrap()];
        for m in &models {
            for lam in [I, C64::new(1.0, 2.0)] {
                let spec = GridSpec { xs: vec![-2.0, -1.0, 0.0, 1.0, 2.0], ys: vec![0.3, 0.7, 1.0, 2.5, 6.0], ray: Vec::new() };
                let g = charfn_grid(m, lam, &spec, &t).unwrap();
                assert_eq!(g.flagged, 0, "{:?}", g.points.iter().flat_map(|p| p.flags.clone()).collect::<Vec<_>>());
                assert!(g.max_discrepancy < 1e-9, "{}", g.max_discrepancy);
                assert!(g.min_bound_slack >= -1e-10);
            }
        }
    }

    #[test]
    fn neumann_oracle_matches() {
        let t = tol();
        for m in [restricted(), Model::exit(1, 2).unwrap()] {
            for s in [0.1, 0.3, -0.2] {
                let z = I * (1.0 + s) / (1.0 - s);
                let c = charfn_via_cayley(&m, I, z, &t).unwrap().matrix;
                let o = neumann_oracle(&m, z, 30, &t).unwrap();
                assert!((&c - &o).norm() < 1e-8, "{}", (&c - &o).norm());
            }
        }
    }

    #[test]
    fn small_xi_is_linear() {
        // C/ξ → P_{N_λ̄}↾N_λ as ξ → 0.
        let t = tol();
        let m = restricted();
        let pair = bases(&m, I, &t).unwrap();
        let lead = coords_many(&pair.basis_nbar, &pair.basis_n);
        let mut prev = f64::INFINITY;
        for s in [1e-1, 1e-2, 1e-3] {
            let z = I * (1.0 + s) / (1.0 - s);
            let c = charfn_via_nz(&m, I, z, &t).unwrap().matrix;
            let err = (c / C64::new(s, 0.0) - &lead).norm();
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 1e-2);
    }

    #[test]
    fn boundary_limit() {
        let t = tol();
        let ts: Vec<f64> = (1..=6).map(|k| 10f64.powi(k)).collect();
        let tab = boundary_limit_check(&restricted(), I, &ts, &t).unwrap();
        assert!(tab.monotone, "{:?}", tab.rows);
        assert!(tab.last_deviation() < 1e-4);
        assert!(boundary_limit_check(&Model::shift(1).unwrap(), I, &ts, &t).unwrap().vacuous);
    }

    #[test]
    fn schur_relation_and_factorization() {
        let t = tol();
        for z in [C64::new(0.0, 2.0), C64::new(1.0, 1.0), C64::new(0.0, 3.0)] {
            let r = schur_relation_check(&restricted(), I, z, &t).unwrap();
            assert!(r.residual < 1e-8 && r.factorization_residual < 1e-10, "{r:?}");
        }
        let r = schur_relation_check(&restricted(), C64::new(-1.0, 0.5), C64::new(0.5, 0.7), &t).unwrap();
        assert!(r.residual < 1e-8);
        // Densely defined: the relation is C^S = C^{S_0}.
        let r = schur_relation_check(&Model::shift(2).unwrap(), I, C64::new(1.0, 1.0), &t).unwrap();
        assert!(r.residual < 1e-12);
    }

    #[test]
    fn livsic_matches_semi_block() {
        let t = tol();
        let z = C64::new(0.5, 2.0);
        let w = livsic_scalar(&restricted(), z, &t).unwrap().expect("(1,1) semi-indices");
        let r = schur_relation_check(&restricted(), I, z, &t).unwrap();
        assert!((w - r.c_s0[(0, 0)]).norm() < 1e-12);
    }

    #[test]
    fn rescaling() {
        let t = tol();
        let r = rescaling_check(&restricted(), C64::new(1.0, 2.0), C64::new(0.3, 1.1), &t).unwrap();
        assert!(r.residual < 1e-9, "{}", r.residual);
    }

    #[test]
    fn shtraus_compression() {
        let t = tol();
        for z in [C64::new(0.0, 2.0), C64::new(-1.0, 0.5)] {
            let r = shtraus_compression_residual(&restricted(), z, &t).unwrap();
            assert!(r < 1e-9, "{r}");
        }
    }

    #[test]
    fn cayley_defect_and_l_resolvent() {
        let t = tol();
        let m = restricted();
        let z = C64::new(0.5, 1.5);
        let vecs: Vec<HVec> = (-3..3)
            .map(|k| HVec::from_chans(vec![EvGeoSeq::unit(k).plus(&EvGeoSeq::unit(k + 2).scaled(C64::new(0.3, -0.4)))]))
            .collect();
        assert!(cayley_defect_residual(&m, z, &vecs, &t).unwrap() < 1e-10);
        assert!(l_resolvent_residual(&m, z, &t).unwrap() < 1e-10);
        assert!(l_resolvent_residual(&Model::exit(1, 2).unwrap(), z, &t).unwrap() < 1e-10);
    }

    #[test]
    fn grid_spec_parsing() {
        assert_eq!("default".parse::<GridSpec>().unwrap(), GridSpec::default());
        assert!("empty".parse::<GridSpec>().unwrap().points().is_empty());
        let g: GridSpec = "x=0,1; y=2; ray=10".parse().unwrap();
        assert_eq!(g.points(), vec![C64::new(0.0, 2.0), C64::new(1.0, 2.0), C64::new(0.0, 10.0)]);
        assert!("y=-1".parse::<GridSpec>().is_err());
        assert!("q=1".parse::<GridSpec>().is_err());
        assert_eq!(GridSpec::default().points().len(), 15);
    }
}
