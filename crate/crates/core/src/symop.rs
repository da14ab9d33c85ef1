//! Symmetric operator models with exactly computable deficiency data.
//!
//! The base model is the Cayley model of the bilateral shift: on each of `m`
//! orthogonal channels `ℓ²(ℤ)` the isometry `V = W` acts on
//! `D = {x : x_0 = 0}` and `S = i(I + V)(I - V)^{-1}` on `dom S = (I - V)D`.
//! Restricting to vectors orthogonal to finitely many `u_j` gives a
//! non-densely defined operator; adjoining `C^{m1}` gives exit-space data.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matkit::{self, TolerancePolicy};
use crate::seqspace::{solve_affine_shift, solve_second_order, AffineSolution, GeoMode, SeqCertificate, Side};
use crate::seqspace::{backward_kernel_trivial, EvGeoSeq};
use crate::{CMat, C64};

pub const I: C64 = C64 { re: 0.0, im: 1.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Vector of `ℓ²(ℤ) ⊗ C^m ⊕ C^{m1}`: one sequence per channel plus the
/// exit-space coordinates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HVec {
    pub chans: Vec<EvGeoSeq>,
    #[serde(default)]
    pub ext: Vec<C64>,
}

impl HVec {
    pub fn zero(m: usize, m1: usize) -> Self {
        HVec { chans: vec![EvGeoSeq::zero(); m], ext: vec![ZERO; m1] }
    }

    pub fn from_chans(chans: Vec<EvGeoSeq>) -> Self {
        HVec { chans, ext: Vec::new() }
    }

    /// `e_k` in channel `c` of an `m`-channel space.
    pub fn unit(m: usize, c: usize, k: i64) -> Self {
        let mut v = HVec::zero(m, 0);
        v.chans[c] = EvGeoSeq::unit(k);
        v
    }

    /// The `j`-th standard vector of the exit space.
    pub fn ext_unit(m: usize, m1: usize, j: usize) -> Self {
        let mut v = HVec::zero(m, m1);
        v.ext[j] = ONE;
        v
    }

    pub fn scaled(&self, c: C64) -> Self {
        HVec { chans: self.chans.iter().map(|s| s.scaled(c)).collect(), ext: self.ext.iter().map(|x| x * c).collect() }
    }

    pub fn plus(&self, other: &Self) -> Self {
        let n = self.chans.len().max(other.chans.len());
        let chans = (0..n)
            .map(|c| match (self.chans.get(c), other.chans.get(c)) {
                (Some(a), Some(b)) => a.plus(b),
                (Some(a), None) | (None, Some(a)) => a.clone(),
                (None, None) => EvGeoSeq::zero(),
            })
            .collect();
        let n1 = self.ext.len().max(other.ext.len());
        let ext = (0..n1)
            .map(|j| self.ext.get(j).copied().unwrap_or(ZERO) + other.ext.get(j).copied().unwrap_or(ZERO))
            .collect();
        HVec { chans, ext }
    }

    pub fn minus(&self, other: &Self) -> Self {
        self.plus(&other.scaled(-ONE))
    }

    pub fn axpy(&self, c: C64, other: &Self) -> Self {
        self.plus(&other.scaled(c))
    }

    pub fn inner(&self, other: &Self) -> C64 {
        let seq: C64 = self.chans.iter().zip(&other.chans).map(|(a, b)| a.inner(b)).sum();
        let ext: C64 = self.ext.iter().zip(&other.ext).map(|(a, b)| a * b.conj()).sum();
        seq + ext
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).re.max(0.0).sqrt()
    }

    /// Channel-wise map, keeping the exit coordinates.
    pub fn map_chans(&self, f: impl Fn(&EvGeoSeq) -> EvGeoSeq) -> Self {
        HVec { chans: self.chans.iter().map(f).collect(), ext: self.ext.clone() }
    }

    pub fn canonical(&self, tol: &TolerancePolicy) -> Self {
        self.map_chans(|s| s.canonical(tol))
    }
}

/// `G[j, k] = <v_k, v_j>`, so that `G` plays the role of `B^H B`.
pub fn gram(vs: &[HVec]) -> CMat {
    let n = vs.len();
    let mut g = CMat::zeros(n, n);
    for j in 0..n {
        for k in j..n {
            let v = vs[k].inner(&vs[j]);
            g[(j, k)] = v;
            g[(k, j)] = v.conj();
        }
    }
    g
}

/// `sum_k c_k v_k`.
pub fn lincomb(vs: &[HVec], coeffs: impl IntoIterator<Item = C64>) -> HVec {
    vs.iter().zip(coeffs).fold(HVec::default(), |acc, (v, c)| if c == ZERO { acc } else { acc.axpy(c, v) })
}

/// Column `j` of `coeffs` gives the `j`-th output vector.
pub fn combine(vs: &[HVec], coeffs: &CMat) -> Vec<HVec> {
    (0..coeffs.ncols()).map(|j| lincomb(vs, coeffs.column(j).iter().copied())).collect()
}

/// Coordinates `<x, e_k>` against an orthonormal list.
pub fn coords(onb: &[HVec], x: &HVec) -> CMat {
    CMat::from_fn(onb.len(), 1, |k, _| x.inner(&onb[k]))
}

/// Coordinate matrix of several vectors against an orthonormal list.
pub fn coords_many(onb: &[HVec], xs: &[HVec]) -> CMat {
    CMat::from_fn(onb.len(), xs.len(), |k, j| xs[j].inner(&onb[k]))
}

/// Orthogonal projection onto the span of an arbitrary (independent) list.
pub fn project(vs: &[HVec], x: &HVec, tol: &TolerancePolicy) -> Result<HVec> {
    if vs.is_empty() {
        return Ok(HVec::default());
    }
    let g = gram(vs);
    let b = CMat::from_fn(vs.len(), 1, |j, _| x.inner(&vs[j]));
    let a = matkit::solve_square(&g, &b, tol)?;
    Ok(lincomb(vs, a.iter().copied()))
}

/// Gram–Schmidt in the given order, via the Cholesky factor of the Gram
/// matrix: `e = v R^{-1}` with `G = R^H R`.
pub fn orthonormalize(vs: &[HVec], tol: &TolerancePolicy) -> Result<Vec<HVec>> {
    if vs.is_empty() {
        return Ok(Vec::new());
    }
    let r = gram_factor(&gram(vs), tol)?;
    let rinv = matkit::solve_square(&r, &matkit::identity(vs.len()), tol)?;
    Ok(combine(vs, &rinv))
}

/// Upper-triangular `R` with positive diagonal and `G = R^H R`.
pub fn gram_factor(g: &CMat, tol: &TolerancePolicy) -> Result<CMat> {
    let n = g.nrows();
    let herm = (g + g.adjoint()) * C64::new(0.5, 0.0);
    let rank = matkit::rank(&herm, tol);
    let chol = herm.cholesky().ok_or(Error::DegenerateU { rank, expected: n })?;
    let r = chol.l().adjoint();
    let dmin = (0..n).map(|k| r[(k, k)].re).fold(f64::INFINITY, f64::min);
    let dmax = (0..n).map(|k| r[(k, k)].re).fold(0.0, f64::max);
    if dmin <= tol.rank_tol.sqrt() * dmax.max(1e-300) * 1e-2 {
        return Err(Error::DegenerateU { rank, expected: n });
    }
    Ok(r)
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Cayley model of the bilateral shift with deficiency indices `(m, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftModel {
    pub m: usize,
}

impl ShiftModel {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::PreconditionViolated("shift model needs m >= 1".into()));
        }
        Ok(ShiftModel { m })
    }

    /// `f = (I - V)h`, `S f = i(I + V)h` for `h` in `D` (zero at index 0 of
    /// every channel).
    pub fn apply(&self, h: &[EvGeoSeq]) -> Result<(HVec, HVec)> {
        if h.len() != self.m {
            return Err(Error::DimensionMismatch(format!("{} channels for m = {}", h.len(), self.m)));
        }
        // The hole value of a sequence with several modes is a sum that a
        // projection cancels only up to roundoff.
        if h.iter().any(|c| c.value(0).norm() > 1e-12 * c.norm().max(1.0)) {
            return Err(Error::NotInDomain("h must vanish at the hole index 0".into()));
        }
        let f = h.iter().map(|c| c - &c.shift(1)).collect();
        let sf = h.iter().map(|c| c.plus(&c.shift(1)).scaled(I)).collect();
        Ok((HVec::from_chans(f), HVec::from_chans(sf)))
    }

    /// Closed-form basis of `N_z = H ⊖ ran(S - z̄)`, one vector per channel.
    ///
    /// Per channel `N_z` is spanned by `q^k 1_{k<=0}` for `Im z > 0` and by
    /// `q^(k-1) 1_{k>=1}` for `Im z < 0`, with `q = (z + i)/(z - i)`.
    pub fn deficiency(&self, z: C64) -> Result<Vec<HVec>> {
        if z.im == 0.0 {
            return Err(Error::UnsupportedPoint(format!("real point {z}")));
        }
        let seq = if z == I {
            EvGeoSeq::unit(0)
        } else if z == -I {
            EvGeoSeq::unit(1)
        } else {
            let q = (z + I) / (z - I);
            let side = if z.im > 0.0 { Side::Lower } else { Side::Upper };
            let start = if z.im > 0.0 { 0 } else { 1 };
            EvGeoSeq::from_mode(GeoMode::new(side, q, ONE, start)?)
        };
        Ok((0..self.m)
            .map(|c| {
                let mut v = HVec::zero(self.m, 0);
                v.chans[c] = seq.clone();
                v
            })
            .collect())
    }

    /// Certificate that `dom S` is dense: a vector orthogonal to `ran(I - V)`
    /// satisfies `x_k = x_{k+1}` off the hole on every channel, a tail of
    /// ratio 1 that is not square summable unless it vanishes.
    pub fn density_certificate(&self) -> SeqCertificate {
        backward_kernel_trivial(ONE, -ONE)
    }
}

/// `S' = S ↾ {f ∈ dom S : <f, u_j> = 0}`: a closed symmetric operator whose
/// domain closure is `H_0 = (span u_j)^⊥`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictedModel {
    pub base: ShiftModel,
    pub u_list: Vec<HVec>,
}

/// `S` in `H ⊕ C^{m1}`, i.e. `L = L_λ = C^{m1}` and `V_λ = I`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExitModel {
    pub base: ShiftModel,
    pub m1: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Shift(ShiftModel),
    Restricted(RestrictedModel),
    Exit(ExitModel),
}

impl RestrictedModel {
    pub fn new(base: ShiftModel, u_list: Vec<HVec>) -> Result<Self> {
        for u in &u_list {
            if u.chans.len() > base.m || !u.ext.is_empty() || u.chans.iter().any(|c| !c.is_finitely_supported()) {
                return Err(Error::PreconditionViolated("u vectors must be finitely supported in the base space".into()));
            }
        }
        let mut u_list = u_list;
        for u in &mut u_list {
            u.chans.resize(base.m, EvGeoSeq::zero());
        }
        Ok(RestrictedModel { base, u_list })
    }

    /// `P_D (I - W^*) u` per channel: the vector representing the functional
    /// `h ↦ <(I - V)h, u>` on `D`.
    fn functional(&self, u: &HVec) -> HVec {
        u.map_chans(|c| (c - &c.shift(-1)).zero_on(&[0]))
    }
}

impl Model {
    pub fn shift(m: usize) -> Result<Self> {
        Ok(Model::Shift(ShiftModel::new(m)?))
    }

    pub fn restricted(m: usize, u_list: Vec<HVec>) -> Result<Self> {
        Ok(Model::Restricted(RestrictedModel::new(ShiftModel::new(m)?, u_list)?))
    }

    pub fn exit(m: usize, m1: usize) -> Result<Self> {
        Ok(Model::Exit(ExitModel { base: ShiftModel::new(m)?, m1 }))
    }

    pub fn base(&self) -> &ShiftModel {
        match self {
            Model::Shift(s) => s,
            Model::Restricted(r) => &r.base,
            Model::Exit(e) => &e.base,
        }
    }

    pub fn m(&self) -> usize {
        self.base().m
    }

    pub fn ext_dim(&self) -> usize {
        match self {
            Model::Exit(e) => e.m1,
            _ => 0,
        }
    }

    /// `dim L`, the codimension of the domain closure.
    pub fn p(&self) -> usize {
        match self {
            Model::Shift(_) => 0,
            Model::Restricted(r) => r.u_list.len(),
            Model::Exit(e) => e.m1,
        }
    }

    /// Spanning vectors of `L = H ⊖ closure(dom S)`.
    pub fn l_vectors(&self) -> Vec<HVec> {
        match self {
            Model::Shift(_) => Vec::new(),
            Model::Restricted(r) => r.u_list.clone(),
            Model::Exit(e) => (0..e.m1).map(|j| HVec::ext_unit(e.base.m, e.m1, j)).collect(),
        }
    }

    pub fn zero_vec(&self) -> HVec {
        HVec::zero(self.m(), self.ext_dim())
    }

    /// Pads `v` with zero channels and exit coordinates to the model shape.
    pub fn embed(&self, v: HVec) -> HVec {
        let mut v = v;
        v.chans.resize(self.m(), EvGeoSeq::zero());
        v.ext.resize(self.ext_dim(), ZERO);
        v
    }

    /// `(f, S f)` for `f = (I - V)h`; rejects `h` outside `D` and, for the
    /// restricted model, `f` not orthogonal to the `u_j`.
    pub fn apply(&self, h: &[EvGeoSeq], tol: &TolerancePolicy) -> Result<(HVec, HVec)> {
        let (f, sf) = self.base().apply(h)?;
        if let Model::Restricted(r) = self {
            for u in &r.u_list {
                let ip = f.inner(u);
                if ip.norm() > tol.eq_tol * f.norm().max(1.0) * u.norm().max(1.0) {
                    return Err(Error::NotInDomain(format!("<f, u> = {ip}")));
                }
            }
        }
        Ok((self.embed(f), self.embed(sf)))
    }

    /// `S_0 f = P_{H_0} S f`.
    pub fn apply_compressed(&self, h: &[EvGeoSeq], tol: &TolerancePolicy) -> Result<(HVec, HVec)> {
        let (f, sf) = self.apply(h, tol)?;
        Ok((f, self.project_h0(&sf, tol)?))
    }

    /// Orthogonal projection onto `H_0 = closure(dom S)`.
    pub fn project_h0(&self, x: &HVec, tol: &TolerancePolicy) -> Result<HVec> {
        match self {
            Model::Shift(_) => Ok(x.clone()),
            Model::Restricted(r) => Ok(x.minus(&project(&r.u_list, x, tol)?)),
            Model::Exit(_) => Ok(HVec { chans: x.chans.clone(), ext: vec![ZERO; x.ext.len()] }),
        }
    }

    /// Basis (not orthonormal) of `N_z` for non-real `z`.
    pub fn deficiency_raw(&self, z: C64, tol: &TolerancePolicy) -> Result<Vec<HVec>> {
        let mut out: Vec<HVec> = self.base().deficiency(z)?.into_iter().map(|v| self.embed(v)).collect();
        match self {
            Model::Shift(_) => {}
            Model::Restricted(r) => out.extend(restricted_extra(r, z, tol)?),
            Model::Exit(_) => out.extend(self.l_vectors()),
        }
        Ok(out)
    }

    /// Finite formulas for `N_{±i}`: the extra restricted vectors are
    /// `h_0 = ¼ P_D (I - W^*) u` at `i` and `W h_0` at `-i`.
    pub fn deficiency_at_pm_i(&self, sign: f64) -> Result<Vec<HVec>> {
        let z = if sign > 0.0 { I } else { -I };
        let mut out: Vec<HVec> = self.base().deficiency(z)?.into_iter().map(|v| self.embed(v)).collect();
        match self {
            Model::Shift(_) => {}
            Model::Restricted(r) => {
                for u in &r.u_list {
                    let h0 = r.functional(u).scaled(C64::new(0.25, 0.0));
                    out.push(if sign > 0.0 { h0 } else { h0.map_chans(|c| c.shift(1)) });
                }
            }
            Model::Exit(_) => out.extend(self.l_vectors()),
        }
        Ok(out)
    }

    /// Solves `(S - mu) f = rhs` for `f = (I - V)h ∈ dom S` and returns `h`.
    pub fn resolvent_solve(&self, mu: C64, rhs: &HVec, tol: &TolerancePolicy) -> Result<Vec<EvGeoSeq>> {
        let scale = rhs.norm().max(1.0);
        if rhs.ext.iter().any(|x| x.norm() > tol.eq_tol * scale) {
            return Err(Error::NotInRange("rhs has an exit-space component".into()));
        }
        let mut h = Vec::with_capacity(self.m());
        for c in 0..self.m() {
            let r = rhs.chans.get(c).cloned().unwrap_or_default();
            let k = match solve_affine_shift(I - mu, I + mu, &r, tol)? {
                AffineSolution::Member(k) => k,
                AffineSolution::NonMember(_) => return Err(Error::NotInRange("critical resolvent".into())),
            };
            let k0 = k.value(0);
            if k0.norm() > tol.eq_tol * scale {
                return Err(Error::NotInRange(format!("hole value {k0}")));
            }
            h.push(k.zero_on(&[0]));
        }
        if let Model::Restricted(r) = self {
            let (f, _) = self.base().apply(&h)?;
            for u in &r.u_list {
                let ip = f.inner(u);
                if ip.norm() > tol.eq_tol * scale * u.norm().max(1.0) {
                    return Err(Error::NotInRange(format!("preimage not orthogonal to u: {ip}")));
                }
            }
        }
        Ok(h)
    }

    /// Random `h ∈ D` whose image `(I - V)h` lies in `dom S`, supported on a
    /// window around the holes and the `u_j`.
    pub fn sample_domain<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<EvGeoSeq> {
        let (mut lo, mut hi) = (-3i64, 4i64);
        if let Model::Restricted(r) = self {
            for u in &r.u_list {
                for c in &u.chans {
                    if let Some((a, b)) = c.window() {
                        lo = lo.min(a - 1);
                        hi = hi.max(b + 1);
                    }
                }
            }
        }
        let m = self.m();
        let idx: Vec<(usize, i64)> = (0..m).flat_map(|c| (lo..=hi).filter(|&k| k != 0).map(move |k| (c, k))).collect();
        let mut x = CMat::from_fn(idx.len(), 1, |_, _| gaussian(rng) * 0.5);
        if let Model::Restricted(r) = self {
            let a = CMat::from_fn(r.u_list.len(), idx.len(), |j, t| {
                let (c, k) = idx[t];
                r.functional(&r.u_list[j]).chans[c].value(k).conj()
            });
            let tol = TolerancePolicy::default();
            x -= matkit::pinv(&a, &tol) * (&a * &x);
        }
        let mut h = vec![EvGeoSeq::zero(); m];
        for (t, &(c, k)) in idx.iter().enumerate() {
            h[c] = h[c].plus(&EvGeoSeq::unit(k).scaled(x[(t, 0)]));
        }
        h
    }
}

/// Extra deficiency vectors of the restricted operator at `lambda`:
/// `w_j = B g_j` with `B = (i - λ̄) + (i + λ̄)W` and `g_j ∈ D` solving
/// `P_D B^H B g_j = P_D (I - W^*) u_j`, so that
/// `<(S - λ̄) f, w_j> = <f, u_j>` for all `f ∈ dom S`.
fn restricted_extra(r: &RestrictedModel, lambda: C64, tol: &TolerancePolicy) -> Result<Vec<HVec>> {
    let p = I - lambda.conj();
    let q = I + lambda.conj();
    let cm = p.conj() * q;
    let c0 = C64::new(p.norm_sqr() + q.norm_sqr(), 0.0);
    let cp = q.conj() * p;
    r.u_list
        .iter()
        .map(|u| {
            let rhs = r.functional(u);
            let chans = rhs
                .chans
                .iter()
                .map(|c| {
                    let g = solve_second_order(cm, c0, cp, c, &[0], tol)?;
                    // B annihilates the ratio -q/p mode of g; what remains of
                    // it is roundoff and would alias the resolvent's ratio.
                    Ok(g.apply_affine(p, q).prune_modes(1e-13))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(HVec::from_chans(chans))
        })
        .collect()
}

/// Basis of `N_λ(S')` for the restricted model: the closed-form `N_λ(S)`
/// followed by the `p` vectors from the weak equation.
pub fn restricted_defect_at(model: &RestrictedModel, lambda: C64, tol: &TolerancePolicy) -> Result<Vec<HVec>> {
    Model::Restricted(model.clone()).deficiency_raw(lambda, tol)
}

/// Orthonormal deficiency bases at a conjugate pair `(λ, λ̄)`, adapted to
/// the splitting `N_λ = L_λ ⊕ N'_λ`: the first `p` vectors span `L_λ`.
#[derive(Debug, Clone)]
pub struct AdaptedPair {
    pub lambda: C64,
    pub basis_n: Vec<HVec>,
    pub basis_nbar: Vec<HVec>,
    /// Orthonormal basis of `L`.
    pub basis_l: Vec<HVec>,
    /// Matrix of `V_λ : L_λ → L_λ̄` in the adapted bases.
    pub v: CMat,
    pub p: usize,
}

impl AdaptedPair {
    pub fn build(model: &Model, lambda: C64, raw_n: Vec<HVec>, raw_nbar: Vec<HVec>, tol: &TolerancePolicy) -> Result<Self> {
        let p = model.p();
        let on = orthonormalize(&raw_n, tol)?;
        let onb = orthonormalize(&raw_nbar, tol)?;
        let basis_l = orthonormalize(&model.l_vectors(), tol)?;
        // Coordinates of P_N l_j and P_Nbar l_j.
        let a = coords_many(&on, &basis_l);
        let b = coords_many(&onb, &basis_l);
        for m in [&a, &b] {
            let rk = matkit::rank(m, tol);
            if rk < p {
                return Err(Error::DegenerateU { rank: rk, expected: p });
            }
        }
        let ra = gram_factor(&(a.adjoint() * &a), tol)?;
        let rb = gram_factor(&(b.adjoint() * &b), tol)?;
        let ra_inv = matkit::solve_square(&ra, &matkit::identity(p), tol)?;
        let qa = &a * &ra_inv;
        let qb = &b * matkit::solve_square(&rb, &matkit::identity(p), tol)?;
        let v = &rb * &ra_inv;
        let basis_n = combine(&on, &adapted_change(&qa));
        let basis_nbar = combine(&onb, &adapted_change(&qb));
        let basis_n = basis_n.iter().map(|x| x.canonical(tol)).collect();
        let basis_nbar = basis_nbar.iter().map(|x| x.canonical(tol)).collect();
        Ok(AdaptedPair { lambda, basis_n, basis_nbar, basis_l, v, p })
    }

    pub fn n_dim(&self) -> usize {
        self.basis_n.len()
    }

    pub fn nbar_dim(&self) -> usize {
        self.basis_nbar.len()
    }
}

/// Unitary `[Q | Q_perp]` whose leading columns are the orthonormal `Q`.
fn adapted_change(q: &CMat) -> CMat {
    let n = q.nrows();
    let comp = matkit::complement_basis(q);
    let mut out = CMat::zeros(n, n);
    out.view_mut((0, 0), (n, q.ncols())).copy_from(q);
    out.view_mut((0, q.ncols()), (n, comp.ncols())).copy_from(&comp);
    out
}

/// Deficiency data at `λ = ±i` in fixed orthonormal bases.
#[derive(Debug, Clone)]
pub struct DefectData {
    pub model: Model,
    /// Orthonormal basis of `N_i`; the first `p` vectors span `L_i`.
    pub basis_ni: Vec<HVec>,
    /// Orthonormal basis of `N_{-i}`; the first `p` vectors span `L_{-i}`.
    pub basis_nmi: Vec<HVec>,
    pub basis_l: Vec<HVec>,
    /// Coordinates (in `basis_ni`) of an orthonormal basis of `L_i`.
    pub basis_li: CMat,
    pub basis_lmi: CMat,
    /// `V_i : L_i → L_{-i}` in the bases above.
    pub v_i: CMat,
    pub basis_nip: CMat,
    pub basis_nmip: CMat,
    pub n_plus: usize,
    pub n_minus: usize,
    pub np_plus: usize,
    pub np_minus: usize,
    pub p: usize,
}

impl DefectData {
    pub fn new(model: &Model, tol: &TolerancePolicy) -> Result<Self> {
        let pair = AdaptedPair::build(model, I, model.deficiency_at_pm_i(1.0)?, model.deficiency_at_pm_i(-1.0)?, tol)?;
        let p = pair.p;
        let (n_plus, n_minus) = (pair.n_dim(), pair.nbar_dim());
        let leading = |n: usize| CMat::from_fn(n, p, |i, j| if i == j { ONE } else { ZERO });
        let trailing = |n: usize| CMat::from_fn(n, n - p, |i, j| if i == j + p { ONE } else { ZERO });
        Ok(DefectData {
            model: model.clone(),
            basis_li: leading(n_plus),
            basis_lmi: leading(n_minus),
            basis_nip: trailing(n_plus),
            basis_nmip: trailing(n_minus),
            v_i: pair.v,
            basis_ni: pair.basis_n,
            basis_nmi: pair.basis_nbar,
            basis_l: pair.basis_l,
            n_plus,
            n_minus,
            np_plus: n_plus - p,
            np_minus: n_minus - p,
            p,
        })
    }

    pub fn nip_vectors(&self) -> Vec<HVec> {
        self.basis_ni[self.p..].to_vec()
    }

    pub fn nmip_vectors(&self) -> Vec<HVec> {
        self.basis_nmi[self.p..].to_vec()
    }

    /// `V_{-i} = V_i^{-1} = V_i^H`.
    pub fn v_minus_i(&self) -> CMat {
        self.v_i.adjoint()
    }
}

/// Residual of `(S - λ̄)(S - λ)^{-1} P_{M_λ} h = P_{M_λ̄} h` for the given
/// `h`, with `P_{M_λ} = I - P_{N_λ̄}`.
pub fn krasnoselskii_residual(model: &Model, lambda: C64, h: &HVec, tol: &TolerancePolicy) -> Result<f64> {
    let n_l = model.deficiency_raw(lambda, tol)?;
    let n_lb = model.deficiency_raw(lambda.conj(), tol)?;
    let pm = h.minus(&project(&n_lb, h, tol)?);
    let k = model.resolvent_solve(lambda, &pm, tol)?;
    let lhs = HVec::from_chans(k.iter().map(|c| c.apply_affine(I - lambda.conj(), I + lambda.conj())).collect());
    let rhs = h.minus(&project(&n_l, h, tol)?);
    Ok(model.embed(lhs).minus(&rhs).norm())
}

/// Residual of `(P_{N_λ} - P_{N_λ̄}) h = -2i Im λ (S - λ)^{-1} P_{M_λ} h`,
/// which exhibits `(I - V_λ) P_{N_λ} h ∈ dom S`.
pub fn forbis_preimage_residual(model: &Model, lambda: C64, h: &HVec, tol: &TolerancePolicy) -> Result<f64> {
    let n_l = model.deficiency_raw(lambda, tol)?;
    let n_lb = model.deficiency_raw(lambda.conj(), tol)?;
    let pn = project(&n_l, h, tol)?;
    let pnb = project(&n_lb, h, tol)?;
    let k = model.resolvent_solve(lambda, &h.minus(&pnb), tol)?;
    let (g, _) = model.base().apply(&k)?;
    let lhs = pn.minus(&pnb);
    let rhs = model.embed(g).scaled(-I * 2.0 * lambda.im);
    Ok(lhs.minus(&rhs).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tol() -> TolerancePolicy {
        TolerancePolicy::default()
    }

    fn e(k: i64) -> HVec {
        HVec::unit(1, 0, k)
    }

    fn close(a: &HVec, b: &HVec, eps: f64) -> bool {
        a.minus(b).norm() < eps
    }

    #[test]
    fn shift_apply_example() {
        let s = ShiftModel::new(1).unwrap();
        let (f, sf) = s.apply(&[EvGeoSeq::unit(1)]).unwrap();
        assert!(close(&f, &e(1).minus(&e(2)), 1e-15));
        assert!(close(&sf, &e(1).plus(&e(2)).scaled(I), 1e-15));
        assert!(s.apply(&[EvGeoSeq::unit(0)]).is_err());
    }

    #[test]
    fn shift_symmetry_on_samples() {
        let model = Model::shift(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let h = model.sample_domain(&mut rng);
            let (f, sf) = model.apply(&h, &tol()).unwrap();
            assert!(sf.inner(&f).im.abs() < 1e-12);
        }
    }

    #[test]
    fn shift_deficiency_orthogonal_to_ranges() {
        // N_z ⊥ ran(S - z̄) checked on random domain vectors.
        let model = Model::shift(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for z in [I, -I, C64::new(1.0, 2.0), C64::new(-0.5, -0.3)] {
            let n = model.deficiency_raw(z, &tol()).unwrap();
            for _ in 0..50 {
                let h = model.sample_domain(&mut rng);
                let (f, sf) = model.apply(&h, &tol()).unwrap();
                let r = sf.axpy(-z.conj(), &f);
                for v in &n {
                    assert!(r.inner(v).norm() < 1e-12, "z = {z}");
                }
            }
        }
    }

    #[test]
    fn shift_defect_data() {
        for m in 1..=3 {
            let dd = DefectData::new(&Model::shift(m).unwrap(), &tol()).unwrap();
            assert_eq!((dd.n_plus, dd.n_minus, dd.p), (m, m, 0));
            for c in 0..m {
                assert!(close(&dd.basis_ni[c], &HVec::unit(m, c, 0), 1e-15));
                assert!(close(&dd.basis_nmi[c], &HVec::unit(m, c, 1), 1e-15));
            }
        }
    }

    #[test]
    fn exit_defect_data() {
        let dd = DefectData::new(&Model::exit(1, 1).unwrap(), &tol()).unwrap();
        assert_eq!((dd.n_plus, dd.p, dd.np_plus), (2, 1, 1));
        assert!((dd.v_i[(0, 0)] - ONE).norm() < 1e-15);
        assert!(close(&dd.basis_ni[0], &HVec::ext_unit(1, 1, 0), 1e-15));
        assert!(close(&dd.nip_vectors()[0], &HVec { chans: vec![EvGeoSeq::unit(0)], ext: vec![ZERO] }, 1e-15));
    }

    #[test]
    fn restricted_defect_data_example() {
        let model = Model::restricted(1, vec![e(2)]).unwrap();
        let dd = DefectData::new(&model, &tol()).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let want_l = e(2).minus(&e(1)).scaled(C64::new(s, 0.0));
        // L_i leads the adapted basis; its phase is fixed by Gram-Schmidt.
        let ph = dd.basis_ni[0].inner(&want_l);
        assert!((ph.norm() - 1.0).abs() < 1e-14);
        assert!(close(&dd.basis_ni[1], &e(0), 1e-14) || close(&dd.basis_ni[1], &e(0).scaled(-ONE), 1e-14));
        let want_lm = e(3).minus(&e(2)).scaled(C64::new(s, 0.0));
        assert!((dd.basis_nmi[0].inner(&want_lm).norm() - 1.0).abs() < 1e-14);
        assert!((dd.v_i.adjoint() * &dd.v_i - matkit::identity(1)).norm() < 1e-12);
        // Orthogonality of N_i(S') against (S' + i) applied to samples.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..30 {
            let h = model.sample_domain(&mut rng);
            let (f, sf) = model.apply(&h, &tol()).unwrap();
            let r = sf.axpy(I, &f);
            for v in &dd.basis_ni {
                assert!(r.inner(v).norm() < 1e-12);
            }
            let r2 = sf.axpy(-I, &f);
            for v in &dd.basis_nmi {
                assert!(r2.inner(v).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn general_lambda_reproduces_finite_formula_at_i() {
        let model = Model::restricted(1, vec![e(2).plus(&e(-1).scaled(C64::new(0.5, 0.5)))]).unwrap();
        for sign in [1.0, -1.0] {
            let z = I * sign;
            let a = model.deficiency_raw(z, &tol()).unwrap();
            let b = model.deficiency_at_pm_i(sign).unwrap();
            // Same span: projecting one basis onto the other is lossless.
            for v in &a {
                let r = v.minus(&project(&b, v, &tol()).unwrap());
                assert!(r.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn weak_equation_at_two_i() {
        let model = Model::restricted(1, vec![e(2)]).unwrap();
        let lambda = I * 2.0;
        let n = model.deficiency_raw(lambda, &tol()).unwrap();
        assert_eq!(n.len(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let h = model.sample_domain(&mut rng);
            let (f, sf) = model.apply(&h, &tol()).unwrap();
            let r = sf.axpy(-lambda.conj(), &f);
            for v in &n {
                assert!(r.inner(v).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn closed_form_deficiency_satisfies_recurrence() {
        // φ_λ(k) = q^k, k <= 0, solves (i - λ̄)x̄_k... equivalently it is
        // annihilated by P_D B^H with B = (i - λ̄) + (i + λ̄)W.
        let lambda = C64::new(0.3, 1.7);
        let phi = ShiftModel::new(1).unwrap().deficiency(lambda).unwrap().remove(0).chans.remove(0);
        let (p, q) = (I - lambda.conj(), I + lambda.conj());
        let bh = phi.scaled(p.conj()).plus(&phi.shift(-1).scaled(q.conj()));
        assert!(bh.zero_on(&[0]).norm() < 1e-15);
    }

    #[test]
    fn krasnoselskii_identity() {
        let model = Model::restricted(1, vec![e(2), e(-1).plus(&e(3).scaled(I))]).unwrap();
        for lambda in [I, -I, I * 2.0, -I * 2.0, C64::new(1.0, 1.0)] {
            for h in model.l_vectors() {
                let r = krasnoselskii_residual(&model, lambda, &h, &tol()).unwrap();
                assert!(r < 1e-10, "lambda {lambda}: {r}");
                let r = forbis_preimage_residual(&model, lambda, &h, &tol()).unwrap();
                assert!(r < 1e-10, "lambda {lambda}: {r}");
            }
        }
    }

    #[test]
    fn compressed_operator_is_symmetric() {
        let model = Model::restricted(1, vec![e(2)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let (f, s0f) = model.apply_compressed(&model.sample_domain(&mut rng), &tol()).unwrap();
            let (g, s0g) = model.apply_compressed(&model.sample_domain(&mut rng), &tol()).unwrap();
            assert!((s0f.inner(&g) - f.inner(&s0g)).norm() < 1e-12);
            assert!(s0f.inner(&model.l_vectors()[0]).norm() < 1e-12);
        }
    }

    #[test]
    fn degenerate_u_rejected() {
        let model = Model::restricted(1, vec![e(2), e(2).scaled(C64::new(2.0, 0.0))]).unwrap();
        assert!(matches!(DefectData::new(&model, &tol()), Err(Error::DegenerateU { .. })));
    }

    #[test]
    fn density_certificate() {
        let c = ShiftModel::new(2).unwrap().density_certificate();
        assert_eq!(c.witness_ratio, Some(ONE));
    }
}
