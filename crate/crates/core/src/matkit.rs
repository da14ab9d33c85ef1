//! Dense complex matrices and subspaces with one explicit tolerance policy.
//!
//! Everything here is generic over the real scalar so the same routines run
//! in `f32` and `f64`; the operator layers above use the `f64` aliases.

use nalgebra::{DMatrix, RealField};
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real scalar the matrix layer is generic over.
pub trait RealScalar: RealField + Copy + FromPrimitive + ToPrimitive {}

impl RealScalar for f32 {}
impl RealScalar for f64 {}

pub type ComplexMatrix<T> = DMatrix<Complex<T>>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TolerancePolicy {
    /// Singular values below `rank_tol * sigma_max` count as zero.
    pub rank_tol: f64,
    /// Operator-norm threshold for equality checks.
    pub eq_tol: f64,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        TolerancePolicy { rank_tol: 1e-10, eq_tol: 1e-9 }
    }
}

impl TolerancePolicy {
    pub fn new(rank_tol: f64, eq_tol: f64) -> Result<Self> {
        if !(rank_tol > 0.0 && eq_tol > 0.0) {
            return Err(Error::PreconditionViolated(format!(
                "tolerances must be positive (rank_tol {rank_tol}, eq_tol {eq_tol})"
            )));
        }
        Ok(TolerancePolicy { rank_tol, eq_tol })
    }
}

fn real<T: RealScalar>(x: f64) -> T {
    nalgebra::convert(x)
}

fn to64<T: RealScalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

fn cx<T: RealScalar>(x: T) -> Complex<T> {
    Complex::new(x, T::zero())
}

pub fn identity<T: RealScalar>(n: usize) -> ComplexMatrix<T> {
    DMatrix::identity(n, n)
}

pub fn zeros<T: RealScalar>(r: usize, c: usize) -> ComplexMatrix<T> {
    DMatrix::zeros(r, c)
}

pub fn ensure_finite<T: RealScalar>(m: &ComplexMatrix<T>) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

fn to_faer<T: RealScalar>(a: &ComplexMatrix<T>) -> faer::Mat<faer::c64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| {
        let z = a[(i, j)];
        faer::c64::new(to64(z.re), to64(z.im))
    })
}

fn from_faer<T: RealScalar>(a: faer::MatRef<'_, faer::c64>) -> ComplexMatrix<T> {
    ComplexMatrix::<T>::from_fn(a.nrows(), a.ncols(), |i, j| {
        let z = a[(i, j)];
        Complex::new(real(z.re), real(z.im))
    })
}

/// Full singular value decomposition `a = u * diag(s) * v^H` with square
/// `u`, `v` and singular values sorted in decreasing order.
///
/// Decompositions run in `f64` through faer; nalgebra's complex SVD loses
/// digits on rank-deficient Hermitian inputs (reconstruction errors of
/// order 0.1 were observed on `I - Y Y^H` with `|Y| = 1`).
pub fn svd_full<T: RealScalar>(a: &ComplexMatrix<T>) -> (ComplexMatrix<T>, Vec<T>, ComplexMatrix<T>) {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return (identity(r), Vec::new(), identity(c));
    }
    let svd = to_faer(a).svd().expect("SVD of a finite matrix converges");
    let s = svd.S().column_vector();
    let s: Vec<T> = (0..r.min(c)).map(|k| real(s[k].re)).collect();
    (from_faer(svd.U()), s, from_faer(svd.V()))
}

/// Eigenvalues in increasing order and orthonormal eigenvectors of the
/// Hermitian part of `h`.
pub fn herm_eigen<T: RealScalar>(h: &ComplexMatrix<T>) -> (Vec<T>, ComplexMatrix<T>) {
    let n = h.nrows();
    if n == 0 {
        return (Vec::new(), zeros(0, 0));
    }
    let sym = (h + h.adjoint()) * cx(real::<T>(0.5));
    let e = to_faer(&sym).self_adjoint_eigen(faer::Side::Lower).expect("Hermitian eigensolver converges");
    let s = e.S().column_vector();
    ((0..n).map(|k| real(s[k].re)).collect(), from_faer(e.U()))
}

/// Orthonormal basis of the orthogonal complement of the orthonormal
/// columns `q`, built greedily from the standard basis vectors that keep the
/// largest residual. Deterministic, and returns coordinate vectors whenever
/// the complement is itself a coordinate subspace.
pub fn complement_basis<T: RealScalar>(q: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    let n = q.nrows();
    let target = n - q.ncols().min(n);
    let mut basis: Vec<nalgebra::DVector<Complex<T>>> = (0..q.ncols()).map(|j| q.column(j).into_owned()).collect();
    let mut out = zeros::<T>(n, target);
    for slot in 0..target {
        let mut best: Option<(T, nalgebra::DVector<Complex<T>>)> = None;
        for k in 0..n {
            let mut v = nalgebra::DVector::<Complex<T>>::zeros(n);
            v[k] = Complex::new(T::one(), T::zero());
            for _ in 0..2 {
                for b in &basis {
                    let proj = b.dotc(&v);
                    v -= b * proj;
                }
            }
            let nrm = v.norm();
            if best.as_ref().is_none_or(|(bn, _)| nrm > *bn + real::<T>(1e-12)) {
                best = Some((nrm, v));
            }
        }
        let (nrm, v) = best.expect("n > 0 when a slot remains");
        let v = v / cx(nrm);
        out.set_column(slot, &v);
        basis.push(v);
    }
    out
}

pub fn singular_values<T: RealScalar>(a: &ComplexMatrix<T>) -> Vec<T> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    svd_full(a).1
}

/// Spectral norm; zero for empty matrices.
pub fn op_norm<T: RealScalar>(a: &ComplexMatrix<T>) -> T {
    singular_values(a).first().copied().unwrap_or_else(T::zero)
}

/// Smallest singular value of a square matrix; `+inf` for the 0×0 matrix.
pub fn sigma_min<T: RealScalar>(a: &ComplexMatrix<T>) -> T {
    singular_values(a).last().copied().unwrap_or_else(|| real(f64::INFINITY))
}

fn cutoff<T: RealScalar>(s: &[T], tol: &TolerancePolicy) -> T {
    let smax = s.first().copied().unwrap_or_else(T::zero);
    // Never treat roundoff-sized matrices as having rank: the floor keeps
    // an all-zero-up-to-1e-14 matrix at rank zero.
    let floor = real::<T>(tol.rank_tol * 1e-3);
    (smax * real(tol.rank_tol)).max(floor)
}

pub fn rank<T: RealScalar>(a: &ComplexMatrix<T>, tol: &TolerancePolicy) -> usize {
    let s = singular_values(a);
    let cut = cutoff(&s, tol);
    s.iter().filter(|&&x| x > cut).count()
}

/// Orthonormal basis of the column space.
pub fn range_basis<T: RealScalar>(a: &ComplexMatrix<T>, tol: &TolerancePolicy) -> ComplexMatrix<T> {
    let (u, s, _) = svd_full(a);
    let cut = cutoff(&s, tol);
    let r = s.iter().filter(|&&x| x > cut).count();
    u.columns(0, r).into_owned()
}

/// Orthonormal basis of the null space.
pub fn null_basis<T: RealScalar>(a: &ComplexMatrix<T>, tol: &TolerancePolicy) -> ComplexMatrix<T> {
    let (_, s, v) = svd_full(a);
    let cut = cutoff(&s, tol);
    let r = s.iter().filter(|&&x| x > cut).count();
    let c = a.ncols();
    v.columns(r, c - r).into_owned()
}

/// Moore–Penrose pseudoinverse with the relative singular-value cutoff.
pub fn pinv<T: RealScalar>(a: &ComplexMatrix<T>, tol: &TolerancePolicy) -> ComplexMatrix<T> {
    let (r, c) = a.shape();
    let (u, s, v) = svd_full(a);
    let cut = cutoff(&s, tol);
    let mut out = zeros::<T>(c, r);
    for (k, &sk) in s.iter().enumerate() {
        if sk > cut {
            let inv = cx(T::one() / sk);
            out += v.column(k) * u.column(k).adjoint() * inv;
        }
    }
    out
}

/// Square root of a Hermitian positive semidefinite matrix; eigenvalues that
/// are negative by roundoff are clamped to zero.
pub fn herm_sqrt<T: RealScalar>(h: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    herm_fn(h, |x| if x > T::zero() { x.sqrt() } else { T::zero() })
}

/// Applies a real function to the spectrum of a Hermitian matrix.
pub fn herm_fn<T: RealScalar>(h: &ComplexMatrix<T>, f: impl Fn(T) -> T) -> ComplexMatrix<T> {
    let n = h.nrows();
    if n == 0 {
        return zeros(0, 0);
    }
    let (vals, vecs) = herm_eigen(h);
    let d = DMatrix::from_fn(n, n, |i, j| if i == j { cx(f(vals[i])) } else { Complex::new(T::zero(), T::zero()) });
    &vecs * d * vecs.adjoint()
}

/// Defect operator `(I - Z^H Z)^{1/2}`.
pub fn defect<T: RealScalar>(z: &ComplexMatrix<T>, tol: &TolerancePolicy) -> Result<ComplexMatrix<T>> {
    Ok(defect_pair(z, tol)?.0)
}

/// `(D_Z, D_{Z*})` from a single SVD, so that `Z D_Z = D_{Z*} Z` holds to
/// roundoff even for singular values near one, where independent square
/// roots would each carry an error of order `eps / D`.
pub fn defect_pair<T: RealScalar>(
    z: &ComplexMatrix<T>,
    tol: &TolerancePolicy,
) -> Result<(ComplexMatrix<T>, ComplexMatrix<T>)> {
    ensure_finite(z)?;
    let nz = op_norm(z);
    if nz > real(1.0 + tol.eq_tol) {
        return Err(Error::NotAContraction(to64(nz)));
    }
    let (r, c) = z.shape();
    if r == 0 || c == 0 {
        return Ok((identity(c), identity(r)));
    }
    let (u, s, v) = svd_full(z);
    let d = |k: usize| -> T {
        match s.get(k) {
            Some(&sk) => {
                let sk = sk.min(T::one());
                ((T::one() - sk) * (T::one() + sk)).sqrt()
            }
            None => T::one(),
        }
    };
    let dz = &v * DMatrix::from_fn(c, c, |i, j| if i == j { cx(d(i)) } else { cx(T::zero()) }) * v.adjoint();
    let dzs = &u * DMatrix::from_fn(r, r, |i, j| if i == j { cx(d(i)) } else { cx(T::zero()) }) * u.adjoint();
    Ok((dz, dzs))
}

/// Clamps singular values in `(1, 1 + slack]` to one. Blocks recovered
/// through pseudo-inverses of defect operators overshoot the unit ball by
/// roughly `eps / sigma_min(D)`; anything beyond `slack` is a genuine error.
pub fn clamp_contraction<T: RealScalar>(a: &ComplexMatrix<T>, slack: f64) -> Result<ComplexMatrix<T>> {
    ensure_finite(a)?;
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return Ok(a.clone());
    }
    let (u, s, v) = svd_full(a);
    let top = s.first().copied().unwrap_or_else(T::zero);
    if top <= T::one() {
        return Ok(a.clone());
    }
    if top > real(1.0 + slack) {
        return Err(Error::NotAContraction(to64(top)));
    }
    let k = s.len();
    let d = DMatrix::from_fn(k, k, |i, j| if i == j { cx(s[i].min(T::one())) } else { cx(T::zero()) });
    Ok(u.columns(0, k) * d * v.columns(0, k).adjoint())
}

/// `T22 - T21 (T11 - shift)^{-1} T12` for the block split at `(rows, cols)`.
pub fn schur_complement<T: RealScalar>(
    t: &ComplexMatrix<T>,
    split: (usize, usize),
    shift: &ComplexMatrix<T>,
    tol: &TolerancePolicy,
) -> Result<ComplexMatrix<T>> {
    let (r, c) = t.shape();
    let (r1, c1) = split;
    if r1 > r || c1 > c || shift.shape() != (r1, c1) {
        return Err(Error::DimensionMismatch(format!(
            "split {split:?} of {r}x{c} with shift {:?}",
            shift.shape()
        )));
    }
    if r1 != c1 {
        return Err(Error::DimensionMismatch(format!("pivot block {r1}x{c1} is not square")));
    }
    let t11 = t.view((0, 0), (r1, c1)).into_owned() - shift;
    let t12 = t.view((0, c1), (r1, c - c1)).into_owned();
    let t21 = t.view((r1, 0), (r - r1, c1)).into_owned();
    let t22 = t.view((r1, c1), (r - r1, c - c1)).into_owned();
    Ok(t22 - t21 * solve_square(&t11, &t12, tol)?)
}

/// Solves `a x = b` for square `a`, rejecting pivots with
/// `sigma_min(a) < rank_tol * max(1, sigma_max(a))`.
pub fn solve_square<T: RealScalar>(
    a: &ComplexMatrix<T>,
    b: &ComplexMatrix<T>,
    tol: &TolerancePolicy,
) -> Result<ComplexMatrix<T>> {
    if a.nrows() != a.ncols() || a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "solve with {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    if a.nrows() == 0 {
        return Ok(zeros(0, b.ncols()));
    }
    let s = singular_values(a);
    let smin = *s.last().unwrap();
    if smin < real::<T>(tol.rank_tol) * s[0].max(T::one()) {
        return Err(Error::SingularPivot(to64(smin)));
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::SingularPivot(to64(smin)))
}

/// Polar factors `t = |t^H| v` with `|t^H| = (t t^H)^{1/2}` and `v` a partial
/// isometry vanishing on `ker t`.
pub fn polar<T: RealScalar>(t: &ComplexMatrix<T>, tol: &TolerancePolicy) -> (ComplexMatrix<T>, ComplexMatrix<T>) {
    let (r, c) = t.shape();
    let (u, s, v) = svd_full(t);
    let cut = cutoff(&s, tol);
    let mut abs = zeros::<T>(r, r);
    let mut iso = zeros::<T>(r, c);
    for (k, &sk) in s.iter().enumerate() {
        if sk > cut {
            let uk = u.column(k);
            abs += uk * uk.adjoint() * cx(sk);
            iso += uk * v.column(k).adjoint();
        }
    }
    (abs, iso)
}

/// Least-squares solution of `a x = b` together with the relative residual
/// `|a x - b| / max(|b|, 1e-300)`.
pub fn lstsq<T: RealScalar>(
    a: &ComplexMatrix<T>,
    b: &ComplexMatrix<T>,
    tol: &TolerancePolicy,
) -> (ComplexMatrix<T>, T) {
    let x = pinv(a, tol) * b;
    let res = (a * &x - b).norm();
    let bn = b.norm().max(real(1e-300));
    (x, res / bn)
}

/// Whether every column of `b` lies in `ran a`, in the least-squares sense.
pub fn in_range<T: RealScalar>(a: &ComplexMatrix<T>, b: &ComplexMatrix<T>, tol: &TolerancePolicy) -> bool {
    if b.norm() <= real(tol.eq_tol * 1e-3) {
        return true;
    }
    lstsq(a, b, tol).1 <= real(tol.eq_tol)
}

/// Closed subspace of `C^n` stored by an orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace<T: RealScalar> {
    pub ambient_dim: usize,
    pub basis: ComplexMatrix<T>,
}

impl<T: RealScalar> Subspace<T> {
    pub fn zero(n: usize) -> Self {
        Subspace { ambient_dim: n, basis: zeros(n, 0) }
    }

    pub fn full(n: usize) -> Self {
        Subspace { ambient_dim: n, basis: identity(n) }
    }

    /// Column space of `vectors`, re-orthonormalized.
    pub fn span(vectors: &ComplexMatrix<T>, tol: &TolerancePolicy) -> Self {
        Subspace { ambient_dim: vectors.nrows(), basis: range_basis(vectors, tol) }
    }

    pub fn kernel(a: &ComplexMatrix<T>, tol: &TolerancePolicy) -> Self {
        Subspace { ambient_dim: a.ncols(), basis: null_basis(a, tol) }
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_zero(&self) -> bool {
        self.dim() == 0
    }

    pub fn projector(&self) -> ComplexMatrix<T> {
        &self.basis * self.basis.adjoint()
    }

    pub fn complement(&self, tol: &TolerancePolicy) -> Self {
        Subspace::kernel(&self.basis.adjoint(), tol)
    }

    /// Whether `other` is contained in `self`: `|P_self^perp B_other| < eq_tol`.
    pub fn contains(&self, other: &Subspace<T>, tol: &TolerancePolicy) -> bool {
        let resid = &other.basis - self.projector() * &other.basis;
        op_norm(&resid) < real(tol.eq_tol)
    }

    pub fn same_as(&self, other: &Subspace<T>, tol: &TolerancePolicy) -> bool {
        self.dim() == other.dim() && self.contains(other, tol) && other.contains(self, tol)
    }

    pub fn sum(&self, other: &Subspace<T>, tol: &TolerancePolicy) -> Result<Self> {
        check_ambient(self, other)?;
        let mut m = zeros::<T>(self.ambient_dim, self.dim() + other.dim());
        m.view_mut((0, 0), (self.ambient_dim, self.dim())).copy_from(&self.basis);
        m.view_mut((0, self.dim()), (self.ambient_dim, other.dim())).copy_from(&other.basis);
        Ok(Subspace::span(&m, tol))
    }

    /// Image of the subspace under `a`.
    pub fn image(&self, a: &ComplexMatrix<T>, tol: &TolerancePolicy) -> Self {
        Subspace::span(&(a * &self.basis), tol)
    }
}

fn check_ambient<T: RealScalar>(a: &Subspace<T>, b: &Subspace<T>) -> Result<()> {
    if a.ambient_dim != b.ambient_dim {
        return Err(Error::DimensionMismatch(format!(
            "ambient dimensions {} and {}",
            a.ambient_dim, b.ambient_dim
        )));
    }
    Ok(())
}

/// Intersection via principal angles: directions whose cosine is at least
/// `1 - rank_tol` are shared.
pub fn subspace_meet<T: RealScalar>(a: &Subspace<T>, b: &Subspace<T>, tol: &TolerancePolicy) -> Result<Subspace<T>> {
    check_ambient(a, b)?;
    if a.is_zero() || b.is_zero() {
        return Ok(Subspace::zero(a.ambient_dim));
    }
    let cross = a.basis.adjoint() * &b.basis;
    let (u, s, _) = svd_full(&cross);
    let keep = s.iter().filter(|&&c| c >= real::<T>(1.0 - tol.rank_tol)).count();
    let vecs = &a.basis * u.columns(0, keep);
    Ok(Subspace::span(&vecs, tol))
}

/// JSON form of an `f64` matrix: row-major real and imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<&ComplexMatrix<f64>> for MatrixJson {
    fn from(m: &ComplexMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        let mut re = Vec::with_capacity(rows * cols);
        let mut im = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                re.push(m[(i, j)].re);
                im.push(m[(i, j)].im);
            }
        }
        MatrixJson { rows, cols, re, im }
    }
}

impl TryFrom<&MatrixJson> for ComplexMatrix<f64> {
    type Error = Error;

    fn try_from(j: &MatrixJson) -> Result<Self> {
        let n = j.rows * j.cols;
        if j.re.len() != n || j.im.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix with {} real and {} imaginary parts",
                j.rows,
                j.cols,
                j.re.len(),
                j.im.len()
            )));
        }
        let m = DMatrix::from_fn(j.rows, j.cols, |r, c| Complex::new(j.re[r * j.cols + c], j.im[r * j.cols + c]));
        ensure_finite(&m)?;
        Ok(m)
    }
}

/// Serde adapter for `ComplexMatrix<f64>` fields.
pub mod serde_cmat {
    use super::{ComplexMatrix, MatrixJson};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &ComplexMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        MatrixJson::from(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ComplexMatrix<f64>, D::Error> {
        let j = MatrixJson::deserialize(d)?;
        ComplexMatrix::<f64>::try_from(&j).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct SubspaceJson {
    ambient_dim: usize,
    basis: MatrixJson,
}

impl Serialize for Subspace<f64> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SubspaceJson { ambient_dim: self.ambient_dim, basis: MatrixJson::from(&self.basis) }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Subspace<f64> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = SubspaceJson::deserialize(d)?;
        let basis = ComplexMatrix::<f64>::try_from(&j.basis).map_err(serde::de::Error::custom)?;
        if basis.nrows() != j.ambient_dim {
            return Err(serde::de::Error::custom("basis rows differ from the ambient dimension"));
        }
        Ok(Subspace { ambient_dim: j.ambient_dim, basis })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::CMat;
    use num_complex::Complex64 as C;

    fn m(rows: usize, cols: usize, v: &[f64]) -> CMat {
        CMat::from_fn(rows, cols, |i, j| C::new(v[i * cols + j], 0.0))
    }

    #[test]
    fn defect_of_nilpotent_jordan_block() {
        let z = m(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let d = defect(&z, &TolerancePolicy::default()).unwrap();
        assert!((d - m(2, 2, &[1.0, 0.0, 0.0, 0.0])).norm() < 1e-14);
    }

    #[test]
    fn defect_rejects_expansions() {
        let z = m(1, 1, &[1.5]);
        assert!(matches!(defect(&z, &TolerancePolicy::default()), Err(Error::NotAContraction(_))));
    }

    #[test]
    fn schur_examples() {
        let tol = TolerancePolicy::default();
        let t = m(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        let s = schur_complement(&t, (1, 1), &zeros(1, 1), &tol).unwrap();
        assert!((s[(0, 0)] - C::new(0.5, 0.0)).norm() < 1e-15);
        let swap = m(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let s = schur_complement(&swap, (1, 1), &identity(1), &tol).unwrap();
        assert!((s[(0, 0)] - C::new(1.0, 0.0)).norm() < 1e-15);
        let sing = schur_complement(&swap, (1, 1), &zeros(1, 1), &tol);
        assert!(matches!(sing, Err(Error::SingularPivot(_))));
    }

    #[test]
    fn polar_of_scaled_shift() {
        let t = m(2, 2, &[0.0, 2.0, 0.0, 0.0]);
        let (a, v) = polar(&t, &TolerancePolicy::default());
        assert!((a - m(2, 2, &[2.0, 0.0, 0.0, 0.0])).norm() < 1e-14);
        assert!((v - m(2, 2, &[0.0, 1.0, 0.0, 0.0])).norm() < 1e-14);
    }

    #[test]
    fn polar_of_zero_is_zero() {
        let (a, v) = polar(&zeros::<f64>(2, 3), &TolerancePolicy::default());
        assert_eq!(a.norm(), 0.0);
        assert_eq!(v.norm(), 0.0);
    }

    #[test]
    fn meet_of_coordinate_planes() {
        let tol = TolerancePolicy::default();
        let e = identity::<f64>(3);
        let a = Subspace::span(&e.columns(0, 2).into_owned(), &tol);
        let b = Subspace::span(&e.columns(1, 2).into_owned(), &tol);
        let c = subspace_meet(&a, &b, &tol).unwrap();
        assert_eq!(c.dim(), 1);
        assert!((c.basis[(1, 0)].norm() - 1.0).abs() < 1e-14);
        let d = subspace_meet(&Subspace::span(&e.columns(0, 1).into_owned(), &tol), &Subspace::span(&e.columns(1, 1).into_owned(), &tol), &tol).unwrap();
        assert!(d.is_zero());
        assert!(subspace_meet(&a, &Subspace::zero(4), &tol).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let tol = TolerancePolicy { rank_tol: 1e-5, eq_tol: 1e-4 };
        let z = ComplexMatrix::<f32>::from_fn(2, 2, |i, j| Complex::new(if i == 0 && j == 1 { 0.6 } else { 0.0 }, 0.0));
        let d = defect(&z, &tol).unwrap();
        assert!((d[(1, 1)].re - 0.8).abs() < 1e-5);
        assert!((d[(0, 0)].re - 1.0).abs() < 1e-5);
        let (a, v) = polar(&z, &tol);
        assert!((a * v - z).norm() < 1e-5);
    }

    #[test]
    fn matrix_json_round_trip() {
        let a = CMat::from_fn(2, 3, |i, j| C::new(i as f64, j as f64 - 0.5));
        let j = MatrixJson::from(&a);
        let b = CMat::try_from(&j).unwrap();
        assert_eq!(a, b);
        let bad = MatrixJson { rows: 2, cols: 2, re: vec![0.0; 3], im: vec![0.0; 4] };
        assert!(CMat::try_from(&bad).is_err());
    }
}
