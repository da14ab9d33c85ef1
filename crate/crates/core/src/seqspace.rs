//! Exact arithmetic on eventually geometric sequences in `ℓ²(ℤ)`.
//!
//! A sequence is a finite map of explicit entries plus finitely many
//! geometric tails. Inner products, shifts and first/second order shift
//! resolvents stay inside this class in closed form, so no series is ever
//! truncated; "exact" means exact up to floating-point roundoff.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matkit::{self, TolerancePolicy};
use crate::{CMat, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Supported on `k >= start`, decaying as `k -> +inf` (`|ratio| < 1`).
    Upper,
    /// Supported on `k <= start`, decaying as `k -> -inf` (`|ratio| > 1`).
    Lower,
}

/// The tail `coeff * ratio^(k - start)` on one side of `start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoMode {
    pub side: Side,
    pub ratio: C64,
    pub coeff: C64,
    pub start: i64,
}

impl GeoMode {
    pub fn new(side: Side, ratio: C64, coeff: C64, start: i64) -> Result<Self> {
        let ok = match side {
            Side::Upper => ratio.norm() < 1.0 && ratio != ZERO,
            Side::Lower => ratio.norm() > 1.0 && ratio.is_finite(),
        };
        if !ok {
            return Err(Error::CriticalRoot(ratio.norm()));
        }
        Ok(GeoMode { side, ratio, coeff, start })
    }

    pub fn covers(&self, k: i64) -> bool {
        match self.side {
            Side::Upper => k >= self.start,
            Side::Lower => k <= self.start,
        }
    }

    pub fn value(&self, k: i64) -> C64 {
        if self.covers(k) {
            self.coeff * pow(self.ratio, k - self.start)
        } else {
            ZERO
        }
    }

    /// Same tail expressed from a later (upper) or earlier (lower) start,
    /// returning the explicit entries that were cut off.
    fn reanchor(&self, new_start: i64) -> (GeoMode, Vec<(i64, C64)>) {
        let cut: Vec<i64> = match self.side {
            Side::Upper => (self.start..new_start).collect(),
            Side::Lower => (new_start + 1..=self.start).collect(),
        };
        let entries = cut.into_iter().map(|k| (k, self.value(k))).collect();
        let coeff = self.coeff * pow(self.ratio, new_start - self.start);
        (GeoMode { coeff, start: new_start, ..*self }, entries)
    }
}

fn pow(z: C64, e: i64) -> C64 {
    if e == 0 {
        return ONE;
    }
    let e32 = e.clamp(i32::MIN as i64 + 1, i32::MAX as i64) as i32;
    z.powi(e32)
}

/// Element of `ℓ²(ℤ)`: explicit entries plus geometric tails. The value at
/// `k` is `explicit[k] + sum of mode values at k`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvGeoSeq {
    explicit: BTreeMap<i64, C64>,
    modes: Vec<GeoMode>,
    /// Marks an element of the one-sided space `ℓ²(ℕ)`; such sequences
    /// vanish below index 0.
    #[serde(default)]
    one_sided: bool,
}

impl EvGeoSeq {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Standard basis vector `e_k`.
    pub fn unit(k: i64) -> Self {
        Self::from_entries([(k, ONE)])
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (i64, C64)>) -> Self {
        let mut s = Self::zero();
        for (k, v) in entries {
            s.add_entry(k, v);
        }
        s
    }

    pub fn from_mode(mode: GeoMode) -> Self {
        EvGeoSeq { explicit: BTreeMap::new(), modes: vec![mode], one_sided: false }
    }

    pub fn one_sided(mut self) -> Result<Self> {
        let neg_explicit = self.explicit.range(..0).any(|(_, v)| *v != ZERO);
        let neg_mode = self.modes.iter().any(|m| m.side == Side::Lower || m.start < 0);
        if neg_explicit || neg_mode {
            return Err(Error::NotInDomain("one-sided sequence with support below 0".into()));
        }
        self.one_sided = true;
        Ok(self)
    }

    pub fn is_one_sided(&self) -> bool {
        self.one_sided
    }

    pub fn explicit(&self) -> &BTreeMap<i64, C64> {
        &self.explicit
    }

    pub fn modes(&self) -> &[GeoMode] {
        &self.modes
    }

    /// Hull of the explicit indices; outside it only modes contribute.
    pub fn window(&self) -> Option<(i64, i64)> {
        let lo = *self.explicit.keys().next()?;
        let hi = *self.explicit.keys().next_back()?;
        Some((lo, hi))
    }

    /// Hull of explicit indices and mode starts.
    pub fn anchor_hull(&self) -> Option<(i64, i64)> {
        let keys = self.explicit.keys().copied().chain(self.modes.iter().map(|m| m.start));
        keys.fold(None, |acc, k| match acc {
            None => Some((k, k)),
            Some((lo, hi)) => Some((lo.min(k), hi.max(k))),
        })
    }

    pub fn is_finitely_supported(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn value(&self, k: i64) -> C64 {
        let e = self.explicit.get(&k).copied().unwrap_or(ZERO);
        self.modes.iter().fold(e, |acc, m| acc + m.value(k))
    }

    fn add_entry(&mut self, k: i64, v: C64) {
        if v == ZERO {
            return;
        }
        let slot = self.explicit.entry(k).or_insert(ZERO);
        *slot += v;
        if *slot == ZERO {
            self.explicit.remove(&k);
        }
    }

    /// Adds a mode, merging with an existing mode of bitwise equal side and
    /// ratio so that linear combinations do not accumulate duplicates.
    fn add_mode(&mut self, mode: GeoMode) {
        if mode.coeff == ZERO {
            return;
        }
        self.merge_mode(mode, |a, b| a.side == b.side && a.ratio == b.ratio);
    }

    fn merge_mode(&mut self, mode: GeoMode, same: impl Fn(&GeoMode, &GeoMode) -> bool) {
        let Some(idx) = self.modes.iter().position(|m| same(m, &mode)) else {
            self.modes.push(mode);
            return;
        };
        let old = self.modes[idx];
        // Re-anchor toward the decaying side so only positive powers of the
        // contracting ratio appear.
        let start = match mode.side {
            Side::Upper => old.start.max(mode.start),
            Side::Lower => old.start.min(mode.start),
        };
        let (a, ea) = old.reanchor(start);
        let (b, eb) = GeoMode { ratio: old.ratio, ..mode }.reanchor(start);
        for (k, v) in ea.into_iter().chain(eb) {
            self.add_entry(k, v);
        }
        let coeff = a.coeff + b.coeff;
        if coeff == ZERO {
            self.modes.remove(idx);
        } else {
            self.modes[idx] = GeoMode { coeff, start, ..old };
        }
    }

    /// Canonical form: modes whose ratios agree within `eq_tol` are merged,
    /// zero entries and zero modes dropped.
    pub fn canonical(&self, tol: &TolerancePolicy) -> Self {
        let mut out = EvGeoSeq { explicit: BTreeMap::new(), modes: Vec::new(), one_sided: self.one_sided };
        for (&k, &v) in &self.explicit {
            out.add_entry(k, v);
        }
        for m in &self.modes {
            if m.coeff != ZERO {
                out.merge_mode(*m, |a, b| a.side == b.side && (a.ratio - b.ratio).norm() <= tol.eq_tol);
            }
        }
        out.modes.sort_by(|a, b| {
            (a.side as u8, a.start)
                .cmp(&(b.side as u8, b.start))
                .then(a.ratio.norm().partial_cmp(&b.ratio.norm()).unwrap_or(std::cmp::Ordering::Equal))
        });
        out
    }

    /// Drops modes whose coefficient is below `rel` times the largest
    /// coefficient or entry: such modes are cancellation residue, e.g. the
    /// mode a first-order factor annihilates exactly in exact arithmetic.
    pub fn prune_modes(&self, rel: f64) -> Self {
        let scale = self
            .modes
            .iter()
            .map(|m| m.coeff.norm())
            .chain(self.explicit.values().map(|v| v.norm()))
            .fold(0.0, f64::max);
        let mut out = self.clone();
        out.modes.retain(|m| m.coeff.norm() > rel * scale);
        out
    }

    pub fn scaled(&self, c: C64) -> Self {
        if c == ZERO {
            return EvGeoSeq { one_sided: self.one_sided, ..Self::zero() };
        }
        EvGeoSeq {
            explicit: self.explicit.iter().map(|(&k, &v)| (k, v * c)).collect(),
            modes: self.modes.iter().map(|m| GeoMode { coeff: m.coeff * c, ..*m }).collect(),
            one_sided: self.one_sided,
        }
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (&k, &v) in &other.explicit {
            out.add_entry(k, v);
        }
        for m in &other.modes {
            out.add_mode(*m);
        }
        out.one_sided = self.one_sided && other.one_sided;
        out
    }

    pub fn axpy(&self, c: C64, other: &Self) -> Self {
        self.plus(&other.scaled(c))
    }

    /// Index translation by `steps`: `shift(e_k, s) = e_{k+s}`, so
    /// `shift(x, 1)` is the bilateral shift `W x`.
    pub fn shift(&self, steps: i64) -> Self {
        let out = EvGeoSeq {
            explicit: self.explicit.iter().map(|(&k, &v)| (k + steps, v)).collect(),
            modes: self.modes.iter().map(|m| GeoMode { start: m.start + steps, ..*m }).collect(),
            one_sided: false,
        };
        if self.one_sided && steps >= 0 {
            EvGeoSeq { one_sided: true, ..out }
        } else {
            out
        }
    }

    /// Reflection `(R x)_k = x_{-k}`; swaps the sides of all modes.
    pub fn reflect(&self) -> Self {
        EvGeoSeq {
            explicit: self.explicit.iter().map(|(&k, &v)| (-k, v)).collect(),
            modes: self
                .modes
                .iter()
                .map(|m| GeoMode {
                    side: match m.side {
                        Side::Upper => Side::Lower,
                        Side::Lower => Side::Upper,
                    },
                    ratio: ONE / m.ratio,
                    coeff: m.coeff,
                    start: -m.start,
                })
                .collect(),
            one_sided: false,
        }
    }

    /// `x - sum_{k in idx} x_k e_k`: the orthogonal projection that zeroes
    /// the listed coordinates.
    pub fn zero_on(&self, idx: &[i64]) -> Self {
        let mut out = self.clone();
        for &k in idx {
            let v = out.value(k);
            out.add_entry(k, -v);
        }
        out
    }

    /// Orthogonal projection onto sequences supported on `k >= k0`.
    pub fn truncate_below(&self, k0: i64) -> Self {
        let mut out = EvGeoSeq { explicit: self.explicit.range(k0..).map(|(&k, &v)| (k, v)).collect(), modes: Vec::new(), one_sided: false };
        for m in &self.modes {
            match m.side {
                Side::Upper if m.start >= k0 => out.add_mode(*m),
                Side::Upper => out.add_mode(m.reanchor(k0).0),
                Side::Lower => {
                    for k in k0..=m.start {
                        out.add_entry(k, m.value(k));
                    }
                }
            }
        }
        if k0 >= 0 {
            out.one_sided = true;
        }
        out
    }

    /// `alpha x + beta W x`.
    pub fn apply_affine(&self, alpha: C64, beta: C64) -> Self {
        self.scaled(alpha).plus(&self.shift(1).scaled(beta))
    }

    /// `sum_k x_k conj(y_k)` in closed form.
    pub fn inner(&self, other: &Self) -> C64 {
        let mut acc = ZERO;
        for (k, v) in &self.explicit {
            if let Some(w) = other.explicit.get(k) {
                acc += v * w.conj();
            }
            for m in &other.modes {
                acc += v * m.value(*k).conj();
            }
        }
        for m in &self.modes {
            for (k, w) in &other.explicit {
                acc += m.value(*k) * w.conj();
            }
            for n in &other.modes {
                acc += mode_inner(m, n);
            }
        }
        acc
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner(self).re.max(0.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }
}

impl Add for &EvGeoSeq {
    type Output = EvGeoSeq;
    fn add(self, rhs: &EvGeoSeq) -> EvGeoSeq {
        self.plus(rhs)
    }
}

impl Sub for &EvGeoSeq {
    type Output = EvGeoSeq;
    fn sub(self, rhs: &EvGeoSeq) -> EvGeoSeq {
        self.plus(&rhs.scaled(-ONE))
    }
}

impl Neg for &EvGeoSeq {
    type Output = EvGeoSeq;
    fn neg(self) -> EvGeoSeq {
        self.scaled(-ONE)
    }
}

impl Mul<C64> for &EvGeoSeq {
    type Output = EvGeoSeq;
    fn mul(self, c: C64) -> EvGeoSeq {
        self.scaled(c)
    }
}

/// `sum_{j=0}^{n} w^j`.
fn geo_partial(w: C64, n: i64) -> C64 {
    if n < 0 {
        return ZERO;
    }
    if n <= 256 || (w - ONE).norm() < 1e-6 {
        let mut acc = ZERO;
        let mut p = ONE;
        for _ in 0..=n {
            acc += p;
            p *= w;
        }
        acc
    } else {
        (ONE - pow(w, n + 1)) / (ONE - w)
    }
}

fn mode_inner(a: &GeoMode, b: &GeoMode) -> C64 {
    match (a.side, b.side) {
        (Side::Upper, Side::Upper) => {
            let k = a.start.max(b.start);
            a.value(k) * b.value(k).conj() / (ONE - a.ratio * b.ratio.conj())
        }
        (Side::Lower, Side::Lower) => {
            let k = a.start.min(b.start);
            a.value(k) * b.value(k).conj() / (ONE - ONE / (a.ratio * b.ratio.conj()))
        }
        (Side::Upper, Side::Lower) => {
            let (lo, hi) = (a.start, b.start);
            if lo > hi {
                return ZERO;
            }
            let w = a.ratio * b.ratio.conj();
            // Anchor at the end where the summand is largest so every power
            // taken has modulus at most one.
            if w.norm() <= 1.0 {
                a.value(lo) * b.value(lo).conj() * geo_partial(w, hi - lo)
            } else {
                a.value(hi) * b.value(hi).conj() * geo_partial(ONE / w, hi - lo)
            }
        }
        (Side::Lower, Side::Upper) => mode_inner(b, a).conj(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertKind {
    Member,
    NonMember,
}

/// Exact verdict of a range-membership question.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeqCertificate {
    pub kind: CertKind,
    /// For `NonMember`: the ratio of the tail the equation forces, with
    /// modulus at least one.
    pub witness_ratio: Option<C64>,
    /// Coefficient of that forced tail; zero exactly when the rhs is solvable.
    pub obstruction: C64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AffineSolution {
    Member(EvGeoSeq),
    NonMember(SeqCertificate),
}

impl AffineSolution {
    pub fn member(self) -> Option<EvGeoSeq> {
        match self {
            AffineSolution::Member(x) => Some(x),
            AffineSolution::NonMember(_) => None,
        }
    }

    pub fn certificate(&self) -> SeqCertificate {
        match self {
            AffineSolution::Member(_) => SeqCertificate { kind: CertKind::Member, witness_ratio: None, obstruction: ZERO },
            AffineSolution::NonMember(c) => *c,
        }
    }
}

/// Causal (forward-substitution) solution of `alpha x + beta W x = rhs`:
/// the decaying part plus the homogeneous terms `p rho^(k - s)`, `k >= s`,
/// with `rho = -beta / alpha`, returned separately.
fn causal(alpha: C64, beta: C64, rhs: &EvGeoSeq, tol: &TolerancePolicy) -> Result<(EvGeoSeq, Vec<(C64, i64)>, C64)> {
    let rho = -beta / alpha;
    let mut x = EvGeoSeq::zero();
    let mut pending = Vec::new();
    for (&j, &v) in &rhs.explicit {
        pending.push((v / alpha, j));
    }
    for m in &rhs.modes {
        let r = m.ratio;
        if (r - rho).norm() <= tol.rank_tol * r.norm().max(1.0) {
            return Err(Error::CriticalRoot(r.norm()));
        }
        match m.side {
            Side::Upper => {
                let d = alpha * (r - rho);
                x.add_mode(GeoMode { coeff: m.coeff * r / d, ..*m });
                pending.push((-m.coeff * rho / d, m.start));
            }
            Side::Lower => {
                if rho.norm() >= r.norm() {
                    return Err(Error::CriticalRoot(rho.norm()));
                }
                let d = alpha * (ONE - rho / r);
                x.add_mode(GeoMode { coeff: m.coeff / d, ..*m });
                pending.push((m.coeff * rho / d, m.start + 1));
            }
        }
    }
    Ok((x, pending, rho))
}

/// Folds the homogeneous terms into the solution. For `|rho| < 1` they are
/// decaying modes; otherwise the combined tail must vanish.
fn settle(mut x: EvGeoSeq, pending: Vec<(C64, i64)>, rho: C64, tol: &TolerancePolicy) -> AffineSolution {
    if rho == ZERO {
        for (p, s) in pending {
            x.add_entry(s, p);
        }
        return AffineSolution::Member(x);
    }
    if rho.norm() < 1.0 - tol.rank_tol {
        for (p, s) in pending {
            x.add_mode(GeoMode { side: Side::Upper, ratio: rho, coeff: p, start: s });
        }
        return AffineSolution::Member(x);
    }
    let Some(top) = pending.iter().map(|&(_, s)| s).max() else {
        return AffineSolution::Member(x);
    };
    let mut tail = ZERO;
    let mut scale: f64 = 0.0;
    for &(p, s) in &pending {
        let t = p * pow(rho, top - s);
        tail += t;
        scale = scale.max(t.norm());
        for k in s..top {
            x.add_entry(k, p * pow(rho, k - s));
        }
    }
    if tail.norm() <= tol.eq_tol * scale.max(1.0) {
        AffineSolution::Member(x)
    } else {
        AffineSolution::NonMember(SeqCertificate { kind: CertKind::NonMember, witness_ratio: Some(rho), obstruction: tail })
    }
}

/// Solves `(alpha I + beta W) x = rhs` in `ℓ²(ℤ)`, or in `ℓ²(ℕ)` when `rhs`
/// is one-sided (then `W` is the unilateral shift).
///
/// For `|alpha| = |beta|` (and for one-sided symbols with `|beta| > |alpha|`)
/// the operator is not boundedly invertible; the formal solution is returned
/// only when its forced tail vanishes, otherwise a `NonMember` certificate
/// names the tail ratio.
pub fn solve_affine_shift(alpha: C64, beta: C64, rhs: &EvGeoSeq, tol: &TolerancePolicy) -> Result<AffineSolution> {
    if alpha == ZERO && beta == ZERO {
        return Err(Error::DegenerateSymbol);
    }
    if rhs.one_sided {
        if alpha == ZERO {
            // beta W+ x = rhs needs rhs_0 = 0; then x = W+^H rhs / beta.
            let r0 = rhs.value(0);
            if r0 != ZERO {
                return Ok(AffineSolution::NonMember(SeqCertificate {
                    kind: CertKind::NonMember,
                    witness_ratio: Some(C64::new(f64::INFINITY, 0.0)),
                    obstruction: r0,
                }));
            }
            let x = rhs.truncate_below(1).shift(-1).scaled(ONE / beta).truncate_below(0);
            return Ok(AffineSolution::Member(x));
        }
        if rhs.modes.iter().any(|m| m.side == Side::Lower) {
            return Err(Error::NotInDomain("one-sided rhs with a lower tail".into()));
        }
        let (x, pending, rho) = causal(alpha, beta, rhs, tol)?;
        return Ok(match settle(x, pending, rho, tol) {
            AffineSolution::Member(x) => AffineSolution::Member(EvGeoSeq { one_sided: true, ..x }),
            other => other,
        });
    }
    if beta == ZERO {
        return Ok(AffineSolution::Member(rhs.scaled(ONE / alpha)));
    }
    if alpha == ZERO {
        return Ok(AffineSolution::Member(rhs.shift(-1).scaled(ONE / beta)));
    }
    let (a, b) = (alpha.norm(), beta.norm());
    if a >= b || (a - b).abs() <= tol.rank_tol * a.max(b) {
        let (x, pending, rho) = causal(alpha, beta, rhs, tol)?;
        return Ok(settle(x, pending, rho, tol));
    }
    // R (alpha + beta W) x = rhs becomes (beta + alpha W) R x = W R rhs,
    // which is causal because |beta| > |alpha|.
    let (y, pending, rho) = causal(beta, alpha, &rhs.reflect().shift(1), tol)?;
    Ok(match settle(y, pending, rho, tol) {
        AffineSolution::Member(y) => AffineSolution::Member(y.reflect()),
        other => other,
    })
}

/// Solves `(c_minus W + c_zero + c_plus W^{-1}) x = rhs` at every index off
/// `holes`, with `x` vanishing on `holes`.
///
/// The symbol factors as `c_plus W^{-1} (I - t1 W)(I - t2 W)` with `t1, t2`
/// the roots of `c_plus t^2 + c_zero t + c_minus`; each factor is a first
/// order solve. Hole constraints are met by adding multiples of the Green's
/// functions `A^{-1} e_h`, which is the same finite system as treating the
/// hole values of `A x - rhs` as unknowns.
pub fn solve_second_order(
    c_minus: C64,
    c_zero: C64,
    c_plus: C64,
    rhs: &EvGeoSeq,
    holes: &[i64],
    tol: &TolerancePolicy,
) -> Result<EvGeoSeq> {
    let solve = |r: &EvGeoSeq| solve_laurent(c_minus, c_zero, c_plus, r, tol);
    let base = solve(&rhs.zero_on(holes))?;
    if holes.is_empty() {
        return Ok(base);
    }
    let greens: Vec<EvGeoSeq> = holes.iter().map(|&h| solve(&EvGeoSeq::unit(h))).collect::<Result<_>>()?;
    let n = holes.len();
    let a = CMat::from_fn(n, n, |i, j| greens[j].value(holes[i]));
    let b = CMat::from_fn(n, 1, |i, _| -base.value(holes[i]));
    let coef = matkit::solve_square(&a, &b, tol)?;
    let mut x = base;
    for (j, g) in greens.iter().enumerate() {
        x = x.axpy(coef[(j, 0)], g);
    }
    // The correction cancels hole values up to roundoff; make them exact.
    Ok(x.zero_on(holes))
}

/// Bilateral inverse of the three-term symbol.
fn solve_laurent(c_minus: C64, c_zero: C64, c_plus: C64, rhs: &EvGeoSeq, tol: &TolerancePolicy) -> Result<EvGeoSeq> {
    let first = |alpha: C64, beta: C64, r: &EvGeoSeq| -> Result<EvGeoSeq> {
        if (alpha.norm() - beta.norm()).abs() <= tol.rank_tol * alpha.norm().max(beta.norm()) {
            return Err(Error::CriticalRoot(1.0));
        }
        solve_affine_shift(alpha, beta, r, tol)?
            .member()
            .ok_or(Error::CriticalRoot(1.0))
    };
    let bilateral = EvGeoSeq { one_sided: false, ..rhs.clone() };
    match (c_minus == ZERO, c_plus == ZERO) {
        (true, true) => {
            if c_zero == ZERO {
                return Err(Error::DegenerateSymbol);
            }
            Ok(bilateral.scaled(ONE / c_zero))
        }
        (false, true) => first(c_zero, c_minus, &bilateral),
        (true, false) => first(c_plus, c_zero, &bilateral.shift(1)),
        (false, false) => {
            let (t1, t2) = quadratic_roots(c_plus, c_zero, c_minus);
            for t in [t1, t2] {
                if (t.norm() - 1.0).abs() <= tol.rank_tol {
                    return Err(Error::CriticalRoot(t.norm()));
                }
            }
            if (t1 - t2).norm() <= tol.rank_tol * t1.norm().max(1.0) {
                return Err(Error::CriticalRoot(t1.norm()));
            }
            let y = first(ONE, -t1, &bilateral.shift(1).scaled(ONE / c_plus))?;
            first(ONE, -t2, &y)
        }
    }
}

/// Roots of `a t^2 + b t + c` with `a != 0`, computed without cancellation.
pub fn quadratic_roots(a: C64, b: C64, c: C64) -> (C64, C64) {
    let disc = (b * b - a * c * 4.0).sqrt();
    let q = if (b.conj() * disc).re >= 0.0 { -(b + disc) / 2.0 } else { -(b - disc) / 2.0 };
    if q == ZERO {
        return (ZERO, ZERO);
    }
    (q / a, c / q)
}

/// Whether the homogeneous one-sided equation `alpha x_k + beta x_{k+1} = 0`
/// (`k >= 0`), i.e. `(alpha I + beta W+^H) x = 0`, has only the zero
/// solution in `ℓ²(ℕ)`. The homogeneous solutions are `x_0 r^k` with
/// `r = -alpha / beta`, which is square summable iff `|r| < 1`.
pub fn backward_kernel_trivial(alpha: C64, beta: C64) -> SeqCertificate {
    if beta == ZERO {
        return SeqCertificate { kind: CertKind::NonMember, witness_ratio: None, obstruction: alpha };
    }
    let r = -alpha / beta;
    if r.norm() >= 1.0 {
        SeqCertificate { kind: CertKind::NonMember, witness_ratio: Some(r), obstruction: ONE }
    } else {
        SeqCertificate { kind: CertKind::Member, witness_ratio: Some(r), obstruction: ZERO }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn tol() -> TolerancePolicy {
        TolerancePolicy::default()
    }

    fn upper(r: f64, start: i64) -> EvGeoSeq {
        EvGeoSeq::from_mode(GeoMode::new(Side::Upper, c(r, 0.0), ONE, start).unwrap())
    }

    fn partial_inner(x: &EvGeoSeq, y: &EvGeoSeq, lo: i64, hi: i64) -> C64 {
        (lo..=hi).map(|k| x.value(k) * y.value(k).conj()).sum()
    }

    #[test]
    fn unit_inner() {
        assert_eq!(EvGeoSeq::unit(0).inner(&EvGeoSeq::unit(0)), ONE);
        assert_eq!(EvGeoSeq::unit(0).inner(&EvGeoSeq::unit(3)), ZERO);
    }

    #[test]
    fn half_ratio_norm() {
        let x = upper(0.5, 0);
        let closed = x.inner(&x);
        assert!((closed - c(4.0 / 3.0, 0.0)).norm() < 1e-15);
        assert!((closed - partial_inner(&x, &x, 0, 200)).norm() < 1e-12);
    }

    #[test]
    fn mixed_side_inner_matches_partial_sums() {
        let a = EvGeoSeq::from_mode(GeoMode::new(Side::Upper, c(0.3, 0.4), c(1.0, -2.0), -3).unwrap())
            .plus(&EvGeoSeq::from_entries([(1, c(0.5, 0.5)), (-2, c(-1.0, 0.0))]));
        let b = EvGeoSeq::from_mode(GeoMode::new(Side::Lower, c(-1.5, 0.7), c(0.2, 1.0), 4).unwrap())
            .plus(&EvGeoSeq::from_mode(GeoMode::new(Side::Upper, c(-0.6, 0.1), c(1.0, 0.0), 2).unwrap()));
        let closed = a.inner(&b);
        assert!((closed - partial_inner(&a, &b, -300, 300)).norm() < 1e-12);
        assert!((b.inner(&a) - closed.conj()).norm() < 1e-14);
    }

    #[test]
    fn shift_is_translation() {
        assert_eq!(EvGeoSeq::unit(0).shift(1), EvGeoSeq::unit(1));
        let x = upper(0.5, 2).plus(&EvGeoSeq::unit(-1));
        assert_eq!(x.shift(1).shift(-1), x);
        for k in -5..10 {
            assert_eq!(x.shift(1).value(k + 1), x.value(k));
        }
    }

    #[test]
    fn reflect_swaps_tails() {
        let x = upper(0.5, 2);
        let r = x.reflect();
        for k in -10..10 {
            assert!((r.value(k) - x.value(-k)).norm() < 1e-15);
        }
        assert_eq!(r.modes()[0].side, Side::Lower);
    }

    #[test]
    fn affine_identity_symbol() {
        let rhs = EvGeoSeq::unit(2).plus(&upper(0.3, 0));
        let x = solve_affine_shift(ONE, ZERO, &rhs, &tol()).unwrap().member().unwrap();
        assert_eq!(x, rhs);
    }

    #[test]
    fn affine_half_ratio_example() {
        let x = solve_affine_shift(ONE, c(-0.5, 0.0), &EvGeoSeq::unit(0), &tol()).unwrap().member().unwrap();
        for k in -5..20 {
            let expect = if k >= 0 { 0.5f64.powi(k as i32) } else { 0.0 };
            assert!((x.value(k) - c(expect, 0.0)).norm() < 1e-15);
        }
        let resid = &x.apply_affine(ONE, c(-0.5, 0.0)) - &EvGeoSeq::unit(0);
        assert!(resid.norm() < 1e-15);
    }

    #[test]
    fn one_sided_critical_example_is_non_member() {
        let rhs = EvGeoSeq::unit(0).one_sided().unwrap();
        match solve_affine_shift(ONE, -ONE, &rhs, &tol()).unwrap() {
            AffineSolution::NonMember(cert) => {
                assert_eq!(cert.kind, CertKind::NonMember);
                assert_eq!(cert.witness_ratio, Some(ONE));
                assert_eq!(cert.obstruction, ONE);
            }
            AffineSolution::Member(_) => panic!("e0 is not in ran(I - W+)"),
        }
    }

    #[test]
    fn critical_member_when_tail_cancels() {
        // (I - W) x = e0 - e1 has the solution x = e0.
        let rhs = EvGeoSeq::from_entries([(0, ONE), (1, -ONE)]);
        let x = solve_affine_shift(ONE, -ONE, &rhs, &tol()).unwrap().member().unwrap();
        assert!((&x - &EvGeoSeq::unit(0)).norm() < 1e-15);
    }

    #[test]
    fn anticausal_branch() {
        let rhs = EvGeoSeq::from_entries([(0, c(1.0, 1.0)), (3, c(-2.0, 0.5))]).plus(&upper(0.4, 1));
        let (alpha, beta) = (c(0.5, 0.2), c(-1.0, 1.5));
        let x = solve_affine_shift(alpha, beta, &rhs, &tol()).unwrap().member().unwrap();
        assert!((&x.apply_affine(alpha, beta) - &rhs).norm() < 1e-13);
        assert!(x.modes().iter().any(|m| m.side == Side::Lower));
    }

    #[test]
    fn degenerate_symbol() {
        assert_eq!(solve_affine_shift(ZERO, ZERO, &EvGeoSeq::unit(0), &tol()), Err(Error::DegenerateSymbol));
    }

    fn apply_second(x: &EvGeoSeq, cm: C64, c0: C64, cp: C64) -> EvGeoSeq {
        x.shift(1).scaled(cm).plus(&x.scaled(c0)).plus(&x.shift(-1).scaled(cp))
    }

    #[test]
    fn second_order_with_roots_half_and_two() {
        // (t - 1/2)(t - 2) = t^2 - 5/2 t + 1.
        let (cm, c0, cp) = (ONE, c(-2.5, 0.0), ONE);
        let rhs = EvGeoSeq::unit(0);
        let x = solve_second_order(cm, c0, cp, &rhs, &[], &tol()).unwrap();
        let ratios: Vec<(Side, f64)> = x.modes().iter().map(|m| (m.side, m.ratio.re)).collect();
        assert!(ratios.iter().any(|&(s, r)| s == Side::Upper && (r - 0.5).abs() < 1e-14));
        assert!(ratios.iter().any(|&(s, r)| s == Side::Lower && (r - 2.0).abs() < 1e-14));
        assert!((&apply_second(&x, cm, c0, cp) - &rhs).norm() < 1e-14);
    }

    #[test]
    fn second_order_trivial_cases() {
        let rhs = EvGeoSeq::unit(1).plus(&upper(0.2, 3));
        let x = solve_second_order(ZERO, ONE, ZERO, &rhs, &[0], &tol()).unwrap();
        assert!((&x - &rhs.zero_on(&[0])).norm() < 1e-15);
        let z = solve_second_order(ONE, c(3.0, 0.0), ONE, &EvGeoSeq::zero(), &[], &tol()).unwrap();
        assert_eq!(z.norm(), 0.0);
    }

    #[test]
    fn second_order_holes() {
        let (cm, c0, cp) = (c(0.3, -0.4), c(2.5, 0.0), c(0.3, 0.4));
        let rhs = EvGeoSeq::from_entries([(-1, ONE), (1, c(0.0, 2.0)), (4, c(1.0, 1.0))]);
        let holes = [0, 1];
        let x = solve_second_order(cm, c0, cp, &rhs, &holes, &tol()).unwrap();
        for &h in &holes {
            assert!(x.value(h).norm() < 1e-15);
        }
        let resid = (&apply_second(&x, cm, c0, cp) - &rhs).zero_on(&holes);
        assert!(resid.norm() < 1e-13);
    }

    #[test]
    fn critical_second_order_rejected() {
        // t^2 - 2t + 1 has the double root 1.
        let r = solve_second_order(ONE, c(-2.0, 0.0), ONE, &EvGeoSeq::unit(0), &[], &tol());
        assert!(matches!(r, Err(Error::CriticalRoot(_))));
    }

    #[test]
    fn canonical_merges_close_ratios() {
        let a = EvGeoSeq::from_mode(GeoMode::new(Side::Upper, c(0.5, 0.0), ONE, 0).unwrap());
        let b = EvGeoSeq::from_mode(GeoMode::new(Side::Upper, c(0.5 + 1e-12, 0.0), ONE, 2).unwrap());
        let s = a.plus(&b);
        assert_eq!(s.modes().len(), 2);
        let cs = s.canonical(&tol());
        assert_eq!(cs.modes().len(), 1);
        assert!((cs.norm() - s.norm()).abs() < 1e-9);
        assert_eq!(cs.canonical(&tol()), cs);
    }

    #[test]
    fn backward_shift_kernel_certificate() {
        let cert = backward_kernel_trivial(ONE, -ONE);
        assert_eq!(cert.kind, CertKind::NonMember);
        assert_eq!(cert.witness_ratio, Some(ONE));
    }

    #[test]
    fn json_round_trip() {
        let x = upper(0.5, 2).plus(&EvGeoSeq::from_entries([(-3, c(1.0, 2.0))]));
        let s = serde_json::to_string(&x).unwrap();
        let y: EvGeoSeq = serde_json::from_str(&s).unwrap();
        assert_eq!(x, y);
    }
}
