//! Seeded generators for parameter matrices.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{CMat, C64};

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im)
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let mut m = CMat::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = gaussian(rng);
        }
    }
    m
}

/// Haar-distributed unitary: QR of a complex Gaussian with the phases of
/// `diag R` moved into `Q`.
pub fn unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    if n == 0 {
        return CMat::zeros(0, 0);
    }
    let qr = gaussian_matrix(n, n, rng).qr();
    let (mut q, r) = qr.unpack();
    for j in 0..n {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= ph;
        }
    }
    q
}

/// `W_1 diag(s) W_2` with singular values uniform in `[0, 1)`.
pub fn contraction<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let k = rows.min(cols);
    let mut d = CMat::zeros(rows, cols);
    for j in 0..k {
        d[(j, j)] = C64::new(rng.gen::<f64>(), 0.0);
    }
    unitary(rows, rng) * d * unitary(cols, rng)
}

/// Contraction whose norm is exactly `s_max`, useful for boundary cases.
pub fn contraction_with_norm<R: Rng + ?Sized>(rows: usize, cols: usize, s_max: f64, rng: &mut R) -> CMat {
    let k = rows.min(cols);
    let mut d = CMat::zeros(rows, cols);
    for j in 0..k {
        let s = if j == 0 { s_max } else { s_max * rng.gen::<f64>() };
        d[(j, j)] = C64::new(s, 0.0);
    }
    unitary(rows, rng) * d * unitary(cols, rng)
}
