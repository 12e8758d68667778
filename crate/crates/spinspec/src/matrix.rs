//! Small dense complex-matrix helpers shared by the other modules.
//!
//! Registers here are at most a few qubits, so everything is a dense
//! `ndarray` array of `Complex64` and no cleverness is attempted.

use ndarray::Array2;
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = Array2<C64>;

pub const ONE: C64 = C64::new(1.0, 0.0);
pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// n x n identity.
pub fn identity(n: usize) -> CMat {
    let mut m = CMat::zeros((n, n));
    for i in 0..n {
        m[(i, i)] = ONE;
    }
    m
}

/// Kronecker product, first factor on the most significant index.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    ndarray::linalg::kron(a, b)
}

/// Kronecker product of a list of factors, left to right.
pub fn kron_all(factors: &[CMat]) -> CMat {
    let mut acc = identity(1);
    for f in factors {
        acc = kron(&acc, f);
    }
    acc
}

/// Conjugate transpose.
pub fn dagger(m: &CMat) -> CMat {
    let mut d = m.t().to_owned();
    d.mapv_inplace(|z| z.conj());
    d
}

pub fn trace(m: &CMat) -> C64 {
    m.diag().sum()
}

/// Largest elementwise |a - b|.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// |tr(a^dag b)| / dim; equals 1 exactly when a and b agree up to a global
/// phase.
pub fn phase_fidelity(a: &CMat, b: &CMat) -> f64 {
    let d = a.nrows();
    (dagger(a).dot(b)).diag().sum().norm() / d as f64
}

/// Largest elementwise difference after removing the global phase that best
/// aligns `b` onto `a` (taken from the largest element of `a`).
pub fn max_abs_diff_up_to_phase(a: &CMat, b: &CMat) -> f64 {
    let mut best = (0usize, 0usize);
    let mut mag = 0.0;
    for ((i, j), z) in a.indexed_iter() {
        if z.norm() > mag {
            mag = z.norm();
            best = (i, j);
        }
    }
    if mag == 0.0 {
        return max_abs(b);
    }
    let ratio = b[best] / a[best];
    if ratio.norm() == 0.0 {
        return max_abs_diff(a, b);
    }
    let phase = ratio / ratio.norm();
    let aligned = a.mapv(|z| z * phase);
    max_abs_diff(&aligned, b)
}

/// Hermiticity defect: largest |m - m^dag| element.
pub fn hermiticity_defect(m: &CMat) -> f64 {
    max_abs_diff(m, &dagger(m))
}
