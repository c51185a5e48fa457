//! Dense kernels with explicit accuracy contracts: matrix exponential,
//! adaptive 1-D quadrature and an adaptive Runge–Kutta integrator for linear
//! systems.

mod expm;
mod ode;
mod quad;

pub use expm::{matrix_exponential, MAX_DIM};
pub use ode::{integrate_in_place, solve_linear_ode, OdeSpec};
pub use quad::{integrate_1d, integrate_1d_with_breaks, integrate_components, kronrod21, QuadratureSpec};

use crate::{CMat, C64};

/// Largest entry-wise modulus of `a - b`.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Largest entry-wise deviation from Hermiticity.
pub fn hermitian_deviation(a: &CMat) -> f64 {
    let n = a.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            dev = dev.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Spectral norm, computed from the singular values.
pub fn spectral_norm(a: &CMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

pub(crate) fn i() -> C64 {
    C64::new(0.0, 1.0)
}
