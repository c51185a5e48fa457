use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::{Error, Result, C64};

/// Tolerances for adaptive quadrature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-9,
            max_subdivisions: 4000,
        }
    }
}

impl QuadratureSpec {
    pub fn new(abs_tol: f64, rel_tol: f64, max_subdivisions: usize) -> Result<Self> {
        if !(abs_tol > 0.0 && rel_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "quadrature tolerances must be positive (abs {abs_tol}, rel {rel_tol})"
            )));
        }
        if max_subdivisions == 0 {
            return Err(Error::InvalidParameter("max_subdivisions must be at least 1".into()));
        }
        Ok(Self {
            abs_tol,
            rel_tol,
            max_subdivisions,
        })
    }

    /// Same budget, both tolerances multiplied by `factor`.
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            abs_tol: self.abs_tol * factor,
            rel_tol: self.rel_tol * factor,
            ..self
        }
    }
}

// 21-point Kronrod abscissae on [-1, 1] (non-negative half), odd indices are
// the 10-point Gauss nodes.
const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077600525140939,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];
const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

struct Panel {
    lo: f64,
    hi: f64,
    err: f64,
    values: Vec<f64>,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err.total_cmp(&other.err) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

struct Kronrod<'f, F> {
    f: &'f mut F,
    n: usize,
    buf: Vec<f64>,
    gauss: Vec<f64>,
}

impl<F> Kronrod<'_, F>
where
    F: FnMut(f64, &mut [f64]) -> Result<()>,
{
    fn panel(&mut self, lo: f64, hi: f64) -> Result<Panel> {
        let center = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let mut values = vec![0.0; self.n];
        self.gauss.iter_mut().for_each(|g| *g = 0.0);
        for (k, &x) in XGK.iter().enumerate() {
            let points: &[f64] = if k == 10 { &[0.0] } else { &[-1.0, 1.0] };
            for &sign in points {
                self.buf.iter_mut().for_each(|b| *b = 0.0);
                (self.f)(center + sign * half * x, &mut self.buf)?;
                for c in 0..self.n {
                    values[c] += WGK[k] * self.buf[c];
                    if k % 2 == 1 {
                        self.gauss[c] += WG[k / 2] * self.buf[c];
                    }
                }
            }
        }
        let mut err: f64 = 0.0;
        for c in 0..self.n {
            values[c] *= half;
            err = err.max((values[c] - self.gauss[c] * half).abs());
        }
        if !err.is_finite() {
            return Err(Error::CrossCheck(format!("non-finite integrand on [{lo}, {hi}]")));
        }
        Ok(Panel { lo, hi, err, values })
    }
}

/// Adaptive Gauss–Kronrod (10/21) quadrature of an `n`-component real
/// integrand over `[a, b]`, with the initial partition split at `breaks`.
///
/// Convergence is declared when the summed max-norm error estimate is below
/// `max(abs_tol, rel_tol · max_c |I_c|)`.
pub fn integrate_components<F>(
    n: usize,
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    spec: &QuadratureSpec,
) -> Result<Vec<f64>>
where
    F: FnMut(f64, &mut [f64]) -> Result<()>,
{
    if !(a <= b) {
        return Err(Error::InvalidParameter(format!("integration bounds [{a}, {b}]")));
    }
    if a == b {
        return Ok(vec![0.0; n]);
    }
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut rule = Kronrod {
        f: &mut f,
        n,
        buf: vec![0.0; n],
        gauss: vec![0.0; n],
    };
    let mut heap = BinaryHeap::new();
    let mut lo = a;
    for hi in cuts.into_iter().chain(std::iter::once(b)) {
        heap.push(rule.panel(lo, hi)?);
        lo = hi;
    }

    let mut subdivisions = 0;
    loop {
        let mut total = vec![0.0; n];
        let mut total_err = 0.0;
        for p in heap.iter() {
            total_err += p.err;
            for c in 0..n {
                total[c] += p.values[c];
            }
        }
        let scale = total.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if total_err <= spec.abs_tol.max(spec.rel_tol * scale) {
            return Ok(total);
        }
        let worst = heap.pop().expect("at least one panel");
        let mid = 0.5 * (worst.lo + worst.hi);
        if subdivisions >= spec.max_subdivisions || !(mid > worst.lo && mid < worst.hi) {
            return Err(Error::QuadratureNotConverged {
                estimate: total.first().copied().unwrap_or(0.0),
                error: total_err,
                subdivisions,
            });
        }
        heap.push(rule.panel(worst.lo, mid)?);
        heap.push(rule.panel(mid, worst.hi)?);
        subdivisions += 1;
    }
}

/// Fixed 21-point Kronrod rule on `[a, b]`, for integrands known to be
/// smooth on the interval.
pub fn kronrod21<F>(mut f: F, a: f64, b: f64) -> C64
where
    F: FnMut(f64) -> C64,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = f(center) * WGK[10];
    for k in 0..10 {
        let dx = half * XGK[k];
        acc += (f(center - dx) + f(center + dx)) * WGK[k];
    }
    acc * half
}

/// Adaptive quadrature of a complex integrand over `[a, b]`.
pub fn integrate_1d<F>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<C64>
where
    F: FnMut(f64) -> C64,
{
    integrate_1d_with_breaks(f, a, b, &[], spec)
}

/// As [`integrate_1d`], with known kinks or discontinuities of `f`.
pub fn integrate_1d_with_breaks<F>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    spec: &QuadratureSpec,
) -> Result<C64>
where
    F: FnMut(f64) -> C64,
{
    let v = integrate_components(
        2,
        |t, out| {
            let z = f(t);
            out[0] = z.re;
            out[1] = z.im;
            Ok(())
        },
        a,
        b,
        breaks,
        spec,
    )?;
    Ok(C64::new(v[0], v[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fixed_rule_is_exact_for_polynomials() {
        let v = kronrod21(|t| C64::new(t.powi(30), -t.powi(7)), 0.0, 2.0);
        let exact = C64::new(2f64.powi(31) / 31.0, -2f64.powi(8) / 8.0);
        assert!((v - exact).norm() < 1e-12 * exact.norm());
    }

    #[test]
    fn constant() {
        let v = integrate_1d(|_| C64::from(1.0), 0.0, 1.0, &QuadratureSpec::default()).unwrap();
        assert!((v - C64::from(1.0)).norm() < 1e-15);
    }

    #[test]
    fn exponential_normalization() {
        let omega = 1.3;
        let horizon = 40.0 / omega;
        let v = integrate_1d(
            |t| C64::from(omega * (-omega * t).exp()),
            0.0,
            horizon,
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert!((v.re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn geometric_integral_against_antiderivative() {
        // ∫0^t exp((-iΔ + Γ/2) s) ξ_s ds for ξ_s = √Ω exp(-Ω s / 2)
        let (delta, gamma, omega, t) = (0.7, 1.0, 0.4, 6.0);
        let k = C64::new(gamma / 2.0 - omega / 2.0, -delta);
        let exact = omega.sqrt() * ((k * t).exp() - 1.0) / k;
        let v = integrate_1d(
            |s| (k * s).exp() * omega.sqrt(),
            0.0,
            t,
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert!((v - exact).norm() <= 1e-9 * exact.norm());
    }

    #[test]
    fn discontinuity_at_break() {
        let f = |t: f64| C64::from(if t < 0.3 { 1.0 } else { 2.0 });
        let v = integrate_1d_with_breaks(f, 0.0, 1.0, &[0.3], &QuadratureSpec::default()).unwrap();
        assert!((v.re - 1.7).abs() < 1e-14);
    }

    #[test]
    fn reports_non_convergence() {
        let spec = QuadratureSpec::new(1e-14, 1e-14, 3).unwrap();
        let r = integrate_1d(|t| C64::from((1.0 / (t + 1e-9)).sin()), 0.0, 1.0, &spec);
        assert!(matches!(r, Err(Error::QuadratureNotConverged { .. })));
    }

    #[test]
    fn rejects_reversed_bounds() {
        assert!(integrate_1d(|_| C64::from(1.0), 1.0, 0.0, &QuadratureSpec::default()).is_err());
    }

    proptest! {
        #[test]
        fn linearity(a in -2.0..2.0f64, b in -2.0..2.0f64, w in 0.1..3.0f64) {
            let spec = QuadratureSpec::default();
            let f = |t: f64| C64::new((w * t).cos(), t * t);
            let g = |t: f64| C64::new((-t).exp(), (w * t).sin());
            let lhs = integrate_1d(|t| f(t) * a + g(t) * b, 0.0, 2.0, &spec).unwrap();
            let rhs = integrate_1d(f, 0.0, 2.0, &spec).unwrap() * a
                + integrate_1d(g, 0.0, 2.0, &spec).unwrap() * b;
            prop_assert!((lhs - rhs).norm() < 3.0 * (spec.abs_tol + spec.rel_tol * lhs.norm().max(1.0)));
        }
    }
}
