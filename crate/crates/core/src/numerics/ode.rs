use crate::{CMat, CVec, Error, Result, C64};

/// Tolerances for the adaptive Dormand–Prince integrator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_steps: usize,
}

impl Default for OdeSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-9,
            max_steps: 1_000_000,
        }
    }
}

impl OdeSpec {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Result<Self> {
        if !(abs_tol > 0.0 && rel_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ode tolerances must be positive (abs {abs_tol}, rel {rel_tol})"
            )));
        }
        Ok(Self {
            abs_tol,
            rel_tol,
            ..Self::default()
        })
    }
}

const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [&[f64]; 6] = [
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
    &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `y' = rhs(t, y)` from `t0` to `t1` in place, with an adaptive
/// Dormand–Prince 5(4) scheme (FSAL). `t1 < t0` is allowed.
pub fn integrate_in_place<F>(mut rhs: F, y: &mut [C64], t0: f64, t1: f64, spec: &OdeSpec) -> Result<()>
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    let n = y.len();
    if t0 == t1 || n == 0 {
        return Ok(());
    }
    let dir = (t1 - t0).signum();
    let span = (t1 - t0).abs();
    let mut k: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); n]; 7];
    let mut stage = vec![C64::new(0.0, 0.0); n];
    let mut trial = vec![C64::new(0.0, 0.0); n];

    let mut t = t0;
    rhs(t, y, &mut k[0]);
    let scale0 = y.iter().fold(0.0_f64, |m, v| m.max(v.norm()));
    let slope0 = k[0].iter().fold(0.0_f64, |m, v| m.max(v.norm()));
    let mut h = if slope0 > 0.0 {
        (0.01 * (scale0 + spec.abs_tol) / slope0).min(span)
    } else {
        span
    };
    h = h.max(span * 1e-8);

    for _ in 0..spec.max_steps {
        let remaining = (t1 - t).abs();
        if remaining <= 0.0 {
            return Ok(());
        }
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        let hs = dir * h;
        for s in 0..6 {
            for i in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for (j, &a) in A[s].iter().enumerate() {
                    acc += k[j][i] * a;
                }
                stage[i] = y[i] + acc * hs;
            }
            let (head, tail) = k.split_at_mut(s + 1);
            let _ = head;
            rhs(t + C[s] * hs, &stage, &mut tail[0]);
            if s == 5 {
                trial.copy_from_slice(&stage);
            }
        }
        let mut err_sq = 0.0;
        for i in 0..n {
            let mut e = C64::new(0.0, 0.0);
            for (j, &w) in E.iter().enumerate() {
                e += k[j][i] * w;
            }
            let sc = spec.abs_tol + spec.rel_tol * y[i].norm().max(trial[i].norm());
            err_sq += (e * hs).norm_sqr() / (sc * sc);
        }
        let err = (err_sq / n as f64).sqrt();
        if !err.is_finite() {
            return Err(Error::StepUnderflow { t });
        }
        if err <= 1.0 {
            y.copy_from_slice(&trial);
            t = if last { t1 } else { t + hs };
            k.swap(0, 6);
            if last {
                return Ok(());
            }
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= if err <= 1.0 { factor } else { factor.min(1.0) };
        if h < 1e-13 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t });
        }
    }
    Err(Error::TooManySteps(spec.max_steps))
}

/// Solves `v' = A(t) v + f(t)` from `t0` to `t1`.
pub fn solve_linear_ode<A, F>(a: A, f: F, v0: &CVec, t0: f64, t1: f64, spec: &OdeSpec) -> Result<CVec>
where
    A: Fn(f64) -> CMat,
    F: Fn(f64) -> CVec,
{
    let n = v0.len();
    let mut y: Vec<C64> = v0.iter().copied().collect();
    let mut shape_err = None;
    integrate_in_place(
        |t, y, dy| {
            let m = a(t);
            let g = f(t);
            if m.nrows() != n || m.ncols() != n || g.len() != n {
                shape_err.get_or_insert((m.nrows(), m.ncols(), g.len()));
                dy.iter_mut().for_each(|d| *d = C64::new(0.0, 0.0));
                return;
            }
            for i in 0..n {
                let mut acc = g[i];
                for j in 0..n {
                    acc += m[(i, j)] * y[j];
                }
                dy[i] = acc;
            }
        },
        &mut y,
        t0,
        t1,
        spec,
    )?;
    if let Some((r, c, l)) = shape_err {
        return Err(Error::DimensionMismatch(format!(
            "generator is {r}x{c} and forcing has length {l}, state has length {n}"
        )));
    }
    Ok(CVec::from_vec(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::matrix_exponential;
    use proptest::prelude::*;

    fn rotation_generator(w: f64) -> CMat {
        CMat::from_row_slice(
            2,
            2,
            &[C64::new(0.0, 0.0), C64::new(0.0, -w), C64::new(0.0, -w), C64::new(0.0, 0.0)],
        )
    }

    #[test]
    fn scalar_decay() {
        let mut y = [C64::new(1.0, 0.0)];
        integrate_in_place(|_, y, dy| dy[0] = -y[0] * 2.0, &mut y, 0.0, 3.0, &OdeSpec::default()).unwrap();
        assert!((y[0].re - (-6.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn backward_integration() {
        let mut y = [C64::new(1.0, 0.0)];
        integrate_in_place(|_, y, dy| dy[0] = y[0], &mut y, 1.0, 0.0, &OdeSpec::default()).unwrap();
        assert!((y[0].re - (-1.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn forced_linear_system() {
        // v' = -v + 1 has v(t) = 1 - e^{-t} from zero.
        let v = solve_linear_ode(
            |_| CMat::from_element(1, 1, C64::from(-1.0)),
            |_| CVec::from_element(1, C64::from(1.0)),
            &CVec::zeros(1),
            0.0,
            2.0,
            &OdeSpec::default(),
        )
        .unwrap();
        assert!((v[0].re - (1.0 - (-2.0f64).exp())).abs() < 1e-9);
    }

    #[test]
    fn too_many_steps() {
        let spec = OdeSpec {
            max_steps: 3,
            ..OdeSpec::default()
        };
        let mut y = [C64::new(1.0, 0.0)];
        let r = integrate_in_place(|t, _, dy| dy[0] = C64::from((50.0 * t).sin()), &mut y, 0.0, 10.0, &spec);
        assert!(matches!(r, Err(Error::TooManySteps(3))));
    }

    proptest! {
        #[test]
        fn unitary_flow_preserves_norm(w in 0.1..5.0f64, t in 0.1..5.0f64) {
            let g = rotation_generator(w);
            let v0 = CVec::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
            let v = solve_linear_ode(|_| g.clone(), |_| CVec::zeros(2), &v0, 0.0, t, &OdeSpec::default()).unwrap();
            prop_assert!((v.norm() - 1.0).abs() < 1e-8);
            let exact = matrix_exponential(&g, t).unwrap() * &v0;
            prop_assert!((v - exact).norm() < 1e-8);
        }

        #[test]
        fn semigroup(w in 0.1..3.0f64, s in 0.1..2.0f64, t in 0.1..2.0f64) {
            let g = rotation_generator(w) + CMat::identity(2, 2) * C64::from(-0.3);
            let v0 = CVec::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
            let spec = OdeSpec::default();
            let mid = solve_linear_ode(|_| g.clone(), |_| CVec::zeros(2), &v0, 0.0, s, &spec).unwrap();
            let two = solve_linear_ode(|_| g.clone(), |_| CVec::zeros(2), &mid, s, s + t, &spec).unwrap();
            let one = solve_linear_ode(|_| g.clone(), |_| CVec::zeros(2), &v0, 0.0, s + t, &spec).unwrap();
            prop_assert!((two - one).norm() < 1e-8);
        }
    }
}
