//! Closed forms for a two-level atom driven by the decaying exponential pulse
//! `ξ_t = √Ω e^{−Ωt/2}`. They serve as golden references for the
//! quadrature-based results of [`crate::tla`].

use serde::{Deserialize, Serialize};

use crate::tla::{AtomParams, AtomState, EventProbs};
use crate::{Error, Pulse, Result, C64};

/// `|dt|` below which `(e^z − 1)/z` is evaluated by its Taylor series.
const SERIES_THRESHOLD: f64 = 1e-3;

/// Decay rate `Ω` of the exponential pulse.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpPulseParams {
    pub omega: f64,
}

impl ExpPulseParams {
    pub fn new(omega: f64) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidParameter(format!("pulse rate must be positive, got {omega}")));
        }
        Ok(Self { omega })
    }

    pub fn pulse(&self) -> Pulse {
        Pulse::exponential(self.omega).expect("validated rate")
    }
}

/// `ξ_t = √Ω e^{−Ωt/2}`.
pub fn exp_pulse(omega: f64) -> Result<Pulse> {
    Ok(ExpPulseParams::new(omega)?.pulse())
}

/// `(e^z − 1)/z`, accurate for small and moderate `|z|`.
fn phi1(z: C64) -> C64 {
    if z.norm() < SERIES_THRESHOLD {
        C64::from(1.0) + z * (0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z / 120.0)))
    } else {
        let (x, y) = (z.re, z.im);
        let half = (0.5 * y).sin();
        let em1 = C64::new(x.exp_m1() * y.cos() - 2.0 * half * half, x.exp() * y.sin());
        em1 / z
    }
}

/// Probability of no count in `[0, t]`.
pub fn p_zero_exp(params: &AtomParams, state: &AtomState, omega: f64, t: f64) -> f64 {
    let gamma = params.gamma();
    let t = t.max(0.0);
    let excited = (-(gamma + omega) * t).exp();
    // Γ1 |K(t)|² with K(t) = √Ω t e^{−ct} φ(dt), d = (Γ−Ω)/2 − iΔ. This equals
    // 4ΩΓ1/((Γ−Ω)² + 4Δ²) (e^{−Ωt} + e^{−Γt} − 2cos(Δt) e^{−(Γ+Ω)t/2}) without
    // the cancellation near Ω = Γ, Δ = 0.
    let d = C64::new(0.5 * (gamma - omega), -params.detuning);
    let interference = omega * params.gamma_right * t * t * (-gamma * t).exp() * phi1(d * t).norm_sqr();
    excited * state.rho_ee + ((-omega * t).exp() + interference) * state.rho_gg
}

/// `e^{−2Γt} ρ_ee + e^{−Γt}(1 + ΓΓ1t²) ρ_gg`, valid for `Ω = Γ`, `Δ = 0`.
pub fn p_zero_exp_resonant(params: &AtomParams, state: &AtomState, t: f64) -> f64 {
    let gamma = params.gamma();
    (-2.0 * gamma * t).exp() * state.rho_ee
        + (-gamma * t).exp() * (1.0 + gamma * params.gamma_right * t * t) * state.rho_gg
}

fn require_decay(params: &AtomParams) -> Result<f64> {
    let gamma = params.gamma();
    if gamma > 0.0 {
        Ok(gamma)
    } else {
        Err(Error::InvalidParameter("the limits need Γ1 + Γ2 > 0".into()))
    }
}

/// `t → ∞` limits of the six count patterns; `none` is zero.
pub fn longtime_event_probs(params: &AtomParams, omega: f64, state: &AtomState) -> Result<EventProbs> {
    let gamma = require_decay(params)?;
    ExpPulseParams::new(omega)?;
    let (g, g1, g2, o) = (gamma, params.gamma_right, params.gamma_left, omega);
    let d2 = 4.0 * params.detuning.powi(2);
    let lorentz = d2 + (g + o).powi(2);
    let left = 4.0 * g1 * g2 * (o + g) / (g * lorentz);
    let rr = g1 * (d2 + g * g - 4.0 * g * g1 + 6.0 * g * o + 4.0 * g1 * g1 - 4.0 * g1 * o + o * o) / (g * lorentz);
    let lr = (g2 * (d2 * o + 4.0 * g1 * g1 * o - 4.0 * g1 * o * o + o.powi(3))
        + g * g2 * (4.0 * g1 * g1 - 4.0 * g1 * o + 2.0 * o * o)
        + g * g * g2 * o)
        / (g * (g + o) * lorentz);
    let rl = g2
        * (d2 * g + g.powi(3) - 4.0 * g * g * g1 + 2.0 * g * g * o + 4.0 * g * g1 * g1 - 4.0 * g * g1 * o + g * o * o
            + 4.0 * g1 * g1 * o)
        / (g * (g + o) * lorentz);
    let ll = 4.0 * g1 * g2 * g2 / (g * lorentz);
    Ok(EventProbs {
        none: 0.0,
        r: (1.0 - left) * state.rho_gg,
        l: left * state.rho_gg,
        rr: rr * state.rho_ee,
        lr: lr * state.rho_ee,
        rl: rl * state.rho_ee,
        ll: ll * state.rho_ee,
    })
}

/// Mean count times.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanTimes {
    pub tau1: f64,
    /// Present only for an initially excited atom.
    pub tau2: Option<f64>,
}

/// Mean time of the first count for any initial state.
pub fn tau1_exp(params: &AtomParams, omega: f64, state: &AtomState) -> Result<f64> {
    ExpPulseParams::new(omega)?;
    let gamma = params.gamma();
    let scattering = if gamma > 0.0 {
        4.0 * params.gamma_right * (omega + gamma)
            / (gamma * (4.0 * params.detuning.powi(2) + (gamma + omega).powi(2)))
    } else {
        0.0
    };
    Ok(state.rho_ee / (gamma + omega) + (1.0 / omega + scattering) * state.rho_gg)
}

/// Mean time of the second count; needs `ρ_ee = 1`.
pub fn tau2_exp(params: &AtomParams, omega: f64, state: &AtomState) -> Result<f64> {
    if (state.rho_ee - 1.0).abs() > 1e-12 {
        return Err(Error::NotExcited(state.rho_ee));
    }
    let g = require_decay(params)?;
    ExpPulseParams::new(omega)?;
    let (g1, o) = (params.gamma_right, omega);
    let d2 = 4.0 * params.detuning.powi(2);
    let num = d2 * (g * g + g * o + o * o) + g.powi(4) + 3.0 * g.powi(3) * o + 4.0 * g * g * o * o
        + 4.0 * g1 * g * g * o
        + 3.0 * g * o.powi(3)
        - 4.0 * g1 * o.powi(3)
        + o.powi(4);
    Ok(num / (g * o * (g + o) * (d2 + (g + o).powi(2))))
}

/// `τ₁` and, for `ρ_ee = 1`, `τ₂`.
pub fn mean_times_exp(params: &AtomParams, omega: f64, state: &AtomState) -> Result<MeanTimes> {
    let tau1 = tau1_exp(params, omega, state)?;
    let tau2 = if (state.rho_ee - 1.0).abs() <= 1e-12 {
        Some(tau2_exp(params, omega, state)?)
    } else {
        None
    };
    Ok(MeanTimes { tau1, tau2 })
}

/// What happens to the incoming photon for an atom starting in `|g⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Behaviour {
    /// `P_R(∞) ≥ 0.99`.
    Transmitted,
    /// `P_L(∞) ≥ 0.99`.
    Reflected,
    Partial,
}

/// One row of the regime table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeRow {
    pub label: String,
    pub omega: f64,
    pub detuning: f64,
    /// Limits for `ρ_gg = 1`.
    pub ground: EventProbs,
    /// Limits for `ρ_ee = 1`.
    pub excited: EventProbs,
    /// `(⟨N_R⟩, ⟨N_L⟩)` for `ρ_gg = 1` and for `ρ_ee = 1`.
    pub mean_counts_ground: (f64, f64),
    pub mean_counts_excited: (f64, f64),
    pub behaviour: Behaviour,
}

/// Ratio used for the extreme pulse-length regimes.
pub const EXTREME_RATIO: f64 = 1e3;

/// Long-time limits at the given parameters and at the extremes of short
/// pulse, long pulse and large detuning.
pub fn limit_regimes(params: &AtomParams, omega: f64) -> Result<Vec<RegimeRow>> {
    let gamma = require_decay(params)?;
    let rows = [
        ("given", omega, params.detuning),
        ("short-pulse", EXTREME_RATIO * gamma, params.detuning),
        ("long-pulse", gamma / EXTREME_RATIO, params.detuning),
        ("large-detuning", omega, EXTREME_RATIO * EXTREME_RATIO * (gamma + omega)),
    ];
    rows.iter()
        .map(|&(label, omega, detuning)| {
            let p = AtomParams { detuning, ..*params };
            let ground = longtime_event_probs(&p, omega, &AtomState::ground())?;
            let excited = longtime_event_probs(&p, omega, &AtomState::excited())?;
            let behaviour = if ground.r >= 0.99 {
                Behaviour::Transmitted
            } else if ground.l >= 0.99 {
                Behaviour::Reflected
            } else {
                Behaviour::Partial
            };
            Ok(RegimeRow {
                label: label.to_string(),
                omega,
                detuning,
                ground,
                excited,
                mean_counts_ground: ground.mean_counts(),
                mean_counts_excited: excited.mean_counts(),
                behaviour,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn symmetric(detuning: f64) -> AtomParams {
        AtomParams::new(0.5, 0.5, detuning).unwrap()
    }

    #[test]
    fn pulse_is_normalized() {
        let p = exp_pulse(1.0).unwrap();
        assert_eq!(p.tail(0.0), 1.0);
        assert!((p.tail(1.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert!(exp_pulse(0.0).is_err());
        assert!(exp_pulse(-1.0).is_err());
    }

    #[test]
    fn resonant_branch_is_continuous() {
        let p = symmetric(0.0);
        let s = AtomState::new(0.4, 0.6, C64::new(0.0, 0.0)).unwrap();
        for &t in &[0.0, 0.3, 1.0, 4.0, 12.0] {
            let exact = p_zero_exp_resonant(&p, &s, t);
            assert!((p_zero_exp(&p, &s, 1.0, t) - exact).abs() < 1e-12);
            for eps in [1e-7, 2e-6, 1e-5, 1e-4] {
                let near = p_zero_exp(&p, &s, 1.0 + eps, t);
                let near_d = p_zero_exp(&symmetric(eps), &s, 1.0, t);
                let bound = 1e-10 + 10.0 * eps;
                assert!((near - exact).abs() < bound, "t={t} eps={eps}");
                assert!((near_d - exact).abs() < bound, "t={t} eps={eps}");
            }
        }
    }

    #[test]
    fn matches_interference_formula_away_from_resonance() {
        let p = AtomParams::new(0.3, 0.9, 0.4).unwrap();
        let s = AtomState::new(0.7, 0.3, C64::new(0.1, 0.0)).unwrap();
        let (g, o, d) = (1.2f64, 0.5f64, 0.4f64);
        for &t in &[0.1f64, 1.0, 3.0, 9.0] {
            let bracket = (-o * t).exp() + (-g * t).exp() - 2.0 * (d * t).cos() * (-0.5 * (g + o) * t).exp();
            let literal = (-(g + o) * t).exp() * 0.3
                + ((-o * t).exp() + 4.0 * o * 0.3 / ((g - o).powi(2) + 4.0 * d * d) * bracket) * 0.7;
            assert!((p_zero_exp(&p, &s, o, t) - literal).abs() < 1e-13);
        }
    }

    #[test]
    fn large_detuning_decouples() {
        let p = AtomParams::new(0.3, 0.7, 1e7).unwrap();
        let s = AtomState::new(0.5, 0.5, C64::new(0.0, 0.0)).unwrap();
        for &t in &[0.5, 2.0] {
            let expected = (-(1.0f64 + 0.8) * t).exp() * 0.5 + (-0.8f64 * t).exp() * 0.5;
            assert!((p_zero_exp(&p, &s, 0.8, t) - expected).abs() < 1e-12);
        }
        let lim = longtime_event_probs(&p, 0.8, &AtomState::excited()).unwrap();
        assert!((lim.rr - 0.3).abs() < 1e-9);
        assert!(lim.ll < 1e-12);
        assert!((lim.lr - 0.7 * 0.8 / 1.8).abs() < 1e-9);
        assert!((lim.rl - 0.7 / 1.8).abs() < 1e-9);
    }

    #[test]
    fn resonant_symmetric_limits() {
        let (g, o) = (1.0, 2.0);
        let q = (g + o) * (g + o);
        let e = longtime_event_probs(&symmetric(0.0), o, &AtomState::excited()).unwrap();
        assert!((e.rr - o * (o + 4.0 * g) / (2.0 * q)).abs() < 1e-14);
        assert!((e.lr - (0.5 - 1.5 * g * o / q)).abs() < 1e-14);
        assert!((e.rl - g * o / (2.0 * q)).abs() < 1e-14);
        assert!((e.ll - g * g / (2.0 * q)).abs() < 1e-14);
        let gr = longtime_event_probs(&symmetric(0.0), o, &AtomState::ground()).unwrap();
        assert!((gr.r - o / (g + o)).abs() < 1e-14);
        let (nr, nl) = e.mean_counts();
        assert!((nr - (g * g + 8.0 * g * o + 3.0 * o * o) / (2.0 * q)).abs() < 1e-14);
        assert!((nl - (3.0 * g * g + o * o) / (2.0 * q)).abs() < 1e-14);
        assert!(longtime_event_probs(&AtomParams::new(0.0, 0.0, 0.0).unwrap(), o, &AtomState::ground()).is_err());
    }

    #[test]
    fn regimes_table() {
        let rows = limit_regimes(&symmetric(0.0), 1.0).unwrap();
        let short = rows.iter().find(|r| r.label == "short-pulse").unwrap();
        assert!((short.excited.rr - 0.5).abs() < 2e-3);
        assert!((short.excited.lr - 0.5).abs() < 2e-3);
        assert!(short.excited.rl < 2e-3 && short.excited.ll < 2e-3);
        assert_eq!(short.behaviour, Behaviour::Transmitted);
        let long = rows.iter().find(|r| r.label == "long-pulse").unwrap();
        assert!((long.excited.lr - 0.5).abs() < 2e-3);
        assert!((long.excited.ll - 0.5).abs() < 2e-3);
        assert_eq!(long.behaviour, Behaviour::Reflected);
        for r in &rows {
            let (a, b) = r.mean_counts_ground;
            let (c, d) = r.mean_counts_excited;
            assert!((a + b - 1.0).abs() < 1e-12 && (c + d - 2.0).abs() < 1e-12, "{}", r.label);
        }
    }

    #[test]
    fn mean_time_values() {
        let t = mean_times_exp(&symmetric(0.0), 0.5, &AtomState::ground()).unwrap();
        assert!((t.tau1 - 10.0 / 3.0).abs() < 1e-14);
        assert_eq!(t.tau2, None);
        let t = mean_times_exp(&symmetric(0.0), 2.0, &AtomState::excited()).unwrap();
        assert!((t.tau1 - 1.0 / 3.0).abs() < 1e-14);
        assert!((t.tau2.unwrap() - 17.0 / 18.0).abs() < 1e-14);
        assert!(tau2_exp(&symmetric(0.0), 2.0, &AtomState::ground()).is_err());
        for o in [0.1f64, 0.7, 3.0] {
            let resonant = (1.0 + 4.0 * o + o.powi(3)) / (o * (1.0 + o).powi(2));
            assert!((tau2_exp(&symmetric(0.0), o, &AtomState::excited()).unwrap() - resonant).abs() < 1e-12);
        }
        // Γ ≪ Ω and Ω ≪ Γ.
        let fast = mean_times_exp(&symmetric(0.0), 1e4, &AtomState::excited()).unwrap();
        assert!((fast.tau2.unwrap() - 1.0).abs() < 1e-3);
        assert!((fast.tau1 - 1e-4).abs() < 1e-7);
        let slow = mean_times_exp(&symmetric(0.0), 1e-4, &AtomState::excited()).unwrap();
        assert!((slow.tau1 - 1.0).abs() < 1e-3);
        assert!((slow.tau2.unwrap() - 1e4).abs() < 10.0);
    }

    proptest! {
        #[test]
        fn limits_sum_to_one(g1 in 0.01..3.0f64, g2 in 0.0..3.0f64, delta in -5.0..5.0f64, o in 0.01..5.0f64) {
            let p = AtomParams::new(g1, g2, delta).unwrap();
            for s in [AtomState::ground(), AtomState::excited()] {
                let l = longtime_event_probs(&p, o, &s).unwrap();
                prop_assert!((l.total() - 1.0).abs() < 1e-12);
                let (nr, nl) = l.mean_counts();
                prop_assert!((nr + nl - 1.0 - s.rho_ee).abs() < 1e-12);
                for v in [l.r, l.l, l.rr, l.lr, l.rl, l.ll] {
                    prop_assert!(v >= -1e-15);
                }
            }
        }

        #[test]
        fn scale_invariance(g1 in 0.01..3.0f64, g2 in 0.0..3.0f64, delta in -5.0..5.0f64, o in 0.01..5.0f64,
                            lambda in 0.01..100.0f64, t in 0.0..5.0f64, x in 0.0..1.0f64) {
            let p = AtomParams::new(g1, g2, delta).unwrap();
            let q = p.scaled(lambda);
            let s = AtomState::new(1.0 - x, x, C64::new(0.0, 0.0)).unwrap();
            let a = longtime_event_probs(&p, o, &s).unwrap();
            let b = longtime_event_probs(&q, lambda * o, &s).unwrap();
            for pat in crate::EventPattern::ALL {
                prop_assert!((a.get(pat) - b.get(pat)).abs() < 1e-12);
            }
            prop_assert!((p_zero_exp(&p, &s, o, t) - p_zero_exp(&q, &s, lambda * o, t / lambda)).abs() < 1e-12);
            let ta = tau1_exp(&p, o, &s).unwrap();
            let tb = tau1_exp(&q, lambda * o, &s).unwrap();
            prop_assert!((ta - lambda * tb).abs() < 1e-10 * ta);
            let e = AtomState::excited();
            let ta = tau2_exp(&p, o, &e).unwrap();
            let tb = tau2_exp(&q, lambda * o, &e).unwrap();
            prop_assert!((ta - lambda * tb).abs() < 1e-10 * ta);
        }
    }
}
