//! Exponential-pulse closed forms against the generic two-level quadrature.

use photonq::exp_pulse::{exp_pulse, longtime_event_probs, mean_times_exp, p_zero_exp};
use photonq::tla::{AtomParams, AtomState, TwoLevelAtom};
use photonq::{EventPattern, C64};

fn cases() -> Vec<(AtomParams, f64)> {
    vec![
        (AtomParams::new(0.5, 0.5, 0.0).unwrap(), 0.5),
        (AtomParams::new(0.5, 0.5, 0.0).unwrap(), 2.0),
        (AtomParams::new(0.2, 0.8, 0.7).unwrap(), 1.3),
        (AtomParams::new(0.9, 0.1, -1.5).unwrap(), 0.8),
        (AtomParams::new(1.4, 0.6, 2.5).unwrap(), 3.0),
    ]
}

#[test]
fn long_time_limits_match_quadrature() {
    for (p, omega) in cases() {
        let atom = TwoLevelAtom::new(p, exp_pulse(omega).unwrap()).unwrap();
        let t = 50.0 / p.gamma().min(omega);
        for s in [AtomState::ground(), AtomState::excited()] {
            let closed = longtime_event_probs(&p, omega, &s).unwrap();
            let quad = atom.event_probs(&s, t).unwrap();
            for pat in EventPattern::ALL.into_iter().skip(1) {
                let (a, b) = (closed.get(pat), quad.get(pat));
                assert!((a - b).abs() < 1e-6, "{p:?} Ω={omega} {pat:?}: closed {a} quadrature {b}");
            }
        }
    }
}

#[test]
fn p_zero_and_mean_times_match_quadrature() {
    for (p, omega) in cases() {
        let atom = TwoLevelAtom::new(p, exp_pulse(omega).unwrap()).unwrap();
        let mixed = AtomState::new(0.6, 0.4, C64::new(0.2, -0.1)).unwrap();
        for &t in &[0.2, 1.0, 4.0, 15.0] {
            let (a, b) = (p_zero_exp(&p, &mixed, omega, t), atom.p_zero(&mixed, t));
            assert!((a - b).abs() < 1e-9, "P0 at {t}: {a} vs {b}");
        }
        for s in [AtomState::ground(), mixed, AtomState::excited()] {
            let closed = mean_times_exp(&p, omega, &s).unwrap();
            let quad = atom.first_count(&s).unwrap();
            assert!((closed.tau1 - quad.tau1).abs() < 1e-6, "τ₁ {} vs {}", closed.tau1, quad.tau1);
            if let Some(tau2) = closed.tau2 {
                let q = atom.second_count(&s).unwrap();
                assert!((tau2 - q.tau2).abs() < 1e-6, "τ₂ {tau2} vs {}", q.tau2);
            }
        }
    }
}
