//! First-order convergence of discrete conditional pairs to the continuum.

use photonq::collision::BlockMode;
use photonq::convergence::pair_convergence;
use photonq::tla::{tla_model, AtomParams};
use photonq::{CVec, DetectionRecord, Pulse, Side, C64};

const TAUS: [f64; 4] = [1e-2, 5e-3, 2.5e-3, 1.25e-3];

fn check(record: DetectionRecord, psi: CVec, mode: BlockMode) {
    let model = tla_model(&AtomParams::new(0.6, 0.4, 0.3).unwrap()).unwrap();
    let pulse = Pulse::gaussian(1.5, 0.5).unwrap();
    let pts = pair_convergence(&model, &pulse, &psi, &record, &TAUS, mode).unwrap();
    for p in &pts {
        if mode == BlockMode::Exact {
            assert!(p.balance_defect < 1e-10, "{p:?}");
        }
        if let Some(r) = p.ratio {
            assert!((1.7..=2.3).contains(&r), "{mode:?} m={}: {pts:?}", record.len());
        }
    }
}

fn ground() -> CVec {
    CVec::from_vec(vec![C64::from(1.0), C64::from(0.0)])
}

fn excited() -> CVec {
    CVec::from_vec(vec![C64::from(0.0), C64::from(1.0)])
}

#[test]
fn no_count_record() {
    for mode in [BlockMode::Exact, BlockMode::FirstOrder] {
        check(DetectionRecord::empty(3.0).unwrap(), ground(), mode);
    }
}

#[test]
fn one_count_records() {
    for side in [Side::Right, Side::Left] {
        check(DetectionRecord::from_pairs(&[(1.2, side)], 3.0).unwrap(), ground(), BlockMode::Exact);
    }
}

#[test]
fn two_count_records() {
    for sides in [[Side::Right, Side::Right], [Side::Right, Side::Left], [Side::Left, Side::Right], [Side::Left, Side::Left]] {
        let rec = DetectionRecord::from_pairs(&[(0.8, sides[0]), (1.9, sides[1])], 3.0).unwrap();
        check(rec, excited(), BlockMode::Exact);
    }
}
