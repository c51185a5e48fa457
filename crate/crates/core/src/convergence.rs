//! Convergence of the discrete collision model to the continuum limit.
//!
//! A discrete pair after `m` counts carries a factor `τ^{m/2}` relative to
//! the continuous pair, since its weight is a probability rather than a
//! density; the error is measured after removing it.

use serde::{Deserialize, Serialize};

use crate::collision::{BlockMode, ClickEvent, DiscreteEngine, Outcome};
use crate::continuum::ContinuumEngine;
use crate::{CVec, DetectionRecord, Error, Pulse, Result, Side, SystemModel};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub tau: f64,
    /// Max-norm distance between the rescaled discrete pair and the
    /// continuous pair at the record horizon.
    pub err: f64,
    /// `err` at the previous `τ` divided by this one.
    pub ratio: Option<f64>,
    /// Largest `|Σ_η p(η) − 1|` along the discrete trajectory.
    pub balance_defect: f64,
}

fn steps(t: f64, tau: f64) -> usize {
    (t / tau).round() as usize
}

/// Errors of the discrete pair for `record` at each `τ`, in input order.
pub fn pair_convergence(
    model: &SystemModel,
    pulse: &Pulse,
    psi0: &CVec,
    record: &DetectionRecord,
    taus: &[f64],
    mode: BlockMode,
) -> Result<Vec<ConvergencePoint>> {
    if taus.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidParameter("time steps must be positive".into()));
    }
    let continuum = ContinuumEngine::new(model.clone(), pulse.clone()).conditional_pair(psi0, record)?;
    let horizon = record.horizon();
    let mut out: Vec<ConvergencePoint> = Vec::with_capacity(taus.len());
    for &tau in taus {
        let n = steps(horizon, tau);
        if tau > horizon || n == 0 {
            return Err(Error::InvalidParameter(format!("time step {tau} exceeds the horizon {horizon}")));
        }
        // sample the whole pulse so that the discrete normalization is not
        // distorted by truncation at the horizon
        let n_total = n.max((pulse.horizon() / tau).ceil() as usize);
        let discrete = pulse.discretize(n_total, n_total as f64 * tau)?;
        let engine = DiscreteEngine::new(model.clone(), discrete, mode)?;
        let events: Vec<ClickEvent> = record
            .events()
            .iter()
            .map(|e| ClickEvent {
                step: steps(e.time, tau).max(1),
                outcome: match e.side {
                    Side::Right => Outcome::Right,
                    Side::Left => Outcome::Left,
                },
            })
            .collect();
        let pair = engine.replay(psi0, &events, n)?;
        let scale = tau.powf(-0.5 * record.len() as f64);
        let err = pair
            .alpha
            .iter()
            .zip(continuum.alpha.iter())
            .chain(pair.beta.iter().zip(continuum.beta.iter()))
            .map(|(d, c)| (d * scale - c).norm())
            .fold(0.0, f64::max);
        let ratio = out.last().map(|p| p.err / err);
        out.push(ConvergencePoint {
            tau,
            err,
            ratio,
            balance_defect: engine.balance_defect(psi0, &events, n)?,
        });
    }
    Ok(out)
}
