//! The subcommands. Each returns its output bytes and the cross-checks it
//! ran; the caller turns failed checks into exit code 2.

use anyhow::{bail, Context, Result};
use photonq::collision::BlockMode;
use photonq::continuum::ContinuumEngine;
use photonq::convergence::pair_convergence;
use photonq::exp_pulse::{mean_times_exp, p_zero_exp};
use photonq::io::{fmt_g15, write_samples, CsvWriter, Field};
use photonq::montecarlo::{Estimate, SampleBucket, Sampler, SamplerConfig};
use photonq::tla::{AtomParams, AtomState, TwoLevelAtom};
use photonq::{DetectionRecord, EventPattern, Side};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Resolved, System};

/// Outcome of one internal comparison.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

pub struct CommandOutput {
    pub body: Vec<u8>,
    pub checks: Vec<Check>,
}

/// Overrides given on the command line.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
}

const PZERO_TOL: f64 = 1e-8;
const DENSITY_TOL: f64 = 1e-6;
const EVENTS_TOL: f64 = 1e-5;
const TIMES_TOL: f64 = 1e-6;
const BALANCE_TOL: f64 = 1e-10;
const RATIO_RANGE: (f64, f64) = (1.7, 2.3);
const SIGMAS: f64 = 4.0;
/// Pair errors below this are rounding noise and carry no order information.
const ERR_FLOOR: f64 = 1e-13;
const OTHER_MAX: f64 = 1e-3;
/// Extra time after the pulse horizon for discrete sampling, in `1/Γ`.
const SAMPLE_TAIL: f64 = 30.0;

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn max_point(values: impl Iterator<Item = (f64, f64)>) -> (f64, f64) {
    values.fold((0.0, f64::NAN), |acc, (d, t)| if d > acc.0 || acc.1.is_nan() { (d, t) } else { acc })
}

pub fn pzero(r: &Resolved, o: Overrides) -> Result<CommandOutput> {
    let (params, state, atom) = r.atom("pzero")?;
    let tol = r.tolerance(o.tol, PZERO_TOL)?;
    let times = r.grid()?;
    let engine = ContinuumEngine::new(r.model()?, r.pulse.clone());
    let ens = r.ensemble()?;
    let omega = r.pulse.exponential_rate();
    let rows: Vec<(f64, f64, f64)> = times
        .par_iter()
        .map(|&t| {
            let analytic = match omega {
                Some(w) => p_zero_exp(&params, &state, w, t),
                None => atom.p_zero(&state, t),
            };
            Ok((t, analytic, engine.no_count_prob(&ens, t)?))
        })
        .collect::<photonq::Result<_>>()?;
    let mut w = CsvWriter::new(Vec::new(), &["t", "P0_analytic", "P0_quadrature", "abs_diff"])?;
    for &(t, a, q) in &rows {
        w.row(&[Field::Num(t), Field::Num(a), Field::Num(q), Field::Num((a - q).abs())])?;
    }
    let (worst, at) = max_point(rows.iter().map(|&(t, a, q)| ((a - q).abs(), t)));
    Ok(CommandOutput {
        body: w.finish()?,
        checks: vec![Check::new(
            "pzero analytic vs quadrature",
            worst <= tol,
            format!("max abs diff {} at t = {} (tolerance {})", fmt_g15(worst), fmt_g15(at), fmt_g15(tol)),
        )],
    })
}

const TWO_COUNT: [EventPattern; 4] = [EventPattern::RR, EventPattern::LR, EventPattern::RL, EventPattern::LL];

pub fn densities(r: &Resolved, o: Overrides) -> Result<CommandOutput> {
    let (_, state, atom) = r.atom("densities")?;
    let tol = r.tolerance(o.tol, DENSITY_TOL)?;
    let times: Vec<f64> = r.grid()?.into_iter().filter(|&t| t > 0.0).collect();
    let horizon = *times.last().context("grid has no positive time")?;
    let engine = ContinuumEngine::new(r.model()?, r.pulse.clone());
    let ens = r.ensemble()?;
    let mut jobs: Vec<(f64, Option<f64>, EventPattern)> = Vec::new();
    for &t in &times {
        for p in [EventPattern::R, EventPattern::L] {
            jobs.push((t, None, p));
        }
    }
    for (k, &t1) in times.iter().enumerate() {
        for &t2 in &times[k + 1..] {
            for p in TWO_COUNT {
                jobs.push((t1, Some(t2), p));
            }
        }
    }
    let rows: Vec<(f64, Option<f64>, EventPattern, f64, f64)> = jobs
        .par_iter()
        .map(|&(t1, t2, p)| {
            let sides = p.sides();
            let pairs: Vec<(f64, Side)> = match t2 {
                None => vec![(t1, sides[0])],
                Some(t2) => vec![(t1, sides[0]), (t2, sides[1])],
            };
            let record = DetectionRecord::from_pairs(&pairs, horizon)?;
            Ok((t1, t2, p, atom.exclusive_density(&state, &record)?, engine.exclusive_density(&ens, &record)?))
        })
        .collect::<photonq::Result<_>>()?;
    let mut w = CsvWriter::new(Vec::new(), &["t_prime", "t_second", "side_pattern", "density"])?;
    let mut worst: f64 = 0.0;
    for &(t1, t2, p, a, q) in &rows {
        if a.abs().max(q.abs()) > 1e-12 {
            worst = worst.max(relative(a, q));
        }
        let second = t2.map_or(Field::Empty, Field::Num);
        w.row(&[Field::Num(t1), second, Field::Text(p.label()), Field::Num(a)])?;
    }
    Ok(CommandOutput {
        body: w.finish()?,
        checks: vec![Check::new(
            "densities closed form vs continuum engine",
            worst <= tol,
            format!("max relative deviation {} (tolerance {})", fmt_g15(worst), fmt_g15(tol)),
        )],
    })
}

pub fn events(r: &Resolved, o: Overrides) -> Result<CommandOutput> {
    let (_, state, atom) = r.atom("events")?;
    let tol = r.tolerance(o.tol, EVENTS_TOL)?;
    let times = r.grid()?;
    let probs = atom.event_probs_on_grid(&state, &times)?;
    let header = ["t", "P_R", "P_L", "P_RR", "P_LR", "P_RL", "P_LL", "N_R", "N_L", "total"];
    let mut w = CsvWriter::new(Vec::new(), &header)?;
    let mut worst: f64 = 0.0;
    for (&t, p) in times.iter().zip(&probs) {
        let (nr, nl) = p.mean_counts();
        let total = p.total();
        worst = worst.max((total - 1.0).abs());
        w.row(&[
            Field::Num(t),
            Field::Num(p.r),
            Field::Num(p.l),
            Field::Num(p.rr),
            Field::Num(p.lr),
            Field::Num(p.rl),
            Field::Num(p.ll),
            Field::Num(nr),
            Field::Num(nl),
            Field::Num(total),
        ])?;
    }
    Ok(CommandOutput {
        body: w.finish()?,
        checks: vec![Check::new(
            "events normalization",
            worst <= tol,
            format!("max |total − 1| {} (tolerance {})", fmt_g15(worst), fmt_g15(tol)),
        )],
    })
}

#[derive(Serialize)]
struct MeanTimeReport {
    analytic: Option<f64>,
    quadrature: f64,
    monte_carlo: Option<McMean>,
}

#[derive(Serialize)]
struct McMean {
    mean: f64,
    std_error: f64,
    samples: usize,
}

#[derive(Serialize)]
struct DelayReport {
    by_definition: f64,
    opposite_sign: f64,
}

#[derive(Serialize)]
struct TimesReport {
    tau1: MeanTimeReport,
    tau2: Option<MeanTimeReport>,
    /// For an atom starting in `|g⟩`.
    tau_delay: DelayReport,
    checks: Vec<Check>,
}

fn sampler_for(r: &Resolved, o: Overrides, params: Option<&AtomParams>) -> Result<Sampler> {
    let spec = r.config.sampler.context("missing `sampler`")?;
    let seed = o.seed.or(r.config.seed).context("sampling needs a seed (`--seed` or `seed`)")?;
    let horizon = match (spec.horizon, params) {
        (Some(h), _) => h,
        (None, Some(p)) if p.gamma() > 0.0 => r.pulse.horizon() + SAMPLE_TAIL / p.gamma(),
        _ => bail!("`sampler.horizon` is required unless the atom decays"),
    };
    if !(spec.tau > 0.0 && horizon > 0.0) {
        bail!("sampler needs τ > 0 and a positive horizon");
    }
    let n = (horizon / spec.tau).round().max(1.0) as usize;
    let discrete = r.pulse.discretize(n, n as f64 * spec.tau)?;
    let config = SamplerConfig {
        seed,
        n_samples: spec.n_samples,
        tau: spec.tau,
        n_steps: n,
        block_mode: spec.block_mode,
    };
    Ok(Sampler::new(config, r.model()?, discrete, &r.ensemble()?)?)
}

fn mean_check(name: &str, analytic: f64, mc: &photonq::montecarlo::MeanEstimate, sigmas: f64) -> Check {
    let z = (mc.mean - analytic).abs() / mc.std_error;
    Check::new(
        name,
        z <= sigmas,
        format!("sample mean {} vs {} (z = {}, bound {})", fmt_g15(mc.mean), fmt_g15(analytic), fmt_g15(z), sigmas),
    )
}

pub fn times(r: &Resolved, o: Overrides) -> Result<CommandOutput> {
    let (params, state, atom) = r.atom("times")?;
    let tol = r.tolerance(o.tol, TIMES_TOL)?;
    let spec = r.config.times.unwrap_or_default();
    let excited = (state.rho_ee - 1.0).abs() <= 1e-12;
    let want_tau2 = spec.tau2.unwrap_or(excited);
    if want_tau2 && !excited {
        bail!("τ₂ is defined for an initially excited atom, got ρ_ee = {}", state.rho_ee);
    }
    let omega = r.pulse.exponential_rate();
    let closed = omega.map(|w| mean_times_exp(&params, w, &state)).transpose()?;
    let first = atom.first_count(&state)?;
    let second = if want_tau2 { Some(atom.second_count(&state)?) } else { None };
    let delay = atom.delay_time()?;
    let mut checks = Vec::new();
    let mut mc: (Option<McMean>, Option<McMean>) = (None, None);
    if spec.monte_carlo {
        let sampler = sampler_for(r, o, Some(&params))?;
        let (est, _) = sampler.estimate()?;
        if let Some(t1) = est.tau1 {
            checks.push(mean_check("tau1 Monte Carlo", first.tau1, &t1, SIGMAS));
            mc.0 = Some(McMean {
                mean: t1.mean,
                std_error: t1.std_error,
                samples: t1.n,
            });
        }
        if let (Some(t2), Some(s)) = (est.tau2, &second) {
            checks.push(mean_check("tau2 Monte Carlo", s.tau2, &t2, SIGMAS));
            mc.1 = Some(McMean {
                mean: t2.mean,
                std_error: t2.std_error,
                samples: t2.n,
            });
        }
    }
    if let Some(c) = &closed {
        let d = (c.tau1 - first.tau1).abs();
        checks.push(Check::new(
            "tau1 closed form vs quadrature",
            d <= tol,
            format!("difference {} (tolerance {})", fmt_g15(d), fmt_g15(tol)),
        ));
        if let (Some(a), Some(s)) = (c.tau2, &second) {
            let d = (a - s.tau2).abs();
            checks.push(Check::new(
                "tau2 closed form vs quadrature",
                d <= tol,
                format!("difference {} (tolerance {})", fmt_g15(d), fmt_g15(tol)),
            ));
        }
    }
    let report = TimesReport {
        tau1: MeanTimeReport {
            analytic: closed.map(|c| c.tau1),
            quadrature: first.tau1,
            monte_carlo: mc.0,
        },
        tau2: second.map(|s| MeanTimeReport {
            analytic: closed.and_then(|c| c.tau2),
            quadrature: s.tau2,
            monte_carlo: mc.1,
        }),
        tau_delay: DelayReport {
            by_definition: delay.by_definition,
            opposite_sign: delay.opposite_sign,
        },
        checks: checks.clone(),
    };
    let mut body = serde_json::to_vec_pretty(&report)?;
    body.push(b'\n');
    Ok(CommandOutput { body, checks })
}

pub fn converge(r: &Resolved, o: Overrides) -> Result<CommandOutput> {
    let spec = r.config.converge.clone().context("missing `converge`")?;
    let tol = r.tolerance(o.tol, BALANCE_TOL)?;
    let record = r.record(&spec)?;
    let model = r.model()?;
    let ens = r.ensemble()?;
    let [(_, psi0)] = ens.components() else {
        bail!("`converge` follows one conditional pair and needs a pure initial state");
    };
    let pts = pair_convergence(&model, &r.pulse, psi0, &record, &spec.taus, spec.block_mode)?;
    let mut w = CsvWriter::new(Vec::new(), &["tau", "err", "ratio"])?;
    for p in &pts {
        w.row(&[Field::Num(p.tau), Field::Num(p.err), p.ratio.map_or(Field::Empty, Field::Num)])?;
    }
    let mut checks = Vec::new();
    let ratios: Vec<f64> = pts
        .windows(2)
        .filter(|w| w[0].err > ERR_FLOOR)
        .filter_map(|w| w[1].ratio)
        .collect();
    if ratios.is_empty() && pts.len() > 1 {
        let worst = pts.iter().map(|p| p.err).fold(0.0, f64::max);
        checks.push(Check::new(
            "first-order convergence",
            worst <= ERR_FLOOR,
            format!("max error {} is at rounding level, no ratio to test", fmt_g15(worst)),
        ));
    } else if !ratios.is_empty() {
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        checks.push(Check::new(
            "first-order convergence",
            lo >= RATIO_RANGE.0 && hi <= RATIO_RANGE.1,
            format!("ratios in [{}, {}], expected within [{}, {}]", fmt_g15(lo), fmt_g15(hi), RATIO_RANGE.0, RATIO_RANGE.1),
        ));
    }
    if spec.block_mode == BlockMode::Exact {
        let worst = pts.iter().map(|p| p.balance_defect).fold(0.0, f64::max);
        checks.push(Check::new(
            "exact-block outcome probabilities sum to one",
            worst <= tol,
            format!("max defect {} (tolerance {})", fmt_g15(worst), fmt_g15(tol)),
        ));
    }
    Ok(CommandOutput {
        body: w.finish()?,
        checks,
    })
}

struct Reference {
    probs: Option<[f64; 8]>,
    tau1: Option<f64>,
    tau2: Option<f64>,
}

fn reference(atom: &TwoLevelAtom, state: &AtomState, horizon: f64) -> Result<Reference> {
    let p = atom.event_probs(state, horizon)?;
    let mut probs = [0.0; 8];
    for pat in EventPattern::ALL {
        probs[SampleBucket::Pattern(pat).index()] = p.get(pat);
    }
    let tau2 = if (state.rho_ee - 1.0).abs() <= 1e-12 {
        Some(atom.second_count(state)?.tau2)
    } else {
        None
    };
    Ok(Reference {
        probs: Some(probs),
        tau1: Some(atom.first_count(state)?.tau1),
        tau2,
    })
}

pub fn sample(r: &Resolved, o: Overrides) -> Result<CommandOutput> {
    let sigmas = r.tolerance(o.tol, SIGMAS)?;
    let params = match &r.system {
        System::Atom { params, .. } => Some(*params),
        System::Generic { .. } => None,
    };
    let sampler = sampler_for(r, o, params.as_ref())?;
    let (est, records) = sampler.estimate()?;
    let tau = sampler.config().tau;
    if let Some(path) = &r.config.sample_dump {
        let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_samples(std::io::BufWriter::new(file), &records, tau)?;
    }
    let reference = match &r.system {
        System::Atom { params, state } => {
            let atom = TwoLevelAtom::new(*params, r.pulse.clone())?;
            reference(&atom, state, sampler.config().n_steps as f64 * tau)?
        }
        System::Generic { .. } => Reference {
            probs: None,
            tau1: None,
            tau2: None,
        },
    };
    sample_table(&est, &reference, sigmas, tau, params.map(|p| p.gamma()))
}

fn sample_table(est: &Estimate, reference: &Reference, sigmas: f64, tau: f64, gamma: Option<f64>) -> Result<CommandOutput> {
    let header = ["quantity", "count", "estimate", "std_error", "analytic", "z", "pass"];
    let mut w = CsvWriter::new(Vec::new(), &header)?;
    let mut checks = Vec::new();
    let n = est.n_samples as f64;
    for pe in &est.patterns {
        let label = match pe.bucket {
            SampleBucket::Pattern(EventPattern::None) => "P_none".to_string(),
            SampleBucket::Pattern(p) => format!("P_{}", p.label()),
            SampleBucket::Other => "P_other".to_string(),
        };
        let mut row = vec![
            Field::Text(&label),
            Field::Int(pe.count as u64),
            Field::Num(pe.probability),
            Field::Num(pe.std_error),
        ];
        let verdict = if pe.bucket == SampleBucket::Other {
            let applies = gamma.is_some_and(|g| tau * g <= 1e-3 + 1e-15);
            row.extend([Field::Empty, Field::Empty]);
            applies.then(|| pe.probability <= OTHER_MAX)
        } else if let Some(probs) = &reference.probs {
            let p = probs[pe.bucket.index()].clamp(0.0, 1.0);
            let sigma = (p * (1.0 - p) / n).sqrt();
            row.push(Field::Num(p));
            if sigma > 0.0 {
                let z = (pe.probability - p).abs() / sigma;
                row.push(Field::Num(z));
                Some(z <= sigmas)
            } else {
                row.push(Field::Empty);
                Some(pe.count == 0)
            }
        } else {
            row.extend([Field::Empty, Field::Empty]);
            None
        };
        let mark = verdict.map_or("", |v| if v { "true" } else { "false" });
        row.push(Field::Text(mark));
        w.row(&row)?;
        if let Some(v) = verdict {
            checks.push(Check::new(format!("{label} sample frequency"), v, format!("{} of {}", pe.count, est.n_samples)));
        }
    }
    for (label, mc, analytic) in [("tau1", est.tau1, reference.tau1), ("tau2", est.tau2, reference.tau2)] {
        let Some(mc) = mc else { continue };
        let mut row = vec![Field::Text(label), Field::Int(mc.n as u64), Field::Num(mc.mean), Field::Num(mc.std_error)];
        match analytic {
            Some(a) => {
                let c = mean_check(label, a, &mc, sigmas);
                let z = (mc.mean - a).abs() / mc.std_error;
                row.extend([Field::Num(a), Field::Num(z), Field::Text(if c.pass { "true" } else { "false" })]);
                checks.push(c);
            }
            None => row.extend([Field::Empty, Field::Empty, Field::Empty]),
        }
        w.row(&row)?;
    }
    Ok(CommandOutput {
        body: w.finish()?,
        checks,
    })
}
