//! Sampling of the discrete two-detector counting process.
//!
//! Every sample owns a ChaCha8 stream selected by its index, so results do
//! not depend on the number of worker threads.
//!
//! In exact-block mode the outcome probabilities sum to one at every step,
//! and sequential drawing is equivalent to drawing each waiting time by
//! inversion: with `u` uniform, the next count falls at the first step whose
//! conditional survival drops below `u`. The first waiting time is found by
//! bisection on a shared no-count curve, later ones by stepping forward after
//! an `O(1)` check against the survival forms. First-order mode draws every
//! step literally, normalizing over the four outcomes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::{BlockMode, ClickEvent, DiscreteEngine, Outcome, PatternBucket};
use crate::record::{DetectionRecord, EventPattern, Side};
use crate::{CMat, DiscretePulse, Error, Result, StateEnsemble, SystemModel, C64};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub seed: u64,
    pub n_samples: usize,
    pub tau: f64,
    pub n_steps: usize,
    pub block_mode: BlockMode,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 1 {
            return Err(Error::InvalidParameter("need at least one sample".into()));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {}", self.tau)));
        }
        if self.n_steps < 1 {
            return Err(Error::InvalidParameter("need at least one step".into()));
        }
        Ok(())
    }
}

/// Pattern classes reported by the sampler. Simultaneous `(1,1)` counts and
/// records with more than two clicks fall under `Other`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SampleBucket {
    Pattern(EventPattern),
    Other,
}

impl SampleBucket {
    pub const ALL: [SampleBucket; 8] = [
        SampleBucket::Pattern(EventPattern::None),
        SampleBucket::Pattern(EventPattern::R),
        SampleBucket::Pattern(EventPattern::L),
        SampleBucket::Pattern(EventPattern::RR),
        SampleBucket::Pattern(EventPattern::LR),
        SampleBucket::Pattern(EventPattern::RL),
        SampleBucket::Pattern(EventPattern::LL),
        SampleBucket::Other,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&b| b == self).expect("bucket is listed")
    }

    pub fn label(self) -> &'static str {
        match self {
            SampleBucket::Pattern(p) => p.label(),
            SampleBucket::Other => "other",
        }
    }
}

impl From<PatternBucket> for SampleBucket {
    fn from(b: PatternBucket) -> Self {
        match b {
            PatternBucket::Pattern(p) => SampleBucket::Pattern(p),
            PatternBucket::Both | PatternBucket::Other => SampleBucket::Other,
        }
    }
}

/// One sampled record of counts at discrete steps.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampledRecord {
    pub events: Vec<ClickEvent>,
}

impl SampledRecord {
    pub fn clicks(&self) -> usize {
        self.events.iter().map(|e| e.outcome.clicks()).sum()
    }

    pub fn bucket(&self) -> SampleBucket {
        PatternBucket::of_events(&self.events).into()
    }

    /// Individual clicks at times `step·τ`; a simultaneous count yields `R`
    /// then `L` at the same time.
    pub fn click_times(&self, tau: f64) -> Vec<(f64, Side)> {
        let mut out = Vec::with_capacity(self.events.len());
        for e in &self.events {
            let t = e.step as f64 * tau;
            match e.outcome {
                Outcome::None => {}
                Outcome::Right => out.push((t, Side::Right)),
                Outcome::Left => out.push((t, Side::Left)),
                Outcome::Both => {
                    out.push((t, Side::Right));
                    out.push((t, Side::Left));
                }
            }
        }
        out
    }

    /// Continuous-time record; fails for simultaneous counts.
    pub fn detection_record(&self, tau: f64, horizon: f64) -> Result<DetectionRecord> {
        if self.events.iter().any(|e| e.outcome == Outcome::Both) {
            return Err(Error::InvalidRecord("simultaneous counts have no continuous-time record".into()));
        }
        DetectionRecord::from_pairs(&self.click_times(tau), horizon)
    }
}

struct Component {
    weight: f64,
    /// Stacked no-count state after `k` steps.
    prefix: Vec<Vec<C64>>,
    /// Weight of `prefix[k]`, the probability of no count in steps `1..=k`.
    survival: Vec<f64>,
}

/// Precomputed sampler for one configuration, model, pulse and state.
pub struct Sampler {
    config: SamplerConfig,
    engine: DiscreteEngine,
    forms: Vec<CMat>,
    components: Vec<Component>,
}

impl Sampler {
    pub fn new(config: SamplerConfig, model: SystemModel, pulse: DiscretePulse, state: &StateEnsemble) -> Result<Self> {
        config.validate()?;
        if (pulse.step() - config.tau).abs() > 1e-12 * config.tau {
            return Err(Error::InvalidParameter(format!(
                "pulse sampled with step {} but sampler uses {}",
                pulse.step(),
                config.tau
            )));
        }
        if state.dim() != model.dim() {
            return Err(Error::DimensionMismatch(format!(
                "state has dimension {}, model has {}",
                state.dim(),
                model.dim()
            )));
        }
        let engine = DiscreteEngine::new(model, pulse, config.block_mode)?;
        let n = config.n_steps;
        let forms = match config.block_mode {
            BlockMode::Exact => engine.survival_forms(n),
            BlockMode::FirstOrder => Vec::new(),
        };
        let d = engine.model().dim();
        let kernel = engine.kernel();
        let components = state
            .components()
            .iter()
            .map(|(w, psi)| {
                let mut v: Vec<C64> = psi.iter().copied().chain(std::iter::repeat_n(C64::new(0.0, 0.0), d)).collect();
                let mut prefix = Vec::new();
                let mut survival = Vec::new();
                if config.block_mode == BlockMode::Exact {
                    prefix.reserve(n + 1);
                    survival.reserve(n + 1);
                    let mut next = v.clone();
                    for k in 0..=n {
                        survival.push(kernel.weight(&v, engine.pulse().tail_from(k)));
                        prefix.push(v.clone());
                        if k < n {
                            kernel.apply(Outcome::None, engine.pulse().sample(k), &v, &mut next);
                            std::mem::swap(&mut v, &mut next);
                        }
                    }
                } else {
                    prefix.push(v);
                }
                Component {
                    weight: *w,
                    prefix,
                    survival,
                }
            })
            .collect();
        Ok(Self {
            config,
            engine,
            forms,
            components,
        })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn engine(&self) -> &DiscreteEngine {
        &self.engine
    }

    /// Probability of no count over all steps.
    pub fn no_count_probability(&self) -> Option<f64> {
        (self.config.block_mode == BlockMode::Exact).then(|| {
            self.components
                .iter()
                .map(|c| c.weight * c.survival[self.config.n_steps])
                .sum()
        })
    }

    fn rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(index as u64);
        rng
    }

    /// Uniform on `(0, 1]`.
    fn uniform(rng: &mut ChaCha8Rng) -> f64 {
        1.0 - rng.random::<f64>()
    }

    fn pick_component(&self, rng: &mut ChaCha8Rng) -> &Component {
        if self.components.len() == 1 {
            return &self.components[0];
        }
        let r = rng.random::<f64>();
        let mut acc = 0.0;
        for c in &self.components {
            acc += c.weight;
            if r < acc {
                return c;
            }
        }
        self.components.last().expect("state has components")
    }

    /// Record of sample `index`.
    pub fn sample(&self, index: usize) -> Result<SampledRecord> {
        let mut rng = self.rng(index);
        let comp = self.pick_component(&mut rng);
        match self.config.block_mode {
            BlockMode::Exact => self.sample_exact(comp, &mut rng),
            BlockMode::FirstOrder => self.sample_sequential(comp, &mut rng),
        }
    }

    /// Chooses among count outcomes at `step` from `v`, writing the
    /// normalized successor into `out`.
    fn choose_count(&self, v: &[C64], step: usize, rng: &mut ChaCha8Rng, out: &mut [C64]) -> Result<Outcome> {
        let kernel = self.engine.kernel();
        let xi = self.engine.pulse().sample(step - 1);
        let tail = self.engine.pulse().tail_from(step);
        let mut cands: Vec<(Outcome, Vec<C64>, f64)> = Vec::with_capacity(3);
        let mut total = 0.0;
        for &o in self.engine.count_outcomes() {
            let mut w = vec![C64::new(0.0, 0.0); v.len()];
            kernel.apply(o, xi, v, &mut w);
            let p = kernel.weight(&w, tail);
            total += p;
            cands.push((o, w, p));
        }
        if !(total > 0.0) {
            return Err(Error::ZeroWeight);
        }
        let r = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let last = cands.iter().rposition(|c| c.2 > 0.0).expect("positive total");
        for (k, (o, w, p)) in cands.into_iter().enumerate() {
            acc += p;
            if r < acc || k == last {
                let s = 1.0 / p.sqrt();
                for (dst, src) in out.iter_mut().zip(&w) {
                    *dst = src * s;
                }
                return Ok(o);
            }
        }
        unreachable!("a candidate is always selected")
    }

    fn sample_exact(&self, comp: &Component, rng: &mut ChaCha8Rng) -> Result<SampledRecord> {
        let n = self.config.n_steps;
        let kernel = self.engine.kernel();
        let pulse = self.engine.pulse();
        let mut events = Vec::new();
        let u = Self::uniform(rng);
        if comp.survival[n] >= u {
            return Ok(SampledRecord { events });
        }
        // survival is non-increasing; first step whose survival drops below u
        let first = comp.survival.partition_point(|&s| s >= u);
        let mut v = vec![C64::new(0.0, 0.0); comp.prefix[0].len()];
        let o = self.choose_count(&comp.prefix[first - 1], first, rng, &mut v)?;
        events.push(ClickEvent { step: first, outcome: o });
        let mut pos = first;
        let mut next = v.clone();
        while pos < n {
            let u = Self::uniform(rng);
            let rest = quadratic(&self.forms[pos], &v);
            if rest >= u {
                break;
            }
            let mut found = None;
            for k in pos..n {
                kernel.apply(Outcome::None, pulse.sample(k), &v, &mut next);
                if kernel.weight(&next, pulse.tail_from(k + 1)) < u {
                    found = Some(k + 1);
                    break;
                }
                std::mem::swap(&mut v, &mut next);
            }
            // rounding can leave the final survival just above the bound
            let Some(step) = found else { break };
            let o = self.choose_count(&v, step, rng, &mut next)?;
            std::mem::swap(&mut v, &mut next);
            events.push(ClickEvent { step, outcome: o });
            pos = step;
        }
        Ok(SampledRecord { events })
    }

    fn sample_sequential(&self, comp: &Component, rng: &mut ChaCha8Rng) -> Result<SampledRecord> {
        let kernel = self.engine.kernel();
        let pulse = self.engine.pulse();
        let mut v = comp.prefix[0].clone();
        let len = v.len();
        let mut cand: [Vec<C64>; 4] = std::array::from_fn(|_| vec![C64::new(0.0, 0.0); len]);
        let mut events = Vec::new();
        for k in 0..self.config.n_steps {
            let xi = pulse.sample(k);
            let tail = pulse.tail_from(k + 1);
            let mut p = [0.0; 4];
            for o in Outcome::ALL {
                kernel.apply(o, xi, &v, &mut cand[o.label()]);
                p[o.label()] = kernel.weight(&cand[o.label()], tail);
            }
            let total: f64 = p.iter().sum();
            if !(total > 0.0) || !total.is_finite() {
                return Err(Error::ZeroWeight);
            }
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = Outcome::None;
            for o in Outcome::ALL {
                acc += p[o.label()];
                chosen = o;
                if r < acc && p[o.label()] > 0.0 {
                    break;
                }
            }
            while p[chosen.label()] <= 0.0 {
                chosen = Outcome::ALL[(chosen.label() + 3) % 4];
            }
            let s = 1.0 / p[chosen.label()].sqrt();
            for (dst, src) in v.iter_mut().zip(&cand[chosen.label()]) {
                *dst = src * s;
            }
            if chosen != Outcome::None {
                events.push(ClickEvent {
                    step: k + 1,
                    outcome: chosen,
                });
            }
        }
        Ok(SampledRecord { events })
    }

    /// All samples in index order.
    pub fn run(&self) -> Result<Vec<SampledRecord>> {
        (0..self.config.n_samples).into_par_iter().map(|k| self.sample(k)).collect()
    }

    /// Runs all samples and summarizes them.
    pub fn estimate(&self) -> Result<(Estimate, Vec<SampledRecord>)> {
        let records = self.run()?;
        Ok((Estimate::from_records(&records, self.config.tau), records))
    }
}

fn quadratic(form: &CMat, v: &[C64]) -> f64 {
    let n = v.len();
    let mut acc = C64::new(0.0, 0.0);
    for r in 0..n {
        let mut row = C64::new(0.0, 0.0);
        for c in 0..n {
            row += form[(r, c)] * v[c];
        }
        acc += v[r].conj() * row;
    }
    acc.re
}

/// Empirical frequency of one bucket.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternEstimate {
    pub bucket: SampleBucket,
    pub count: usize,
    pub probability: f64,
    /// Binomial standard error `√(p(1−p)/n)`.
    pub std_error: f64,
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl MeanEstimate {
    fn from_values(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n < 2 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Some(Self {
            mean,
            std_error: (var / n as f64).sqrt(),
            n,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub n_samples: usize,
    /// In [`SampleBucket::ALL`] order.
    pub patterns: Vec<PatternEstimate>,
    /// Mean time of the first click over samples with at least one.
    pub tau1: Option<MeanEstimate>,
    /// Mean time of the second click over samples with at least two.
    pub tau2: Option<MeanEstimate>,
}

impl Estimate {
    pub fn from_records(records: &[SampledRecord], tau: f64) -> Self {
        let n = records.len();
        let mut counts = [0usize; 8];
        let mut first = Vec::new();
        let mut second = Vec::new();
        for r in records {
            counts[r.bucket().index()] += 1;
            let clicks = r.click_times(tau);
            if let Some(&(t, _)) = clicks.first() {
                first.push(t);
            }
            if let Some(&(t, _)) = clicks.get(1) {
                second.push(t);
            }
        }
        let patterns = SampleBucket::ALL
            .iter()
            .map(|&b| {
                let count = counts[b.index()];
                let p = count as f64 / n as f64;
                PatternEstimate {
                    bucket: b,
                    count,
                    probability: p,
                    std_error: (p * (1.0 - p) / n as f64).sqrt(),
                }
            })
            .collect();
        Self {
            n_samples: n,
            patterns,
            tau1: MeanEstimate::from_values(&first),
            tau2: MeanEstimate::from_values(&second),
        }
    }

    pub fn get(&self, bucket: SampleBucket) -> &PatternEstimate {
        &self.patterns[bucket.index()]
    }
}

/// Record of sample 0 for the given configuration.
pub fn sample_record(
    config: &SamplerConfig,
    model: &SystemModel,
    pulse: &DiscretePulse,
    state: &StateEnsemble,
) -> Result<SampledRecord> {
    Sampler::new(*config, model.clone(), pulse.clone(), state)?.sample(0)
}

/// Pattern frequencies and mean click times over `config.n_samples` samples.
pub fn estimate(config: &SamplerConfig, model: &SystemModel, pulse: &DiscretePulse, state: &StateEnsemble) -> Result<Estimate> {
    Ok(Sampler::new(*config, model.clone(), pulse.clone(), state)?.estimate()?.0)
}
