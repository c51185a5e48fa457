//! Discrete repeated-interaction model.
//!
//! Each step the system meets one qubit of the right chain (which carries the
//! photon) and one of the left chain (vacuum) for a time `τ`. The joint
//! collision unitary on `ℂ² ⊗ ℂ² ⊗ ℂ^d` uses the basis index
//! `i1·2d + i2·d + s`, where `i1` is the right qubit, `i2` the left qubit and
//! `|0⟩` is the qubit ground state. Its `d×d` blocks `V_{out,in}` are labelled
//! by `2·i1 + i2`.
//!
//! Conditioning on the qubit measurements turns the joint state into a pair
//! `(α, β)` that evolves by
//! `α' = V_{η,00} α`, `β' = V_{η,00} β + √τ ξ_j V_{η,10} α`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numerics::{i, matrix_exponential, spectral_norm};
use crate::record::{Detection, DetectionRecord, EventPattern, Side};
use crate::state::{ConditionalPair, DensityMatrix, StateEnsemble};
use crate::{CMat, CVec, DiscretePulse, Error, Result, SystemModel, C64};

/// Default cap on the number of records [`DiscreteEngine::enumerate`] may
/// materialize.
pub const DEFAULT_RECORD_BUDGET: usize = 2_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockMode {
    /// Blocks of the exact collision unitary.
    Exact,
    /// Blocks truncated after the terms of order `τ`.
    FirstOrder,
}

/// Result of measuring both chain qubits after a collision.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    /// `(0,0)`
    None,
    /// `(1,0)`, right detector.
    Right,
    /// `(0,1)`, left detector.
    Left,
    /// `(1,1)`, simultaneous counts on both sides.
    Both,
}

impl Outcome {
    /// In block-label order `2·i1 + i2`.
    pub const ALL: [Outcome; 4] = [Outcome::None, Outcome::Left, Outcome::Right, Outcome::Both];
    /// Outcomes with at least one count, in record order.
    pub const COUNTS: [Outcome; 3] = [Outcome::Right, Outcome::Left, Outcome::Both];

    pub fn label(self) -> usize {
        match self {
            Outcome::None => 0,
            Outcome::Left => 1,
            Outcome::Right => 2,
            Outcome::Both => 3,
        }
    }

    pub fn from_bits(right: bool, left: bool) -> Self {
        Self::ALL[2 * right as usize + left as usize]
    }

    /// Number of detector clicks.
    pub fn clicks(self) -> usize {
        match self {
            Outcome::None => 0,
            Outcome::Left | Outcome::Right => 1,
            Outcome::Both => 2,
        }
    }

    pub fn from_side(side: Side) -> Self {
        match side {
            Side::Right => Outcome::Right,
            Side::Left => Outcome::Left,
        }
    }

    pub fn short_label(self) -> &'static str {
        match self {
            Outcome::None => "-",
            Outcome::Left => "L",
            Outcome::Right => "R",
            Outcome::Both => "B",
        }
    }
}

/// The sixteen `d×d` blocks `V_{out,in}` of a collision unitary.
#[derive(Clone, Debug, PartialEq)]
pub struct VBlocks {
    dim: usize,
    blocks: Vec<CMat>,
}

impl VBlocks {
    fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> CMat) -> Self {
        let mut blocks = Vec::with_capacity(16);
        for out in 0..4 {
            for inp in 0..4 {
                blocks.push(f(out, inp));
            }
        }
        Self { dim, blocks }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `V_{out,in}` with labels `2·i1 + i2`.
    pub fn get(&self, out: usize, inp: usize) -> &CMat {
        &self.blocks[4 * out + inp]
    }

    pub fn assemble(&self) -> CMat {
        let d = self.dim;
        let mut u = CMat::zeros(4 * d, 4 * d);
        for out in 0..4 {
            for inp in 0..4 {
                u.view_mut((out * d, inp * d), (d, d)).copy_from(self.get(out, inp));
            }
        }
        u
    }

    /// `‖U†U − I‖` in spectral norm.
    pub fn unitarity_defect(&self) -> f64 {
        let u = self.assemble();
        let n = u.nrows();
        spectral_norm(&(u.adjoint() * &u - CMat::identity(n, n)))
    }

    pub fn for_mode(model: &SystemModel, tau: f64, mode: BlockMode) -> Result<Self> {
        match mode {
            BlockMode::Exact => blocks_from_unitary(&exact_collision_unitary(model, tau)?),
            BlockMode::FirstOrder => first_order_blocks(model, tau),
        }
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("collision time must be positive, got {tau}")))
    }
}

/// `H_k = H + (i/√τ) Σ_l (σ⁺_l ⊗ L_l − σ⁻_l ⊗ L_l†)` on the joint space.
pub fn collision_hamiltonian(model: &SystemModel, tau: f64) -> Result<CMat> {
    check_tau(tau)?;
    let d = model.dim();
    let c = i() / tau.sqrt();
    let (l1, l2) = (model.coupling_right(), model.coupling_left());
    let mut h = CMat::zeros(4 * d, 4 * d);
    let mut add = |out: usize, inp: usize, m: &CMat| {
        let mut view = h.view_mut((out * d, inp * d), (d, d));
        view += m;
    };
    for label in 0..4 {
        add(label, label, model.hamiltonian());
    }
    for inp in [0, 1] {
        // right qubit raised: label + 2
        add(inp + 2, inp, &(l1 * c));
        add(inp, inp + 2, &(l1.adjoint() * (-c)));
    }
    for inp in [0, 2] {
        add(inp + 1, inp, &(l2 * c));
        add(inp, inp + 1, &(l2.adjoint() * (-c)));
    }
    Ok(h)
}

/// `exp(−iτH_k)`.
pub fn exact_collision_unitary(model: &SystemModel, tau: f64) -> Result<CMat> {
    let h = collision_hamiltonian(model, tau)?;
    matrix_exponential(&(h * (-i())), tau)
}

/// Blocks expanded to first order in `τ`.
///
/// The cross blocks between `|00⟩`, `|11⟩` and between `|01⟩`, `|10⟩` come
/// from the square of the coupling term and contain both operator orderings.
pub fn first_order_blocks(model: &SystemModel, tau: f64) -> Result<VBlocks> {
    check_tau(tau)?;
    let d = model.dim();
    let h = model.hamiltonian();
    let l1 = model.coupling_right();
    let l2 = model.coupling_left();
    let l1d = l1.adjoint();
    let l2d = l2.adjoint();
    let one = CMat::identity(d, d);
    let st = C64::from(tau.sqrt());
    let half = C64::from(0.5 * tau);
    let diag = |decay: CMat| &one - (h - decay * (i() * 0.5)) * (i() * tau);
    Ok(VBlocks::from_fn(d, |out, inp| match (out, inp) {
        (0, 0) => diag(&l1d * l1 + &l2d * l2),
        (0, 1) | (2, 3) => &l2d * (-st),
        (0, 2) | (1, 3) => &l1d * (-st),
        (0, 3) => (&l1d * &l2d + &l2d * &l1d) * half,
        (1, 0) | (3, 2) => l2 * st,
        (1, 1) => diag(&l1d * l1 + l2 * &l2d),
        (1, 2) => (&l1d * l2 + l2 * &l1d) * (-half),
        (2, 0) | (3, 1) => l1 * st,
        (2, 1) => (l1 * &l2d + &l2d * l1) * (-half),
        (2, 2) => diag(l1 * &l1d + &l2d * l2),
        (3, 0) => (l1 * l2 + l2 * l1) * half,
        (3, 3) => diag(l1 * &l1d + l2 * &l2d),
        _ => CMat::zeros(d, d),
    }))
}

/// Splits a `4d×4d` matrix into its `V_{out,in}` blocks.
pub fn blocks_from_unitary(u: &CMat) -> Result<VBlocks> {
    let n = u.nrows();
    if n != u.ncols() || n == 0 || n % 4 != 0 {
        return Err(Error::DimensionMismatch(format!(
            "collision unitary is {}x{}, expected a square matrix of size divisible by 4",
            n,
            u.ncols()
        )));
    }
    let d = n / 4;
    Ok(VBlocks::from_fn(d, |out, inp| u.view((out * d, inp * d), (d, d)).into_owned()))
}

/// Conditional update for outcome `η` at a step with pulse sample `ξ_j`.
pub fn step(pair: &ConditionalPair, outcome: Outcome, xi: C64, tau: f64, blocks: &VBlocks) -> ConditionalPair {
    let eta = outcome.label();
    let v0 = blocks.get(eta, 0);
    let v2 = blocks.get(eta, 2);
    let alpha = v0 * &pair.alpha;
    let beta = v0 * &pair.beta + v2 * &pair.alpha * (xi * tau.sqrt());
    ConditionalPair {
        alpha,
        beta,
        tail_weight: (pair.tail_weight - xi.norm_sqr() * tau).max(0.0),
    }
}

/// `p(η) = w(step(pair, η)) / w(pair)`, indexed by [`Outcome::label`].
pub fn outcome_distribution(pair: &ConditionalPair, xi: C64, tau: f64, blocks: &VBlocks) -> Result<[f64; 4]> {
    let w = pair.weight();
    if !(w > 0.0) {
        return Err(Error::ZeroWeight);
    }
    let mut p = [0.0; 4];
    for o in Outcome::ALL {
        p[o.label()] = step(pair, o, xi, tau, blocks).weight() / w;
    }
    Ok(p)
}

/// Flat-array form of the blocks used by the step rule, for hot loops.
///
/// A state vector is `[α; β]` of length `2d`.
#[derive(Clone, Debug)]
pub struct StepKernel {
    dim: usize,
    sqrt_tau: f64,
    // row-major V_{o,00} and V_{o,10}, indexed by outcome label
    from_vacuum: [Vec<C64>; 4],
    from_photon: [Vec<C64>; 4],
}

impl StepKernel {
    pub fn new(blocks: &VBlocks, tau: f64) -> Self {
        let flat = |m: &CMat| {
            let d = m.nrows();
            let mut v = Vec::with_capacity(d * d);
            for r in 0..d {
                for c in 0..d {
                    v.push(m[(r, c)]);
                }
            }
            v
        };
        Self {
            dim: blocks.dim(),
            sqrt_tau: tau.sqrt(),
            from_vacuum: std::array::from_fn(|o| flat(blocks.get(o, 0))),
            from_photon: std::array::from_fn(|o| flat(blocks.get(o, 2))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `out = M_η(ξ) v`.
    #[inline]
    pub fn apply(&self, outcome: Outcome, xi: C64, v: &[C64], out: &mut [C64]) {
        let d = self.dim;
        let a0 = &self.from_vacuum[outcome.label()];
        let a2 = &self.from_photon[outcome.label()];
        let (alpha, beta) = v.split_at(d);
        let c = xi * self.sqrt_tau;
        for r in 0..d {
            let row0 = &a0[r * d..(r + 1) * d];
            let row2 = &a2[r * d..(r + 1) * d];
            let mut sa = C64::new(0.0, 0.0);
            let mut sb = C64::new(0.0, 0.0);
            let mut sf = C64::new(0.0, 0.0);
            for k in 0..d {
                sa += row0[k] * alpha[k];
                sb += row0[k] * beta[k];
                sf += row2[k] * alpha[k];
            }
            out[r] = sa;
            out[d + r] = sb + c * sf;
        }
    }

    /// `‖α‖² tail + ‖β‖²`.
    #[inline]
    pub fn weight(&self, v: &[C64], tail: f64) -> f64 {
        let (alpha, beta) = v.split_at(self.dim);
        alpha.iter().map(|z| z.norm_sqr()).sum::<f64>() * tail + beta.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    /// `2d×2d` transfer matrix `[[V_η0, 0], [√τ ξ V_η2, V_η0]]`.
    pub fn transfer(&self, outcome: Outcome, xi: C64) -> CMat {
        let d = self.dim;
        let a0 = &self.from_vacuum[outcome.label()];
        let a2 = &self.from_photon[outcome.label()];
        let c = xi * self.sqrt_tau;
        let mut m = CMat::zeros(2 * d, 2 * d);
        for r in 0..d {
            for k in 0..d {
                m[(r, k)] = a0[r * d + k];
                m[(d + r, d + k)] = a0[r * d + k];
                m[(d + r, k)] = c * a2[r * d + k];
            }
        }
        m
    }
}

/// A count at a discrete position `step ∈ [1, N]`, occurring at time `step·τ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClickEvent {
    pub step: usize,
    pub outcome: Outcome,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedRecord {
    pub events: Vec<ClickEvent>,
    pub weight: f64,
}

impl WeightedRecord {
    /// Total number of detector clicks.
    pub fn clicks(&self) -> usize {
        self.events.iter().map(|e| e.outcome.clicks()).sum()
    }

    /// Continuous-time record with counts at `step·τ`. Simultaneous counts
    /// have no continuous-time counterpart.
    pub fn detection_record(&self, tau: f64, horizon: f64) -> Result<DetectionRecord> {
        let mut events = Vec::with_capacity(self.events.len());
        for e in &self.events {
            let side = match e.outcome {
                Outcome::Right => Side::Right,
                Outcome::Left => Side::Left,
                other => {
                    return Err(Error::Unsupported(format!(
                        "outcome {other:?} has no continuous-time detection record"
                    )))
                }
            };
            events.push(Detection {
                time: e.step as f64 * tau,
                side,
            });
        }
        DetectionRecord::new(events, horizon)
    }

    pub fn pattern(&self) -> PatternBucket {
        PatternBucket::of_events(&self.events)
    }
}

/// Outcome classes resolved by the aggregate weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PatternBucket {
    Pattern(EventPattern),
    /// A single simultaneous `(1,1)` count.
    Both,
    /// Three or more clicks, or a simultaneous count together with others.
    Other,
}

impl PatternBucket {
    pub const ALL: [PatternBucket; 9] = [
        PatternBucket::Pattern(EventPattern::None),
        PatternBucket::Pattern(EventPattern::R),
        PatternBucket::Pattern(EventPattern::L),
        PatternBucket::Pattern(EventPattern::RR),
        PatternBucket::Pattern(EventPattern::LR),
        PatternBucket::Pattern(EventPattern::RL),
        PatternBucket::Pattern(EventPattern::LL),
        PatternBucket::Both,
        PatternBucket::Other,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&b| b == self).expect("bucket is listed")
    }

    pub fn label(self) -> &'static str {
        match self {
            PatternBucket::Pattern(p) => p.label(),
            PatternBucket::Both => "both",
            PatternBucket::Other => "other",
        }
    }

    /// Bucket after appending `outcome`.
    pub fn then(self, outcome: Outcome) -> Self {
        let side = match outcome {
            Outcome::None => return self,
            Outcome::Right => Side::Right,
            Outcome::Left => Side::Left,
            Outcome::Both => {
                return match self {
                    PatternBucket::Pattern(EventPattern::None) => PatternBucket::Both,
                    _ => PatternBucket::Other,
                }
            }
        };
        match self {
            PatternBucket::Pattern(p) => {
                let mut sides = p.sides().to_vec();
                sides.push(side);
                EventPattern::from_sides(&sides).map_or(PatternBucket::Other, PatternBucket::Pattern)
            }
            _ => PatternBucket::Other,
        }
    }

    pub fn of_events(events: &[ClickEvent]) -> Self {
        events
            .iter()
            .fold(PatternBucket::Pattern(EventPattern::None), |b, e| b.then(e.outcome))
    }
}

/// Enumerated records with at most `m_max` clicks.
#[derive(Clone, Debug, PartialEq)]
pub struct Enumeration {
    pub no_count_weight: f64,
    /// Sorted lexicographically by `(step, outcome)` sequences.
    pub records: Vec<WeightedRecord>,
}

impl Enumeration {
    pub fn total_weight(&self) -> f64 {
        self.no_count_weight + self.records.iter().map(|r| r.weight).sum::<f64>()
    }

    /// Weight not covered by the enumerated records.
    pub fn tail_bound(&self) -> f64 {
        (1.0 - self.total_weight()).max(0.0)
    }
}

/// Total weights grouped by click count and by pattern bucket.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightTotals {
    /// `by_clicks[m]` for `m ≤ m_max`.
    pub by_clicks: Vec<f64>,
    /// Indexed by [`PatternBucket::index`].
    pub by_pattern: [f64; 9],
}

impl WeightTotals {
    pub fn pattern(&self, bucket: PatternBucket) -> f64 {
        self.by_pattern[bucket.index()]
    }
}

/// The discrete engine for one model, pulse sampling and block mode.
#[derive(Clone, Debug)]
pub struct DiscreteEngine {
    model: SystemModel,
    pulse: DiscretePulse,
    mode: BlockMode,
    blocks: VBlocks,
    kernel: StepKernel,
}

impl DiscreteEngine {
    pub fn new(model: SystemModel, pulse: DiscretePulse, mode: BlockMode) -> Result<Self> {
        let blocks = VBlocks::for_mode(&model, pulse.step(), mode)?;
        let kernel = StepKernel::new(&blocks, pulse.step());
        Ok(Self {
            model,
            pulse,
            mode,
            blocks,
            kernel,
        })
    }

    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    pub fn pulse(&self) -> &DiscretePulse {
        &self.pulse
    }

    pub fn mode(&self) -> BlockMode {
        self.mode
    }

    pub fn blocks(&self) -> &VBlocks {
        &self.blocks
    }

    pub fn kernel(&self) -> &StepKernel {
        &self.kernel
    }

    pub fn tau(&self) -> f64 {
        self.pulse.step()
    }

    /// Outcomes allowed as record events in this mode.
    pub fn count_outcomes(&self) -> &'static [Outcome] {
        match self.mode {
            BlockMode::Exact => &Outcome::COUNTS,
            BlockMode::FirstOrder => &Outcome::COUNTS[..2],
        }
    }

    fn check_dim(&self, state: &StateEnsemble) -> Result<()> {
        if state.dim() != self.model.dim() {
            return Err(Error::DimensionMismatch(format!(
                "state has dimension {}, model has {}",
                state.dim(),
                self.model.dim()
            )));
        }
        Ok(())
    }

    fn stack(pair: &ConditionalPair) -> Vec<C64> {
        pair.alpha.iter().chain(pair.beta.iter()).copied().collect()
    }

    fn unstack(&self, v: &[C64], position: usize) -> ConditionalPair {
        let d = self.model.dim();
        ConditionalPair {
            alpha: CVec::from_column_slice(&v[..d]),
            beta: CVec::from_column_slice(&v[d..]),
            tail_weight: self.pulse.tail_from(position),
        }
    }

    /// Pair after replaying `events` from `(ψ0, 0)` through `n_steps` steps.
    pub fn replay(&self, psi0: &CVec, events: &[ClickEvent], n_steps: usize) -> Result<ConditionalPair> {
        let mut last = 0;
        for e in events {
            if e.step <= last || e.step > n_steps {
                return Err(Error::InvalidRecord(format!(
                    "count positions must be strictly increasing in [1, {n_steps}]"
                )));
            }
            if e.outcome == Outcome::None {
                return Err(Error::InvalidRecord("a record event must contain a count".into()));
            }
            last = e.step;
        }
        let mut v = Self::stack(&ConditionalPair::initial(psi0));
        let mut next = v.clone();
        let mut events = events.iter().peekable();
        for k in 0..n_steps {
            let outcome = match events.peek() {
                Some(e) if e.step == k + 1 => events.next().expect("peeked").outcome,
                _ => Outcome::None,
            };
            self.kernel.apply(outcome, self.pulse.sample(k), &v, &mut next);
            std::mem::swap(&mut v, &mut next);
        }
        Ok(self.unstack(&v, n_steps))
    }

    /// Largest `|Σ_η p(η) − 1|` along the trajectory of `events`.
    pub fn balance_defect(&self, psi0: &CVec, events: &[ClickEvent], n_steps: usize) -> Result<f64> {
        let mut pair = ConditionalPair::initial(psi0);
        let mut worst: f64 = 0.0;
        let tau = self.tau();
        let mut idx = 0;
        for k in 0..n_steps {
            let xi = self.pulse.sample(k);
            let p = outcome_distribution(&pair, xi, tau, &self.blocks)?;
            worst = worst.max((p.iter().sum::<f64>() - 1.0).abs());
            let outcome = match events.get(idx) {
                Some(e) if e.step == k + 1 => {
                    idx += 1;
                    e.outcome
                }
                _ => Outcome::None,
            };
            pair = step(&pair, outcome, xi, tau, &self.blocks);
            pair.tail_weight = self.pulse.tail_from(k + 1);
        }
        Ok(worst)
    }

    /// `no_count_states[j]`: stacked pair after `j` no-count steps.
    fn no_count_states(&self, psi0: &CVec, n_steps: usize) -> Vec<Vec<C64>> {
        let mut out = Vec::with_capacity(n_steps + 1);
        let mut v = Self::stack(&ConditionalPair::initial(psi0));
        let mut next = v.clone();
        out.push(v.clone());
        for k in 0..n_steps {
            self.kernel.apply(Outcome::None, self.pulse.sample(k), &v, &mut next);
            std::mem::swap(&mut v, &mut next);
            out.push(v.clone());
        }
        out
    }

    /// `Q_j` such that `v†Q_j v` is the weight of continuing from position
    /// `j` without counts up to `n_steps`; entries row-major, `2d×2d`.
    pub fn survival_forms(&self, n_steps: usize) -> Vec<CMat> {
        let d = self.model.dim();
        let mut q = CMat::zeros(2 * d, 2 * d);
        let tail = self.pulse.tail_from(n_steps);
        for r in 0..d {
            q[(r, r)] = C64::from(tail);
            q[(d + r, d + r)] = C64::from(1.0);
        }
        let mut forms = vec![CMat::zeros(0, 0); n_steps + 1];
        for j in (0..n_steps).rev() {
            let m = self.kernel.transfer(Outcome::None, self.pulse.sample(j));
            let next = m.adjoint() * &q * &m;
            forms[j + 1] = q;
            q = next;
        }
        forms[0] = q;
        forms
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
        acc.re.max(0.0)
    }

    /// Number of records with `1..=m_max` clicks on `n_steps` positions.
    pub fn record_count(&self, n_steps: usize, m_max: usize) -> f64 {
        // ways[k][c]: k events placed, c clicks used
        let both = self.count_outcomes().len() == 3;
        let mut total = 0.0;
        let mut ways = vec![0.0; m_max + 1];
        ways[0] = 1.0;
        let mut binom = 1.0;
        for k in 1..=m_max.min(n_steps) {
            let mut next = vec![0.0; m_max + 1];
            for c in 0..=m_max {
                if ways[c] == 0.0 {
                    continue;
                }
                if c + 1 <= m_max {
                    next[c + 1] += 2.0 * ways[c];
                }
                if both && c + 2 <= m_max {
                    next[c + 2] += ways[c];
                }
            }
            ways = next;
            binom *= (n_steps + 1 - k) as f64 / k as f64;
            total += binom * ways.iter().sum::<f64>();
        }
        total
    }

    /// All records with at most `m_max` clicks on `n_steps` positions.
    pub fn enumerate(&self, state: &StateEnsemble, n_steps: usize, m_max: usize, budget: usize) -> Result<Enumeration> {
        self.check_dim(state)?;
        let requested = self.record_count(n_steps, m_max);
        if requested > budget as f64 {
            return Err(Error::BudgetExceeded { requested, budget });
        }
        let forms = self.survival_forms(n_steps);
        let mut no_count_weight = 0.0;
        let mut records: Vec<WeightedRecord> = Vec::new();
        for (w, psi) in state.components() {
            let prefix = self.no_count_states(psi, n_steps);
            no_count_weight += w * Self::quadratic(&forms[0], &prefix[0]);
            let chunks: Vec<Vec<WeightedRecord>> = (1..=n_steps)
                .into_par_iter()
                .map(|l1| {
                    let mut out = Vec::new();
                    let mut scratch = Vec::new();
                    for &o in self.count_outcomes() {
                        if o.clicks() > m_max {
                            continue;
                        }
                        let mut v = vec![C64::new(0.0, 0.0); prefix[0].len()];
                        self.kernel.apply(o, self.pulse.sample(l1 - 1), &prefix[l1 - 1], &mut v);
                        scratch.push(ClickEvent { step: l1, outcome: o });
                        self.descend(&v, l1, o.clicks(), m_max, n_steps, &forms, &mut scratch, &mut |ev, wt| {
                            out.push(WeightedRecord {
                                events: ev.to_vec(),
                                weight: wt,
                            })
                        });
                        scratch.pop();
                    }
                    out
                })
                .collect();
            let merged: Vec<WeightedRecord> = chunks.into_iter().flatten().collect();
            if records.is_empty() {
                records = merged
                    .into_iter()
                    .map(|mut r| {
                        r.weight *= w;
                        r
                    })
                    .collect();
            } else {
                for (acc, r) in records.iter_mut().zip(merged) {
                    acc.weight += w * r.weight;
                }
            }
        }
        Ok(Enumeration {
            no_count_weight,
            records,
        })
    }

    /// Visits every record with at most `m_max` clicks in enumeration order
    /// without storing them. Weights are summed over the state ensemble by
    /// the caller's visitor, which sees each component separately together
    /// with that component's weight already applied.
    pub fn visit_records(
        &self,
        state: &StateEnsemble,
        n_steps: usize,
        m_max: usize,
        mut visit: impl FnMut(&[ClickEvent], f64),
    ) -> Result<f64> {
        self.check_dim(state)?;
        let forms = self.survival_forms(n_steps);
        let mut no_count = 0.0;
        for (w, psi) in state.components() {
            let prefix = self.no_count_states(psi, n_steps);
            no_count += w * Self::quadratic(&forms[0], &prefix[0]);
            let mut scratch = Vec::new();
            let mut v = vec![C64::new(0.0, 0.0); prefix[0].len()];
            for l1 in 1..=n_steps {
                for &o in self.count_outcomes() {
                    if o.clicks() > m_max {
                        continue;
                    }
                    self.kernel.apply(o, self.pulse.sample(l1 - 1), &prefix[l1 - 1], &mut v);
                    scratch.push(ClickEvent { step: l1, outcome: o });
                    self.descend(&v, l1, o.clicks(), m_max, n_steps, &forms, &mut scratch, &mut |ev, wt| {
                        visit(ev, w * wt)
                    });
                    scratch.pop();
                }
            }
        }
        Ok(no_count)
    }

    #[allow(clippy::too_many_arguments)]
    fn descend(
        &self,
        v: &[C64],
        position: usize,
        clicks: usize,
        m_max: usize,
        n_steps: usize,
        forms: &[CMat],
        events: &mut Vec<ClickEvent>,
        emit: &mut dyn FnMut(&[ClickEvent], f64),
    ) {
        emit(events, Self::quadratic(&forms[position], v));
        if clicks >= m_max {
            return;
        }
        let mut cur = v.to_vec();
        let mut next = vec![C64::new(0.0, 0.0); v.len()];
        let mut jumped = vec![C64::new(0.0, 0.0); v.len()];
        for k in position..n_steps {
            let xi = self.pulse.sample(k);
            for &o in self.count_outcomes() {
                if clicks + o.clicks() > m_max {
                    continue;
                }
                self.kernel.apply(o, xi, &cur, &mut jumped);
                events.push(ClickEvent { step: k + 1, outcome: o });
                self.descend(&jumped, k + 1, clicks + o.clicks(), m_max, n_steps, forms, events, emit);
                events.pop();
            }
            self.kernel.apply(Outcome::None, xi, &cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
    }

    /// Second-moment propagation: `R_b(j) = Σ_records-in-b v v†` over all
    /// records up to position `j`, grouped by `label`. `next(label, η)`
    /// returns the label after outcome `η`, or `None` to drop the branch.
    fn moments(
        &self,
        state: &StateEnsemble,
        n_steps: usize,
        labels: usize,
        next: impl Fn(usize, Outcome) -> Option<usize>,
    ) -> Vec<CMat> {
        let d = self.model.dim();
        let mut r = vec![CMat::zeros(2 * d, 2 * d); labels];
        for (w, psi) in state.components() {
            let v = CVec::from_vec(Self::stack(&ConditionalPair::initial(psi)));
            r[0] += &v * v.adjoint() * C64::from(*w);
        }
        for k in 0..n_steps {
            let xi = self.pulse.sample(k);
            let mut fresh = vec![CMat::zeros(2 * d, 2 * d); labels];
            for o in Outcome::ALL {
                if o != Outcome::None && !self.count_outcomes().contains(&o) {
                    continue;
                }
                let m = self.kernel.transfer(o, xi);
                let md = m.adjoint();
                for (b, rb) in r.iter().enumerate() {
                    if let Some(nb) = next(b, o) {
                        fresh[nb] += &m * rb * &md;
                    }
                }
            }
            r = fresh;
        }
        r
    }

    fn moment_weight(&self, r: &CMat, position: usize) -> f64 {
        let d = self.model.dim();
        let tail = self.pulse.tail_from(position);
        let mut w = 0.0;
        for k in 0..d {
            w += r[(k, k)].re * tail + r[(d + k, d + k)].re;
        }
        w
    }

    /// Weights of all records at `n_steps`, by click count up to `m_max`
    /// and by pattern bucket (all click counts).
    pub fn weight_totals(&self, state: &StateEnsemble, n_steps: usize, m_max: usize) -> Result<WeightTotals> {
        self.check_dim(state)?;
        let by_count = self.moments(state, n_steps, m_max + 1, |c, o| {
            let n = c + o.clicks();
            (n <= m_max).then_some(n)
        });
        let by_pat = self.moments(state, n_steps, 9, |b, o| Some(PatternBucket::ALL[b].then(o).index()));
        let mut by_pattern = [0.0; 9];
        for (k, r) in by_pat.iter().enumerate() {
            by_pattern[k] = self.moment_weight(r, n_steps);
        }
        Ok(WeightTotals {
            by_clicks: by_count.iter().map(|r| self.moment_weight(r, n_steps)).collect(),
            by_pattern,
        })
    }

    /// `σ_j = Σ_records |α⟩⟨α| tail_j + |β⟩⟨β|` over records with at most
    /// `m_max` clicks.
    pub fn apriori(&self, state: &StateEnsemble, j: usize, m_max: usize) -> Result<DensityMatrix> {
        self.check_dim(state)?;
        let d = self.model.dim();
        let by_count = self.moments(state, j, m_max + 1, |c, o| {
            let n = c + o.clicks();
            (n <= m_max).then_some(n)
        });
        let tail = C64::from(self.pulse.tail_from(j));
        let mut sigma = CMat::zeros(d, d);
        for r in &by_count {
            sigma += r.view((0, 0), (d, d)) * tail + r.view((d, d), (d, d));
        }
        DensityMatrix::subnormalized(sigma)
    }
}
