//! Continuous-time limit of the collision model.
//!
//! Between counts the pair evolves as `α' = −iGα`,
//! `β' = −iGβ − ξ_t L1† α`. A right count maps `(α, β) → (L1α, L1β + ξα)`
//! and a left count maps `(α, β) → (L2α, L2β)`. The exclusive density of a
//! record is the weight `‖α‖² ∫_t^∞|ξ|² + ‖β‖²` of the pair at the horizon.

use crate::numerics::{integrate_components, integrate_in_place, OdeSpec, QuadratureSpec};
use crate::record::{DetectionRecord, Side};
use crate::state::{ConditionalPair, DensityMatrix, StateEnsemble};
use crate::{CMat, CVec, Error, Pulse, Result, SystemModel, C64};

/// Counts beyond this are not integrated by the nested quadrature.
pub const MAX_NESTED_COUNTS: usize = 3;

/// How a count transforms the pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JumpRule {
    pub side: Side,
}

impl JumpRule {
    /// Only the right-moving mode carries the photon, so only right counts
    /// have the direct `ξ α` term.
    pub fn feeds_through(self) -> bool {
        self.side == Side::Right
    }
}

/// Controls of the nested time-ordered integrals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NestedGrid {
    /// Tolerances of the outermost integral; each inner level is ten times
    /// tighter.
    pub quadrature: QuadratureSpec,
    /// Stored states per trajectory used as restart points.
    pub checkpoints: usize,
}

impl Default for NestedGrid {
    fn default() -> Self {
        Self {
            quadrature: QuadratureSpec::new(1e-9, 1e-8, 2000).expect("valid tolerances"),
            checkpoints: 48,
        }
    }
}

/// Per-click-count weights and the a-priori state at one horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentTotals {
    /// `by_clicks[m]` for `m ≤ m_max`.
    pub by_clicks: Vec<f64>,
    pub state: CMat,
}

/// Pair dynamics for a model and a pulse.
#[derive(Clone, Debug)]
pub struct ContinuumEngine {
    model: SystemModel,
    pulse: Pulse,
    dim: usize,
    // row-major −iG and L1†
    drift: Vec<C64>,
    feed: Vec<C64>,
    ode: OdeSpec,
    breaks: Vec<f64>,
}

fn flat(m: &CMat) -> Vec<C64> {
    let mut v = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            v.push(m[(r, c)]);
        }
    }
    v
}

#[inline]
fn matvec_acc(m: &[C64], x: &[C64], scale: C64, out: &mut [C64]) {
    let d = x.len();
    for r in 0..d {
        let row = &m[r * d..(r + 1) * d];
        let mut s = C64::new(0.0, 0.0);
        for k in 0..d {
            s += row[k] * x[k];
        }
        out[r] += scale * s;
    }
}

/// Applies a count to the pair.
pub fn apply_jump(model: &SystemModel, pair: &ConditionalPair, side: Side, xi: C64) -> ConditionalPair {
    match side {
        Side::Right => {
            let l1 = model.coupling_right();
            ConditionalPair {
                alpha: l1 * &pair.alpha,
                beta: l1 * &pair.beta + &pair.alpha * xi,
                tail_weight: pair.tail_weight,
            }
        }
        Side::Left => {
            let l2 = model.coupling_left();
            ConditionalPair {
                alpha: l2 * &pair.alpha,
                beta: l2 * &pair.beta,
                tail_weight: pair.tail_weight,
            }
        }
    }
}

impl ContinuumEngine {
    pub fn new(model: SystemModel, pulse: Pulse) -> Self {
        let g = model.effective_generator();
        let drift = flat(&g.drift());
        let feed = flat(&model.coupling_right().adjoint());
        let breaks = pulse.breakpoints();
        Self {
            dim: model.dim(),
            model,
            pulse,
            drift,
            feed,
            ode: OdeSpec::new(1e-12, 1e-11).expect("valid tolerances"),
            breaks,
        }
    }

    pub fn with_ode(mut self, ode: OdeSpec) -> Self {
        self.ode = ode;
        self
    }

    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    pub fn pulse(&self) -> &Pulse {
        &self.pulse
    }

    fn pair_rhs(&self, t: f64, y: &[C64], dy: &mut [C64]) {
        let d = self.dim;
        dy.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        let (alpha, beta) = y.split_at(d);
        let (da, db) = dy.split_at_mut(d);
        let one = C64::new(1.0, 0.0);
        matvec_acc(&self.drift, alpha, one, da);
        matvec_acc(&self.drift, beta, one, db);
        let xi = self.pulse.amplitude(t);
        if xi != C64::new(0.0, 0.0) {
            matvec_acc(&self.feed, alpha, -xi, db);
        }
    }

    /// Integrates the stacked pair `[α; β]` from `t0` to `t1` (either
    /// direction), restarting at pulse breakpoints.
    fn flow(&self, y: &mut [C64], t0: f64, t1: f64) -> Result<()> {
        let mut cuts: Vec<f64> = self
            .breaks
            .iter()
            .copied()
            .filter(|&b| b > t0.min(t1) && b < t0.max(t1))
            .collect();
        if t1 < t0 {
            cuts.reverse();
        }
        let mut a = t0;
        for b in cuts.into_iter().chain(std::iter::once(t1)) {
            integrate_in_place(|t, y, dy| self.pair_rhs(t, y, dy), y, a, b, &self.ode)?;
            a = b;
        }
        Ok(())
    }

    fn stack(pair: &ConditionalPair) -> Vec<C64> {
        pair.alpha.iter().chain(pair.beta.iter()).copied().collect()
    }

    fn unstack(&self, y: &[C64], t: f64) -> ConditionalPair {
        ConditionalPair {
            alpha: CVec::from_column_slice(&y[..self.dim]),
            beta: CVec::from_column_slice(&y[self.dim..]),
            tail_weight: self.pulse.tail(t),
        }
    }

    fn weight_of(&self, y: &[C64], t: f64) -> f64 {
        let (a, b) = y.split_at(self.dim);
        a.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.pulse.tail(t) + b.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    fn jump_stacked(&self, y: &[C64], side: Side, t: f64) -> Vec<C64> {
        let pair = self.unstack(y, t);
        Self::stack(&apply_jump(&self.model, &pair, side, self.pulse.amplitude(t)))
    }

    /// No-count evolution of the pair from `t0` to `t1`.
    pub fn evolve_no_count(&self, pair: &ConditionalPair, t0: f64, t1: f64) -> Result<ConditionalPair> {
        if !(t0 <= t1) {
            return Err(Error::InvalidParameter(format!("evolution needs t0 ≤ t1, got [{t0}, {t1}]")));
        }
        if pair.dim() != self.dim {
            return Err(Error::DimensionMismatch(format!("pair has dimension {}, model has {}", pair.dim(), self.dim)));
        }
        let mut y = Self::stack(pair);
        self.flow(&mut y, t0, t1)?;
        Ok(self.unstack(&y, t1))
    }

    pub fn apply_jump(&self, pair: &ConditionalPair, side: Side, xi: C64) -> ConditionalPair {
        apply_jump(&self.model, pair, side, xi)
    }

    /// Pair at the record's horizon, starting from `(ψ0, 0)` at `t = 0`.
    pub fn conditional_pair(&self, psi0: &CVec, record: &DetectionRecord) -> Result<ConditionalPair> {
        if psi0.len() != self.dim {
            return Err(Error::DimensionMismatch(format!("state has dimension {}, model has {}", psi0.len(), self.dim)));
        }
        let mut pair = ConditionalPair::initial(psi0);
        let mut t = 0.0;
        for e in record.events() {
            pair = self.evolve_no_count(&pair, t, e.time)?;
            pair = self.apply_jump(&pair, e.side, self.pulse.amplitude(e.time));
            t = e.time;
        }
        self.evolve_no_count(&pair, t, record.horizon())
    }

    fn check_state(&self, state: &StateEnsemble) -> Result<()> {
        if state.dim() != self.dim {
            return Err(Error::DimensionMismatch(format!("state has dimension {}, model has {}", state.dim(), self.dim)));
        }
        Ok(())
    }

    /// Weight of the record averaged over the initial ensemble.
    fn record_weight(&self, state: &StateEnsemble, record: &DetectionRecord) -> Result<f64> {
        self.check_state(state)?;
        let mut w = 0.0;
        for (p, psi) in state.components() {
            w += p * self.conditional_pair(psi, record)?.weight();
        }
        Ok(w)
    }

    /// Exclusive probability density of a record with at least one count.
    pub fn exclusive_density(&self, state: &StateEnsemble, record: &DetectionRecord) -> Result<f64> {
        if record.is_empty() {
            return Err(Error::InvalidRecord("an exclusive density needs at least one count".into()));
        }
        self.record_weight(state, record)
    }

    /// Probability of no count in `[0, t]`.
    pub fn no_count_prob(&self, state: &StateEnsemble, t: f64) -> Result<f64> {
        self.record_weight(state, &DetectionRecord::empty(t)?)
    }

    /// `no_count_path` with restart points between `s` and `t`.
    fn path(&self, y0: &[C64], s: f64, t: f64, checkpoints: usize) -> Result<Path> {
        let n = checkpoints.max(1);
        let mut times = Vec::with_capacity(n + 1);
        let mut states = Vec::with_capacity(n + 1);
        let mut y = y0.to_vec();
        times.push(s);
        states.push(y.clone());
        for k in 1..=n {
            let b = s + (t - s) * k as f64 / n as f64;
            self.flow(&mut y, *times.last().expect("non-empty"), b)?;
            times.push(b);
            states.push(y.clone());
        }
        Ok(Path { times, states })
    }

    fn path_at(&self, path: &Path, u: f64) -> Result<Vec<C64>> {
        let k = path.times.partition_point(|&x| x <= u).saturating_sub(1).min(path.times.len() - 1);
        let mut y = path.states[k].clone();
        self.flow(&mut y, path.times[k], u)?;
        Ok(y)
    }

    /// Sum of `leaf(y, u)` over all continuations from state `y` at time `s`
    /// with at most `remaining` further counts, each continuation weighted
    /// by its count densities.
    #[allow(clippy::too_many_arguments)]
    fn nested(
        &self,
        y: &[C64],
        s: f64,
        t: f64,
        remaining: usize,
        level: u32,
        grid: &NestedGrid,
        n_out: usize,
        leaf: &dyn Fn(&[C64]) -> Result<Vec<f64>>,
    ) -> Result<Vec<f64>> {
        let path = self.path(y, s, t, grid.checkpoints)?;
        let mut total = leaf(path.states.last().expect("non-empty"))?;
        if remaining == 0 || !(t > s) {
            return Ok(total);
        }
        let spec = grid.quadrature.scaled(0.1f64.powi(level as i32 + 1));
        let inner = integrate_components(
            n_out,
            |u, out| {
                let yu = self.path_at(&path, u)?;
                for side in [Side::Right, Side::Left] {
                    let jumped = self.jump_stacked(&yu, side, u);
                    if jumped.iter().all(|z| *z == C64::new(0.0, 0.0)) {
                        continue;
                    }
                    let sub = self.nested(&jumped, u, t, remaining - 1, level + 1, grid, n_out, leaf)?;
                    for (o, v) in out.iter_mut().zip(sub) {
                        *o += v;
                    }
                }
                Ok(())
            },
            s,
            t,
            &self.breaks,
            &spec,
        )?;
        for (a, b) in total.iter_mut().zip(inner) {
            *a += b;
        }
        Ok(total)
    }

    fn check_nested(&self, m_max: usize, t: f64) -> Result<()> {
        if m_max > MAX_NESTED_COUNTS {
            return Err(Error::Unsupported(format!(
                "nested integration is limited to {MAX_NESTED_COUNTS} counts, got {m_max}"
            )));
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter(format!("horizon must be non-negative, got {t}")));
        }
        Ok(())
    }

    /// `P₀ᵗ(0)` plus the time-ordered integrals of all exclusive densities
    /// with up to `m_max` counts.
    pub fn total_probability(&self, state: &StateEnsemble, t: f64, m_max: usize, grid: &NestedGrid) -> Result<f64> {
        self.check_state(state)?;
        self.check_nested(m_max, t)?;
        let leaf = |y: &[C64]| Ok(vec![self.weight_of(y, t)]);
        let mut total = 0.0;
        for (w, psi) in state.components() {
            let y = Self::stack(&ConditionalPair::initial(psi));
            total += w * self.nested(&y, 0.0, t, m_max, 0, grid, 1, &leaf)?[0];
        }
        Ok(total)
    }

    /// `σ_t`: sum of `|α⟩⟨α| ∫_t^∞|ξ|² + |β⟩⟨β|` over records with at most
    /// `m_max` counts. Its trace is [`ContinuumEngine::total_probability`].
    pub fn apriori_continuous(
        &self,
        state: &StateEnsemble,
        t: f64,
        m_max: usize,
        grid: &NestedGrid,
    ) -> Result<DensityMatrix> {
        self.check_state(state)?;
        self.check_nested(m_max, t)?;
        let d = self.dim;
        let tail = self.pulse.tail(t);
        let leaf = |y: &[C64]| {
            let (a, b) = y.split_at(d);
            let mut out = vec![0.0; 2 * d * d];
            for r in 0..d {
                for c in 0..d {
                    let z = a[r] * a[c].conj() * tail + b[r] * b[c].conj();
                    out[2 * (r * d + c)] = z.re;
                    out[2 * (r * d + c) + 1] = z.im;
                }
            }
            Ok(out)
        };
        let mut sigma = CMat::zeros(d, d);
        for (w, psi) in state.components() {
            let y = Self::stack(&ConditionalPair::initial(psi));
            let v = self.nested(&y, 0.0, t, m_max, 0, grid, 2 * d * d, &leaf)?;
            for r in 0..d {
                for c in 0..d {
                    sigma[(r, c)] += C64::new(v[2 * (r * d + c)], v[2 * (r * d + c) + 1]) * *w;
                }
            }
        }
        DensityMatrix::subnormalized(sigma)
    }

    /// Count-resolved weights and the a-priori state from the forward
    /// second-moment equations
    /// `R_k' = A R_k + R_k A† + Σ_side J R_{k−1} J†`, with no nesting.
    pub fn moment_totals(&self, state: &StateEnsemble, t: f64, m_max: usize) -> Result<MomentTotals> {
        self.check_state(state)?;
        let d = self.dim;
        let n = 2 * d;
        let block = n * n;
        let mut y = vec![C64::new(0.0, 0.0); block * (m_max + 1)];
        for (w, psi) in state.components() {
            let v = Self::stack(&ConditionalPair::initial(psi));
            for r in 0..n {
                for c in 0..n {
                    y[r * n + c] += v[r] * v[c].conj() * *w;
                }
            }
        }
        let l1 = flat(self.model.coupling_right());
        let l2 = flat(self.model.coupling_left());
        let rhs = |u: f64, y: &[C64], dy: &mut [C64]| {
            let xi = self.pulse.amplitude(u);
            // A = [[D, 0], [−ξ F, D]], jumps JR = [[L1, 0], [ξ, L1]], JL = [[L2, 0], [0, L2]]
            let a = |r: usize, c: usize| -> C64 {
                let (br, bc) = (r / d, c / d);
                let (i, j) = (r % d, c % d);
                match (br, bc) {
                    (0, 0) | (1, 1) => self.drift[i * d + j],
                    (1, 0) => -xi * self.feed[i * d + j],
                    _ => C64::new(0.0, 0.0),
                }
            };
            let jr = |r: usize, c: usize| -> C64 {
                let (br, bc) = (r / d, c / d);
                let (i, j) = (r % d, c % d);
                match (br, bc) {
                    (0, 0) | (1, 1) => l1[i * d + j],
                    (1, 0) if i == j => xi,
                    _ => C64::new(0.0, 0.0),
                }
            };
            let jl = |r: usize, c: usize| -> C64 {
                if r / d == c / d {
                    l2[(r % d) * d + c % d]
                } else {
                    C64::new(0.0, 0.0)
                }
            };
            let am: Vec<C64> = (0..block).map(|k| a(k / n, k % n)).collect();
            let jrm: Vec<C64> = (0..block).map(|k| jr(k / n, k % n)).collect();
            let jlm: Vec<C64> = (0..block).map(|k| jl(k / n, k % n)).collect();
            for k in 0..=m_max {
                let r = &y[k * block..(k + 1) * block];
                let out = &mut dy[k * block..(k + 1) * block];
                sandwich_drift(&am, r, n, out);
                if k > 0 {
                    let prev = &y[(k - 1) * block..k * block];
                    sandwich_add(&jrm, prev, n, out);
                    sandwich_add(&jlm, prev, n, out);
                }
            }
        };
        let mut a = 0.0;
        let cuts: Vec<f64> = self.breaks.iter().copied().filter(|&b| b > 0.0 && b < t).collect();
        for b in cuts.into_iter().chain(std::iter::once(t)) {
            integrate_in_place(rhs, &mut y, a, b, &self.ode)?;
            a = b;
        }
        let tail = self.pulse.tail(t);
        let mut by_clicks = Vec::with_capacity(m_max + 1);
        let mut sigma = CMat::zeros(d, d);
        for k in 0..=m_max {
            let r = &y[k * block..(k + 1) * block];
            let mut w = 0.0;
            for i in 0..d {
                for j in 0..d {
                    let z = r[i * n + j] * tail + r[(d + i) * n + d + j];
                    sigma[(i, j)] += z;
                    if i == j {
                        w += z.re;
                    }
                }
            }
            by_clicks.push(w);
        }
        Ok(MomentTotals { by_clicks, state: sigma })
    }
}

// out = A R + R A†
fn sandwich_drift(a: &[C64], r: &[C64], n: usize, out: &mut [C64]) {
    for i in 0..n {
        for j in 0..n {
            let mut s = C64::new(0.0, 0.0);
            for k in 0..n {
                s += a[i * n + k] * r[k * n + j] + r[i * n + k] * a[j * n + k].conj();
            }
            out[i * n + j] = s;
        }
    }
}

// out += J R J†
fn sandwich_add(jm: &[C64], r: &[C64], n: usize, out: &mut [C64]) {
    let mut tmp = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = C64::new(0.0, 0.0);
            for k in 0..n {
                s += jm[i * n + k] * r[k * n + j];
            }
            tmp[i * n + j] = s;
        }
    }
    for i in 0..n {
        for j in 0..n {
            let mut s = C64::new(0.0, 0.0);
            for k in 0..n {
                s += tmp[i * n + k] * jm[j * n + k].conj();
            }
            out[i * n + j] += s;
        }
    }
}

struct Path {
    times: Vec<f64>,
    states: Vec<Vec<C64>>,
}
