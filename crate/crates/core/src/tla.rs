//! Closed-form counting statistics of a two-level atom driven by an
//! arbitrary single-photon pulse.
//!
//! Basis index 0 is `|g⟩`, index 1 is `|e⟩`. With `c = −iΔ + Γ/2` every
//! formula is written through the damped pulse integral
//! `K(t) = ∫_0^t e^{c(s−t)} ξ_s ds` and its two-time version
//! `J(a, b) = ∫_a^b e^{c(s−b)} ξ_s ds = K(b) − e^{−c(b−a)} K(a)`, which stay
//! bounded for all times.

use serde::{Deserialize, Serialize};

use crate::numerics::{integrate_1d_with_breaks, integrate_components, kronrod21, QuadratureSpec};
use crate::record::{DetectionRecord, EventPattern, Side};
use crate::{CMat, CVec, DensityMatrix, Error, Pulse, Result, SystemModel, C64};

/// Decay rates into the right (`Γ1`) and left (`Γ2`) modes and the detuning
/// `Δ` of the pulse carrier from the atomic transition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomParams {
    pub gamma_right: f64,
    pub gamma_left: f64,
    pub detuning: f64,
}

impl AtomParams {
    pub fn new(gamma_right: f64, gamma_left: f64, detuning: f64) -> Result<Self> {
        let p = Self {
            gamma_right,
            gamma_left,
            detuning,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_right >= 0.0 && self.gamma_left >= 0.0) || !self.detuning.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "decay rates must be non-negative and the detuning finite, got Γ1 = {}, Γ2 = {}, Δ = {}",
                self.gamma_right, self.gamma_left, self.detuning
            )));
        }
        if !(self.gamma_right.is_finite() && self.gamma_left.is_finite()) {
            return Err(Error::InvalidParameter("decay rates must be finite".into()));
        }
        Ok(())
    }

    /// `Γ = Γ1 + Γ2`.
    pub fn gamma(&self) -> f64 {
        self.gamma_right + self.gamma_left
    }

    /// The same atom with the two decay channels exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            gamma_right: self.gamma_left,
            gamma_left: self.gamma_right,
            detuning: self.detuning,
        }
    }

    /// Rates and detuning multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            gamma_right: self.gamma_right * factor,
            gamma_left: self.gamma_left * factor,
            detuning: self.detuning * factor,
        }
    }

    fn c(&self) -> C64 {
        C64::new(0.5 * self.gamma(), -self.detuning)
    }
}

/// Initial atomic state. Only the populations enter the counting statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomState {
    pub rho_gg: f64,
    pub rho_ee: f64,
    #[serde(default)]
    pub rho_ge: [f64; 2],
}

impl AtomState {
    pub fn new(rho_gg: f64, rho_ee: f64, rho_ge: C64) -> Result<Self> {
        let s = Self {
            rho_gg,
            rho_ee,
            rho_ge: [rho_ge.re, rho_ge.im],
        };
        s.validate()?;
        Ok(s)
    }

    pub fn ground() -> Self {
        Self {
            rho_gg: 1.0,
            rho_ee: 0.0,
            rho_ge: [0.0, 0.0],
        }
    }

    pub fn excited() -> Self {
        Self {
            rho_gg: 0.0,
            rho_ee: 1.0,
            rho_ge: [0.0, 0.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ge = C64::new(self.rho_ge[0], self.rho_ge[1]);
        if !(self.rho_gg >= 0.0 && self.rho_ee >= 0.0) || (self.rho_gg + self.rho_ee - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!(
                "populations must be non-negative and sum to one, got ({}, {})",
                self.rho_gg, self.rho_ee
            )));
        }
        if ge.norm_sqr() > self.rho_gg * self.rho_ee + 1e-10 {
            return Err(Error::InvalidState("coherence exceeds the positivity bound".into()));
        }
        Ok(())
    }

    pub fn coherence(&self) -> C64 {
        C64::new(self.rho_ge[0], self.rho_ge[1])
    }

    pub fn density(&self) -> Result<DensityMatrix> {
        let ge = self.coherence();
        DensityMatrix::new(CMat::from_row_slice(
            2,
            2,
            &[C64::from(self.rho_gg), ge, ge.conj(), C64::from(self.rho_ee)],
        ))
    }

    pub fn from_density(rho: &DensityMatrix) -> Result<Self> {
        if rho.dim() != 2 {
            return Err(Error::DimensionMismatch(format!("atom state must be 2x2, got {}", rho.dim())));
        }
        Self::new(rho.get(0, 0).re, rho.get(1, 1).re, rho.get(0, 1))
    }
}

/// `H = −(Δ/2)σ_z`, `L1 = √Γ1 σ₋`, `L2 = √Γ2 σ₋`.
pub fn tla_model(params: &AtomParams) -> Result<SystemModel> {
    params.validate()?;
    let z = C64::new(0.0, 0.0);
    let sm = CMat::from_row_slice(2, 2, &[z, C64::from(1.0), z, z]);
    let h = CMat::from_diagonal(&CVec::from_vec(vec![
        C64::from(0.5 * params.detuning),
        C64::from(-0.5 * params.detuning),
    ]));
    SystemModel::new(h, &sm * C64::from(params.gamma_right.sqrt()), &sm * C64::from(params.gamma_left.sqrt()))
}

/// Probabilities of the count patterns in `[0, t]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EventProbs {
    pub none: f64,
    pub r: f64,
    pub l: f64,
    pub rr: f64,
    pub lr: f64,
    pub rl: f64,
    pub ll: f64,
}

impl EventProbs {
    pub fn get(&self, pattern: EventPattern) -> f64 {
        match pattern {
            EventPattern::None => self.none,
            EventPattern::R => self.r,
            EventPattern::L => self.l,
            EventPattern::RR => self.rr,
            EventPattern::LR => self.lr,
            EventPattern::RL => self.rl,
            EventPattern::LL => self.ll,
        }
    }

    pub fn total(&self) -> f64 {
        self.none + self.r + self.l + self.rr + self.lr + self.rl + self.ll
    }

    /// `(⟨N_R⟩, ⟨N_L⟩)`.
    pub fn mean_counts(&self) -> (f64, f64) {
        (
            self.r + self.lr + self.rl + 2.0 * self.rr,
            self.l + self.lr + self.rl + 2.0 * self.ll,
        )
    }
}

/// First-count statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstCount {
    /// `∫ t p₁(t) dt`.
    pub tau1: f64,
    /// `∫ P₀ᵗ(0) dt`, equal to `tau1`.
    pub tau1_from_survival: f64,
    /// `∫ p₁(t) dt`.
    pub normalization: f64,
}

/// Second-count statistics for an initially excited atom.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondCount {
    pub tau2: f64,
    /// `∫∫ p(t, t′) dt′ dt`.
    pub normalization: f64,
}

/// Photon delay for an atom starting in the ground state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayTime {
    /// `∫ t |ξ_t|² dt − τ₁`.
    pub by_definition: f64,
    /// `τ₁ − ∫ t |ξ_t|² dt`, the sign under which the delay is positive.
    pub opposite_sign: f64,
}

const SMOOTH_CELLS: f64 = 256.0;

/// Closed forms for one atom and one pulse, with a cache of `K` on a grid.
#[derive(Clone, Debug)]
pub struct TwoLevelAtom {
    params: AtomParams,
    pulse: Pulse,
    c: C64,
    grid: Vec<f64>,
    k_grid: Vec<C64>,
    t_cap: f64,
    quad: QuadratureSpec,
}

impl TwoLevelAtom {
    pub fn new(params: AtomParams, pulse: Pulse) -> Result<Self> {
        params.validate()?;
        let gamma = params.gamma();
        let horizon = pulse.horizon();
        let t_cap = if gamma > 0.0 { horizon + 40.0 / gamma } else { horizon };
        let mut h = horizon / SMOOTH_CELLS;
        if gamma > 0.0 {
            h = h.min(0.1 / gamma);
        }
        if params.detuning != 0.0 {
            h = h.min(0.5 / params.detuning.abs());
        }
        let mut grid: Vec<f64> = {
            let n = (t_cap / h).ceil() as usize;
            (0..=n).map(|k| (k as f64 * h).min(t_cap)).collect()
        };
        grid.extend(pulse.breakpoints().into_iter().filter(|&b| b < t_cap));
        grid.sort_by(f64::total_cmp);
        grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * t_cap.max(1.0));
        let c = params.c();
        let quad = QuadratureSpec::new(1e-13, 1e-12, 200)?;
        let mut k_grid = Vec::with_capacity(grid.len());
        k_grid.push(C64::new(0.0, 0.0));
        for w in grid.windows(2) {
            let (a, b) = (w[0], w[1]);
            let local = integrate_1d_with_breaks(|s| (c * (s - b)).exp() * pulse.amplitude(s), a, b, &[], &quad)?;
            let prev = *k_grid.last().expect("non-empty");
            k_grid.push((-c * (b - a)).exp() * prev + local);
        }
        Ok(Self {
            params,
            pulse,
            c,
            grid,
            k_grid,
            t_cap,
            quad: QuadratureSpec::new(1e-12, 1e-10, 4000)?,
        })
    }

    /// Overrides the tolerances of the event integrals.
    pub fn with_quadrature(mut self, quad: QuadratureSpec) -> Self {
        self.quad = quad;
        self
    }

    pub fn params(&self) -> &AtomParams {
        &self.params
    }

    pub fn pulse(&self) -> &Pulse {
        &self.pulse
    }

    pub fn model(&self) -> Result<SystemModel> {
        tla_model(&self.params)
    }

    /// Upper limit used for improper time integrals.
    pub fn time_cap(&self) -> f64 {
        self.t_cap
    }

    /// `K(t) = ∫_0^t e^{c(s−t)} ξ_s ds`.
    pub fn damped_integral(&self, t: f64) -> C64 {
        if t <= 0.0 {
            return C64::new(0.0, 0.0);
        }
        let c = self.c;
        if t >= self.t_cap {
            let last = *self.k_grid.last().expect("non-empty");
            let tail = integrate_1d_with_breaks(
                |s| (c * (s - t)).exp() * self.pulse.amplitude(s),
                self.t_cap,
                t,
                &[],
                &self.quad,
            )
            .unwrap_or_default();
            return (-c * (t - self.t_cap)).exp() * last + tail;
        }
        let k = self.grid.partition_point(|&x| x <= t) - 1;
        let a = self.grid[k];
        if t == a {
            return self.k_grid[k];
        }
        let local = kronrod21(|s| (c * (s - t)).exp() * self.pulse.amplitude(s), a, t);
        (-c * (t - a)).exp() * self.k_grid[k] + local
    }

    /// `J(a, b) = ∫_a^b e^{c(s−b)} ξ_s ds`.
    pub fn damped_window(&self, a: f64, b: f64) -> C64 {
        if b <= a {
            return C64::new(0.0, 0.0);
        }
        let c = self.c;
        let step = self.grid.get(1).copied().unwrap_or(b - a);
        if b - a <= step {
            let breaks: Vec<f64> = self.pulse.breakpoints().into_iter().filter(|&x| x > a && x < b).collect();
            if breaks.is_empty() {
                return kronrod21(|s| (c * (s - b)).exp() * self.pulse.amplitude(s), a, b);
            }
            let mut acc = C64::new(0.0, 0.0);
            let mut lo = a;
            for hi in breaks.into_iter().chain(std::iter::once(b)) {
                acc += kronrod21(|s| (c * (s - b)).exp() * self.pulse.amplitude(s), lo, hi);
                lo = hi;
            }
            return acc;
        }
        self.damped_integral(b) - (-c * (b - a)).exp() * self.damped_integral(a)
    }

    fn decay(&self, t: f64) -> f64 {
        (-self.params.gamma() * t).exp()
    }

    /// `P₀ᵗ(0)`; coherences do not enter.
    pub fn p_zero(&self, state: &AtomState, t: f64) -> f64 {
        let tail = self.pulse.tail(t);
        let g1 = self.params.gamma_right;
        self.decay(t) * tail * state.rho_ee + (tail + g1 * self.damped_integral(t).norm_sqr()) * state.rho_gg
    }

    /// Exclusive density of a single count on `side` at `t′` and no other
    /// count in `[0, t]`.
    pub fn one_count_density(&self, state: &AtomState, side: Side, t_prime: f64, t: f64) -> Result<f64> {
        if !(t_prime > 0.0 && t_prime <= t) {
            return Err(Error::InvalidRecord(format!("need 0 < t′ ≤ t, got t′ = {t_prime}, t = {t}")));
        }
        Ok(self.one_count_unchecked(state, side, t_prime, t))
    }

    fn one_count_unchecked(&self, state: &AtomState, side: Side, tp: f64, t: f64) -> f64 {
        let g1 = self.params.gamma_right;
        let g2 = self.params.gamma_left;
        let kp = self.damped_integral(tp);
        let tail = self.pulse.tail(t);
        let dp = self.decay(tp);
        match side {
            Side::Right => {
                let xi = self.pulse.amplitude(tp);
                let ground = (xi - kp * g1).norm_sqr();
                let excited = if state.rho_ee > 0.0 {
                    let j = self.damped_window(tp, t);
                    g1 * dp * tail + dp * ((-self.c * (t - tp)).exp() * xi - j * g1).norm_sqr()
                } else {
                    0.0
                };
                ground * state.rho_gg + excited * state.rho_ee
            }
            Side::Left => {
                let ground = g1 * g2 * kp.norm_sqr();
                let excited = if state.rho_ee > 0.0 {
                    let j = self.damped_window(tp, t);
                    g2 * dp * (tail + g1 * j.norm_sqr())
                } else {
                    0.0
                };
                ground * state.rho_gg + excited * state.rho_ee
            }
        }
    }

    /// Exclusive density of counts `sides[0]` at `t′` then `sides[1]` at
    /// `t″`. It does not depend on the horizon `t ≥ t″`.
    pub fn two_count_density(&self, state: &AtomState, sides: [Side; 2], t1: f64, t2: f64, t: f64) -> Result<f64> {
        if !(t1 > 0.0 && t1 < t2 && t2 <= t) {
            return Err(Error::InvalidRecord(format!(
                "need 0 < t′ < t″ ≤ t, got t′ = {t1}, t″ = {t2}, t = {t}"
            )));
        }
        Ok(self.two_count_unchecked(sides, t1, t2) * state.rho_ee)
    }

    fn two_count_parts(&self, t1: f64, t2: f64) -> [f64; 4] {
        let g1 = self.params.gamma_right;
        let g2 = self.params.gamma_left;
        let x1 = self.pulse.amplitude(t1);
        let x2 = self.pulse.amplitude(t2);
        let j = self.damped_window(t1, t2);
        let carried = (-self.c * (t2 - t1)).exp() * x1;
        let d1 = self.decay(t1);
        let rr = g1 * d1 * (carried + x2 - j * g1).norm_sqr();
        let lr = g2 * d1 * (carried - j * g1).norm_sqr();
        let rl = g2 * d1 * (x2 - j * g1).norm_sqr();
        let ll = g2 * g2 * g1 * d1 * j.norm_sqr();
        [rr, lr, rl, ll]
    }

    fn two_count_unchecked(&self, sides: [Side; 2], t1: f64, t2: f64) -> f64 {
        let p = self.two_count_parts(t1, t2);
        match sides {
            [Side::Right, Side::Right] => p[0],
            [Side::Right, Side::Left] => p[1],
            [Side::Left, Side::Right] => p[2],
            [Side::Left, Side::Left] => p[3],
        }
    }

    /// Exclusive density of `record`; zero beyond two counts, since one
    /// photon and one excitation yield at most two.
    pub fn exclusive_density(&self, state: &AtomState, record: &DetectionRecord) -> Result<f64> {
        let t = record.horizon();
        match record.events() {
            [] => Ok(self.p_zero(state, t)),
            [a] => self.one_count_density(state, a.side, a.time, t),
            [a, b] => self.two_count_density(state, [a.side, b.side], a.time, b.time, t),
            _ => Ok(0.0),
        }
    }

    /// Density of two counts at `t′ < t″` summed over sides, from its single
    /// combined expression.
    pub fn two_count_total_density(&self, state: &AtomState, t1: f64, t2: f64) -> f64 {
        let g = self.params.gamma();
        let x1 = self.pulse.amplitude(t1);
        let x2 = self.pulse.amplitude(t2);
        let j = self.damped_window(t1, t2);
        let carried = (-self.c * (t2 - t1)).exp() * x1;
        let combined = self.params.gamma_right * self.decay(t1) * (carried + x2 - j * g).norm_sqr()
            + self.params.gamma_left * (self.decay(t2) * x1.norm_sqr() + self.decay(t1) * x2.norm_sqr());
        combined * state.rho_ee
    }

    /// `p₁(t)`, the density of the first count.
    pub fn first_count_density(&self, state: &AtomState, t: f64) -> f64 {
        if t <= 0.0 {
            return self.p_first_at_zero(state);
        }
        self.one_count_unchecked(state, Side::Right, t, t) + self.one_count_unchecked(state, Side::Left, t, t)
    }

    fn p_first_at_zero(&self, state: &AtomState) -> f64 {
        let x = self.pulse.amplitude(0.0).norm_sqr();
        x * state.rho_gg + (self.params.gamma() + x) * state.rho_ee
    }

    fn breaks_to(&self, t: f64) -> Vec<f64> {
        self.pulse.breakpoints().into_iter().filter(|&b| b < t).collect()
    }

    fn integrate(&self, f: impl Fn(f64) -> f64, a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64> {
        let breaks = self.breaks_to(b);
        Ok(integrate_components(
            1,
            |s, out| {
                out[0] = f(s);
                Ok(())
            },
            a,
            b,
            &breaks,
            spec,
        )?[0])
    }

    /// Two-count probabilities `[RR, LR, RL, LL]` for counts inside
    /// `[a, b]`, per unit `ρ_ee`, with the earlier count anywhere in `[0, t″]`.
    fn two_count_block(&self, a: f64, b: f64) -> Result<[f64; 4]> {
        let breaks = self.breaks_to(b);
        let inner = self.quad.scaled(0.1);
        let v = integrate_components(
            4,
            |t2, out| {
                let inner_breaks: Vec<f64> = breaks.iter().copied().filter(|&x| x < t2).collect();
                let v = integrate_components(
                    4,
                    |t1, o| {
                        o.copy_from_slice(&self.two_count_parts(t1, t2));
                        Ok(())
                    },
                    0.0,
                    t2,
                    &inner_breaks,
                    &inner,
                )?;
                out.copy_from_slice(&v);
                Ok(())
            },
            a,
            b,
            &breaks,
            &self.quad,
        )?;
        Ok([v[0], v[1], v[2], v[3]])
    }

    /// Probability of one count pattern in `[0, t]`.
    pub fn event_prob(&self, state: &AtomState, pattern: EventPattern, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::InvalidParameter(format!("horizon must be non-negative, got {t}")));
        }
        Ok(match pattern {
            EventPattern::None => self.p_zero(state, t),
            EventPattern::R | EventPattern::L => {
                let side = if pattern == EventPattern::R { Side::Right } else { Side::Left };
                self.integrate(|s| self.one_count_unchecked(state, side, s, t), 0.0, t, &self.quad)?
            }
            _ => {
                if state.rho_ee == 0.0 {
                    return Ok(0.0);
                }
                let idx = [EventPattern::RR, EventPattern::LR, EventPattern::RL, EventPattern::LL]
                    .iter()
                    .position(|&p| p == pattern)
                    .expect("two-count pattern");
                self.two_count_block(0.0, t)?[idx] * state.rho_ee
            }
        })
    }

    /// All pattern probabilities at `t`.
    pub fn event_probs(&self, state: &AtomState, t: f64) -> Result<EventProbs> {
        Ok(self.event_probs_on_grid(state, &[t])?[0])
    }

    /// Pattern probabilities at increasing times; two-count integrals are
    /// accumulated from one time to the next.
    pub fn event_probs_on_grid(&self, state: &AtomState, times: &[f64]) -> Result<Vec<EventProbs>> {
        if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| !(t >= 0.0)) {
            return Err(Error::InvalidParameter("times must be non-negative and non-decreasing".into()));
        }
        let mut out = Vec::with_capacity(times.len());
        let mut two = [0.0; 4];
        let mut last = 0.0;
        for &t in times {
            if state.rho_ee > 0.0 && t > last {
                let block = self.two_count_block(last, t)?;
                for k in 0..4 {
                    two[k] += block[k];
                }
            }
            last = t;
            out.push(EventProbs {
                none: self.p_zero(state, t),
                r: self.event_prob(state, EventPattern::R, t)?,
                l: self.event_prob(state, EventPattern::L, t)?,
                rr: two[0] * state.rho_ee,
                lr: two[1] * state.rho_ee,
                rl: two[2] * state.rho_ee,
                ll: two[3] * state.rho_ee,
            });
        }
        Ok(out)
    }

    /// `(⟨N_R(t)⟩, ⟨N_L(t)⟩)`.
    pub fn mean_counts(&self, state: &AtomState, t: f64) -> Result<(f64, f64)> {
        Ok(self.event_probs(state, t)?.mean_counts())
    }

    /// Mean time of the first count, checked against the survival integral,
    /// the normalization of `p₁` and `p₁ = −dP₀/dt`.
    pub fn first_count(&self, state: &AtomState) -> Result<FirstCount> {
        let cap = self.t_cap;
        let tau1 = self.integrate(|t| t * self.first_count_density(state, t), 0.0, cap, &self.quad)?;
        let survival = self.integrate(|t| self.p_zero(state, t), 0.0, cap, &self.quad)?;
        let normalization = self.integrate(|t| self.first_count_density(state, t), 0.0, cap, &self.quad)?;
        let fc = FirstCount {
            tau1,
            tau1_from_survival: survival,
            normalization,
        };
        let scale = tau1.abs().max(1.0);
        if (tau1 - survival).abs() > 1e-6 * scale {
            return Err(Error::CrossCheck(format!(
                "τ₁ = {tau1} from the density but {survival} from the survival probability"
            )));
        }
        let lost = self.p_zero(state, cap);
        if (normalization + lost - 1.0).abs() > 1e-6 {
            return Err(Error::CrossCheck(format!("first-count density integrates to {normalization}")));
        }
        let breaks = self.pulse.breakpoints();
        let scale_t = self.pulse.horizon().min(if self.params.gamma() > 0.0 { 1.0 / self.params.gamma() } else { f64::INFINITY });
        let h = 1e-4 * scale_t;
        for k in 1..8 {
            let t = cap * k as f64 / 16.0;
            if breaks.iter().any(|&b| (b - t).abs() < 4.0 * h) {
                continue;
            }
            let deriv = (self.p_zero(state, t - h) - self.p_zero(state, t + h)) / (2.0 * h);
            let p1 = self.first_count_density(state, t);
            if (deriv - p1).abs() > 1e-6 * p1.abs().max(1.0) {
                return Err(Error::CrossCheck(format!("p₁({t}) = {p1} but −dP₀/dt = {deriv}")));
            }
        }
        Ok(fc)
    }

    /// Mean delay of the photon by an atom starting in `|g⟩`.
    pub fn delay_time(&self) -> Result<DelayTime> {
        let tau1 = self.first_count(&AtomState::ground())?.tau1;
        let arrival = self.pulse.mean_arrival()?;
        Ok(DelayTime {
            by_definition: arrival - tau1,
            opposite_sign: tau1 - arrival,
        })
    }

    /// `p(t, t′)`, density of the second count at `t` with the first at `t′`,
    /// for an initially excited atom.
    pub fn second_count_pair_density(&self, t: f64, t_prime: f64) -> f64 {
        self.two_count_total_density(&AtomState::excited(), t_prime, t)
    }

    /// `p₂(t) = ∫_0^t p(t, t′) dt′`.
    pub fn second_count_density(&self, t: f64) -> Result<f64> {
        let inner = self.quad.scaled(0.1);
        self.integrate(|tp| self.second_count_pair_density(t, tp), 0.0, t, &inner)
    }

    /// Mean time of the second count; needs `ρ_ee = 1`.
    pub fn second_count(&self, state: &AtomState) -> Result<SecondCount> {
        if (state.rho_ee - 1.0).abs() > 1e-12 {
            return Err(Error::NotExcited(state.rho_ee));
        }
        let cap = self.t_cap;
        let inner = self.quad.scaled(0.1);
        let breaks = self.breaks_to(cap);
        let v = integrate_components(
            2,
            |t, out| {
                let ib: Vec<f64> = breaks.iter().copied().filter(|&x| x < t).collect();
                let p2 = integrate_components(
                    1,
                    |tp, o| {
                        o[0] = self.second_count_pair_density(t, tp);
                        Ok(())
                    },
                    0.0,
                    t,
                    &ib,
                    &inner,
                )?[0];
                out[0] = t * p2;
                out[1] = p2;
                Ok(())
            },
            0.0,
            cap,
            &breaks,
            &self.quad,
        )?;
        Ok(SecondCount {
            tau2: v[0],
            normalization: v[1],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::max_abs_diff;
    use proptest::prelude::*;

    fn resonant() -> AtomParams {
        AtomParams::new(0.5, 0.5, 0.0).unwrap()
    }

    #[test]
    fn model_matrices() {
        let m = tla_model(&resonant()).unwrap();
        let mut expected = CMat::zeros(2, 2);
        expected[(1, 1)] = C64::new(0.0, -0.5);
        assert!(max_abs_diff(m.effective_generator().matrix(), &expected) < 1e-15);
        assert!(tla_model(&AtomParams {
            gamma_right: -1.0,
            gamma_left: 0.0,
            detuning: 0.0
        })
        .is_err());
        let u = tla_model(&AtomParams::new(0.5, 0.5, 1.3).unwrap())
            .unwrap()
            .effective_generator()
            .propagator(2.0)
            .unwrap();
        assert!((u[(1, 1)].norm() - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn cached_kernel_matches_direct_quadrature() {
        let p = AtomParams::new(0.7, 0.4, 1.9).unwrap();
        for pulse in [Pulse::exponential(0.8).unwrap(), Pulse::gaussian(2.0, 0.6).unwrap(), Pulse::flat(1.7).unwrap()] {
            let a = TwoLevelAtom::new(p, pulse.clone()).unwrap();
            let c = p.c();
            for &t in &[0.013, 0.5, 1.7, 2.31, 7.9, 200.0] {
                let direct = integrate_1d_with_breaks(
                    |s| (c * (s - t)).exp() * pulse.amplitude(s),
                    0.0,
                    t,
                    &pulse.breakpoints(),
                    &QuadratureSpec::new(1e-14, 1e-13, 4000).unwrap(),
                )
                .unwrap();
                assert!((a.damped_integral(t) - direct).norm() < 1e-11, "{pulse:?} t={t}");
            }
            let w = a.damped_window(0.4, 0.41);
            let direct = integrate_1d_with_breaks(
                |s| (c * (s - 0.41)).exp() * pulse.amplitude(s),
                0.4,
                0.41,
                &pulse.breakpoints(),
                &QuadratureSpec::default(),
            )
            .unwrap();
            assert!((w - direct).norm() < 1e-13);
        }
    }

    #[test]
    fn p_zero_basics() {
        let pulse = Pulse::exponential(1.0).unwrap();
        let a = TwoLevelAtom::new(resonant(), pulse.clone()).unwrap();
        assert!((a.p_zero(&AtomState::ground(), 0.0) - 1.0).abs() < 1e-15);
        assert!((a.p_zero(&AtomState::excited(), 0.0) - 1.0).abs() < 1e-15);
        // Ω = Γ on resonance: P0 = e^{−Γt}(1 + Γ Γ1 t²)
        let t = 1.0;
        let expected = (-t as f64).exp() * (1.0 + 0.5 * t * t);
        assert!((a.p_zero(&AtomState::ground(), t) - expected).abs() < 1e-12);
        let free = TwoLevelAtom::new(AtomParams::new(0.0, 0.0, 0.3).unwrap(), pulse.clone()).unwrap();
        assert!((free.p_zero(&AtomState::ground(), 2.0) - pulse.tail(2.0)).abs() < 1e-15);
    }

    #[test]
    fn one_count_limits() {
        let pulse = Pulse::gaussian(2.0, 0.5).unwrap();
        let free = TwoLevelAtom::new(AtomParams::new(0.0, 0.0, 0.0).unwrap(), pulse.clone()).unwrap();
        let g = AtomState::ground();
        assert!((free.one_count_density(&g, Side::Right, 1.7, 3.0).unwrap() - pulse.intensity(1.7)).abs() < 1e-15);
        let one_sided = TwoLevelAtom::new(AtomParams::new(1.0, 0.0, 0.2).unwrap(), pulse.clone()).unwrap();
        assert_eq!(one_sided.one_count_density(&g, Side::Left, 1.7, 3.0).unwrap(), 0.0);
        let a = TwoLevelAtom::new(resonant(), Pulse::exponential(1.0).unwrap()).unwrap();
        let e = AtomState::excited();
        for side in [Side::Right, Side::Left] {
            assert!(a.one_count_density(&e, side, 1.0, 60.0).unwrap() < 1e-12);
        }
        assert!(a.one_count_density(&g, Side::Right, 2.0, 1.0).is_err());
    }

    #[test]
    fn two_count_basics() {
        let a = TwoLevelAtom::new(AtomParams::new(0.6, 0.4, 0.3).unwrap(), Pulse::exponential(1.2).unwrap()).unwrap();
        let g = AtomState::ground();
        let e = AtomState::excited();
        for sides in [[Side::Right, Side::Right], [Side::Right, Side::Left], [Side::Left, Side::Right], [Side::Left, Side::Left]] {
            assert_eq!(a.two_count_density(&g, sides, 0.5, 1.0, 2.0).unwrap(), 0.0);
        }
        let sum: f64 = [[Side::Right, Side::Right], [Side::Right, Side::Left], [Side::Left, Side::Right], [Side::Left, Side::Left]]
            .iter()
            .map(|&s| a.two_count_density(&e, s, 0.5, 1.3, 2.0).unwrap())
            .sum();
        assert!((sum - a.two_count_total_density(&e, 0.5, 1.3)).abs() < 1e-14);
        let no_left = TwoLevelAtom::new(AtomParams::new(1.0, 0.0, 0.3).unwrap(), Pulse::exponential(1.2).unwrap()).unwrap();
        assert_eq!(no_left.two_count_density(&e, [Side::Left, Side::Left], 0.5, 1.3, 2.0).unwrap(), 0.0);
        assert!(a.two_count_density(&e, [Side::Left, Side::Left], 1.3, 0.5, 2.0).is_err());
    }

    #[test]
    fn probabilities_sum_to_one() {
        let a = TwoLevelAtom::new(AtomParams::new(0.3, 0.9, 0.7).unwrap(), Pulse::exponential(0.6).unwrap()).unwrap();
        let s = AtomState::new(0.35, 0.65, C64::new(0.2, 0.1)).unwrap();
        for p in a.event_probs_on_grid(&s, &[0.5, 2.0, 6.0]).unwrap() {
            assert!((p.total() - 1.0).abs() < 1e-8, "{p:?}");
        }
        let g = a.event_probs(&AtomState::ground(), 4.0).unwrap();
        assert_eq!(g.ll, 0.0);
    }

    #[test]
    fn resonant_transmission_probability() {
        let (g, omega) = (1.0, 0.5);
        let a = TwoLevelAtom::new(resonant(), Pulse::exponential(omega).unwrap()).unwrap();
        let p = a.event_probs(&AtomState::ground(), 50.0 / omega).unwrap();
        assert!((p.r - omega / (g + omega)).abs() < 1e-6);
        let (nr, nl) = p.mean_counts();
        assert!((nr + nl - 1.0).abs() < 1e-6);
    }

    #[test]
    fn first_count_reference_value() {
        let a = TwoLevelAtom::new(resonant(), Pulse::exponential(0.5).unwrap()).unwrap();
        let fc = a.first_count(&AtomState::ground()).unwrap();
        assert!((fc.tau1 - 10.0 / 3.0).abs() < 1e-7);
        assert!((fc.normalization - 1.0).abs() < 1e-8);
        let e = TwoLevelAtom::new(resonant(), Pulse::exponential(2.0).unwrap()).unwrap();
        assert!((e.first_count(&AtomState::excited()).unwrap().tau1 - 1.0 / 3.0).abs() < 1e-7);
    }

    #[test]
    fn delay_is_reported_with_both_signs() {
        let omega = 0.5;
        let a = TwoLevelAtom::new(resonant(), Pulse::exponential(omega).unwrap()).unwrap();
        let d = a.delay_time().unwrap();
        assert!((d.by_definition + 2.0 / (1.0 + omega)).abs() < 1e-7);
        assert!((d.opposite_sign - 2.0 / (1.0 + omega)).abs() < 1e-7);
        let free = TwoLevelAtom::new(AtomParams::new(0.0, 0.0, 0.0).unwrap(), Pulse::gaussian(3.0, 0.4).unwrap()).unwrap();
        assert!(free.delay_time().unwrap().by_definition.abs() < 1e-8);
    }

    #[test]
    fn second_count_reference_value() {
        let a = TwoLevelAtom::new(resonant(), Pulse::exponential(2.0).unwrap()).unwrap();
        let sc = a.second_count(&AtomState::excited()).unwrap();
        assert!((sc.tau2 - 17.0 / 18.0).abs() < 1e-7, "{sc:?}");
        assert!((sc.normalization - 1.0).abs() < 1e-8);
        assert!(matches!(a.second_count(&AtomState::ground()), Err(Error::NotExcited(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn statistics_are_affine_in_populations(
            g1 in 0.05..1.5f64, g2 in 0.0..1.5f64, delta in -2.0..2.0f64, omega in 0.2..2.0f64,
            x in 0.0..1.0f64, tp in 0.1..2.0f64, dt in 0.1..2.0f64,
        ) {
            let a = TwoLevelAtom::new(AtomParams::new(g1, g2, delta).unwrap(), Pulse::exponential(omega).unwrap()).unwrap();
            let mixed = AtomState::new(1.0 - x, x, C64::new(0.3 * (x * (1.0 - x)).sqrt(), 0.0)).unwrap();
            let t = tp + dt;
            for side in [Side::Right, Side::Left] {
                let lhs = a.one_count_density(&mixed, side, tp, t).unwrap();
                let rhs = (1.0 - x) * a.one_count_density(&AtomState::ground(), side, tp, t).unwrap()
                    + x * a.one_count_density(&AtomState::excited(), side, tp, t).unwrap();
                prop_assert!((lhs - rhs).abs() < 1e-12);
                prop_assert!(lhs >= 0.0);
            }
            let p = a.p_zero(&mixed, t);
            prop_assert!(p <= a.p_zero(&mixed, tp) + 1e-15);
        }
    }
}
