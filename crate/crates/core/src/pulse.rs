//! Single-photon wavepacket profiles and their discretization.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::numerics::{integrate_1d_with_breaks, QuadratureSpec};
use crate::{Error, Result, C64};

#[derive(Clone, Debug, PartialEq)]
enum Shape {
    Exponential { rate: f64 },
    // Amplitude `exp(−(t−center)²/(4 width²)) / sqrt(width √(2π) mass)`,
    // truncated to t ≥ 0; `mass` is the Gaussian weight on [0, ∞).
    Gaussian { center: f64, width: f64, mass: f64 },
    Flat { duration: f64 },
    // Piecewise-linear amplitude, zero outside [times[0], times[n−1]].
    // `suffix[k]` is the norm carried by segments k.. (already normalized).
    Table { times: Vec<f64>, amps: Vec<C64>, suffix: Vec<f64> },
}

/// A normalized wavepacket `ξ(t)`, supported on `t ≥ 0`.
///
/// `horizon()` is a time after which the remaining norm is below `1e-12`.
#[derive(Clone, Debug, PartialEq)]
pub struct Pulse {
    shape: Shape,
    phase: C64,
}

fn segment_partial(p: f64, q: f64, r: f64, s: f64) -> f64 {
    // ∫0^s |a(1−u) + b u|² du with p=|a|², q=Re(a b̄), r=|b|²
    let s2 = s * s;
    let s3 = s2 * s;
    p * (s - s2 + s3 / 3.0) + 2.0 * q * (s2 / 2.0 - s3 / 3.0) + r * s3 / 3.0
}

impl Pulse {
    /// `ξ(t) = √Ω exp(−Ωt/2)`.
    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("exponential rate must be positive, got {rate}")));
        }
        Ok(Self::from_shape(Shape::Exponential { rate }))
    }

    /// Gaussian intensity profile of standard deviation `width` centred at
    /// `center`, truncated to `t ≥ 0` and renormalized.
    pub fn gaussian(center: f64, width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite() && center.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gaussian needs finite center and positive width, got ({center}, {width})"
            )));
        }
        let mass = 0.5 * erfc(-center / (width * std::f64::consts::SQRT_2));
        if mass < 1e-12 {
            return Err(Error::ZeroPulse);
        }
        Ok(Self::from_shape(Shape::Gaussian { center, width, mass }))
    }

    /// `ξ(t) = 1/√T` on `[0, T]`.
    pub fn flat(duration: f64) -> Result<Self> {
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::InvalidParameter(format!("flat pulse duration must be positive, got {duration}")));
        }
        Ok(Self::from_shape(Shape::Flat { duration }))
    }

    /// Piecewise-linear amplitude through `(times[k], amps[k])`, rescaled to
    /// unit norm.
    pub fn table(times: Vec<f64>, amps: Vec<C64>) -> Result<Self> {
        if times.len() != amps.len() || times.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "table pulse needs at least two matching samples, got {} times and {} amplitudes",
                times.len(),
                amps.len()
            )));
        }
        if !(times[0] >= 0.0) || times.windows(2).any(|w| !(w[1] > w[0])) || !times.iter().all(|t| t.is_finite()) {
            return Err(Error::InvalidParameter("table times must be finite, non-negative and strictly increasing".into()));
        }
        let n = times.len();
        let mut suffix = vec![0.0; n];
        for k in (0..n - 1).rev() {
            let (a, b) = (amps[k], amps[k + 1]);
            let seg = (times[k + 1] - times[k]) * (a.norm_sqr() + (a * b.conj()).re + b.norm_sqr()) / 3.0;
            suffix[k] = suffix[k + 1] + seg;
        }
        let total = suffix[0];
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::ZeroPulse);
        }
        let scale = total.sqrt().recip();
        let amps = amps.into_iter().map(|a| a * scale).collect();
        suffix.iter_mut().for_each(|s| *s /= total);
        Ok(Self::from_shape(Shape::Table { times, amps, suffix }))
    }

    fn from_shape(shape: Shape) -> Self {
        Self {
            shape,
            phase: C64::new(1.0, 0.0),
        }
    }

    /// The same pulse multiplied by the global phase `exp(iφ)`.
    pub fn with_phase(mut self, phi: f64) -> Self {
        self.phase *= C64::from_polar(1.0, phi);
        self
    }

    /// `Some(Ω)` for the exponential profile.
    pub fn exponential_rate(&self) -> Option<f64> {
        match self.shape {
            Shape::Exponential { rate } => Some(rate),
            _ => None,
        }
    }

    pub fn amplitude(&self, t: f64) -> C64 {
        if t < 0.0 {
            return C64::new(0.0, 0.0);
        }
        let real = match &self.shape {
            Shape::Exponential { rate } => rate.sqrt() * (-0.5 * rate * t).exp(),
            Shape::Gaussian { center, width, mass } => {
                let z = (t - center) / width;
                (-0.25 * z * z).exp() / (width * (2.0 * std::f64::consts::PI).sqrt() * mass).sqrt()
            }
            Shape::Flat { duration } => {
                if t <= *duration {
                    duration.sqrt().recip()
                } else {
                    0.0
                }
            }
            Shape::Table { times, amps, .. } => return self.phase * table_amplitude(times, amps, t),
        };
        self.phase * real
    }

    pub fn intensity(&self, t: f64) -> f64 {
        self.amplitude(t).norm_sqr()
    }

    /// `∫_t^∞ |ξ_s|² ds`.
    pub fn tail(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        match &self.shape {
            Shape::Exponential { rate } => (-rate * t).exp(),
            Shape::Gaussian { center, width, mass } => {
                (0.5 * erfc((t - center) / (width * std::f64::consts::SQRT_2)) / mass).min(1.0)
            }
            Shape::Flat { duration } => ((duration - t) / duration).max(0.0),
            Shape::Table { times, amps, suffix } => {
                let n = times.len();
                if t <= times[0] {
                    return 1.0;
                }
                if t >= times[n - 1] {
                    return 0.0;
                }
                let k = times.partition_point(|&x| x <= t) - 1;
                let h = times[k + 1] - times[k];
                let (a, b) = (amps[k], amps[k + 1]);
                let (p, q, r) = (a.norm_sqr(), (a * b.conj()).re, b.norm_sqr());
                let s = (t - times[k]) / h;
                let seg = h * (segment_partial(p, q, r, 1.0) - segment_partial(p, q, r, s));
                (suffix[k + 1] + seg).clamp(0.0, 1.0)
            }
        }
    }

    /// Time beyond which the remaining norm is negligible (`< 1e-12`).
    pub fn horizon(&self) -> f64 {
        match &self.shape {
            Shape::Exponential { rate } => 28.0 / rate,
            Shape::Gaussian { center, width, .. } => (center + 7.2 * width).max(7.2 * width),
            Shape::Flat { duration } => *duration,
            Shape::Table { times, .. } => times[times.len() - 1],
        }
    }

    /// Points where the profile is not smooth, inside `(0, horizon]`.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Exponential { .. } | Shape::Gaussian { .. } => Vec::new(),
            Shape::Flat { duration } => vec![*duration],
            Shape::Table { times, .. } => times.iter().copied().filter(|&t| t > 0.0).collect(),
        }
    }

    /// `∫ t |ξ_t|² dt`, the mean arrival time of the free photon.
    pub fn mean_arrival(&self) -> Result<f64> {
        match &self.shape {
            Shape::Exponential { rate } => Ok(1.0 / rate),
            Shape::Flat { duration } => Ok(0.5 * duration),
            Shape::Gaussian { center, width, mass } => {
                let z = center / width;
                let density = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
                Ok(center + width * density / mass)
            }
            Shape::Table { .. } => {
                let v = integrate_1d_with_breaks(
                    |t| C64::from(t * self.intensity(t)),
                    0.0,
                    self.horizon(),
                    &self.breakpoints(),
                    &QuadratureSpec::default(),
                )?;
                Ok(v.re)
            }
        }
    }

    /// Samples `ξ(kτ)`, `k = 0..n`, with `τ = t_total / n`, rescaled to unit
    /// discrete norm.
    pub fn discretize(&self, n: usize, t_total: f64) -> Result<DiscretePulse> {
        if n == 0 || !(t_total > 0.0 && t_total.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "discretization needs n ≥ 1 and T > 0, got n = {n}, T = {t_total}"
            )));
        }
        let step = t_total / n as f64;
        DiscretePulse::from_samples((0..n).map(|k| self.amplitude(k as f64 * step)).collect(), step)
    }
}

fn table_amplitude(times: &[f64], amps: &[C64], t: f64) -> C64 {
    let n = times.len();
    if t < times[0] || t > times[n - 1] {
        return C64::new(0.0, 0.0);
    }
    if t == times[n - 1] {
        return amps[n - 1];
    }
    let k = times.partition_point(|&x| x <= t) - 1;
    let s = (t - times[k]) / (times[k + 1] - times[k]);
    amps[k] * (1.0 - s) + amps[k + 1] * s
}

/// Samples `ξ_k` of a pulse on a uniform grid of step `τ`, normalized so that
/// `Σ |ξ_k|² τ = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretePulse {
    samples: Vec<C64>,
    step: f64,
    // suffix[j] = Σ_{k ≥ j} |ξ_k|² τ, suffix[n] = 0
    suffix: Vec<f64>,
    renormalization: f64,
}

impl DiscretePulse {
    pub fn from_samples(samples: Vec<C64>, step: f64) -> Result<Self> {
        if samples.is_empty() || !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidParameter("discrete pulse needs samples and a positive step".into()));
        }
        let raw: f64 = samples.iter().map(|x| x.norm_sqr()).sum::<f64>() * step;
        if !(raw > 0.0) || !raw.is_finite() {
            return Err(Error::ZeroPulse);
        }
        let renormalization = raw.sqrt().recip();
        let samples: Vec<C64> = samples.into_iter().map(|x| x * renormalization).collect();
        let mut suffix = vec![0.0; samples.len() + 1];
        for k in (0..samples.len()).rev() {
            suffix[k] = suffix[k + 1] + samples[k].norm_sqr() * step;
        }
        // Rounding leaves suffix[0] within a few ulps of 1; pin it.
        let total = suffix[0];
        suffix.iter_mut().for_each(|s| *s /= total);
        Ok(Self {
            samples,
            step,
            suffix,
            renormalization,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn sample(&self, k: usize) -> C64 {
        self.samples.get(k).copied().unwrap_or_default()
    }

    /// `Σ_{k ≥ j} |ξ_k|² τ`.
    pub fn tail_from(&self, j: usize) -> f64 {
        self.suffix[j.min(self.samples.len())]
    }

    /// Factor applied to the raw samples to reach unit norm.
    pub fn renormalization(&self) -> f64 {
        self.renormalization
    }

    /// Total time `N τ` covered by the samples.
    pub fn duration(&self) -> f64 {
        self.step * self.samples.len() as f64
    }
}

/// JSON form of a pulse, tagged by `kind`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PulseSpec {
    Exponential { rate: f64 },
    Gaussian { center: f64, width: f64 },
    Flat { duration: f64 },
    Table { times: Vec<f64>, amplitudes: Vec<[f64; 2]> },
}

impl PulseSpec {
    pub fn build(&self) -> Result<Pulse> {
        match self {
            Self::Exponential { rate } => Pulse::exponential(*rate),
            Self::Gaussian { center, width } => Pulse::gaussian(*center, *width),
            Self::Flat { duration } => Pulse::flat(*duration),
            Self::Table { times, amplitudes } => Pulse::table(
                times.clone(),
                amplitudes.iter().map(|&[re, im]| C64::new(re, im)).collect(),
            ),
        }
    }

    /// The same pulse with every rate multiplied and every time divided by
    /// `factor`.
    pub fn rescaled(&self, factor: f64) -> Self {
        match self {
            Self::Exponential { rate } => Self::Exponential { rate: rate * factor },
            Self::Gaussian { center, width } => Self::Gaussian {
                center: center / factor,
                width: width / factor,
            },
            Self::Flat { duration } => Self::Flat { duration: duration / factor },
            Self::Table { times, amplitudes } => Self::Table {
                times: times.iter().map(|t| t / factor).collect(),
                amplitudes: amplitudes.clone(),
            },
        }
    }
}
