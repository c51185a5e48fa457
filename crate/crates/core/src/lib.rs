//! Photon counting statistics of the output field when a single-photon
//! wavepacket scatters off a small quantum system coupled to a bidirectional
//! waveguide.
//!
//! Three routes compute the same statistics and check each other:
//!
//! * [`collision`]: the discrete repeated-interaction model, where the field is
//!   two chains of qubits that each meet the system once for a time `τ`;
//! * [`continuum`]: the `τ → 0` limit for an arbitrary finite-dimensional
//!   system, built from a non-Hermitian propagator and jump rules;
//! * [`tla`] and [`exp_pulse`]: closed forms for a two-level atom, for an
//!   arbitrary pulse and for a decaying exponential pulse.
//!
//! [`montecarlo`] samples the discrete counting process for statistical
//! validation.

pub mod collision;
pub mod continuum;
pub mod convergence;
pub mod error;
pub mod exp_pulse;
pub mod io;
pub mod model;
pub mod montecarlo;
pub mod numerics;
pub mod pulse;
pub mod record;
pub mod state;
pub mod tla;

pub use error::{Error, Result};
pub use model::{EffectiveGenerator, ModelSpec, SystemModel};
pub use pulse::{DiscretePulse, Pulse, PulseSpec};
pub use record::{Detection, DetectionRecord, EventPattern, Side};
pub use state::{pair_weight, ConditionalPair, DensityMatrix, StateEnsemble};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense complex vector.
pub type CVec = nalgebra::DVector<C64>;
