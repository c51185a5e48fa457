//! Conditional vector pairs and density matrices.

use nalgebra::SymmetricEigen;

use crate::numerics::hermitian_deviation;
use crate::{CMat, CVec, Error, Result, C64};

pub const DENSITY_HERMITIAN_TOL: f64 = 1e-12;
pub const DENSITY_TRACE_TOL: f64 = 1e-10;
pub const DENSITY_PSD_TOL: f64 = 1e-10;
/// Excess trace accepted for states built from first-order collision blocks,
/// which conserve probability only up to `O(τ^{3/2})` per step.
pub const SUBNORMALIZED_TRACE_SLACK: f64 = 1e-6;

/// The unnormalized system vectors conditioned on a record: `alpha` is the
/// branch where the photon is still ahead in the pulse, `beta` the branch
/// where it has already interacted. `tail_weight` is the remaining pulse norm.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalPair {
    pub alpha: CVec,
    pub beta: CVec,
    pub tail_weight: f64,
}

impl ConditionalPair {
    /// `(ψ0, 0)` with the whole pulse ahead.
    pub fn initial(psi0: &CVec) -> Self {
        Self {
            alpha: psi0.clone(),
            beta: CVec::zeros(psi0.len()),
            tail_weight: 1.0,
        }
    }

    pub fn weight(&self) -> f64 {
        pair_weight(self)
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    /// `|α⟩⟨α| · tail + |β⟩⟨β|`.
    pub fn dyad(&self) -> CMat {
        &self.alpha * self.alpha.adjoint() * C64::from(self.tail_weight) + &self.beta * self.beta.adjoint()
    }

    /// Largest entry-wise difference of the two vectors.
    pub fn max_diff(&self, other: &Self) -> f64 {
        let a = (&self.alpha - &other.alpha).iter().map(|z| z.norm()).fold(0.0, f64::max);
        let b = (&self.beta - &other.beta).iter().map(|z| z.norm()).fold(0.0, f64::max);
        a.max(b)
    }
}

/// `‖α‖² · tail_weight + ‖β‖²`.
pub fn pair_weight(pair: &ConditionalPair) -> f64 {
    pair.alpha.norm_squared() * pair.tail_weight + pair.beta.norm_squared()
}

/// A Hermitian, positive semidefinite matrix of trace one, or of trace at most
/// one when built with [`DensityMatrix::subnormalized`].
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    entries: CMat,
}

impl DensityMatrix {
    pub fn new(entries: CMat) -> Result<Self> {
        let rho = Self::checked(entries)?;
        let tr = rho.trace();
        if (tr - 1.0).abs() > DENSITY_TRACE_TOL {
            return Err(Error::InvalidState(format!("trace is {tr}, expected 1")));
        }
        Ok(rho)
    }

    /// A truncated-sum state: trace in `[0, 1]` instead of exactly one, up
    /// to [`SUBNORMALIZED_TRACE_SLACK`] for truncated expansions.
    pub fn subnormalized(entries: CMat) -> Result<Self> {
        let rho = Self::checked(entries)?;
        let tr = rho.trace();
        if tr > 1.0 + SUBNORMALIZED_TRACE_SLACK {
            return Err(Error::InvalidState(format!("trace is {tr}, expected at most 1")));
        }
        Ok(rho)
    }

    fn checked(entries: CMat) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "density matrix is {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let dev = hermitian_deviation(&entries);
        if dev > DENSITY_HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {dev:e})")));
        }
        let entries = (&entries + entries.adjoint()) * C64::from(0.5);
        let min = SymmetricEigen::new(entries.clone()).eigenvalues.min();
        if min < -DENSITY_PSD_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(Self { entries })
    }

    pub fn pure(psi: &CVec) -> Result<Self> {
        let n = psi.norm();
        if !(n > 0.0) {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let v = psi / C64::from(n);
        Self::new(&v * v.adjoint())
    }

    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace().re
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.entries[(r, c)]
    }

    /// Eigen-decomposition `ρ = Σ w_k |ψ_k⟩⟨ψ_k|`, dropping components of
    /// weight below `1e-15`.
    pub fn ensemble(&self) -> StateEnsemble {
        let eig = SymmetricEigen::new(self.entries.clone());
        let mut components = Vec::new();
        for (k, &w) in eig.eigenvalues.iter().enumerate() {
            if w > 1e-15 {
                components.push((w, eig.eigenvectors.column(k).into_owned()));
            }
        }
        StateEnsemble { components }
    }
}

/// A mixed state written as a weighted set of unit vectors. All pair-based
/// statistics are linear in the state, so they are averaged over components.
#[derive(Clone, Debug, PartialEq)]
pub struct StateEnsemble {
    components: Vec<(f64, CVec)>,
}

impl StateEnsemble {
    pub fn pure(psi: &CVec) -> Result<Self> {
        let n = psi.norm();
        if !(n > 0.0) {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        Ok(Self {
            components: vec![(1.0, psi / C64::from(n))],
        })
    }

    pub fn components(&self) -> &[(f64, CVec)] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components.first().map_or(0, |(_, v)| v.len())
    }

    pub fn density(&self) -> CMat {
        let d = self.dim();
        let mut rho = CMat::zeros(d, d);
        for (w, v) in &self.components {
            rho += v * v.adjoint() * C64::from(*w);
        }
        rho
    }
}

impl From<&DensityMatrix> for StateEnsemble {
    fn from(rho: &DensityMatrix) -> Self {
        rho.ensemble()
    }
}
