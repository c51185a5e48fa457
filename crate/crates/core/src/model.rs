//! System description: Hamiltonian, the two waveguide couplings and the
//! derived non-Hermitian no-count generator.

use serde::{Deserialize, Serialize};

use crate::numerics::{hermitian_deviation, i, matrix_exponential};
use crate::{CMat, Error, Result, C64};

/// Largest tolerated entry-wise Hermiticity defect of the Hamiltonian.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// A finite-dimensional system coupled to a right-moving (`L1`) and a
/// left-moving (`L2`) waveguide mode.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemModel {
    hamiltonian: CMat,
    coupling_right: CMat,
    coupling_left: CMat,
}

impl SystemModel {
    pub fn new(hamiltonian: CMat, coupling_right: CMat, coupling_left: CMat) -> Result<Self> {
        let d = hamiltonian.nrows();
        if d == 0 {
            return Err(Error::DimensionMismatch("system dimension must be at least 1".into()));
        }
        for (name, m) in [("H", &hamiltonian), ("L1", &coupling_right), ("L2", &coupling_left)] {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {}x{}, expected {d}x{d}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        if !hamiltonian
            .iter()
            .chain(coupling_right.iter())
            .chain(coupling_left.iter())
            .all(|z| z.re.is_finite() && z.im.is_finite())
        {
            return Err(Error::InvalidParameter("model matrices must be finite".into()));
        }
        let deviation = hermitian_deviation(&hamiltonian);
        if deviation > HERMITIAN_TOL {
            return Err(Error::NonHermitian { deviation });
        }
        let hamiltonian = (&hamiltonian + hamiltonian.adjoint()) * C64::from(0.5);
        Ok(Self {
            hamiltonian,
            coupling_right,
            coupling_left,
        })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    pub fn hamiltonian(&self) -> &CMat {
        &self.hamiltonian
    }

    /// `L1`, coupling to the right-moving chain that carries the photon.
    pub fn coupling_right(&self) -> &CMat {
        &self.coupling_right
    }

    /// `L2`, coupling to the left-moving chain, initially in vacuum.
    pub fn coupling_left(&self) -> &CMat {
        &self.coupling_left
    }

    pub fn effective_generator(&self) -> EffectiveGenerator {
        let decay = self.coupling_right.adjoint() * &self.coupling_right
            + self.coupling_left.adjoint() * &self.coupling_left;
        let matrix = &self.hamiltonian - &decay * (i() * 0.5);
        EffectiveGenerator { matrix, decay }
    }

    /// The same system with the two couplings exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            hamiltonian: self.hamiltonian.clone(),
            coupling_right: self.coupling_left.clone(),
            coupling_left: self.coupling_right.clone(),
        }
    }
}

/// `G = H − (i/2)(L1†L1 + L2†L2)`; the no-count propagator is `exp(−iGt)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveGenerator {
    matrix: CMat,
    decay: CMat,
}

impl EffectiveGenerator {
    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    /// `L1†L1 + L2†L2`, positive semidefinite.
    pub fn decay(&self) -> &CMat {
        &self.decay
    }

    /// `−iG`, the right-hand side operator of the no-count evolution.
    pub fn drift(&self) -> CMat {
        &self.matrix * (-i())
    }

    pub fn propagator(&self, t: f64) -> Result<CMat> {
        matrix_exponential(&self.drift(), t)
    }
}

/// JSON form of a model. Matrices are flattened row-major lists of
/// `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub dim: usize,
    #[serde(rename = "H")]
    pub hamiltonian: Vec<[f64; 2]>,
    #[serde(rename = "L1")]
    pub coupling_right: Vec<[f64; 2]>,
    #[serde(rename = "L2")]
    pub coupling_left: Vec<[f64; 2]>,
}

fn unflatten(name: &str, d: usize, entries: &[[f64; 2]]) -> Result<CMat> {
    if entries.len() != d * d {
        return Err(Error::DimensionMismatch(format!(
            "{name} has {} entries, expected {}",
            entries.len(),
            d * d
        )));
    }
    Ok(CMat::from_row_iterator(
        d,
        d,
        entries.iter().map(|&[re, im]| C64::new(re, im)),
    ))
}

fn flatten(m: &CMat) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push([m[(r, c)].re, m[(r, c)].im]);
        }
    }
    out
}

impl ModelSpec {
    pub fn build(&self) -> Result<SystemModel> {
        if self.dim == 0 {
            return Err(Error::DimensionMismatch("dim must be at least 1".into()));
        }
        SystemModel::new(
            unflatten("H", self.dim, &self.hamiltonian)?,
            unflatten("L1", self.dim, &self.coupling_right)?,
            unflatten("L2", self.dim, &self.coupling_left)?,
        )
    }

    pub fn from_model(model: &SystemModel) -> Self {
        Self {
            dim: model.dim(),
            hamiltonian: flatten(model.hamiltonian()),
            coupling_right: flatten(model.coupling_right()),
            coupling_left: flatten(model.coupling_left()),
        }
    }
}
