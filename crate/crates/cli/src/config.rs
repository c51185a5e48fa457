//! Run configuration: one JSON document, unknown keys rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use photonq::collision::BlockMode;
use photonq::tla::{tla_model, AtomParams, AtomState, TwoLevelAtom};
use photonq::{CVec, Detection, DetectionRecord, ModelSpec, Pulse, PulseSpec, StateEnsemble, SystemModel, C64};
use serde::Deserialize;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Optional; must match the subcommand when present.
    pub command: Option<String>,
    /// Two-level atom; exclusive with `model`.
    pub atom: Option<AtomParams>,
    /// Generic system; exclusive with `atom`.
    pub model: Option<ModelSpec>,
    pub pulse: PulseSpec,
    /// Initial atom state, ground state by default.
    pub state: Option<AtomState>,
    /// Initial pure state of a generic model as `[re, im]` pairs.
    pub psi0: Option<Vec<[f64; 2]>>,
    pub grid: Option<GridSpec>,
    /// Express every rate in units of `Γ = Γ1 + Γ2` and every time in
    /// units of `1/Γ`.
    #[serde(default)]
    pub normalize_gamma: bool,
    /// Cross-check tolerance; the command picks its default otherwise.
    pub tolerance: Option<f64>,
    pub seed: Option<u64>,
    pub sampler: Option<SamplerSpec>,
    pub converge: Option<ConvergeSpec>,
    pub times: Option<TimesSpec>,
    /// Per-sample CSV written by `sample`.
    pub sample_dump: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub t_min: f64,
    pub t_max: f64,
    pub n_points: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_points < 2 {
            bail!("grid needs n_points ≥ 2, got {}", self.n_points);
        }
        if !(self.t_min >= 0.0 && self.t_max > self.t_min && self.t_max.is_finite()) {
            bail!("grid needs t_max > t_min ≥ 0, got [{}, {}]", self.t_min, self.t_max);
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let n = self.n_points - 1;
        (0..=n)
            .map(|k| {
                if k == n {
                    self.t_max
                } else {
                    self.t_min + (self.t_max - self.t_min) * k as f64 / n as f64
                }
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    pub n_samples: usize,
    pub tau: f64,
    #[serde(default = "exact")]
    pub block_mode: BlockMode,
    /// Discrete horizon; defaults to the pulse horizon plus `30/Γ` for an atom.
    pub horizon: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeSpec {
    #[serde(default = "default_taus")]
    pub taus: Vec<f64>,
    #[serde(default)]
    pub record: Vec<Detection>,
    pub horizon: f64,
    #[serde(default = "exact")]
    pub block_mode: BlockMode,
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimesSpec {
    /// Request `τ₂`; defaults to whether the atom starts excited.
    pub tau2: Option<bool>,
    /// Add Monte Carlo estimates using `sampler` and the seed.
    #[serde(default)]
    pub monte_carlo: bool,
}

fn exact() -> BlockMode {
    BlockMode::Exact
}

fn default_taus() -> Vec<f64> {
    vec![1e-2, 5e-3, 2.5e-3, 1.25e-3]
}

/// The configuration with units and defaults resolved.
pub struct Resolved {
    pub config: RunConfig,
    pub pulse: Pulse,
    pub system: System,
}

pub enum System {
    Atom { params: AtomParams, state: AtomState },
    Generic { model: SystemModel, psi0: CVec },
}

impl Resolved {
    pub fn model(&self) -> Result<SystemModel> {
        Ok(match &self.system {
            System::Atom { params, .. } => tla_model(params)?,
            System::Generic { model, .. } => model.clone(),
        })
    }

    pub fn ensemble(&self) -> Result<StateEnsemble> {
        Ok(match &self.system {
            System::Atom { state, .. } => state.density()?.ensemble(),
            System::Generic { psi0, .. } => StateEnsemble::pure(psi0)?,
        })
    }

    pub fn atom(&self, command: &str) -> Result<(AtomParams, AtomState, TwoLevelAtom)> {
        match &self.system {
            System::Atom { params, state } => Ok((*params, *state, TwoLevelAtom::new(*params, self.pulse.clone())?)),
            System::Generic { .. } => bail!("`{command}` needs an `atom` configuration"),
        }
    }

    pub fn grid(&self) -> Result<Vec<f64>> {
        let g = self.config.grid.context("missing `grid`")?;
        g.validate()?;
        Ok(g.points())
    }

    pub fn tolerance(&self, cli: Option<f64>, default: f64) -> Result<f64> {
        let tol = cli.or(self.config.tolerance).unwrap_or(default);
        if !(tol > 0.0 && tol.is_finite()) {
            bail!("tolerance must be positive, got {tol}");
        }
        Ok(tol)
    }

    pub fn record(&self, spec: &ConvergeSpec) -> Result<DetectionRecord> {
        Ok(DetectionRecord::new(spec.record.clone(), spec.horizon)?)
    }
}

pub fn load(path: &Path, command: &str) -> Result<Resolved> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let config: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    resolve(config, command)
}

pub fn resolve(config: RunConfig, command: &str) -> Result<Resolved> {
    if let Some(c) = &config.command {
        if c != command {
            bail!("configuration is for `{c}`, not `{command}`");
        }
    }
    let (system, scale) = match (&config.atom, &config.model) {
        (Some(_), Some(_)) => bail!("give either `atom` or `model`, not both"),
        (None, None) => bail!("missing `atom` or `model`"),
        (Some(params), None) => {
            params.validate()?;
            if config.psi0.is_some() {
                bail!("`psi0` belongs to a generic `model`; use `state` for an atom");
            }
            let scale = if config.normalize_gamma {
                let g = params.gamma();
                if !(g > 0.0) {
                    bail!("`normalize_gamma` needs Γ1 + Γ2 > 0");
                }
                1.0 / g
            } else {
                1.0
            };
            let state = config.state.unwrap_or_else(AtomState::ground);
            state.validate()?;
            (
                System::Atom {
                    params: params.scaled(scale),
                    state,
                },
                scale,
            )
        }
        (None, Some(spec)) => {
            if config.normalize_gamma {
                bail!("`normalize_gamma` applies to an `atom` configuration");
            }
            if config.state.is_some() {
                bail!("`state` belongs to an `atom`; use `psi0` for a generic model");
            }
            let model = spec.build()?;
            let raw = config.psi0.as_ref().context("a generic model needs `psi0`")?;
            let psi0 = CVec::from_iterator(raw.len(), raw.iter().map(|&[re, im]| C64::new(re, im)));
            if psi0.len() != model.dim() {
                bail!("`psi0` has {} entries, the model has dimension {}", psi0.len(), model.dim());
            }
            let norm = psi0.norm();
            if !((norm - 1.0).abs() <= 1e-10) {
                bail!("`psi0` must have unit norm, got {norm}");
            }
            (System::Generic { model, psi0 }, 1.0)
        }
    };
    let pulse = config.pulse.rescaled(scale).build()?;
    Ok(Resolved { config, pulse, system })
}
