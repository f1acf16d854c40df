//! The SO3krates network: embedding, SPHC initialisation, attention-based
//! message passing with optional non-local spherical neighborhoods, atomwise
//! interaction and an energy head. Forces are the negative position gradient
//! of the energy.

mod checkpoint;
mod config;
mod diagnostics;
mod forward;
mod params;

use std::sync::Arc;

use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape, Tensor, Var};
use crate::geometry::{GeometryError, MolecularStructure};
use crate::so3::So3Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::ModelConfig;
pub use diagnostics::{pca_2d, Pca};
pub use forward::{AttentionRecord, Branch, PairKind, Trace};
pub use params::{coupling_paths, param_count, param_specs, Init, ModelParams, ParamSpec};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    So3(#[from] So3Error),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Energy and forces of one structure.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub energy: f64,
    pub atom_energies: Vec<f64>,
    pub forces: Vec<[f64; 3]>,
}

/// Handles of one recorded forward pass.
pub struct Recorded<'t> {
    /// One handle per parameter tensor, in storage order.
    pub params: Vec<Var<'t>>,
    pub positions: Var<'t>,
    pub energy: Var<'t>,
    pub atom_energies: Var<'t>,
}

/// A configured network together with its parameters.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: ModelParams,
    consts: Arc<forward::Constants>,
}

pub(crate) fn positions_tensor(s: &MolecularStructure) -> Tensor {
    Tensor::from_rows(&s.positions)
}

impl Model {
    /// Fresh model with seeded parameters.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        let params = ModelParams::init(&config, seed)?;
        Self::from_params(config, params)
    }

    pub fn from_params(config: ModelConfig, params: ModelParams) -> Result<Self, ModelError> {
        config.validate()?;
        let expected = param_specs(&config);
        if expected.len() != params.len()
            || expected
                .iter()
                .zip(params.names().iter().zip(params.tensors()))
                .any(|(s, (n, t))| s.name != *n || s.shape != t.shape())
        {
            return Err(ModelError::Checkpoint("parameters do not match the configuration".into()));
        }
        let consts = Arc::new(forward::Constants::new(&config));
        Ok(Model { config, params, consts })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    /// Records the network on `tape`. With `trainable` set, parameters are
    /// leaves that gradients can be taken against; otherwise constants.
    pub fn record<'t>(
        &self,
        tape: &'t Tape,
        structure: &MolecularStructure,
        trainable: bool,
        trace: Option<&mut Trace>,
    ) -> Result<Recorded<'t>, ModelError> {
        structure.validate()?;
        let params = self
            .params
            .tensors()
            .iter()
            .map(|t| {
                if trainable {
                    tape.leaf_shared(t.clone())
                } else {
                    tape.constant_shared(t.clone())
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let positions = tape.leaf(positions_tensor(structure))?;
        let out = forward::forward(
            &self.config,
            &self.consts,
            &self.params,
            tape,
            structure,
            &params,
            positions,
            trace,
        )?;
        Ok(Recorded {
            params,
            positions,
            energy: out.energy,
            atom_energies: out.atom_energies,
        })
    }

    /// Energy only.
    pub fn energy(&self, structure: &MolecularStructure) -> Result<f64, ModelError> {
        let tape = Tape::new();
        Ok(self.record(&tape, structure, false, None)?.energy.item())
    }

    /// Energy, per-atom energies and forces.
    pub fn predict(&self, structure: &MolecularStructure) -> Result<Prediction, ModelError> {
        let tape = Tape::new();
        let rec = self.record(&tape, structure, false, None)?;
        let grad = tape.grad(rec.energy, &[rec.positions])?;
        let g = grad[0].value();
        Ok(Prediction {
            energy: rec.energy.item(),
            atom_energies: rec.atom_energies.value().data().to_vec(),
            forces: (0..structure.len())
                .map(|i| [-g.get(i, 0), -g.get(i, 1), -g.get(i, 2)])
                .collect(),
        })
    }

    /// Forward pass with intermediate values captured.
    pub fn trace(&self, structure: &MolecularStructure) -> Result<(f64, Trace), ModelError> {
        let tape = Tape::new();
        let mut trace = Trace::default();
        let rec = self.record(&tape, structure, false, Some(&mut trace))?;
        Ok((rec.energy.item(), trace))
    }
}
