//! Datasets: extended-XYZ I/O, seeded splits and the rotor-chain generator.

mod extxyz;
mod rotor;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{GeometryError, MolecularStructure};

pub use extxyz::{format_extxyz, parse_extxyz, read_extxyz, write_extxyz};
pub use rotor::{
    dihedral_with_grad, gen_rotor_chain, gen_rotor_dataset, rotor_energy_forces, rotor_geometry, RotorChainSpec,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{path}:{line}: {msg}")]
    File { path: String, line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid generator settings: {0}")]
    Spec(String),
    #[error("cannot split {size} structures into {n_train} train and {n_valid} validation")]
    Split { size: usize, n_train: usize, n_valid: usize },
    #[error("structure {index} lacks {what}")]
    MissingLabel { index: usize, what: &'static str },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Labelled structures sharing one set of units.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub structures: Vec<MolecularStructure>,
    pub energy_unit: String,
    pub length_unit: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.structures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.structures.is_empty()
    }

    /// True when every structure carries forces.
    pub fn has_forces(&self) -> bool {
        self.structures.iter().all(|s| s.forces.is_some())
    }

    /// Errors unless every structure has an energy (and forces, if asked).
    pub fn require_labels(&self, forces: bool) -> Result<(), DataError> {
        for (index, s) in self.structures.iter().enumerate() {
            if s.energy.is_none() {
                return Err(DataError::MissingLabel { index, what: "an energy" });
            }
            if forces && s.forces.is_none() {
                return Err(DataError::MissingLabel { index, what: "forces" });
            }
        }
        Ok(())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            structures: indices.iter().map(|&k| self.structures[k].clone()).collect(),
            energy_unit: self.energy_unit.clone(),
            length_unit: self.length_unit.clone(),
        }
    }
}

/// Seeded partition of `0..size` into train, validation and test indices.
pub fn make_splits(
    size: usize,
    n_train: usize,
    n_valid: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>), DataError> {
    if n_train + n_valid > size {
        return Err(DataError::Split { size, n_train, n_valid });
    }
    let mut idx: Vec<usize> = (0..size).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = idx.split_off(n_train + n_valid);
    let valid = idx.split_off(n_train);
    Ok((idx, valid, test))
}
