use std::fmt;
use std::path::Path;

use sha2::{Digest, Sha256};

use so3krates::data::read_extxyz;
use so3krates::model::Model;
use so3krates::parallel::Execution;
use so3krates::training::{evaluate, fit_energy_shift};

use super::train::open_checkpoint;
use crate::CliError;

/// Metrics of one checkpoint on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub param_count: usize,
    pub config_hash: String,
    pub structures: usize,
    pub energy_mae: f64,
    /// Constant added to predictions before the shifted metrics.
    pub shift: f64,
    /// Where the shift was fitted: this dataset or a reference file.
    pub shift_source: String,
    pub shifted_energy_mae: f64,
    pub shifted_energy_r2: f64,
    /// `None` when the dataset has no reference forces.
    pub force_mae: Option<f64>,
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "parameters          {}", self.param_count)?;
        writeln!(f, "config sha256       {}", self.config_hash)?;
        writeln!(f, "structures          {}", self.structures)?;
        writeln!(f, "energy MAE          {:.6e}", self.energy_mae)?;
        writeln!(f, "energy shift        {:.6e} (fitted on {})", self.shift, self.shift_source)?;
        writeln!(f, "shifted energy MAE  {:.6e}", self.shifted_energy_mae)?;
        writeln!(f, "shifted energy R2   {:.6}", self.shifted_energy_r2)?;
        match self.force_mae {
            Some(m) => writeln!(f, "force MAE           {m:.6e}"),
            None => writeln!(f, "force MAE           omitted: dataset has no reference forces"),
        }
    }
}

/// Evaluates the checkpoint in `checkpoint` on `data`. The energy shift is
/// fitted on `shift_data` when given, otherwise on `data` itself.
pub fn eval(checkpoint: &Path, data: &Path, shift_data: Option<&Path>) -> Result<EvalReport, CliError> {
    let ckpt = open_checkpoint(checkpoint)?;
    if !data.is_file() {
        return Err(CliError::Config(format!("dataset {} not found", data.display())));
    }
    let set = read_extxyz(data)?;
    if set.is_empty() {
        return Err(CliError::Data(format!("{} holds no structures", data.display())));
    }
    set.require_labels(false)?;
    let model = Model::from_params(ckpt.config.clone(), ckpt.params.clone())?;
    let ev = evaluate(&model, &set.structures, Execution::Parallel)?;
    let (shift, shift_source) = match shift_data {
        Some(p) => {
            let reference = read_extxyz(p)?;
            reference.require_labels(false)?;
            let rev = evaluate(&model, &reference.structures, Execution::Parallel)?;
            (fit_energy_shift(&rev.energies, &rev.reference_energies)?, p.display().to_string())
        }
        None => (ev.self_shift(), "this dataset".to_string()),
    };
    let config_hash = match ckpt.meta("config_hash") {
        Some(h) => h.to_string(),
        None => {
            let text: String = ckpt.config.to_pairs().iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
            hex::encode(Sha256::digest(text.as_bytes()))
        }
    };
    Ok(EvalReport {
        param_count: model.param_count(),
        config_hash,
        structures: set.len(),
        energy_mae: ev.energy_mae(0.0),
        shift,
        shift_source,
        shifted_energy_mae: ev.energy_mae(shift),
        shifted_energy_r2: ev.energy_r2(shift),
        force_mae: ev.force_mae(),
    })
}
