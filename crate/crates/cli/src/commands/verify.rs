use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use so3krates::model::Model;
use so3krates::so3::{cg_table, CgTable};
use so3krates::verify::{model_suite, so3_suite, Report};

use super::train::open_checkpoint;
use crate::{CliError, RunConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    /// Trained parameters to check; a freshly initialised model otherwise.
    pub checkpoint: Option<PathBuf>,
    /// Model settings and seed for the fresh model.
    pub config: RunConfig,
    pub seed: u64,
    pub structures: usize,
    pub motions: usize,
    /// Perturbs one coupling coefficient before the table checks. Used as a
    /// negative control.
    pub corrupt_cg: bool,
}

/// Runs every check. A failing check is reported in the returned report;
/// callers decide how to exit.
pub fn verify(opts: &VerifyOptions) -> Result<Report, CliError> {
    let model = match &opts.checkpoint {
        Some(dir) => {
            let c = open_checkpoint(dir)?;
            Model::from_params(c.config, c.params)?
        }
        None => {
            opts.config.validate()?;
            Model::new(opts.config.model(), opts.config.seed)?
        }
    };
    let mut table: CgTable = cg_table().clone();
    if opts.corrupt_cg {
        let block = table.block_mut(1, 2, 2).expect("admissible triple");
        let v = block.get(0, 0, 0);
        block.set(0, 0, 0, v + 0.05);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = so3_suite(&table, &mut rng);
    report.extend(model_suite(&model, &mut rng, opts.structures, opts.motions)?);
    Ok(report)
}
