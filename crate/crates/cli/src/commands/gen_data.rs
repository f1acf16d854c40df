use std::path::{Path, PathBuf};

use so3krates::data::{gen_rotor_dataset, make_splits, write_extxyz, RotorChainSpec};

use crate::CliError;

/// Settings of `gen-data`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenDataOptions {
    pub spec: RotorChainSpec,
    pub samples: usize,
    /// Defaults to 80% of `samples`.
    pub n_train: Option<usize>,
    /// Defaults to 10% of `samples`.
    pub n_valid: Option<usize>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenDataSummary {
    pub atoms_per_structure: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

/// Writes `train.xyz`, `valid.xyz` and `test.xyz` under `opts.out`.
pub fn gen_data(opts: &GenDataOptions) -> Result<GenDataSummary, CliError> {
    opts.spec.validate()?;
    if opts.samples == 0 {
        return Err(CliError::Config("samples must be positive".into()));
    }
    let n_train = opts.n_train.unwrap_or(opts.samples * 8 / 10);
    let n_valid = opts.n_valid.unwrap_or(opts.samples / 10);
    let (tr, va, te) = make_splits(opts.samples, n_train, n_valid, opts.spec.seed)?;
    let (data, _) = gen_rotor_dataset(&opts.spec, opts.samples)?;
    std::fs::create_dir_all(&opts.out)?;
    let write = |name: &str, idx: &[usize]| -> Result<(), CliError> {
        write_extxyz(&data.subset(idx), &Path::new(&opts.out).join(name))?;
        Ok(())
    };
    write("train.xyz", &tr)?;
    write("valid.xyz", &va)?;
    write("test.xyz", &te)?;
    Ok(GenDataSummary {
        atoms_per_structure: opts.spec.n_atoms(),
        train: tr.len(),
        valid: va.len(),
        test: te.len(),
    })
}
