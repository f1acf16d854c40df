use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use so3krates::autodiff::Tensor;
use so3krates::data::{read_extxyz, Dataset};
use so3krates::model::{load_checkpoint, save_checkpoint, Checkpoint, Model};
use so3krates::training::{Adam, EpochRecord, Trainer};

use crate::{CliError, RunConfig};

pub const METRICS_HEADER: [&str; 5] = ["epoch", "lr", "train_loss", "val_E_MAE", "val_F_MAE"];

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub final_epoch: usize,
    pub optimizer_steps: u64,
    pub first_loss: Option<f64>,
    pub last_loss: Option<f64>,
    pub out_dir: PathBuf,
}

fn data_file(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

/// Loads a checkpoint directory, reporting a missing one as a configuration
/// error.
pub fn open_checkpoint(dir: &Path) -> Result<Checkpoint, CliError> {
    if !dir.join("manifest.txt").is_file() {
        return Err(CliError::Config(format!("no checkpoint at {}", dir.display())));
    }
    Ok(load_checkpoint(dir)?)
}

fn save(dir: &Path, trainer: &Trainer, meta: Vec<(String, String)>) -> Result<(), CliError> {
    let names = trainer.model.params().names();
    let mut extra: Vec<(String, Tensor)> = Vec::with_capacity(2 * names.len());
    for (k, n) in names.iter().enumerate() {
        extra.push((format!("adam.m.{n}"), trainer.adam.m[k].clone()));
        extra.push((format!("adam.v.{n}"), trainer.adam.v[k].clone()));
    }
    let ckpt = Checkpoint {
        config: trainer.model.config().clone(),
        params: trainer.model.params().clone(),
        extra,
        meta,
    };
    save_checkpoint(dir, &ckpt)?;
    Ok(())
}

fn restore(cfg: &RunConfig, dir: &Path) -> Result<(Trainer, Option<f64>), CliError> {
    let ckpt = open_checkpoint(dir)?;
    if ckpt.config != cfg.model() {
        return Err(CliError::Config(
            "model settings differ from the checkpoint being resumed".into(),
        ));
    }
    let model = Model::from_params(ckpt.config.clone(), ckpt.params.clone())?;
    let mut adam = Adam::new(model.params());
    for (k, n) in model.params().names().iter().enumerate() {
        let (Some(m), Some(v)) = (ckpt.extra(&format!("adam.m.{n}")), ckpt.extra(&format!("adam.v.{n}"))) else {
            return Err(CliError::Data(format!("checkpoint lacks optimizer state for {n}")));
        };
        adam.m[k] = m.clone();
        adam.v[k] = v.clone();
    }
    let num = |key: &str| -> Result<&str, CliError> {
        ckpt.meta(key)
            .ok_or_else(|| CliError::Data(format!("checkpoint lacks {key}")))
    };
    adam.step = num("step")?
        .parse()
        .map_err(|_| CliError::Data("bad step in checkpoint".into()))?;
    let epoch: usize = num("epoch")?
        .parse()
        .map_err(|_| CliError::Data("bad epoch in checkpoint".into()))?;
    let best = ckpt.meta("best_loss").and_then(|v| v.parse().ok());
    Ok((Trainer::resume(model, cfg.train(), adam, epoch)?, best))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Trains a model as described by `cfg`. With `resume`, continues from
/// `out_dir/last`, keeping the optimizer state and step counter.
pub fn train(cfg: &RunConfig, resume: bool) -> Result<TrainSummary, CliError> {
    cfg.validate()?;
    let train_path = data_file(&cfg.data_dir, "train.xyz");
    let valid_path = data_file(&cfg.data_dir, "valid.xyz");
    if !train_path.is_file() {
        return Err(CliError::Config(format!("training data {} not found", train_path.display())));
    }
    let last_dir = cfg.out_dir.join("last");
    let best_dir = cfg.out_dir.join("best");
    if resume && !last_dir.join("manifest.txt").is_file() {
        return Err(CliError::Config(format!("nothing to resume in {}", cfg.out_dir.display())));
    }

    let train_set = read_extxyz(&train_path)?;
    let valid_set = if valid_path.is_file() {
        read_extxyz(&valid_path)?
    } else {
        Dataset {
            structures: Vec::new(),
            energy_unit: train_set.energy_unit.clone(),
            length_unit: train_set.length_unit.clone(),
        }
    };
    if train_set.is_empty() {
        return Err(CliError::Data(format!("{} holds no structures", train_path.display())));
    }

    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join("config.toml"), cfg.to_toml())?;
    let hash = cfg.hash();

    let (mut trainer, mut best) = if resume {
        restore(cfg, &last_dir)?
    } else {
        (Trainer::new(Model::new(cfg.model(), cfg.seed)?, cfg.train())?, None)
    };
    trainer.check_labels(&train_set.structures)?;
    trainer.check_labels(&valid_set.structures)?;

    let metrics_path = cfg.out_dir.join("metrics.csv");
    let append = resume && metrics_path.is_file();
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(&metrics_path)?;
    let mut csv = csv::Writer::from_writer(file);
    if !append {
        csv.write_record(METRICS_HEADER)?;
    }

    let start = trainer.epoch;
    let mut first_loss = None;
    let mut last_loss = None;
    while !trainer.finished() {
        let r: EpochRecord = trainer.next_epoch(&train_set.structures, &valid_set.structures)?;
        if !r.train_loss.is_finite() {
            return Err(CliError::Numeric(format!("training loss became {} at epoch {}", r.train_loss, r.epoch)));
        }
        first_loss.get_or_insert(r.train_loss);
        last_loss = Some(r.train_loss);
        csv.write_record([
            r.epoch.to_string(),
            r.lr.to_string(),
            r.train_loss.to_string(),
            fmt_opt(r.valid_energy_mae),
            fmt_opt(r.valid_force_mae),
        ])?;
        csv.flush()?;

        let checkpoint_due = r.epoch.is_multiple_of(cfg.valid_every) || trainer.finished();
        if checkpoint_due {
            let monitor = r.valid_loss.unwrap_or(r.train_loss);
            let improved = best.is_none_or(|b| monitor < b);
            if improved {
                best = Some(monitor);
            }
            let meta = vec![
                ("epoch".to_string(), trainer.epoch.to_string()),
                ("step".to_string(), trainer.adam.step.to_string()),
                ("best_loss".to_string(), best.expect("set above").to_string()),
                ("config_hash".to_string(), hash.clone()),
            ];
            save(&last_dir, &trainer, meta.clone())?;
            if improved {
                save(&best_dir, &trainer, meta)?;
            }
        }
    }
    Ok(TrainSummary {
        epochs_run: trainer.epoch - start,
        final_epoch: trainer.epoch,
        optimizer_steps: trainer.adam.step,
        first_loss,
        last_loss,
        out_dir: cfg.out_dir.clone(),
    })
}
