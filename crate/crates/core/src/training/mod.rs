//! Loss, optimizer, learning-rate schedule, energy-shift fitting, metrics
//! and the training loop.

mod trainer;

use thiserror::Error;

use crate::autodiff::{Tape, Tensor, Var};
use crate::geometry::MolecularStructure;
use crate::model::{Model, ModelError, ModelParams, Recorded};
use crate::parallel::{par_map, Execution};

pub use trainer::{EpochRecord, TrainConfig, Trainer};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("structure {index} has no reference forces but the force weight is {beta}")]
    MissingForces { index: usize, beta: f64 },
    #[error("structure {index} has no reference energy")]
    MissingEnergy { index: usize },
    #[error("{0} is empty")]
    Empty(&'static str),
}

/// Combined loss for one structure from plain numbers:
/// `(1 - beta) (E - E_ref)^2 + beta / (3 n) * sum |F - F_ref|^2`.
pub fn loss_value(e_pred: f64, e_ref: f64, f_pred: &[[f64; 3]], f_ref: &[[f64; 3]], beta: f64) -> f64 {
    let de = e_pred - e_ref;
    let mut force_term = 0.0;
    if beta > 0.0 {
        let sq: f64 = f_pred
            .iter()
            .zip(f_ref)
            .flat_map(|(a, b)| (0..3).map(move |k| (a[k] - b[k]).powi(2)))
            .sum();
        force_term = beta * sq / (3.0 * f_pred.len() as f64);
    }
    (1.0 - beta) * de * de + force_term
}

/// Records the loss of one structure on `tape`. The force term is built
/// from the position gradient of the energy, so parameter gradients of the
/// returned loss are second-order derivatives of the network.
pub fn record_loss<'t>(
    model: &Model,
    tape: &'t Tape,
    structure: &MolecularStructure,
    beta: f64,
    index: usize,
) -> Result<(Var<'t>, Recorded<'t>), TrainError> {
    let e_ref = structure.energy.ok_or(TrainError::MissingEnergy { index })?;
    let rec = model.record(tape, structure, true, None)?;
    let mut loss = rec
        .energy
        .add_scalar(-e_ref)
        .map_err(ModelError::from)?
        .powi(2)
        .map_err(ModelError::from)?
        .scale(1.0 - beta)
        .map_err(ModelError::from)?;
    if beta > 0.0 {
        let f_ref = structure.forces.as_ref().ok_or(TrainError::MissingForces { index, beta })?;
        let grad = tape.grad(rec.energy, &[rec.positions]).map_err(ModelError::from)?;
        // F_pred - F_ref = -(grad + F_ref)
        let target = tape.constant(Tensor::from_rows(f_ref)).map_err(ModelError::from)?;
        let n = structure.len() as f64;
        let term = grad[0]
            .add(target)
            .and_then(|d| d.powi(2))
            .and_then(|d| d.sum_all())
            .and_then(|d| d.scale(beta / (3.0 * n)))
            .map_err(ModelError::from)?;
        loss = loss.add(term).map_err(ModelError::from)?;
    }
    Ok((loss, rec))
}

/// Loss of one structure and its gradient with respect to every parameter.
pub fn loss_and_grad(
    model: &Model,
    structure: &MolecularStructure,
    beta: f64,
    index: usize,
) -> Result<(f64, Vec<Tensor>), TrainError> {
    let tape = Tape::new();
    let (loss, rec) = record_loss(model, &tape, structure, beta, index)?;
    let grads = tape.grad(loss, &rec.params).map_err(ModelError::from)?;
    Ok((loss.item(), grads.iter().map(|g| g.value().as_ref().clone()).collect()))
}

/// Mean loss and mean gradient over a batch. Members are evaluated
/// independently and reduced in input order.
pub fn batch_loss_and_grad(
    model: &Model,
    batch: &[(usize, &MolecularStructure)],
    beta: f64,
    exec: Execution,
) -> Result<(f64, Vec<Tensor>), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::Empty("batch"));
    }
    let results = par_map(batch, exec, |(index, s)| loss_and_grad(model, s, beta, *index));
    let mut loss = 0.0;
    let mut total: Option<Vec<Tensor>> = None;
    for r in results {
        let (l, g) = r?;
        loss += l;
        total = Some(match total {
            None => g,
            Some(mut acc) => {
                for (a, b) in acc.iter_mut().zip(&g) {
                    a.data_mut().iter_mut().zip(b.data()).for_each(|(x, y)| *x += y);
                }
                acc
            }
        });
    }
    let m = batch.len() as f64;
    let mut grads = total.expect("non-empty batch");
    for g in &mut grads {
        g.data_mut().iter_mut().for_each(|x| *x /= m);
    }
    Ok((loss / m, grads))
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &ModelParams) -> Adam {
        let zeros: Vec<Tensor> = params
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn update(&mut self, params: &mut ModelParams, grads: &[Tensor], lr: f64) {
        assert_eq!(grads.len(), params.len());
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for (k, g) in grads.iter().enumerate() {
            let mut p = params.tensors()[k].as_ref().clone();
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (((pv, gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut())
            {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let mhat = *mv / c1;
                let vhat = *vv / c2;
                *pv -= lr * mhat / (vhat.sqrt() + self.eps);
            }
            params.set(k, p);
        }
    }
}

/// Step decay: `lr * factor^floor(epoch / interval)`.
pub fn lr_schedule(epoch: usize, lr: f64, factor: f64, interval: usize) -> f64 {
    lr * factor.powi((epoch / interval.max(1)) as i32)
}

/// Constant `c` minimising `sum (E_pred + c - E_ref)^2`, i.e.
/// `mean(E_ref - E_pred)`.
pub fn fit_energy_shift(pred: &[f64], refs: &[f64]) -> Result<f64, TrainError> {
    if pred.is_empty() || pred.len() != refs.len() {
        return Err(TrainError::Empty("energy list"));
    }
    Ok(refs.iter().zip(pred).map(|(r, p)| r - p).sum::<f64>() / pred.len() as f64)
}

/// Mean over groups of the per-group mean of `values`; every group weighs
/// the same regardless of how many entries it holds.
pub fn grouped_mean(values: &[(usize, f64)]) -> f64 {
    let mut groups: std::collections::BTreeMap<usize, (f64, usize)> = Default::default();
    for &(g, v) in values {
        let e = groups.entry(g).or_default();
        e.0 += v;
        e.1 += 1;
    }
    if groups.is_empty() {
        return 0.0;
    }
    groups.values().map(|(s, c)| s / *c as f64).sum::<f64>() / groups.len() as f64
}

pub fn mean_absolute_error(pred: &[f64], refs: &[f64]) -> f64 {
    let n = pred.len().max(1) as f64;
    pred.iter().zip(refs).map(|(a, b)| (a - b).abs()).sum::<f64>() / n
}

/// Coefficient of determination of `pred` against `refs`.
pub fn r_squared(pred: &[f64], refs: &[f64]) -> f64 {
    let n = refs.len() as f64;
    let mean = refs.iter().sum::<f64>() / n;
    let ss_tot: f64 = refs.iter().map(|r| (r - mean).powi(2)).sum();
    let ss_res: f64 = pred.iter().zip(refs).map(|(p, r)| (r - p).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

/// Predictions and errors of a model on a set of structures.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub energies: Vec<f64>,
    pub reference_energies: Vec<f64>,
    /// Per-structure componentwise force MAE, when reference forces exist.
    pub force_errors: Option<Vec<f64>>,
}

impl Evaluation {
    pub fn energy_mae(&self, shift: f64) -> f64 {
        let shifted: Vec<f64> = self.energies.iter().map(|e| e + shift).collect();
        mean_absolute_error(&shifted, &self.reference_energies)
    }

    /// Mean of the per-structure force MAEs.
    pub fn force_mae(&self) -> Option<f64> {
        self.force_errors
            .as_ref()
            .map(|e| grouped_mean(&e.iter().copied().enumerate().collect::<Vec<_>>()))
    }

    pub fn energy_r2(&self, shift: f64) -> f64 {
        let shifted: Vec<f64> = self.energies.iter().map(|e| e + shift).collect();
        r_squared(&shifted, &self.reference_energies)
    }

    /// Shift fitted on these predictions.
    pub fn self_shift(&self) -> f64 {
        fit_energy_shift(&self.energies, &self.reference_energies).unwrap_or(0.0)
    }
}

/// Evaluates `model` on every structure.
pub fn evaluate(model: &Model, data: &[MolecularStructure], exec: Execution) -> Result<Evaluation, TrainError> {
    if data.is_empty() {
        return Err(TrainError::Empty("dataset"));
    }
    let preds = par_map(data, exec, |s| model.predict(s));
    let mut energies = Vec::new();
    let mut refs = Vec::new();
    let mut force_errors = Some(Vec::new());
    for (index, (p, s)) in preds.into_iter().zip(data).enumerate() {
        let p = p?;
        energies.push(p.energy);
        refs.push(s.energy.ok_or(TrainError::MissingEnergy { index })?);
        match (&s.forces, force_errors.as_mut()) {
            (Some(f), Some(errs)) => {
                let sum: f64 = p
                    .forces
                    .iter()
                    .zip(f)
                    .flat_map(|(a, b)| (0..3).map(move |k| (a[k] - b[k]).abs()))
                    .sum();
                errs.push(sum / (3.0 * s.len() as f64));
            }
            _ => force_errors = None,
        }
    }
    Ok(Evaluation {
        energies,
        reference_energies: refs,
        force_errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_limits() {
        let f = [[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]];
        let g = [[1.0, 2.0, 4.0], [0.0, 0.0, 0.0]];
        assert_eq!(loss_value(1.0, 1.0, &f, &f, 0.5), 0.0);
        assert_eq!(loss_value(3.0, 1.0, &f, &g, 0.0), 4.0);
        assert!((loss_value(3.0, 1.0, &f, &g, 1.0) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_by_hand() {
        use crate::model::ModelConfig;
        let config = ModelConfig {
            features: 4,
            n_layers: 1,
            l_max: 1,
            n_rbf: 2,
            heads: 1,
            radial_hidden: 2,
            spherical_hidden: 2,
            ..ModelConfig::default()
        };
        let mut params = ModelParams::init(&config, 0).unwrap();
        let before = params.clone();
        let mut adam = Adam::new(&params);
        let zero: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect();
        adam.update(&mut params, &zero, 1e-3);
        assert_eq!(params, before);
        assert_eq!(adam.step, 1);

        let mut grads = zero.clone();
        grads[0].data_mut()[0] = 0.25;
        grads[0].data_mut()[1] = -4.0;
        let mut adam = Adam::new(&params);
        adam.update(&mut params, &grads, 1e-3);
        // m = 0.1 g, v = 0.001 g^2; corrected: g and g^2, step = lr g / (|g| + eps)
        let d0 = before.tensors()[0].data()[0] - params.tensors()[0].data()[0];
        let d1 = before.tensors()[0].data()[1] - params.tensors()[0].data()[1];
        assert!((d0 - 1e-3 * 0.25 / (0.25 + 1e-8)).abs() < 1e-15);
        assert!((d1 + 1e-3 * 4.0 / (4.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(params.tensors()[0].data()[2], before.tensors()[0].data()[2]);
    }

    #[test]
    fn schedule_steps() {
        assert_eq!(lr_schedule(0, 1e-3, 0.5, 1000), 1e-3);
        assert_eq!(lr_schedule(999, 1e-3, 0.5, 1000), 1e-3);
        assert_eq!(lr_schedule(1000, 1e-3, 0.5, 1000), 5e-4);
        assert_eq!(lr_schedule(2500, 1e-3, 0.5, 1000), 2.5e-4);
    }

    #[test]
    fn shift_and_metrics() {
        let refs = [1.0, 2.0, 3.5];
        let pred: Vec<f64> = refs.iter().map(|r| r - 5.0).collect();
        assert!((fit_energy_shift(&pred, &refs).unwrap() - 5.0).abs() < 1e-14);
        assert_eq!(fit_energy_shift(&refs, &refs).unwrap(), 0.0);
        assert!(fit_energy_shift(&[], &[]).is_err());
        assert_eq!(mean_absolute_error(&refs, &refs), 0.0);
        let off: Vec<f64> = refs.iter().map(|r| r + 1.0).collect();
        assert!((mean_absolute_error(&off, &refs) - 1.0).abs() < 1e-15);
        // Group 0 has mean 2 over three entries, group 1 mean 4 over one.
        assert_eq!(grouped_mean(&[(0, 1.0), (0, 2.0), (0, 3.0), (1, 4.0)]), 3.0);
    }

    #[test]
    fn shift_minimises_squared_error() {
        let refs = [0.3, -1.2, 2.2, 0.9];
        let pred = [1.0, 0.1, 2.0, -0.4];
        let c = fit_energy_shift(&pred, &refs).unwrap();
        let sse = |c: f64| pred.iter().zip(&refs).map(|(p, r)| (p + c - r).powi(2)).sum::<f64>();
        for k in -200..=200 {
            let other = c + k as f64 * 0.01;
            assert!(sse(c) <= sse(other) + 1e-15);
        }
    }
}
