//! Numerical checks of the architecture's structural guarantees.
//!
//! Every check reports the largest error it observed next to its threshold.
//! The checks take their inputs explicitly (coefficient table, model,
//! structures) so that a deliberately broken input can be shown to fail.

use std::fmt;

use rand::Rng;

use crate::autodiff::{relative_error, Tensor};
use crate::geometry::{random_structure, MolecularStructure};
use crate::model::{Model, ModelError};
use crate::so3::oracle::{cg_nullspace, wigner_d_least_squares};
use crate::so3::{random_rotation, real_sph, wigner_d, wigner_d_all, CgTable, DegreeRange, Rotation, MAX_DEGREE};
use crate::training::{loss_and_grad, TrainError};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub max_error: f64,
    pub threshold: f64,
}

impl Check {
    pub fn new(name: impl Into<String>, max_error: f64, threshold: f64) -> Check {
        Check {
            name: name.into(),
            max_error,
            threshold,
        }
    }

    pub fn passed(&self) -> bool {
        self.max_error.is_finite() && self.max_error < self.threshold
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<44} max error {:.3e} (threshold {:.1e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.max_error,
            self.threshold
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn extend(&mut self, other: Report) {
        self.checks.extend(other.checks);
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 && n <= 1.0 {
            return v.map(|a| a / n);
        }
    }
}

fn matvec(d: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n).map(|i| (0..n).map(|j| d[i * n + j] * x[j]).sum()).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// `Y(R n) = D(R) Y(n)` for every degree up to the table limit.
pub fn sph_equivariance<R: Rng + ?Sized>(rng: &mut R, samples: usize) -> Check {
    let mut err: f64 = 0.0;
    for _ in 0..samples {
        let r = random_rotation(rng);
        let n = random_unit(rng);
        let ds = wigner_d_all(MAX_DEGREE, &r).expect("supported degree");
        for (l, d) in ds.iter().enumerate() {
            let lhs = real_sph(l, r.apply(n)).expect("unit vector");
            let rhs = matvec(d, &real_sph(l, n).expect("unit vector"));
            err = err.max(max_abs_diff(&lhs, &rhs));
        }
    }
    Check::new("harmonics equivariance", err, 1e-9)
}

/// `D(R1 R2) = D(R1) D(R2)` and `D D^T = I`.
pub fn wigner_group_laws<R: Rng + ?Sized>(rng: &mut R, samples: usize) -> Vec<Check> {
    let mut hom: f64 = 0.0;
    let mut orth: f64 = 0.0;
    for _ in 0..samples {
        let (r1, r2) = (random_rotation(rng), random_rotation(rng));
        let d1 = wigner_d_all(MAX_DEGREE, &r1).expect("supported degree");
        let d2 = wigner_d_all(MAX_DEGREE, &r2).expect("supported degree");
        let d12 = wigner_d_all(MAX_DEGREE, &r1.compose(&r2)).expect("supported degree");
        for l in 0..=MAX_DEGREE {
            let n = 2 * l + 1;
            for i in 0..n {
                for j in 0..n {
                    let prod: f64 = (0..n).map(|k| d1[l][i * n + k] * d2[l][k * n + j]).sum();
                    hom = hom.max((prod - d12[l][i * n + j]).abs());
                    let ddt: f64 = (0..n).map(|k| d1[l][i * n + k] * d1[l][j * n + k]).sum();
                    orth = orth.max((ddt - if i == j { 1.0 } else { 0.0 }).abs());
                }
            }
        }
    }
    vec![
        Check::new("wigner-D homomorphism", hom, 1e-10),
        Check::new("wigner-D orthogonality", orth, 1e-10),
    ]
}

/// Recurrence against the least-squares fit from sampled directions.
pub fn wigner_oracle<R: Rng + ?Sized>(rng: &mut R, samples: usize) -> Check {
    let mut err: f64 = 0.0;
    for _ in 0..samples {
        let r = random_rotation(rng);
        for l in 0..=MAX_DEGREE {
            let fast = wigner_d(l, &r).expect("supported degree");
            let slow = wigner_d_least_squares(l, &r).expect("supported degree");
            err = err.max(max_abs_diff(&fast, &slow));
        }
    }
    Check::new("wigner-D vs least-squares oracle", err, 1e-9)
}

fn triples() -> impl Iterator<Item = (usize, usize, usize)> {
    (0..=MAX_DEGREE).flat_map(|l1| {
        (0..=MAX_DEGREE).flat_map(move |l2| {
            (l1.abs_diff(l2)..=(l1 + l2).min(MAX_DEGREE)).map(move |l3| (l1, l2, l3))
        })
    })
}

/// `C(D1 a, D2 b) = D3 C(a, b)` for every admissible triple.
pub fn cg_equivariance<R: Rng + ?Sized>(table: &CgTable, rng: &mut R, samples: usize) -> Check {
    let mut err: f64 = 0.0;
    for _ in 0..samples {
        let r = random_rotation(rng);
        let ds = wigner_d_all(MAX_DEGREE, &r).expect("supported degree");
        for (l1, l2, l3) in triples() {
            let a: Vec<f64> = (0..2 * l1 + 1).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..2 * l2 + 1).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lhs = table
                .contract(&matvec(&ds[l1], &a), &matvec(&ds[l2], &b), l3)
                .expect("admissible triple");
            let rhs = matvec(&ds[l3], &table.contract(&a, &b, l3).expect("admissible triple"));
            err = err.max(max_abs_diff(&lhs, &rhs));
        }
    }
    Check::new("CG contraction equivariance", err, 1e-9)
}

/// Table entries against the null-space construction, after aligning the
/// overall scale by least squares.
pub fn cg_oracle<R: Rng + ?Sized>(table: &CgTable, rng: &mut R, rotations: usize) -> Check {
    let rots: Vec<Rotation> = (0..rotations).map(|_| random_rotation(rng)).collect();
    let mut err: f64 = 0.0;
    for (l1, l2, l3) in triples() {
        let oracle = cg_nullspace(l1, l2, l3, &rots).expect("admissible triple");
        let fast = &table.block(l1, l2, l3).expect("admissible triple").data;
        let num: f64 = oracle.data.iter().zip(fast).map(|(a, b)| a * b).sum();
        let den: f64 = oracle.data.iter().map(|a| a * a).sum();
        let s = num / den;
        let aligned: Vec<f64> = oracle.data.iter().map(|a| a * s).collect();
        err = err.max(max_abs_diff(&aligned, fast));
    }
    Check::new("CG vs null-space oracle", err, 1e-8)
}

/// All table-level checks.
pub fn so3_suite<R: Rng + ?Sized>(table: &CgTable, rng: &mut R) -> Report {
    let mut checks = vec![sph_equivariance(rng, 1000)];
    checks.extend(wigner_group_laws(rng, 50));
    checks.push(wigner_oracle(rng, 5));
    checks.push(cg_equivariance(table, rng, 20));
    checks.push(cg_oracle(table, rng, 4));
    Report { checks }
}

/// Applies the block-diagonal Wigner-D matrix to every row of `chi`.
pub fn rotate_rows(chi: &Tensor, degrees: DegreeRange, r: &Rotation) -> Tensor {
    let ds = wigner_d_all(degrees.l_max(), r).expect("supported degree");
    let mut out = Tensor::zeros(chi.rows(), chi.cols());
    for i in 0..chi.rows() {
        let row = chi.row_slice(i);
        for l in degrees.iter() {
            let o = degrees.offset(l);
            let block = matvec(&ds[l], &row[o..o + 2 * l + 1]);
            for (k, v) in block.into_iter().enumerate() {
                out.set(i, o + k, v);
            }
        }
    }
    out
}

/// Largest errors seen under rigid motions.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MotionErrors {
    pub energy_rel: f64,
    pub forces: f64,
    pub chi: f64,
}

/// Compares the model on `structure` and on `motions` random rigid motions
/// of it: energy invariance, force covariance and per-layer SPHC
/// equivariance.
pub fn motion_errors<R: Rng + ?Sized>(
    model: &Model,
    structure: &MolecularStructure,
    motions: usize,
    rng: &mut R,
) -> Result<MotionErrors, ModelError> {
    let base = model.predict(structure)?;
    let (_, trace) = model.trace(structure)?;
    let degrees = model.config().degrees();
    let mut out = MotionErrors::default();
    for _ in 0..motions {
        let r = random_rotation(rng);
        let t: [f64; 3] = std::array::from_fn(|_| rng.random_range(-5.0..5.0));
        let moved = structure.transformed(&r, t);
        let p = model.predict(&moved)?;
        out.energy_rel = out
            .energy_rel
            .max((p.energy - base.energy).abs() / base.energy.abs().max(1e-12));
        for (a, b) in p.forces.iter().zip(&base.forces) {
            let rb = r.apply(*b);
            out.forces = out.forces.max(max_abs_diff(a, &rb));
        }
        let (_, moved_trace) = model.trace(&moved)?;
        for (c0, c1) in trace.chi.iter().zip(&moved_trace.chi) {
            let expected = rotate_rows(c0, degrees, &r);
            out.chi = out.chi.max(max_abs_diff(expected.data(), c1.data()));
        }
    }
    Ok(out)
}

/// Energy invariance and force equivariance under a random permutation.
pub fn permutation_error<R: Rng + ?Sized>(
    model: &Model,
    structure: &MolecularStructure,
    rng: &mut R,
) -> Result<(f64, f64), ModelError> {
    let mut perm: Vec<usize> = (0..structure.len()).collect();
    rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), rng);
    let a = model.predict(structure)?;
    let b = model.predict(&structure.permuted(&perm))?;
    let e = (a.energy - b.energy).abs() / a.energy.abs().max(1e-12);
    let mut f: f64 = 0.0;
    for (k, &src) in perm.iter().enumerate() {
        f = f.max(max_abs_diff(&b.forces[k], &a.forces[src]));
    }
    Ok((e, f))
}

/// Analytic forces against central differences of the energy.
pub fn force_fd_error(model: &Model, structure: &MolecularStructure, step: f64) -> Result<f64, ModelError> {
    let analytic = model.predict(structure)?;
    let mut fd = Vec::with_capacity(structure.len() * 3);
    for i in 0..structure.len() {
        for k in 0..3 {
            let mut plus = structure.clone();
            plus.positions[i][k] += step;
            let mut minus = structure.clone();
            minus.positions[i][k] -= step;
            fd.push(-(model.energy(&plus)? - model.energy(&minus)?) / (2.0 * step));
        }
    }
    let a: Vec<f64> = analytic.forces.iter().flatten().copied().collect();
    Ok(relative_error(&a, &fd, 1e-3))
}

/// Parameter gradient of the loss (force term included, so this exercises
/// second derivatives) against central differences on `count` randomly
/// chosen scalar parameters. Returns the worst relative error.
pub fn param_grad_error<R: Rng + ?Sized>(
    model: &Model,
    structure: &MolecularStructure,
    beta: f64,
    count: usize,
    step: f64,
    rng: &mut R,
) -> Result<f64, TrainError> {
    let (_, grads) = loss_and_grad(model, structure, beta, 0)?;
    let params = model.params();
    let mut worst: f64 = 0.0;
    let mut picked = 0;
    while picked < count {
        let k = rng.random_range(0..params.len());
        let t = &params.tensors()[k];
        let e = rng.random_range(0..t.len());
        if params.names()[k] == "embedding" {
            let row = e / t.cols() + 1;
            if !structure.atomic_numbers.contains(&(row as u32)) {
                continue;
            }
        }
        picked += 1;
        let eval = |delta: f64| -> Result<f64, TrainError> {
            let mut m = model.clone();
            let mut v = t.as_ref().clone();
            v.data_mut()[e] += delta;
            m.params_mut().set(k, v);
            Ok(loss_and_grad(&m, structure, beta, 0)?.0)
        };
        let fd = (eval(step)? - eval(-step)?) / (2.0 * step);
        let an = grads[k].data()[e];
        let scale = an.abs().max(fd.abs()).max(1e-6);
        worst = worst.max((an - fd).abs() / scale);
    }
    Ok(worst)
}

/// Architecture checks on freshly sampled structures.
pub fn model_suite<R: Rng + ?Sized>(
    model: &Model,
    rng: &mut R,
    structures: usize,
    motions: usize,
) -> Result<Report, TrainError> {
    let elements = [1, 6, 7, 8];
    let mut m = MotionErrors::default();
    let mut perm_e: f64 = 0.0;
    let mut perm_f: f64 = 0.0;
    let mut fd: f64 = 0.0;
    for k in 0..structures {
        let n = rng.random_range(3..=12);
        let s = random_structure(rng, n, &elements, 0.9);
        let e = motion_errors(model, &s, motions, rng)?;
        m.energy_rel = m.energy_rel.max(e.energy_rel);
        m.forces = m.forces.max(e.forces);
        m.chi = m.chi.max(e.chi);
        let (pe, pf) = permutation_error(model, &s, rng)?;
        perm_e = perm_e.max(pe);
        perm_f = perm_f.max(pf);
        if k < 3 {
            fd = fd.max(force_fd_error(model, &s, 1e-4)?);
        }
    }
    let s = random_structure(rng, 5, &elements, 0.9);
    let labelled = {
        let p = model.predict(&s)?;
        let f: Vec<[f64; 3]> = p.forces.iter().map(|v| v.map(|x| 0.5 * x + 0.1)).collect();
        s.clone().with_labels(p.energy + 0.3, Some(f)).map_err(ModelError::from)?
    };
    let pg = param_grad_error(model, &labelled, 0.5, 10, 1e-5, rng)?;
    Ok(Report {
        checks: vec![
            Check::new("energy rotation+translation invariance", m.energy_rel, 1e-6),
            Check::new("force rotation covariance", m.forces, 1e-6),
            Check::new("per-layer SPHC equivariance", m.chi, 1e-8),
            Check::new("energy permutation invariance", perm_e, 1e-9),
            Check::new("force permutation equivariance", perm_f, 1e-9),
            Check::new("forces vs finite differences", fd, 1e-4),
            Check::new("loss parameter gradient vs finite differences", pg, 1e-3),
        ],
    })
}
