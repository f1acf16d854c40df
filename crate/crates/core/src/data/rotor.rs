//! Synthetic rotor chain: a straight carbon chain capped by two CH2 groups
//! whose energy depends only on the relative twist of the caps.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::MolecularStructure;
use crate::so3::{random_rotation, Rotation};

use super::{DataError, Dataset};

#[derive(Debug, Clone, PartialEq)]
pub struct RotorChainSpec {
    /// Number of chain carbons; even and at least 4.
    pub n_carbons: usize,
    /// C-C spacing in Angstrom.
    pub cc: f64,
    /// C-H bond length in Angstrom.
    pub ch: f64,
    /// H-C-H angle in degrees.
    pub hch_deg: f64,
    /// Energy amplitude `A`.
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for RotorChainSpec {
    fn default() -> Self {
        RotorChainSpec {
            n_carbons: 10,
            cc: 1.28,
            ch: 1.09,
            hch_deg: 120.0,
            amplitude: 0.5,
            seed: 0,
        }
    }
}

impl RotorChainSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.n_carbons < 4 || !self.n_carbons.is_multiple_of(2) {
            return Err(DataError::Spec(format!(
                "n_carbons must be even and at least 4, got {}",
                self.n_carbons
            )));
        }
        if !(self.cc > 0.0 && self.ch > 0.0 && self.hch_deg > 0.0 && self.hch_deg < 180.0) {
            return Err(DataError::Spec("bond lengths and angle out of range".into()));
        }
        Ok(())
    }

    pub fn n_atoms(&self) -> usize {
        self.n_carbons + 4
    }
}

type V3 = [f64; 3];

fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: V3, b: V3) -> V3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn scale(a: V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Dihedral angle of `p0-p1-p2-p3` and its gradient with respect to each
/// point.
pub fn dihedral_with_grad(p: [V3; 4]) -> (f64, [V3; 4]) {
    let b1 = sub(p[1], p[0]);
    let b2 = sub(p[2], p[1]);
    let b3 = sub(p[3], p[2]);
    let n1 = cross(b1, b2);
    let n2 = cross(b2, b3);
    let lb2 = dot(b2, b2).sqrt();
    let phi = (lb2 * dot(b1, n2)).atan2(dot(n1, n2));
    let g0 = scale(n1, -lb2 / dot(n1, n1));
    let g3 = scale(n2, lb2 / dot(n2, n2));
    let r1 = dot(b1, b2) / (lb2 * lb2);
    let r3 = dot(b3, b2) / (lb2 * lb2);
    let g1: V3 = std::array::from_fn(|k| r3 * g3[k] - (1.0 + r1) * g0[k]);
    let g2: V3 = std::array::from_fn(|k| r1 * g0[k] - (1.0 + r3) * g3[k]);
    (phi, [g0, g1, g2, g3])
}

/// Atom order: carbons `0..n`, then the two hydrogens on carbon 0, then the
/// two on carbon `n - 1`.
fn cap_pairs(n_carbons: usize) -> [(usize, usize); 4] {
    let (l1, l2, r1, r2) = (n_carbons, n_carbons + 1, n_carbons + 2, n_carbons + 3);
    [(l1, r1), (l1, r2), (l2, r1), (l2, r2)]
}

/// Surrogate energy `A/4 * sum cos(2 phi_ab)` over the four cross-cap
/// H-C...C-H dihedrals, and its forces. For an ideal chain twisted by
/// `theta` this equals `A cos(2 theta)`.
pub fn rotor_energy_forces(positions: &[V3], n_carbons: usize, amplitude: f64) -> (f64, Vec<V3>) {
    let mut energy = 0.0;
    let mut forces = vec![[0.0; 3]; positions.len()];
    let (c0, cn) = (0, n_carbons - 1);
    for (a, b) in cap_pairs(n_carbons) {
        let idx = [a, c0, cn, b];
        let (phi, grad) = dihedral_with_grad(idx.map(|k| positions[k]));
        energy += 0.25 * amplitude * (2.0 * phi).cos();
        let de_dphi = -0.5 * amplitude * (2.0 * phi).sin();
        for (k, g) in idx.iter().zip(grad) {
            for c in 0..3 {
                forces[*k][c] -= de_dphi * g[c];
            }
        }
    }
    (energy, forces)
}

/// Ideal chain along z, right cap twisted by `theta`, centred at the origin
/// and then rotated by `rotation`.
pub fn rotor_geometry(spec: &RotorChainSpec, theta: f64, rotation: &Rotation) -> Result<Vec<V3>, DataError> {
    spec.validate()?;
    let n = spec.n_carbons;
    let half = (spec.hch_deg.to_radians() / 2.0).sin_cos();
    let mut pos: Vec<V3> = (0..n).map(|k| [0.0, 0.0, spec.cc * k as f64]).collect();
    let z0 = 0.0;
    let zn = spec.cc * (n - 1) as f64;
    for sign in [1.0, -1.0] {
        pos.push([sign * spec.ch * half.0, 0.0, z0 - spec.ch * half.1]);
    }
    let (s, c) = theta.sin_cos();
    for sign in [1.0, -1.0] {
        let r = sign * spec.ch * half.0;
        pos.push([r * c, r * s, zn + spec.ch * half.1]);
    }
    let m = pos.len() as f64;
    let centre: V3 = std::array::from_fn(|k| pos.iter().map(|p| p[k]).sum::<f64>() / m);
    Ok(pos.into_iter().map(|p| rotation.apply(sub(p, centre))).collect())
}

/// One labelled rotor structure.
pub fn gen_rotor_chain(spec: &RotorChainSpec, theta: f64, rotation: &Rotation) -> Result<MolecularStructure, DataError> {
    let positions = rotor_geometry(spec, theta, rotation)?;
    let (energy, forces) = rotor_energy_forces(&positions, spec.n_carbons, spec.amplitude);
    let mut numbers = vec![6; spec.n_carbons];
    numbers.extend([1; 4]);
    let s = MolecularStructure::new(numbers, positions)?.with_labels(energy, Some(forces))?;
    Ok(s)
}

/// `samples` structures with twist uniform on `[0, pi)` and a uniformly
/// random orientation each, drawn from `spec.seed`.
pub fn gen_rotor_dataset(spec: &RotorChainSpec, samples: usize) -> Result<(Dataset, Vec<f64>), DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut structures = Vec::with_capacity(samples);
    let mut thetas = Vec::with_capacity(samples);
    for _ in 0..samples {
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        let rot = random_rotation(&mut rng);
        structures.push(gen_rotor_chain(spec, theta, &rot)?);
        thetas.push(theta);
    }
    Ok((
        Dataset {
            structures,
            energy_unit: "model-unit".into(),
            length_unit: "Angstrom".into(),
        },
        thetas,
    ))
}
