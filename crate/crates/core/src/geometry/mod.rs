//! Molecular structures, neighbor lists and cutoff functions.

mod elements;

use thiserror::Error;

use crate::so3::{IrrepsVector, Rotation};

pub use elements::{atomic_number, symbol, MAX_ATOMIC_NUMBER, SYMBOLS};

/// Atoms closer than this are treated as coincident.
pub const MIN_DISTANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("structure has no atoms")]
    Empty,
    #[error("{what} has {got} rows but the structure has {n} atoms")]
    Length { what: &'static str, got: usize, n: usize },
    #[error("atomic number {z} at atom {index} is outside 1..=118")]
    UnknownElement { index: usize, z: u32 },
    #[error("atoms {i} and {j} coincide (distance {distance:e})")]
    Coincident { i: usize, j: usize, distance: f64 },
    #[error("cutoff must be positive, got {0}")]
    BadCutoff(f64),
    #[error("non-finite coordinate at atom {0}")]
    NonFinite(usize),
}

/// A molecule: element numbers, Cartesian positions and optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MolecularStructure {
    pub atomic_numbers: Vec<u32>,
    pub positions: Vec<[f64; 3]>,
    pub energy: Option<f64>,
    pub forces: Option<Vec<[f64; 3]>>,
}

impl MolecularStructure {
    pub fn new(atomic_numbers: Vec<u32>, positions: Vec<[f64; 3]>) -> Result<Self, GeometryError> {
        let s = MolecularStructure {
            atomic_numbers,
            positions,
            energy: None,
            forces: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_labels(mut self, energy: f64, forces: Option<Vec<[f64; 3]>>) -> Result<Self, GeometryError> {
        self.energy = Some(energy);
        self.forces = forces;
        self.validate()?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.atomic_numbers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atomic_numbers.is_empty()
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let n = self.atomic_numbers.len();
        if n == 0 {
            return Err(GeometryError::Empty);
        }
        if self.positions.len() != n {
            return Err(GeometryError::Length {
                what: "positions",
                got: self.positions.len(),
                n,
            });
        }
        if let Some(f) = &self.forces {
            if f.len() != n {
                return Err(GeometryError::Length {
                    what: "forces",
                    got: f.len(),
                    n,
                });
            }
        }
        for (index, &z) in self.atomic_numbers.iter().enumerate() {
            if z == 0 || z > MAX_ATOMIC_NUMBER {
                return Err(GeometryError::UnknownElement { index, z });
            }
        }
        for (index, p) in self.positions.iter().enumerate() {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(GeometryError::NonFinite(index));
            }
        }
        Ok(())
    }

    /// Applies `x -> R x + t` to positions and `F -> R F` to forces.
    pub fn transformed(&self, r: &Rotation, t: [f64; 3]) -> MolecularStructure {
        let positions = self
            .positions
            .iter()
            .map(|p| {
                let q = r.apply(*p);
                [q[0] + t[0], q[1] + t[1], q[2] + t[2]]
            })
            .collect();
        MolecularStructure {
            atomic_numbers: self.atomic_numbers.clone(),
            positions,
            energy: self.energy,
            forces: self.forces.as_ref().map(|f| f.iter().map(|v| r.apply(*v)).collect()),
        }
    }

    /// Atom `k` of the result is atom `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> MolecularStructure {
        MolecularStructure {
            atomic_numbers: perm.iter().map(|&k| self.atomic_numbers[k]).collect(),
            positions: perm.iter().map(|&k| self.positions[k]).collect(),
            energy: self.energy,
            forces: self.forces.as_ref().map(|f| perm.iter().map(|&k| f[k]).collect()),
        }
    }
}

/// An ordered Euclidean neighbor pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
    /// `(r_j - r_i) / r_ij`
    pub direction: [f64; 3],
}

/// An ordered pair inside a spherical neighborhood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalPair {
    pub i: usize,
    pub j: usize,
    /// Softmax-rescaled SPHC distance.
    pub rescaled: f64,
    pub weight: f64,
}

/// Both neighbor lists of one structure.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NeighborTable {
    pub euclidean: Vec<Pair>,
    pub spherical: Vec<SphericalPair>,
}

/// All ordered pairs `(i, j)`, `i != j`, with `r_ij <= r_cut`, sorted by
/// `(i, j)`.
pub fn build_neighbors(structure: &MolecularStructure, r_cut: f64) -> Result<Vec<Pair>, GeometryError> {
    if !(r_cut > 0.0) {
        return Err(GeometryError::BadCutoff(r_cut));
    }
    structure.validate()?;
    let pos = &structure.positions;
    let mut pairs = Vec::new();
    for i in 0..pos.len() {
        for j in 0..pos.len() {
            if i == j {
                continue;
            }
            let d = [pos[j][0] - pos[i][0], pos[j][1] - pos[i][1], pos[j][2] - pos[i][2]];
            let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if r < MIN_DISTANCE {
                return Err(GeometryError::Coincident {
                    i: i.min(j),
                    j: i.max(j),
                    distance: r,
                });
            }
            if r <= r_cut {
                pairs.push(Pair {
                    i,
                    j,
                    distance: r,
                    direction: [d[0] / r, d[1] / r, d[2] / r],
                });
            }
        }
    }
    Ok(pairs)
}

/// `(cos(pi r / r_cut) + 1) / 2` inside the cutoff, zero outside.
pub fn cosine_cutoff(r: f64, r_cut: f64) -> f64 {
    if r > r_cut {
        0.0
    } else {
        0.5 * ((std::f64::consts::PI * r / r_cut).cos() + 1.0)
    }
}

/// Smooth polynomial switch of order `p`: equals 1 at `x = 0` and falls to
/// zero at `x = 1` together with its first two derivatives.
pub fn polynomial_cutoff(x: f64, p: u32) -> f64 {
    if x >= 1.0 {
        return 0.0;
    }
    let p = p as f64;
    let xp = x.powf(p);
    1.0 - 0.5 * (p + 1.0) * (p + 2.0) * xp + p * (p + 2.0) * xp * x - 0.5 * p * (p + 1.0) * xp * x * x
}

/// Pairwise Euclidean distances between SPHC vectors, `n x n` row-major.
pub fn sphc_distances(chi: &[IrrepsVector]) -> Vec<f64> {
    let n = chi.len();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = chi[i]
                .data()
                .iter()
                .zip(chi[j].data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            out[i * n + j] = d;
            out[j * n + i] = d;
        }
    }
    out
}

/// Per-degree SPHC distances: one `n x n` matrix for each degree of the
/// range, in degree order.
pub fn sphc_distances_per_degree(chi: &[IrrepsVector]) -> Vec<Vec<f64>> {
    let n = chi.len();
    let Some(first) = chi.first() else {
        return Vec::new();
    };
    first
        .degrees()
        .iter()
        .map(|l| {
            let mut out = vec![0.0; n * n];
            for i in 0..n {
                for j in (i + 1)..n {
                    let d = chi[i]
                        .block(l)
                        .iter()
                        .zip(chi[j].block(l))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    out[i * n + j] = d;
                    out[j * n + i] = d;
                }
            }
            out
        })
        .collect()
}

/// Row-wise softmax of an `n x n` matrix.
pub fn softmax_rows(x: &[f64], n: usize) -> Vec<f64> {
    let mut out = x.to_vec();
    for row in out.chunks_mut(n) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    out
}

/// Spherical neighborhoods from an `n x n` SPHC distance matrix.
///
/// Distances are rescaled by a row softmax; an off-diagonal pair is kept
/// when its rescaled value is below `kappa / n` and is weighted by the
/// polynomial cutoff of the rescaled value relative to that threshold.
pub fn spherical_neighbors(x: &[f64], n: usize, kappa: f64, p: u32) -> Vec<SphericalPair> {
    if n < 2 {
        return Vec::new();
    }
    debug_assert_eq!(x.len(), n * n);
    let rescaled = softmax_rows(x, n);
    let cut = kappa / n as f64;
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let v = rescaled[i * n + j];
            if i != j && v < cut {
                pairs.push(SphericalPair {
                    i,
                    j,
                    rescaled: v,
                    weight: polynomial_cutoff(v / cut, p),
                });
            }
        }
    }
    pairs
}

/// Random molecule with `n` atoms drawn from `elements`, positions in a
/// cube sized so the density stays moderate, no two atoms closer than
/// `min_distance`.
pub fn random_structure<R: rand::Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    elements: &[u32],
    min_distance: f64,
) -> MolecularStructure {
    let side = (n as f64).cbrt() * 1.6 * min_distance.max(0.5);
    let mut positions: Vec<[f64; 3]> = Vec::with_capacity(n);
    while positions.len() < n {
        let p: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..side));
        let ok = positions.iter().all(|q| {
            let d2: f64 = (0..3).map(|k| (p[k] - q[k]).powi(2)).sum();
            d2 >= min_distance * min_distance
        });
        if ok {
            positions.push(p);
        }
    }
    let atomic_numbers = (0..n).map(|_| elements[rng.random_range(0..elements.len())]).collect();
    MolecularStructure::new(atomic_numbers, positions).expect("valid by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::DegreeRange;

    fn two_atoms(d: f64) -> MolecularStructure {
        MolecularStructure::new(vec![1, 1], vec![[0.0; 3], [0.0, 0.0, d]]).unwrap()
    }

    #[test]
    fn pairs_respect_cutoff() {
        assert!(build_neighbors(&two_atoms(6.0), 5.0).unwrap().is_empty());
        let p = build_neighbors(&two_atoms(2.0), 5.0).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!((p[0].i, p[0].j), (0, 1));
        assert_eq!(p[0].direction, [0.0, 0.0, 1.0]);
        assert_eq!(p[1].direction, [0.0, 0.0, -1.0]);
    }

    #[test]
    fn chain_interior_atoms_see_nearest_neighbors_only() {
        // 2 x 1.28 = 2.56 lies beyond 2.5, so only the +-1 neighbors count.
        let s = MolecularStructure::new(vec![6; 10], (0..10).map(|k| [0.0, 0.0, 1.28 * k as f64]).collect()).unwrap();
        let pairs = build_neighbors(&s, 2.5).unwrap();
        for i in 1..9 {
            assert_eq!(pairs.iter().filter(|p| p.i == i).count(), 2);
        }
        let wider = build_neighbors(&s, 2.6).unwrap();
        for i in 2..8 {
            assert_eq!(wider.iter().filter(|p| p.i == i).count(), 4);
        }
    }

    #[test]
    fn coincident_atoms_are_rejected() {
        assert!(matches!(
            build_neighbors(&two_atoms(1e-10), 5.0),
            Err(GeometryError::Coincident { .. })
        ));
        assert!(matches!(build_neighbors(&two_atoms(1.0), 0.0), Err(GeometryError::BadCutoff(_))));
    }

    #[test]
    fn validation_catches_bad_structures() {
        assert_eq!(MolecularStructure::new(vec![], vec![]), Err(GeometryError::Empty));
        assert!(matches!(
            MolecularStructure::new(vec![119], vec![[0.0; 3]]),
            Err(GeometryError::UnknownElement { .. })
        ));
        assert!(matches!(
            MolecularStructure::new(vec![1, 1], vec![[0.0; 3]]),
            Err(GeometryError::Length { .. })
        ));
    }

    #[test]
    fn cutoff_values() {
        assert_eq!(cosine_cutoff(0.0, 5.0), 1.0);
        assert!(cosine_cutoff(5.0, 5.0).abs() < 1e-16);
        assert!((cosine_cutoff(2.5, 5.0) - 0.5).abs() < 1e-15);
        assert_eq!(cosine_cutoff(5.1, 5.0), 0.0);
        assert_eq!(polynomial_cutoff(0.0, 6), 1.0);
        assert!(polynomial_cutoff(1.0 - 1e-12, 6).abs() < 1e-9);
        assert_eq!(polynomial_cutoff(1.0, 6), 0.0);
        // 1 - 28/64 + 48/128 - 21/256
        assert!((polynomial_cutoff(0.5, 6) - 0.85546875).abs() < 1e-15);
    }

    #[test]
    fn sphc_distance_matrix() {
        let d = DegreeRange::new(1).unwrap();
        let chi = vec![
            IrrepsVector::new(d, vec![0.0, 0.0, 0.0]).unwrap(),
            IrrepsVector::new(d, vec![3.0, 4.0, 0.0]).unwrap(),
            IrrepsVector::new(d, vec![0.0, 0.0, 1.0]).unwrap(),
        ];
        let x = sphc_distances(&chi);
        assert_eq!(x[1], 5.0);
        assert_eq!(x[3], 5.0);
        assert!((x[3 + 2] - 26f64.sqrt()).abs() < 1e-15);
        assert_eq!(x[2], 1.0);
        assert!((0..3).all(|k| x[k * 4] == 0.0));
        let same = vec![chi[1].clone(); 4];
        assert!(sphc_distances(&same).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_distinct_atoms_have_no_spherical_pairs() {
        let x = [0.0, 0.7, 0.7, 0.0];
        let s = softmax_rows(&x, 2);
        assert!(s[1] > 0.5);
        assert!(spherical_neighbors(&x, 2, 1.0, 6).is_empty());
        assert!(spherical_neighbors(&[0.0], 1, 1.0, 6).is_empty());
    }

    #[test]
    fn spherical_weights_are_in_unit_interval() {
        let n = 5;
        let x: Vec<f64> = (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                (i as f64 - j as f64).abs() * 0.4
            })
            .collect();
        let pairs = spherical_neighbors(&x, n, 1.0, 6);
        assert!(!pairs.is_empty());
        for p in pairs {
            assert!(p.i != p.j);
            assert!(p.weight > 0.0 && p.weight <= 1.0);
            assert!(p.rescaled < 1.0 / n as f64);
        }
    }
}
