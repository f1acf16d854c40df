//! Rotation group toolkit: real spherical harmonics, real Clebsch-Gordan
//! coefficients, Wigner-D matrices and the irreps containers built on them.
//!
//! Conventions used throughout the crate:
//!
//! * components of degree `l` are ordered `m = -l..=l`;
//! * the degree-1 block of the harmonics is `(y, z, x)`;
//! * a rotation `R` acts on degree-`l` data as `Y^l(R n) = D^l(R) Y^l(n)`.

mod cg;
mod harmonics;
pub mod oracle;
mod rotation;
mod wigner;

use thiserror::Error;

pub use cg::{cg_table, contract, CgBlock, CgTable};
pub use harmonics::{harmonic_tables, real_sph, sph_all, HarmonicPolynomials, Monomial};
pub use rotation::{axis_angle, random_rotation, Rotation};
pub use wigner::{wigner_d, wigner_d_all};

/// Largest degree supported by the coefficient tables.
pub const MAX_DEGREE: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum So3Error {
    #[error("degree {degree} exceeds the supported maximum")]
    DegreeTooLarge { degree: usize },
    #[error("direction has norm {norm}, expected a unit vector")]
    NotUnit { norm: f64 },
    #[error("degrees ({l1}, {l2}, {l3}) violate the triangle rule")]
    Triangle { l1: usize, l2: usize, l3: usize },
    #[error("expected {expected} components, got {got}")]
    Length { expected: usize, got: usize },
    #[error("matrix is not a proper rotation (det {det}, orthogonality error {ortho})")]
    NotRotation { det: f64, ortho: f64 },
}

/// The set of degrees carried by an equivariant feature.
///
/// `l_max = 0` means the invariant degree alone. Any larger `l_max` gives
/// the degrees `1..=l_max`; the invariant part then lives in the scalar
/// features instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DegreeRange {
    l_max: usize,
}

impl DegreeRange {
    pub fn new(l_max: usize) -> Result<Self, So3Error> {
        if l_max > MAX_DEGREE {
            return Err(So3Error::DegreeTooLarge { degree: l_max });
        }
        Ok(DegreeRange { l_max })
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn min_degree(&self) -> usize {
        if self.l_max == 0 {
            0
        } else {
            1
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + Clone {
        self.min_degree()..=self.l_max
    }

    /// Number of distinct degrees.
    pub fn count(&self) -> usize {
        self.l_max + 1 - self.min_degree()
    }

    /// Total number of components, `sum (2l + 1)`.
    pub fn dim(&self) -> usize {
        self.iter().map(|l| 2 * l + 1).sum()
    }

    pub fn contains(&self, l: usize) -> bool {
        l >= self.min_degree() && l <= self.l_max
    }

    /// Offset of degree `l` inside a concatenated vector.
    pub fn offset(&self, l: usize) -> usize {
        debug_assert!(self.contains(l));
        self.iter().take_while(|&k| k < l).map(|k| 2 * k + 1).sum()
    }

    /// Position of `l` in iteration order.
    pub fn index(&self, l: usize) -> usize {
        l - self.min_degree()
    }
}

/// A concatenation of one block per degree of a [`DegreeRange`].
#[derive(Debug, Clone, PartialEq)]
pub struct IrrepsVector {
    degrees: DegreeRange,
    data: Vec<f64>,
}

impl IrrepsVector {
    pub fn new(degrees: DegreeRange, data: Vec<f64>) -> Result<Self, So3Error> {
        if data.len() != degrees.dim() {
            return Err(So3Error::Length {
                expected: degrees.dim(),
                got: data.len(),
            });
        }
        Ok(IrrepsVector { degrees, data })
    }

    pub fn zeros(degrees: DegreeRange) -> Self {
        IrrepsVector {
            degrees,
            data: vec![0.0; degrees.dim()],
        }
    }

    pub fn degrees(&self) -> DegreeRange {
        self.degrees
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn block(&self, l: usize) -> &[f64] {
        let o = self.degrees.offset(l);
        &self.data[o..o + 2 * l + 1]
    }

    /// Euclidean norm of every block, in degree order.
    pub fn norms(&self) -> Vec<f64> {
        self.degrees
            .iter()
            .map(|l| self.block(l).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    /// Applies `D^l(R)` blockwise.
    pub fn rotate(&self, r: &Rotation) -> IrrepsVector {
        let mut data = Vec::with_capacity(self.data.len());
        for l in self.degrees.iter() {
            let d = wigner_d(l, r).expect("degree within range");
            let block = self.block(l);
            let n = 2 * l + 1;
            for i in 0..n {
                data.push((0..n).map(|j| d[i * n + j] * block[j]).sum());
            }
        }
        IrrepsVector {
            degrees: self.degrees,
            data,
        }
    }
}
