//! Slow reference constructions used to cross-check the fast tables.
//!
//! Nothing here depends on the Clebsch-Gordan tables: Wigner-D matrices are
//! fitted by least squares from sampled harmonics, and coupling coefficients
//! are recovered as the null space of the equivariance constraint.

use nalgebra::{DMatrix, SymmetricEigen};

use super::harmonics::eval_unchecked;
use super::{Rotation, So3Error, MAX_DEGREE};

/// Quasi-uniform points on the unit sphere (Fibonacci lattice).
pub fn sphere_points(count: usize) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|k| {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * k as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

/// `D^l(R)` fitted as `B A^+`, where the columns of `A` are `Y^l(n_k)` and
/// those of `B` are `Y^l(R n_k)`.
pub fn wigner_d_least_squares(l: usize, r: &Rotation) -> Result<Vec<f64>, So3Error> {
    if l > MAX_DEGREE {
        return Err(So3Error::DegreeTooLarge { degree: l });
    }
    let d = 2 * l + 1;
    let pts = sphere_points(4 * d * d + 16);
    let a = DMatrix::from_fn(d, pts.len(), |m, k| eval_unchecked(l, pts[k])[m]);
    let b = DMatrix::from_fn(d, pts.len(), |m, k| eval_unchecked(l, r.apply(pts[k]))[m]);
    let pinv = a.pseudo_inverse(1e-12).expect("pseudo-inverse with positive epsilon");
    let fit = b * pinv;
    Ok((0..d * d).map(|k| fit[(k / d, k % d)]).collect())
}

/// Result of the null-space construction.
#[derive(Debug, Clone)]
pub struct NullspaceCg {
    /// Coefficients in the same layout as [`super::CgBlock::data`], scaled
    /// so that the squared entries sum to `2 l3 + 1`.
    pub data: Vec<f64>,
    /// Smallest eigenvalue of the stacked constraint (ideally zero).
    pub residual: f64,
    /// Second-smallest eigenvalue; a clear gap means the solution is unique
    /// up to sign.
    pub gap: f64,
}

/// Recovers the real coupling coefficients for `(l1, l2, l3)` as the unique
/// (up to sign) tensor satisfying `C(D1 v, D2 w) = D3 C(v, w)` for every
/// rotation in `rotations`.
pub fn cg_nullspace(l1: usize, l2: usize, l3: usize, rotations: &[Rotation]) -> Result<NullspaceCg, So3Error> {
    if l3 < l1.abs_diff(l2) || l3 > l1 + l2 {
        return Err(So3Error::Triangle { l1, l2, l3 });
    }
    let (d1, d2, d3) = (2 * l1 + 1, 2 * l2 + 1, 2 * l3 + 1);
    let n = d1 * d2 * d3;
    let idx = |a: usize, b: usize, c: usize| (a * d2 + b) * d3 + c;
    let mut gram = DMatrix::<f64>::zeros(n, n);
    for r in rotations {
        let w1 = wigner_d_least_squares(l1, r)?;
        let w2 = wigner_d_least_squares(l2, r)?;
        let w3 = wigner_d_least_squares(l3, r)?;
        let mut m = DMatrix::<f64>::zeros(n, n);
        for a in 0..d1 {
            for b in 0..d2 {
                for k in 0..d3 {
                    let row = idx(a, b, k);
                    for m1 in 0..d1 {
                        for m2 in 0..d2 {
                            m[(row, idx(m1, m2, k))] += w1[m1 * d1 + a] * w2[m2 * d2 + b];
                        }
                    }
                    for j in 0..d3 {
                        m[(row, idx(a, b, j))] -= w3[k * d3 + j];
                    }
                }
            }
        }
        gram += m.transpose() * &m;
    }
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let v = eig.eigenvectors.column(order[0]);
    let scale = (d3 as f64).sqrt() / v.norm();
    Ok(NullspaceCg {
        data: v.iter().map(|x| x * scale).collect(),
        residual: eig.eigenvalues[order[0]],
        gap: if n > 1 { eig.eigenvalues[order[1]] } else { f64::INFINITY },
    })
}

/// Largest entrywise difference between `a` and `b` after choosing the sign
/// of `a` that fits best.
pub fn max_diff_up_to_sign(a: &[f64], b: &[f64]) -> f64 {
    let plus = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let minus = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x + y).abs()));
    plus.min(minus)
}
