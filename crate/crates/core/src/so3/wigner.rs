use super::cg::cg_table;
use super::{Rotation, So3Error, MAX_DEGREE};

// Degree-1 components are (y, z, x).
const PERM: [usize; 3] = [1, 2, 0];

/// Wigner-D matrices for degrees `0..=l_max`, each `(2l+1)^2` row-major.
///
/// Built by coupling `D^{l-1}` with `D^1` through the Clebsch-Gordan block
/// `(l-1, 1, l)`, which projects the tensor product onto its top degree.
pub fn wigner_d_all(l_max: usize, r: &Rotation) -> Result<Vec<Vec<f64>>, So3Error> {
    if l_max > MAX_DEGREE {
        return Err(So3Error::DegreeTooLarge { degree: l_max });
    }
    Rotation::new(r.0)?;
    let mut out = vec![vec![1.0]];
    if l_max == 0 {
        return Ok(out);
    }
    let d1: Vec<f64> = (0..9).map(|k| r.0[PERM[k / 3]][PERM[k % 3]]).collect();
    out.push(d1.clone());
    for l in 2..=l_max {
        let prev = &out[l - 1];
        let (dp, dn) = (2 * l - 1, 2 * l + 1);
        let block = cg_table().block(l - 1, 1, l)?;
        // kron[(a*3+b), (c*3+d)] = prev[a][c] * d1[b][d]
        let kd = dp * 3;
        let mut kron = vec![0.0; kd * kd];
        for a in 0..dp {
            for b in 0..3 {
                for c in 0..dp {
                    for d in 0..3 {
                        kron[(a * 3 + b) * kd + c * 3 + d] = prev[a * dp + c] * d1[b * 3 + d];
                    }
                }
            }
        }
        // kq = kron * Q, Q[(a*3+b), m] = block(a, b, m)
        let mut kq = vec![0.0; kd * dn];
        for row in 0..kd {
            for col in 0..kd {
                let k = kron[row * kd + col];
                if k == 0.0 {
                    continue;
                }
                for m in 0..dn {
                    kq[row * dn + m] += k * block.get(col / 3, col % 3, m);
                }
            }
        }
        let mut d = vec![0.0; dn * dn];
        for m in 0..dn {
            for row in 0..kd {
                let q = block.get(row / 3, row % 3, m);
                if q == 0.0 {
                    continue;
                }
                for n in 0..dn {
                    d[m * dn + n] += q * kq[row * dn + n];
                }
            }
        }
        out.push(d);
    }
    Ok(out)
}

/// Wigner-D matrix of degree `l`, `(2l+1)^2` row-major.
pub fn wigner_d(l: usize, r: &Rotation) -> Result<Vec<f64>, So3Error> {
    Ok(wigner_d_all(l, r)?.pop().expect("non-empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::{random_rotation, real_sph};
    use rand::SeedableRng;

    #[test]
    fn harmonics_transform_with_wigner_d() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = {
            let v = [0.3, -0.5, 0.81];
            let s = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
            v.map(|a: f64| a / s.sqrt())
        };
        for _ in 0..10 {
            let r = random_rotation(&mut rng);
            let ds = wigner_d_all(MAX_DEGREE, &r).unwrap();
            for (l, d) in ds.iter().enumerate() {
                let dn = 2 * l + 1;
                let lhs = real_sph(l, r.apply(n)).unwrap();
                let y = real_sph(l, n).unwrap();
                for i in 0..dn {
                    let rhs: f64 = (0..dn).map(|j| d[i * dn + j] * y[j]).sum();
                    assert!((lhs[i] - rhs).abs() < 1e-12, "l={l}");
                }
            }
        }
    }

    #[test]
    fn identity_maps_to_identity() {
        let ds = wigner_d_all(MAX_DEGREE, &Rotation::IDENTITY).unwrap();
        for (l, d) in ds.iter().enumerate() {
            let dn = 2 * l + 1;
            for i in 0..dn {
                for j in 0..dn {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((d[i * dn + j] - want).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn reflections_are_rejected() {
        let mirror = Rotation([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]]);
        assert!(matches!(wigner_d_all(2, &mirror), Err(So3Error::NotRotation { .. })));
        let squashed = Rotation([[1.0, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 2.0]]);
        assert!(wigner_d(1, &squashed).is_err());
    }
}
