use rand::Rng;
use rand_distr::StandardNormal;

use super::So3Error;

/// A 3x3 rotation matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(pub [[f64; 3]; 3]);

impl Rotation {
    pub const IDENTITY: Rotation = Rotation([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    /// Wraps a matrix after checking it is orthogonal with determinant +1.
    pub fn new(m: [[f64; 3]; 3]) -> Result<Self, So3Error> {
        let r = Rotation(m);
        let det = r.det();
        let rt = r.transpose();
        let prod = rt.compose(&r);
        let mut ortho: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                ortho = ortho.max((prod.0[i][j] - want).abs());
            }
        }
        if (det - 1.0).abs() > 1e-8 || ortho > 1e-8 {
            return Err(So3Error::NotRotation { det, ortho });
        }
        Ok(r)
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn transpose(&self) -> Rotation {
        let m = &self.0;
        Rotation(std::array::from_fn(|i| std::array::from_fn(|j| m[j][i])))
    }

    /// `self * other`.
    pub fn compose(&self, other: &Rotation) -> Rotation {
        let (a, b) = (&self.0, &other.0);
        Rotation(std::array::from_fn(|i| {
            std::array::from_fn(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum())
        }))
    }

    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        std::array::from_fn(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
    }
}

/// Rotation by `angle` radians about `axis` (normalised internally).
pub fn axis_angle(axis: [f64; 3], angle: f64) -> Rotation {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let [x, y, z] = [axis[0] / n, axis[1] / n, axis[2] / n];
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    Rotation([
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ])
}

fn from_quaternion(q: [f64; 4]) -> Rotation {
    let [w, x, y, z] = q;
    Rotation([
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ])
}

/// Uniformly distributed rotation, drawn as a normalised Gaussian quaternion.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Rotation {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-9 {
            return from_quaternion(q.map(|v| v / n));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn random_rotations_are_proper() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let r = random_rotation(&mut rng);
            assert!(Rotation::new(r.0).is_ok());
        }
    }

    #[test]
    fn axis_angle_quarter_turn() {
        let r = axis_angle([0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_2);
        let v = r.apply([1.0, 0.0, 0.0]);
        assert!((v[0]).abs() < 1e-15 && (v[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reflection_is_rejected() {
        let m = [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(matches!(Rotation::new(m), Err(So3Error::NotRotation { .. })));
    }
}
