//! Low-dimensional projection of SPHC vectors.

/// Two-component principal component analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit-length principal directions.
    pub components: [Vec<f64>; 2],
    /// Variance along each component.
    pub variances: [f64; 2],
    /// Coordinates of every input point in the component basis.
    pub projections: Vec<[f64; 2]>,
}

const ITERATIONS: usize = 200;
const TOLERANCE: f64 = 1e-10;

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Leading eigenvector of the symmetric matrix `c` (`d x d`) by power
/// iteration from a fixed start.
fn power_iteration(c: &[f64], d: usize) -> (Vec<f64>, f64) {
    let mut v: Vec<f64> = (0..d).map(|k| 1.0 + 1.0 / (k as f64 + 1.0)).collect();
    normalize(&mut v);
    let mut lambda = 0.0;
    for _ in 0..ITERATIONS {
        let mut w: Vec<f64> = (0..d).map(|i| (0..d).map(|j| c[i * d + j] * v[j]).sum()).collect();
        let norm = normalize(&mut w);
        if norm == 0.0 {
            return (v, 0.0);
        }
        let delta = v.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = w;
        lambda = norm;
        if delta < TOLERANCE {
            break;
        }
    }
    (v, lambda)
}

/// Projects `points` onto their two leading principal directions.
///
/// Components come from power iteration with deflation (200 iterations,
/// tolerance 1e-10). Fewer than two dimensions yield zero padding.
pub fn pca_2d(points: &[Vec<f64>]) -> Pca {
    let d = points.first().map_or(0, |p| p.len());
    let m = points.len().max(1) as f64;
    let mut mean = vec![0.0; d];
    for p in points {
        for (a, b) in mean.iter_mut().zip(p) {
            *a += b / m;
        }
    }
    let mut cov = vec![0.0; d * d];
    for p in points {
        for i in 0..d {
            let ci = p[i] - mean[i];
            for j in 0..d {
                cov[i * d + j] += ci * (p[j] - mean[j]) / m;
            }
        }
    }
    let (v1, l1) = power_iteration(&cov, d);
    for i in 0..d {
        for j in 0..d {
            cov[i * d + j] -= l1 * v1[i] * v1[j];
        }
    }
    let (mut v2, l2) = power_iteration(&cov, d);
    // Re-orthogonalise against the first direction.
    let overlap: f64 = v1.iter().zip(&v2).map(|(a, b)| a * b).sum();
    v2.iter_mut().zip(&v1).for_each(|(b, a)| *b -= overlap * a);
    normalize(&mut v2);
    let projections = points
        .iter()
        .map(|p| {
            let c: Vec<f64> = p.iter().zip(&mean).map(|(a, b)| a - b).collect();
            [
                c.iter().zip(&v1).map(|(a, b)| a * b).sum(),
                c.iter().zip(&v2).map(|(a, b)| a * b).sum(),
            ]
        })
        .collect();
    Pca {
        mean,
        components: [v1, v2],
        variances: [l1, l2],
        projections,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_points_are_reconstructed() {
        // Points in a 2D plane embedded in 6 dimensions.
        let a = [0.5, -0.5, 0.5, 0.5, 0.0, 0.0];
        let b = [0.0, 0.0, 0.0, 0.0, 0.6, 0.8];
        let coords: Vec<[f64; 2]> = (0..40)
            .map(|k| {
                let t = k as f64 * 0.37;
                [3.0 * t.cos(), 1.2 * (2.0 * t).sin()]
            })
            .collect();
        let points: Vec<Vec<f64>> = coords
            .iter()
            .map(|c| (0..6).map(|i| 1.5 + c[0] * a[i] + c[1] * b[i]).collect())
            .collect();
        let pca = pca_2d(&points);
        for (p, proj) in points.iter().zip(&pca.projections) {
            for i in 0..6 {
                let rec = pca.mean[i] + proj[0] * pca.components[0][i] + proj[1] * pca.components[1][i];
                assert!((rec - p[i]).abs() < 1e-8);
            }
        }
        assert!(pca.variances[0] >= pca.variances[1]);
    }
}
