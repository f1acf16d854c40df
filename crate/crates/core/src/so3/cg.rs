use std::sync::OnceLock;

use num_complex::Complex64;

use super::harmonics::factorial;
use super::{So3Error, MAX_DEGREE};

/// Complex Clebsch-Gordan coefficient `<l1 m1 l2 m2 | l3 m3>` (Racah's
/// closed form, Condon-Shortley phase).
pub(crate) fn complex_cg(l1: i64, m1: i64, l2: i64, m2: i64, l3: i64, m3: i64) -> f64 {
    if m1 + m2 != m3 || m1.abs() > l1 || m2.abs() > l2 || m3.abs() > l3 {
        return 0.0;
    }
    if l3 < (l1 - l2).abs() || l3 > l1 + l2 {
        return 0.0;
    }
    let f = factorial;
    let pre = ((2 * l3 + 1) as f64 * f(l3 + l1 - l2) * f(l3 - l1 + l2) * f(l1 + l2 - l3) / f(l1 + l2 + l3 + 1)).sqrt();
    let pre = pre * (f(l3 + m3) * f(l3 - m3) * f(l1 - m1) * f(l1 + m1) * f(l2 - m2) * f(l2 + m2)).sqrt();
    let mut sum = 0.0;
    for k in 0..=(l1 + l2 + l3) {
        let dens = [
            k,
            l1 + l2 - l3 - k,
            l1 - m1 - k,
            l2 + m2 - k,
            l3 - l2 + m1 + k,
            l3 - l1 - m2 + k,
        ];
        if dens.iter().any(|&d| d < 0) {
            continue;
        }
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign / dens.iter().map(|&d| f(d)).product::<f64>();
    }
    pre * sum
}

/// Row `m'` of the unitary map from complex to real harmonics, as
/// `(complex m, coefficient)` pairs.
pub(crate) fn real_from_complex(l: i64, m: i64) -> Vec<(i64, Complex64)> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let i = Complex64::new(0.0, 1.0);
    let sign = if m.abs() % 2 == 0 { 1.0 } else { -1.0 };
    debug_assert!(m.abs() <= l);
    match m.cmp(&0) {
        std::cmp::Ordering::Equal => vec![(0, Complex64::new(1.0, 0.0))],
        std::cmp::Ordering::Greater => vec![(m, Complex64::new(sign * s, 0.0)), (-m, Complex64::new(s, 0.0))],
        std::cmp::Ordering::Less => vec![(m, i * s), (-m, -i * sign * s)],
    }
}

/// Real coupling coefficients for one `(l1, l2, l3)` triple.
#[derive(Debug, Clone, PartialEq)]
pub struct CgBlock {
    pub l1: usize,
    pub l2: usize,
    pub l3: usize,
    /// Indexed `[(m1 * (2 l2 + 1) + m2) * (2 l3 + 1) + m3]` with offset `m`s.
    pub data: Vec<f64>,
}

impl CgBlock {
    pub fn get(&self, m1: usize, m2: usize, m3: usize) -> f64 {
        let (d2, d3) = (2 * self.l2 + 1, 2 * self.l3 + 1);
        self.data[(m1 * d2 + m2) * d3 + m3]
    }

    pub fn set(&mut self, m1: usize, m2: usize, m3: usize, value: f64) {
        let (d2, d3) = (2 * self.l2 + 1, 2 * self.l3 + 1);
        self.data[(m1 * d2 + m2) * d3 + m3] = value;
    }

    fn compute(l1: usize, l2: usize, l3: usize) -> CgBlock {
        let (a, b, c) = (l1 as i64, l2 as i64, l3 as i64);
        let (d1, d2, d3) = (2 * l1 + 1, 2 * l2 + 1, 2 * l3 + 1);
        let mut values = vec![Complex64::new(0.0, 0.0); d1 * d2 * d3];
        for r1 in -a..=a {
            for r2 in -b..=b {
                for r3 in -c..=c {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (m3, u3) in real_from_complex(c, r3) {
                        for (m1, u1) in real_from_complex(a, r1) {
                            for (m2, u2) in real_from_complex(b, r2) {
                                let cg = complex_cg(a, m1, b, m2, c, m3);
                                if cg != 0.0 {
                                    acc += u3 * u1.conj() * u2.conj() * cg;
                                }
                            }
                        }
                    }
                    let idx = (((r1 + a) as usize) * d2 + (r2 + b) as usize) * d3 + (r3 + c) as usize;
                    values[idx] = acc;
                }
            }
        }
        let re: f64 = values.iter().map(|v| v.re * v.re).sum();
        let im: f64 = values.iter().map(|v| v.im * v.im).sum();
        let (data, rest): (Vec<f64>, f64) = if re >= im {
            (values.iter().map(|v| v.re).collect(), im)
        } else {
            (values.iter().map(|v| v.im).collect(), re)
        };
        debug_assert!(rest < 1e-20, "real CG not purely real or imaginary");
        CgBlock { l1, l2, l3, data }
    }
}

/// Real Clebsch-Gordan coefficients for every admissible triple of degrees
/// up to [`MAX_DEGREE`].
///
/// The table is a plain value so that callers can build a deliberately
/// altered copy, which is how the verification suite checks that its own
/// equivariance test can fail.
#[derive(Debug, Clone, PartialEq)]
pub struct CgTable {
    blocks: Vec<Option<CgBlock>>,
}

fn triangle(l1: usize, l2: usize, l3: usize) -> bool {
    l3 >= l1.abs_diff(l2) && l3 <= l1 + l2
}

fn slot(l1: usize, l2: usize, l3: usize) -> usize {
    let n = MAX_DEGREE + 1;
    (l1 * n + l2) * n + l3
}

impl CgTable {
    pub fn compute() -> CgTable {
        let n = MAX_DEGREE + 1;
        let mut blocks = vec![None; n * n * n];
        for l1 in 0..n {
            for l2 in 0..n {
                for l3 in 0..n {
                    if triangle(l1, l2, l3) {
                        blocks[slot(l1, l2, l3)] = Some(CgBlock::compute(l1, l2, l3));
                    }
                }
            }
        }
        CgTable { blocks }
    }

    pub fn block(&self, l1: usize, l2: usize, l3: usize) -> Result<&CgBlock, So3Error> {
        for l in [l1, l2, l3] {
            if l > MAX_DEGREE {
                return Err(So3Error::DegreeTooLarge { degree: l });
            }
        }
        self.blocks[slot(l1, l2, l3)]
            .as_ref()
            .ok_or(So3Error::Triangle { l1, l2, l3 })
    }

    pub fn block_mut(&mut self, l1: usize, l2: usize, l3: usize) -> Result<&mut CgBlock, So3Error> {
        self.block(l1, l2, l3)?;
        Ok(self.blocks[slot(l1, l2, l3)].as_mut().expect("checked above"))
    }

    /// Couples `v` (degree `l1`) and `w` (degree `l2`) into degree `l3`.
    /// Degrees are inferred from the slice lengths.
    pub fn contract(&self, v: &[f64], w: &[f64], l3: usize) -> Result<Vec<f64>, So3Error> {
        let l1 = degree_of(v.len())?;
        let l2 = degree_of(w.len())?;
        let block = self.block(l1, l2, l3)?;
        let d3 = 2 * l3 + 1;
        let mut out = vec![0.0; d3];
        for (m1, a) in v.iter().enumerate() {
            for (m2, b) in w.iter().enumerate() {
                let ab = a * b;
                if ab == 0.0 {
                    continue;
                }
                for (m3, o) in out.iter_mut().enumerate() {
                    *o += block.get(m1, m2, m3) * ab;
                }
            }
        }
        Ok(out)
    }
}

fn degree_of(len: usize) -> Result<usize, So3Error> {
    if len.is_multiple_of(2) {
        return Err(So3Error::Length {
            expected: len + 1,
            got: len,
        });
    }
    Ok(len / 2)
}

/// Shared table, computed on first use.
pub fn cg_table() -> &'static CgTable {
    static TABLE: OnceLock<CgTable> = OnceLock::new();
    TABLE.get_or_init(CgTable::compute)
}

/// [`CgTable::contract`] on the shared table.
pub fn contract(v: &[f64], w: &[f64], l3: usize) -> Result<Vec<f64>, So3Error> {
    cg_table().contract(v, w, l3)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_values_match_textbook() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((complex_cg(1, 1, 1, -1, 2, 0) - (1.0f64 / 6.0).sqrt()).abs() < 1e-14);
        assert!((complex_cg(1, 1, 1, -1, 1, 0) - s).abs() < 1e-14);
        assert!((complex_cg(1, 1, 1, -1, 0, 0) - (1.0f64 / 3.0).sqrt()).abs() < 1e-14);
        assert!((complex_cg(1, 0, 1, 0, 0, 0) + (1.0f64 / 3.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn real_blocks_are_orthonormal() {
        let t = cg_table();
        for l1 in 0..=3usize {
            for l2 in 0..=3usize {
                for l3 in l1.abs_diff(l2)..=(l1 + l2).min(MAX_DEGREE) {
                    let b = t.block(l1, l2, l3).unwrap();
                    let (d1, d2, d3) = (2 * l1 + 1, 2 * l2 + 1, 2 * l3 + 1);
                    for a in 0..d3 {
                        for c in 0..d3 {
                            let mut s = 0.0;
                            for m1 in 0..d1 {
                                for m2 in 0..d2 {
                                    s += b.get(m1, m2, a) * b.get(m1, m2, c);
                                }
                            }
                            let want = if a == c { 1.0 } else { 0.0 };
                            assert!((s - want).abs() < 1e-12, "({l1},{l2},{l3}) {a} {c}: {s}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn scalar_coupling_is_scaled_dot_product() {
        let v = [0.3, -1.2, 0.7];
        let w = [1.1, 0.4, -0.5];
        let dot: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let got = contract(&v, &w, 0).unwrap();
        assert!((got[0].abs() - dot.abs() / 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn triangle_violation_is_an_error() {
        assert!(matches!(cg_table().block(1, 1, 3), Err(So3Error::Triangle { .. })));
        assert!(contract(&[1.0, 0.0, 0.0], &[0.0, 1.0], 1).is_err());
    }
}
