//! Real spherical harmonics in Racah normalisation.
//!
//! Each degree-`l` harmonic is stored as a homogeneous polynomial of degree
//! `l` in `(x, y, z)`. Evaluated on the unit sphere, `Y^0 = 1`, the degree-1
//! block is `(y, z, x)` and every block has unit Euclidean norm.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use num_complex::Complex64;

use super::{So3Error, MAX_DEGREE};

/// Exponents `(a, b, c)` of `x^a y^b z^c`.
pub type Monomial = [u32; 3];

/// Real harmonics of one degree as polynomial coefficients.
#[derive(Debug, Clone)]
pub struct HarmonicPolynomials {
    pub degree: usize,
    /// All monomials of total degree `l`, in a fixed order.
    pub monomials: Vec<Monomial>,
    /// `coefficients[k][m + l]` multiplies `monomials[k]` in component `m`.
    pub coefficients: Vec<Vec<f64>>,
}

type ComplexPoly = BTreeMap<Monomial, Complex64>;

fn poly_mul(a: &ComplexPoly, b: &ComplexPoly) -> ComplexPoly {
    let mut out = ComplexPoly::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let e = [ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]];
            *out.entry(e).or_default() += ca * cb;
        }
    }
    out
}

fn poly_pow(base: &ComplexPoly, k: u32) -> ComplexPoly {
    let mut out = ComplexPoly::from([([0, 0, 0], Complex64::new(1.0, 0.0))]);
    for _ in 0..k {
        out = poly_mul(&out, base);
    }
    out
}

pub(crate) fn factorial(n: i64) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Complex regular solid harmonic `R_l^m` (Racah normalised, Condon-Shortley
/// phase) as a polynomial in `x, y, z`.
pub(crate) fn complex_solid_harmonic(l: i64, m: i64) -> ComplexPoly {
    let i = Complex64::new(0.0, 1.0);
    // (-x - i y) / 2 and (x - i y) / 2
    let a: ComplexPoly = BTreeMap::from([
        ([1, 0, 0], Complex64::new(-0.5, 0.0)),
        ([0, 1, 0], -i * 0.5),
    ]);
    let b: ComplexPoly = BTreeMap::from([([1, 0, 0], Complex64::new(0.5, 0.0)), ([0, 1, 0], -i * 0.5)]);
    let z: ComplexPoly = BTreeMap::from([([0, 0, 1], Complex64::new(1.0, 0.0))]);
    let prefactor = (factorial(l + m) * factorial(l - m)).sqrt();
    let mut out = ComplexPoly::new();
    for p in 0..=l {
        let q = p - m;
        let s = l - p - q;
        if q < 0 || s < 0 {
            continue;
        }
        let term = poly_mul(
            &poly_mul(&poly_pow(&a, p as u32), &poly_pow(&b, q as u32)),
            &poly_pow(&z, s as u32),
        );
        let scale = prefactor / (factorial(p) * factorial(q) * factorial(s));
        for (e, c) in term {
            *out.entry(e).or_default() += c * scale;
        }
    }
    out
}

fn build(l: usize) -> HarmonicPolynomials {
    let li = l as i64;
    let mut monomials = Vec::new();
    for a in (0..=l as u32).rev() {
        for b in (0..=(l as u32 - a)).rev() {
            monomials.push([a, b, l as u32 - a - b]);
        }
    }
    let mut coefficients = vec![vec![0.0; 2 * l + 1]; monomials.len()];
    for m in -li..=li {
        let poly = complex_solid_harmonic(li, m.abs());
        let sign = if m.abs() % 2 == 0 { 1.0 } else { -1.0 };
        for (e, c) in &poly {
            let value = match m.cmp(&0) {
                std::cmp::Ordering::Equal => c.re,
                std::cmp::Ordering::Greater => sign * std::f64::consts::SQRT_2 * c.re,
                std::cmp::Ordering::Less => sign * std::f64::consts::SQRT_2 * c.im,
            };
            if value.abs() < 1e-15 {
                continue;
            }
            let k = monomials.iter().position(|mono| mono == e).expect("homogeneous");
            coefficients[k][(m + li) as usize] = value;
        }
    }
    HarmonicPolynomials {
        degree: l,
        monomials,
        coefficients,
    }
}

/// Polynomial tables for degrees `0..=MAX_DEGREE`, built once.
pub fn harmonic_tables() -> &'static [HarmonicPolynomials] {
    static TABLES: OnceLock<Vec<HarmonicPolynomials>> = OnceLock::new();
    TABLES.get_or_init(|| (0..=MAX_DEGREE).map(build).collect())
}

fn check_unit(n: [f64; 3]) -> Result<(), So3Error> {
    let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(So3Error::NotUnit { norm });
    }
    Ok(())
}

fn check_degree(l: usize) -> Result<(), So3Error> {
    if l > MAX_DEGREE {
        return Err(So3Error::DegreeTooLarge { degree: l });
    }
    Ok(())
}

pub(crate) fn eval_unchecked(l: usize, n: [f64; 3]) -> Vec<f64> {
    let table = &harmonic_tables()[l];
    let mut out = vec![0.0; 2 * l + 1];
    for (mono, coeffs) in table.monomials.iter().zip(&table.coefficients) {
        let value = n[0].powi(mono[0] as i32) * n[1].powi(mono[1] as i32) * n[2].powi(mono[2] as i32);
        for (o, c) in out.iter_mut().zip(coeffs) {
            *o += c * value;
        }
    }
    out
}

/// Degree-`l` real spherical harmonics at the unit vector `n`, ordered
/// `m = -l..=l`.
pub fn real_sph(l: usize, n: [f64; 3]) -> Result<Vec<f64>, So3Error> {
    check_degree(l)?;
    check_unit(n)?;
    Ok(eval_unchecked(l, n))
}

/// Concatenated harmonics for every degree in `degrees`.
pub fn sph_all(degrees: super::DegreeRange, n: [f64; 3]) -> Result<super::IrrepsVector, So3Error> {
    check_unit(n)?;
    let mut data = Vec::with_capacity(degrees.dim());
    for l in degrees.iter() {
        data.extend(eval_unchecked(l, n));
    }
    super::IrrepsVector::new(degrees, data)
}
