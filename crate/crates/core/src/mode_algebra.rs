//! Laguerre-Gaussian modes expanded over the Hermite-Gaussian basis, and the
//! beam-rotation unitaries that act on them.
//!
//! An order-`N` LG mode is a vector of `N + 1` complex amplitudes; entry `k`
//! multiplies `HG_{N-k,k}`. Amplitudes are staged exactly: the polynomial
//! factor is an integer coefficient of `(1 - t)^n (1 + t)^m`, the factorial
//! ratio is an exact big rational, and only the final square root and product
//! happen in `f64`.
//!
//! The azimuthal index is signed, `ell = n - m`. With that convention a beam
//! rotator of angle `alpha` multiplies the LG mode by `exp(-i ell alpha)`.

use std::fmt;

use num_bigint::BigUint;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};

use crate::error::{Error, Result};

/// Largest mode order accepted unless a caller supplies its own cap.
pub const DEFAULT_ORDER_CAP: u32 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModeIndices {
    pub n: u32,
    pub m: u32,
    pub ell: i64,
    pub p: u32,
}

impl ModeIndices {
    pub fn from_nm(n: u32, m: u32) -> Self {
        ModeIndices {
            n,
            m,
            ell: n as i64 - m as i64,
            p: n.min(m),
        }
    }

    /// Inverts `ell = n - m`, `p = min(n, m)`.
    pub fn from_lp(ell: i64, p: u32) -> Self {
        let shift = ell.unsigned_abs() as u32;
        let (n, m) = if ell >= 0 { (p + shift, p) } else { (p, p + shift) };
        ModeIndices { n, m, ell, p }
    }

    pub fn order(&self) -> u32 {
        self.n + self.m
    }
}

/// Order-`N` transverse mode as `N + 1` HG amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeVector {
    amplitudes: Vec<Complex64>,
}

impl ModeVector {
    /// Panics on an empty amplitude list; an order-0 mode has one amplitude.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Self {
        assert!(!amplitudes.is_empty(), "a mode vector has at least one amplitude");
        ModeVector { amplitudes }
    }

    pub fn order(&self) -> u32 {
        (self.amplitudes.len() - 1) as u32
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `<self|other>`, conjugating `self`.
    pub fn inner(&self, other: &ModeVector) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn scaled(&self, factor: Complex64) -> ModeVector {
        ModeVector {
            amplitudes: self.amplitudes.iter().map(|a| a * factor).collect(),
        }
    }

    /// Largest componentwise distance; `None` if the orders differ.
    pub fn max_abs_diff(&self, other: &ModeVector) -> Option<f64> {
        (self.amplitudes.len() == other.amplitudes.len()).then(|| {
            self.amplitudes
                .iter()
                .zip(&other.amplitudes)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max)
        })
    }
}

impl std::ops::Add for &ModeVector {
    type Output = ModeVector;

    fn add(self, rhs: &ModeVector) -> ModeVector {
        assert_eq!(self.amplitudes.len(), rhs.amplitudes.len(), "order mismatch");
        ModeVector {
            amplitudes: self
                .amplitudes
                .iter()
                .zip(&rhs.amplitudes)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl fmt::Display for ModeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, a) in self.amplitudes.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}", format_complex(*a))?;
        }
        write!(f, ")")
    }
}

pub(crate) fn format_complex(z: Complex64) -> String {
    let clean = |x: f64| if x.abs() < 5e-16 { 0.0 } else { x };
    let (re, im) = (clean(z.re), clean(z.im));
    match (re == 0.0, im == 0.0) {
        (_, true) => format!("{re:.10}"),
        (true, false) => format!("{im:.10}i"),
        (false, false) if im < 0.0 => format!("{re:.10}-{:.10}i", -im),
        _ => format!("{re:.10}+{im:.10}i"),
    }
}

/// Dense square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

impl UnitaryMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        UnitaryMatrix { dim, entries }
    }

    pub fn from_rows(rows: Vec<Vec<Complex64>>) -> Self {
        let dim = rows.len();
        assert!(rows.iter().all(|r| r.len() == dim), "matrix must be square");
        UnitaryMatrix {
            dim,
            entries: rows.into_iter().flatten().collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim + col]
    }

    pub fn adjoint(&self) -> Self {
        let d = self.dim;
        let mut entries = Vec::with_capacity(d * d);
        for r in 0..d {
            for c in 0..d {
                entries.push(self.get(c, r).conj());
            }
        }
        UnitaryMatrix { dim: d, entries }
    }

    pub fn matmul(&self, rhs: &UnitaryMatrix) -> Self {
        assert_eq!(self.dim, rhs.dim);
        let d = self.dim;
        let mut entries = vec![Complex64::new(0.0, 0.0); d * d];
        for r in 0..d {
            for k in 0..d {
                let a = self.get(r, k);
                for c in 0..d {
                    entries[r * d + c] += a * rhs.get(k, c);
                }
            }
        }
        UnitaryMatrix { dim: d, entries }
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.dim, v.len());
        (0..self.dim)
            .map(|r| (0..self.dim).map(|c| self.get(r, c) * v[c]).sum())
            .collect()
    }

    pub fn max_abs_diff(&self, other: &UnitaryMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Worst entrywise deviation of `U U†` from the identity.
    pub fn unitarity_residual(&self) -> f64 {
        self.matmul(&self.adjoint())
            .max_abs_diff(&UnitaryMatrix::identity(self.dim))
    }
}

impl fmt::Display for UnitaryMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.dim {
            let row: Vec<String> = (0..self.dim).map(|c| format_complex(self.get(r, c))).collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// Coefficients of `(1 - t)^n (1 + t)^m` in ascending powers of `t`, by
/// repeated convolution with `(1 - t)` and `(1 + t)`.
///
/// Coefficient `k` equals `(1/k!) d^k/dt^k [(1 - t)^n (1 + t)^m]` at `t = 0`.
pub fn derivative_terms(n: u32, m: u32) -> Vec<i64> {
    let mut poly = vec![1i64];
    let mut convolve = |sign: i64| {
        let mut next = vec![0i64; poly.len() + 1];
        for (k, c) in poly.iter().enumerate() {
            next[k] += c;
            next[k + 1] += sign * c;
        }
        poly = next;
    };
    for _ in 0..n {
        convolve(-1);
    }
    for _ in 0..m {
        convolve(1);
    }
    poly
}

fn factorial(k: u32) -> BigUint {
    (1..=k).fold(BigUint::one(), |acc, i| acc * i)
}

fn check_order(order: u32, cap: u32) -> Result<()> {
    if order > cap {
        Err(Error::OrderTooLarge { order, cap })
    } else {
        Ok(())
    }
}

/// LG mode `(n, m)` in the HG basis, with the default order cap.
pub fn lg_coefficients(n: u32, m: u32) -> Result<ModeVector> {
    lg_coefficients_with_cap(n, m, DEFAULT_ORDER_CAP)
}

pub fn lg_coefficients_with_cap(n: u32, m: u32, cap: u32) -> Result<ModeVector> {
    let order = n.saturating_add(m);
    check_order(order, cap)?;
    let terms = derivative_terms(n, m);
    let denom = (BigUint::one() << order as usize) * factorial(n) * factorial(m);
    let amplitudes = terms
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let k = k as u32;
            let numer = factorial(order - k) * factorial(k);
            let weight = BigRational::new(numer.into(), denom.clone().into())
                .to_f64()
                .expect("factorial ratio is finite");
            let magnitude = weight.sqrt() * c as f64;
            i_pow(k) * magnitude
        })
        .collect();
    Ok(ModeVector { amplitudes })
}

/// LG mode addressed by `(ell, p)`.
pub fn lg_mode(ell: i64, p: u32) -> Result<ModeVector> {
    let idx = ModeIndices::from_lp(ell, p);
    lg_coefficients(idx.n, idx.m)
}

fn i_pow(k: u32) -> Complex64 {
    match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Signed azimuthal indices present at order `N`: `-N, -N+2, ..., N`.
pub fn admissible_ells(order: u32) -> impl Iterator<Item = i64> {
    let n = order as i64;
    (0..=n).map(move |j| -n + 2 * j)
}

/// Beam-rotator unitary `[rot(alpha)]_N`, assembled from its LG eigenvectors:
/// `sum_ell exp(-i ell alpha) |LG_ell><LG_ell|`.
pub fn rotation_matrix(order: u32, alpha: f64) -> Result<UnitaryMatrix> {
    rotation_matrix_with_cap(order, alpha, DEFAULT_ORDER_CAP)
}

pub fn rotation_matrix_with_cap(order: u32, alpha: f64, cap: u32) -> Result<UnitaryMatrix> {
    check_order(order, cap)?;
    let dim = order as usize + 1;
    let mut entries = vec![Complex64::new(0.0, 0.0); dim * dim];
    for ell in admissible_ells(order) {
        let p = (order - ell.unsigned_abs() as u32) / 2;
        let idx = ModeIndices::from_lp(ell, p);
        let v = lg_coefficients_with_cap(idx.n, idx.m, cap)?;
        let phase = Complex64::from_polar(1.0, -(ell as f64) * alpha);
        let a = v.amplitudes();
        for r in 0..dim {
            let scaled = phase * a[r];
            for c in 0..dim {
                entries[r * dim + c] += scaled * a[c].conj();
            }
        }
    }
    Ok(UnitaryMatrix { dim, entries })
}

/// Passes `mode` through a beam rotator of angle `alpha`.
pub fn apply_rotation(mode: &ModeVector, alpha: f64) -> Result<ModeVector> {
    let rot = rotation_matrix(mode.order(), alpha)?;
    Ok(ModeVector {
        amplitudes: rot.apply(mode.amplitudes()),
    })
}

/// Rotation phase `ell * alpha` read back from the eigenvalue of the rotator
/// on `LG(ell, p)`, reduced to (−π, π].
pub fn rotation_eigenphase(ell: i64, p: u32, alpha: f64) -> Result<f64> {
    let mode = lg_mode(ell, p)?;
    let out = apply_rotation(&mode, alpha)?;
    let eigenvalue = mode.inner(&out);
    Ok(reduce_angle(-eigenvalue.arg()))
}

/// Reduces an angle in radians to (−π, π].
pub fn reduce_angle(x: f64) -> f64 {
    use std::f64::consts::PI;
    let r = x.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}
