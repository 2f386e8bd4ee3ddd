//! Laurent-polynomial transfer matrices for trigonometric potentials.
//!
//! With `z_j = e^{2 pi i 2^j x} = z^{2^j}` a degree-`d` trigonometric
//! potential is a Laurent polynomial in `z_j`, and `z_j^d A(T^j x)` is a
//! polynomial. The product
//!
//! ```text
//! P_n(z) = prod_{j<n} z_j^d A(T^j x)
//! ```
//!
//! has constant term `diag((-lambda c_{-d})^n, 0)`, where `c_{-d}` is the
//! `z^{-d}` coefficient of `v` (`c_{-1} = 1` for `v = 2 cos 2 pi x`). Since
//! `|z_j| = 1` on the circle and `log ||P_n||` is subharmonic, the mean of
//! `(1/n) log ||A_n||` is at least `log(lambda |c_{-d}|)`.

use crate::cocycle::{CocycleParams, Schrodinger};
use crate::error::{LabError, Result};
use crate::lyapunov::{le_birkhoff, phase_average_log_norm, LeCurve, Method};
use crate::phase::DyadicGrid;
use crate::potential::{PotentialKind, PotentialSpec};
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

/// Deepest product accepted by [`laurent_transfer`].
pub const MAX_DEPTH: usize = 24;
/// Deepest product checked in exact arithmetic.
pub const EXACT_DEPTH: usize = 12;

/// Coefficient ring for Laurent polynomials.
pub trait Coefficient:
    Clone + PartialEq + Debug + Zero + One + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    /// `re + i im`, or `None` if the ring cannot hold it.
    fn from_parts(re: f64, im: f64) -> Option<Self>;
    fn to_complex(&self) -> Complex64;
}

impl Coefficient for f64 {
    fn from_parts(re: f64, im: f64) -> Option<Self> {
        (im == 0.0).then_some(re)
    }

    fn to_complex(&self) -> Complex64 {
        Complex64::new(*self, 0.0)
    }
}

impl Coefficient for BigRational {
    fn from_parts(re: f64, im: f64) -> Option<Self> {
        if im != 0.0 {
            return None;
        }
        BigRational::from_float(re)
    }

    fn to_complex(&self) -> Complex64 {
        Complex64::new(self.to_f64().unwrap_or(f64::NAN), 0.0)
    }
}

impl Coefficient for Complex64 {
    fn from_parts(re: f64, im: f64) -> Option<Self> {
        Some(Complex64::new(re, im))
    }

    fn to_complex(&self) -> Complex64 {
        *self
    }
}

/// Sparse Laurent polynomial without zero coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct LaurentPoly<C> {
    terms: BTreeMap<i64, C>,
}

impl<C: Coefficient> LaurentPoly<C> {
    pub fn zero() -> Self {
        Self { terms: BTreeMap::new() }
    }

    pub fn monomial(coeff: C, exp: i64) -> Self {
        let mut p = Self::zero();
        p.add_term(exp, coeff);
        p
    }

    pub fn constant(coeff: C) -> Self {
        Self::monomial(coeff, 0)
    }

    pub fn from_terms<I: IntoIterator<Item = (i64, C)>>(terms: I) -> Self {
        let mut p = Self::zero();
        for (e, c) in terms {
            p.add_term(e, c);
        }
        p
    }

    fn add_term(&mut self, exp: i64, coeff: C) {
        if coeff.is_zero() {
            return;
        }
        match self.terms.get_mut(&exp) {
            Some(c) => {
                let sum = c.clone() + coeff;
                if sum.is_zero() {
                    self.terms.remove(&exp);
                } else {
                    *c = sum;
                }
            }
            None => {
                self.terms.insert(exp, coeff);
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, exp: i64) -> C {
        self.terms.get(&exp).cloned().unwrap_or_else(C::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (i64, &C)> {
        self.terms.iter().map(|(e, c)| (*e, c))
    }

    pub fn min_exponent(&self) -> Option<i64> {
        self.terms.keys().next().copied()
    }

    pub fn max_exponent(&self) -> Option<i64> {
        self.terms.keys().next_back().copied()
    }

    pub fn has_explicit_zero(&self) -> bool {
        self.terms.values().any(|c| c.is_zero())
    }

    /// `p(z^k)`.
    pub fn substitute_power(&self, k: i64) -> Self {
        Self { terms: self.terms.iter().map(|(e, c)| (e * k, c.clone())).collect() }
    }

    /// `z^by p(z)`.
    pub fn shift(&self, by: i64) -> Self {
        Self { terms: self.terms.iter().map(|(e, c)| (e + by, c.clone())).collect() }
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.terms.iter().map(|(e, c)| c.to_complex() * z.powi(*e as i32)).sum()
    }

    /// Value at `z = e^{2 pi i m / 2^bits}` with exact reduction of every
    /// exponent's phase.
    pub fn eval_on_circle(&self, m: u64, bits: u32) -> Complex64 {
        let modulus = 1i128 << bits;
        self.terms
            .iter()
            .map(|(e, c)| {
                let k = (*e as i128 * m as i128).rem_euclid(modulus);
                let angle = TAU * (k as f64) / (modulus as f64);
                c.to_complex() * Complex64::from_polar(1.0, angle)
            })
            .sum()
    }
}

impl<C: Coefficient> Add for &LaurentPoly<C> {
    type Output = LaurentPoly<C>;

    fn add(self, rhs: Self) -> LaurentPoly<C> {
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(*e, c.clone());
        }
        out
    }
}

impl<C: Coefficient> Mul for &LaurentPoly<C> {
    type Output = LaurentPoly<C>;

    fn mul(self, rhs: Self) -> LaurentPoly<C> {
        let mut out = LaurentPoly::zero();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                out.add_term(ea + eb, ca.clone() * cb.clone());
            }
        }
        out
    }
}

/// 2x2 matrix of Laurent polynomials.
#[derive(Clone, Debug, PartialEq)]
pub struct LaurentMat<C> {
    pub a11: LaurentPoly<C>,
    pub a12: LaurentPoly<C>,
    pub a21: LaurentPoly<C>,
    pub a22: LaurentPoly<C>,
}

impl<C: Coefficient> LaurentMat<C> {
    pub fn identity() -> Self {
        Self {
            a11: LaurentPoly::constant(C::one()),
            a12: LaurentPoly::zero(),
            a21: LaurentPoly::zero(),
            a22: LaurentPoly::constant(C::one()),
        }
    }

    pub fn entries(&self) -> [&LaurentPoly<C>; 4] {
        [&self.a11, &self.a12, &self.a21, &self.a22]
    }

    /// Coefficients of `z^0`, row-major.
    pub fn constant_term(&self) -> [C; 4] {
        self.entries().map(|p| p.coeff(0))
    }

    pub fn min_exponent(&self) -> Option<i64> {
        self.entries().iter().filter_map(|p| p.min_exponent()).min()
    }

    pub fn max_exponent(&self) -> Option<i64> {
        self.entries().iter().filter_map(|p| p.max_exponent()).max()
    }

    pub fn is_canonical(&self) -> bool {
        self.entries().iter().all(|p| !p.has_explicit_zero())
    }

    pub fn eval(&self, z: Complex64) -> [Complex64; 4] {
        self.entries().map(|p| p.eval(z))
    }

    pub fn eval_on_circle(&self, m: u64, bits: u32) -> [Complex64; 4] {
        self.entries().map(|p| p.eval_on_circle(m, bits))
    }
}

impl<C: Coefficient> Mul for &LaurentMat<C> {
    type Output = LaurentMat<C>;

    fn mul(self, r: Self) -> LaurentMat<C> {
        LaurentMat {
            a11: &(&self.a11 * &r.a11) + &(&self.a12 * &r.a21),
            a12: &(&self.a11 * &r.a12) + &(&self.a12 * &r.a22),
            a21: &(&self.a21 * &r.a11) + &(&self.a22 * &r.a21),
            a22: &(&self.a21 * &r.a12) + &(&self.a22 * &r.a22),
        }
    }
}

/// Spectral norm of a complex 2x2 matrix (row-major).
pub fn complex_norm(m: &[Complex64; 4]) -> f64 {
    let frob2: f64 = m.iter().map(|c| c.norm_sqr()).sum();
    let det = (m[0] * m[3] - m[1] * m[2]).norm();
    let disc = (frob2 * frob2 - 4.0 * det * det).max(0.0);
    (0.5 * (frob2 + disc.sqrt())).sqrt()
}

/// Laurent coefficients `c_k`, `k = -d ..= d`, of `v` in `z = e^{2 pi i x}`.
fn laurent_coefficients(v: &PotentialSpec) -> Result<(usize, Vec<(i64, f64, f64)>)> {
    if v.kind != PotentialKind::TrigPolynomial {
        return Err(LabError::InvalidParameter("Laurent products need a trigonometric polynomial potential".into()));
    }
    v.check()?;
    let coeffs = v.trig_coefficients();
    let d = coeffs.len() - 1;
    if d == 0 {
        return Err(LabError::InvalidParameter("Laurent products need degree >= 1".into()));
    }
    let (ad, bd) = coeffs[d];
    if ad == 0.0 && bd == 0.0 {
        return Err(LabError::InvalidParameter("leading trigonometric coefficient vanishes".into()));
    }
    let mut out = vec![(0, coeffs[0].0, 0.0)];
    for (k, &(a, b)) in coeffs.iter().enumerate().skip(1) {
        out.push((k as i64, 0.5 * a, -0.5 * b));
        out.push((-(k as i64), 0.5 * a, 0.5 * b));
    }
    Ok((d, out))
}

fn coefficient<C: Coefficient>(re: f64, im: f64) -> Result<C> {
    C::from_parts(re, im).ok_or_else(|| {
        LabError::InvalidParameter(format!("coefficient {re}{im:+}i is not representable in this ring"))
    })
}

/// `prod_{j<n} z_j^d A(T^j x)` for the Schrödinger cocycle `E - lambda v`.
pub fn laurent_transfer<C: Coefficient>(energy: f64, lambda: f64, v: &PotentialSpec, n: usize) -> Result<LaurentMat<C>> {
    if n > MAX_DEPTH {
        return Err(LabError::DepthLimit { n, max: MAX_DEPTH });
    }
    let (d, coeffs) = laurent_coefficients(v)?;
    let d = d as i64;
    let e: C = coefficient(energy, 0.0)?;
    let lam: C = coefficient(lambda, 0.0)?;
    // z^d (E - lambda v(z)) in the variable z_0 = z.
    let mut diag = LaurentPoly::monomial(e, d);
    for (k, re, im) in coeffs {
        let c: C = coefficient(re, im)?;
        diag = &diag + &LaurentPoly::monomial(-(lam.clone() * c), k + d);
    }
    let zd = LaurentPoly::monomial(C::one(), d);
    let base = LaurentMat {
        a11: diag,
        a12: LaurentPoly::monomial(-C::one(), d),
        a21: zd,
        a22: LaurentPoly::zero(),
    };
    let mut prod = LaurentMat::identity();
    for j in 0..n {
        let k = 1i64 << j;
        let factor = LaurentMat {
            a11: base.a11.substitute_power(k),
            a12: base.a12.substitute_power(k),
            a21: base.a21.substitute_power(k),
            a22: base.a22.substitute_power(k),
        };
        prod = &factor * &prod;
    }
    Ok(prod)
}

/// `(-lambda c_{-d})^n` as a complex number.
pub fn expected_constant(lambda: f64, v: &PotentialSpec, n: usize) -> Result<Complex64> {
    let (d, coeffs) = laurent_coefficients(v)?;
    let &(_, re, im) = coeffs.iter().find(|c| c.0 == -(d as i64)).expect("degree term present");
    Ok((Complex64::new(re, im) * -lambda).powi(n as i32))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantTermReport {
    pub energy: f64,
    pub lambda: f64,
    pub n: usize,
    /// Whether the product was formed over the rationals.
    pub exact: bool,
    /// `z^0` coefficient matrix, row-major (real parts).
    pub constant: [f64; 4],
    pub expected: f64,
    /// Every entry is a polynomial (no negative powers of `z`).
    pub polynomial: bool,
    pub passed: bool,
}

/// Constant-term identity for `v = 2 cos 2 pi x`.
pub fn constant_term_check(energy: f64, lambda: f64, n: usize) -> Result<ConstantTermReport> {
    constant_term_check_for(&PotentialSpec::two_cos(), energy, lambda, n)
}

/// Constant-term identity for a cosine polynomial: exact for `n <= 12`,
/// relative `1e-12` otherwise.
pub fn constant_term_check_for(v: &PotentialSpec, energy: f64, lambda: f64, n: usize) -> Result<ConstantTermReport> {
    let expected = expected_constant(lambda, v, n)?;
    if expected.im != 0.0 {
        return Err(LabError::InvalidParameter("constant-term check needs a cosine polynomial".into()));
    }
    let (constant, polynomial, passed, exact) = if n <= EXACT_DEPTH {
        let m: LaurentMat<BigRational> = laurent_transfer(energy, lambda, v, n)?;
        let c = m.constant_term();
        let (d, coeffs) = laurent_coefficients(v)?;
        let lead = coeffs.iter().find(|c| c.0 == -(d as i64)).expect("degree term present").1;
        let target = (-(coefficient::<BigRational>(lambda, 0.0)? * coefficient::<BigRational>(lead, 0.0)?))
            .pow(n as i32);
        let ok = c[0] == target && c[1].is_zero() && c[2].is_zero() && c[3].is_zero();
        let poly = m.min_exponent().is_none_or(|e| e >= 0);
        (c.map(|q| q.to_f64().unwrap_or(f64::NAN)), poly, ok, true)
    } else {
        let m: LaurentMat<f64> = laurent_transfer(energy, lambda, v, n)?;
        let c = m.constant_term();
        let scale = expected.re.abs().max(f64::MIN_POSITIVE);
        let ok = ((c[0] - expected.re) / scale).abs() <= 1e-12
            && c[1..].iter().all(|x| (x / scale).abs() <= 1e-12);
        let poly = m.min_exponent().is_none_or(|e| e >= 0);
        (c, poly, ok, false)
    };
    Ok(ConstantTermReport {
        energy,
        lambda,
        n,
        exact,
        constant,
        expected: expected.re,
        polynomial,
        passed: passed && polynomial,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubmeanReport {
    pub energy: f64,
    pub lambda: f64,
    pub n: usize,
    pub grid_level: u32,
    /// `(1/n)` mean of `log ||A_n||` over the grid.
    pub average: f64,
    /// `(1/n) log ||P_n(0)|| = log(lambda |c_{-d}|)`.
    pub floor: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Submean inequality for `v = 2 cos 2 pi x`.
pub fn submean_check(energy: f64, lambda: f64, n: usize, grid: DyadicGrid) -> Result<SubmeanReport> {
    submean_check_for(&PotentialSpec::two_cos(), energy, lambda, n, grid)
}

pub fn submean_check_for(
    v: &PotentialSpec,
    energy: f64,
    lambda: f64,
    n: usize,
    grid: DyadicGrid,
) -> Result<SubmeanReport> {
    if (grid.level() as usize) < n + 2 {
        return Err(LabError::GridTooCoarse { level: grid.level(), required: n as u32 + 2 });
    }
    let floor = expected_constant(lambda, v, n)?.norm().ln() / n as f64;
    let p = CocycleParams::from_energy(energy, lambda)?;
    let average = phase_average_log_norm(&Schrodinger::new(p, v), n, grid)?;
    let tolerance = 1e-3;
    Ok(SubmeanReport {
        energy,
        lambda,
        n,
        grid_level: grid.level(),
        average,
        floor,
        tolerance,
        passed: average >= floor - tolerance,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HermanFloor {
    pub floor: f64,
    pub curve: LeCurve,
    /// Energies with `value < floor - 3 stderr`.
    pub flagged: Vec<f64>,
}

/// Birkhoff exponents of `v = 2 cos 2 pi x` against the floor `log lambda`.
pub fn herman_le_floor(lambda: f64, energies: &[f64], n: usize, samples: usize, seed: u64) -> Result<HermanFloor> {
    herman_le_floor_for(&PotentialSpec::two_cos(), lambda, energies, n, samples, seed)
}

/// Same for a trigonometric polynomial of degree `d`, whose floor is
/// `log(lambda |c_{-d}|)`.
pub fn herman_le_floor_for(
    v: &PotentialSpec,
    lambda: f64,
    energies: &[f64],
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<HermanFloor> {
    let floor = expected_constant(lambda, v, 1)?.norm().ln();
    let rows = energies
        .iter()
        .map(|&e| {
            let mut r = le_birkhoff(CocycleParams::from_energy(e, lambda)?, v, n, samples, seed)?;
            r.method = Method::HermanBirkhoff;
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    let flagged = rows.iter().filter(|r| r.value < floor - 3.0 * r.stderr).map(|r| r.params.energy()).collect();
    Ok(HermanFloor { floor, curve: LeCurve::from_rows(lambda, rows), flagged })
}
