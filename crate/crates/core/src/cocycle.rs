//! SL(2,R) primitives and the Schrödinger cocycle over the doubling map.

use crate::error::{LabError, Result};
use crate::phase::DyadicPhase;
use crate::potential::{Potential, Side};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use std::ops::Mul;

/// Row-major 2x2 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2<S> {
    pub a11: S,
    pub a12: S,
    pub a21: S,
    pub a22: S,
}

impl<S: Real> Mat2<S> {
    pub fn new(a11: S, a12: S, a21: S, a22: S) -> Self {
        Self { a11, a12, a21, a22 }
    }

    pub fn identity() -> Self {
        Self::diag(S::one(), S::one())
    }

    pub fn diag(d1: S, d2: S) -> Self {
        Self::new(d1, S::zero(), S::zero(), d2)
    }

    /// `R_g = [[cos g, -sin g], [sin g, cos g]]`.
    pub fn rotation(angle: S) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c, -s, s, c)
    }

    pub fn det(&self) -> S {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn trace(&self) -> S {
        self.a11 + self.a22
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.a11, self.a21, self.a12, self.a22)
    }

    pub fn scale(&self, k: S) -> Self {
        Self::new(self.a11 * k, self.a12 * k, self.a21 * k, self.a22 * k)
    }

    pub fn apply(&self, v: [S; 2]) -> [S; 2] {
        [self.a11 * v[0] + self.a12 * v[1], self.a21 * v[0] + self.a22 * v[1]]
    }

    /// Inverse of a unimodular matrix (adjugate).
    pub fn sl2_inverse(&self) -> Self {
        Self::new(self.a22, -self.a12, -self.a21, self.a11)
    }

    pub fn frobenius(&self) -> S {
        (self.a11 * self.a11 + self.a12 * self.a12 + self.a21 * self.a21 + self.a22 * self.a22).sqrt()
    }

    /// Singular values `(s_max, s_min)`, via the cancellation-free
    /// `((|p| + |q|), ||p| - |q||) / 2` form with `p`, `q` the rotation and
    /// reflection parts.
    pub fn singular_values(&self) -> (S, S) {
        let p = (self.a11 + self.a22).hypot(self.a21 - self.a12);
        let q = (self.a11 - self.a22).hypot(self.a21 + self.a12);
        let two = S::lit(2.0);
        ((p + q) / two, (p - q).abs() / two)
    }

    /// Operator (spectral) norm.
    pub fn norm(&self) -> S {
        self.singular_values().0
    }

    pub fn max_abs_entry(&self) -> S {
        self.a11.abs().max(self.a12.abs()).max(self.a21.abs()).max(self.a22.abs())
    }

    pub fn cast<T: Real>(&self) -> Mat2<T> {
        let c = |x: S| T::lit(x.to_f64_lossy());
        Mat2::new(c(self.a11), c(self.a12), c(self.a21), c(self.a22))
    }
}

impl<S: Real> Mul for Mat2<S> {
    type Output = Self;

    fn mul(self, o: Self) -> Self {
        Self::new(
            self.a11 * o.a11 + self.a12 * o.a21,
            self.a11 * o.a12 + self.a12 * o.a22,
            self.a21 * o.a11 + self.a22 * o.a21,
            self.a21 * o.a12 + self.a22 * o.a22,
        )
    }
}

/// `e^{log_norm} (cos angle, sin angle)` with `angle in [0, 2 pi)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaledVec<S> {
    pub angle: S,
    pub log_norm: S,
}

impl<S: Real> ScaledVec<S> {
    pub fn new(angle: S, log_norm: S) -> Self {
        Self { angle: wrap_two_pi(angle), log_norm }
    }

    /// `e_1 = (1, 0)`.
    pub fn e1() -> Self {
        Self { angle: S::zero(), log_norm: S::zero() }
    }

    pub fn unit(&self) -> [S; 2] {
        let (s, c) = self.angle.sin_cos();
        [c, s]
    }

    /// `m w`, adding `log |m u|` to the log-magnitude.
    pub fn apply(&self, m: &Mat2<S>) -> Result<Self> {
        let y = m.apply(self.unit());
        let mag = y[0].hypot(y[1]);
        if !(mag.to_f64_lossy() >= 1e-300) {
            return Err(LabError::Degenerate { magnitude: mag.to_f64_lossy() });
        }
        Ok(Self { angle: wrap_two_pi(y[1].atan2(y[0])), log_norm: self.log_norm + mag.ln() })
    }

    /// The vector itself; overflows to infinity for large `log_norm`.
    pub fn materialize(&self) -> Option<[S; 2]> {
        if self.log_norm > S::lit(300.0) {
            return None;
        }
        let r = self.log_norm.exp();
        let u = self.unit();
        Some([r * u[0], r * u[1]])
    }
}

/// Representative of `angle` in `[0, 2 pi)`.
pub fn wrap_two_pi<S: Real>(angle: S) -> S {
    let tau = S::TAU();
    let r = angle - tau * (angle / tau).floor();
    if r >= tau {
        S::zero()
    } else {
        r
    }
}

/// Distance between two directions in `RP^1 = R / pi Z`.
pub fn projective_distance<S: Real>(a: S, b: S) -> S {
    let pi = S::PI();
    let d = (a - b) - pi * ((a - b) / pi).round();
    d.abs()
}

/// Distance between two angles in `R / 2 pi Z`.
pub fn circle_distance<S: Real>(a: S, b: S) -> S {
    let tau = S::TAU();
    let d = (a - b) - tau * ((a - b) / tau).round();
    d.abs()
}

/// Coupling `lambda > 0` and reduced energy `t = E / lambda`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CocycleParams {
    pub lambda: f64,
    pub t: f64,
}

impl CocycleParams {
    pub fn new(lambda: f64, t: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() || !t.is_finite() {
            return Err(LabError::InvalidParameter(format!("need lambda > 0 and finite t, got ({lambda}, {t})")));
        }
        Ok(Self { lambda, t })
    }

    pub fn from_energy(energy: f64, lambda: f64) -> Result<Self> {
        Self::new(lambda, energy / lambda)
    }

    pub fn energy(&self) -> f64 {
        self.lambda * self.t
    }

    /// Whether `t` lies in `[-1, 2]`, the range that matters after normalisation.
    pub fn in_reduced_range(&self) -> bool {
        (-1.0..=2.0).contains(&self.t)
    }
}

/// `[[E - lambda v, -1], [1, 0]]`.
pub fn schrodinger_matrix(p: &CocycleParams, v_at_x: f64) -> Mat2<f64> {
    Mat2::new(p.energy() - p.lambda * v_at_x, -1.0, 1.0, 0.0)
}

/// `P A P^{-1}` with `P = diag(lambda^{-1/2}, lambda^{1/2})`:
/// `[[lambda (t - v), -1/lambda], [lambda, 0]]`.
pub fn conjugated_matrix(p: &CocycleParams, v_at_x: f64) -> Mat2<f64> {
    Mat2::new(p.lambda * (p.t - v_at_x), -1.0 / p.lambda, p.lambda, 0.0)
}

/// A measurable map from the circle into SL(2,R).
pub trait CocycleMap: Sync {
    /// Matrix at the circle point `y in [0,1)`; at a jump the right limit is used.
    fn matrix_at(&self, y: f64) -> Result<Mat2<f64>>;
}

impl<M: CocycleMap + ?Sized> CocycleMap for &M {
    fn matrix_at(&self, y: f64) -> Result<Mat2<f64>> {
        (**self).matrix_at(y)
    }
}

/// The Schrödinger cocycle map `x -> A^{(E - lambda v)}(x)`.
pub struct Schrodinger<'a, P: ?Sized> {
    pub params: CocycleParams,
    pub potential: &'a P,
}

impl<'a, P: Potential + ?Sized> Schrodinger<'a, P> {
    pub fn new(params: CocycleParams, potential: &'a P) -> Self {
        Self { params, potential }
    }
}

impl<P: Potential + ?Sized> CocycleMap for Schrodinger<'_, P> {
    fn matrix_at(&self, y: f64) -> Result<Mat2<f64>> {
        Ok(schrodinger_matrix(&self.params, self.potential.on_circle(y, Side::Right).0))
    }
}

/// The conjugated cocycle `P A^{(E - lambda v)} P^{-1}`.
pub struct Conjugated<'a, P: ?Sized> {
    pub params: CocycleParams,
    pub potential: &'a P,
}

impl<'a, P: Potential + ?Sized> Conjugated<'a, P> {
    pub fn new(params: CocycleParams, potential: &'a P) -> Self {
        Self { params, potential }
    }
}

impl<P: Potential + ?Sized> CocycleMap for Conjugated<'_, P> {
    fn matrix_at(&self, y: f64) -> Result<Mat2<f64>> {
        Ok(conjugated_matrix(&self.params, self.potential.on_circle(y, Side::Right).0))
    }
}

/// A phase-independent cocycle.
pub struct ConstantMap(pub Mat2<f64>);

impl CocycleMap for ConstantMap {
    fn matrix_at(&self, _y: f64) -> Result<Mat2<f64>> {
        Ok(self.0)
    }
}

/// Vector iteration with deferred renormalisation; the hot loop of every estimator.
#[derive(Clone, Copy, Debug)]
pub struct GrowthTracker {
    v: [f64; 2],
    log_scale: f64,
    steps: u32,
}

impl GrowthTracker {
    const RENORM_EVERY: u32 = 16;

    pub fn new(w: ScaledVec<f64>) -> Self {
        Self { v: w.unit(), log_scale: w.log_norm, steps: 0 }
    }

    pub fn e1() -> Self {
        Self { v: [1.0, 0.0], log_scale: 0.0, steps: 0 }
    }

    pub fn apply(&mut self, m: &Mat2<f64>) -> Result<()> {
        self.v = m.apply(self.v);
        self.steps += 1;
        let big = self.v[0].abs().max(self.v[1].abs());
        if self.steps.is_multiple_of(Self::RENORM_EVERY) || !(1e-150..=1e150).contains(&big) {
            self.renormalize()?;
        }
        Ok(())
    }

    fn renormalize(&mut self) -> Result<()> {
        let mag = self.v[0].hypot(self.v[1]);
        if !(mag >= 1e-300) || !mag.is_finite() {
            return Err(LabError::Degenerate { magnitude: mag });
        }
        self.v = [self.v[0] / mag, self.v[1] / mag];
        self.log_scale += mag.ln();
        Ok(())
    }

    pub fn log_norm(&self) -> f64 {
        self.log_scale + self.v[0].hypot(self.v[1]).ln()
    }

    pub fn finish(&self) -> ScaledVec<f64> {
        ScaledVec { angle: wrap_two_pi(self.v[1].atan2(self.v[0])), log_norm: self.log_norm() }
    }
}

/// `mat * e^{log_scale}` with `mat` kept at unit spectral norm (periodically).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizedMat {
    pub mat: Mat2<f64>,
    pub log_scale: f64,
}

impl NormalizedMat {
    pub fn identity() -> Self {
        Self { mat: Mat2::identity(), log_scale: 0.0 }
    }

    pub fn log_norm(&self) -> f64 {
        self.log_scale + self.mat.norm().ln()
    }

    fn renormalize(&mut self) {
        let s = self.mat.norm();
        self.mat = self.mat.scale(1.0 / s);
        self.log_scale += s.ln();
    }
}

/// `A_n(x)` as an overflow-free matrix, renormalised every 16 steps.
pub fn matrix_product<M: CocycleMap + ?Sized>(map: &M, x: &DyadicPhase, n: usize) -> Result<NormalizedMat> {
    check_depth(x, n)?;
    let mut acc = NormalizedMat::identity();
    for k in 0..n {
        acc.mat = map.matrix_at(x.orbit_real(k))? * acc.mat;
        if (k + 1) % 16 == 0 {
            acc.renormalize();
        }
    }
    Ok(acc)
}

/// `A_n(x) e_1` and `A_n(x)`, `A_0 = I`.
pub fn transfer_product<M: CocycleMap + ?Sized>(
    map: &M,
    x: &DyadicPhase,
    n: usize,
) -> Result<(ScaledVec<f64>, NormalizedMat)> {
    check_depth(x, n)?;
    let mut vec = GrowthTracker::e1();
    let mut acc = NormalizedMat::identity();
    for k in 0..n {
        let m = map.matrix_at(x.orbit_real(k))?;
        vec.apply(&m)?;
        acc.mat = m * acc.mat;
        if (k + 1) % 16 == 0 {
            acc.renormalize();
        }
    }
    Ok((vec.finish(), acc))
}

/// `log |A_n(x) e_1|`: the per-orbit observable of the Birkhoff estimator.
pub fn log_growth_e1<M: CocycleMap + ?Sized>(map: &M, x: &DyadicPhase, n: usize) -> Result<f64> {
    check_depth(x, n)?;
    let mut vec = GrowthTracker::e1();
    for k in 0..n {
        vec.apply(&map.matrix_at(x.orbit_real(k))?)?;
    }
    Ok(vec.log_norm())
}

fn check_depth(x: &DyadicPhase, n: usize) -> Result<()> {
    if x.depth() < n {
        return Err(LabError::DepthExhausted { needed: n, available: x.depth() });
    }
    Ok(())
}

/// Compares the scalar recurrence `u_{k+1} = (E - lambda v(T^k x)) u_k - u_{k-1}`
/// with the matrix image `A_n(x) (u_0, u_{-1})`.
pub fn check_recurrence<P: Potential + ?Sized>(
    p: &CocycleParams,
    v: &P,
    x: &DyadicPhase,
    n: usize,
    u0: f64,
    u_minus1: f64,
) -> bool {
    if x.depth() < n {
        return false;
    }
    let map = Schrodinger::new(*p, v);
    let (mut cur, mut prev) = (u0, u_minus1);
    let mut prod = Mat2::identity();
    for k in 0..n {
        let y = x.orbit_real(k);
        let m = match map.matrix_at(y) {
            Ok(m) => m,
            Err(_) => return false,
        };
        let next = m.a11 * cur - prev;
        prev = cur;
        cur = next;
        prod = m * prod;
    }
    let image = prod.apply([u0, u_minus1]);
    let scale = image[0].abs().max(image[1].abs()).max(cur.abs()).max(prev.abs());
    if !scale.is_finite() {
        return false;
    }
    if scale == 0.0 {
        return true;
    }
    (image[0] - cur).abs() <= 1e-8 * scale && (image[1] - prev).abs() <= 1e-8 * scale
}
