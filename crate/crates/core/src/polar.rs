//! Polar decomposition of SL(2,R) and the large-coupling reduced cocycle.
//!
//! Any `B` with `|B| > 1` factors as `B = U1 U2 Lambda U2^t` with rotations
//! `U1`, `U2` and `Lambda = diag(|B|, 1/|B|)`. For the conjugated Schrödinger
//! matrix `[[lambda r, -1/lambda], [lambda, 0]]`, `r = t - v(x)`, the norm and
//! the rotation part have closed forms in `a(x; t, lambda)` and `f(x, t, lambda)`;
//! as `lambda -> infinity` the cocycle approaches `Lambda(2x) R_{theta(x)}` with
//! `cot theta = r`.

use crate::cocycle::{CocycleMap, CocycleParams, Mat2};
use crate::error::{LabError, Result};
use crate::lyapunov::phase_average_log_norm;
use crate::phase::DyadicGrid;
use crate::potential::{Potential, Side};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};

const ROTATION_TOL: f64 = 1e-9;
const DET_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolarParts<S> {
    pub u1: Mat2<S>,
    pub u2: Mat2<S>,
    /// `diag(s, 1/s)`, `s = |B|`.
    pub lambda: Mat2<S>,
}

impl<S: Real> PolarParts<S> {
    pub fn norm(&self) -> S {
        self.lambda.a11
    }

    pub fn reconstruct(&self) -> Mat2<S> {
        self.u1 * self.u2 * self.lambda * self.u2.transpose()
    }

    /// Relative Frobenius reconstruction error against `b`.
    pub fn reconstruction_error(&self, b: &Mat2<S>) -> S {
        let r = self.reconstruct();
        let d = Mat2::new(r.a11 - b.a11, r.a12 - b.a12, r.a21 - b.a21, r.a22 - b.a22);
        d.frobenius() / b.frobenius()
    }
}

/// `B = U1 sqrt(B^t B)`, `sqrt(B^t B) = U2 Lambda U2^t`.
///
/// `U2 = R_psi` with `psi in (-pi/2, pi/2]` the principal axis of `B^t B`.
pub fn polar_decompose<S: Real>(b: &Mat2<S>) -> Result<PolarParts<S>> {
    let det = b.det();
    if (det - S::one()).abs() > S::lit(DET_TOL) {
        return Err(LabError::NotUnimodular { det: det.to_f64_lossy() });
    }
    let s = b.norm();
    if s <= S::lit(1.0 + ROTATION_TOL) {
        return Err(LabError::RotationInput { norm: s.to_f64_lossy() });
    }
    let ata = b.transpose() * *b;
    let half = S::lit(0.5);
    let psi = half * (S::lit(2.0) * ata.a12).atan2(ata.a11 - ata.a22);
    let u2 = Mat2::rotation(psi);
    // B U2 e1 = |B| U1 U2 e1; the expanded direction fixes U1 without the
    // cancellation that B Lambda^{-1} suffers in its contracted column.
    let top = b.apply([u2.a11, u2.a21]);
    let u1 = Mat2::rotation(top[1].atan2(top[0]) - psi);
    Ok(PolarParts { u1, u2, lambda: Mat2::diag(s, S::one() / s) })
}

/// `g = r^2 + 1`.
pub fn g_from_r<S: Real>(r: S) -> S {
    r * r + S::one()
}

/// The `theta in (0, pi)` with `cot theta = r`.
pub fn theta_from_r<S: Real>(r: S) -> S {
    S::one().atan2(r)
}

/// `a = r^2 + 1 + lambda^-4 + sqrt((r^2 + 1 + lambda^-4)^2 - 4 lambda^-4)`.
pub fn a_from_r<S: Real>(r: S, lambda: S) -> S {
    let l4 = (lambda * lambda * lambda * lambda).recip();
    let b = r * r + S::one() + l4;
    let rad = (b * b - S::lit(4.0) * l4).max(S::zero());
    b + rad.sqrt()
}

/// `f = ((a - 2 lambda^-4)^2 + 4 lambda^-4 r^2)^{-1/2}`.
pub fn f_from_r<S: Real>(r: S, lambda: S) -> S {
    let l4 = (lambda * lambda * lambda * lambda).recip();
    let a = a_from_r(r, lambda);
    let d = a - S::lit(2.0) * l4;
    (d * d + S::lit(4.0) * l4 * r * r).sqrt().recip()
}

/// Upper-left entry of the rotation part `O(x) = U2^t(Tx) U1(x) U2(x)`,
/// given `r(x)` and `r(Tx)`:
///
/// ```text
/// sqrt(2/a(x)) f(Tx) f(x) [al(Tx) al(x) r(x) + 2 al(Tx) r(x) / lambda^4 - 2 r(Tx) al(x) / lambda^2]
/// ```
///
/// with `al = a - 2/lambda^4`.
pub fn c_from_r<S: Real>(r_x: S, r_tx: S, lambda: S) -> S {
    let two = S::lit(2.0);
    let l2 = lambda * lambda;
    let l4 = l2 * l2;
    let a_x = a_from_r(r_x, lambda);
    let al_x = a_x - two / l4;
    let al_tx = a_from_r(r_tx, lambda) - two / l4;
    let f_x = f_from_r(r_x, lambda);
    let f_tx = f_from_r(r_tx, lambda);
    (two / a_x).sqrt() * f_tx * f_x * (al_tx * al_x * r_x + two * al_tx * r_x / l4 - two * r_tx * al_x / l2)
}

/// The four-term closed form `c_4 [r(x) - 2r(Tx)/(lambda^2 a(Tx)) + 2r(x)/(lambda^4 a(Tx))
/// - 4r(Tx)/(lambda^6 a(x) a(Tx))]` with `c_4 = sqrt(2/a(x)) f(Tx) f(x) a(Tx) a(x)`.
///
/// It agrees with [`c_from_r`] up to `O(lambda^-4)`, which is all the
/// large-coupling limit needs.
pub fn c_four_term<S: Real>(r_x: S, r_tx: S, lambda: S) -> S {
    let two = S::lit(2.0);
    let l2 = lambda * lambda;
    let l4 = l2 * l2;
    let l6 = l4 * l2;
    let (a_x, a_tx) = (a_from_r(r_x, lambda), a_from_r(r_tx, lambda));
    let (f_x, f_tx) = (f_from_r(r_x, lambda), f_from_r(r_tx, lambda));
    let c4 = (two / a_x).sqrt() * f_tx * f_x * a_tx * a_x;
    c4 * (r_x - two * r_tx / (l2 * a_tx) + two * r_x / (l4 * a_tx)
        - S::lit(4.0) * r_tx / (l6 * a_x * a_tx))
}

/// The `lambda -> infinity` limit `r / sqrt(r^2 + 1)`.
pub fn c_limit_from_r<S: Real>(r: S) -> S {
    r / g_from_r(r).sqrt()
}

/// `U2` as printed for the conjugated Schrödinger matrix:
/// `f [[a - 2/lambda^4, 2r/lambda^2], [-2r/lambda^2, a - 2/lambda^4]]`.
pub fn u2_closed_form<S: Real>(r: S, lambda: S) -> Mat2<S> {
    let l2 = lambda * lambda;
    let d = a_from_r(r, lambda) - S::lit(2.0) / (l2 * l2);
    let o = S::lit(2.0) * r / l2;
    Mat2::new(d, o, -o, d).scale(f_from_r(r, lambda))
}

fn r_at<P: Potential + ?Sized>(v: &P, x: f64, t: f64) -> Result<f64> {
    Ok(t - v.eval(x)?)
}

/// `g(x, t) = (t - v(x))^2 + 1`.
pub fn g<P: Potential + ?Sized>(v: &P, x: f64, t: f64) -> Result<f64> {
    r_at(v, x, t).map(g_from_r)
}

/// `theta(x; t) in (0, pi)` with `cot theta = t - v(x)`.
pub fn theta0<P: Potential + ?Sized>(v: &P, x: f64, t: f64) -> Result<f64> {
    r_at(v, x, t).map(theta_from_r)
}

pub fn a_value<P: Potential + ?Sized>(v: &P, x: f64, t: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    r_at(v, x, t).map(|r| a_from_r(r, lambda))
}

pub fn f_value<P: Potential + ?Sized>(v: &P, x: f64, t: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    r_at(v, x, t).map(|r| f_from_r(r, lambda))
}

/// `c(x, t, lambda)`; needs both `x` and `Tx` away from the jump of `v`.
pub fn c_entry<P: Potential + ?Sized>(v: &P, x: f64, t: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let tx = crate::phase::doubling_orbit_point(x, 1);
    let r_x = r_at(v, x, t)?;
    let r_tx = r_at(v, tx, t).map_err(|_| LabError::Domain { x, reason: "Tx hits the discontinuity of v" })?;
    Ok(c_from_r(r_x, r_tx, lambda))
}

/// `c(x, t, infinity) = (t - v(x)) / sqrt((t - v(x))^2 + 1)`.
pub fn c_limit<P: Potential + ?Sized>(v: &P, x: f64, t: f64) -> Result<f64> {
    r_at(v, x, t).map(c_limit_from_r)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(LabError::InvalidParameter(format!("lambda must be positive, got {lambda}")))
    }
}

/// `A(x; t, lambda) = Lambda(2x) R_{theta(x; t)}`,
/// `Lambda(y) = diag(lambda sqrt(g(y)), 1 / (lambda sqrt(g(y))))`.
pub struct ReducedCocycle<'a, P: ?Sized> {
    pub params: CocycleParams,
    pub potential: &'a P,
}

impl<'a, P: Potential + ?Sized> ReducedCocycle<'a, P> {
    pub fn new(params: CocycleParams, potential: &'a P) -> Self {
        Self { params, potential }
    }

    fn matrix_from_values(&self, v_x: f64, v_tx: f64) -> Mat2<f64> {
        let t = self.params.t;
        let s = self.params.lambda * g_from_r(t - v_tx).sqrt();
        Mat2::diag(s, 1.0 / s) * Mat2::rotation(theta_from_r(t - v_x))
    }

    /// Strict evaluation: `x` and `2x mod 1` must avoid the jump of `v`.
    pub fn reduced_matrix(&self, x: f64) -> Result<Mat2<f64>> {
        let tx = crate::phase::doubling_orbit_point(x, 1);
        let v_x = self.potential.eval(x)?;
        let v_tx = self
            .potential
            .eval(tx)
            .map_err(|_| LabError::Domain { x, reason: "2x mod 1 hits the discontinuity of v" })?;
        Ok(self.matrix_from_values(v_x, v_tx))
    }
}

impl<P: Potential + ?Sized> CocycleMap for ReducedCocycle<'_, P> {
    fn matrix_at(&self, y: f64) -> Result<Mat2<f64>> {
        let ty = crate::phase::doubling_orbit_point(y, 1);
        let v_x = self.potential.on_circle(y, Side::Right).0;
        let v_tx = self.potential.on_circle(ty, Side::Right).0;
        Ok(self.matrix_from_values(v_x, v_tx))
    }
}

/// Polar normal form `M(x) = Lambda(Tx) O(x)` of the conjugated Schrödinger
/// cocycle, with `O(x) = U2^t(Tx) U1(x) U2(x)` from numerical decompositions.
///
/// `M(x) = W(Tx) B(x) W(x)^{-1}` for `W = Lambda U2^t`, so `M` and `B` share
/// their exponent, while `M` has the same factor layout as the reduced cocycle.
pub struct PolarNormalForm<'a, P: ?Sized> {
    pub params: CocycleParams,
    pub potential: &'a P,
}

impl<'a, P: Potential + ?Sized> PolarNormalForm<'a, P> {
    pub fn new(params: CocycleParams, potential: &'a P) -> Self {
        Self { params, potential }
    }

    fn parts(&self, y: f64) -> Result<PolarParts<f64>> {
        let v = self.potential.on_circle(y, Side::Right).0;
        polar_decompose(&crate::cocycle::conjugated_matrix(&self.params, v))
    }
}

impl<P: Potential + ?Sized> CocycleMap for PolarNormalForm<'_, P> {
    fn matrix_at(&self, y: f64) -> Result<Mat2<f64>> {
        let here = self.parts(y)?;
        let next = self.parts(crate::phase::doubling_orbit_point(y, 1))?;
        Ok(next.lambda * next.u2.transpose() * here.u1 * here.u2)
    }
}

/// Finite-`n` phase-averaged exponents of the conjugated Schrödinger cocycle,
/// its polar normal form and the reduced cocycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub lambda: f64,
    pub t: f64,
    pub n: usize,
    pub grid_level: u32,
    pub conjugated: f64,
    pub normal_form: f64,
    pub reduced: f64,
    /// `|normal_form - reduced|`.
    pub gap: f64,
    /// `gap * lambda^2`.
    pub scaled_gap: f64,
    /// `|conjugated - reduced|`; includes an `O(log(lambda) / n)` boundary term.
    pub raw_gap: f64,
}

pub fn le_gap_check<P: Potential + ?Sized>(
    v: &P,
    t: f64,
    lambda: f64,
    n: usize,
    grid: DyadicGrid,
) -> Result<GapReport> {
    let params = CocycleParams::new(lambda, t)?;
    let conjugated = phase_average_log_norm(&crate::cocycle::Conjugated::new(params, v), n, grid)?;
    let normal_form = phase_average_log_norm(&PolarNormalForm::new(params, v), n, grid)?;
    let reduced = phase_average_log_norm(&ReducedCocycle::new(params, v), n, grid)?;
    let gap = (normal_form - reduced).abs();
    Ok(GapReport {
        lambda,
        t,
        n,
        grid_level: grid.level(),
        conjugated,
        normal_form,
        reduced,
        gap,
        scaled_gap: gap * lambda * lambda,
        raw_gap: (conjugated - reduced).abs(),
    })
}
