//! Lifted angle recursion for the reduced cocycle `Lambda(2x) R_theta(x)`.
//!
//! `theta_n(x)` is the lifted direction of `R_{theta(T^n x)} A_n(x) e_1`:
//!
//! ```text
//! theta_0 = theta(x),
//! phi_n   = arccot(lambda^2 g(T^n x) cot theta_{n-1}),
//! theta_n = phi_n + theta(T^n x).
//! ```
//!
//! `phi_n` is evaluated as `atan2(sin, kappa cos)` and lifted next to
//! `theta_{n-1}`: a positive diagonal matrix keeps every vector in its
//! quadrant, so the image angle differs from the input by less than `pi/2`.
//! The lift is a pointwise function of `x`, continuous on each
//! `I_{n,j} = [j/2^n, (j+1)/2^n)` and with one-sided limits at the edges.

use crate::cocycle::{projective_distance, CocycleMap, CocycleParams, GrowthTracker};
use crate::error::{LabError, Result};
use crate::phase::{doubling_orbit_point, DyadicGrid};
use crate::polar::ReducedCocycle;
use crate::potential::{Potential, Side};
use crate::quadrature::GaussRule;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::io::Write;

/// Width of the first shell around a critical level.
pub const SHELL_DELTA: f64 = 1.0 / 3.0;
/// Number of dyadic shells resolved by quadrature before the analytic tail.
pub const SHELL_DEPTH: u32 = 40;
/// Largest automatic grid refinement.
pub const MAX_REFINED_LEVEL: u32 = 26;

const GAUSS_ORDER: usize = 8;
const MAX_PIECE_ANGLE: f64 = 0.2;

/// A lifted angle function with jumps only on `j / 2^level`.
pub trait AngleFunction: Sync {
    fn segment_level(&self) -> u32;
    /// `(theta, dtheta/dx)` at `x in [0, 1]`; `side` picks the one-sided limit
    /// at segment edges (`x = 1` with `Side::Left` is the left limit at 1).
    fn angle(&self, x: f64, side: Side) -> (f64, f64);
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnglePoint {
    pub theta: f64,
    /// `phi_n mod pi`, in `(0, pi]`; equal to `theta_0` for `n = 0`.
    pub phi: f64,
    pub dtheta: f64,
}

/// Potential, reduced energy and coupling of the reduced cocycle.
pub struct AngleModel<'a, P: ?Sized> {
    pub potential: &'a P,
    pub t: f64,
    pub lambda: f64,
}

impl<P: ?Sized> Clone for AngleModel<'_, P> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<P: ?Sized> Copy for AngleModel<'_, P> {}

impl<'a, P: Potential + ?Sized> AngleModel<'a, P> {
    pub fn new(potential: &'a P, t: f64, lambda: f64) -> Result<Self> {
        CocycleParams::new(lambda, t)?;
        Ok(Self { potential, t, lambda })
    }

    pub fn params(&self) -> CocycleParams {
        CocycleParams { lambda: self.lambda, t: self.t }
    }

    /// `(theta, dtheta/dx)` of `theta(y) = arccot(t - v(y))` and `g(y)`.
    fn base(&self, y: f64, side: Side) -> (f64, f64, f64, f64) {
        let (v, dv) = self.potential.on_circle(y, side);
        let r = self.t - v;
        let g = r * r + 1.0;
        (1.0f64.atan2(r), dv / g, r, g)
    }

    /// `theta_n(x)` with its derivative.
    pub fn eval(&self, x: f64, n: u32, side: Side) -> AnglePoint {
        let x = x - x.floor();
        let (theta0, d0, _, _) = self.base(x, side);
        let (mut theta, mut dtheta, mut phi) = (theta0, d0, theta0);
        let l2 = self.lambda * self.lambda;
        for k in 1..=n {
            let y = doubling_orbit_point(x, k);
            let (v, dv) = self.potential.on_circle(y, side);
            let r = self.t - v;
            let g = r * r + 1.0;
            let kappa = l2 * g;
            let (s, c) = theta.sin_cos();
            let raw = s.atan2(kappa * c);
            let psi = theta + wrap_pm_pi(raw - theta);
            let d = s * s + kappa * kappa * c * c;
            let scale = (k as f64).exp2();
            // d(kappa)/dx = lambda^2 g'(T^k x) 2^k with g' = -2 r v'.
            let dkappa = l2 * (-2.0 * r * dv) * scale;
            let dpsi = (kappa / d) * dtheta - (s * c / d) * dkappa;
            theta = psi + 1.0f64.atan2(r);
            dtheta = dpsi + scale * dv / g;
            phi = psi.rem_euclid(PI);
            if phi == 0.0 {
                phi = PI;
            }
        }
        AnglePoint { theta, phi, dtheta }
    }

    /// `theta_0 .. theta_n` at one point.
    pub fn eval_all(&self, x: f64, n: u32, side: Side) -> Vec<AnglePoint> {
        (0..=n).map(|k| self.eval(x, k, side)).collect()
    }

    /// Direction of `R_{theta(T^n x)} A_n(x) e_1` built from reduced-model
    /// matrices, in `[0, 2 pi)`.
    pub fn matrix_direction(&self, x: f64, n: u32) -> Result<f64> {
        let map = ReducedCocycle::new(self.params(), self.potential);
        let mut w = GrowthTracker::e1();
        for k in 0..n {
            w.apply(&map.matrix_at(doubling_orbit_point(x, k))?)?;
        }
        let (th, _, _, _) = self.base(doubling_orbit_point(x, n), Side::Right);
        let dir = w.finish().angle + th;
        Ok(dir.rem_euclid(TAU))
    }

    /// `theta_n` restricted to level `n`, as an [`AngleFunction`].
    pub fn at_level(&self, n: u32) -> LevelAngle<'_, 'a, P> {
        LevelAngle { model: self, n }
    }
}

/// `theta_n` for a fixed `n`.
pub struct LevelAngle<'m, 'a, P: ?Sized> {
    model: &'m AngleModel<'a, P>,
    n: u32,
}

impl<P: Potential + ?Sized> AngleFunction for LevelAngle<'_, '_, P> {
    fn segment_level(&self) -> u32 {
        self.n
    }

    fn angle(&self, x: f64, side: Side) -> (f64, f64) {
        let x = if x >= 1.0 { 0.0 } else { x };
        let p = self.model.eval(x, self.n, side);
        (p.theta, p.dtheta)
    }
}

fn wrap_pm_pi(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// `theta_n`, `phi_n` and `dtheta_n` sampled on a dyadic midpoint grid.
#[derive(Clone, Debug)]
pub struct AngleField {
    pub n: u32,
    pub grid: DyadicGrid,
    pub t: f64,
    pub lambda: f64,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    pub dtheta: Vec<f64>,
    pub segment_id: Vec<u32>,
}

impl AngleField {
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Largest jump of `theta` between adjacent grid points of one segment.
    pub fn max_adjacent_step(&self) -> f64 {
        self.adjacent_pairs().map(|(a, b)| (b - a).abs()).fold(0.0, f64::max)
    }

    /// Adjacent pairs within a segment where `theta` fails to increase.
    pub fn inversions(&self) -> usize {
        self.adjacent_pairs().filter(|(a, b)| b <= a).count()
    }

    fn adjacent_pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (1..self.len())
            .filter(|&i| self.segment_id[i] == self.segment_id[i - 1])
            .map(|i| (self.theta[i - 1], self.theta[i]))
    }

    pub fn min_dtheta(&self) -> (f64, f64) {
        let (i, d) = self
            .dtheta
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, d)| if d < acc.1 { (i, d) } else { acc });
        (self.grid.point(i), d)
    }

    /// CSV with columns `x, n, theta, phi, dtheta, segment_id`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "n", "theta", "phi", "dtheta", "segment_id"])?;
        for i in 0..self.len() {
            w.write_record([
                self.grid.point(i).to_string(),
                self.n.to_string(),
                self.theta[i].to_string(),
                self.phi[i].to_string(),
                self.dtheta[i].to_string(),
                self.segment_id[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `theta_0` on the grid.
pub fn build_theta0<P: Potential + ?Sized>(model: &AngleModel<'_, P>, grid: DyadicGrid) -> AngleField {
    let pts: Vec<AnglePoint> = (0..grid.len())
        .into_par_iter()
        .map(|i| model.eval(grid.point(i), 0, Side::Right))
        .collect();
    assemble(model, grid, 0, pts)
}

/// `theta_n` from `theta_{n-1}` on the same grid.
pub fn advance<P: Potential + ?Sized>(field: &AngleField, model: &AngleModel<'_, P>) -> Result<AngleField> {
    let n = field.n + 1;
    if field.grid.level() < n + 1 {
        return Err(LabError::GridTooCoarse { level: field.grid.level(), required: n + 1 });
    }
    let l2 = model.lambda * model.lambda;
    let scale = (n as f64).exp2();
    let pts: Vec<AnglePoint> = (0..field.len())
        .into_par_iter()
        .map(|i| {
            let x = field.grid.point(i);
            let y = doubling_orbit_point(x, n);
            let (v, dv) = model.potential.on_circle(y, Side::Right);
            let r = model.t - v;
            let g = r * r + 1.0;
            let kappa = l2 * g;
            let prev = field.theta[i];
            let (s, c) = prev.sin_cos();
            let psi = prev + wrap_pm_pi(s.atan2(kappa * c) - prev);
            let d = s * s + kappa * kappa * c * c;
            let dpsi = (kappa / d) * field.dtheta[i] - (s * c / d) * l2 * (-2.0 * r * dv) * scale;
            let mut phi = psi.rem_euclid(PI);
            if phi == 0.0 {
                phi = PI;
            }
            AnglePoint { theta: psi + 1.0f64.atan2(r), phi, dtheta: dpsi + scale * dv / g }
        })
        .collect();
    Ok(assemble(model, field.grid, n, pts))
}

fn assemble<P: ?Sized>(model: &AngleModel<'_, P>, grid: DyadicGrid, n: u32, pts: Vec<AnglePoint>) -> AngleField {
    let shift = grid.level() - n.min(grid.level());
    AngleField {
        n,
        grid,
        t: model.t,
        lambda: model.lambda,
        theta: pts.iter().map(|p| p.theta).collect(),
        phi: pts.iter().map(|p| p.phi).collect(),
        dtheta: pts.iter().map(|p| p.dtheta).collect(),
        segment_id: (0..pts.len()).map(|i| (i >> shift) as u32).collect(),
    }
}

/// `theta_0 .. theta_n_max` on a common grid.
pub fn build_fields<P: Potential + ?Sized>(
    model: &AngleModel<'_, P>,
    n_max: u32,
    grid: DyadicGrid,
) -> Result<Vec<AngleField>> {
    let mut fields = vec![build_theta0(model, grid)];
    for _ in 0..n_max {
        let next = advance(fields.last().expect("non-empty"), model)?;
        fields.push(next);
    }
    Ok(fields)
}

/// `{ j / 2^n }`.
pub fn discontinuity_set(n: u32) -> Vec<f64> {
    let m = 1u64 << n;
    (0..m).map(|j| j as f64 / m as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub n: u32,
    pub probes: usize,
    /// Largest `|theta(x+h) - theta(x-h)| - 4 h |theta'(x)|` at non-dyadic probes.
    pub max_interior_excess: f64,
    /// Smallest one-sided jump at the points of `D_n \ {0}` (informational).
    pub min_edge_jump: f64,
    pub passed: bool,
}

/// Confirms that `theta_n` is continuous away from `D_n`.
pub fn continuity_probe<P: Potential + ?Sized>(model: &AngleModel<'_, P>, n: u32, probes: &[f64]) -> ContinuityReport {
    let h = (-40f64).exp2();
    let mut excess = 0f64;
    for &x in probes {
        let dyadic = (x * (n as f64).exp2()).fract() == 0.0;
        if dyadic {
            continue;
        }
        let p = model.eval(x, n, Side::Right);
        let a = model.eval(x - h, n, Side::Right).theta;
        let b = model.eval(x + h, n, Side::Right).theta;
        excess = excess.max((b - a).abs() - 4.0 * h * p.dtheta.abs());
    }
    let min_edge_jump = discontinuity_set(n)
        .into_iter()
        .skip(1)
        .map(|x| (model.eval(x, n, Side::Right).theta - model.eval(x, n, Side::Left).theta).abs())
        .fold(f64::INFINITY, f64::min);
    ContinuityReport { n, probes: probes.len(), max_interior_excess: excess, min_edge_jump, passed: excess <= 1e-9 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelMinimum {
    pub n: u32,
    pub x: f64,
    /// `min_x dtheta_n / 2^n`.
    pub scaled_min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub levels: Vec<LevelMinimum>,
    /// Largest `c` with `dtheta_n > c 2^n` on the grid for every level.
    pub fitted_c: f64,
    pub c_target: f64,
    pub passed: bool,
}

pub fn derivative_bound_check(fields: &[AngleField], c_target: f64) -> DerivativeReport {
    let levels: Vec<LevelMinimum> = fields
        .iter()
        .map(|f| {
            let (x, d) = f.min_dtheta();
            LevelMinimum { n: f.n, x, scaled_min: d / (f.n as f64).exp2() }
        })
        .collect();
    let fitted_c = levels.iter().map(|l| l.scaled_min).fold(f64::INFINITY, f64::min);
    DerivativeReport { passed: fitted_c > 0.0 && fitted_c >= c_target, levels, fitted_c, c_target }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteDifferenceReport {
    pub n: u32,
    pub probes: usize,
    pub max_rel_error: f64,
    pub worst_x: f64,
}

/// Analytic `dtheta_n` against Richardson-extrapolated central differences.
///
/// The first step is a power of two with `h |theta'| <= 1e-3`, kept well
/// inside the probe's continuity segment; it is halved until two successive
/// extrapolations agree.
pub fn derivative_fd_check<P: Potential + ?Sized>(
    model: &AngleModel<'_, P>,
    n: u32,
    probes: &[f64],
) -> FiniteDifferenceReport {
    let seg = (-(n as f64)).exp2();
    let mut worst = (0.0, f64::NAN);
    for &x in probes {
        let p = model.eval(x, n, Side::Right);
        let offset = (x / seg).fract() * seg;
        let room = offset.min(seg - offset);
        let mut h = 1.0f64;
        while h * p.dtheta.abs() > 1e-3 || 4.0 * h > room {
            h *= 0.5;
            if h < 1e-15 {
                break;
            }
        }
        let diff = |h: f64| {
            (model.eval(x + h, n, Side::Right).theta - model.eval(x - h, n, Side::Right).theta) / (2.0 * h)
        };
        let rich = |h: f64| (4.0 * diff(h / 2.0) - diff(h)) / 3.0;
        let mut est = rich(h);
        while h > 1e-10 {
            h *= 0.5;
            let next = rich(h);
            let settled = (next - est).abs() <= 1e-8 * next.abs();
            est = next;
            if settled {
                break;
            }
        }
        let rel = ((est - p.dtheta) / p.dtheta).abs();
        if rel > worst.0 || worst.1.is_nan() {
            worst = (rel, x);
        }
    }
    FiniteDifferenceReport { n, probes: probes.len(), max_rel_error: worst.0, worst_x: worst.1 }
}

/// Nodes of one continuity segment: both edges plus interior grid points.
struct Segment {
    xs: Vec<f64>,
    th: Vec<f64>,
}

impl Segment {
    fn new<F: AngleFunction + ?Sized>(f: &F, j: usize, grid: DyadicGrid, grid_theta: Option<&[f64]>) -> Self {
        let level = f.segment_level();
        let width = (-(level as f64)).exp2();
        let lo = j as f64 * width;
        let hi = (j + 1) as f64 * width;
        let per = grid.len() >> level.min(grid.level());
        let first = j * per;
        let mut xs = Vec::with_capacity(per + 2);
        let mut th = Vec::with_capacity(per + 2);
        xs.push(lo);
        th.push(f.angle(lo, Side::Right).0);
        for i in first..first + per {
            xs.push(grid.point(i));
            th.push(match grid_theta {
                Some(v) => v[i],
                None => f.angle(grid.point(i), Side::Right).0,
            });
        }
        xs.push(hi);
        th.push(f.angle(hi, Side::Left).0);
        Self { xs, th }
    }

    fn lo(&self) -> f64 {
        self.xs[0]
    }

    fn hi(&self) -> f64 {
        *self.xs.last().expect("segment has edges")
    }

    fn theta_lo(&self) -> f64 {
        self.th[0]
    }

    fn theta_hi(&self) -> f64 {
        *self.th.last().expect("segment has edges")
    }

    fn monotone(&self) -> bool {
        self.th.windows(2).all(|w| w[1] >= w[0])
    }

    /// Smallest `x` in the segment with `theta(x) = target`, for `target`
    /// between the edge values of a monotone segment.
    fn preimage<F: AngleFunction + ?Sized>(&self, f: &F, target: f64) -> f64 {
        if target <= self.theta_lo() {
            return self.lo();
        }
        if target >= self.theta_hi() {
            return self.hi();
        }
        let i = self.th.partition_point(|&v| v < target).clamp(1, self.th.len() - 1);
        solve_in_cell(f, self.xs[i - 1], self.xs[i], target)
    }
}

/// Safeguarded Newton iteration for `theta(x) = target` on `[a, b]`.
fn solve_in_cell<F: AngleFunction + ?Sized>(f: &F, mut a: f64, mut b: f64, target: f64) -> f64 {
    let tol = 4.0 * f64::EPSILON * target.abs().max(1.0);
    let mut x = 0.5 * (a + b);
    for _ in 0..200 {
        let (th, d) = f.angle(x, Side::Right);
        let err = th - target;
        if err.abs() <= tol {
            return x;
        }
        if err < 0.0 {
            a = x;
        } else {
            b = x;
        }
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            return x;
        }
        let newton = x - err / d;
        x = if d > 0.0 && newton > a && newton < b { newton } else { mid };
    }
    x
}

fn level_index(theta: f64) -> f64 {
    ((theta - FRAC_PI_2) / PI).floor()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiscountWarning {
    pub cell_lo: f64,
    pub cell_hi: f64,
    pub crossings: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoints {
    pub n: u32,
    pub grid_level: u32,
    pub points: Vec<f64>,
    pub bound: u64,
    pub warnings: Vec<MiscountWarning>,
    /// Grid cells where the lift decreased.
    pub inversions: usize,
}

impl CriticalPoints {
    pub fn count(&self) -> usize {
        self.points.len()
    }

    pub fn within_bound(&self) -> bool {
        (self.points.len() as u64) <= self.bound
    }
}

/// Solutions of `theta(x) in pi Z + pi/2`, one per crossing of the lift.
pub fn critical_points_of<F: AngleFunction + ?Sized>(
    f: &F,
    grid: DyadicGrid,
    grid_theta: Option<&[f64]>,
) -> Result<CriticalPoints> {
    let level = f.segment_level();
    if grid.level() < level {
        return Err(LabError::GridTooCoarse { level: grid.level(), required: level });
    }
    let per_segment: Vec<(Vec<f64>, Vec<MiscountWarning>, usize)> = (0..1usize << level)
        .into_par_iter()
        .map(|j| {
            let seg = Segment::new(f, j, grid, grid_theta);
            let mut roots = Vec::new();
            let mut warnings = Vec::new();
            let mut inversions = 0;
            for c in 0..seg.xs.len() - 1 {
                let (ta, tb) = (seg.th[c], seg.th[c + 1]);
                let (ka, kb) = (level_index(ta), level_index(tb));
                let crossings = (kb - ka).abs() as u32;
                if tb < ta {
                    inversions += 1;
                }
                if crossings >= 2 {
                    warnings.push(MiscountWarning { cell_lo: seg.xs[c], cell_hi: seg.xs[c + 1], crossings });
                }
                let (lo_k, hi_k) = if ka <= kb { (ka, kb) } else { (kb, ka) };
                let mut k = lo_k + 1.0;
                while k <= hi_k {
                    let target = FRAC_PI_2 + k * PI;
                    let root = if ta <= tb {
                        solve_in_cell(f, seg.xs[c], seg.xs[c + 1], target)
                    } else {
                        bisect_decreasing(f, seg.xs[c], seg.xs[c + 1], target)
                    };
                    roots.push(root);
                    k += 1.0;
                }
            }
            (roots, warnings, inversions)
        })
        .collect();
    let mut points = Vec::new();
    let mut warnings = Vec::new();
    let mut inversions = 0;
    for (r, w, i) in per_segment {
        points.extend(r);
        warnings.extend(w);
        inversions += i;
    }
    Ok(CriticalPoints {
        n: level,
        grid_level: grid.level(),
        points,
        bound: (1u64 << (level + 1)) - 1,
        warnings,
        inversions,
    })
}

fn bisect_decreasing<F: AngleFunction + ?Sized>(f: &F, mut a: f64, mut b: f64, target: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let th = f.angle(mid, Side::Right).0;
        if th.cos().abs() < 1e-10 && (th - target).abs() < 1.0 {
            return mid;
        }
        if th > target {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Critical points of `theta_n` on `field`'s grid.
pub fn critical_points<P: Potential + ?Sized>(model: &AngleModel<'_, P>, field: &AngleField) -> Result<CriticalPoints> {
    critical_points_of(&model.at_level(field.n), field.grid, Some(&field.theta))
}

/// Critical points with automatic refinement: the grid level grows from
/// `start_level` until no cell holds two crossings, up to level 26.
pub fn critical_points_refined<P: Potential + ?Sized>(
    model: &AngleModel<'_, P>,
    n: u32,
    start_level: u32,
) -> Result<CriticalPoints> {
    let f = model.at_level(n);
    let mut level = start_level.max(n).max(1);
    loop {
        let report = critical_points_of(&f, DyadicGrid::new(level)?, None)?;
        if report.warnings.is_empty() || level >= MAX_REFINED_LEVEL {
            return Ok(report);
        }
        level += 1;
    }
}

/// `Leb { x : dist(theta(x) - pi/2, pi Z) < delta }`, `0 < delta <= pi/2`.
pub fn bad_set_measure_of<F: AngleFunction + ?Sized>(
    f: &F,
    grid: DyadicGrid,
    grid_theta: Option<&[f64]>,
    delta: f64,
) -> Result<f64> {
    if !(delta > 0.0 && delta <= FRAC_PI_2) {
        return Err(LabError::InvalidParameter(format!("delta must lie in (0, pi/2], got {delta}")));
    }
    let level = f.segment_level();
    if grid.level() < level {
        return Err(LabError::GridTooCoarse { level: grid.level(), required: level });
    }
    let parts: Vec<f64> = (0..1usize << level)
        .into_par_iter()
        .map(|j| {
            let seg = Segment::new(f, j, grid, grid_theta);
            if seg.monotone() {
                bad_measure_monotone(f, &seg, delta)
            } else {
                bad_measure_cells(&seg, delta)
            }
        })
        .collect();
    Ok(parts.iter().sum())
}

fn bad_measure_monotone<F: AngleFunction + ?Sized>(f: &F, seg: &Segment, delta: f64) -> f64 {
    let (lo, hi) = (seg.theta_lo(), seg.theta_hi());
    let k0 = ((lo - delta - FRAC_PI_2) / PI).floor() as i64;
    let k1 = ((hi + delta - FRAC_PI_2) / PI).ceil() as i64;
    let mut total = 0.0;
    for k in k0..=k1 {
        let level = FRAC_PI_2 + k as f64 * PI;
        let a = (level - delta).max(lo);
        let b = (level + delta).min(hi);
        if b > a {
            total += seg.preimage(f, b) - seg.preimage(f, a);
        }
    }
    total
}

/// Fallback for segments where the lift is not monotone: grid cells whose
/// midpoint lies in the set.
fn bad_measure_cells(seg: &Segment, delta: f64) -> f64 {
    seg.xs
        .windows(2)
        .zip(seg.th.windows(2))
        .filter(|(_, t)| projective_distance(0.5 * (t[0] + t[1]), FRAC_PI_2) < delta)
        .map(|(x, _)| x[1] - x[0])
        .sum()
}

pub fn bad_set_measure<P: Potential + ?Sized>(model: &AngleModel<'_, P>, field: &AngleField, delta: f64) -> Result<f64> {
    bad_set_measure_of(&model.at_level(field.n), field.grid, Some(&field.theta), delta)
}

/// `int_0^1 log|cos theta(x)| dx`.
///
/// Each monotone segment is cut at the preimages of `L +- delta 2^-i`
/// (`delta = 1/3`, `i <= 40`) around every critical level `L`, and into
/// pieces with angular width at most 0.2 elsewhere; every piece gets an
/// 8-point Gauss rule. The innermost shell uses `log|cos| ~ log|theta - L|`
/// with the local slope, which integrates in closed form.
pub fn log_cos_integral_of<F: AngleFunction + ?Sized>(
    f: &F,
    grid: DyadicGrid,
    grid_theta: Option<&[f64]>,
) -> Result<f64> {
    let level = f.segment_level();
    if grid.level() < level {
        return Err(LabError::GridTooCoarse { level: grid.level(), required: level });
    }
    let rule = GaussRule::new(GAUSS_ORDER);
    let parts: Vec<f64> = (0..1usize << level)
        .into_par_iter()
        .map(|j| {
            let seg = Segment::new(f, j, grid, grid_theta);
            if seg.monotone() {
                log_cos_monotone(f, &seg, &rule)
            } else {
                seg.xs
                    .windows(2)
                    .map(|w| rule.integrate(w[0], w[1], |x| log_abs_cos(f.angle(x, Side::Right).0)))
                    .sum()
            }
        })
        .collect();
    Ok(parts.iter().sum::<f64>().min(0.0))
}

fn log_abs_cos(theta: f64) -> f64 {
    theta.cos().abs().max(f64::MIN_POSITIVE).ln()
}

fn log_cos_monotone<F: AngleFunction + ?Sized>(f: &F, seg: &Segment, rule: &GaussRule) -> f64 {
    let (lo, hi) = (seg.theta_lo(), seg.theta_hi());
    if hi - lo <= 0.0 {
        let th = seg.th[0];
        return (seg.hi() - seg.lo()) * log_abs_cos(th);
    }
    let inner = SHELL_DELTA * (-(SHELL_DEPTH as f64)).exp2();
    let mut cuts = vec![lo, hi];
    let mut tails = Vec::new();
    let k0 = level_index(lo) as i64;
    let k1 = level_index(hi) as i64 + 1;
    for k in k0..=k1 {
        let level = FRAC_PI_2 + k as f64 * PI;
        for i in 0..=SHELL_DEPTH {
            let w = SHELL_DELTA * (-(i as f64)).exp2();
            cuts.push(level - w);
            cuts.push(level + w);
        }
        // Far region between this level's outer shell and the next level's.
        let (a, b) = (level + SHELL_DELTA, level + PI - SHELL_DELTA);
        let pieces = ((b - a) / MAX_PIECE_ANGLE).ceil() as usize;
        for p in 1..pieces {
            cuts.push(a + (b - a) * p as f64 / pieces as f64);
        }
        if level > lo && level < hi {
            tails.push(level);
        }
    }
    cuts.retain(|&c| c >= lo && c <= hi);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let xs: Vec<f64> = cuts.iter().map(|&c| seg.preimage(f, c)).collect();
    let mut total = 0.0;
    for w in 0..cuts.len() - 1 {
        let (ta, tb) = (cuts[w], cuts[w + 1]);
        let mid = 0.5 * (ta + tb);
        let near = tails.iter().any(|&l| (mid - l).abs() < inner);
        if near {
            continue;
        }
        total += rule.integrate(xs[w], xs[w + 1], |x| log_abs_cos(f.angle(x, Side::Right).0));
    }
    for &level in &tails {
        let root = seg.preimage(f, level);
        let slope = f.angle(root, Side::Right).1;
        for e in [(level - lo).min(inner), (hi - level).min(inner)] {
            if e > 0.0 && slope > 0.0 {
                total += e / slope * (e.ln() - 1.0);
            }
        }
    }
    total
}

pub fn log_cos_integral<P: Potential + ?Sized>(model: &AngleModel<'_, P>, field: &AngleField) -> Result<f64> {
    log_cos_integral_of(&model.at_level(field.n), field.grid, Some(&field.theta))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleOracleReport {
    pub n: u32,
    pub probes: usize,
    pub max_error: f64,
    pub worst_x: f64,
    pub passed: bool,
}

/// `theta_n mod pi` against the matrix-product direction at each probe.
pub fn angle_oracle_check<P: Potential + ?Sized>(
    model: &AngleModel<'_, P>,
    n: u32,
    probes: &[f64],
    tol: f64,
) -> Result<AngleOracleReport> {
    let errs: Vec<(f64, f64)> = probes
        .par_iter()
        .map(|&x| {
            let th = model.eval(x, n, Side::Right).theta;
            model.matrix_direction(x, n).map(|m| (projective_distance(th, m), x))
        })
        .collect::<Result<_>>()?;
    let (max_error, worst_x) = errs.into_iter().fold((0.0, f64::NAN), |acc, e| if e.0 > acc.0 || acc.1.is_nan() { e } else { acc });
    Ok(AngleOracleReport { n, probes: probes.len(), max_error, worst_x, passed: max_error <= tol })
}
