//! Parameter sweeps shared by the CLI and the acceptance suite.
//!
//! Every runner takes a serialisable config and returns an [`Outcome`]: a
//! pass flag, a serialisable report with the measured constants of every
//! cell, and CSV tables. [`Experiment`] lists the frozen configs.

use crate::angles::{
    angle_oracle_check, bad_set_measure, build_fields, critical_points_of, critical_points_refined,
    derivative_bound_check, derivative_fd_check, log_cos_integral, AngleModel, AngleOracleReport,
    FiniteDifferenceReport, LevelMinimum,
};
use crate::cocycle::{conjugated_matrix, CocycleParams, Mat2};
use crate::error::{LabError, Result};
use crate::herman::{constant_term_check_for, herman_le_floor_for, submean_check_for, ConstantTermReport, SubmeanReport};
use crate::lyapunov::{le_curve, reduced_bracket, CurveMethod, LEEstimate};
use crate::phase::{sample_seed, DyadicGrid, DyadicPhase};
use crate::polar::{a_value, c_entry, c_limit, le_gap_check, polar_decompose, GapReport};
use crate::potential::{Potential, PotentialKind, PotentialSpec};
use crate::table::write_le_csv;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const DEFAULT_SEED: u64 = 20_240_917;

/// `count` equally spaced points from `min` to `max` inclusive.
pub fn linspace(min: f64, max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![min],
        _ => (0..count).map(|i| min + (max - min) * i as f64 / (count - 1) as f64).collect(),
    }
}

/// `{-1, -0.75, ..., 2}`.
pub fn standard_ts() -> Vec<f64> {
    linspace(-1.0, 2.0, 13)
}

/// Which variable a [`GridSpec`] spans.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridVar {
    #[serde(alias = "E")]
    E,
    T,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub var: GridVar,
}

impl GridSpec {
    /// Energies at coupling `lambda`.
    pub fn energies(&self, lambda: f64) -> Vec<f64> {
        let pts = linspace(self.min, self.max, self.count);
        match self.var {
            GridVar::E => pts,
            GridVar::T => pts.into_iter().map(|t| lambda * t).collect(),
        }
    }
}

/// Potential, couplings and reduced energies of a lemma sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub potential: PotentialSpec,
    pub lambdas: Vec<f64>,
    pub ts: Vec<f64>,
}

impl Sweep {
    /// Affine potential, `lambda in {10, 100}`, the 13 standard reduced energies.
    pub fn standard() -> Self {
        Self { potential: PotentialSpec::affine(), lambdas: vec![10.0, 100.0], ts: standard_ts() }
    }

    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.lambdas.iter().flat_map(|&l| self.ts.iter().map(move |&t| (l, t))).collect()
    }

    fn check(&self) -> Result<()> {
        self.potential.check()?;
        if !self.potential.kind.is_monotone() {
            return Err(LabError::InvalidParameter("angle sweeps need a monotone potential".into()));
        }
        if let Some(t) = self.ts.iter().find(|t| !(-1.0..=2.0).contains(*t)) {
            return Err(LabError::InvalidParameter(format!("reduced energy {t} outside [-1, 2]")));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(LabError::InvalidParameter(format!("coupling {l} must be positive")));
        }
        Ok(())
    }
}

/// A named CSV body (no comment lines).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Table {
    pub name: String,
    pub body: String,
}

fn csv_table<I>(name: &str, header: &[&str], rows: I) -> Result<Table>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| LabError::Io(e.into_error()))?;
    Ok(Table { name: name.into(), body: String::from_utf8(bytes).expect("csv output is utf-8") })
}

fn le_table(name: &str, rows: &[LEEstimate]) -> Result<Table> {
    let mut buf = Vec::new();
    write_le_csv(&mut buf, &[], rows)?;
    Ok(Table { name: name.into(), body: String::from_utf8(buf).expect("csv output is utf-8") })
}

fn probe_points(count: usize, seed: u64) -> Vec<f64> {
    (0..count as u64).map(|i| DyadicPhase::random(sample_seed(seed, i), 52).to_real()).collect()
}

fn s(x: impl ToString) -> String {
    x.to_string()
}

// ---------------------------------------------------------------------------
// Exponent sweep

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeGridConfig {
    pub potential: PotentialSpec,
    pub lambdas: Vec<f64>,
    pub grid: GridSpec,
    pub n: usize,
    pub samples: usize,
    pub seed: u64,
    /// Largest acceptable shared `C0`.
    pub c0_target: f64,
    /// Spread of the per-coupling `C0` above which the report flags drift.
    pub drift_tolerance: f64,
}

impl Default for LeGridConfig {
    fn default() -> Self {
        Self {
            potential: PotentialSpec::affine(),
            lambdas: vec![5.0, 10.0, 20.0, 40.0],
            grid: GridSpec { min: -1.0, max: 2.0, count: 61, var: GridVar::T },
            n: 2000,
            samples: 200,
            seed: DEFAULT_SEED,
            c0_target: 2.0,
            drift_tolerance: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub lambda: f64,
    pub min_le: Option<f64>,
    #[serde(rename = "fitted_C0")]
    pub fitted_c0: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LeGridReport {
    pub summaries: Vec<CurveSummary>,
    /// `max_lambda (log lambda - min_E L)`.
    pub shared_c0: f64,
    pub c0_target: f64,
    /// `max - min` of the per-coupling `C0`.
    pub c0_spread: f64,
    pub drift_flagged: bool,
    #[serde(skip)]
    pub rows: Vec<Vec<LEEstimate>>,
}

pub fn run_le_grid(cfg: &LeGridConfig) -> Result<Outcome> {
    cfg.potential.check()?;
    let curves = cfg
        .lambdas
        .iter()
        .map(|&l| {
            let method = CurveMethod::Birkhoff { n: cfg.n, samples: cfg.samples, seed: cfg.seed };
            le_curve(&cfg.grid.energies(l), l, &cfg.potential, method)
        })
        .collect::<Result<Vec<_>>>()?;
    let c0s: Vec<f64> = curves.iter().filter_map(|c| c.fitted_c0).collect();
    let shared_c0 = c0s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let c0_spread = shared_c0 - c0s.iter().copied().fold(f64::INFINITY, f64::min);
    let tables = curves
        .iter()
        .map(|c| le_table(&format!("le_lambda_{}.csv", c.lambda), &c.rows))
        .collect::<Result<Vec<_>>>()?;
    let report = LeGridReport {
        summaries: curves
            .iter()
            .map(|c| CurveSummary { lambda: c.lambda, min_le: c.min_value, fitted_c0: c.fitted_c0 })
            .collect(),
        shared_c0,
        c0_target: cfg.c0_target,
        c0_spread: if c0s.is_empty() { 0.0 } else { c0_spread },
        drift_flagged: c0s.len() > 1 && c0_spread > cfg.drift_tolerance,
        rows: curves.into_iter().map(|c| c.rows).collect(),
    };
    let passed = c0s.is_empty() || (shared_c0.is_finite() && shared_c0 < cfg.c0_target);
    Ok(Outcome { passed, report: Report::LeGrid(report), tables })
}

// ---------------------------------------------------------------------------
// Derivative growth

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeConfig {
    pub sweep: Sweep,
    pub n_max: u32,
    /// Common grid level; `n_max + 6` when absent.
    pub grid_level: Option<u32>,
    pub c_target: f64,
    pub fd_probes: usize,
    pub fd_tolerance: f64,
    pub seed: u64,
}

impl Default for DerivativeConfig {
    fn default() -> Self {
        Self {
            sweep: Sweep::standard(),
            n_max: 8,
            grid_level: None,
            c_target: 0.0,
            fd_probes: 64,
            fd_tolerance: 1e-4,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivativeCell {
    pub lambda: f64,
    pub t: f64,
    pub grid_level: u32,
    pub levels: Vec<LevelMinimum>,
    pub fitted_c: f64,
    pub fd: Vec<FiniteDifferenceReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivativeSweepReport {
    pub cells: Vec<DerivativeCell>,
    /// Infimum of `min dtheta_n / 2^n` over the sweep.
    pub fitted_c: f64,
    pub c_target: f64,
    pub max_fd_rel_error: f64,
    pub fd_tolerance: f64,
}

pub fn run_derivative(cfg: &DerivativeConfig) -> Result<Outcome> {
    cfg.sweep.check()?;
    let level = cfg.grid_level.unwrap_or(cfg.n_max + 6);
    let grid = DyadicGrid::new(level)?;
    let probes = probe_points(cfg.fd_probes, cfg.seed);
    let v = &cfg.sweep.potential;
    let cells = cfg
        .sweep
        .cells()
        .into_par_iter()
        .map(|(lambda, t)| {
            let model = AngleModel::new(v, t, lambda)?;
            let fields = build_fields(&model, cfg.n_max, grid)?;
            let bound = derivative_bound_check(&fields, cfg.c_target);
            let fd = (0..=cfg.n_max).map(|n| derivative_fd_check(&model, n, &probes)).collect();
            Ok(DerivativeCell { lambda, t, grid_level: level, levels: bound.levels, fitted_c: bound.fitted_c, fd })
        })
        .collect::<Result<Vec<_>>>()?;
    let fitted_c = cells.iter().map(|c| c.fitted_c).fold(f64::INFINITY, f64::min);
    let max_fd = cells.iter().flat_map(|c| &c.fd).map(|f| f.max_rel_error).fold(0.0, f64::max);
    let table = csv_table(
        "derivative.csv",
        &["lambda", "t", "n", "x_min", "scaled_min", "fd_max_rel_error"],
        cells.iter().flat_map(|c| {
            c.levels
                .iter()
                .zip(&c.fd)
                .map(|(l, f)| vec![s(c.lambda), s(c.t), s(l.n), s(l.x), s(l.scaled_min), s(f.max_rel_error)])
        }),
    )?;
    let passed = fitted_c > 0.0 && fitted_c >= cfg.c_target && max_fd <= cfg.fd_tolerance;
    let report = DerivativeSweepReport {
        cells,
        fitted_c,
        c_target: cfg.c_target,
        max_fd_rel_error: max_fd,
        fd_tolerance: cfg.fd_tolerance,
    };
    Ok(Outcome { passed, report: Report::Derivative(report), tables: vec![table] })
}

// ---------------------------------------------------------------------------
// Critical-point counting

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalCountConfig {
    pub sweep: Sweep,
    pub n_max: u32,
    /// Forced grid level (no refinement). When absent each level starts at
    /// `n + 6` and refines until no cell holds two crossings.
    pub grid_level: Option<u32>,
}

impl Default for CriticalCountConfig {
    fn default() -> Self {
        Self { sweep: Sweep::standard(), n_max: 10, grid_level: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountCell {
    pub lambda: f64,
    pub t: f64,
    pub n: u32,
    pub grid_level: u32,
    pub count: usize,
    pub bound: u64,
    pub miscount_warnings: usize,
    pub inversions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalCountReport {
    pub cells: Vec<CountCell>,
    pub violations: usize,
    pub warnings: usize,
    /// Cells with `n = 0`, `0 < t < 1` and a count other than 1.
    pub unique_root_failures: usize,
}

pub fn run_critical_count(cfg: &CriticalCountConfig) -> Result<Outcome> {
    cfg.sweep.check()?;
    if let Some(k) = cfg.grid_level {
        if k < cfg.n_max.max(1) {
            return Err(LabError::GridTooCoarse { level: k, required: cfg.n_max.max(1) });
        }
    }
    let v = &cfg.sweep.potential;
    let jobs: Vec<(f64, f64, u32)> =
        cfg.sweep.cells().into_iter().flat_map(|(l, t)| (0..=cfg.n_max).map(move |n| (l, t, n))).collect();
    let cells = jobs
        .into_par_iter()
        .map(|(lambda, t, n)| {
            let model = AngleModel::new(v, t, lambda)?;
            let cp = match cfg.grid_level {
                Some(k) => critical_points_of(&model.at_level(n), DyadicGrid::new(k)?, None)?,
                None => critical_points_refined(&model, n, n + 6)?,
            };
            Ok(CountCell {
                lambda,
                t,
                n,
                grid_level: cp.grid_level,
                count: cp.count(),
                bound: cp.bound,
                miscount_warnings: cp.warnings.len(),
                inversions: cp.inversions,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let violations = cells.iter().filter(|c| c.count as u64 > c.bound).count();
    let warnings = cells.iter().map(|c| c.miscount_warnings).sum();
    let unique_root_failures = cells.iter().filter(|c| c.n == 0 && c.t > 0.0 && c.t < 1.0 && c.count != 1).count();
    let table = csv_table(
        "critical_points.csv",
        &["lambda", "t", "n", "grid_level", "count", "bound", "miscount_warnings", "inversions"],
        cells.iter().map(|c| {
            vec![
                s(c.lambda),
                s(c.t),
                s(c.n),
                s(c.grid_level),
                s(c.count),
                s(c.bound),
                s(c.miscount_warnings),
                s(c.inversions),
            ]
        }),
    )?;
    let passed = violations == 0 && warnings == 0 && unique_root_failures == 0;
    let report = CriticalCountReport { cells, violations, warnings, unique_root_failures };
    Ok(Outcome { passed, report: Report::CriticalCount(report), tables: vec![table] })
}

// ---------------------------------------------------------------------------
// Bad-set measure

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BadSetConfig {
    pub sweep: Sweep,
    pub n_max: u32,
    pub deltas: Vec<f64>,
    pub grid_level: Option<u32>,
    /// Each ratio `measure / delta` must stay below `bound_factor / c_n`,
    /// where `c_n = min dtheta_n / 2^n` on the same cell.
    pub bound_factor: f64,
}

impl Default for BadSetConfig {
    fn default() -> Self {
        Self { sweep: Sweep::standard(), n_max: 8, deltas: vec![1e-1, 1e-2, 1e-3], grid_level: None, bound_factor: 8.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BadSetCell {
    pub lambda: f64,
    pub t: f64,
    pub n: u32,
    pub delta: f64,
    pub measure: f64,
    pub ratio: f64,
    pub scaled_min_derivative: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BadSetReport {
    pub cells: Vec<BadSetCell>,
    /// `max measure / delta` over the sweep.
    pub fitted_c: f64,
    /// Largest ratio per `delta`, in config order.
    pub max_ratio_per_delta: Vec<(f64, f64)>,
    pub violations: usize,
}

pub fn run_bad_set(cfg: &BadSetConfig) -> Result<Outcome> {
    cfg.sweep.check()?;
    let grid = DyadicGrid::new(cfg.grid_level.unwrap_or(cfg.n_max + 6))?;
    let v = &cfg.sweep.potential;
    let per_cell = cfg
        .sweep
        .cells()
        .into_par_iter()
        .map(|(lambda, t)| {
            let model = AngleModel::new(v, t, lambda)?;
            let fields = build_fields(&model, cfg.n_max, grid)?;
            let mut out = Vec::new();
            for f in &fields {
                let c_n = f.min_dtheta().1 / (f.n as f64).exp2();
                for &delta in &cfg.deltas {
                    let measure = bad_set_measure(&model, f, delta)?;
                    out.push(BadSetCell {
                        lambda,
                        t,
                        n: f.n,
                        delta,
                        measure,
                        ratio: measure / delta,
                        scaled_min_derivative: c_n,
                        bound: cfg.bound_factor / c_n,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<BadSetCell> = per_cell.into_iter().flatten().collect();
    let fitted_c = cells.iter().map(|c| c.ratio).fold(0.0, f64::max);
    let max_ratio_per_delta = cfg
        .deltas
        .iter()
        .map(|&d| (d, cells.iter().filter(|c| c.delta == d).map(|c| c.ratio).fold(0.0, f64::max)))
        .collect();
    let violations = cells.iter().filter(|c| !(c.ratio <= c.bound)).count();
    let table = csv_table(
        "bad_set.csv",
        &["lambda", "t", "n", "delta", "measure", "ratio", "scaled_min_derivative", "bound"],
        cells.iter().map(|c| {
            vec![
                s(c.lambda),
                s(c.t),
                s(c.n),
                s(c.delta),
                s(c.measure),
                s(c.ratio),
                s(c.scaled_min_derivative),
                s(c.bound),
            ]
        }),
    )?;
    let report = BadSetReport { cells, fitted_c, max_ratio_per_delta, violations };
    Ok(Outcome { passed: violations == 0 && fitted_c.is_finite(), report: Report::BadSet(report), tables: vec![table] })
}

// ---------------------------------------------------------------------------
// Lower/upper bracket for the reduced cocycle

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BracketConfig {
    pub sweep: Sweep,
    pub n: usize,
    pub grid_level: u32,
    /// Slack allowed in `lower <= upper + tolerance`.
    pub tolerance: f64,
    /// Required `lower >= log lambda - floor_offset`.
    pub floor_offset: f64,
}

impl Default for BracketConfig {
    fn default() -> Self {
        Self { sweep: Sweep::standard(), n: 8, grid_level: 14, tolerance: 1e-2, floor_offset: 2.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BracketCell {
    pub lambda: f64,
    pub t: f64,
    pub lower: f64,
    pub limsup_surrogate: f64,
    pub upper: f64,
    /// `min_k int log|cos theta_k|` over `k < n`.
    pub min_log_cos_integral: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BracketReport {
    pub cells: Vec<BracketCell>,
    /// Largest `lower - upper`.
    pub max_excess: f64,
    /// Smallest `lower - log lambda`.
    pub min_floor_margin: f64,
    /// `-min int log|cos theta_k|` over the sweep.
    pub fitted_integral_c: f64,
}

pub fn run_bracket(cfg: &BracketConfig) -> Result<Outcome> {
    cfg.sweep.check()?;
    if cfg.n == 0 {
        return Err(LabError::InvalidParameter("bracket needs n >= 1".into()));
    }
    let grid = DyadicGrid::new(cfg.grid_level)?;
    let v = &cfg.sweep.potential;
    let cells = cfg
        .sweep
        .cells()
        .into_par_iter()
        .map(|(lambda, t)| {
            let p = CocycleParams::new(lambda, t)?;
            let b = reduced_bracket(p, v, cfg.n, grid)?;
            let model = AngleModel::new(v, t, lambda)?;
            let fields = build_fields(&model, cfg.n as u32 - 1, grid)?;
            let min_int = fields
                .iter()
                .map(|f| log_cos_integral(&model, f))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            let (lower, upper) = (b.lower.value, b.upper.value);
            Ok(BracketCell {
                lambda,
                t,
                lower,
                limsup_surrogate: b.lower.limsup_surrogate.unwrap_or(lower),
                upper,
                min_log_cos_integral: min_int,
                passed: lower <= upper + cfg.tolerance && lower >= lambda.ln() - cfg.floor_offset,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_excess = cells.iter().map(|c| c.lower - c.upper).fold(f64::NEG_INFINITY, f64::max);
    let min_floor_margin = cells.iter().map(|c| c.lower - c.lambda.ln()).fold(f64::INFINITY, f64::min);
    let fitted_integral_c = -cells.iter().map(|c| c.min_log_cos_integral).fold(f64::INFINITY, f64::min);
    let table = csv_table(
        "bracket.csv",
        &["lambda", "t", "lower", "limsup_surrogate", "upper", "min_log_cos_integral", "passed"],
        cells.iter().map(|c| {
            vec![
                s(c.lambda),
                s(c.t),
                s(c.lower),
                s(c.limsup_surrogate),
                s(c.upper),
                s(c.min_log_cos_integral),
                s(c.passed),
            ]
        }),
    )?;
    let passed = cells.iter().all(|c| c.passed);
    let report = BracketReport { cells, max_excess, min_floor_margin, fitted_integral_c };
    Ok(Outcome { passed, report: Report::Bracket(report), tables: vec![table] })
}

// ---------------------------------------------------------------------------
// Polar identities

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarConfig {
    pub potential: PotentialSpec,
    /// Random `SL(2, R)` matrices for the reconstruction check.
    pub samples: usize,
    pub seed: u64,
    pub reconstruction_tolerance: f64,
    /// Midpoint grid level for the norm identity and the `c` convergence.
    pub grid_level: u32,
    pub ts: Vec<f64>,
    pub norm_lambdas: Vec<f64>,
    pub norm_tolerance: f64,
    /// Couplings for `sup |c(., lambda) - c(., inf)|`, increasing.
    pub c_lambdas: Vec<f64>,
    /// Informational conjugated-vs-reduced comparisons `(lambda, t)`.
    pub gap_cells: Vec<(f64, f64)>,
    pub gap_n: usize,
    pub gap_grid_level: u32,
}

impl Default for PolarConfig {
    fn default() -> Self {
        Self {
            potential: PotentialSpec::affine(),
            samples: 10_000,
            seed: DEFAULT_SEED,
            reconstruction_tolerance: 1e-10,
            grid_level: 12,
            ts: standard_ts(),
            norm_lambdas: vec![2.0, 10.0, 100.0, 1e3, 1e4],
            norm_tolerance: 1e-10,
            c_lambdas: vec![10.0, 100.0, 1e3, 1e4],
            gap_cells: vec![(10.0, 0.5), (100.0, 0.5), (1e4, 0.5), (10.0, -1.0), (100.0, -1.0), (1e4, -1.0)],
            gap_n: 10,
            gap_grid_level: 12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CConvergence {
    pub t: f64,
    /// `(lambda, sup_x |c(x, lambda) - c(x, inf)|)`.
    pub sups: Vec<(f64, f64)>,
    pub strictly_decreasing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolarReport {
    pub samples: usize,
    pub max_reconstruction_error: f64,
    pub max_norm_rel_error: f64,
    pub c_convergence: Vec<CConvergence>,
    pub gaps: Vec<GapReport>,
}

/// `R(alpha) diag(s, 1/s) R(beta)` with uniform angles and `log s in [0.05, 5]`.
fn random_sl2(rng: &mut ChaCha8Rng) -> Mat2<f64> {
    let alpha = rng.gen_range(0.0..2.0 * PI);
    let beta = rng.gen_range(0.0..2.0 * PI);
    let s = rng.gen_range(0.05f64..5.0).exp();
    Mat2::rotation(alpha) * Mat2::diag(s, 1.0 / s) * Mat2::rotation(beta)
}

pub fn run_polar(cfg: &PolarConfig) -> Result<Outcome> {
    cfg.potential.check()?;
    let v = &cfg.potential;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mats: Vec<Mat2<f64>> = (0..cfg.samples).map(|_| random_sl2(&mut rng)).collect();
    let max_reconstruction_error = mats
        .par_iter()
        .map(|b| polar_decompose(b).map(|p| p.reconstruction_error(b)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);

    let grid = DyadicGrid::new(cfg.grid_level)?;
    let xs: Vec<f64> = grid.points().collect();
    let mut norm_err = 0f64;
    for &lambda in &cfg.norm_lambdas {
        for &t in &cfg.ts {
            let p = CocycleParams::new(lambda, t)?;
            let e = xs
                .par_iter()
                .map(|&x| {
                    let norm = conjugated_matrix(&p, v.value(x)).norm();
                    let predicted = lambda * (a_value(v, x, t, lambda)? / 2.0).sqrt();
                    Ok(((norm - predicted) / predicted).abs())
                })
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            norm_err = norm_err.max(e);
        }
    }

    let c_convergence = cfg
        .ts
        .iter()
        .map(|&t| {
            let sups = cfg
                .c_lambdas
                .iter()
                .map(|&lambda| {
                    let sup = xs
                        .par_iter()
                        .map(|&x| Ok((c_entry(v, x, t, lambda)? - c_limit(v, x, t)?).abs()))
                        .collect::<Result<Vec<f64>>>()?
                        .into_iter()
                        .fold(0.0, f64::max);
                    Ok((lambda, sup))
                })
                .collect::<Result<Vec<_>>>()?;
            let strictly_decreasing = sups.windows(2).all(|w| w[1].1 < w[0].1);
            Ok(CConvergence { t, sups, strictly_decreasing })
        })
        .collect::<Result<Vec<_>>>()?;

    let gap_grid = DyadicGrid::new(cfg.gap_grid_level)?;
    let gaps = cfg
        .gap_cells
        .iter()
        .map(|&(lambda, t)| le_gap_check(v, t, lambda, cfg.gap_n, gap_grid))
        .collect::<Result<Vec<_>>>()?;

    let table = csv_table(
        "c_convergence.csv",
        &["t", "lambda", "sup_c_error"],
        c_convergence.iter().flat_map(|c| c.sups.iter().map(move |&(l, e)| vec![s(c.t), s(l), s(e)])),
    )?;
    let gap_table = csv_table(
        "le_gap.csv",
        &["lambda", "t", "n", "conjugated", "normal_form", "reduced", "gap", "scaled_gap", "raw_gap"],
        gaps.iter().map(|g| {
            vec![
                s(g.lambda),
                s(g.t),
                s(g.n),
                s(g.conjugated),
                s(g.normal_form),
                s(g.reduced),
                s(g.gap),
                s(g.scaled_gap),
                s(g.raw_gap),
            ]
        }),
    )?;
    let passed = max_reconstruction_error < cfg.reconstruction_tolerance
        && norm_err < cfg.norm_tolerance
        && c_convergence.iter().all(|c| c.strictly_decreasing);
    let report = PolarReport {
        samples: cfg.samples,
        max_reconstruction_error,
        max_norm_rel_error: norm_err,
        c_convergence,
        gaps,
    };
    Ok(Outcome { passed, report: Report::Polar(report), tables: vec![table, gap_table] })
}

// ---------------------------------------------------------------------------
// Angle recursion against matrix products

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleOracleConfig {
    pub sweep: Sweep,
    pub n_max: u32,
    pub probes: usize,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for AngleOracleConfig {
    fn default() -> Self {
        Self { sweep: Sweep::standard(), n_max: 12, probes: 1024, seed: DEFAULT_SEED, tolerance: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AngleOracleCell {
    pub lambda: f64,
    pub t: f64,
    pub report: AngleOracleReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AngleOracleSweepReport {
    pub cells: Vec<AngleOracleCell>,
    pub max_error: f64,
    pub tolerance: f64,
}

pub fn run_angle_oracle(cfg: &AngleOracleConfig) -> Result<Outcome> {
    cfg.sweep.check()?;
    let probes = probe_points(cfg.probes, cfg.seed);
    let v = &cfg.sweep.potential;
    let jobs: Vec<(f64, f64, u32)> =
        cfg.sweep.cells().into_iter().flat_map(|(l, t)| (0..=cfg.n_max).map(move |n| (l, t, n))).collect();
    let cells = jobs
        .into_par_iter()
        .map(|(lambda, t, n)| {
            let model = AngleModel::new(v, t, lambda)?;
            Ok(AngleOracleCell { lambda, t, report: angle_oracle_check(&model, n, &probes, cfg.tolerance)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_error = cells.iter().map(|c| c.report.max_error).fold(0.0, f64::max);
    let table = csv_table(
        "angle_oracle.csv",
        &["lambda", "t", "n", "probes", "max_error", "worst_x"],
        cells.iter().map(|c| {
            vec![s(c.lambda), s(c.t), s(c.report.n), s(c.report.probes), s(c.report.max_error), s(c.report.worst_x)]
        }),
    )?;
    let passed = cells.iter().all(|c| c.report.passed);
    let report = AngleOracleSweepReport { cells, max_error, tolerance: cfg.tolerance };
    Ok(Outcome { passed, report: Report::AngleOracle(report), tables: vec![table] })
}

// ---------------------------------------------------------------------------
// Laurent transfer products

fn check_trig(v: &PotentialSpec) -> Result<()> {
    v.check()?;
    if v.kind != PotentialKind::TrigPolynomial {
        return Err(LabError::InvalidParameter("this check needs a trig-polynomial potential".into()));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HermanConstantConfig {
    pub potential: PotentialSpec,
    pub energies: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub n_max: usize,
}

impl Default for HermanConstantConfig {
    fn default() -> Self {
        Self {
            potential: PotentialSpec::two_cos(),
            energies: linspace(-5.0, 5.0, 11),
            lambdas: vec![1.0, 3.0, 10.0],
            n_max: 12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HermanConstantReport {
    pub cells: Vec<ConstantTermReport>,
    pub failures: usize,
}

pub fn run_herman_constant(cfg: &HermanConstantConfig) -> Result<Outcome> {
    check_trig(&cfg.potential)?;
    let jobs: Vec<(f64, f64, usize)> = cfg
        .lambdas
        .iter()
        .flat_map(|&l| cfg.energies.iter().flat_map(move |&e| (1..=cfg.n_max).map(move |n| (e, l, n))))
        .collect();
    let cells = jobs
        .into_par_iter()
        .map(|(e, l, n)| constant_term_check_for(&cfg.potential, e, l, n))
        .collect::<Result<Vec<_>>>()?;
    let failures = cells.iter().filter(|c| !c.passed).count();
    let table = csv_table(
        "herman_constant.csv",
        &["E", "lambda", "n", "exact", "c11", "c12", "c21", "c22", "expected", "polynomial", "passed"],
        cells.iter().map(|c| {
            vec![
                s(c.energy),
                s(c.lambda),
                s(c.n),
                s(c.exact),
                s(c.constant[0]),
                s(c.constant[1]),
                s(c.constant[2]),
                s(c.constant[3]),
                s(c.expected),
                s(c.polynomial),
                s(c.passed),
            ]
        }),
    )?;
    let report = HermanConstantReport { cells, failures };
    Ok(Outcome { passed: failures == 0, report: Report::HermanConstant(report), tables: vec![table] })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubmeanConfig {
    pub potential: PotentialSpec,
    pub energies: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub n: usize,
    /// `n + 2` when absent.
    pub grid_level: Option<u32>,
}

impl Default for SubmeanConfig {
    fn default() -> Self {
        Self {
            potential: PotentialSpec::two_cos(),
            energies: linspace(-5.0, 5.0, 11),
            lambdas: vec![1.0, 3.0, 10.0],
            n: 8,
            grid_level: Some(12),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubmeanSweepReport {
    pub cells: Vec<SubmeanReport>,
    /// Smallest `average - floor`.
    pub min_margin: f64,
    pub failures: usize,
}

pub fn run_submean(cfg: &SubmeanConfig) -> Result<Outcome> {
    check_trig(&cfg.potential)?;
    let grid = DyadicGrid::new(cfg.grid_level.unwrap_or(cfg.n as u32 + 2))?;
    let jobs: Vec<(f64, f64)> =
        cfg.lambdas.iter().flat_map(|&l| cfg.energies.iter().map(move |&e| (e, l))).collect();
    let cells = jobs
        .into_par_iter()
        .map(|(e, l)| submean_check_for(&cfg.potential, e, l, cfg.n, grid))
        .collect::<Result<Vec<_>>>()?;
    let failures = cells.iter().filter(|c| !c.passed).count();
    let min_margin = cells.iter().map(|c| c.average - c.floor).fold(f64::INFINITY, f64::min);
    let table = csv_table(
        "submean.csv",
        &["E", "lambda", "n", "grid_level", "average", "floor", "passed"],
        cells.iter().map(|c| {
            vec![s(c.energy), s(c.lambda), s(c.n), s(c.grid_level), s(c.average), s(c.floor), s(c.passed)]
        }),
    )?;
    let report = SubmeanSweepReport { cells, min_margin, failures };
    Ok(Outcome { passed: failures == 0, report: Report::Submean(report), tables: vec![table] })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HermanFloorConfig {
    pub potential: PotentialSpec,
    pub lambda: f64,
    pub grid: GridSpec,
    pub n: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for HermanFloorConfig {
    fn default() -> Self {
        Self {
            potential: PotentialSpec::two_cos(),
            lambda: 5.0,
            grid: GridSpec { min: -12.0, max: 12.0, count: 41, var: GridVar::E },
            n: 2000,
            samples: 100,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HermanFloorReport {
    pub lambda: f64,
    pub floor: f64,
    pub min_le: Option<f64>,
    pub flagged: Vec<f64>,
}

pub fn run_herman_floor(cfg: &HermanFloorConfig) -> Result<Outcome> {
    check_trig(&cfg.potential)?;
    let energies = cfg.grid.energies(cfg.lambda);
    let h = herman_le_floor_for(&cfg.potential, cfg.lambda, &energies, cfg.n, cfg.samples, cfg.seed)?;
    let table = le_table("herman_floor.csv", &h.curve.rows)?;
    let report = HermanFloorReport { lambda: cfg.lambda, floor: h.floor, min_le: h.curve.min_value, flagged: h.flagged };
    Ok(Outcome { passed: report.flagged.is_empty(), report: Report::HermanFloor(report), tables: vec![table] })
}

// ---------------------------------------------------------------------------
// Dispatch

/// Any runnable sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    LeGrid(LeGridConfig),
    Derivative(DerivativeConfig),
    CriticalPoints(CriticalCountConfig),
    BadSet(BadSetConfig),
    Bracket(BracketConfig),
    Polar(PolarConfig),
    AngleOracle(AngleOracleConfig),
    HermanConstant(HermanConstantConfig),
    Submean(SubmeanConfig),
    HermanFloor(HermanFloorConfig),
}

impl ExperimentConfig {
    pub fn name(&self) -> &'static str {
        match self {
            Self::LeGrid(_) => "le-grid",
            Self::Derivative(_) => "derivative",
            Self::CriticalPoints(_) => "critical-points",
            Self::BadSet(_) => "bad-set",
            Self::Bracket(_) => "bracket",
            Self::Polar(_) => "polar",
            Self::AngleOracle(_) => "angle-oracle",
            Self::HermanConstant(_) => "herman-constant",
            Self::Submean(_) => "submean",
            Self::HermanFloor(_) => "herman-floor",
        }
    }

    /// The potential, for hypothesis validation before a run.
    pub fn potential(&self) -> &PotentialSpec {
        match self {
            Self::LeGrid(c) => &c.potential,
            Self::Derivative(c) => &c.sweep.potential,
            Self::CriticalPoints(c) => &c.sweep.potential,
            Self::BadSet(c) => &c.sweep.potential,
            Self::Bracket(c) => &c.sweep.potential,
            Self::Polar(c) => &c.potential,
            Self::AngleOracle(c) => &c.sweep.potential,
            Self::HermanConstant(c) => &c.potential,
            Self::Submean(c) => &c.potential,
            Self::HermanFloor(c) => &c.potential,
        }
    }

    pub fn run(&self) -> Result<Outcome> {
        match self {
            Self::LeGrid(c) => run_le_grid(c),
            Self::Derivative(c) => run_derivative(c),
            Self::CriticalPoints(c) => run_critical_count(c),
            Self::BadSet(c) => run_bad_set(c),
            Self::Bracket(c) => run_bracket(c),
            Self::Polar(c) => run_polar(c),
            Self::AngleOracle(c) => run_angle_oracle(c),
            Self::HermanConstant(c) => run_herman_constant(c),
            Self::Submean(c) => run_submean(c),
            Self::HermanFloor(c) => run_herman_floor(c),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Report {
    LeGrid(LeGridReport),
    Derivative(DerivativeSweepReport),
    CriticalCount(CriticalCountReport),
    BadSet(BadSetReport),
    Bracket(BracketReport),
    Polar(PolarReport),
    AngleOracle(AngleOracleSweepReport),
    HermanConstant(HermanConstantReport),
    Submean(SubmeanSweepReport),
    HermanFloor(HermanFloorReport),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Outcome {
    pub passed: bool,
    pub report: Report,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

/// The frozen acceptance experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    MainAffine,
    Derivative,
    CriticalCount,
    BadSet,
    Bracket,
    PolarIdentities,
    HermanConstant,
    HermanFloor,
    AngleOracle,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::MainAffine,
        Experiment::Derivative,
        Experiment::CriticalCount,
        Experiment::BadSet,
        Experiment::Bracket,
        Experiment::PolarIdentities,
        Experiment::HermanConstant,
        Experiment::HermanFloor,
        Experiment::AngleOracle,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Experiment::MainAffine => "thm-main-affine",
            Experiment::Derivative => "lemma-derivative",
            Experiment::CriticalCount => "critical-count",
            Experiment::BadSet => "bad-set",
            Experiment::Bracket => "le-bracket",
            Experiment::PolarIdentities => "polar-identities",
            Experiment::HermanConstant => "herman-constant",
            Experiment::HermanFloor => "appendix-b-floor",
            Experiment::AngleOracle => "angle-oracle",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.id() == id)
    }

    pub fn configs(self) -> Vec<ExperimentConfig> {
        match self {
            Experiment::MainAffine => vec![ExperimentConfig::LeGrid(LeGridConfig::default())],
            Experiment::Derivative => vec![ExperimentConfig::Derivative(DerivativeConfig::default())],
            Experiment::CriticalCount => vec![ExperimentConfig::CriticalPoints(CriticalCountConfig::default())],
            Experiment::BadSet => vec![ExperimentConfig::BadSet(BadSetConfig::default())],
            Experiment::Bracket => vec![ExperimentConfig::Bracket(BracketConfig::default())],
            Experiment::PolarIdentities => vec![ExperimentConfig::Polar(PolarConfig::default())],
            Experiment::HermanConstant => vec![
                ExperimentConfig::HermanConstant(HermanConstantConfig::default()),
                ExperimentConfig::Submean(SubmeanConfig::default()),
            ],
            Experiment::HermanFloor => vec![ExperimentConfig::HermanFloor(HermanFloorConfig::default())],
            Experiment::AngleOracle => vec![ExperimentConfig::AngleOracle(AngleOracleConfig::default())],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linspace_endpoints() {
        assert_eq!(linspace(-1.0, 2.0, 13)[4], 0.0);
        assert_eq!(linspace(0.0, 1.0, 1), vec![0.0]);
        assert!(linspace(0.0, 1.0, 0).is_empty());
        let ts = standard_ts();
        assert_eq!((ts[0], ts[12], ts[1]), (-1.0, 2.0, -0.75));
    }

    #[test]
    fn t_grid_scales_with_lambda() {
        let g = GridSpec { min: -1.0, max: 2.0, count: 4, var: GridVar::T };
        assert_eq!(g.energies(10.0), vec![-10.0, 0.0, 10.0, 20.0]);
    }

    #[test]
    fn ids_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(Experiment::from_id(e.id()), Some(e));
            assert!(!e.configs().is_empty());
        }
        assert_eq!(Experiment::from_id("nope"), None);
    }

    #[test]
    fn sweep_rejects_trig_and_out_of_range() {
        let mut s = Sweep::standard();
        s.ts.push(2.5);
        assert!(s.check().is_err());
        let s = Sweep { potential: PotentialSpec::two_cos(), ..Sweep::standard() };
        assert!(s.check().is_err());
    }

    #[test]
    fn forced_coarse_grid_warns() {
        let cfg = CriticalCountConfig {
            sweep: Sweep { lambdas: vec![10.0], ts: vec![0.5], ..Sweep::standard() },
            n_max: 5,
            grid_level: Some(6),
        };
        let out = run_critical_count(&cfg).unwrap();
        assert!(!out.passed);
        match out.report {
            Report::CriticalCount(r) => assert!(r.warnings > 0),
            _ => unreachable!(),
        }
    }

    #[test]
    fn small_derivative_sweep_passes() {
        let cfg = DerivativeConfig {
            sweep: Sweep { lambdas: vec![10.0], ts: vec![-1.0, 0.5, 2.0], ..Sweep::standard() },
            n_max: 4,
            fd_probes: 16,
            ..DerivativeConfig::default()
        };
        let out = run_derivative(&cfg).unwrap();
        assert!(out.passed, "{:?}", out.report);
        assert_eq!(out.tables[0].body.lines().count(), 1 + 3 * 5);
    }
}
