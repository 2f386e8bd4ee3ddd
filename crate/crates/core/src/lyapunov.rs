//! Lyapunov exponent estimators.
//!
//! * Birkhoff: mean of `(1/n) log |A_n(x) e_1|` over random exact phases.
//! * Phase-averaged upper bound: `(1/n) int log ||A_n||`, which by
//!   subadditivity dominates the exponent for every `n`.
//! * Angle lower bound for the reduced cocycle:
//!   `log lambda + (1/n) sum_{k<n} int log |cos theta_k|`.

use crate::angles::{build_fields, log_cos_integral, AngleModel};
use crate::cocycle::{log_growth_e1, matrix_product, CocycleMap, CocycleParams, Schrodinger};
use crate::error::{LabError, Result};
use crate::phase::{sample_seed, DyadicGrid, DyadicPhase};
use crate::polar::ReducedCocycle;
use crate::potential::Potential;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Extra bits beyond the orbit length drawn for each random phase.
pub const PHASE_GUARD_BITS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Birkhoff,
    PhaseAvgUpper,
    AngleLower,
    HermanBirkhoff,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Birkhoff => "birkhoff",
            Method::PhaseAvgUpper => "phase_avg_upper",
            Method::AngleLower => "angle_lower",
            Method::HermanBirkhoff => "herman_birkhoff",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LEEstimate {
    pub value: f64,
    pub method: Method,
    pub n: usize,
    pub samples: usize,
    pub stderr: f64,
    pub params: CocycleParams,
    pub potential: String,
    /// For the angle bound: `max_{n/2 <= m <= n}` of the `m`-term averages.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub limsup_surrogate: Option<f64>,
}

impl LEEstimate {
    pub fn lower(&self) -> f64 {
        self.value - 3.0 * self.stderr
    }

    pub fn upper(&self) -> f64 {
        self.value + 3.0 * self.stderr
    }
}

/// Mean and standard error of `(1/n) log |A_n(x) e_1|` over `samples` phases.
///
/// Sample `i` uses the phase drawn from `sample_seed(seed, i)`, so every
/// energy of a sweep sees the same phases.
pub fn birkhoff_average<M: CocycleMap + ?Sized>(map: &M, n: usize, samples: usize, seed: u64) -> Result<(f64, f64)> {
    if n == 0 || samples == 0 {
        return Err(LabError::InvalidParameter("birkhoff needs n >= 1 and samples >= 1".into()));
    }
    let values: Vec<f64> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let x = DyadicPhase::random(sample_seed(seed, i), n + PHASE_GUARD_BITS);
            log_growth_e1(map, &x, n).map(|l| l / n as f64)
        })
        .collect::<Result<_>>()?;
    Ok(mean_and_stderr(&values))
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Birkhoff estimate for the Schrödinger cocycle `E - lambda v`.
pub fn le_birkhoff<P: Potential + ?Sized>(
    p: CocycleParams,
    v: &P,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<LEEstimate> {
    let (value, stderr) = birkhoff_average(&Schrodinger::new(p, v), n, samples, seed)?;
    Ok(LEEstimate {
        value,
        method: Method::Birkhoff,
        n,
        samples,
        stderr,
        params: p,
        potential: v.id(),
        limsup_surrogate: None,
    })
}

/// `(1/n)` times the midpoint-rule average of `log ||A_n(x)||` over `grid`.
pub fn phase_average_log_norm<M: CocycleMap + ?Sized>(map: &M, n: usize, grid: DyadicGrid) -> Result<f64> {
    if n == 0 {
        return Err(LabError::InvalidParameter("phase average needs n >= 1".into()));
    }
    if (grid.level() as usize) < n {
        return Err(LabError::DepthExhausted { needed: n, available: grid.level() as usize });
    }
    let logs: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|j| matrix_product(map, &grid.phase(j), n).map(|m| m.log_norm()))
        .collect::<Result<_>>()?;
    Ok(logs.iter().sum::<f64>() / (grid.len() as f64 * n as f64))
}

/// Phase-averaged upper bound for an arbitrary cocycle.
pub fn le_phase_average_upper<M: CocycleMap + ?Sized>(
    map: &M,
    p: CocycleParams,
    potential: String,
    n: usize,
    grid: DyadicGrid,
) -> Result<LEEstimate> {
    let value = phase_average_log_norm(map, n, grid)?;
    Ok(LEEstimate {
        value,
        method: Method::PhaseAvgUpper,
        n,
        samples: grid.len(),
        stderr: 0.0,
        params: p,
        potential,
        limsup_surrogate: None,
    })
}

/// Angle lower bound for the reduced cocycle of `v` at `(t, lambda)`.
pub fn le_lower_bound_angles<P: Potential + ?Sized>(
    p: CocycleParams,
    v: &P,
    n: usize,
    grid: DyadicGrid,
) -> Result<LEEstimate> {
    if n == 0 {
        return Err(LabError::InvalidParameter("angle bound needs n >= 1".into()));
    }
    let model = AngleModel::new(v, p.t, p.lambda)?;
    let fields = build_fields(&model, n as u32 - 1, grid)?;
    let integrals: Vec<f64> = fields.iter().map(|f| log_cos_integral(&model, f)).collect::<Result<_>>()?;
    let value = angle_bound_from_integrals(p.lambda, &integrals);
    Ok(LEEstimate {
        value,
        method: Method::AngleLower,
        n,
        samples: grid.len(),
        stderr: 0.0,
        params: p,
        potential: v.id(),
        limsup_surrogate: Some(limsup_surrogate(p.lambda, &integrals)),
    })
}

/// `log lambda + mean(integrals)`.
pub fn angle_bound_from_integrals(lambda: f64, integrals: &[f64]) -> f64 {
    lambda.ln() + integrals.iter().sum::<f64>() / integrals.len() as f64
}

/// `max_{ceil(n/2) <= m <= n} log lambda + (1/m) sum_{k<m} integrals[k]`.
pub fn limsup_surrogate(lambda: f64, integrals: &[f64]) -> f64 {
    let n = integrals.len();
    (n.div_ceil(2).max(1)..=n)
        .map(|m| angle_bound_from_integrals(lambda, &integrals[..m]))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Estimator choice for [`le_curve`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum CurveMethod {
    Birkhoff { n: usize, samples: usize, seed: u64 },
    PhaseAvgUpper { n: usize, grid_level: u32 },
    AngleLower { n: usize, grid_level: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeCurve {
    pub lambda: f64,
    pub rows: Vec<LEEstimate>,
    pub min_value: Option<f64>,
    /// `log lambda - min_value`.
    pub fitted_c0: Option<f64>,
}

impl LeCurve {
    pub fn from_rows(lambda: f64, rows: Vec<LEEstimate>) -> Self {
        let min_value = rows.iter().map(|r| r.value).reduce(f64::min);
        Self { lambda, min_value, fitted_c0: min_value.map(|m| lambda.ln() - m), rows }
    }
}

/// One estimate per energy. The upper bound uses the Schrödinger cocycle, the
/// angle bound the reduced cocycle (energies must then satisfy `E/lambda in [-1, 2]`).
pub fn le_curve<P: Potential + ?Sized>(energies: &[f64], lambda: f64, v: &P, method: CurveMethod) -> Result<LeCurve> {
    let rows = energies
        .iter()
        .map(|&e| {
            let p = CocycleParams::from_energy(e, lambda)?;
            match method {
                CurveMethod::Birkhoff { n, samples, seed } => le_birkhoff(p, v, n, samples, seed),
                CurveMethod::PhaseAvgUpper { n, grid_level } => {
                    le_phase_average_upper(&Schrodinger::new(p, v), p, v.id(), n, DyadicGrid::new(grid_level)?)
                }
                CurveMethod::AngleLower { n, grid_level } => {
                    if !p.in_reduced_range() {
                        return Err(LabError::InvalidParameter(format!(
                            "angle bound needs E/lambda in [-1, 2], got {}",
                            p.t
                        )));
                    }
                    le_lower_bound_angles(p, v, n, DyadicGrid::new(grid_level)?)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LeCurve::from_rows(lambda, rows))
}

/// Bracketing of the three estimators for the reduced cocycle at one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lower: LEEstimate,
    pub upper: LEEstimate,
}

pub fn reduced_bracket<P: Potential + ?Sized>(p: CocycleParams, v: &P, n: usize, grid: DyadicGrid) -> Result<Bracket> {
    let lower = le_lower_bound_angles(p, v, n, grid)?;
    let upper = le_phase_average_upper(&ReducedCocycle::new(p, v), p, v.id(), n, grid)?;
    Ok(Bracket { lower, upper })
}
