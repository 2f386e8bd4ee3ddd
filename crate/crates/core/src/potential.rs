//! Potential families and hypothesis validation.
//!
//! Monotone kinds live on `(0,1)` with the normalisation `v(0+) = 0`,
//! `v(1-) = 1` and `v' >= c_v > 0`; on the circle they jump at `0`.
//! Trigonometric polynomials are periodic and carry no monotonicity claim.

use crate::error::{LabError, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialKind {
    /// `v(x) = x`.
    Affine,
    /// `v(x) = x + a sin(2 pi x) / (2 pi)`, `|a| <= 1/2`.
    SmoothMonotone,
    /// `v(x) = a_0 + sum_k a_k cos(2 pi k x) + b_k sin(2 pi k x)`.
    TrigPolynomial,
}

impl PotentialKind {
    pub fn is_monotone(self) -> bool {
        !matches!(self, PotentialKind::TrigPolynomial)
    }
}

/// Which one-sided limit to use at the jump of a monotone potential.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Side {
    /// Limit from the right: `v(0+)`.
    #[default]
    Right,
    /// Limit from the left: `v(1-)` when the circle point is `0`.
    Left,
}

/// A potential on `R/Z` with a closed-form derivative.
///
/// `value` and `slope` are the raw formulas, valid on the closed interval
/// `[0, 1]` for monotone kinds (so `value(0)` is the right limit and `value(1)`
/// the left limit at the jump).
pub trait Potential: Sync {
    fn kind(&self) -> PotentialKind;
    fn value(&self, x: f64) -> f64;
    fn slope(&self, x: f64) -> f64;
    /// Declared `(c_v, C_v)`.
    fn declared_bounds(&self) -> (f64, f64);

    /// Short identifier for tables.
    fn id(&self) -> String {
        format!("{:?}", self.kind())
    }

    fn eval(&self, x: f64) -> Result<f64> {
        domain_point(self.kind(), x).map(|y| self.value(y))
    }

    fn eval_deriv(&self, x: f64) -> Result<f64> {
        domain_point(self.kind(), x).map(|y| self.slope(y))
    }

    /// `(v(y), v'(y))` for a circle point `y in [0,1)`, using the requested
    /// one-sided limit when `y == 0` and the potential jumps there.
    fn on_circle(&self, y: f64, side: Side) -> (f64, f64) {
        if y == 0.0 && side == Side::Left && self.kind().is_monotone() {
            (self.value(1.0), self.slope(1.0))
        } else {
            (self.value(y), self.slope(y))
        }
    }
}

fn domain_point(kind: PotentialKind, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(LabError::Domain { x, reason: "non-finite phase" });
    }
    if kind.is_monotone() {
        if x <= 0.0 || x >= 1.0 {
            return Err(LabError::Domain {
                x,
                reason: "monotone potential is defined on (0,1); use the one-sided limit at 0",
            });
        }
        Ok(x)
    } else {
        Ok(x - x.floor())
    }
}

/// Serializable potential: `{"kind", "params", "c_v", "C_v"}`.
///
/// Parameters by kind:
/// * `affine`: none.
/// * `smooth-monotone`: `[a]`.
/// * `trig-polynomial`: `[a_0, a_1, b_1, a_2, b_2, ...]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    #[serde(default)]
    pub params: Vec<f64>,
    pub c_v: f64,
    #[serde(rename = "C_v")]
    pub big_c_v: f64,
}

impl PotentialSpec {
    pub fn affine() -> Self {
        Self { kind: PotentialKind::Affine, params: vec![], c_v: 1.0, big_c_v: 1.0 }
    }

    pub fn smooth_monotone(a: f64) -> Result<Self> {
        if a.abs() > 0.5 {
            return Err(LabError::InvalidParameter(format!("smooth-monotone needs |a| <= 1/2, got {a}")));
        }
        Ok(Self {
            kind: PotentialKind::SmoothMonotone,
            params: vec![a],
            c_v: 1.0 - a.abs(),
            big_c_v: 1.0 + a.abs(),
        })
    }

    /// Trigonometric polynomial with cosine coefficients `a` (starting at `a_0`)
    /// and sine coefficients `b` (starting at `b_1`). Bounds are the triangle-inequality ones.
    pub fn trig(a: &[f64], b: &[f64]) -> Self {
        let degree = a.len().saturating_sub(1).max(b.len());
        let mut params = vec![a.first().copied().unwrap_or(0.0)];
        let mut sup_v = params[0].abs();
        let mut sup_dv: f64 = 0.0;
        for k in 1..=degree {
            let ak = a.get(k).copied().unwrap_or(0.0);
            let bk = b.get(k - 1).copied().unwrap_or(0.0);
            params.push(ak);
            params.push(bk);
            sup_v += ak.abs() + bk.abs();
            sup_dv += TAU * k as f64 * (ak.abs() + bk.abs());
        }
        Self { kind: PotentialKind::TrigPolynomial, params, c_v: 0.0, big_c_v: sup_v.max(sup_dv) }
    }

    /// `v(x) = 2 cos(2 pi x)`.
    pub fn two_cos() -> Self {
        Self::trig(&[0.0, 2.0], &[])
    }

    /// Checks the parameter layout and the smooth-monotone range.
    pub fn check(&self) -> Result<()> {
        match self.kind {
            PotentialKind::Affine if !self.params.is_empty() => {
                Err(LabError::InvalidParameter("affine potential takes no params".into()))
            }
            PotentialKind::SmoothMonotone if self.params.len() != 1 => {
                Err(LabError::InvalidParameter("smooth-monotone takes exactly one param".into()))
            }
            PotentialKind::SmoothMonotone if self.params[0].abs() > 0.5 => Err(
                LabError::InvalidParameter(format!("smooth-monotone needs |a| <= 1/2, got {}", self.params[0])),
            ),
            PotentialKind::TrigPolynomial if self.params.is_empty() || self.params.len().is_multiple_of(2) => {
                Err(LabError::InvalidParameter(
                    "trig-polynomial params must be [a_0, a_1, b_1, ..., a_d, b_d]".into(),
                ))
            }
            _ if self.params.iter().any(|p| !p.is_finite()) => {
                Err(LabError::InvalidParameter("non-finite parameter".into()))
            }
            _ => Ok(()),
        }
    }

    /// Degree of a trigonometric polynomial (0 for the monotone kinds).
    pub fn trig_degree(&self) -> usize {
        match self.kind {
            PotentialKind::TrigPolynomial => self.params.len() / 2,
            _ => 0,
        }
    }

    /// `(a_k, b_k)` for `k = 0..=degree` (`b_0 = 0`).
    pub fn trig_coefficients(&self) -> Vec<(f64, f64)> {
        let d = self.trig_degree();
        (0..=d)
            .map(|k| if k == 0 { (self.params[0], 0.0) } else { (self.params[2 * k - 1], self.params[2 * k]) })
            .collect()
    }
}

impl Potential for PotentialSpec {
    fn kind(&self) -> PotentialKind {
        self.kind
    }

    fn value(&self, x: f64) -> f64 {
        match self.kind {
            PotentialKind::Affine => x,
            PotentialKind::SmoothMonotone => x + self.params[0] * (TAU * x).sin() / TAU,
            PotentialKind::TrigPolynomial => {
                let mut v = self.params[0];
                for k in 1..=self.trig_degree() {
                    let arg = TAU * k as f64 * x;
                    v += self.params[2 * k - 1] * arg.cos() + self.params[2 * k] * arg.sin();
                }
                v
            }
        }
    }

    fn slope(&self, x: f64) -> f64 {
        match self.kind {
            PotentialKind::Affine => 1.0,
            PotentialKind::SmoothMonotone => 1.0 + self.params[0] * (TAU * x).cos(),
            PotentialKind::TrigPolynomial => {
                let mut dv = 0.0;
                for k in 1..=self.trig_degree() {
                    let w = TAU * k as f64;
                    let arg = w * x;
                    dv += w * (self.params[2 * k] * arg.cos() - self.params[2 * k - 1] * arg.sin());
                }
                dv
            }
        }
    }

    fn declared_bounds(&self) -> (f64, f64) {
        (self.c_v, self.big_c_v)
    }

    fn id(&self) -> String {
        let kind = match self.kind {
            PotentialKind::Affine => "affine",
            PotentialKind::SmoothMonotone => "smooth-monotone",
            PotentialKind::TrigPolynomial => "trig-polynomial",
        };
        if self.params.is_empty() {
            kind.to_string()
        } else {
            let p: Vec<String> = self.params.iter().map(|p| p.to_string()).collect();
            format!("{kind}[{}]", p.join(";"))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub passed: bool,
    pub skipped: bool,
    /// A phase witnessing the worst violation (or the extremum, when passing).
    pub witness_x: Option<f64>,
    pub measured: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub kind: PotentialKind,
    pub samples: usize,
    pub inf_deriv: f64,
    pub sup_abs_value: f64,
    pub sup_abs_deriv: f64,
    pub checks: Vec<HypothesisCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || c.skipped)
    }

    pub fn violations(&self) -> impl Iterator<Item = &HypothesisCheck> {
        self.checks.iter().filter(|c| !c.passed && !c.skipped)
    }
}

const ENDPOINT_TOL: f64 = 1e-9;
const FD_STEP: f64 = 9.5367431640625e-7; // 2^-20
const FD_REL_TOL: f64 = 1e-6;

/// Samples `v` and `v'` at `samples` midpoints and checks the declared hypotheses.
pub fn validate<P: Potential + ?Sized>(v: &P, samples: usize) -> Result<ValidationReport> {
    if samples < 2 {
        return Err(LabError::InvalidParameter("validation needs at least 2 samples".into()));
    }
    let (c_v, big_c) = v.declared_bounds();
    let monotone = v.kind().is_monotone();
    let xs: Vec<f64> = (0..samples).map(|i| (i as f64 + 0.5) / samples as f64).collect();

    let (mut inf_d, mut inf_d_x) = (f64::INFINITY, xs[0]);
    let (mut sup_v, mut sup_v_x) = (0.0f64, xs[0]);
    let (mut sup_d, mut sup_d_x) = (0.0f64, xs[0]);
    let (mut fd_err, mut fd_x) = (0.0f64, xs[0]);
    for &x in &xs {
        let (val, d) = (v.value(x), v.slope(x));
        if d < inf_d {
            (inf_d, inf_d_x) = (d, x);
        }
        if val.abs() > sup_v {
            (sup_v, sup_v_x) = (val.abs(), x);
        }
        if d.abs() > sup_d {
            (sup_d, sup_d_x) = (d.abs(), x);
        }
        if x > FD_STEP && x < 1.0 - FD_STEP {
            let fd = (v.value(x + FD_STEP) - v.value(x - FD_STEP)) / (2.0 * FD_STEP);
            let rel = (fd - d).abs() / d.abs().max(1.0);
            if rel > fd_err {
                (fd_err, fd_x) = (rel, x);
            }
        }
    }

    let mut checks = Vec::new();
    let tiny = 2f64.powi(-40);
    let left = v.value(tiny);
    let right = v.value(1.0 - tiny);
    checks.push(HypothesisCheck {
        name: "v(0+) = 0".into(),
        passed: (left - 0.0).abs() <= ENDPOINT_TOL,
        skipped: !monotone,
        witness_x: Some(tiny),
        measured: left,
    });
    checks.push(HypothesisCheck {
        name: "v(1-) = 1".into(),
        passed: (right - 1.0).abs() <= ENDPOINT_TOL,
        skipped: !monotone,
        witness_x: Some(1.0 - tiny),
        measured: right,
    });
    // The sampled minimum can miss the infimum at x -> 0+, so also probe near the ends.
    let (mut inf_all, mut inf_all_x) = (inf_d, inf_d_x);
    for x in [tiny, 1.0 - tiny] {
        let d = v.slope(x);
        if d < inf_all {
            (inf_all, inf_all_x) = (d, x);
        }
    }
    checks.push(HypothesisCheck {
        name: "v' >= c_v".into(),
        passed: inf_all >= c_v,
        skipped: !monotone,
        witness_x: Some(inf_all_x),
        measured: inf_all,
    });
    checks.push(HypothesisCheck {
        name: "|v| <= C_v".into(),
        passed: sup_v <= big_c,
        skipped: false,
        witness_x: Some(sup_v_x),
        measured: sup_v,
    });
    checks.push(HypothesisCheck {
        name: "|v'| <= C_v".into(),
        passed: sup_d <= big_c,
        skipped: false,
        witness_x: Some(sup_d_x),
        measured: sup_d,
    });
    checks.push(HypothesisCheck {
        name: "v' matches central differences".into(),
        passed: fd_err <= FD_REL_TOL,
        skipped: false,
        witness_x: Some(fd_x),
        measured: fd_err,
    });

    Ok(ValidationReport {
        kind: v.kind(),
        samples,
        inf_deriv: inf_all.min(inf_d),
        sup_abs_value: sup_v,
        sup_abs_deriv: sup_d,
        checks,
    })
}

/// All solutions of `v(x) = level` on `(0,1)`, located by scanning `cells`
/// sign changes and bisecting. For monotone potentials there is at most one.
pub fn level_crossings<P: Potential + ?Sized>(v: &P, level: f64, cells: usize) -> Vec<f64> {
    let h = 1.0 / cells as f64;
    let f = |x: f64| v.value(x) - level;
    let mut roots = Vec::new();
    for i in 0..cells {
        let (mut a, mut b) = (i as f64 * h, (i + 1) as f64 * h);
        let (fa, fb) = (f(a), f(b));
        let closed_left = i == 0;
        if fa == 0.0 && !closed_left {
            continue;
        }
        if fa == 0.0 {
            if a > 0.0 {
                roots.push(a);
            }
            continue;
        }
        if fa.signum() == fb.signum() {
            continue;
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if f(m).signum() == fa.signum() {
                a = m;
            } else {
                b = m;
            }
        }
        let r = 0.5 * (a + b);
        if r > 0.0 && r < 1.0 {
            roots.push(r);
        }
    }
    roots
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    struct Square;

    impl Potential for Square {
        fn kind(&self) -> PotentialKind {
            PotentialKind::SmoothMonotone
        }
        fn value(&self, x: f64) -> f64 {
            x * x
        }
        fn slope(&self, x: f64) -> f64 {
            2.0 * x
        }
        fn declared_bounds(&self) -> (f64, f64) {
            (0.1, 2.0)
        }
    }

    #[test]
    fn eval_examples() {
        assert_eq!(PotentialSpec::affine().eval(0.25).unwrap(), 0.25);
        let s = PotentialSpec::smooth_monotone(0.25).unwrap();
        assert!((s.eval(0.5).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(PotentialSpec::two_cos().eval(0.0).unwrap(), 2.0);
    }

    #[test]
    fn eval_deriv_examples() {
        let a = PotentialSpec::affine();
        for x in [0.1, 0.5, 0.9] {
            assert_eq!(a.eval_deriv(x).unwrap(), 1.0);
        }
        let s = PotentialSpec::smooth_monotone(0.25).unwrap();
        assert_eq!(s.on_circle(0.0, Side::Right).1, 1.25);
        let c = PotentialSpec::two_cos();
        assert!((c.eval_deriv(0.25).unwrap() + 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn monotone_kinds_reject_zero() {
        let a = PotentialSpec::affine();
        assert!(matches!(a.eval(0.0), Err(LabError::Domain { .. })));
        assert!(a.eval_deriv(0.0).is_err());
        assert!(a.eval(1.0).is_err());
        // One-sided limits at the jump.
        assert_eq!(a.on_circle(0.0, Side::Right).0, 0.0);
        assert_eq!(a.on_circle(0.0, Side::Left).0, 1.0);
        // Trig polynomials are periodic.
        let c = PotentialSpec::two_cos();
        assert!((c.eval(1.25).unwrap() - c.eval(0.25).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn validate_affine_passes() {
        let r = validate(&PotentialSpec::affine(), 1024).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.inf_deriv, 1.0);
    }

    #[test]
    fn validate_square_reports_small_derivative_near_zero() {
        let r = validate(&Square, 1024).unwrap();
        assert!(!r.passed());
        let v: Vec<_> = r.violations().collect();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].name, "v' >= c_v");
        assert!(v[0].witness_x.unwrap() < 0.05);
    }

    #[test]
    fn validate_trig_skips_monotonicity() {
        let r = validate(&PotentialSpec::two_cos(), 1024).unwrap();
        assert!(r.passed(), "{r:?}");
        let skipped: Vec<_> = r.checks.iter().filter(|c| c.skipped).map(|c| c.name.as_str()).collect();
        assert_eq!(skipped, ["v(0+) = 0", "v(1-) = 1", "v' >= c_v"]);
        assert!(r.checks.iter().any(|c| c.name == "|v| <= C_v" && c.passed));
    }

    #[test]
    fn validate_rejects_one_sample() {
        assert!(validate(&PotentialSpec::affine(), 1).is_err());
    }

    #[test]
    fn smooth_monotone_family_passes_at_extremes() {
        for a in [-0.5, -0.2, 0.0, 0.3, 0.5] {
            let r = validate(&PotentialSpec::smooth_monotone(a).unwrap(), 2048).unwrap();
            assert!(r.passed(), "a = {a}: {r:?}");
        }
        assert!(PotentialSpec::smooth_monotone(0.6).is_err());
    }

    #[test]
    fn derivative_matches_central_differences() {
        let specs = [
            PotentialSpec::affine(),
            PotentialSpec::smooth_monotone(0.4).unwrap(),
            PotentialSpec::trig(&[0.3, 1.0, -0.5], &[0.7, 0.2]),
        ];
        let h = 2f64.powi(-20);
        for v in &specs {
            for i in 0..1024 {
                let x = (i as f64 + 0.5) / 1024.0;
                let fd = (v.value(x + h) - v.value(x - h)) / (2.0 * h);
                let d = v.slope(x);
                assert!((fd - d).abs() <= 1e-6 * d.abs().max(1.0), "{v:?} at {x}");
            }
        }
    }

    #[test]
    fn monotone_level_sets_have_at_most_one_point() {
        let specs = [PotentialSpec::affine(), PotentialSpec::smooth_monotone(-0.5).unwrap()];
        for v in &specs {
            for i in 0..=60 {
                let t = -1.0 + 3.0 * i as f64 / 60.0;
                let roots = level_crossings(v, t, 4096);
                assert!(roots.len() <= 1, "t={t}: {roots:?}");
                if t > 0.0 && t < 1.0 {
                    assert_eq!(roots.len(), 1);
                }
            }
        }
    }

    #[test]
    fn json_shape() {
        let s = PotentialSpec::smooth_monotone(0.25).unwrap();
        let j = serde_json::to_value(&s).unwrap();
        assert_eq!(j["kind"], "smooth-monotone");
        assert_eq!(j["params"][0], 0.25);
        assert_eq!(j["C_v"], 1.25);
        let back: PotentialSpec = serde_json::from_value(j).unwrap();
        assert_eq!(back, s);
        let parsed: PotentialSpec =
            serde_json::from_str(r#"{"kind":"affine","params":[],"c_v":1,"C_v":1}"#).unwrap();
        assert_eq!(parsed, PotentialSpec::affine());
    }

    #[test]
    fn check_rejects_bad_layouts() {
        let mut s = PotentialSpec::two_cos();
        s.params.push(1.0);
        assert!(s.check().is_err());
        let mut a = PotentialSpec::affine();
        a.params.push(1.0);
        assert!(a.check().is_err());
        assert!(PotentialSpec::two_cos().check().is_ok());
    }
}
