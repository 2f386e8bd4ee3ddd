//! Run configuration: a JSON file, overridden field by field by flags.

use llab_core::experiments::{
    linspace, AngleOracleConfig, BadSetConfig, CriticalCountConfig, DerivativeConfig, ExperimentConfig, GridSpec,
    GridVar, HermanConstantConfig, LeGridConfig, PolarConfig, SubmeanConfig, Sweep,
};
use llab_core::potential::PotentialSpec;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Every field is optional; absent fields keep the defaults of the chosen command.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub potential: Option<PotentialSpec>,
    pub lambda_list: Option<Vec<f64>>,
    pub grid: Option<GridSpec>,
    pub n: Option<usize>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    #[serde(rename = "K")]
    pub grid_level: Option<u32>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub options: Options,
}

/// Command-specific settings.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    pub c_target: Option<f64>,
    pub c0_target: Option<f64>,
    pub deltas: Option<Vec<f64>>,
    pub tolerance: Option<f64>,
    pub bound_factor: Option<f64>,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    fn reduced_energies(&self) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.grid {
            None => Ok(None),
            Some(g) if g.var == GridVar::T => Ok(Some(linspace(g.min, g.max, g.count))),
            Some(_) => Err(ConfigError("this check sweeps reduced energies: set grid.var to \"t\"".into())),
        }
    }

    fn energies(&self) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.grid {
            None => Ok(None),
            Some(g) if g.var == GridVar::E => Ok(Some(linspace(g.min, g.max, g.count))),
            Some(_) => Err(ConfigError("this check sweeps energies: set grid.var to \"e\"".into())),
        }
    }

    fn sweep(&self, mut base: Sweep) -> Result<Sweep, ConfigError> {
        if let Some(p) = &self.potential {
            base.potential = p.clone();
        }
        if let Some(l) = &self.lambda_list {
            base.lambdas = l.clone();
        }
        if let Some(ts) = self.reduced_energies()? {
            base.ts = ts;
        }
        Ok(base)
    }

    pub fn le_grid(&self) -> LeGridConfig {
        let mut c = LeGridConfig::default();
        set(&mut c.potential, self.potential.clone());
        set(&mut c.lambdas, self.lambda_list.clone());
        set(&mut c.grid, self.grid);
        set(&mut c.n, self.n);
        set(&mut c.samples, self.samples);
        set(&mut c.seed, self.seed);
        set(&mut c.c0_target, self.options.c0_target);
        c
    }

    /// The verifier config for `lemma`.
    pub fn verifier(&self, lemma: Lemma) -> Result<ExperimentConfig, ConfigError> {
        let o = &self.options;
        Ok(match lemma {
            Lemma::Derivative => {
                let mut c = DerivativeConfig::default();
                c.sweep = self.sweep(c.sweep)?;
                set(&mut c.n_max, self.n.map(|n| n as u32));
                c.grid_level = self.grid_level.or(c.grid_level);
                set(&mut c.c_target, o.c_target);
                set(&mut c.fd_probes, self.samples);
                set(&mut c.fd_tolerance, o.tolerance);
                set(&mut c.seed, self.seed);
                ExperimentConfig::Derivative(c)
            }
            Lemma::CriticalPoints => {
                let mut c = CriticalCountConfig::default();
                c.sweep = self.sweep(c.sweep)?;
                set(&mut c.n_max, self.n.map(|n| n as u32));
                c.grid_level = self.grid_level.or(c.grid_level);
                ExperimentConfig::CriticalPoints(c)
            }
            Lemma::BadSet => {
                let mut c = BadSetConfig::default();
                c.sweep = self.sweep(c.sweep)?;
                set(&mut c.n_max, self.n.map(|n| n as u32));
                c.grid_level = self.grid_level.or(c.grid_level);
                set(&mut c.deltas, o.deltas.clone());
                set(&mut c.bound_factor, o.bound_factor);
                ExperimentConfig::BadSet(c)
            }
            Lemma::Polar => {
                let mut c = PolarConfig::default();
                set(&mut c.potential, self.potential.clone());
                set(&mut c.samples, self.samples);
                set(&mut c.seed, self.seed);
                set(&mut c.grid_level, self.grid_level);
                set(&mut c.ts, self.reduced_energies()?);
                if let Some(l) = &self.lambda_list {
                    c.norm_lambdas = l.clone();
                    c.c_lambdas = l.clone();
                }
                set(&mut c.reconstruction_tolerance, o.tolerance);
                ExperimentConfig::Polar(c)
            }
            Lemma::AngleOracle => {
                let mut c = AngleOracleConfig::default();
                c.sweep = self.sweep(c.sweep)?;
                set(&mut c.n_max, self.n.map(|n| n as u32));
                set(&mut c.probes, self.samples);
                set(&mut c.seed, self.seed);
                set(&mut c.tolerance, o.tolerance);
                ExperimentConfig::AngleOracle(c)
            }
            Lemma::HermanConstant => {
                let mut c = HermanConstantConfig::default();
                set(&mut c.potential, self.potential.clone());
                set(&mut c.energies, self.energies()?);
                set(&mut c.lambdas, self.lambda_list.clone());
                set(&mut c.n_max, self.n);
                ExperimentConfig::HermanConstant(c)
            }
            Lemma::Submean => {
                let mut c = SubmeanConfig::default();
                set(&mut c.potential, self.potential.clone());
                set(&mut c.energies, self.energies()?);
                set(&mut c.lambdas, self.lambda_list.clone());
                set(&mut c.n, self.n);
                c.grid_level = self.grid_level.or(c.grid_level);
                ExperimentConfig::Submean(c)
            }
        })
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Lemma {
    Derivative,
    CriticalPoints,
    BadSet,
    Polar,
    AngleOracle,
    HermanConstant,
    Submean,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.le_grid(), LeGridConfig::default());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"lambdas": [1]}"#).is_err());
    }

    #[test]
    fn fields_override_defaults() {
        let c: RunConfig = serde_json::from_str(
            r#"{"lambda_list": [10], "grid": {"min": 0, "max": 1, "count": 3, "var": "t"}, "n": 4, "K": 9}"#,
        )
        .unwrap();
        match c.verifier(Lemma::CriticalPoints).unwrap() {
            ExperimentConfig::CriticalPoints(cc) => {
                assert_eq!(cc.sweep.lambdas, vec![10.0]);
                assert_eq!(cc.sweep.ts, vec![0.0, 0.5, 1.0]);
                assert_eq!((cc.n_max, cc.grid_level), (4, Some(9)));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn energy_grid_is_rejected_for_angle_checks() {
        let c: RunConfig =
            serde_json::from_str(r#"{"grid": {"min": -5, "max": 5, "count": 3, "var": "e"}}"#).unwrap();
        assert!(c.verifier(Lemma::Derivative).is_err());
        assert!(c.verifier(Lemma::HermanConstant).is_ok());
    }
}
