//! Scenario configuration: a PWA system plus growth parameters, plot
//! projections and solver limits, loaded from one JSON file.

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::milp::MilpConfig;
use crate::pwa::{PwaError, PwaSystem};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scenario file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    System(#[from] PwaError),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Tree-growth parameters. Defaults follow the shipped scenarios; every
/// field can be overridden from the scenario file or the CLI.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct GrowthConfig {
    /// Horizons are sampled uniformly from `1..=t_max`.
    pub t_max: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Number of nearest tree nodes offered as terminal targets.
    pub cluster_size: usize,
    /// Diagonal floor of the initial-set map.
    pub d_min: f64,
    /// Hit-and-run burn-in per sample.
    pub burn_in: usize,
    /// Rejection attempts before declaring coverage saturated.
    pub n_reject: usize,
    /// Template points sampled per step in the funnel soundness check.
    pub soundness_samples: usize,
    /// Anchor slack scale: `beta ~ U[0, b_k]` with the mean annealed
    /// linearly from `beta_mean_start` to `beta_mean_end` over the run.
    pub beta_mean_start: f64,
    pub beta_mean_end: f64,
    pub weights: crate::traj::VolumeWeights,
    /// Try reduced-rank initial maps when the full-rank query is infeasible
    /// (always tried after a volume rejection).
    pub rank_fallback_on_infeasible: bool,
    /// Coverage estimate cadence (iterations) and sample count.
    pub coverage_every: usize,
    pub coverage_samples: usize,
    pub milp: MilpConfigWire,
}

impl Default for GrowthConfig {
    fn default() -> Self {
        GrowthConfig {
            t_max: 10,
            iterations: 60,
            seed: 0,
            cluster_size: 20,
            d_min: 1e-3,
            burn_in: 50,
            n_reject: 200,
            soundness_samples: 1000,
            beta_mean_start: 0.5,
            beta_mean_end: 0.3,
            weights: crate::traj::VolumeWeights::default(),
            rank_fallback_on_infeasible: false,
            coverage_every: 10,
            coverage_samples: 200,
            milp: MilpConfigWire::default(),
        }
    }
}

/// Solver limits in file form (`milp.*` keys).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct MilpConfigWire {
    pub gap_tol: f64,
    pub node_limit: u64,
    /// Seconds; `None` keeps runs deterministic.
    pub time_limit_s: Option<f64>,
    pub big_m_max: f64,
}

impl Default for MilpConfigWire {
    fn default() -> Self {
        let c = MilpConfig::default();
        MilpConfigWire {
            gap_tol: c.gap_tol,
            node_limit: 200_000,
            time_limit_s: None,
            big_m_max: c.big_m_max,
        }
    }
}

impl MilpConfigWire {
    pub fn to_config(&self) -> MilpConfig {
        MilpConfig {
            gap_tol: self.gap_tol,
            node_limit: self.node_limit,
            time_limit: self.time_limit_s.map(std::time::Duration::from_secs_f64),
            big_m_max: self.big_m_max,
        }
    }
}

/// A fully resolved scenario.
#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub system: PwaSystem,
    pub growth: GrowthConfig,
    /// Coordinate index pairs for 2D plot projections.
    pub projections: Vec<(usize, usize)>,
}

#[derive(Deserialize)]
struct ScenarioFileWire {
    #[serde(flatten)]
    system: crate::pwa::PwaSystemWire,
    #[serde(default)]
    growth: Option<serde_json::Value>,
    #[serde(default)]
    projections: Option<Vec<(usize, usize)>>,
}

impl ScenarioConfig {
    pub fn from_str(text: &str) -> Result<ScenarioConfig, ScenarioError> {
        let wire: ScenarioFileWire = serde_json::from_str(text)?;
        let system = wire.system.into_system()?;
        let growth = match wire.growth {
            Some(v) => apply_overrides(GrowthConfig::default(), &v)?,
            None => GrowthConfig::default(),
        };
        let projections = wire.projections.unwrap_or_else(|| vec![(0, 1.min(system.n - 1))]);
        for &(a, b) in &projections {
            if a >= system.n || b >= system.n {
                return Err(ScenarioError::Invalid(format!(
                    "projection ({a},{b}) outside state dimension {}",
                    system.n
                )));
            }
        }
        Ok(ScenarioConfig { system, growth, projections })
    }

    pub fn from_file(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str(&text)
    }

    /// Applies a free-form JSON override object (a `--config` file) on top
    /// of the scenario's growth settings.
    pub fn override_growth(&mut self, overrides: &serde_json::Value) -> Result<(), ScenarioError> {
        self.growth = apply_overrides(self.growth.clone(), overrides)?;
        Ok(())
    }
}

fn apply_overrides(base: GrowthConfig, v: &serde_json::Value) -> Result<GrowthConfig, ScenarioError> {
    // Serialize the base, merge the override object on top, re-parse.
    let mut merged = serde_json::to_value(&base)?;
    merge(&mut merged, v);
    Ok(serde_json::from_value(merged)?)
}

fn merge(base: &mut serde_json::Value, patch: &serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn scenario_path(name: &str) -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
    }

    #[test]
    fn shipped_scenarios_load() {
        for name in ["pendulum_wall.json", "bouncing_ball.json", "planar_pushing.json"] {
            let cfg = ScenarioConfig::from_file(&scenario_path(name))
                .unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(cfg.system.n >= 2);
            assert!(!cfg.projections.is_empty());
        }
    }

    #[test]
    fn pendulum_growth_defaults_from_file() {
        let cfg = ScenarioConfig::from_file(&scenario_path("pendulum_wall.json")).unwrap();
        assert_eq!(cfg.growth.t_max, 10);
        assert_eq!(cfg.growth.iterations, 60);
        assert_eq!(cfg.growth.seed, 1);
    }

    #[test]
    fn overrides_merge_nested_keys() {
        let mut cfg = ScenarioConfig::from_file(&scenario_path("pendulum_wall.json")).unwrap();
        let patch: serde_json::Value =
            serde_json::from_str(r#"{"milp": {"gap_tol": 0.5}, "iterations": 3}"#).unwrap();
        cfg.override_growth(&patch).unwrap();
        assert_eq!(cfg.growth.iterations, 3);
        assert_eq!(cfg.growth.milp.gap_tol, 0.5);
        // Untouched keys keep their values.
        assert_eq!(cfg.growth.t_max, 10);
    }

    #[test]
    fn bad_projection_rejected() {
        let text = std::fs::read_to_string(scenario_path("pendulum_wall.json")).unwrap();
        let patched = text.replace("[[0, 1]]", "[[0, 9]]");
        assert!(ScenarioConfig::from_str(&patched).is_err());
    }
}
