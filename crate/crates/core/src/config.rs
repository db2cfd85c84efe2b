//! Run configuration shared by the command-line front end and the bindings.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CakeConfig;
use crate::preferences::{ModelSpec, PreferenceModel};
use crate::sperner::{solve_envy_free, three_player_square, SolveOptions, SolveReport};
use crate::triangulation::DEFAULT_CELL_CAP;
use crate::verifier::DEFAULT_SWEEP_CAP;

pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_GRID: u32 = 24;

fn default_schedule() -> Vec<u32> {
    vec![4, 8, 16, 32]
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_grid() -> u32 {
    DEFAULT_GRID
}

/// Overrides for the resource guards. `cells` bounds triangulation size,
/// `divisions` bounds sweep grids.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CapOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<u128>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divisions: Option<u128>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub config: CakeConfig,
    pub players: Vec<ModelSpec>,
    #[serde(default = "default_schedule")]
    pub schedule: Vec<u32>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// When set, `log_utility` players are reseeded: player `i` of `p`
    /// gets seed `p * seed + i`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_grid")]
    pub grid: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub caps: CapOverrides,
}

impl RunConfig {
    pub fn new(config: CakeConfig, players: Vec<ModelSpec>) -> Self {
        Self {
            config,
            players,
            schedule: default_schedule(),
            tol: DEFAULT_TOL,
            seed: None,
            grid: DEFAULT_GRID,
            out: None,
            caps: CapOverrides::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let run: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("config file: {e}")))?;
        run.validate()?;
        Ok(run)
    }

    pub fn validate(&self) -> Result<()> {
        if self.players.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one player is required".into(),
            ));
        }
        if self.grid == 0 {
            return Err(Error::InvalidConfig("grid must be at least 1".into()));
        }
        self.solve_options().validate().map_err(|e| match e {
            Error::Precondition(m) => Error::InvalidConfig(m),
            other => other,
        })
    }

    /// Player specs after applying the run seed.
    pub fn resolved_players(&self) -> Vec<ModelSpec> {
        let p = self.players.len() as u64;
        self.players
            .iter()
            .enumerate()
            .map(|(i, spec)| match (spec, self.seed) {
                (
                    ModelSpec::LogUtility {
                        linkage_strength, ..
                    },
                    Some(s),
                ) => ModelSpec::LogUtility {
                    seed: p * s + i as u64,
                    linkage_strength: *linkage_strength,
                },
                _ => spec.clone(),
            })
            .collect()
    }

    pub fn build_models(&self) -> Result<Vec<Arc<dyn PreferenceModel>>> {
        self.resolved_players()
            .iter()
            .map(|s| s.build(&self.config))
            .collect()
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            schedule: self.schedule.clone(),
            tol: self.tol,
            cell_cap: self.caps.cells.unwrap_or(DEFAULT_CELL_CAP),
        }
    }

    pub fn sweep_cap(&self) -> u128 {
        self.caps.divisions.unwrap_or(DEFAULT_SWEEP_CAP)
    }

    /// Two players on any configuration, or three on two cakes of two pieces.
    pub fn solve(&self) -> Result<SolveReport> {
        let models = self.build_models()?;
        let options = self.solve_options();
        match models.len() {
            2 => solve_envy_free(&self.config, &models, &options),
            3 if self.config.pieces_per_cake() == [2, 2] => three_player_square(&models, &options),
            p => Err(Error::InvalidConfig(format!(
                "solving supports 2 players, or 3 on two cakes of two pieces; got {p} on {}",
                self.config
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_takes_defaults() {
        let run = RunConfig::from_json(
            r#"{"config":[2,3],"players":[{"kind":"log_utility","seed":1},{"kind":"human"}],"extra":1}"#,
        )
        .unwrap();
        assert_eq!(run.schedule, vec![4, 8, 16, 32]);
        assert_eq!(run.tol, DEFAULT_TOL);
        assert_eq!(run.grid, DEFAULT_GRID);
        assert_eq!(run.build_models().unwrap().len(), 2);
    }

    #[test]
    fn seed_reseeds_log_utility_players() {
        let mut run = RunConfig::new(
            CakeConfig::new(vec![2, 3]).unwrap(),
            vec![
                ModelSpec::LogUtility {
                    seed: 0,
                    linkage_strength: 0.5,
                },
                ModelSpec::LogUtility {
                    seed: 0,
                    linkage_strength: 0.5,
                },
            ],
        );
        run.seed = Some(7);
        let seeds: Vec<u64> = run
            .resolved_players()
            .iter()
            .map(|s| match s {
                ModelSpec::LogUtility { seed, .. } => *seed,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(seeds, vec![14, 15]);
    }

    #[test]
    fn rejects_bad_fields() {
        for text in [
            r#"{"config":[2,2],"players":[{"kind":"human"}],"schedule":[4,2]}"#,
            r#"{"config":[2,2],"players":[{"kind":"human"}],"tol":0}"#,
            r#"{"config":[2,2],"players":[{"kind":"human"}],"grid":0}"#,
            r#"{"config":[2,2],"players":[]}"#,
            r#"{"config":[1,2],"players":[{"kind":"human"}]}"#,
        ] {
            assert!(
                matches!(RunConfig::from_json(text), Err(Error::InvalidConfig(_))),
                "{text}"
            );
        }
    }
}
