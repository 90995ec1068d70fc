//! Experiment configuration: a TOML document with one table per concern.
//!
//! Every field is required and unknown keys are rejected, so a missing field
//! produces an error that names it. Power budgets are written in dBm and
//! thresholds in dB; [`ExperimentConfig::linear`] gives the converted values
//! that the rest of the crate consumes.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::BaselineConfig;
use crate::comms::SensingInterference;
use crate::ddpg::{Hyperparams, RewardShaping};
use crate::error::{Error, Result};
use crate::feasibility::{Budgets, PenaltyWeights};
use crate::par::Exec;
use crate::sensing::CrbReduction;

/// Physical constants and array sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub frequency_hz: f64,
    pub absorption_per_m: f64,
    /// `M`.
    pub bs_antennas: usize,
    /// `N`.
    pub ris_elements: usize,
    /// `q`.
    pub active_elements: usize,
    /// `N_s`.
    pub sensing_elements: usize,
    /// `K`.
    pub users: usize,
    /// Thermal noise `sigma_o^2`.
    pub noise_dbm: f64,
    /// Dynamic noise of the active elements `sigma_a^2`.
    pub dynamic_noise_dbm: f64,
    pub sensing_interference: SensingInterference,
}

/// Placement of the arrays, users and target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub bs_ris_distance_m: f64,
    /// Users sit at distances drawn uniformly from this range.
    pub user_distance_range_m: [f64; 2],
    /// User azimuths are spread evenly across this range.
    pub user_azimuth_range_rad: [f64; 2],
    pub user_elevation_rad: f64,
    pub target_azimuth_rad: f64,
    pub target_elevation_rad: f64,
    pub target_distance_m: f64,
    pub ris_arrival_azimuth_rad: f64,
    pub ris_arrival_elevation_rad: f64,
    pub bs_departure_azimuth_rad: f64,
    pub bs_departure_elevation_rad: f64,
    /// Element spacing of every array, in wavelengths.
    pub spacing_wavelengths: f64,
}

/// Radar target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    /// Radar cross section scaling the round-trip gain.
    pub rcs: f64,
    pub phase_rad: f64,
    /// `T`.
    pub dwell_symbols: usize,
}

/// Budgets as written in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    pub p_bs_max_dbm: f64,
    pub p_ris_max_dbm: f64,
    pub r_max_dbm: f64,
    pub gamma_th_db: f64,
    pub a_max: f64,
    pub crb_max: f64,
    pub crb_reduction: CrbReduction,
}

/// Episode shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub steps_per_episode: usize,
    pub stop_on_feasible: bool,
}

/// Sweep grids and default seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub powers_dbm: Vec<f64>,
    pub elements: Vec<usize>,
    pub amax_values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub schemes: Vec<crate::experiment::Scheme>,
}

/// Runtime knobs that do not change results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub exec: Exec,
}

/// The whole configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSection,
    pub geometry: GeometrySection,
    pub target: TargetSection,
    pub budgets: BudgetSection,
    pub penalty: PenaltyWeights,
    pub env: EnvSection,
    pub agent: Hyperparams,
    pub baselines: BaselineConfig,
    pub sweep: SweepSection,
    pub run: RunSection,
}

/// Built-in starting points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Full simulation table (M = 64, N = 80).
    Paper,
    /// Small arrays for quick runs (M = 8, N = 16).
    Desk,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            other => Err(Error::Config(format!(
                "unknown profile '{other}' (expected paper or desk)"
            ))),
        }
    }
}

/// Values derived from the file in linear units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearUnits {
    pub sigma_o_sq_w: f64,
    pub sigma_a_sq_w: f64,
    pub budgets: Budgets,
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl ExperimentConfig {
    pub fn profile(p: Profile) -> Self {
        match p {
            Profile::Paper => Self::paper(),
            Profile::Desk => Self::desk(),
        }
    }

    /// Simulation-table values with the default geometry.
    pub fn paper() -> Self {
        Self {
            system: SystemSection {
                frequency_hz: 0.2e12,
                absorption_per_m: 0.01,
                bs_antennas: 64,
                ris_elements: 80,
                active_elements: 30,
                sensing_elements: 20,
                users: 3,
                noise_dbm: -90.0,
                dynamic_noise_dbm: -90.0,
                sensing_interference: SensingInterference::User,
            },
            geometry: GeometrySection {
                bs_ris_distance_m: 20.0,
                user_distance_range_m: [5.0, 15.0],
                user_azimuth_range_rad: [PI / 6.0, 5.0 * PI / 6.0],
                user_elevation_rad: PI / 3.0,
                target_azimuth_rad: PI / 4.0,
                target_elevation_rad: PI / 3.0,
                target_distance_m: 10.0,
                ris_arrival_azimuth_rad: PI / 3.0,
                ris_arrival_elevation_rad: 2.0 * PI / 5.0,
                bs_departure_azimuth_rad: PI / 6.0,
                bs_departure_elevation_rad: 4.0 * PI / 9.0,
                spacing_wavelengths: 0.5,
            },
            target: TargetSection {
                rcs: 1.0,
                phase_rad: 0.0,
                dwell_symbols: 1000,
            },
            budgets: BudgetSection {
                p_bs_max_dbm: 30.0,
                p_ris_max_dbm: 10.0,
                r_max_dbm: -60.0,
                gamma_th_db: 0.0,
                a_max: 5.0,
                crb_max: 1e-3,
                crb_reduction: CrbReduction::Trace,
            },
            penalty: PenaltyWeights::default(),
            env: EnvSection {
                steps_per_episode: 100,
                stop_on_feasible: false,
            },
            agent: Hyperparams::default(),
            baselines: BaselineConfig::default(),
            sweep: SweepSection {
                powers_dbm: vec![20.0, 25.0, 30.0],
                elements: vec![40, 80, 120],
                amax_values: vec![2.0, 5.0],
                seeds: vec![1, 2, 3],
                schemes: vec![
                    crate::experiment::Scheme::Ddpg,
                    crate::experiment::Scheme::Random,
                ],
            },
            run: RunSection {
                exec: Exec::Parallel,
            },
        }
    }

    /// Desk-scale arrays (M = 8, N = 16, N_s = 4, K = 2, q = 4).
    pub fn desk() -> Self {
        let mut cfg = Self::paper();
        cfg.system.bs_antennas = 8;
        cfg.system.ris_elements = 16;
        cfg.system.active_elements = 4;
        cfg.system.sensing_elements = 4;
        cfg.system.users = 2;
        cfg.sweep.elements = vec![8, 16, 24];
        cfg
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s)
            .map_err(|e| Error::Config(e.message().to_string() + &span_hint(&e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serializable")
    }

    /// Applies a `section.key=value` override; the value is parsed as TOML
    /// and falls back to a bare string.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (path, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{assignment}' is not key=value")))?;
        let (path, raw) = (path.trim(), raw.trim());
        let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
            Ok(mut t) => t.remove("v").unwrap(),
            Err(_) => toml::Value::String(raw.to_string()),
        };
        let mut doc = toml::Value::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let mut node = &mut doc;
        let keys: Vec<&str> = path.split('.').collect();
        for (i, key) in keys.iter().enumerate() {
            let table = node.as_table_mut().ok_or_else(|| {
                Error::Config(format!("'{}' is not a table", keys[..i].join(".")))
            })?;
            if !table.contains_key(*key) {
                return Err(Error::Config(format!("unknown config key '{path}'")));
            }
            if i + 1 == keys.len() {
                table.insert((*key).to_string(), value.clone());
                break;
            }
            node = table.get_mut(*key).unwrap();
        }
        let updated: Self = doc
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("{path}: {}", e.message())))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    /// Short stable digest of the canonical (key-sorted) JSON rendering,
    /// leaving out the `[run]` knobs that cannot change results.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config is always serializable");
        if let Some(map) = value.as_object_mut() {
            map.remove("run");
        }
        let canonical = serde_json::to_vec(&value).expect("json values serialize");
        hex::encode(&Sha256::digest(&canonical)[..8])
    }

    pub fn noise(&self) -> crate::comms::NoiseParams {
        let l = self.linear();
        crate::comms::NoiseParams {
            sigma_a_sq: l.sigma_a_sq_w,
            sigma_o_sq: l.sigma_o_sq_w,
        }
    }

    pub fn linear(&self) -> LinearUnits {
        let b = &self.budgets;
        LinearUnits {
            sigma_o_sq_w: dbm_to_watts(self.system.noise_dbm),
            sigma_a_sq_w: dbm_to_watts(self.system.dynamic_noise_dbm),
            budgets: Budgets {
                p_bs_max: dbm_to_watts(b.p_bs_max_dbm),
                p_ris_max: dbm_to_watts(b.p_ris_max_dbm),
                r_max: dbm_to_watts(b.r_max_dbm),
                gamma_th: db_to_linear(b.gamma_th_db),
                a_max: b.a_max,
                crb_max: b.crb_max,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        let bad = |m: String| Err(Error::Config(m));
        if !(s.frequency_hz > 0.0) || !(s.absorption_per_m >= 0.0) {
            return bad("system.frequency_hz must be > 0 and system.absorption_per_m >= 0".into());
        }
        for (name, v) in [
            ("system.bs_antennas", s.bs_antennas),
            ("system.ris_elements", s.ris_elements),
            ("system.sensing_elements", s.sensing_elements),
            ("system.users", s.users),
            ("target.dwell_symbols", self.target.dwell_symbols),
            ("env.steps_per_episode", self.env.steps_per_episode),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if s.active_elements > s.ris_elements {
            return bad(format!(
                "system.active_elements ({}) exceeds system.ris_elements ({})",
                s.active_elements, s.ris_elements
            ));
        }
        let g = &self.geometry;
        let [lo, hi] = g.user_distance_range_m;
        if !(lo > 0.0 && hi >= lo) {
            return bad(format!(
                "geometry.user_distance_range_m must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
            ));
        }
        if !(g.bs_ris_distance_m > 0.0 && g.target_distance_m > 0.0 && g.spacing_wavelengths > 0.0)
        {
            return bad("geometry distances and spacing must be positive".into());
        }
        if !(self.target.rcs > 0.0) {
            return bad("target.rcs must be positive".into());
        }
        if !(self.budgets.a_max >= 1.0) {
            return bad(format!(
                "budgets.a_max must be >= 1, got {}",
                self.budgets.a_max
            ));
        }
        self.linear().budgets.validate()?;
        self.agent.validate()?;
        self.baselines.validate()?;
        Ok(())
    }

    /// Agent reward transform (convenience accessor).
    pub fn reward_shaping(&self) -> RewardShaping {
        self.agent.reward_shaping
    }
}

fn span_hint(e: &toml::de::Error) -> String {
    match e.span() {
        Some(span) => format!(" (at byte {})", span.start),
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dbm_conversions() {
        assert_relative_eq!(dbm_to_watts(30.0), 1.0);
        assert_relative_eq!(dbm_to_watts(10.0), 0.01);
        assert_relative_eq!(dbm_to_watts(-90.0), 1e-12, max_relative = 1e-12);
        assert_relative_eq!(db_to_linear(0.0), 1.0);
        assert_relative_eq!(
            db_to_linear(3.0),
            1.995_262_314_968_879_5,
            max_relative = 1e-15
        );
    }

    #[test]
    fn paper_profile_carries_full_scale_values() {
        let c = ExperimentConfig::paper();
        assert_eq!(
            (
                c.system.bs_antennas,
                c.system.ris_elements,
                c.system.active_elements
            ),
            (64, 80, 30)
        );
        assert_eq!((c.system.sensing_elements, c.system.users), (20, 3));
        assert_eq!(c.budgets.a_max, 5.0);
        assert_eq!(c.agent.episodes, 10);
        assert_eq!(c.env.steps_per_episode, 100);
        assert_eq!(c.agent.batch_size, 100);
        assert_eq!(c.agent.hidden, vec![64, 64]);
        let l = c.linear();
        assert_relative_eq!(l.budgets.p_bs_max, 1.0);
        assert_relative_eq!(l.budgets.p_ris_max, 0.01);
        assert_relative_eq!(l.budgets.crb_max, 1e-3);
    }

    #[test]
    fn toml_round_trip_preserves_config() {
        let c = ExperimentConfig::desk();
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn missing_field_is_named() {
        let text = ExperimentConfig::desk()
            .to_toml_string()
            .replace("dwell_symbols = 1000\n", "");
        let err = ExperimentConfig::from_toml_str(&text)
            .unwrap_err()
            .to_string();
        assert!(err.contains("dwell_symbols"), "{err}");
    }

    #[test]
    fn unknown_field_is_rejected() {
        let text = ExperimentConfig::desk()
            .to_toml_string()
            .replace("[target]\n", "[target]\nbogus = 1\n");
        let err = ExperimentConfig::from_toml_str(&text)
            .unwrap_err()
            .to_string();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn overrides_apply_and_change_hash() {
        let mut c = ExperimentConfig::desk();
        let h = c.hash();
        c.set("budgets.a_max=2").unwrap();
        assert_eq!(c.budgets.a_max, 2.0);
        c.set("system.sensing_interference=target").unwrap();
        assert_eq!(c.system.sensing_interference, SensingInterference::Target);
        c.set("sweep.powers_dbm=[20, 30]").unwrap();
        assert_eq!(c.sweep.powers_dbm, vec![20.0, 30.0]);
        assert_ne!(c.hash(), h);
        assert!(c.set("budgets.nope=1").is_err());
        assert!(c.set("budgets.a_max").is_err());
        assert!(c.set("system.users=0").is_err());
    }

    #[test]
    fn profile_names_parse() {
        assert_eq!("desk".parse::<Profile>().unwrap(), Profile::Desk);
        assert!("laptop".parse::<Profile>().is_err());
    }
}
