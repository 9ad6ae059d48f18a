//! Experiment configuration: TOML files, presets and dotted-path overrides.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::{AccessScheme, EnvConfig, ScenarioConfig};
use crate::hppo::TrainConfig;
use crate::ris::RisMode;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "ARIS_NOMA")]
    ArisNoma,
    #[serde(rename = "PRIS_NOMA")]
    PrisNoma,
    #[serde(rename = "ARIS_OMA")]
    ArisOma,
    #[serde(rename = "PRIS_OMA")]
    PrisOma,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::ArisNoma, Mode::PrisNoma, Mode::ArisOma, Mode::PrisOma];

    pub fn ris_mode(self) -> RisMode {
        match self {
            Mode::ArisNoma | Mode::ArisOma => RisMode::Active,
            Mode::PrisNoma | Mode::PrisOma => RisMode::Passive,
        }
    }

    pub fn access(self) -> AccessScheme {
        match self {
            Mode::ArisNoma | Mode::PrisNoma => AccessScheme::Noma,
            Mode::ArisOma | Mode::PrisOma => AccessScheme::Oma,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::ArisNoma => "ARIS_NOMA",
            Mode::PrisNoma => "PRIS_NOMA",
            Mode::ArisOma => "ARIS_OMA",
            Mode::PrisOma => "PRIS_OMA",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}; expected one of ARIS_NOMA, PRIS_NOMA, ARIS_OMA, PRIS_OMA")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fairness {
    Off,
    On,
}

/// Who picks the per-slot configuration during a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Controller {
    /// Uniform draws inside the constraint boxes.
    Random,
    /// Exhaustive search over the quantized configuration space (one slot per realization).
    Oracle,
    /// Greedy H-PPO policy, trained per sweep point unless a checkpoint is given.
    Trained,
}

impl Controller {
    pub fn as_str(self) -> &'static str {
        match self {
            Controller::Random => "random",
            Controller::Oracle => "oracle",
            Controller::Trained => "trained",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Per-BS transmit power in dBm.
    PtDbm,
    /// Elements per RIS panel.
    Elements,
}

impl SweepVariable {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVariable::PtDbm => "p_t_dbm",
            SweepVariable::Elements => "elements",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub controller: Controller,
    /// Policy evaluated at every point by the trained controller.
    pub checkpoint: Option<PathBuf>,
    /// Realizations per point whose slot-by-slot trace is written out.
    pub trace_realizations: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            variable: SweepVariable::PtDbm,
            values: vec![-30.0, -20.0, -10.0, 0.0, 10.0, 20.0, 30.0],
            controller: Controller::Random,
            checkpoint: None,
            trace_realizations: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub q_phase: usize,
    pub q_lambda: usize,
    pub q_amp: usize,
    /// UAV grid points per axis; 1 keeps the UAV at its start position.
    pub uav_grid: usize,
    pub max_configurations: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            q_phase: 8,
            q_lambda: 5,
            q_amp: 4,
            uav_grid: 1,
            max_configurations: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub mode: Mode,
    pub fairness: Fairness,
    /// Weight of the Jain-index bonus when fairness is on.
    pub fairness_weight: f64,
    pub realizations: usize,
    /// Greedy evaluation episodes for `evaluate`.
    pub episodes: usize,
    /// Outage threshold, bits/s/Hz.
    pub r_min: f64,
    pub out_dir: PathBuf,
    pub scenario: ScenarioConfig,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
    pub oracle: OracleConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            mode: Mode::ArisNoma,
            fairness: Fairness::Off,
            fairness_weight: 1.0,
            realizations: 1000,
            episodes: 100,
            r_min: 1.0,
            out_dir: PathBuf::from("out"),
            scenario: ScenarioConfig::default(),
            env: EnvConfig::default(),
            train: TrainConfig::default(),
            sweep: SweepConfig::default(),
            oracle: OracleConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Three cells, 16-element panels, fixed placement, 100 realizations.
    /// Training uses a short discount horizon, scaled rewards and larger
    /// steps: per-slot rewards barely depend on earlier actions.
    pub fn reference() -> Self {
        let mut c = Self::default();
        c.scenario.placement_seed = Some(7);
        c.scenario.radio.p_t_dbm = 20.0;
        c.realizations = 100;
        c.train.discount = 0.5;
        c.train.reward_scale = 0.01;
        c.train.lr_discrete = 3e-3;
        c.train.lr_continuous = 3e-3;
        c.train.lr_critic = 1e-3;
        c.train.entropy_coef = 0.0;
        c
    }

    /// Two cells with two-element panels and oracle sweeps.
    pub fn tiny() -> Self {
        let mut c = Self {
            scenario: ScenarioConfig::tiny(),
            realizations: 50,
            ..Self::default()
        };
        c.sweep.controller = Controller::Oracle;
        c
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(Self::default()),
            "reference" => Ok(Self::reference()),
            "tiny" => Ok(Self::tiny()),
            _ => Err(Error::Config(format!("unknown preset {name:?}; expected default, reference or tiny"))),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&s).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.resolved_scenario().validate()?;
        self.resolved_env().validate()?;
        self.train.validate()?;
        if self.sweep.values.is_empty() {
            return Err(Error::Config("sweep values must be nonempty".into()));
        }
        if self.sweep.variable == SweepVariable::Elements && self.sweep.values.iter().any(|v| !(*v >= 0.0 && v.fract() == 0.0)) {
            return Err(Error::Config("element counts must be nonnegative integers".into()));
        }
        if self.realizations == 0 || self.episodes == 0 {
            return Err(Error::Config("realizations and episodes must be positive".into()));
        }
        if !(self.r_min >= 0.0) || !(self.fairness_weight >= 0.0) {
            return Err(Error::Config("r_min and fairness_weight must be nonnegative".into()));
        }
        let o = &self.oracle;
        if o.q_phase == 0 || o.q_lambda == 0 || o.q_amp == 0 || o.uav_grid == 0 {
            return Err(Error::Config("oracle quantization levels must be positive".into()));
        }
        Ok(())
    }

    /// Scenario with the mode's RIS type and access scheme applied.
    pub fn resolved_scenario(&self) -> ScenarioConfig {
        let mut s = self.scenario.clone();
        s.ris.mode = self.mode.ris_mode();
        s.access = self.mode.access();
        s
    }

    /// Environment settings with the fairness bonus applied.
    pub fn resolved_env(&self) -> EnvConfig {
        let mut e = self.env.clone();
        if self.fairness == Fairness::On {
            e.fairness_weight = self.fairness_weight;
        }
        e
    }

    /// Scenario at one sweep point.
    pub fn scenario_at(&self, value: f64) -> ScenarioConfig {
        let mut s = self.resolved_scenario();
        match self.sweep.variable {
            SweepVariable::PtDbm => {
                s.radio.p_t_dbm = value;
                s.radio.p_t_per_bs_dbm = None;
            }
            SweepVariable::Elements => s.ris.elements = [value as usize; 2],
        }
        s
    }

    /// Applies `a.b.c=value` overrides. Values use JSON syntax; anything that
    /// does not parse is taken as a string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut root = serde_json::to_value(self).map_err(|e| Error::Serde(e.to_string()))?;
        for o in overrides {
            let o = o.as_ref();
            let (path, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not of the form key=value")))?;
            let value: serde_json::Value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| serde_json::Value::String(raw.trim().to_string()));
            let mut node = &mut root;
            let keys: Vec<&str> = path.trim().split('.').collect();
            for (i, key) in keys.iter().enumerate() {
                let obj = node
                    .as_object_mut()
                    .ok_or_else(|| Error::Config(format!("override {path:?}: {} is not a table", keys[..i].join("."))))?;
                if i + 1 == keys.len() {
                    obj.insert((*key).to_string(), value.clone());
                    break;
                }
                node = obj.entry((*key).to_string()).or_insert_with(|| serde_json::Value::Object(Default::default()));
                if node.is_null() {
                    *node = serde_json::Value::Object(Default::default());
                }
            }
        }
        let c: Self = serde_json::from_value(root).map_err(|e| Error::Config(format!("invalid override: {e}")))?;
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        for c in [ExperimentConfig::default(), ExperimentConfig::reference(), ExperimentConfig::tiny()] {
            c.validate().unwrap();
            let back = ExperimentConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = ExperimentConfig::from_toml_str("mode = \"PRIS_OMA\"\n[scenario.radio]\np_t_dbm = 5.0\n").unwrap();
        assert_eq!(c.mode, Mode::PrisOma);
        assert_eq!(c.scenario.radio.p_t_dbm, 5.0);
        assert_eq!(c.realizations, 1000);
        assert_eq!(c.resolved_scenario().ris.mode, RisMode::Passive);
        assert_eq!(c.resolved_scenario().access, AccessScheme::Oma);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("bogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[train]\nlr = 1.0\n").is_err());
    }

    #[test]
    fn overrides() {
        let c = ExperimentConfig::default()
            .with_overrides(&[
                "scenario.radio.p_t_dbm=-10",
                "mode=PRIS_NOMA",
                "sweep.values=[1, 2]",
                "scenario.placement_seed=3",
                "train.iterations=5",
            ])
            .unwrap();
        assert_eq!(c.scenario.radio.p_t_dbm, -10.0);
        assert_eq!(c.mode, Mode::PrisNoma);
        assert_eq!(c.sweep.values, vec![1.0, 2.0]);
        assert_eq!(c.scenario.placement_seed, Some(3));
        assert_eq!(c.train.iterations, 5);
        assert!(ExperimentConfig::default().with_overrides(&["train.nope=1"]).is_err());
        assert!(ExperimentConfig::default().with_overrides(&["novalue"]).is_err());
        assert!(ExperimentConfig::default().with_overrides(&["sweep.values=[]"]).is_err());
    }

    #[test]
    fn mode_parsing() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert_eq!("aris_noma".parse::<Mode>().unwrap(), Mode::ArisNoma);
        assert!("NOMA".parse::<Mode>().is_err());
    }

    #[test]
    fn fairness_sets_env_weight() {
        let mut c = ExperimentConfig::default();
        assert_eq!(c.resolved_env().fairness_weight, 0.0);
        c.fairness = Fairness::On;
        assert_eq!(c.resolved_env().fairness_weight, 1.0);
    }
}
