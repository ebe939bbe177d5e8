//! Run configuration: JSON documents, flag overrides, and resolution.
//!
//! Every subcommand accepts `--config <file.json>` plus flags; a flag
//! always wins over the config field of the same name, and anything still
//! unset falls back to a documented default. Resolution produces a fully
//! populated config that is written next to the outputs as
//! `config.resolved.json`; feeding that file back through `--config` with
//! no extra flags reproduces the run byte for byte.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use chiroptic::estimators::{Calibration, EstimatorKind};
use chiroptic::montecarlo::{
    CampaignSpec, GridPlacement, PeBiasSpec, ScalingSpec, ValidationSpec, MIN_VALIDATION_TRIALS,
};
use chiroptic::optics::{ChiralSample, PolarizationAngle, DEFAULT_WAVELENGTH_NM};
use chiroptic::photostats::{ProbeConfig, Regime};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Classified failure, mapped to the process exit code in `main`.
#[derive(Debug)]
pub enum CliError {
    /// Invalid or incomplete configuration; exit code 2.
    Config(String),
    /// Failure while computing or reading/writing data; exit code 1.
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

macro_rules! runtime_from {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Runtime(e.to_string())
            }
        }
    )*};
}

runtime_from!(
    std::io::Error,
    serde_json::Error,
    csv::Error,
    chiroptic::io::IoError,
    chiroptic::montecarlo::MonteCarloError,
    chiroptic::estimators::EstimatorError,
    chiroptic::fisher::FisherError,
    chiroptic::uncertainty::UncertaintyError,
    chiroptic::optics::OpticsError,
    chiroptic::photostats::PhotostatsError
);

fn missing(field: &str) -> CliError {
    CliError::Config(format!("missing required field `{field}` (set it in the config file or by flag)"))
}

fn invalid(field: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("invalid `{field}`: {why}"))
}

/// Loads a JSON config, or the type's empty form when no path was given.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

// ------------------------------------------------------------ flag values --

/// An angle grid written as `start:stop:step`, inclusive of the stop when
/// it lies on the lattice.
#[derive(Debug, Clone)]
pub struct GridSpec(pub Vec<f64>);

pub fn parse_grid(text: &str) -> Result<GridSpec, String> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("expected start:stop:step, got {text:?}"));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
        return Err("grid bounds must be finite".into());
    }
    if step <= 0.0 {
        return Err(format!("step must be positive, got {step}"));
    }
    if stop < start {
        return Err(format!("stop {stop} is below start {start}"));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    Ok(GridSpec((0..=count).map(|k| start + k as f64 * step).collect()))
}

#[derive(Debug, Clone)]
pub struct FloatList(pub Vec<f64>);

pub fn parse_float_list(text: &str) -> Result<FloatList, String> {
    let values: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err("empty list".into());
    }
    Ok(FloatList(values))
}

#[derive(Debug, Clone)]
pub struct CountList(pub Vec<u64>);

pub fn parse_count_list(text: &str) -> Result<CountList, String> {
    let values: Vec<u64> = text
        .split(',')
        .map(|p| p.trim().parse::<u64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err("empty list".into());
    }
    Ok(CountList(values))
}

pub fn parse_regime(text: &str) -> Result<Regime, String> {
    match text {
        "quantum" => Ok(Regime::Quantum),
        "classical" => Ok(Regime::Classical),
        other => Err(format!("unknown regime {other:?} (quantum|classical)")),
    }
}

pub fn parse_estimator(text: &str) -> Result<EstimatorKind, String> {
    match text {
        "single" => Ok(EstimatorKind::Single),
        "diff" => Ok(EstimatorKind::Diff),
        "dsr" => Ok(EstimatorKind::Dsr),
        other => Err(format!("unknown estimator {other:?} (single|diff|dsr)")),
    }
}

#[derive(Debug, Clone)]
pub struct KindList(pub Vec<EstimatorKind>);

pub fn parse_kind_list(text: &str) -> Result<KindList, String> {
    if text == "all" {
        return Ok(KindList(EstimatorKind::ALL.to_vec()));
    }
    let kinds: Vec<EstimatorKind> =
        text.split(',').map(|p| parse_estimator(p.trim())).collect::<Result<_, _>>()?;
    if kinds.is_empty() {
        return Err("empty list".into());
    }
    Ok(KindList(kinds))
}

pub fn parse_placement(text: &str) -> Result<GridPlacement, String> {
    match text {
        "theta-out" => Ok(GridPlacement::ThetaOut),
        "theta-in" => Ok(GridPlacement::ThetaIn),
        other => Err(format!("unknown placement {other:?} (theta-out|theta-in)")),
    }
}

// --------------------------------------------------------------- simulate --

/// Campaign configuration. Unset fields default to the reference sucrose
/// campaign (0.5 g/ml, 809.6 nm, 1 dm-tenth cuvette, 10^5 heralds x 500
/// trials over -100..100 degrees in steps of 10), except the detection
/// efficiencies, which must always be given.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_version: Option<String>,
    pub label: Option<String>,
    pub regime: Option<Regime>,
    pub estimator: Option<EstimatorKind>,
    pub eta_h: Option<f64>,
    pub eta_v: Option<f64>,
    pub r_pe: Option<f64>,
    pub heralds: Option<u64>,
    pub trials: Option<u64>,
    pub mean_photons: Option<f64>,
    pub concentration_g_per_ml: Option<f64>,
    pub path_length_dm: Option<f64>,
    pub wavelength_nm: Option<f64>,
    pub theta_in_grid_deg: Option<Vec<f64>>,
    pub master_seed: Option<u64>,
}

impl SimulateConfig {
    pub fn resolve(mut self) -> Result<Self, CliError> {
        self.tool_version = Some(VERSION.to_string());
        self.label.get_or_insert_with(|| "campaign".to_string());
        self.regime.get_or_insert(Regime::Quantum);
        self.estimator.get_or_insert(EstimatorKind::Dsr);
        self.eta_h.ok_or_else(|| missing("eta_h"))?;
        self.eta_v.ok_or_else(|| missing("eta_v"))?;
        self.r_pe.get_or_insert(0.0);
        self.heralds.get_or_insert(100_000);
        self.trials.get_or_insert(500);
        self.mean_photons.get_or_insert(1.0);
        self.concentration_g_per_ml.get_or_insert(0.5);
        self.path_length_dm.get_or_insert(0.1);
        self.wavelength_nm.get_or_insert(DEFAULT_WAVELENGTH_NM);
        self.theta_in_grid_deg
            .get_or_insert_with(|| (0..=20).map(|k| -100.0 + k as f64 * 10.0).collect());
        self.master_seed.get_or_insert(0);

        let spec = self.to_spec();
        spec.probe.validate().map_err(|e| invalid("probe", e))?;
        spec.sample.validate().map_err(|e| invalid("sample", e))?;
        if spec.theta_in_grid_deg.is_empty() {
            return Err(invalid("theta_in_grid_deg", "must not be empty"));
        }
        Ok(self)
    }

    /// Valid only after `resolve`.
    pub fn to_spec(&self) -> CampaignSpec {
        let mut sample = ChiralSample::sucrose(self.concentration_g_per_ml.unwrap());
        sample.path_length_dm = self.path_length_dm.unwrap();
        CampaignSpec {
            label: self.label.clone().unwrap(),
            probe: ProbeConfig::new(
                self.regime.unwrap(),
                PolarizationAngle::from_degrees(0.0),
                self.eta_h.unwrap(),
                self.eta_v.unwrap(),
            )
            .with_counts(self.heralds.unwrap(), self.trials.unwrap())
            .with_r_pe(self.r_pe.unwrap())
            .with_mean_photons(self.mean_photons.unwrap()),
            sample,
            wavelength_nm: self.wavelength_nm.unwrap(),
            theta_in_grid_deg: self.theta_in_grid_deg.clone().unwrap(),
            estimator: self.estimator.unwrap(),
            master_seed: self.master_seed.unwrap(),
        }
    }
}

// --------------------------------------------------------------- estimate --

/// Estimation from an external counts file. The concentration conversion
/// assumes the sucrose dispersion model at the configured wavelength and
/// path length.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_version: Option<String>,
    pub counts: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<String>,
    pub estimator: Option<EstimatorKind>,
    pub regime: Option<Regime>,
    pub eta_h: Option<f64>,
    pub eta_v: Option<f64>,
    pub mean_photons: Option<f64>,
    pub wavelength_nm: Option<f64>,
    pub path_length_dm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch_hint_deg: Option<f64>,
}

impl EstimateConfig {
    pub fn resolve(mut self) -> Result<Self, CliError> {
        self.tool_version = Some(VERSION.to_string());
        self.counts.as_ref().ok_or_else(|| missing("counts"))?;
        self.estimator.get_or_insert(EstimatorKind::Dsr);
        self.regime.get_or_insert(Regime::Quantum);
        let eta_h = self.eta_h.ok_or_else(|| missing("eta_h"))?;
        let eta_v = self.eta_v.ok_or_else(|| missing("eta_v"))?;
        self.mean_photons.get_or_insert(1.0);
        self.wavelength_nm.get_or_insert(DEFAULT_WAVELENGTH_NM);
        self.path_length_dm.get_or_insert(0.1);

        Calibration::configured(eta_h, eta_v).map_err(|e| invalid("eta_h/eta_v", e))?;
        let mean_photons = self.mean_photons.unwrap();
        if !(mean_photons.is_finite() && mean_photons > 0.0) {
            return Err(invalid("mean_photons", "must be positive"));
        }
        if self.regime == Some(Regime::Quantum) && mean_photons != 1.0 {
            return Err(invalid("mean_photons", "must be 1 in the quantum regime"));
        }
        if let Some(hint) = self.branch_hint_deg {
            if !hint.is_finite() {
                return Err(invalid("branch_hint_deg", "must be finite"));
            }
        }
        Ok(self)
    }

    /// Detection calibration in per-slot units: classical counts carry the
    /// mean photon number, so the configured efficiencies are scaled by it
    /// before inversion.
    pub fn calibration(&self) -> Calibration {
        let calib = Calibration::configured(self.eta_h.unwrap(), self.eta_v.unwrap()).unwrap();
        match self.regime.unwrap() {
            Regime::Quantum => calib,
            Regime::Classical => calib.scaled_by_mean_photons(self.mean_photons.unwrap()),
        }
    }
}

// ----------------------------------------------------------------- fisher --

/// Information-bound report configuration. Defaults: the single-port
/// statistic, heralded regime, symmetric 0.25 efficiencies, 10..80 degrees
/// in steps of 5, 10^5 slots.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FisherConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_version: Option<String>,
    pub scheme: Option<EstimatorKind>,
    pub regime: Option<Regime>,
    pub eta_h: Option<f64>,
    pub eta_v: Option<f64>,
    pub heralds: Option<u64>,
    pub grid_deg: Option<Vec<f64>>,
}

impl FisherConfig {
    pub fn resolve(mut self) -> Result<Self, CliError> {
        self.tool_version = Some(VERSION.to_string());
        self.scheme.get_or_insert(EstimatorKind::Single);
        self.regime.get_or_insert(Regime::Quantum);
        self.eta_h.get_or_insert(0.25);
        self.eta_v.get_or_insert(0.25);
        self.heralds.get_or_insert(100_000);
        self.grid_deg.get_or_insert_with(|| (0..=14).map(|k| 10.0 + k as f64 * 5.0).collect());

        Calibration::configured(self.eta_h.unwrap(), self.eta_v.unwrap())
            .map_err(|e| invalid("eta_h/eta_v", e))?;
        if self.heralds == Some(0) {
            return Err(invalid("heralds", "must be at least 1"));
        }
        if self.grid_deg.as_ref().unwrap().is_empty() {
            return Err(invalid("grid_deg", "must not be empty"));
        }
        Ok(self)
    }
}

// ----------------------------------------------------------------- budget --

/// Budget report configuration. Without a table path the built-in
/// reference budget is used: its first three rows are the alternative
/// counting-statistics rows and only the normalized-difference one enters
/// the combined total. A user-supplied table is combined over all of its
/// rows, so it should contain exactly the rows meant to enter the total.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
}

impl BudgetConfig {
    pub fn resolve(mut self) -> Result<Self, CliError> {
        self.tool_version = Some(VERSION.to_string());
        Ok(self)
    }
}

// --------------------------------------------------------------------- mc --

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    PeBias,
    Validate,
    Scaling,
}

pub fn parse_study(text: &str) -> Result<Study, String> {
    match text {
        "pe-bias" => Ok(Study::PeBias),
        "validate" => Ok(Study::Validate),
        "scaling" => Ok(Study::Scaling),
        other => Err(format!("unknown study {other:?} (pe-bias|validate|scaling)")),
    }
}

/// Monte-Carlo study configuration; the study selects which fields apply
/// and their defaults. Fields of other studies stay unset in the resolved
/// config.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_version: Option<String>,
    pub study: Option<Study>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Statistic under study (pe-bias, scaling).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimatorKind>,
    /// Statistics to validate (validate).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimators: Option<Vec<EstimatorKind>>,
    /// Regime (validate, scaling); the pe-bias study is heralded only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    pub eta_h: Option<f64>,
    pub eta_v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heralds: Option<u64>,
    pub trials: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_photons: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concentrations: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelength_nm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_length_dm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placement: Option<GridPlacement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_deg: Option<Vec<f64>>,
    /// Probe angle of the scaling study, degrees.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_deg: Option<f64>,
    /// Slot counts of the scaling study.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_grid: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_pe: Option<f64>,
    pub master_seed: Option<u64>,
}

impl McConfig {
    pub fn resolve(mut self) -> Result<Self, CliError> {
        self.tool_version = Some(VERSION.to_string());
        let study = self.study.ok_or_else(|| missing("study"))?;
        self.eta_h.get_or_insert(0.25);
        self.eta_v.get_or_insert(0.25);
        self.master_seed.get_or_insert(0);
        Calibration::configured(self.eta_h.unwrap(), self.eta_v.unwrap())
            .map_err(|e| invalid("eta_h/eta_v", e))?;

        match study {
            Study::PeBias => {
                self.label.get_or_insert_with(|| "pe-bias".to_string());
                self.estimator.get_or_insert(EstimatorKind::Dsr);
                self.heralds.get_or_insert(100_000);
                self.trials.get_or_insert(500);
                self.concentrations.get_or_insert_with(|| vec![0.1, 0.3, 0.5]);
                self.wavelength_nm.get_or_insert(DEFAULT_WAVELENGTH_NM);
                self.path_length_dm.get_or_insert(0.1);
                self.placement.get_or_insert(GridPlacement::ThetaOut);
                self.grid_deg.get_or_insert_with(|| (0..=18).map(|k| k as f64 * 2.5).collect());
                self.r_pe.get_or_insert(1e-3);
                let r_pe = self.r_pe.unwrap();
                if !(r_pe.is_finite() && (0.0..0.5).contains(&r_pe)) {
                    return Err(invalid("r_pe", "must lie in [0, 0.5)"));
                }
                if self.concentrations.as_ref().unwrap().is_empty() {
                    return Err(invalid("concentrations", "must not be empty"));
                }
                if self.grid_deg.as_ref().unwrap().is_empty() {
                    return Err(invalid("grid_deg", "must not be empty"));
                }
            }
            Study::Validate => {
                self.label.get_or_insert_with(|| "validate".to_string());
                self.estimators.get_or_insert_with(|| EstimatorKind::ALL.to_vec());
                self.regime.get_or_insert(Regime::Quantum);
                self.heralds.get_or_insert(20_000);
                self.trials.get_or_insert(MIN_VALIDATION_TRIALS);
                self.mean_photons.get_or_insert(1.0);
                self.grid_deg.get_or_insert_with(|| (0..=16).map(|k| 5.0 + k as f64 * 5.0).collect());
                if self.trials.unwrap() < MIN_VALIDATION_TRIALS {
                    return Err(invalid(
                        "trials",
                        format!("validation needs at least {MIN_VALIDATION_TRIALS} per cell"),
                    ));
                }
                if self.grid_deg.as_ref().unwrap().is_empty() {
                    return Err(invalid("grid_deg", "must not be empty"));
                }
            }
            Study::Scaling => {
                self.label.get_or_insert_with(|| "scaling".to_string());
                self.estimator.get_or_insert(EstimatorKind::Dsr);
                self.regime.get_or_insert(Regime::Quantum);
                self.trials.get_or_insert(2000);
                self.mean_photons.get_or_insert(1.0);
                self.theta_deg.get_or_insert(45.0);
                self.nu_grid.get_or_insert_with(|| vec![1_000, 10_000, 100_000]);
                if self.nu_grid.as_ref().unwrap().len() < 2 {
                    return Err(invalid("nu_grid", "need at least two slot counts to fit a slope"));
                }
            }
        }

        if self.heralds == Some(0) {
            return Err(invalid("heralds", "must be at least 1"));
        }
        if self.trials == Some(0) {
            return Err(invalid("trials", "must be at least 1"));
        }
        Ok(self)
    }

    pub fn to_pe_bias_spec(&self) -> PeBiasSpec {
        let mut sample = ChiralSample::sucrose(0.0);
        sample.path_length_dm = self.path_length_dm.unwrap();
        PeBiasSpec {
            label: self.label.clone().unwrap(),
            kind: self.estimator.unwrap(),
            eta_h: self.eta_h.unwrap(),
            eta_v: self.eta_v.unwrap(),
            heralds: self.heralds.unwrap(),
            trials: self.trials.unwrap(),
            sample_template: sample,
            concentrations: self.concentrations.clone().unwrap(),
            wavelength_nm: self.wavelength_nm.unwrap(),
            placement: self.placement.unwrap(),
            grid_deg: self.grid_deg.clone().unwrap(),
            r_pe: self.r_pe.unwrap(),
            master_seed: self.master_seed.unwrap(),
        }
    }

    pub fn to_validation_spec(&self) -> ValidationSpec {
        ValidationSpec {
            label: self.label.clone().unwrap(),
            regime: self.regime.unwrap(),
            kinds: self.estimators.clone().unwrap(),
            eta_h: self.eta_h.unwrap(),
            eta_v: self.eta_v.unwrap(),
            heralds: self.heralds.unwrap(),
            trials: self.trials.unwrap(),
            mean_photons: self.mean_photons.unwrap(),
            theta_grid_deg: self.grid_deg.clone().unwrap(),
            master_seed: self.master_seed.unwrap(),
        }
    }

    pub fn to_scaling_spec(&self) -> ScalingSpec {
        ScalingSpec {
            label: self.label.clone().unwrap(),
            kind: self.estimator.unwrap(),
            regime: self.regime.unwrap(),
            eta_h: self.eta_h.unwrap(),
            eta_v: self.eta_v.unwrap(),
            theta_deg: self.theta_deg.unwrap(),
            heralds_grid: self.nu_grid.clone().unwrap(),
            trials: self.trials.unwrap(),
            mean_photons: self.mean_photons.unwrap(),
            master_seed: self.master_seed.unwrap(),
        }
    }

    /// Seed recorded in output preambles; the deterministic reports use 0.
    pub fn seed(&self) -> u64 {
        self.master_seed.unwrap_or(0)
    }
}
