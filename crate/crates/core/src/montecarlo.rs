//! Seeded simulation studies tying the sampler, the estimators, and the
//! closed forms together.
//!
//! Every study takes a serializable spec with a master seed and returns a
//! serializable result, so a run is reproducible end to end: the same spec
//! always yields the same counts, estimates, and fit numbers. Cells of a
//! study draw from independent substreams keyed by cell index, which keeps
//! results identical whether cells run serially or on a worker pool.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{
    estimate_concentration, exclusion_check, Calibration, Estimate, EstimationSetup, EstimatorError,
    EstimatorKind,
};
use crate::optics::{rotation_angle_deg, ChiralSample, OpticsError, PolarizationAngle};
use crate::photostats::{sample_campaign, CountRecord, PhotostatsError, ProbeConfig, Regime};
use crate::rng::derive_seed;
use crate::uncertainty::{
    lep_uncertainty_for_transmittance, pe_bias, quantum_enhancement, UncertaintyError,
};

#[derive(Debug, Error, PartialEq)]
pub enum MonteCarloError {
    #[error("study spec field {field} is invalid")]
    InvalidSpec { field: &'static str },
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Photostats(#[from] PhotostatsError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
}

/// A concentration-measurement campaign over a grid of input angles.
/// `probe.theta_in` serves as a template only; each grid cell overrides it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub label: String,
    pub probe: ProbeConfig,
    pub sample: ChiralSample,
    pub wavelength_nm: f64,
    pub theta_in_grid_deg: Vec<f64>,
    pub estimator: EstimatorKind,
    pub master_seed: u64,
}

/// Result of one grid cell. Rows align one to one with the grid; a cell
/// whose estimation failed keeps its position and carries the error text
/// instead of aborting the campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignRow {
    pub theta_in_deg: f64,
    pub theta_out_true_deg: f64,
    /// Exclusion rule evaluated at the true output angle.
    pub excluded: bool,
    pub estimate: Option<Estimate>,
    pub error: Option<String>,
    /// Closed-form prediction of the angle spread at the true output angle,
    /// degrees; absent where the form diverges.
    pub analytic_dtheta_deg: Option<f64>,
    /// First-order concentration prediction under the configured leak
    /// (equals the truth when the probe has none); absent at its poles.
    pub analytic_bias_c: Option<f64>,
    /// Predicted benchmark-to-heralded uncertainty ratio at this angle.
    pub enhancement_pred: f64,
}

/// Raw counts of one grid cell, kept for re-estimation and export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCounts {
    pub theta_in_deg: f64,
    pub records: Vec<CountRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub spec: CampaignSpec,
    pub alpha_true_deg: f64,
    pub rows: Vec<CampaignRow>,
    pub cells: Vec<CellCounts>,
}

fn photon_scale(probe: &ProbeConfig) -> f64 {
    match probe.regime {
        Regime::Quantum => 1.0,
        Regime::Classical => probe.mean_photons,
    }
}

/// Runs a campaign: per grid angle, draw trials, estimate the
/// concentration, and attach the analytic predictions for that cell.
pub fn run_campaign(spec: &CampaignSpec) -> Result<CampaignResult, MonteCarloError> {
    spec.probe.validate()?;
    spec.sample.validate()?;
    if spec.theta_in_grid_deg.is_empty() {
        return Err(MonteCarloError::InvalidSpec { field: "theta_in_grid_deg" });
    }
    let alpha = rotation_angle_deg(&spec.sample, spec.wavelength_nm)?;
    let base_calib = Calibration::configured(spec.probe.eta_h, spec.probe.eta_v)?;
    let invert_calib = base_calib.scaled_by_mean_photons(photon_scale(&spec.probe));
    let scale = photon_scale(&spec.probe).sqrt();
    let c_true = spec.sample.concentration_g_per_ml;

    let outcome: Result<Vec<(CampaignRow, CellCounts)>, MonteCarloError> = spec
        .theta_in_grid_deg
        .par_iter()
        .enumerate()
        .map(|(i, &theta_in_deg)| {
            let theta_in = PolarizationAngle::from_degrees(theta_in_deg);
            let theta_out_true = theta_in.rotated_by_deg(alpha);
            let mut probe = spec.probe.clone();
            probe.theta_in = theta_in;
            let setup = EstimationSetup::new(theta_in, &spec.sample, spec.wavelength_nm)?;
            let records = sample_campaign(&probe, theta_out_true, derive_seed(spec.master_seed, i as u64))?;
            let (estimate, error) =
                match estimate_concentration(&records, spec.estimator, &invert_calib, &setup) {
                    Ok(est) => (Some(est), None),
                    Err(e) => (None, Some(e.to_string())),
                };
            let analytic_dtheta_deg = match lep_uncertainty_for_transmittance(
                spec.estimator,
                probe.regime,
                theta_out_true.transmittance(),
                probe.eta_h,
                probe.eta_v,
                probe.heralds_per_trial,
            ) {
                Ok(rad) => Some((rad / scale).to_degrees()),
                Err(UncertaintyError::SingularPoint { .. }) => None,
                Err(e) => return Err(e.into()),
            };
            let analytic_bias_c = match pe_bias(
                spec.estimator,
                probe.regime,
                theta_out_true,
                probe.eta_h,
                probe.eta_v,
                probe.r_pe,
                probe.heralds_per_trial,
            ) {
                Ok(b) => {
                    let per_deg = 1.0 / (setup.specific_rotation * setup.path_length_dm);
                    Some(c_true + b.delta_theta_rad.to_degrees() * per_deg)
                }
                Err(UncertaintyError::SingularPoint { .. }) => None,
                Err(e) => return Err(e.into()),
            };
            let enhancement_pred =
                quantum_enhancement(spec.estimator, theta_out_true, probe.eta_h, probe.eta_v)?;
            let row = CampaignRow {
                theta_in_deg,
                theta_out_true_deg: theta_out_true.degrees(),
                excluded: exclusion_check(theta_out_true, &base_calib, probe.heralds_per_trial),
                estimate,
                error,
                analytic_dtheta_deg,
                analytic_bias_c,
                enhancement_pred,
            };
            Ok((row, CellCounts { theta_in_deg, records }))
        })
        .collect();
    let (rows, cells) = outcome?.into_iter().unzip();
    Ok(CampaignResult { spec: spec.clone(), alpha_true_deg: alpha, rows, cells })
}

/// Where a bias-study grid value lands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridPlacement {
    /// Grid values are true output angles; the input angle is back-computed
    /// per concentration so the sample rotation lands on the grid point.
    ThetaOut,
    /// Grid values are input angles; the output angle shifts with each
    /// concentration's rotation.
    ThetaIn,
}

/// Study of the estimate bias induced by an uncorrected projection-axis
/// pointing error. Heralded regime. Each (concentration, grid point) runs
/// an ideal arm (no leak) and a leaky arm at `r_pe`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeBiasSpec {
    pub label: String,
    pub kind: EstimatorKind,
    pub eta_h: f64,
    pub eta_v: f64,
    pub heralds: u64,
    pub trials: u64,
    /// Geometry and dispersion template; its concentration is overridden
    /// by each entry of `concentrations`.
    pub sample_template: ChiralSample,
    pub concentrations: Vec<f64>,
    pub wavelength_nm: f64,
    pub placement: GridPlacement,
    pub grid_deg: Vec<f64>,
    pub r_pe: f64,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeBiasRow {
    pub concentration_true: f64,
    pub theta_out_true_deg: f64,
    pub theta_in_deg: f64,
    pub r_pe: f64,
    pub c_mean: f64,
    pub c_std: f64,
    pub c_stderr: f64,
    /// Truth plus the first-order bias prediction; absent where the
    /// prediction diverges.
    pub analytic_first_order_c: Option<f64>,
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeBiasResult {
    pub spec: PeBiasSpec,
    pub rows: Vec<PeBiasRow>,
}

pub fn pe_bias_study(spec: &PeBiasSpec) -> Result<PeBiasResult, MonteCarloError> {
    if spec.concentrations.is_empty() {
        return Err(MonteCarloError::InvalidSpec { field: "concentrations" });
    }
    if spec.grid_deg.is_empty() {
        return Err(MonteCarloError::InvalidSpec { field: "grid_deg" });
    }
    if !(spec.r_pe.is_finite() && (0.0..0.5).contains(&spec.r_pe)) {
        return Err(MonteCarloError::InvalidSpec { field: "r_pe" });
    }
    let calib = Calibration::configured(spec.eta_h, spec.eta_v)?;

    struct Task {
        cell: u64,
        sample: ChiralSample,
        theta_in: PolarizationAngle,
        theta_out_true: PolarizationAngle,
        r: f64,
    }
    let mut tasks = Vec::with_capacity(spec.concentrations.len() * spec.grid_deg.len() * 2);
    for &c in &spec.concentrations {
        let mut sample = spec.sample_template.clone();
        sample.concentration_g_per_ml = c;
        sample.validate()?;
        let alpha = rotation_angle_deg(&sample, spec.wavelength_nm)?;
        for &grid_deg in &spec.grid_deg {
            let grid_angle = PolarizationAngle::from_degrees(grid_deg);
            let (theta_in, theta_out_true) = match spec.placement {
                GridPlacement::ThetaOut => (grid_angle.rotated_by_deg(-alpha), grid_angle),
                GridPlacement::ThetaIn => (grid_angle, grid_angle.rotated_by_deg(alpha)),
            };
            for r in [0.0, spec.r_pe] {
                tasks.push(Task {
                    cell: tasks.len() as u64,
                    sample: sample.clone(),
                    theta_in,
                    theta_out_true,
                    r,
                });
            }
        }
    }

    let rows: Result<Vec<PeBiasRow>, MonteCarloError> = tasks
        .par_iter()
        .map(|task| {
            let probe = ProbeConfig::new(Regime::Quantum, task.theta_in, spec.eta_h, spec.eta_v)
                .with_counts(spec.heralds, spec.trials)
                .with_r_pe(task.r);
            probe.validate()?;
            let records =
                sample_campaign(&probe, task.theta_out_true, derive_seed(spec.master_seed, task.cell))?;
            let setup = EstimationSetup::new(task.theta_in, &task.sample, spec.wavelength_nm)?;
            let est = estimate_concentration(&records, spec.kind, &calib, &setup)?;
            let c_true = task.sample.concentration_g_per_ml;
            let analytic_first_order_c = match pe_bias(
                spec.kind,
                Regime::Quantum,
                task.theta_out_true,
                spec.eta_h,
                spec.eta_v,
                task.r,
                spec.heralds,
            ) {
                Ok(b) => {
                    let per_deg = 1.0 / (setup.specific_rotation * setup.path_length_dm);
                    Some(c_true + b.delta_theta_rad.to_degrees() * per_deg)
                }
                Err(UncertaintyError::SingularPoint { .. }) => None,
                Err(e) => return Err(e.into()),
            };
            Ok(PeBiasRow {
                concentration_true: c_true,
                theta_out_true_deg: task.theta_out_true.degrees(),
                theta_in_deg: task.theta_in.degrees(),
                r_pe: task.r,
                c_mean: est.concentration,
                c_std: est.concentration_std,
                c_stderr: est.concentration_std / (est.trials_used as f64).sqrt(),
                analytic_first_order_c,
                excluded: exclusion_check(task.theta_out_true, &calib, spec.heralds) || est.excluded,
            })
        })
        .collect();
    Ok(PeBiasResult { spec: spec.clone(), rows: rows? })
}

/// Floor on trials per validation cell: the sampling error of a standard
/// deviation shrinks as 1/√(2μ), and 2000 trials put it near 1.6%, small
/// enough for the z-threshold below to separate real form errors from
/// noise.
pub const MIN_VALIDATION_TRIALS: u64 = 2000;

/// Cells beyond this z are flagged. Four sigma keeps the false-alarm rate
/// per cell near 6e-5, so even thousand-cell grids stay quiet without
/// multiple-testing corrections, while any wrong closed form (the nearest
/// candidates differ by tens of percent) lands far outside.
pub const VALIDATION_Z_THRESHOLD: f64 = 4.0;

/// Validation of the closed-form spreads: blank sample (no rotation, no
/// leak), so the output angle equals each grid angle exactly, and the
/// empirical spread of per-trial angle estimates is compared with the
/// closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSpec {
    pub label: String,
    pub regime: Regime,
    pub kinds: Vec<EstimatorKind>,
    pub eta_h: f64,
    pub eta_v: f64,
    pub heralds: u64,
    pub trials: u64,
    pub mean_photons: f64,
    pub theta_grid_deg: Vec<f64>,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub kind: EstimatorKind,
    pub regime: Regime,
    pub theta_out_deg: f64,
    pub expected_std_deg: f64,
    pub empirical_std_deg: f64,
    /// (empirical − expected) / stderr of a sample standard deviation.
    pub z_score: f64,
    pub passed: bool,
    pub trials_used: usize,
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub spec: ValidationSpec,
    pub rows: Vec<ValidationRow>,
}

pub fn validate_closed_forms(spec: &ValidationSpec) -> Result<ValidationResult, MonteCarloError> {
    if spec.kinds.is_empty() {
        return Err(MonteCarloError::InvalidSpec { field: "kinds" });
    }
    if spec.theta_grid_deg.is_empty() {
        return Err(MonteCarloError::InvalidSpec { field: "theta_grid_deg" });
    }
    if spec.trials < MIN_VALIDATION_TRIALS {
        return Err(MonteCarloError::InvalidSpec { field: "trials" });
    }
    let calib = Calibration::configured(spec.eta_h, spec.eta_v)?;
    let blank = ChiralSample::sucrose(0.0);
    let scale = match spec.regime {
        Regime::Quantum => 1.0,
        Regime::Classical => spec.mean_photons,
    };
    let invert_calib = calib.scaled_by_mean_photons(scale);

    let rows: Result<Vec<Vec<ValidationRow>>, MonteCarloError> = spec
        .theta_grid_deg
        .par_iter()
        .enumerate()
        .map(|(i, &theta_deg)| {
            let theta = PolarizationAngle::from_degrees(theta_deg);
            let mut probe = ProbeConfig::new(spec.regime, theta, spec.eta_h, spec.eta_v)
                .with_counts(spec.heralds, spec.trials);
            if spec.regime == Regime::Classical {
                probe = probe.with_mean_photons(spec.mean_photons);
            }
            probe.validate()?;
            let records = sample_campaign(&probe, theta, derive_seed(spec.master_seed, i as u64))?;
            let setup = EstimationSetup::new(theta, &blank, crate::optics::DEFAULT_WAVELENGTH_NM)?;
            let mut cell_rows = Vec::with_capacity(spec.kinds.len());
            for &kind in &spec.kinds {
                let est = estimate_concentration(&records, kind, &invert_calib, &setup)?;
                let expected_rad = lep_uncertainty_for_transmittance(
                    kind,
                    spec.regime,
                    theta.transmittance(),
                    spec.eta_h,
                    spec.eta_v,
                    spec.heralds,
                )? / scale.sqrt();
                let expected_std_deg = expected_rad.to_degrees();
                let stderr = expected_std_deg / (2.0 * est.trials_used as f64).sqrt();
                let z_score = (est.theta_out_std_deg - expected_std_deg) / stderr;
                cell_rows.push(ValidationRow {
                    kind,
                    regime: spec.regime,
                    theta_out_deg: theta_deg,
                    expected_std_deg,
                    empirical_std_deg: est.theta_out_std_deg,
                    z_score,
                    passed: z_score.abs() <= VALIDATION_Z_THRESHOLD,
                    trials_used: est.trials_used,
                    excluded: exclusion_check(theta, &calib, spec.heralds),
                });
            }
            Ok(cell_rows)
        })
        .collect();
    Ok(ValidationResult { spec: spec.clone(), rows: rows?.into_iter().flatten().collect() })
}

/// Study of how the empirical angle spread scales with the slot count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSpec {
    pub label: String,
    pub kind: EstimatorKind,
    pub regime: Regime,
    pub eta_h: f64,
    pub eta_v: f64,
    pub theta_deg: f64,
    pub heralds_grid: Vec<u64>,
    pub trials: u64,
    pub mean_photons: f64,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub heralds: u64,
    pub empirical_std_rad: f64,
    pub expected_std_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub spec: ScalingSpec,
    pub rows: Vec<ScalingRow>,
    /// Least-squares slope of ln(empirical spread) against ln(slot count).
    pub fitted_exponent: f64,
}

pub fn scaling_study(spec: &ScalingSpec) -> Result<ScalingResult, MonteCarloError> {
    if spec.heralds_grid.len() < 2 {
        return Err(MonteCarloError::InvalidSpec { field: "heralds_grid" });
    }
    let calib = Calibration::configured(spec.eta_h, spec.eta_v)?;
    let blank = ChiralSample::sucrose(0.0);
    let theta = PolarizationAngle::from_degrees(spec.theta_deg);
    let scale = match spec.regime {
        Regime::Quantum => 1.0,
        Regime::Classical => spec.mean_photons,
    };
    let invert_calib = calib.scaled_by_mean_photons(scale);

    let rows: Result<Vec<ScalingRow>, MonteCarloError> = spec
        .heralds_grid
        .par_iter()
        .enumerate()
        .map(|(i, &heralds)| {
            let mut probe =
                ProbeConfig::new(spec.regime, theta, spec.eta_h, spec.eta_v).with_counts(heralds, spec.trials);
            if spec.regime == Regime::Classical {
                probe = probe.with_mean_photons(spec.mean_photons);
            }
            probe.validate()?;
            let records = sample_campaign(&probe, theta, derive_seed(spec.master_seed, i as u64))?;
            let setup = EstimationSetup::new(theta, &blank, crate::optics::DEFAULT_WAVELENGTH_NM)?;
            let est = estimate_concentration(&records, spec.kind, &invert_calib, &setup)?;
            let expected = lep_uncertainty_for_transmittance(
                spec.kind,
                spec.regime,
                theta.transmittance(),
                spec.eta_h,
                spec.eta_v,
                heralds,
            )? / scale.sqrt();
            Ok(ScalingRow {
                heralds,
                empirical_std_rad: est.theta_out_std_deg.to_radians(),
                expected_std_rad: expected,
            })
        })
        .collect();
    let rows = rows?;
    let pts: Vec<(f64, f64)> =
        rows.iter().map(|r| ((r.heralds as f64).ln(), r.empirical_std_rad.ln())).collect();
    Ok(ScalingResult { spec: spec.clone(), fitted_exponent: ls_slope(&pts), rows })
}

fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}
