//! From port counts to an angle, and from the angle to a concentration.
//!
//! Three statistics are supported, all ratios of the two port counts of a
//! trial with ν slots:
//!
//! * `Single` — f = N_H/ν. Mean model η_H·T. Needs only one detector but
//!   inherits its efficiency directly.
//! * `Diff` — f = (N_H − N_V)/ν. Mean model η_H·T − η_V·R.
//! * `Dsr` — f = (N_H − N_V)/(N_H + N_V). Mean model
//!   (η_H·T − η_V·R)/(η_H·T + η_V·R) in the large-ν limit; the
//!   normalization cancels source-intensity drift and, for equal
//!   efficiencies, the efficiencies themselves.
//!
//! Each model is inverted for the transmittance T and then for the angle.
//! The magnitude inversion θ = arccos(√T) is sign-blind and π-periodic, so a
//! branch hint picks among the candidates ±θ + k·180°. Campaign-level
//! estimation averages per-trial angles, converts the offset from the known
//! input angle into a concentration, and flags angles too close to the
//! projection extremes for the statistic to be trustworthy (the exclusion
//! rule).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optics::{concentration_from_angle, specific_rotation, ChiralSample, OpticsError, PolarizationAngle};
use crate::photostats::CountRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Single,
    Diff,
    Dsr,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [EstimatorKind::Single, EstimatorKind::Diff, EstimatorKind::Dsr];
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimatorKind::Single => write!(f, "single"),
            EstimatorKind::Diff => write!(f, "diff"),
            EstimatorKind::Dsr => write!(f, "dsr"),
        }
    }
}

/// Where the detection efficiencies came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum CalibrationSource {
    /// Taken from configuration as-is.
    Configured,
    /// Fitted from a blank (zero-rotation) input-angle scan; carries the
    /// root-mean-square fit residual per port in rate units.
    Fitted { residual_rms_h: f64, residual_rms_v: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub eta_h: f64,
    pub eta_v: f64,
    pub source: CalibrationSource,
}

impl Calibration {
    pub fn configured(eta_h: f64, eta_v: f64) -> Result<Self, EstimatorError> {
        for (name, v) in [("eta_h", eta_h), ("eta_v", eta_v)] {
            if !(v.is_finite() && v > 0.0 && v <= 1.0) {
                return Err(EstimatorError::InvalidCalibration { field: name, value: v });
            }
        }
        Ok(Self { eta_h, eta_v, source: CalibrationSource::Configured })
    }

    /// Efficiencies scaled by a mean photon number, for inverting benchmark
    /// campaigns whose slots carry ⟨N⟩ ≠ 1 photons. The mean models scale
    /// the same way (and the scale cancels entirely for `Dsr`).
    pub fn scaled_by_mean_photons(&self, mean_photons: f64) -> Calibration {
        Calibration {
            eta_h: self.eta_h * mean_photons,
            eta_v: self.eta_v * mean_photons,
            source: self.source,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("calibration field {field} out of range: {value}")]
    InvalidCalibration { field: &'static str, value: f64 },
    #[error("ratio statistic undefined: N_H + N_V = 0")]
    EmptyDenominator,
    #[error("statistic inverts to transmittance {transmittance} outside [0, 1]")]
    UnphysicalStatistic { transmittance: f64 },
    #[error("campaign holds no trials")]
    EmptyCampaign,
    #[error("no trial in the campaign produced a usable angle")]
    AllTrialsInvalid,
    #[error("blank scan needs at least {needed} distinct input angles, got {got}")]
    InsufficientScan { needed: usize, got: usize },
    #[error("blank scan must bracket the projection range (angles near 0° and near 90°)")]
    ScanCoverage,
    #[error("efficiency fit is degenerate: the {port} port sees no projection variation")]
    FitDegenerate { port: &'static str },
    #[error("fitted efficiency {value} for {port} port outside (0, 1]")]
    FitOutOfRange { port: &'static str, value: f64 },
    #[error(transparent)]
    Optics(#[from] OpticsError),
}

/// The statistic value f of one trial.
pub fn outcome_value(record: &CountRecord, kind: EstimatorKind) -> Result<f64, EstimatorError> {
    let nu = record.heralds as f64;
    let (h, v) = (record.n_h as f64, record.n_v as f64);
    match kind {
        EstimatorKind::Single => Ok(h / nu),
        EstimatorKind::Diff => Ok((h - v) / nu),
        EstimatorKind::Dsr => {
            if record.n_h + record.n_v == 0 {
                Err(EstimatorError::EmptyDenominator)
            } else {
                Ok((h - v) / (h + v))
            }
        }
    }
}

/// Transmittance solving the mean model ⟨f⟩(T) for the given statistic.
fn transmittance_from_statistic(f: f64, kind: EstimatorKind, calib: &Calibration) -> Result<f64, EstimatorError> {
    let t = match kind {
        EstimatorKind::Single => f / calib.eta_h,
        EstimatorKind::Diff => (f + calib.eta_v) / (calib.eta_h + calib.eta_v),
        EstimatorKind::Dsr => {
            let num = calib.eta_v * (1.0 + f);
            let den = calib.eta_h * (1.0 - f) + num;
            num / den
        }
    };
    // Half-ulp slack: statistics built from integer counts can land an ulp
    // outside [0, 1] at the extremes.
    if !(-1e-12..=1.0 + 1e-12).contains(&t) {
        return Err(EstimatorError::UnphysicalStatistic { transmittance: t });
    }
    Ok(t.clamp(0.0, 1.0))
}

/// Inverts a statistic value to an output angle.
///
/// The magnitude arccos(√T) fixes the angle only up to sign and half-turns;
/// of the candidates ±θ + k·180° the one nearest `branch_hint` is returned.
/// An exact tie (hint on a fold point) resolves to the positive side.
pub fn invert_to_theta(
    f: f64,
    kind: EstimatorKind,
    calib: &Calibration,
    branch_hint: PolarizationAngle,
) -> Result<PolarizationAngle, EstimatorError> {
    let t = transmittance_from_statistic(f, kind, calib)?;
    let magnitude = t.sqrt().min(1.0).acos();
    let hint = branch_hint.radians();
    let mut best = f64::MAX;
    let mut chosen = magnitude;
    for signed in [magnitude, -magnitude] {
        let k = ((hint - signed) / std::f64::consts::PI).round();
        let candidate = signed + k * std::f64::consts::PI;
        let dist = (candidate - hint).abs();
        // Strict `<` keeps the positive branch on ties.
        if dist < best {
            best = dist;
            chosen = candidate;
        }
    }
    Ok(PolarizationAngle::from_radians(chosen))
}

/// The exclusion rule: an angle is untrustworthy when the expected count of
/// either port runs within three standard deviations of its efficiency
/// ceiling η·ν, i.e. the statistic saturates and inversion noise becomes
/// one-sided. Evaluated under the heralded count model at `theta_out`.
pub fn exclusion_check(theta_out: PolarizationAngle, calib: &Calibration, heralds: u64) -> bool {
    let nu = heralds as f64;
    let t = theta_out.transmittance();
    let r = theta_out.reflectance();
    let channel = |eta: f64, p: f64| {
        let mean = nu * eta * p;
        let std = (nu * eta * p * (1.0 - eta * p)).sqrt();
        nu * eta - mean < 3.0 * std
    };
    channel(calib.eta_h, t) || channel(calib.eta_v, r)
}

/// How many invalid trials a campaign tolerates before its estimate is
/// flagged excluded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExclusionPolicy {
    /// Trials dropped for an empty ratio denominator (Dsr only).
    pub max_dropped_fraction: f64,
    /// Trials whose statistic inverted outside the physical range.
    pub max_unphysical_fraction: f64,
}

impl Default for ExclusionPolicy {
    fn default() -> Self {
        Self { max_dropped_fraction: 0.01, max_unphysical_fraction: 0.01 }
    }
}

/// Inversion context for a campaign: known input angle and the sample
/// geometry factor converting the rotation back to a concentration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationSetup {
    #[serde(rename = "theta_in_deg", with = "crate::optics::serde_degrees")]
    pub theta_in: PolarizationAngle,
    /// Specific rotation at the probe wavelength, deg·dm⁻¹·(g/ml)⁻¹.
    pub specific_rotation: f64,
    pub path_length_dm: f64,
    pub policy: ExclusionPolicy,
    /// Branch hint for the angle inversion. Defaults to θ_in: the rotation
    /// is unknown a priori and assumed small. Campaigns near a projection
    /// extreme fold across it, which the exclusion flag reports.
    #[serde(rename = "branch_hint_deg", with = "serde_degrees_opt")]
    pub branch_hint: Option<PolarizationAngle>,
}

mod serde_degrees_opt {
    use crate::optics::PolarizationAngle;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<PolarizationAngle>, ser: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(a) => ser.serialize_some(&a.degrees()),
            None => ser.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Option<PolarizationAngle>, D::Error> {
        Ok(Option::<f64>::deserialize(de)?.map(PolarizationAngle::from_degrees))
    }
}

impl EstimationSetup {
    /// Setup for a sample's geometry at the given wavelength. The sample's
    /// concentration plays no role here; only path length and dispersion do.
    pub fn new(theta_in: PolarizationAngle, sample: &ChiralSample, wavelength_nm: f64) -> Result<Self, EstimatorError> {
        sample.validate()?;
        Ok(Self {
            theta_in,
            specific_rotation: specific_rotation(wavelength_nm, &sample.transitions)?,
            path_length_dm: sample.path_length_dm,
            policy: ExclusionPolicy::default(),
            branch_hint: None,
        })
    }

    pub fn with_branch_hint(mut self, hint: PolarizationAngle) -> Self {
        self.branch_hint = Some(hint);
        self
    }
}

/// A campaign-level concentration estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub kind: EstimatorKind,
    pub theta_out_mean_deg: f64,
    /// Population standard deviation of the per-trial angles.
    pub theta_out_std_deg: f64,
    pub alpha_deg: f64,
    pub concentration: f64,
    pub concentration_std: f64,
    pub excluded: bool,
    pub trials_total: usize,
    pub trials_used: usize,
    pub trials_dropped_empty: usize,
    pub trials_unphysical: usize,
}

/// Estimates the concentration from a campaign of count records.
///
/// Per trial: statistic → transmittance → branch-resolved angle. The angle
/// mean and population standard deviation convert to concentration via
/// C = (θ̄_out − θ_in)/([α]·l). Negative estimates are reported unclamped.
/// The excluded flag is set by the exclusion rule at the estimated mean
/// angle, or when more than the policy's share of trials was unusable.
pub fn estimate_concentration(
    campaign: &[CountRecord],
    kind: EstimatorKind,
    calib: &Calibration,
    setup: &EstimationSetup,
) -> Result<Estimate, EstimatorError> {
    if campaign.is_empty() {
        return Err(EstimatorError::EmptyCampaign);
    }
    let hint = setup.branch_hint.unwrap_or(setup.theta_in);
    let mut angles = Vec::with_capacity(campaign.len());
    let mut dropped = 0usize;
    let mut unphysical = 0usize;
    for record in campaign {
        let f = match outcome_value(record, kind) {
            Ok(f) => f,
            Err(EstimatorError::EmptyDenominator) => {
                dropped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        match invert_to_theta(f, kind, calib, hint) {
            Ok(theta) => angles.push(theta.radians()),
            Err(EstimatorError::UnphysicalStatistic { .. }) => unphysical += 1,
            Err(e) => return Err(e),
        }
    }
    if angles.is_empty() {
        return Err(EstimatorError::AllTrialsInvalid);
    }

    let used = angles.len();
    let mean = angles.iter().sum::<f64>() / used as f64;
    let var = angles.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / used as f64;
    let mean_deg = mean.to_degrees();
    let std_deg = var.sqrt().to_degrees();

    let alpha_deg = mean_deg - setup.theta_in.degrees();
    let concentration = concentration_from_angle(alpha_deg, setup.specific_rotation, setup.path_length_dm)?;
    let concentration_std =
        std_deg / (setup.specific_rotation * setup.path_length_dm).abs();

    let total = campaign.len();
    let heralds = campaign[0].heralds;
    let excluded = exclusion_check(PolarizationAngle::from_radians(mean), calib, heralds)
        || (dropped as f64 / total as f64) > setup.policy.max_dropped_fraction
        || (unphysical as f64 / total as f64) > setup.policy.max_unphysical_fraction;

    Ok(Estimate {
        kind,
        theta_out_mean_deg: mean_deg,
        theta_out_std_deg: std_deg,
        alpha_deg,
        concentration,
        concentration_std,
        excluded,
        trials_total: total,
        trials_used: used,
        trials_dropped_empty: dropped,
        trials_unphysical: unphysical,
    })
}

/// One input angle of a blank (pure solvent) calibration scan with its
/// recorded trials.
#[derive(Debug, Clone, PartialEq)]
pub struct BlankScanPoint {
    pub theta_in: PolarizationAngle,
    pub records: Vec<CountRecord>,
}

/// Fits the port efficiencies from a blank scan.
///
/// With no rotation, the mean rates follow ⟨N_H⟩/ν = η_H·cos²θ_in and
/// ⟨N_V⟩/ν = η_V·sin²θ_in; each port is a one-parameter least-squares fit
/// through the origin of rate against its projection coefficient. Requires
/// at least five distinct input angles covering both projection extremes
/// (some |cosθ| ≥ cos 30° and some ≤ cos 60°).
pub fn calibrate_efficiencies(blank_scan: &[BlankScanPoint]) -> Result<Calibration, EstimatorError> {
    const NEEDED: usize = 5;
    let mut distinct: Vec<f64> = Vec::new();
    for p in blank_scan {
        let d = p.theta_in.degrees();
        if !distinct.iter().any(|&x| (x - d).abs() < 1e-9) {
            distinct.push(d);
        }
    }
    if distinct.len() < NEEDED {
        return Err(EstimatorError::InsufficientScan { needed: NEEDED, got: distinct.len() });
    }
    let t_of = |deg: f64| PolarizationAngle::from_degrees(deg).transmittance();
    let cos30sq = 0.75;
    let cos60sq = 0.25;
    if !distinct.iter().any(|&d| t_of(d) >= cos30sq) || !distinct.iter().any(|&d| t_of(d) <= cos60sq) {
        return Err(EstimatorError::ScanCoverage);
    }

    // (projection, mean rate) per scan point and port.
    let mut pts_h: Vec<(f64, f64)> = Vec::new();
    let mut pts_v: Vec<(f64, f64)> = Vec::new();
    for p in blank_scan {
        if p.records.is_empty() {
            continue;
        }
        let n = p.records.len() as f64;
        let rate_h = p.records.iter().map(|r| r.n_h as f64 / r.heralds as f64).sum::<f64>() / n;
        let rate_v = p.records.iter().map(|r| r.n_v as f64 / r.heralds as f64).sum::<f64>() / n;
        pts_h.push((p.theta_in.transmittance(), rate_h));
        pts_v.push((p.theta_in.reflectance(), rate_v));
    }
    if pts_h.is_empty() {
        return Err(EstimatorError::EmptyCampaign);
    }

    let fit = |pts: &[(f64, f64)], port: &'static str| -> Result<(f64, f64), EstimatorError> {
        let sxx: f64 = pts.iter().map(|(x, _)| x * x).sum();
        if sxx <= 1e-12 {
            return Err(EstimatorError::FitDegenerate { port });
        }
        let sxy: f64 = pts.iter().map(|(x, y)| x * y).sum();
        let eta = sxy / sxx;
        let rss: f64 = pts.iter().map(|(x, y)| (y - eta * x).powi(2)).sum();
        let rms = (rss / pts.len() as f64).sqrt();
        if !(eta.is_finite() && eta > 0.0 && eta <= 1.0) {
            return Err(EstimatorError::FitOutOfRange { port, value: eta });
        }
        Ok((eta, rms))
    };
    let (eta_h, rms_h) = fit(&pts_h, "H")?;
    let (eta_v, rms_v) = fit(&pts_v, "V")?;
    Ok(Calibration {
        eta_h,
        eta_v,
        source: CalibrationSource::Fitted { residual_rms_h: rms_h, residual_rms_v: rms_v },
    })
}
