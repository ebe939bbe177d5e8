//! Closed-form angle uncertainties and their consequences.
//!
//! For each statistic the linearized error propagation
//! Δθ = Std[f] / |d⟨f⟩/dθ| has a closed form in the transmittance
//! T = cos²θ_out, the port efficiencies, and the slot count ν. The heralded
//! regime uses the joint binomial count model, the intensity-matched
//! benchmark uses independent Poisson counts; the benchmark expressions are
//! never smaller. This module evaluates the six forms, locates their extrema
//! over T, forms the benchmark-to-heralded ratio, propagates a small
//! projection-axis pointing error into first-order biases, and assembles
//! tabular uncertainty budgets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::EstimatorKind;
use crate::optics::PolarizationAngle;
use crate::photostats::Regime;

#[derive(Debug, Error, PartialEq)]
pub enum UncertaintyError {
    #[error("parameter {field} out of range: {value}")]
    InvalidParameter { field: &'static str, value: f64 },
    #[error("uncertainty diverges at transmittance {transmittance}")]
    SingularPoint { transmittance: f64 },
    #[error("mean response has zero slope; no angle information")]
    ZeroSlope,
    #[error("budget row {entry:?} has no sensitivity coefficient")]
    MissingSensitivity { entry: String },
}

fn check_eta(eta_h: f64, eta_v: f64) -> Result<(), UncertaintyError> {
    for (field, v) in [("eta_h", eta_h), ("eta_v", eta_v)] {
        if !(v.is_finite() && v > 0.0 && v <= 1.0) {
            return Err(UncertaintyError::InvalidParameter { field, value: v });
        }
    }
    Ok(())
}

/// Evaluation point for the closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyContext {
    pub kind: EstimatorKind,
    pub regime: Regime,
    #[serde(rename = "theta_out_deg", with = "crate::optics::serde_degrees")]
    pub theta_out: PolarizationAngle,
    pub eta_h: f64,
    pub eta_v: f64,
    pub heralds: u64,
}

/// Closed-form angle uncertainty in radians at the context's output angle.
pub fn lep_uncertainty(ctx: &UncertaintyContext) -> Result<f64, UncertaintyError> {
    lep_uncertainty_for_transmittance(
        ctx.kind,
        ctx.regime,
        ctx.theta_out.transmittance(),
        ctx.eta_h,
        ctx.eta_v,
        ctx.heralds,
    )
}

/// Closed-form angle uncertainty in radians as a function of transmittance.
///
/// Per ν-slot trial with T = cos²θ, R = 1 − T:
///
/// | statistic | heralded                                  | benchmark                      |
/// |-----------|-------------------------------------------|--------------------------------|
/// | single    | √[(1 − η_H T) / (4 η_H R)]                | √[1 / (4 η_H R)]               |
/// | diff      | √[(S − D²) / (4 (η_H + η_V)² T R)]        | √[S / (4 (η_H + η_V)² T R)]    |
/// | dsr       | √[S / (4 η_H η_V)]                        | same as heralded               |
///
/// with S = η_H T + η_V R, D = η_H T − η_V R, all divided by √ν. Poles of
/// the single and diff forms (R = 0, and T = 0 for diff) are reported as
/// errors instead of infinities.
pub fn lep_uncertainty_for_transmittance(
    kind: EstimatorKind,
    regime: Regime,
    t: f64,
    eta_h: f64,
    eta_v: f64,
    heralds: u64,
) -> Result<f64, UncertaintyError> {
    check_eta(eta_h, eta_v)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(UncertaintyError::InvalidParameter { field: "transmittance", value: t });
    }
    if heralds == 0 {
        return Err(UncertaintyError::InvalidParameter { field: "heralds", value: 0.0 });
    }
    let r = 1.0 - t;
    let s = eta_h * t + eta_v * r;
    let d = eta_h * t - eta_v * r;
    const POLE: f64 = 1e-300;
    let per_trial = match (kind, regime) {
        (EstimatorKind::Single, Regime::Quantum) => {
            if r < POLE {
                return Err(UncertaintyError::SingularPoint { transmittance: t });
            }
            ((1.0 - eta_h * t) / (4.0 * eta_h * r)).sqrt()
        }
        (EstimatorKind::Single, Regime::Classical) => {
            if r < POLE {
                return Err(UncertaintyError::SingularPoint { transmittance: t });
            }
            (1.0 / (4.0 * eta_h * r)).sqrt()
        }
        (EstimatorKind::Diff, Regime::Quantum) => {
            if t < POLE || r < POLE {
                return Err(UncertaintyError::SingularPoint { transmittance: t });
            }
            ((s - d * d) / (4.0 * (eta_h + eta_v).powi(2) * t * r)).sqrt()
        }
        (EstimatorKind::Diff, Regime::Classical) => {
            if t < POLE || r < POLE {
                return Err(UncertaintyError::SingularPoint { transmittance: t });
            }
            (s / (4.0 * (eta_h + eta_v).powi(2) * t * r)).sqrt()
        }
        (EstimatorKind::Dsr, _) => (s / (4.0 * eta_h * eta_v)).sqrt(),
    };
    Ok(per_trial / (heralds as f64).sqrt())
}

/// General first-order propagation for a two-count statistic:
/// Δθ = √(pᵀ C p) / |slope| with p the partial derivatives of the statistic
/// with respect to the two counts, C their covariance matrix, and slope the
/// derivative of the mean statistic with respect to the angle.
pub fn covariance_propagation(
    partials: [f64; 2],
    covariance: [[f64; 2]; 2],
    slope: f64,
) -> Result<f64, UncertaintyError> {
    if slope.abs() < 1e-300 {
        return Err(UncertaintyError::ZeroSlope);
    }
    let [ph, pv] = partials;
    let quad = ph * ph * covariance[0][0] + 2.0 * ph * pv * covariance[0][1] + pv * pv * covariance[1][1];
    if quad < 0.0 {
        return Err(UncertaintyError::InvalidParameter { field: "covariance", value: quad });
    }
    Ok(quad.sqrt() / slope.abs())
}

/// Ratio of benchmark to heralded uncertainty at one angle; the factor by
/// which heralding tightens the estimate. Always at least 1; exactly 1 for
/// the normalized statistic, whose noise the heralds do not constrain.
pub fn quantum_enhancement(
    kind: EstimatorKind,
    theta_out: PolarizationAngle,
    eta_h: f64,
    eta_v: f64,
) -> Result<f64, UncertaintyError> {
    check_eta(eta_h, eta_v)?;
    let t = theta_out.transmittance();
    let r = theta_out.reflectance();
    match kind {
        EstimatorKind::Single => Ok(1.0 / (1.0 - eta_h * t).sqrt()),
        EstimatorKind::Diff => {
            let s = eta_h * t + eta_v * r;
            let d = eta_h * t - eta_v * r;
            Ok(1.0 / (1.0 - d * d / s).sqrt())
        }
        EstimatorKind::Dsr => Ok(1.0),
    }
}

/// Location and value of one uncertainty extremum over transmittance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremumPoint {
    pub transmittance: f64,
    pub uncertainty_rad: f64,
}

/// Extrema of a closed form over T in [0, 1]. `max` is None when the form
/// is unbounded at a domain edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyExtrema {
    pub min: ExtremumPoint,
    pub max: Option<ExtremumPoint>,
}

/// Analytic extrema of the closed-form uncertainty over transmittance.
///
/// * single — increasing in T; minimum √[1/(4 η_H)]/√ν at T = 0. Unbounded
///   toward T = 1, except the heralded form at η_H = 1, which is constant.
/// * diff — diverges at both edges; interior minimum. Heralded at
///   T* = η_V(1−η_V) / [η_V(1−η_V) + √(η_H(1−η_H)·η_V(1−η_V))], benchmark
///   at T* = √η_V / (√η_H + √η_V); both collapse to T* = 1/2 for equal
///   efficiencies.
/// * dsr — linear in T between 1/√(4 η_H ν) at T = 0 and 1/√(4 η_V ν) at
///   T = 1; whichever port is more efficient hosts the minimum.
pub fn extrema(
    kind: EstimatorKind,
    regime: Regime,
    eta_h: f64,
    eta_v: f64,
    heralds: u64,
) -> Result<UncertaintyExtrema, UncertaintyError> {
    check_eta(eta_h, eta_v)?;
    if heralds == 0 {
        return Err(UncertaintyError::InvalidParameter { field: "heralds", value: 0.0 });
    }
    let root_nu = (heralds as f64).sqrt();
    let at = |t: f64| -> Result<ExtremumPoint, UncertaintyError> {
        Ok(ExtremumPoint {
            transmittance: t,
            uncertainty_rad: lep_uncertainty_for_transmittance(kind, regime, t, eta_h, eta_v, heralds)?,
        })
    };
    match (kind, regime) {
        (EstimatorKind::Single, regime) => {
            let min = at(0.0)?;
            let constant = regime == Regime::Quantum && (1.0 - eta_h) < 1e-12;
            let max = if constant {
                Some(ExtremumPoint { transmittance: 1.0, uncertainty_rad: 0.5 / root_nu })
            } else {
                None
            };
            Ok(UncertaintyExtrema { min, max })
        }
        (EstimatorKind::Diff, Regime::Quantum) => {
            let wh = eta_h * (1.0 - eta_h);
            let wv = eta_v * (1.0 - eta_v);
            let t_star = if wh < 1e-15 && wv < 1e-15 {
                0.5
            } else {
                wv / (wv + (wh * wv).sqrt())
            };
            Ok(UncertaintyExtrema { min: at(t_star)?, max: None })
        }
        (EstimatorKind::Diff, Regime::Classical) => {
            let t_star = eta_v.sqrt() / (eta_h.sqrt() + eta_v.sqrt());
            Ok(UncertaintyExtrema { min: at(t_star)?, max: None })
        }
        (EstimatorKind::Dsr, _) => {
            let lo = at(0.0)?;
            let hi = at(1.0)?;
            let (min, max) = if lo.uncertainty_rad <= hi.uncertainty_rad { (lo, hi) } else { (hi, lo) };
            Ok(UncertaintyExtrema { min, max: Some(max) })
        }
    }
}

/// First-order effect of a projection-axis pointing error on one estimate.
/// All three deltas are scaled to the supplied leak fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeBias {
    /// Shift of the mean statistic.
    pub delta_f: f64,
    /// Bias of the inverted angle, radians.
    pub delta_theta_rad: f64,
    /// Shift of the closed-form angle uncertainty, radians.
    pub delta_uncertainty_rad: f64,
}

/// First-order biases from a pointing error that leaks a fraction `r_pe` of
/// each port's power into the other, i.e. T → T + r_pe(1 − 2T).
///
/// The angle bias r_pe(2T − 1)/sin 2θ is independent of the statistic and
/// of the efficiencies: every estimator inverts the same leaked
/// transmittance. It vanishes at 45° and grows without bound toward the
/// projection axes, where it is reported as an error.
pub fn pe_bias(
    kind: EstimatorKind,
    regime: Regime,
    theta_out: PolarizationAngle,
    eta_h: f64,
    eta_v: f64,
    r_pe: f64,
    heralds: u64,
) -> Result<PeBias, UncertaintyError> {
    check_eta(eta_h, eta_v)?;
    if !(0.0..0.5).contains(&r_pe) {
        return Err(UncertaintyError::InvalidParameter { field: "r_pe", value: r_pe });
    }
    let t = theta_out.transmittance();
    let r = theta_out.reflectance();
    let sin2 = (2.0 * theta_out.radians()).sin();
    if sin2.abs() < 1e-12 {
        return Err(UncertaintyError::SingularPoint { transmittance: t });
    }
    let delta_t = 1.0 - 2.0 * t;

    let df_dr = match kind {
        EstimatorKind::Single => eta_h * delta_t,
        EstimatorKind::Diff => (eta_h + eta_v) * delta_t,
        EstimatorKind::Dsr => {
            let s = eta_h * t + eta_v * r;
            2.0 * eta_h * eta_v * delta_t / (s * s)
        }
    };

    let dtheta_dr = -delta_t / sin2;

    // Slope of the closed form in T, central difference with the step kept
    // inside the open interval.
    let h = 1e-6_f64.min(t / 2.0).min((1.0 - t) / 2.0);
    let hi = lep_uncertainty_for_transmittance(kind, regime, t + h, eta_h, eta_v, heralds)?;
    let lo = lep_uncertainty_for_transmittance(kind, regime, t - h, eta_h, eta_v, heralds)?;
    let dlep_dt = (hi - lo) / (2.0 * h);

    Ok(PeBias {
        delta_f: r_pe * df_dr,
        delta_theta_rad: r_pe * dtheta_dr,
        delta_uncertainty_rad: r_pe * delta_t * dlep_dt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BudgetDistribution {
    Normal,
    Rectangular,
}

impl std::fmt::Display for BudgetDistribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BudgetDistribution::Normal => write!(f, "normal"),
            BudgetDistribution::Rectangular => write!(f, "rectangular"),
        }
    }
}

impl BudgetDistribution {
    /// Divisor turning a quoted bound into a standard uncertainty.
    pub fn default_divisor(self) -> f64 {
        match self {
            BudgetDistribution::Normal => 1.0,
            BudgetDistribution::Rectangular => 3f64.sqrt(),
        }
    }
}

/// One row of an uncertainty budget: a quoted influence quantity and the
/// sensitivity that maps it onto the measurand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetEntry {
    pub source: String,
    /// Quoted value in `unit`.
    pub value: f64,
    pub unit: String,
    /// Divides the value before the sensitivity is applied.
    pub divisor: f64,
    pub distribution: BudgetDistribution,
    /// Measurand change per unit of `unit`; None marks a row that cannot be
    /// combined yet.
    pub sensitivity: Option<f64>,
}

impl BudgetEntry {
    pub fn new(
        source: &str,
        value: f64,
        unit: &str,
        distribution: BudgetDistribution,
        sensitivity: f64,
    ) -> Self {
        Self {
            source: source.to_string(),
            value,
            unit: unit.to_string(),
            divisor: distribution.default_divisor(),
            distribution,
            sensitivity: Some(sensitivity),
        }
    }

    /// Standard uncertainty contribution in measurand units.
    pub fn std_uncertainty(&self) -> Result<f64, UncertaintyError> {
        let sens = self.sensitivity.ok_or_else(|| UncertaintyError::MissingSensitivity {
            entry: self.source.clone(),
        })?;
        Ok((self.value / self.divisor * sens).abs())
    }
}

/// Root-sum-square combination of budget rows.
pub fn combine_budget(entries: &[BudgetEntry]) -> Result<f64, UncertaintyError> {
    let mut sum = 0.0;
    for e in entries {
        let u = e.std_uncertainty()?;
        sum += u * u;
    }
    Ok(sum.sqrt())
}

/// Reference budget for the 0.5 g/ml sucrose campaign at 809.6 nm in
/// concentration units (g/ml). The first three rows are the measured angle
/// spreads of the three statistics; exactly one of them enters a combined
/// total. The remaining rows are systematic: bath temperature, probe
/// wavelength (rectangular bound), and the launch-angle calibration, whose
/// sensitivity is doubled by the half-wave retarder between the calibration
/// mount and the sample.
pub fn sucrose_reference_budget() -> Vec<BudgetEntry> {
    use BudgetDistribution::{Normal, Rectangular};
    vec![
        BudgetEntry::new("counting statistics, single port", 0.2708, "deg", Normal, 0.293),
        BudgetEntry::new("counting statistics, port difference", 0.1841, "deg", Normal, 0.293),
        BudgetEntry::new("counting statistics, normalized difference", 0.1763, "deg", Normal, 0.293),
        BudgetEntry::new("sample temperature", 0.41, "K", Normal, 0.05),
        BudgetEntry::new("probe wavelength", 0.0005, "um", Rectangular, 17.07),
        BudgetEntry::new("launch angle calibration", 0.03, "deg", Normal, 0.586),
    ]
}
