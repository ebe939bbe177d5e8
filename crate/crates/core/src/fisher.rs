//! Fisher information of the detection schemes and how tightly the
//! estimators ride their Cramér-Rao bounds.
//!
//! Information is quoted per trial slot (one herald, or one benchmark slot
//! of mean photon number N) and is additive over the ν slots of a trial, so
//! the bound on any unbiased angle estimate is 1/√(ν F₁). Closed forms are
//! given in the angle parameterization, where the projection slope
//! (dT/dθ)² = 4TR keeps every scheme finite across the whole angle range,
//! and in the transmittance parameterization, which carries genuine 1/T and
//! 1/R poles at the projection extremes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::EstimatorKind;
use crate::optics::PolarizationAngle;
use crate::photostats::Regime;
use crate::uncertainty::{lep_uncertainty_for_transmittance, UncertaintyError};

/// Which ports the scheme reads out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    TwoMode,
    SingleModeH,
    SingleModeV,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::TwoMode => write!(f, "two_mode"),
            Scheme::SingleModeH => write!(f, "single_mode_h"),
            Scheme::SingleModeV => write!(f, "single_mode_v"),
        }
    }
}

/// The readout a statistic actually uses.
pub fn scheme_for(kind: EstimatorKind) -> Scheme {
    match kind {
        EstimatorKind::Single => Scheme::SingleModeH,
        EstimatorKind::Diff | EstimatorKind::Dsr => Scheme::TwoMode,
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FisherError {
    #[error("parameter {field} out of range: {value}")]
    InvalidParameter { field: &'static str, value: f64 },
    #[error("information diverges at transmittance {transmittance}")]
    SingularPoint { transmittance: f64 },
    #[error("outcome distribution invalid: {reason}")]
    BadDistribution { reason: &'static str },
    #[error("information is not positive; no bound exists")]
    NonPositiveInformation,
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
}

fn check_params(eta_h: f64, eta_v: f64, photons: f64) -> Result<(), FisherError> {
    for (field, v) in [("eta_h", eta_h), ("eta_v", eta_v)] {
        if !(v.is_finite() && v > 0.0 && v <= 1.0) {
            return Err(FisherError::InvalidParameter { field, value: v });
        }
    }
    if !(photons.is_finite() && photons > 0.0) {
        return Err(FisherError::InvalidParameter { field: "photons", value: photons });
    }
    Ok(())
}

/// Per-slot Fisher information about the output angle, closed form.
///
/// With T = cos²θ, R = 1 − T, S = η_H T + η_V R and N the photons per slot:
///
/// * two-mode heralded: 4N(η_H R + η_V T) + 4N T R (η_H − η_V)² / (1 − S)
/// * two-mode benchmark: 4N(η_H R + η_V T)
/// * single-mode H: 4N η_H R / (1 − η_H T) heralded, 4N η_H R benchmark
/// * single-mode V: 4N η_V T / (1 − η_V R) heralded, 4N η_V T benchmark
///
/// Every form is finite on the whole angle range. The two-mode heralded
/// expression is 0/0 at a projection extreme when the transmitted port has
/// unit efficiency; its limit there is 4N, which is returned.
pub fn fi_closed(
    scheme: Scheme,
    regime: Regime,
    theta_out: PolarizationAngle,
    eta_h: f64,
    eta_v: f64,
    photons: f64,
) -> Result<f64, FisherError> {
    check_params(eta_h, eta_v, photons)?;
    let t = theta_out.transmittance();
    let r = theta_out.reflectance();
    let fi = match (scheme, regime) {
        (Scheme::TwoMode, Regime::Quantum) => {
            let base = 4.0 * (eta_h * r + eta_v * t);
            let d_eta = eta_h - eta_v;
            let denom = 1.0 - eta_h * t - eta_v * r;
            if denom < 1e-14 {
                if d_eta.abs() < 1e-12 {
                    base
                } else {
                    // Corner limit: a unit-efficiency port at its own
                    // projection extreme.
                    return Ok(4.0 * photons);
                }
            } else {
                base + 4.0 * t * r * d_eta * d_eta / denom
            }
        }
        (Scheme::TwoMode, Regime::Classical) => 4.0 * (eta_h * r + eta_v * t),
        (Scheme::SingleModeH, Regime::Quantum) => {
            let denom = 1.0 - eta_h * t;
            if denom < 1e-14 {
                4.0 // η_H = 1, T = 1: the reflected trickle carries 4N/N.
            } else {
                4.0 * eta_h * r / denom
            }
        }
        (Scheme::SingleModeH, Regime::Classical) => 4.0 * eta_h * r,
        (Scheme::SingleModeV, Regime::Quantum) => {
            let denom = 1.0 - eta_v * r;
            if denom < 1e-14 {
                4.0
            } else {
                4.0 * eta_v * t / denom
            }
        }
        (Scheme::SingleModeV, Regime::Classical) => 4.0 * eta_v * t,
    };
    Ok(fi * photons)
}

/// Per-slot Fisher information about the transmittance itself. Unlike the
/// angle parameterization this diverges at the projection extremes (1/T and
/// 1/R poles), which are reported as errors.
pub fn fi_transmittance(
    scheme: Scheme,
    regime: Regime,
    t: f64,
    eta_h: f64,
    eta_v: f64,
    photons: f64,
) -> Result<f64, FisherError> {
    check_params(eta_h, eta_v, photons)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(FisherError::InvalidParameter { field: "transmittance", value: t });
    }
    let r = 1.0 - t;
    let singular = FisherError::SingularPoint { transmittance: t };
    const POLE: f64 = 1e-300;
    let fi = match (scheme, regime) {
        (Scheme::TwoMode, Regime::Quantum) => {
            if t < POLE || r < POLE {
                return Err(singular);
            }
            let d_eta = eta_h - eta_v;
            let denom = 1.0 - eta_h * t - eta_v * r;
            let tail = if d_eta.abs() < 1e-12 {
                0.0
            } else if denom < POLE {
                return Err(singular);
            } else {
                d_eta * d_eta / denom
            };
            eta_h / t + eta_v / r + tail
        }
        (Scheme::TwoMode, Regime::Classical) => {
            if t < POLE || r < POLE {
                return Err(singular);
            }
            eta_h / t + eta_v / r
        }
        (Scheme::SingleModeH, Regime::Quantum) => {
            let denom = t * (1.0 - eta_h * t);
            if denom < POLE {
                return Err(singular);
            }
            eta_h / denom
        }
        (Scheme::SingleModeH, Regime::Classical) => {
            if t < POLE {
                return Err(singular);
            }
            eta_h / t
        }
        (Scheme::SingleModeV, Regime::Quantum) => {
            let denom = r * (1.0 - eta_v * r);
            if denom < POLE {
                return Err(singular);
            }
            eta_v / denom
        }
        (Scheme::SingleModeV, Regime::Classical) => {
            if r < POLE {
                return Err(singular);
            }
            eta_v / r
        }
    };
    Ok(fi * photons)
}

/// Per-slot outcome probabilities at one angle.
///
/// Heralded slots carry exactly one photon and yield two or three exclusive
/// outcomes (port clicks and a miss). Benchmark slots yield Poisson counts;
/// the vector enumerates a count grid truncated where the tail is below
/// 1e-12, with a bound that depends only on the parameters, never on the
/// angle, so distributions at neighboring angles stay index-aligned.
pub fn outcome_distribution(
    scheme: Scheme,
    regime: Regime,
    theta_out: PolarizationAngle,
    eta_h: f64,
    eta_v: f64,
    photons: f64,
) -> Result<Vec<f64>, FisherError> {
    check_params(eta_h, eta_v, photons)?;
    let t = theta_out.transmittance();
    let r = theta_out.reflectance();
    match regime {
        Regime::Quantum => {
            if (photons - 1.0).abs() > 1e-12 {
                return Err(FisherError::InvalidParameter { field: "photons", value: photons });
            }
            let ph = eta_h * t;
            let pv = eta_v * r;
            Ok(match scheme {
                Scheme::TwoMode => vec![ph, pv, 1.0 - ph - pv],
                Scheme::SingleModeH => vec![ph, 1.0 - ph],
                Scheme::SingleModeV => vec![pv, 1.0 - pv],
            })
        }
        Regime::Classical => {
            let bound = (photons + 10.0 * photons.sqrt() + 30.0).ceil() as u64;
            let pmf = |mean: f64| -> Vec<f64> {
                (0..=bound).map(|n| crate::photostats::poisson_log_pmf(n, mean).exp()).collect()
            };
            let h = pmf(photons * eta_h * t);
            let v = pmf(photons * eta_v * r);
            Ok(match scheme {
                Scheme::TwoMode => {
                    let mut joint = Vec::with_capacity(h.len() * v.len());
                    for a in &h {
                        for b in &v {
                            joint.push(a * b);
                        }
                    }
                    joint
                }
                Scheme::SingleModeH => h,
                Scheme::SingleModeV => v,
            })
        }
    }
}

/// Numeric Fisher information of any outcome family p_k(θ):
/// F = Σ_k (dp_k/dθ)² / p_k with central differences of width `step_rad`.
/// Cells with probability below 1e-300 are treated as structurally empty
/// and skipped.
pub fn fi_numeric<F>(family: F, theta_out: PolarizationAngle, step_rad: f64) -> Result<f64, FisherError>
where
    F: Fn(PolarizationAngle) -> Result<Vec<f64>, FisherError>,
{
    if !(step_rad.is_finite() && step_rad > 0.0) {
        return Err(FisherError::InvalidParameter { field: "step_rad", value: step_rad });
    }
    let center = family(theta_out)?;
    let hi = family(PolarizationAngle::from_radians(theta_out.radians() + step_rad))?;
    let lo = family(PolarizationAngle::from_radians(theta_out.radians() - step_rad))?;
    if hi.len() != center.len() || lo.len() != center.len() {
        return Err(FisherError::BadDistribution { reason: "family changes outcome count across angles" });
    }
    let total: f64 = center.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(FisherError::BadDistribution { reason: "probabilities do not sum to 1" });
    }
    let mut fi = 0.0;
    for ((&p, &a), &b) in center.iter().zip(&hi).zip(&lo) {
        if p < 0.0 {
            return Err(FisherError::BadDistribution { reason: "negative probability" });
        }
        if p < 1e-300 {
            continue;
        }
        let dp = (a - b) / (2.0 * step_rad);
        fi += dp * dp / p;
    }
    Ok(fi)
}

/// Cramér-Rao bound on the angle, radians, from per-slot information over
/// ν slots.
pub fn cr_bound(fi_per_slot: f64, heralds: u64) -> Result<f64, FisherError> {
    if heralds == 0 {
        return Err(FisherError::InvalidParameter { field: "heralds", value: 0.0 });
    }
    if !(fi_per_slot.is_finite() && fi_per_slot > 0.0) {
        return Err(FisherError::NonPositiveInformation);
    }
    Ok(1.0 / (heralds as f64 * fi_per_slot).sqrt())
}

/// One angle of a saturation scan: the estimator's closed-form uncertainty
/// next to the bound of the scheme it reads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherRow {
    pub kind: EstimatorKind,
    pub scheme: Scheme,
    pub regime: Regime,
    pub theta_out_deg: f64,
    pub fi_per_slot: f64,
    pub cr_bound_rad: f64,
    pub lep_rad: f64,
    /// lep/bound − 1; zero means the estimator is efficient there.
    pub saturation_gap: f64,
}

/// Compares an estimator's closed-form uncertainty with the Cramér-Rao
/// bound of its readout across a grid of output angles (single photon per
/// heralded slot, unit mean per benchmark slot).
pub fn saturation_check(
    kind: EstimatorKind,
    regime: Regime,
    theta_grid: &[PolarizationAngle],
    eta_h: f64,
    eta_v: f64,
    heralds: u64,
) -> Result<Vec<FisherRow>, FisherError> {
    let scheme = scheme_for(kind);
    let mut rows = Vec::with_capacity(theta_grid.len());
    for &theta in theta_grid {
        let fi = fi_closed(scheme, regime, theta, eta_h, eta_v, 1.0)?;
        let bound = cr_bound(fi, heralds)?;
        let lep =
            lep_uncertainty_for_transmittance(kind, regime, theta.transmittance(), eta_h, eta_v, heralds)?;
        rows.push(FisherRow {
            kind,
            scheme,
            regime,
            theta_out_deg: theta.degrees(),
            fi_per_slot: fi,
            cr_bound_rad: bound,
            lep_rad: lep,
            saturation_gap: lep / bound - 1.0,
        });
    }
    Ok(rows)
}
