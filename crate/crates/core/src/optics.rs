//! Optical activity: dispersion of the specific rotation, the rotation angle
//! it produces over a cuvette, and the polarizer projection coefficients.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Signal wavelength of the heralded source, nm.
pub const DEFAULT_WAVELENGTH_NM: f64 = 809.6;

/// Margin around a resonance inside which the dispersion sum is rejected, nm².
pub const DEFAULT_POLE_MARGIN_NM2: f64 = 1e-6;

/// One term of the dispersion sum: amplitude over (λ² − λ_j²).
///
/// Amplitude unit: deg·nm²·dm⁻¹·(g/ml)⁻¹, so the summed specific rotation
/// comes out in deg·dm⁻¹·(g/ml)⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrudeTransition {
    pub amplitude: f64,
    pub resonance_nm: f64,
}

impl DrudeTransition {
    pub const fn new(amplitude: f64, resonance_nm: f64) -> Self {
        Self { amplitude, resonance_nm }
    }
}

/// Sucrose in water is described well by a single effective transition in the
/// far UV over the visible/NIR range.
pub const SUCROSE_TRANSITION: DrudeTransition = DrudeTransition::new(2.1648e7, 146.0);

/// A dissolved chiral sample in a cuvette.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiralSample {
    /// Concentration, g/ml.
    pub concentration_g_per_ml: f64,
    /// Cuvette path length, dm.
    pub path_length_dm: f64,
    /// Dispersion terms of the solute.
    pub transitions: Vec<DrudeTransition>,
}

impl ChiralSample {
    /// Sucrose solution in the standard 0.1 dm cuvette.
    pub fn sucrose(concentration_g_per_ml: f64) -> Self {
        Self {
            concentration_g_per_ml,
            path_length_dm: 0.1,
            transitions: vec![SUCROSE_TRANSITION],
        }
    }

    pub fn validate(&self) -> Result<(), OpticsError> {
        if !self.concentration_g_per_ml.is_finite() {
            return Err(OpticsError::InvalidSample {
                field: "concentration_g_per_ml",
                value: self.concentration_g_per_ml,
            });
        }
        if !(self.path_length_dm.is_finite() && self.path_length_dm > 0.0) {
            return Err(OpticsError::InvalidSample {
                field: "path_length_dm",
                value: self.path_length_dm,
            });
        }
        for t in &self.transitions {
            if !t.amplitude.is_finite() {
                return Err(OpticsError::InvalidSample { field: "transitions.amplitude", value: t.amplitude });
            }
            if !(t.resonance_nm.is_finite() && t.resonance_nm > 0.0) {
                return Err(OpticsError::InvalidSample { field: "transitions.resonance_nm", value: t.resonance_nm });
            }
        }
        Ok(())
    }
}

/// A polarization-plane angle. Stored in radians; degree accessors are the
/// I/O boundary.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct PolarizationAngle {
    radians: f64,
}

impl PolarizationAngle {
    pub fn from_radians(radians: f64) -> Self {
        Self { radians }
    }

    pub fn from_degrees(degrees: f64) -> Self {
        Self { radians: degrees.to_radians() }
    }

    pub fn radians(self) -> f64 {
        self.radians
    }

    pub fn degrees(self) -> f64 {
        self.radians.to_degrees()
    }

    /// The angle after the polarization plane is rotated by `alpha_deg`.
    pub fn rotated_by_deg(self, alpha_deg: f64) -> Self {
        Self { radians: self.radians + alpha_deg.to_radians() }
    }

    /// Projection onto the transmitted port, cos²θ.
    pub fn transmittance(self) -> f64 {
        let c = self.radians.cos();
        c * c
    }

    /// Projection onto the reflected port, sin²θ.
    pub fn reflectance(self) -> f64 {
        let s = self.radians.sin();
        s * s
    }
}

/// Serializes a [`PolarizationAngle`] field as a plain degree number, for
/// config and report schemas whose angle fields are degree-valued.
pub mod serde_degrees {
    use super::PolarizationAngle;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(angle: &PolarizationAngle, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_f64(angle.degrees())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<PolarizationAngle, D::Error> {
        f64::deserialize(de).map(PolarizationAngle::from_degrees)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum OpticsError {
    #[error("wavelength {wavelength_nm} nm is within the rejection margin of the {resonance_nm} nm resonance")]
    PoleProximity { wavelength_nm: f64, resonance_nm: f64 },
    #[error("wavelength must be positive and finite, got {0}")]
    InvalidWavelength(f64),
    #[error("sample field {field} is invalid: {value}")]
    InvalidSample { field: &'static str, value: f64 },
    #[error("specific rotation × path length is zero; the rotation angle carries no concentration information")]
    ZeroSensitivity,
}

/// Specific rotation [α](λ) = Σ_j A_j / (λ² − λ_j²), deg·dm⁻¹·(g/ml)⁻¹.
///
/// Fails inside `DEFAULT_POLE_MARGIN_NM2` of any resonance; use
/// [`specific_rotation_with_margin`] to tighten or loosen that.
pub fn specific_rotation(wavelength_nm: f64, transitions: &[DrudeTransition]) -> Result<f64, OpticsError> {
    specific_rotation_with_margin(wavelength_nm, transitions, DEFAULT_POLE_MARGIN_NM2)
}

pub fn specific_rotation_with_margin(
    wavelength_nm: f64,
    transitions: &[DrudeTransition],
    pole_margin_nm2: f64,
) -> Result<f64, OpticsError> {
    if !(wavelength_nm.is_finite() && wavelength_nm > 0.0) {
        return Err(OpticsError::InvalidWavelength(wavelength_nm));
    }
    let lambda2 = wavelength_nm * wavelength_nm;
    let mut sum = 0.0;
    for t in transitions {
        let denom = lambda2 - t.resonance_nm * t.resonance_nm;
        if denom.abs() <= pole_margin_nm2 {
            return Err(OpticsError::PoleProximity {
                wavelength_nm,
                resonance_nm: t.resonance_nm,
            });
        }
        sum += t.amplitude / denom;
    }
    Ok(sum)
}

/// Rotation angle α = [α](λ) · l · C in degrees for the given sample.
pub fn rotation_angle_deg(sample: &ChiralSample, wavelength_nm: f64) -> Result<f64, OpticsError> {
    sample.validate()?;
    let sr = specific_rotation(wavelength_nm, &sample.transitions)?;
    Ok(sr * sample.path_length_dm * sample.concentration_g_per_ml)
}

/// Port projection coefficients (T, R) = (cos²θ, sin²θ). Sums to one by
/// construction.
pub fn projection_coefficients(theta: PolarizationAngle) -> (f64, f64) {
    (theta.transmittance(), theta.reflectance())
}

/// Inverts α = [α] · l · C for the concentration. The estimate is reported
/// as-is; negative values are meaningful noise around zero and are not
/// clamped.
pub fn concentration_from_angle(
    alpha_deg: f64,
    specific_rotation: f64,
    path_length_dm: f64,
) -> Result<f64, OpticsError> {
    let sens = specific_rotation * path_length_dm;
    if sens == 0.0 || !sens.is_finite() {
        return Err(OpticsError::ZeroSensitivity);
    }
    Ok(alpha_deg / sens)
}
