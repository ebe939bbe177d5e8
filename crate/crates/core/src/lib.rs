//! Polarimetry of chiral solutions probed with heralded single photons or a
//! coherent-state benchmark.
//!
//! A linearly polarized probe passes through an optically active sample that
//! rotates its polarization plane by an angle set by the sample's specific
//! rotation, path length, and concentration. A polarizing beam splitter then
//! projects the rotated state onto transmitted (H) and reflected (V) ports
//! with imperfect detection efficiencies. Everything downstream is counting
//! statistics: which statistic is formed from the port counts, how it is
//! inverted back to an angle (and from there to a concentration), and how
//! precisely that can possibly be done.
//!
//! # Modules
//!
//! | module | what it covers |
//! |--------|----------------|
//! | [`optics`] | dispersion of the specific rotation, rotation angle, projection coefficients |
//! | [`photostats`] | joint count distributions and seeded sampling for both probe regimes |
//! | [`estimators`] | the three count statistics, their inversion to angle/concentration, efficiency calibration, exclusion rule |
//! | [`uncertainty`] | closed-form angle uncertainties, their extrema, quantum/classical ratio, extinction-ratio bias, uncertainty budget |
//! | [`fisher`] | Fisher information (closed-form and numeric), Cramér–Rao bounds, saturation checks |
//! | [`montecarlo`] | seeded campaigns over angle grids, bias studies, closed-form validation, scaling studies |
//! | [`rng`] | counter-based substreams for reproducible parallel sampling |
//! | [`io`] | count/budget/report files with embedded run metadata |
//!
//! # Conventions
//!
//! Angles are radians internally ([`optics::PolarizationAngle`] carries the
//! unit); file formats and reports use degrees. Efficiencies are detection
//! probabilities in (0, 1]. Standard deviations over campaign trials are
//! population statistics (divide by the trial count, not count − 1).
//!
//! # Quick start
//!
//! ```
//! use chiroptic::optics::{ChiralSample, PolarizationAngle, rotation_angle_deg};
//! use chiroptic::photostats::{ProbeConfig, Regime, sample_campaign};
//! use chiroptic::estimators::{Calibration, EstimatorKind, EstimationSetup, estimate_concentration};
//!
//! let sample = ChiralSample::sucrose(0.5);
//! let alpha = rotation_angle_deg(&sample, 809.6).unwrap();
//! let theta_in = PolarizationAngle::from_degrees(40.0);
//! let theta_out = PolarizationAngle::from_degrees(40.0 + alpha);
//!
//! let probe = ProbeConfig::new(Regime::Quantum, theta_in, 0.25, 0.25)
//!     .with_counts(100_000, 500);
//! let records = sample_campaign(&probe, theta_out, 7).unwrap();
//!
//! let calib = Calibration::configured(0.25, 0.25).unwrap();
//! let setup = EstimationSetup::new(theta_in, &sample, 809.6).unwrap();
//! let est = estimate_concentration(&records, EstimatorKind::Dsr, &calib, &setup).unwrap();
//! assert!((est.concentration - 0.5).abs() < 0.02);
//! ```

pub mod estimators;
pub mod fisher;
pub mod io;
pub mod montecarlo;
pub mod optics;
pub mod photostats;
pub mod rng;
pub mod uncertainty;

pub use estimators::{Calibration, Estimate, EstimatorKind};
pub use optics::{ChiralSample, DrudeTransition, PolarizationAngle};
pub use photostats::{CountRecord, ProbeConfig, Regime};
pub use uncertainty::UncertaintyContext;
