//! Joint photon-count statistics at the two polarizer ports, and seeded
//! sampling of them.
//!
//! Two probe regimes share one geometry. The heralded (quantum) probe sends
//! exactly one photon per herald, so a trial of ν heralds produces
//! multinomially correlated port counts. The coherent-state benchmark sends
//! pulses of mean photon number ⟨N⟩, so port counts are independent Poisson
//! variables. Port leakage of the polarizing splitter enters both regimes as
//! an exchange channel on the projection coefficient.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optics::{serde_degrees, PolarizationAngle};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Heralded single photons; one photon per herald.
    Quantum,
    /// Coherent-state benchmark with Poissonian photon number.
    Classical,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regime::Quantum => write!(f, "quantum"),
            Regime::Classical => write!(f, "classical"),
        }
    }
}

/// Source, detection, and repetition settings for one measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub regime: Regime,
    /// Polarization angle prepared at the input, before the sample.
    #[serde(rename = "theta_in_deg", with = "serde_degrees")]
    pub theta_in: PolarizationAngle,
    /// Detection efficiency of the transmitted (H) port.
    pub eta_h: f64,
    /// Detection efficiency of the reflected (V) port.
    pub eta_v: f64,
    /// Polarization extinction leakage of the splitter (0 = ideal).
    pub r_pe: f64,
    /// Heralds (quantum) or pulse slots (classical) per trial, ν.
    pub heralds_per_trial: u64,
    /// Repetitions of the trial, μ.
    pub trials: u64,
    /// Mean photon number per slot for the classical benchmark. Must be
    /// exactly 1 in the quantum regime (one photon per herald).
    pub mean_photons: f64,
}

impl ProbeConfig {
    pub fn new(regime: Regime, theta_in: PolarizationAngle, eta_h: f64, eta_v: f64) -> Self {
        Self {
            regime,
            theta_in,
            eta_h,
            eta_v,
            r_pe: 0.0,
            heralds_per_trial: 100_000,
            trials: 500,
            mean_photons: 1.0,
        }
    }

    pub fn with_counts(mut self, heralds_per_trial: u64, trials: u64) -> Self {
        self.heralds_per_trial = heralds_per_trial;
        self.trials = trials;
        self
    }

    pub fn with_r_pe(mut self, r_pe: f64) -> Self {
        self.r_pe = r_pe;
        self
    }

    pub fn with_mean_photons(mut self, mean_photons: f64) -> Self {
        self.mean_photons = mean_photons;
        self
    }

    pub fn validate(&self) -> Result<(), PhotostatsError> {
        let check = |field: &'static str, value: f64, lo: f64, hi: f64, lo_open: bool| {
            let in_range = if lo_open { value > lo && value <= hi } else { (lo..=hi).contains(&value) };
            if value.is_finite() && in_range {
                Ok(())
            } else {
                Err(PhotostatsError::InvalidConfig { field, value })
            }
        };
        check("eta_h", self.eta_h, 0.0, 1.0, true)?;
        check("eta_v", self.eta_v, 0.0, 1.0, true)?;
        check("r_pe", self.r_pe, 0.0, 0.5, false)?;
        if !self.theta_in.radians().is_finite() {
            return Err(PhotostatsError::InvalidConfig { field: "theta_in_deg", value: self.theta_in.degrees() });
        }
        if self.heralds_per_trial == 0 {
            return Err(PhotostatsError::InvalidConfig { field: "heralds_per_trial", value: 0.0 });
        }
        if self.trials == 0 {
            return Err(PhotostatsError::InvalidConfig { field: "trials", value: 0.0 });
        }
        match self.regime {
            Regime::Quantum => {
                if self.mean_photons != 1.0 {
                    return Err(PhotostatsError::InvalidConfig { field: "mean_photons", value: self.mean_photons });
                }
            }
            Regime::Classical => {
                if !(self.mean_photons.is_finite() && self.mean_photons > 0.0) {
                    return Err(PhotostatsError::InvalidConfig { field: "mean_photons", value: self.mean_photons });
                }
            }
        }
        Ok(())
    }
}

/// Port counts of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRecord {
    pub n_h: u64,
    pub n_v: u64,
    /// ν of the trial that produced the counts.
    pub heralds: u64,
}

impl CountRecord {
    pub fn total(&self) -> u64 {
        self.n_h + self.n_v
    }

    /// Regime-specific sanity: heralded counts cannot exceed the herald
    /// number; Poissonian benchmark counts are unbounded.
    pub fn validate_for(&self, regime: Regime) -> Result<(), PhotostatsError> {
        if self.heralds == 0 {
            return Err(PhotostatsError::InvalidConfig { field: "heralds", value: 0.0 });
        }
        if regime == Regime::Quantum && self.n_h + self.n_v > self.heralds {
            return Err(PhotostatsError::CountsExceedHeralds {
                n_h: self.n_h,
                n_v: self.n_v,
                heralds: self.heralds,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PhotostatsError {
    #[error("probe config field {field} out of range: {value}")]
    InvalidConfig { field: &'static str, value: f64 },
    #[error("probability {name} out of range: {value}")]
    InvalidProbability { name: &'static str, value: f64 },
    #[error("counts n_h={n_h}, n_v={n_v} exceed the {heralds} heralds of the trial")]
    CountsExceedHeralds { n_h: u64, n_v: u64, heralds: u64 },
}

/// Projection coefficient seen through a leaky splitter: each photon swaps
/// port with probability `r_pe`, so T ↦ T + r_pe(1 − 2T). Affine in T and
/// fixed at T = 1/2, where the two ports are indistinguishable anyway.
pub fn effective_transmittance(t: f64, r_pe: f64) -> f64 {
    t + r_pe * (1.0 - 2.0 * t)
}

fn check_prob(name: &'static str, value: f64) -> Result<(), PhotostatsError> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(PhotostatsError::InvalidProbability { name, value })
    }
}

/// Joint distribution of heralded counts after `draws` photons: multinomial
/// over detected-H / detected-V / undetected with cell probabilities
/// (η_H·T, η_V·R, remainder).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantumJoint {
    pub draws: u64,
    pub p_h: f64,
    pub p_v: f64,
}

impl QuantumJoint {
    pub fn mean(&self) -> (f64, f64) {
        let n = self.draws as f64;
        (n * self.p_h, n * self.p_v)
    }

    /// 2×2 covariance of (N_H, N_V). The off-diagonal is −n·p_H·p_V:
    /// detecting a photon in one port removes it from the other.
    pub fn covariance(&self) -> [[f64; 2]; 2] {
        let n = self.draws as f64;
        let var_h = n * self.p_h * (1.0 - self.p_h);
        let var_v = n * self.p_v * (1.0 - self.p_v);
        let cov = -n * self.p_h * self.p_v;
        [[var_h, cov], [cov, var_v]]
    }

    pub fn pmf(&self, n_h: u64, n_v: u64) -> f64 {
        if n_h + n_v > self.draws {
            return 0.0;
        }
        let rest = self.draws - n_h - n_v;
        let p_rest = (1.0 - self.p_h - self.p_v).max(0.0);
        // Degenerate cells contribute only when their count is zero.
        for (count, p) in [(n_h, self.p_h), (n_v, self.p_v), (rest, p_rest)] {
            if p == 0.0 && count > 0 {
                return 0.0;
            }
        }
        let mut log_p = ln_factorial(self.draws) - ln_factorial(n_h) - ln_factorial(n_v) - ln_factorial(rest);
        if n_h > 0 {
            log_p += n_h as f64 * self.p_h.ln();
        }
        if n_v > 0 {
            log_p += n_v as f64 * self.p_v.ln();
        }
        if rest > 0 {
            log_p += rest as f64 * p_rest.ln();
        }
        log_p.exp()
    }

    /// All (n_h, n_v) pairs with n_h + n_v ≤ draws, row-major in n_h.
    pub fn support(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        let n = self.draws;
        (0..=n).flat_map(move |n_h| (0..=(n - n_h)).map(move |n_v| (n_h, n_v)))
    }
}

/// Joint distribution of benchmark counts: independent Poisson variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalJoint {
    pub mean_h: f64,
    pub mean_v: f64,
}

impl ClassicalJoint {
    pub fn mean(&self) -> (f64, f64) {
        (self.mean_h, self.mean_v)
    }

    pub fn covariance(&self) -> [[f64; 2]; 2] {
        [[self.mean_h, 0.0], [0.0, self.mean_v]]
    }

    pub fn pmf(&self, n_h: u64, n_v: u64) -> f64 {
        (poisson_log_pmf(n_h, self.mean_h) + poisson_log_pmf(n_v, self.mean_v)).exp()
    }

    /// Count bound per port keeping the neglected tail below `tail`.
    pub fn truncation_bound(&self, tail: f64) -> u64 {
        let m = self.mean_h.max(self.mean_v);
        let mut k = (m + 10.0 * m.sqrt() + 20.0).ceil() as u64;
        // Extend until the larger port's tail mass is provably below `tail`
        // (Chernoff-style check via the log pmf at the boundary).
        while poisson_log_pmf(k, m).exp() * (k as f64 + 1.0) / ((k as f64 + 1.0) - m).max(1.0) > tail {
            k += k / 2 + 16;
        }
        k
    }
}

pub(crate) fn poisson_log_pmf(k: u64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * mean.ln() - mean - ln_factorial(k)
}

/// ln(n!) — tabulated for small n, Stirling series beyond.
pub(crate) fn ln_factorial(n: u64) -> f64 {
    use std::sync::OnceLock;
    const TABLE_LEN: usize = 1024;
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = vec![0.0; TABLE_LEN];
        for i in 2..TABLE_LEN {
            t[i] = t[i - 1] + (i as f64).ln();
        }
        t
    });
    if (n as usize) < TABLE_LEN {
        return table[n as usize];
    }
    let x = n as f64;
    let x2 = x * x;
    x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln() + 1.0 / (12.0 * x)
        - 1.0 / (360.0 * x * x2)
        + 1.0 / (1260.0 * x2 * x2 * x)
}

/// Heralded joint count distribution for `photons` photons sent at effective
/// projection (T, R).
pub fn outcome_probs_quantum(
    photons: u64,
    t: f64,
    r: f64,
    eta_h: f64,
    eta_v: f64,
) -> Result<QuantumJoint, PhotostatsError> {
    check_prob("t", t)?;
    check_prob("r", r)?;
    if (t + r - 1.0).abs() > 1e-9 {
        return Err(PhotostatsError::InvalidProbability { name: "t + r", value: t + r });
    }
    check_prob("eta_h", eta_h)?;
    check_prob("eta_v", eta_v)?;
    Ok(QuantumJoint { draws: photons, p_h: eta_h * t, p_v: eta_v * r })
}

/// Benchmark joint count distribution for mean photon number `mean_photons`
/// per slot at effective projection (T, R).
pub fn outcome_probs_classical(
    mean_photons: f64,
    t: f64,
    r: f64,
    eta_h: f64,
    eta_v: f64,
) -> Result<ClassicalJoint, PhotostatsError> {
    check_prob("t", t)?;
    check_prob("r", r)?;
    if (t + r - 1.0).abs() > 1e-9 {
        return Err(PhotostatsError::InvalidProbability { name: "t + r", value: t + r });
    }
    check_prob("eta_h", eta_h)?;
    check_prob("eta_v", eta_v)?;
    if !(mean_photons.is_finite() && mean_photons >= 0.0) {
        return Err(PhotostatsError::InvalidConfig { field: "mean_photons", value: mean_photons });
    }
    Ok(ClassicalJoint { mean_h: mean_photons * eta_h * t, mean_v: mean_photons * eta_v * r })
}

fn sample_binomial<R: Rng>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("p checked in range").sample(rng)
}

fn sample_poisson<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("mean checked positive").sample(rng) as u64
}

/// One trial of ν slots at output angle `theta_out`, drawn from `rng`.
///
/// Quantum: (N_H, N_V) are top-down multinomial draws over the ν heralds.
/// Classical: independent Poisson draws with means ν·⟨N⟩·η·coefficient.
pub fn sample_trial<R: Rng>(
    config: &ProbeConfig,
    theta_out: PolarizationAngle,
    rng: &mut R,
) -> Result<CountRecord, PhotostatsError> {
    config.validate()?;
    let t_eff = effective_transmittance(theta_out.transmittance(), config.r_pe);
    let r_eff = 1.0 - t_eff;
    let nu = config.heralds_per_trial;
    let (n_h, n_v) = match config.regime {
        Regime::Quantum => {
            let joint = outcome_probs_quantum(nu, t_eff, r_eff, config.eta_h, config.eta_v)?;
            let n_h = sample_binomial(rng, nu, joint.p_h);
            // V counts among the remaining heralds, conditioned on not-H.
            let p_v_given = (joint.p_v / (1.0 - joint.p_h)).clamp(0.0, 1.0);
            let n_v = sample_binomial(rng, nu - n_h, p_v_given);
            (n_h, n_v)
        }
        Regime::Classical => {
            let joint = outcome_probs_classical(config.mean_photons, t_eff, r_eff, config.eta_h, config.eta_v)?;
            let scale = nu as f64;
            (
                sample_poisson(rng, scale * joint.mean_h),
                sample_poisson(rng, scale * joint.mean_v),
            )
        }
    };
    Ok(CountRecord { n_h, n_v, heralds: nu })
}

/// μ trials at `theta_out`, each drawn from its own substream of
/// `master_seed`. Trial i is reproducible in isolation and the set is
/// independent of evaluation order.
pub fn sample_campaign(
    config: &ProbeConfig,
    theta_out: PolarizationAngle,
    master_seed: u64,
) -> Result<Vec<CountRecord>, PhotostatsError> {
    config.validate()?;
    (0..config.trials)
        .map(|i| {
            let mut rng = substream(master_seed, &[i]);
            sample_trial(config, theta_out, &mut rng)
        })
        .collect()
}
