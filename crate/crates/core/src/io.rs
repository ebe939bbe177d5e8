//! File formats: counts and study results as CSV with a commented metadata
//! preamble, full results as JSON envelopes.
//!
//! Every writer emits the same preamble, lines of the form `# key = value`
//! carrying the tool version, a hash of the originating configuration, and
//! the master seed. Readers skip `#` lines, so the files stay plain CSV for
//! any other tool. Nothing written here depends on wall-clock time; a rerun
//! of the same configuration produces byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fisher::FisherRow;
use crate::montecarlo::{CampaignResult, CellCounts, PeBiasResult, ScalingResult, ValidationResult};
use crate::photostats::{CountRecord, Regime};
use crate::uncertainty::{BudgetDistribution, BudgetEntry};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: data row {row}: {message}")]
    Malformed { path: String, row: usize, message: String },
}

/// Provenance written into every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub tool_version: String,
    pub config_sha256: String,
    pub master_seed: u64,
}

impl RunMeta {
    pub fn new<T: Serialize>(tool_version: &str, config: &T, master_seed: u64) -> Result<Self, IoError> {
        Ok(Self {
            tool_version: tool_version.to_string(),
            config_sha256: config_hash(config)?,
            master_seed,
        })
    }
}

/// SHA-256 of the canonical JSON serialization of a configuration.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String, IoError> {
    let bytes = serde_json::to_vec(config)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    Ok(hex)
}

/// Opens a CSV writer whose file starts with the standard `# key = value`
/// provenance preamble. All tables in this format, including ones written
/// by downstream tools, should go through this so readers can rely on one
/// preamble shape.
pub fn csv_writer_with_preamble(path: &Path, meta: &RunMeta) -> Result<csv::Writer<BufWriter<File>>, IoError> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "# tool_version = {}", meta.tool_version)?;
    writeln!(file, "# config_sha256 = {}", meta.config_sha256)?;
    writeln!(file, "# master_seed = {}", meta.master_seed)?;
    Ok(csv::Writer::from_writer(file))
}

fn reader(path: &Path) -> Result<csv::Reader<File>, IoError> {
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?)
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

// ---------------------------------------------------------------- counts --

/// Writes per-trial counts, one row per trial:
/// `theta_in_deg,trial_index,n_h,n_v,nu`.
pub fn write_counts_csv(path: &Path, cells: &[CellCounts], meta: &RunMeta) -> Result<(), IoError> {
    let mut w = csv_writer_with_preamble(path, meta)?;
    w.write_record(["theta_in_deg", "trial_index", "n_h", "n_v", "nu"])?;
    for cell in cells {
        for (i, rec) in cell.records.iter().enumerate() {
            w.write_record([
                cell.theta_in_deg.to_string(),
                i.to_string(),
                rec.n_h.to_string(),
                rec.n_v.to_string(),
                rec.heralds.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct CountsCsvRow {
    theta_in_deg: f64,
    #[allow(dead_code)]
    trial_index: u64,
    n_h: u64,
    n_v: u64,
    nu: u64,
}

/// Reads a counts file back into cells. Rows are grouped into a new cell
/// whenever the input angle changes. Passing the heralded regime also
/// enforces per-row count conservation, with the offending data row in the
/// error.
pub fn read_counts_csv(path: &Path, regime: Option<Regime>) -> Result<Vec<CellCounts>, IoError> {
    let display = path.display().to_string();
    let mut cells: Vec<CellCounts> = Vec::new();
    for (i, row) in reader(path)?.deserialize::<CountsCsvRow>().enumerate() {
        let data_row = i + 1;
        let row = row.map_err(|e| IoError::Malformed {
            path: display.clone(),
            row: data_row,
            message: e.to_string(),
        })?;
        if row.nu == 0 {
            return Err(IoError::Malformed {
                path: display,
                row: data_row,
                message: "nu must be at least 1".into(),
            });
        }
        if regime == Some(Regime::Quantum) && row.n_h + row.n_v > row.nu {
            return Err(IoError::Malformed {
                path: display,
                row: data_row,
                message: format!(
                    "counts exceed heralds: n_h + n_v = {} > nu = {}",
                    row.n_h + row.n_v,
                    row.nu
                ),
            });
        }
        let record = CountRecord { n_h: row.n_h, n_v: row.n_v, heralds: row.nu };
        match cells.last_mut() {
            Some(cell) if cell.theta_in_deg == row.theta_in_deg => cell.records.push(record),
            _ => cells.push(CellCounts { theta_in_deg: row.theta_in_deg, records: vec![record] }),
        }
    }
    Ok(cells)
}

// ---------------------------------------------------------------- budget --

/// Writes an uncertainty budget:
/// `source,value,unit,divisor,distribution,sensitivity,std`.
/// The std column is derived; rows without a sensitivity leave both cells
/// empty.
pub fn write_budget_csv(path: &Path, entries: &[BudgetEntry], meta: &RunMeta) -> Result<(), IoError> {
    let mut w = csv_writer_with_preamble(path, meta)?;
    w.write_record(["source", "value", "unit", "divisor", "distribution", "sensitivity", "std"])?;
    for e in entries {
        w.write_record([
            e.source.clone(),
            e.value.to_string(),
            e.unit.clone(),
            e.divisor.to_string(),
            e.distribution.to_string(),
            opt_cell(e.sensitivity),
            opt_cell(e.std_uncertainty().ok()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct BudgetCsvRow {
    source: String,
    value: f64,
    unit: String,
    divisor: Option<f64>,
    distribution: String,
    sensitivity: Option<f64>,
    #[serde(default)]
    #[allow(dead_code)]
    std: Option<f64>,
}

fn parse_distribution(text: &str) -> Option<BudgetDistribution> {
    match text.trim().to_ascii_lowercase().as_str() {
        "normal" | "n" => Some(BudgetDistribution::Normal),
        "rectangular" | "r" => Some(BudgetDistribution::Rectangular),
        _ => None,
    }
}

/// Reads a budget file. The distribution accepts `normal`/`n` and
/// `rectangular`/`r` in any case; an empty divisor falls back to the
/// distribution's standard one.
pub fn read_budget_csv(path: &Path) -> Result<Vec<BudgetEntry>, IoError> {
    let display = path.display().to_string();
    let mut entries = Vec::new();
    for (i, row) in reader(path)?.deserialize::<BudgetCsvRow>().enumerate() {
        let data_row = i + 1;
        let row = row.map_err(|e| IoError::Malformed {
            path: display.clone(),
            row: data_row,
            message: e.to_string(),
        })?;
        let distribution = parse_distribution(&row.distribution).ok_or_else(|| IoError::Malformed {
            path: display.clone(),
            row: data_row,
            message: format!("unknown distribution {:?}", row.distribution),
        })?;
        let divisor = row.divisor.unwrap_or_else(|| distribution.default_divisor());
        if !(divisor.is_finite() && divisor > 0.0) {
            return Err(IoError::Malformed {
                path: display,
                row: data_row,
                message: format!("divisor must be positive, got {divisor}"),
            });
        }
        entries.push(BudgetEntry {
            source: row.source,
            value: row.value,
            unit: row.unit,
            divisor,
            distribution,
            sensitivity: row.sensitivity,
        });
    }
    Ok(entries)
}

// --------------------------------------------------------- study results --

/// Campaign rows, one per grid angle.
pub fn write_campaign_csv(path: &Path, result: &CampaignResult, meta: &RunMeta) -> Result<(), IoError> {
    let mut w = csv_writer_with_preamble(path, meta)?;
    w.write_record([
        "theta_in_deg",
        "theta_out_true_deg",
        "excluded",
        "estimator",
        "regime",
        "concentration",
        "concentration_std",
        "theta_out_mean_deg",
        "theta_out_std_deg",
        "alpha_deg",
        "trials_total",
        "trials_used",
        "trials_dropped_empty",
        "trials_unphysical",
        "analytic_dtheta_deg",
        "analytic_bias_c",
        "enhancement_pred",
        "error",
    ])?;
    for row in &result.rows {
        let e = row.estimate.as_ref();
        let field = |f: fn(&crate::estimators::Estimate) -> String| -> String {
            e.map(f).unwrap_or_default()
        };
        w.write_record([
            row.theta_in_deg.to_string(),
            row.theta_out_true_deg.to_string(),
            row.excluded.to_string(),
            result.spec.estimator.to_string(),
            result.spec.probe.regime.to_string(),
            field(|e| e.concentration.to_string()),
            field(|e| e.concentration_std.to_string()),
            field(|e| e.theta_out_mean_deg.to_string()),
            field(|e| e.theta_out_std_deg.to_string()),
            field(|e| e.alpha_deg.to_string()),
            field(|e| e.trials_total.to_string()),
            field(|e| e.trials_used.to_string()),
            field(|e| e.trials_dropped_empty.to_string()),
            field(|e| e.trials_unphysical.to_string()),
            opt_cell(row.analytic_dtheta_deg),
            opt_cell(row.analytic_bias_c),
            row.enhancement_pred.to_string(),
            row.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_validation_csv(path: &Path, result: &ValidationResult, meta: &RunMeta) -> Result<(), IoError> {
    let mut w = csv_writer_with_preamble(path, meta)?;
    w.write_record([
        "estimator",
        "regime",
        "theta_out_deg",
        "expected_std_deg",
        "empirical_std_deg",
        "z_score",
        "passed",
        "trials_used",
        "excluded",
    ])?;
    for row in &result.rows {
        w.write_record([
            row.kind.to_string(),
            row.regime.to_string(),
            row.theta_out_deg.to_string(),
            row.expected_std_deg.to_string(),
            row.empirical_std_deg.to_string(),
            row.z_score.to_string(),
            row.passed.to_string(),
            row.trials_used.to_string(),
            row.excluded.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_pe_bias_csv(path: &Path, result: &PeBiasResult, meta: &RunMeta) -> Result<(), IoError> {
    let mut w = csv_writer_with_preamble(path, meta)?;
    w.write_record([
        "theta_out_true_deg",
        "theta_in_deg",
        "r_pe",
        "concentration_true",
        "c_mean",
        "c_std",
        "c_stderr",
        "analytic_first_order_c",
        "excluded",
    ])?;
    for row in &result.rows {
        w.write_record([
            row.theta_out_true_deg.to_string(),
            row.theta_in_deg.to_string(),
            row.r_pe.to_string(),
            row.concentration_true.to_string(),
            row.c_mean.to_string(),
            row.c_std.to_string(),
            row.c_stderr.to_string(),
            opt_cell(row.analytic_first_order_c),
            row.excluded.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_scaling_csv(path: &Path, result: &ScalingResult, meta: &RunMeta) -> Result<(), IoError> {
    let mut w = csv_writer_with_preamble(path, meta)?;
    w.write_record(["heralds", "empirical_std_rad", "expected_std_rad", "fitted_exponent"])?;
    for row in &result.rows {
        w.write_record([
            row.heralds.to_string(),
            row.empirical_std_rad.to_string(),
            row.expected_std_rad.to_string(),
            result.fitted_exponent.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_fisher_csv(path: &Path, rows: &[FisherRow], meta: &RunMeta) -> Result<(), IoError> {
    let mut w = csv_writer_with_preamble(path, meta)?;
    w.write_record([
        "estimator",
        "scheme",
        "regime",
        "theta_out_deg",
        "fi_per_slot",
        "cr_bound_rad",
        "lep_rad",
        "saturation_gap",
    ])?;
    for row in rows {
        w.write_record([
            row.kind.to_string(),
            row.scheme.to_string(),
            row.regime.to_string(),
            row.theta_out_deg.to_string(),
            row.fi_per_slot.to_string(),
            row.cr_bound_rad.to_string(),
            row.lep_rad.to_string(),
            row.saturation_gap.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    meta: &'a RunMeta,
    result: &'a T,
}

/// Writes `{"meta": ..., "result": ...}` as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, result: &T, meta: &RunMeta) -> Result<(), IoError> {
    let mut file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut file, &Envelope { meta, result })?;
    writeln!(file)?;
    Ok(())
}
