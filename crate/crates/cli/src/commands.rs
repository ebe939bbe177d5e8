//! Subcommand bodies: resolve the configuration, run the core routine,
//! write the report files.
//!
//! Every subcommand writes into the `--out` directory: `results.csv` (and
//! `counts.csv` for simulate), a `results.json` mirror carrying the same
//! provenance header, and `config.resolved.json`, the fully resolved
//! configuration that reproduces the run when passed back via `--config`.
//! Nothing here reads the clock, so reruns are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use chiroptic::estimators::{estimate_concentration, Estimate, EstimationSetup};
use chiroptic::fisher::saturation_check;
use chiroptic::io::{
    csv_writer_with_preamble, read_budget_csv, read_counts_csv, write_budget_csv, write_campaign_csv,
    write_counts_csv, write_fisher_csv, write_json, write_pe_bias_csv, write_scaling_csv,
    write_validation_csv, RunMeta,
};
use chiroptic::montecarlo::{pe_bias_study, run_campaign, scaling_study, validate_closed_forms};
use chiroptic::optics::{ChiralSample, PolarizationAngle};
use chiroptic::uncertainty::{combine_budget, sucrose_reference_budget, BudgetEntry};

use crate::config::{
    BudgetConfig, CliError, EstimateConfig, FisherConfig, McConfig, SimulateConfig, Study, VERSION,
};

fn prepare_out(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    Ok(())
}

fn write_resolved<T: Serialize>(out: &Path, config: &T) -> Result<PathBuf, CliError> {
    let path = out.join("config.resolved.json");
    let mut text = serde_json::to_string_pretty(config)?;
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}

pub fn simulate(config: SimulateConfig, out: &Path) -> Result<(), CliError> {
    let spec = config.to_spec();
    let meta = RunMeta::new(VERSION, &config, spec.master_seed)?;
    let result = run_campaign(&spec)?;

    prepare_out(out)?;
    write_resolved(out, &config)?;
    write_campaign_csv(&out.join("results.csv"), &result, &meta)?;
    write_counts_csv(&out.join("counts.csv"), &result.cells, &meta)?;
    write_json(&out.join("results.json"), &result, &meta)?;

    let kept = result.rows.iter().filter(|r| !r.excluded).count();
    println!(
        "simulate `{}`: {} grid cells ({} kept), true rotation {:.5} deg",
        spec.label,
        result.rows.len(),
        kept,
        result.alpha_true_deg
    );
    println!("wrote results.csv, counts.csv, results.json, config.resolved.json in {}", out.display());
    Ok(())
}

/// One estimated dataset of an external counts file.
#[derive(Debug, Serialize)]
struct EstimateCell {
    theta_in_deg: f64,
    estimate: Option<Estimate>,
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct EstimateReport {
    cells: Vec<EstimateCell>,
    /// Echo of the attached budget table, when one was supplied.
    budget: Option<Vec<BudgetEntry>>,
    /// Root-sum-square total over the attached budget rows.
    combined_budget_total: Option<f64>,
}

fn write_estimates_csv(path: &Path, report: &EstimateReport, meta: &RunMeta) -> Result<(), CliError> {
    let mut w = csv_writer_with_preamble(path, meta)?;
    w.write_record([
        "theta_in_deg",
        "estimator",
        "concentration",
        "concentration_std",
        "theta_out_mean_deg",
        "theta_out_std_deg",
        "alpha_deg",
        "excluded",
        "trials_total",
        "trials_used",
        "trials_dropped_empty",
        "trials_unphysical",
        "error",
    ])?;
    for cell in &report.cells {
        let e = cell.estimate.as_ref();
        let field = |f: fn(&Estimate) -> String| e.map(f).unwrap_or_default();
        w.write_record([
            cell.theta_in_deg.to_string(),
            field(|e| e.kind.to_string()),
            field(|e| e.concentration.to_string()),
            field(|e| e.concentration_std.to_string()),
            field(|e| e.theta_out_mean_deg.to_string()),
            field(|e| e.theta_out_std_deg.to_string()),
            field(|e| e.alpha_deg.to_string()),
            field(|e| e.excluded.to_string()),
            field(|e| e.trials_total.to_string()),
            field(|e| e.trials_used.to_string()),
            field(|e| e.trials_dropped_empty.to_string()),
            field(|e| e.trials_unphysical.to_string()),
            cell.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn estimate(config: EstimateConfig, out: &Path) -> Result<(), CliError> {
    let counts_path = PathBuf::from(config.counts.as_ref().unwrap());
    let cells_in = read_counts_csv(&counts_path, config.regime)?;
    if cells_in.is_empty() {
        return Err(CliError::Runtime(format!("{}: no data rows", counts_path.display())));
    }
    let calib = config.calibration();
    let mut sample = ChiralSample::sucrose(0.0);
    sample.path_length_dm = config.path_length_dm.unwrap();

    let mut cells = Vec::with_capacity(cells_in.len());
    for cell in &cells_in {
        let theta_in = PolarizationAngle::from_degrees(cell.theta_in_deg);
        let mut setup = EstimationSetup::new(theta_in, &sample, config.wavelength_nm.unwrap())?;
        if let Some(hint) = config.branch_hint_deg {
            setup = setup.with_branch_hint(PolarizationAngle::from_degrees(hint));
        }
        let (estimate, error) =
            match estimate_concentration(&cell.records, config.estimator.unwrap(), &calib, &setup) {
                Ok(est) => (Some(est), None),
                Err(e) => (None, Some(e.to_string())),
            };
        cells.push(EstimateCell { theta_in_deg: cell.theta_in_deg, estimate, error });
    }

    let budget = config.budget.as_ref().map(|p| read_budget_csv(Path::new(p))).transpose()?;
    let combined_budget_total = budget.as_ref().map(|rows| combine_budget(rows)).transpose()?;
    let report = EstimateReport { cells, budget, combined_budget_total };

    let meta = RunMeta::new(VERSION, &config, 0)?;
    prepare_out(out)?;
    write_resolved(out, &config)?;
    write_estimates_csv(&out.join("results.csv"), &report, &meta)?;
    write_json(&out.join("results.json"), &report, &meta)?;

    let ok = report.cells.iter().filter(|c| c.estimate.is_some()).count();
    println!("estimate: {} datasets ({} estimated) from {}", report.cells.len(), ok, counts_path.display());
    if let Some(total) = report.combined_budget_total {
        println!("combined budget total: {total:.4} g/ml over {} rows", report.budget.as_ref().unwrap().len());
    }
    println!("wrote results.csv, results.json, config.resolved.json in {}", out.display());
    Ok(())
}

pub fn fisher(config: FisherConfig, out: &Path) -> Result<(), CliError> {
    let grid: Vec<PolarizationAngle> = config
        .grid_deg
        .as_ref()
        .unwrap()
        .iter()
        .map(|&d| PolarizationAngle::from_degrees(d))
        .collect();
    let rows = saturation_check(
        config.scheme.unwrap(),
        config.regime.unwrap(),
        &grid,
        config.eta_h.unwrap(),
        config.eta_v.unwrap(),
        config.heralds.unwrap(),
    )?;

    let meta = RunMeta::new(VERSION, &config, 0)?;
    prepare_out(out)?;
    write_resolved(out, &config)?;
    write_fisher_csv(&out.join("results.csv"), &rows, &meta)?;
    write_json(&out.join("results.json"), &rows, &meta)?;

    let max_gap = rows.iter().map(|r| r.saturation_gap.abs()).fold(0.0f64, f64::max);
    println!(
        "fisher: {} angles, {} {}, max |saturation gap| = {max_gap:.2e}",
        rows.len(),
        config.scheme.unwrap(),
        config.regime.unwrap()
    );
    println!("wrote results.csv, results.json, config.resolved.json in {}", out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct BudgetReport {
    entries: Vec<BudgetEntry>,
    /// Sources of the rows entering the total.
    combined_sources: Vec<String>,
    combined_total: f64,
}

pub fn budget(config: BudgetConfig, out: &Path) -> Result<(), CliError> {
    let entries = match config.table.as_ref() {
        Some(path) => {
            let entries = read_budget_csv(Path::new(path))?;
            if entries.is_empty() {
                return Err(CliError::Runtime(format!("{path}: no budget rows")));
            }
            entries
        }
        None => sucrose_reference_budget(),
    };
    // A user table is combined whole; in the reference budget the first two
    // rows are the alternative statistics and stay out of the total.
    let combined: &[BudgetEntry] =
        if config.table.is_some() { &entries } else { &entries[2..] };
    let combined_total = combine_budget(combined)?;
    let report = BudgetReport {
        entries: entries.clone(),
        combined_sources: combined.iter().map(|e| e.source.clone()).collect(),
        combined_total,
    };

    let meta = RunMeta::new(VERSION, &config, 0)?;
    prepare_out(out)?;
    write_resolved(out, &config)?;
    write_budget_csv(&out.join("results.csv"), &entries, &meta)?;
    write_json(&out.join("results.json"), &report, &meta)?;

    println!(
        "budget: {} rows, combined standard uncertainty {:.4} g/ml over {} rows",
        report.entries.len(),
        report.combined_total,
        report.combined_sources.len()
    );
    println!("wrote results.csv, results.json, config.resolved.json in {}", out.display());
    Ok(())
}

pub fn mc(config: McConfig, out: &Path) -> Result<(), CliError> {
    let meta = RunMeta::new(VERSION, &config, config.seed())?;
    prepare_out(out)?;
    write_resolved(out, &config)?;

    match config.study.unwrap() {
        Study::PeBias => {
            let result = pe_bias_study(&config.to_pe_bias_spec())?;
            write_pe_bias_csv(&out.join("results.csv"), &result, &meta)?;
            write_json(&out.join("results.json"), &result, &meta)?;
            println!(
                "mc pe-bias `{}`: {} rows ({} concentrations x {} grid points x 2 leak arms)",
                result.spec.label,
                result.rows.len(),
                result.spec.concentrations.len(),
                result.spec.grid_deg.len()
            );
        }
        Study::Validate => {
            let result = validate_closed_forms(&config.to_validation_spec())?;
            write_validation_csv(&out.join("results.csv"), &result, &meta)?;
            write_json(&out.join("results.json"), &result, &meta)?;
            let flagged = result.rows.iter().filter(|r| !r.passed).count();
            println!(
                "mc validate `{}`: {} cells, {} flagged beyond the z threshold",
                result.spec.label,
                result.rows.len(),
                flagged
            );
        }
        Study::Scaling => {
            let result = scaling_study(&config.to_scaling_spec())?;
            write_scaling_csv(&out.join("results.csv"), &result, &meta)?;
            write_json(&out.join("results.json"), &result, &meta)?;
            println!(
                "mc scaling `{}`: fitted exponent {:.4} over {} slot counts",
                result.spec.label,
                result.fitted_exponent,
                result.rows.len()
            );
        }
    }
    println!("wrote results.csv, results.json, config.resolved.json in {}", out.display());
    Ok(())
}
