//! CSV writers for benchmark tables, metric rows and solver diagnostics.

use std::io::Write;

use gtvsr_core::solver::RefinementReport;
use gtvsr_core::ErrorReport;

use crate::harness::BenchmarkRow;

/// Published tables list C2C in units of 1e-1 and C2P in units of 1e-2.
pub const SCALE_NOTE: &str =
    "# c2c and c2p are raw values on unit-diagonal clouds; table units are c2c x1e-1, c2p x1e-2";

pub fn write_benchmark_csv<W: Write>(rows: &[BenchmarkRow], mut out: W) -> csv::Result<()> {
    writeln!(out, "{SCALE_NOTE}")?;
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record([
        "model",
        "method",
        "n_points",
        "c2c",
        "c2p",
        "wall_time_s",
        "admm_iters",
    ])?;
    for row in rows {
        writer.write_record([
            row.model.clone(),
            row.method.to_string(),
            row.n_points.to_string(),
            format!("{:?}", row.report.c2c),
            format!("{:?}", row.report.c2p),
            format!("{:?}", row.wall_time_s),
            row.admm_iters.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_metrics_csv<W: Write>(model: &str, report: &ErrorReport, out: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record([
        "model",
        "c2c",
        "c2p",
        "c2c_truth_to_result",
        "c2c_result_to_truth",
        "c2p_truth_to_result",
        "c2p_result_to_truth",
    ])?;
    writer.write_record([
        model.to_string(),
        format!("{:?}", report.c2c),
        format!("{:?}", report.c2p),
        format!("{:?}", report.c2c_directed.truth_to_result),
        format!("{:?}", report.c2c_directed.result_to_truth),
        format!("{:?}", report.c2p_directed.truth_to_result),
        format!("{:?}", report.c2p_directed.result_to_truth),
    ])?;
    writer.flush()?;
    Ok(())
}

/// One row per ADMM iteration across every colour solve, numbered from 1.
pub fn write_diagnostics_csv<W: Write>(report: &RefinementReport, out: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record([
        "iteration",
        "outer",
        "color",
        "primal_residual",
        "gtv_objective",
    ])?;
    let mut iteration = 0usize;
    for solve in &report.solves {
        for record in &solve.diagnostics.history {
            iteration += 1;
            writer.write_record([
                iteration.to_string(),
                solve.outer.to_string(),
                format!("{:?}", solve.color).to_lowercase(),
                format!("{:?}", record.primal_residual),
                format!("{:?}", record.gtv),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}
