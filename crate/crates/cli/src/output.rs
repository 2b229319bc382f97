//! CSV files written by the commands. Every file has a header row, even when
//! it has no data rows.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;

use snn_pid::experiments::{BenchRow, DoubleIntegratorReport, MimicryRow, RasterRow, RateCheck};
use snn_pid::train::EpochLoss;

use crate::CliError;

fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file));
    let wrap = |e: csv::Error| CliError::io(path, std::io::Error::other(e));
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.serialize(row).map_err(wrap)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn loss_history(path: &Path, history: &[EpochLoss]) -> Result<(), CliError> {
    let rows = history.iter().flat_map(|e| {
        e.heads
            .iter()
            .map(move |h| (e.epoch, h.kind.to_string(), h.mse, h.pearson, h.penalty, h.total()))
    });
    write_rows(path, &["epoch", "head", "mse", "pearson_loss", "penalty", "total"], rows)
}

/// Per-head losses of the last history entry.
pub fn train_summary(path: &Path, history: &[EpochLoss]) -> Result<(), CliError> {
    let rows = history
        .last()
        .into_iter()
        .flat_map(|e| e.heads.iter().map(|h| (h.kind.to_string(), h.mse, h.pearson, h.penalty)));
    write_rows(path, &["head", "mse", "pearson_loss", "penalty"], rows)
}

pub fn variant_summary(path: &Path, report: &DoubleIntegratorReport) -> Result<(), CliError> {
    let rows = report.variants.iter().map(|v| {
        (
            v.variant.name(),
            v.e_ss,
            v.settle_time_s,
            v.recurrent_weight,
            v.diverged,
        )
    });
    write_rows(
        path,
        &["variant", "e_ss", "settle_time_s", "recurrent_weight", "diverged"],
        rows,
    )
}

pub fn recurrent_grid(path: &Path, report: &DoubleIntegratorReport) -> Result<(), CliError> {
    let rows = report.grid.iter().map(|g| (g.weight, g.mean_abs_e_ss, g.stable));
    write_rows(path, &["recurrent_weight", "mean_abs_e_ss", "stable"], rows)
}

pub fn mimicry(path: &Path, rows: &[MimicryRow]) -> Result<(), CliError> {
    let rows = rows.iter().map(|r| {
        (
            r.head.to_string(),
            r.mse,
            r.target_variance,
            r.relative_mse(),
            r.pearson_loss,
        )
    });
    write_rows(
        path,
        &["head", "mse", "target_variance", "relative_mse", "pearson_loss"],
        rows,
    )
}

pub fn raster(path: &Path, rows: &[RasterRow]) -> Result<(), CliError> {
    write_rows(path, &["step", "value", "pos", "neg"], rows)
}

pub fn rates(path: &Path, rows: &[RateCheck]) -> Result<(), CliError> {
    let rows = rows.iter().map(|r| {
        (
            r.value,
            r.side,
            r.expected,
            r.empirical,
            r.draws,
            r.tolerance,
            r.within_band(),
        )
    });
    write_rows(
        path,
        &["value", "side", "expected", "empirical", "draws", "tolerance", "within_band"],
        rows,
    )
}

pub fn bench(path: &Path, rows: &[BenchRow]) -> Result<(), CliError> {
    write_rows(
        path,
        &[
            "groups",
            "neurons",
            "steps_per_sec",
            "ns_per_step_min",
            "ns_per_step_median",
            "p99_latency_us",
        ],
        rows,
    )
}
