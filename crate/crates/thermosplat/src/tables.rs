//! CSV outputs. Floats are written in shortest round-trip form.

use std::path::Path;

use serde::Serialize;
use thermosplat_core::scene::k_to_c;
use thermosplat_core::thermo::TempCurve;
use thermosplat_core::train::{AblationRun, MetricsRow, Predictor};

use crate::error::{Error, Result};

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let csv_err = |e: csv::Error| Error::format(path, e.to_string());
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_err)?;
    // Written by hand so an empty table still has its header.
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(Error::io(path))
}

pub const METRICS_HEADER: [&str; 5] = ["view_id", "time_s", "psnr_db", "ssim", "mae_c"];

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    write_rows(path, rows, &METRICS_HEADER)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::format(path, e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct CurveRow {
    pub gaussian_id: usize,
    pub time_s: f64,
    pub temp_c: f64,
    /// Increment in kelvin that led to this grid point; 0 at the start.
    pub delta_t: f64,
}

pub fn curve_rows(curves: &[TempCurve]) -> Vec<CurveRow> {
    let mut rows = Vec::new();
    for (g, c) in curves.iter().enumerate() {
        for (k, (&t, &temp)) in c.times.iter().zip(&c.temps).enumerate() {
            rows.push(CurveRow {
                gaussian_id: g,
                time_s: t,
                temp_c: k_to_c(temp),
                delta_t: if k == 0 { 0.0 } else { c.deltas[k - 1] },
            });
        }
    }
    rows
}

pub fn write_curves(path: &Path, curves: &[TempCurve]) -> Result<()> {
    write_rows(path, &curve_rows(curves), &["gaussian_id", "time_s", "temp_c", "delta_t"])
}

#[derive(Serialize)]
struct EmissivityRow<'a> {
    variant: &'a str,
    material_id: u32,
    mean_e: f64,
}

pub fn write_emissivity(path: &Path, variant: &str, e: &[(u32, f64)]) -> Result<()> {
    let rows: Vec<_> = e
        .iter()
        .map(|&(material_id, mean_e)| EmissivityRow {
            variant,
            material_id,
            mean_e,
        })
        .collect();
    write_rows(path, &rows, &["variant", "material_id", "mean_e"])
}

#[derive(Serialize)]
struct AblationRow<'a> {
    variant: &'a str,
    predictor: Predictor,
    view_id: usize,
    time_s: f64,
    psnr_db: f64,
    ssim: f64,
    mae_c: f64,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    variant: &'a str,
    predictor: Predictor,
    psnr_db: f64,
    ssim: f64,
    mae_c: f64,
}

/// `ablation.csv` (per capture), `ablation_summary.csv` (means) and
/// `ablation_emissivity.csv` under `dir`.
pub fn write_ablation(dir: &Path, runs: &[AblationRun]) -> Result<()> {
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let mut emis = Vec::new();
    for run in runs {
        for r in &run.rows {
            rows.push(AblationRow {
                variant: &run.name,
                predictor: run.predictor,
                view_id: r.view_id,
                time_s: r.time_s,
                psnr_db: r.psnr_db,
                ssim: r.ssim,
                mae_c: r.mae_c,
            });
        }
        if let Some(m) = run.mean() {
            summary.push(SummaryRow {
                variant: &run.name,
                predictor: run.predictor,
                psnr_db: m.psnr_db,
                ssim: m.ssim,
                mae_c: m.mae_c,
            });
        }
        for &(material_id, mean_e) in &run.emissivity {
            emis.push(EmissivityRow {
                variant: &run.name,
                material_id,
                mean_e,
            });
        }
    }
    write_rows(
        &dir.join("ablation.csv"),
        &rows,
        &["variant", "predictor", "view_id", "time_s", "psnr_db", "ssim", "mae_c"],
    )?;
    write_rows(
        &dir.join("ablation_summary.csv"),
        &summary,
        &["variant", "predictor", "psnr_db", "ssim", "mae_c"],
    )?;
    write_rows(&dir.join("ablation_emissivity.csv"), &emis, &["variant", "material_id", "mean_e"])
}
