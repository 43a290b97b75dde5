//! File formats tying the pipeline stages together: trajectory JSON, farm
//! manifest JSON, plot-grid JSON, the heights CSV, and the field-truth CSV.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cloud::{Point3, Quat, RigidPose};
use crate::error::{Error, Result};
use crate::farmgen::{FarmGroundTruth, FarmSpec, PlantInstance, TerrainMesh};
use crate::groundheight::HeightReport;
use crate::plotdetect::PlotGrid;
use crate::scansim::{ScanTrajectory, TrajectorySample};

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Everything a generated farm is: the farm-spec echo, the terrain, the
/// plant instances, and the evaluation ground truth.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FarmManifest {
    pub spec: FarmSpec,
    pub terrain: TerrainMesh,
    pub plants: Vec<PlantInstance>,
    pub ground_truth: FarmGroundTruth,
}

pub fn write_manifest(path: &Path, manifest: &FarmManifest) -> Result<()> {
    write_json(path, manifest)
}

pub fn read_manifest(path: &Path) -> Result<FarmManifest> {
    read_json(path)
}

/// One trajectory record: timestamp, translation, unit quaternion (w first).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
}

pub fn write_trajectory(path: &Path, traj: &ScanTrajectory) -> Result<()> {
    let records: Vec<TrajectoryRecord> = traj
        .samples
        .iter()
        .map(|s| TrajectoryRecord {
            t: s.t,
            tx: s.pose.translation.x,
            ty: s.pose.translation.y,
            tz: s.pose.translation.z,
            qw: s.pose.rotation.w,
            qx: s.pose.rotation.x,
            qy: s.pose.rotation.y,
            qz: s.pose.rotation.z,
        })
        .collect();
    write_json(path, &records)
}

pub fn read_trajectory(path: &Path) -> Result<ScanTrajectory> {
    let records: Vec<TrajectoryRecord> = read_json(path)?;
    let traj = ScanTrajectory {
        samples: records
            .into_iter()
            .map(|r| TrajectorySample {
                t: r.t,
                pose: RigidPose::new(
                    Point3::new(r.tx, r.ty, r.tz),
                    Quat::new(r.qw, r.qx, r.qy, r.qz),
                ),
            })
            .collect(),
    };
    traj.validate()?;
    Ok(traj)
}

pub fn write_grid(path: &Path, grid: &PlotGrid) -> Result<()> {
    write_json(path, grid)
}

pub fn read_grid(path: &Path) -> Result<PlotGrid> {
    let grid: PlotGrid = read_json(path)?;
    grid.validate()?;
    Ok(grid)
}

pub const HEIGHTS_CSV_HEADER: &str =
    "plot_row,plot_col,center_x,center_y,n_points,est_height_m,method,degenerate_flag";

/// One parsed heights-CSV row.
#[derive(Clone, Debug, PartialEq)]
pub struct HeightsCsvRow {
    pub row: usize,
    pub col: usize,
    pub center_x: f64,
    pub center_y: f64,
    pub n_points: usize,
    pub height_m: Option<f64>,
    pub method: String,
    pub degenerate: bool,
}

pub fn heights_csv_to_string(report: &HeightReport) -> String {
    let mut out = String::new();
    out.push_str(HEIGHTS_CSV_HEADER);
    out.push('\n');
    for p in &report.plots {
        let height = p.height_m.map(|h| format!("{h:.6}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{},{},{},{}\n",
            p.row,
            p.col,
            p.center.x,
            p.center.y,
            p.n_points,
            height,
            report.method,
            u8::from(p.degenerate),
        ));
    }
    out
}

pub fn write_heights_csv(path: &Path, report: &HeightReport) -> Result<()> {
    fs::write(path, heights_csv_to_string(report)).map_err(|e| Error::io(path, e))
}

pub fn parse_heights_csv(text: &str, path: &Path) -> Result<Vec<HeightsCsvRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == HEIGHTS_CSV_HEADER => {}
        other => {
            return Err(Error::format(
                path,
                format!("bad heights CSV header: {other:?}"),
            ))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let n = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::format(
                path,
                format!("line {n}: expected 8 fields, got {}", fields.len()),
            ));
        }
        let parse_err = |what: &str| Error::format(path, format!("line {n}: bad {what}"));
        rows.push(HeightsCsvRow {
            row: fields[0]
                .trim()
                .parse()
                .map_err(|_| parse_err("plot_row"))?,
            col: fields[1]
                .trim()
                .parse()
                .map_err(|_| parse_err("plot_col"))?,
            center_x: fields[2]
                .trim()
                .parse()
                .map_err(|_| parse_err("center_x"))?,
            center_y: fields[3]
                .trim()
                .parse()
                .map_err(|_| parse_err("center_y"))?,
            n_points: fields[4]
                .trim()
                .parse()
                .map_err(|_| parse_err("n_points"))?,
            height_m: {
                let f = fields[5].trim();
                if f.is_empty() {
                    None
                } else {
                    Some(f.parse().map_err(|_| parse_err("est_height_m"))?)
                }
            },
            method: fields[6].trim().to_string(),
            degenerate: match fields[7].trim() {
                "0" => false,
                "1" => true,
                _ => return Err(parse_err("degenerate_flag")),
            },
        });
    }
    Ok(rows)
}

pub fn read_heights_csv(path: &Path) -> Result<Vec<HeightsCsvRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_heights_csv(&text, path)
}

/// Field ground truth: per-plot heights measured (and pre-averaged) by hand.
/// CSV columns `plot_row,plot_col,height_m`.
pub fn read_field_truth_csv(path: &Path) -> Result<Vec<(usize, usize, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next().map(str::trim) {
        Some("plot_row,plot_col,height_m") => {}
        other => {
            return Err(Error::format(
                path,
                format!("bad field-truth header: {other:?}"),
            ))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let n = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::format(path, format!("line {n}: expected 3 fields")));
        }
        let bad = |what: &str| Error::format(path, format!("line {n}: bad {what}"));
        rows.push((
            fields[0].trim().parse().map_err(|_| bad("plot_row"))?,
            fields[1].trim().parse().map_err(|_| bad("plot_col"))?,
            fields[2].trim().parse().map_err(|_| bad("height_m"))?,
        ));
    }
    Ok(rows)
}

/// Truth entries from a farm manifest: (row, col, true max plant height).
pub fn manifest_truth(manifest: &FarmManifest) -> Vec<(usize, usize, f64)> {
    manifest
        .ground_truth
        .plots
        .iter()
        .map(|p| (p.row, p.col, p.true_height))
        .collect()
}
