//! Pipeline configuration: one JSON document holding every tunable, with
//! defaults, strict schema validation (unknown keys rejected), and
//! conversions into the per-module parameter types.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cloud::{Aabb, Point2, Point3, VoxelParams};
use crate::error::{Error, Result};
use crate::farmgen::FarmSpec;
use crate::groundheight::{HeightMethod, RansacParams};
use crate::io::{read_json, write_json};
use crate::plotdetect::KMeansParams;
use crate::scansim::SensorModel;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub farm: FarmSpec,
    pub sensor: SensorConfig,
    pub flight: FlightConfig,
    pub map: MapConfig,
    pub detect: DetectConfig,
    pub heights: HeightsConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorConfig {
    pub channels: usize,
    pub vertical_fov_deg: f64,
    pub azimuth_step_deg: f64,
    pub max_range: f64,
    pub range_noise_sigma: f64,
    pub seed: u64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            channels: 16,
            vertical_fov_deg: 15.0,
            azimuth_step_deg: 0.5,
            max_range: 100.0,
            range_noise_sigma: 0.03,
            seed: 1,
        }
    }
}

impl SensorConfig {
    pub fn to_model(&self) -> SensorModel {
        SensorModel {
            channels: self.channels,
            vertical_fov: self.vertical_fov_deg.to_radians(),
            azimuth_step: self.azimuth_step_deg.to_radians(),
            max_range: self.max_range,
            range_noise_sigma: self.range_noise_sigma,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlightConfig {
    pub altitude: f64,
    pub line_spacing: f64,
    pub sample_spacing: f64,
    /// Per-axis translation noise on the poses (0 = the clean GPS-grade
    /// open-loop assumption).
    pub pose_noise_sigma: f64,
    pub pose_noise_seed: u64,
}

impl Default for FlightConfig {
    fn default() -> Self {
        FlightConfig {
            altitude: 15.0,
            line_spacing: 5.0,
            sample_spacing: 1.0,
            pose_noise_sigma: 0.0,
            pose_noise_seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapConfig {
    pub voxel_leaf: f64,
    pub crop_min: Option<[f64; 3]>,
    pub crop_max: Option<[f64; 3]>,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig {
            voxel_leaf: 0.05,
            crop_min: None,
            crop_max: None,
        }
    }
}

impl MapConfig {
    pub fn voxel_params(&self) -> Result<VoxelParams> {
        VoxelParams::new(self.voxel_leaf)
    }

    pub fn crop(&self) -> Result<Option<Aabb>> {
        match (self.crop_min, self.crop_max) {
            (None, None) => Ok(None),
            (Some(lo), Some(hi)) => Ok(Some(Aabb::new(
                Point3::new(lo[0], lo[1], lo[2]),
                Point3::new(hi[0], hi[1], hi[2]),
            )?)),
            _ => Err(Error::InvalidParam(
                "crop_min and crop_max must be given together".into(),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectConfig {
    /// Expected plot count (the k of k-means).
    pub k: usize,
    pub kmeans_max_iters: usize,
    pub kmeans_tol: f64,
    pub kmeans_seed: u64,
    /// Explicit vegetation threshold; when absent the ground-percentile
    /// heuristic `percentile(z, z_percentile) + z_offset` is used.
    pub z_threshold: Option<f64>,
    pub z_percentile: f64,
    pub z_offset: f64,
    pub yaw_bin_deg: f64,
    pub dim_bin: f64,
    /// Center of plot (0, 0); the manual grid fit. When absent the grid is
    /// centered on the cluster centroids before any snap refinement.
    pub anchor: Option<[f64; 2]>,
    /// Approximate grid-x direction. The voted orientation is only defined
    /// modulo 90 degrees; the representative closest to this hint becomes
    /// the grid yaw.
    pub grid_yaw_hint_deg: f64,
    pub pitch_x: f64,
    pub pitch_y: f64,
    pub rows: usize,
    pub cols: usize,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            k: 30,
            kmeans_max_iters: 100,
            kmeans_tol: 1e-6,
            kmeans_seed: 2,
            z_threshold: None,
            z_percentile: 5.0,
            z_offset: 0.3,
            yaw_bin_deg: 2.0,
            dim_bin: 0.10,
            anchor: None,
            grid_yaw_hint_deg: 0.0,
            pitch_x: 2.25,
            pitch_y: 4.5,
            rows: 3,
            cols: 10,
        }
    }
}

impl DetectConfig {
    pub fn kmeans_params(&self) -> KMeansParams {
        KMeansParams {
            k: self.k,
            max_iters: self.kmeans_max_iters,
            tol: self.kmeans_tol,
            seed: self.kmeans_seed,
        }
    }

    pub fn yaw_bin(&self) -> f64 {
        self.yaw_bin_deg.to_radians()
    }

    pub fn anchor_point(&self) -> Option<Point2> {
        self.anchor.map(|a| Point2::new(a[0], a[1]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeightsConfig {
    pub ransac_dist_threshold: f64,
    pub ransac_max_iters: usize,
    /// Static floor; per plot the effective minimum is
    /// `max(ransac_min_inliers, ceil(5% of plot points))`.
    pub ransac_min_inliers: usize,
    pub ransac_seed: u64,
    /// Box length extension covering the ground between plots.
    pub extension: f64,
    /// "max" or "percentile".
    pub method: String,
    pub percentile: f64,
}

impl Default for HeightsConfig {
    fn default() -> Self {
        HeightsConfig {
            ransac_dist_threshold: 0.05,
            ransac_max_iters: 1000,
            ransac_min_inliers: 50,
            ransac_seed: 3,
            extension: 0.75,
            method: "percentile".to_string(),
            percentile: 99.0,
        }
    }
}

impl HeightsConfig {
    pub fn ransac_params(&self) -> RansacParams {
        RansacParams {
            dist_threshold: self.ransac_dist_threshold,
            max_iters: self.ransac_max_iters,
            min_inliers: self.ransac_min_inliers,
            seed: self.ransac_seed,
        }
    }

    pub fn height_method(&self) -> Result<HeightMethod> {
        match self.method.as_str() {
            "max" => Ok(HeightMethod::Max),
            "percentile" => {
                if !(self.percentile > 0.0 && self.percentile <= 100.0) {
                    return Err(Error::InvalidParam(format!(
                        "percentile must be in (0, 100], got {}",
                        self.percentile
                    )));
                }
                Ok(HeightMethod::Percentile(self.percentile))
            }
            other => Err(Error::InvalidParam(format!(
                "height method must be \"max\" or \"percentile\", got {other:?}"
            ))),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let cfg: PipelineConfig = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// Range checks over every section; run before any stage.
    pub fn validate(&self) -> Result<()> {
        self.farm.validate()?;
        self.sensor.to_model().validate()?;
        for (name, v) in [
            ("flight.altitude", self.flight.altitude),
            ("flight.line_spacing", self.flight.line_spacing),
            ("flight.sample_spacing", self.flight.sample_spacing),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidParam(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.flight.pose_noise_sigma < 0.0 {
            return Err(Error::InvalidParam("pose_noise_sigma must be >= 0".into()));
        }
        self.map.voxel_params()?;
        self.map.crop()?;
        if self.detect.k == 0 {
            return Err(Error::InvalidParam("detect.k must be at least 1".into()));
        }
        if !(self.detect.z_percentile > 0.0 && self.detect.z_percentile <= 100.0) {
            return Err(Error::InvalidParam(
                "z_percentile must be in (0, 100]".into(),
            ));
        }
        if !(self.detect.yaw_bin_deg > 0.0) || !(self.detect.dim_bin > 0.0) {
            return Err(Error::InvalidParam("vote bins must be positive".into()));
        }
        if !(self.detect.pitch_x > 0.0 && self.detect.pitch_y > 0.0) {
            return Err(Error::InvalidParam("pitches must be positive".into()));
        }
        if self.detect.rows == 0 || self.detect.cols == 0 {
            return Err(Error::InvalidParam(
                "grid rows/cols must be at least 1".into(),
            ));
        }
        if !(self.heights.ransac_dist_threshold > 0.0) {
            return Err(Error::InvalidParam(
                "ransac_dist_threshold must be positive".into(),
            ));
        }
        if self.heights.ransac_max_iters == 0 {
            return Err(Error::InvalidParam(
                "ransac_max_iters must be at least 1".into(),
            ));
        }
        if self.heights.extension < 0.0 {
            return Err(Error::InvalidParam("extension must be >= 0".into()));
        }
        self.heights.height_method()?;
        Ok(())
    }
}
