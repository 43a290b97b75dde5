//! Per-plot ground-plane estimation (RANSAC followed by a total
//! least-squares refit) and plant-height statistics.
//!
//! Heights are measured for the RANSAC outliers only: inliers are ground by
//! definition, outliers are vegetation standing above it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{Point2, Point3, PointCloud};
use crate::error::{Error, Result};
use crate::plotdetect::{extract_plot_points, PlotGrid};

/// Local ground plane: centroid plus unit normal with `normal.z > 0`, so
/// signed point-plane distances are positive above ground.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneModel {
    pub centroid: Point3,
    pub normal: Point3,
}

impl PlaneModel {
    /// Signed distance of a point from the plane (positive above).
    pub fn height_of(&self, p: Point3) -> f64 {
        (p - self.centroid).dot(self.normal)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RansacParams {
    /// Inlier distance threshold in meters.
    pub dist_threshold: f64,
    pub max_iters: usize,
    /// Floor on the consensus size; per-plot estimation raises it to
    /// `max(min_inliers, ceil(5% of plot points))`.
    pub min_inliers: usize,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            dist_threshold: 0.05,
            max_iters: 1000,
            min_inliers: 50,
            seed: 0,
        }
    }
}

/// RANSAC outcome: the least-squares plane refit from the winning consensus
/// set, the candidate plane that defined the inlier/outlier split, and the
/// split itself (disjoint index sets covering the whole cloud).
#[derive(Clone, Debug)]
pub struct PlaneFitResult {
    pub plane: PlaneModel,
    pub candidate: PlaneModel,
    pub inlier_indices: Vec<usize>,
    pub outlier_indices: Vec<usize>,
}

fn orient_up(mut n: Point3) -> Point3 {
    if n.z < 0.0 || (n.z == 0.0 && (n.x < 0.0 || (n.x == 0.0 && n.y < 0.0))) {
        n = -n;
    }
    n
}

/// Eigenvalues (ascending) and matching eigenvectors of a symmetric 3x3
/// matrix given as `[xx, xy, xz, yy, yz, zz]`. Analytic trigonometric form.
fn sym_eigen3(m: [f64; 6]) -> ([f64; 3], [Point3; 3]) {
    let [a11, a12, a13, a22, a23, a33] = m;
    let p1 = a12 * a12 + a13 * a13 + a23 * a23;
    let q = (a11 + a22 + a33) / 3.0;

    let mut evals = if p1 < 1e-300 {
        [a11, a22, a33]
    } else {
        let p2 = (a11 - q).powi(2) + (a22 - q).powi(2) + (a33 - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let inv_p = 1.0 / p;
        let b11 = (a11 - q) * inv_p;
        let b12 = a12 * inv_p;
        let b13 = a13 * inv_p;
        let b22 = (a22 - q) * inv_p;
        let b23 = a23 * inv_p;
        let b33 = (a33 - q) * inv_p;
        let half_det = (b11 * b22 * b33 + 2.0 * b12 * b13 * b23
            - b11 * b23 * b23
            - b22 * b13 * b13
            - b33 * b12 * b12)
            * 0.5;
        let phi = half_det.clamp(-1.0, 1.0).acos() / 3.0;
        let e_hi = q + 2.0 * p * phi.cos();
        let e_lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        let e_mid = 3.0 * q - e_hi - e_lo;
        [e_lo, e_mid, e_hi]
    };
    evals.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let vecs = [
        eigenvector_for(m, evals[0]),
        eigenvector_for(m, evals[1]),
        eigenvector_for(m, evals[2]),
    ];
    (evals, vecs)
}

/// Eigenvector of the symmetric matrix for eigenvalue `lambda`, as the
/// largest cross product of rows of `A - lambda I`.
fn eigenvector_for(m: [f64; 6], lambda: f64) -> Point3 {
    let r0 = Point3::new(m[0] - lambda, m[1], m[2]);
    let r1 = Point3::new(m[1], m[3] - lambda, m[4]);
    let r2 = Point3::new(m[2], m[4], m[5] - lambda);
    let c0 = r0.cross(r1);
    let c1 = r0.cross(r2);
    let c2 = r1.cross(r2);
    let (n0, n1, n2) = (c0.norm_squared(), c1.norm_squared(), c2.norm_squared());
    let best = if n0 >= n1 && n0 >= n2 {
        (c0, n0)
    } else if n1 >= n2 {
        (c1, n1)
    } else {
        (c2, n2)
    };
    if best.1 < 1e-300 {
        return Point3::new(0.0, 0.0, 1.0);
    }
    best.0 * (1.0 / best.1.sqrt())
}

/// Total least-squares plane: centroid plus the covariance eigenvector with
/// the smallest eigenvalue, oriented so `normal.z > 0`.
///
/// Errors when the two smallest eigenvalues coincide within 1e-12 (collinear
/// or otherwise direction-ambiguous input).
pub fn lsq_plane(points: &[Point3]) -> Result<PlaneModel> {
    let n = points.len();
    if n < 3 {
        return Err(Error::InsufficientPoints { needed: 3, got: n });
    }
    let inv_n = 1.0 / n as f64;
    let mut centroid = Point3::ZERO;
    for p in points {
        centroid = centroid + *p;
    }
    centroid = centroid * inv_n;

    let mut cov = [0.0f64; 6];
    for p in points {
        let d = *p - centroid;
        cov[0] += d.x * d.x;
        cov[1] += d.x * d.y;
        cov[2] += d.x * d.z;
        cov[3] += d.y * d.y;
        cov[4] += d.y * d.z;
        cov[5] += d.z * d.z;
    }
    for c in cov.iter_mut() {
        *c *= inv_n;
    }

    let (evals, evecs) = sym_eigen3(cov);
    if evals[1] - evals[0] <= 1e-12 {
        return Err(Error::AmbiguousPlane);
    }
    let normal = orient_up(evecs[0].normalized());
    Ok(PlaneModel { centroid, normal })
}

fn sample_distinct_triple(rng: &mut ChaCha8Rng, n: usize) -> (usize, usize, usize) {
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
    let mut k = rng.random_range(0..n - 2);
    if k >= lo {
        k += 1;
    }
    if k >= hi {
        k += 1;
    }
    (i, j, k)
}

/// RANSAC plane segmentation.
///
/// Samples 3 distinct points per iteration, keeps the candidate with the
/// largest consensus (ties keep the earlier iteration), classifies every
/// point against that candidate with the absolute distance threshold, and
/// refits the final plane from the inliers via [`lsq_plane`]. Deterministic
/// for a given seed.
pub fn ransac_plane(cloud: &PointCloud, params: &RansacParams) -> Result<PlaneFitResult> {
    if !(params.dist_threshold > 0.0) {
        return Err(Error::InvalidParam(
            "dist_threshold must be positive".into(),
        ));
    }
    if params.max_iters == 0 {
        return Err(Error::InvalidParam("max_iters must be at least 1".into()));
    }
    let n = cloud.len();
    if n < 3 {
        return Err(Error::DegenerateInput(format!(
            "plane segmentation needs at least 3 points, got {n}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let pts = &cloud.points;
    let mut best: Option<(usize, Point3, Point3)> = None; // (count, anchor, unit normal)
    for _ in 0..params.max_iters {
        let (i, j, k) = sample_distinct_triple(&mut rng, n);
        let a = pts[i];
        let normal = (pts[j] - a).cross(pts[k] - a);
        let norm = normal.norm();
        if norm < 1e-12 {
            continue; // collinear sample, no candidate
        }
        let unit = normal * (1.0 / norm);
        let count = pts
            .iter()
            .filter(|p| (**p - a).dot(unit).abs() <= params.dist_threshold)
            .count();
        if best.as_ref().is_none_or(|(c, _, _)| count > *c) {
            best = Some((count, a, unit));
        }
    }

    let (count, anchor, unit) =
        best.ok_or_else(|| Error::DegenerateInput("every sampled candidate was collinear".into()))?;
    if count < params.min_inliers {
        return Err(Error::NoGroundFound {
            best: count,
            min: params.min_inliers,
        });
    }

    let mut inlier_indices = Vec::with_capacity(count);
    let mut outlier_indices = Vec::with_capacity(n - count);
    for (idx, p) in pts.iter().enumerate() {
        if (*p - anchor).dot(unit).abs() <= params.dist_threshold {
            inlier_indices.push(idx);
        } else {
            outlier_indices.push(idx);
        }
    }

    let inlier_points: Vec<Point3> = inlier_indices.iter().map(|&i| pts[i]).collect();
    let plane = lsq_plane(&inlier_points)?;
    let candidate = PlaneModel {
        centroid: anchor,
        normal: orient_up(unit),
    };
    Ok(PlaneFitResult {
        plane,
        candidate,
        inlier_indices,
        outlier_indices,
    })
}

/// Signed heights of points over the plane, positive above ground.
pub fn point_plane_heights(points: &[Point3], plane: &PlaneModel) -> Vec<f64> {
    points.iter().map(|&p| plane.height_of(p)).collect()
}

/// Per-plot height statistic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HeightMethod {
    Max,
    /// Nearest-rank percentile: the value at index `ceil(p/100 * n) - 1` of
    /// the ascending sort — an actual sample, never interpolated.
    Percentile(f64),
}

impl HeightMethod {
    pub fn tag(&self) -> String {
        match self {
            HeightMethod::Max => "max".to_string(),
            HeightMethod::Percentile(p) => {
                if p.fract() == 0.0 {
                    format!("percentile-{p:.0}")
                } else {
                    format!("percentile-{p}")
                }
            }
        }
    }

    pub fn parse(tag: &str) -> Result<HeightMethod> {
        if tag == "max" {
            return Ok(HeightMethod::Max);
        }
        if let Some(p) = tag.strip_prefix("percentile-") {
            let p: f64 = p
                .parse()
                .map_err(|_| Error::InvalidParam(format!("bad height method {tag:?}")))?;
            return Ok(HeightMethod::Percentile(p));
        }
        Err(Error::InvalidParam(format!("bad height method {tag:?}")))
    }
}

/// Reduce a plot's height samples to a single estimate.
pub fn plot_height(heights: &[f64], method: HeightMethod) -> Result<f64> {
    if heights.is_empty() {
        return Err(Error::DegeneratePlot);
    }
    match method {
        HeightMethod::Max => Ok(heights.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        HeightMethod::Percentile(p) => {
            if !(p > 0.0 && p <= 100.0) {
                return Err(Error::InvalidParam(format!(
                    "percentile must be in (0, 100], got {p}"
                )));
            }
            let mut sorted = heights.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = sorted.len();
            let rank = ((p * n as f64) / 100.0 - 1e-9).ceil() as usize;
            Ok(sorted[rank.max(1).min(n) - 1])
        }
    }
}

/// One plot's entry in the height report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlotHeightRecord {
    pub row: usize,
    pub col: usize,
    pub center: Point2,
    pub n_points: usize,
    pub height_m: Option<f64>,
    pub degenerate: bool,
    /// Failure reason when the plot is degenerate.
    pub note: Option<String>,
    pub plane: Option<PlaneModel>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HeightReport {
    pub method: String,
    pub plots: Vec<PlotHeightRecord>,
}

/// Per-plot ground-plane and height estimation over the whole grid.
///
/// For each cell the extended-box points of the voxel map and the raw map
/// are concatenated (the extension pulls in the inter-plot ground so the
/// plane fit works at plot scale), RANSAC segments the local ground, and the
/// chosen statistic reduces the outlier heights. Plots that fail are
/// reported with the degenerate flag set, never dropped. Per-plot RNG
/// streams are `seed xor plot index`, so results do not depend on the worker
/// count.
pub fn estimate_plot_heights(
    voxel_map: &PointCloud,
    raw_map: &PointCloud,
    grid: &PlotGrid,
    ransac: &RansacParams,
    extension: f64,
    method: HeightMethod,
) -> Result<HeightReport> {
    if let HeightMethod::Percentile(p) = method {
        if !(p > 0.0 && p <= 100.0) {
            return Err(Error::InvalidParam(format!(
                "percentile must be in (0, 100], got {p}"
            )));
        }
    }
    let voxel_plots = extract_plot_points(voxel_map, grid, extension)?;
    let raw_plots = extract_plot_points(raw_map, grid, extension)?;
    let cells: Vec<(usize, usize)> = grid.cells().collect();

    let plots: Vec<PlotHeightRecord> = cells
        .par_iter()
        .enumerate()
        .map(|(idx, &(row, col))| {
            let mut points = voxel_plots[idx].points.clone();
            points.extend_from_slice(&raw_plots[idx].points);
            let n_points = points.len();
            let center = grid.cell_center(row, col);
            let base = PlotHeightRecord {
                row,
                col,
                center,
                n_points,
                height_m: None,
                degenerate: true,
                note: None,
                plane: None,
            };

            let local = RansacParams {
                min_inliers: ransac
                    .min_inliers
                    .max((0.05 * n_points as f64).ceil() as usize),
                seed: ransac.seed ^ idx as u64,
                ..*ransac
            };
            let cloud = PointCloud::from_points(points);
            let fit = match ransac_plane(&cloud, &local) {
                Ok(fit) => fit,
                Err(e) => {
                    return PlotHeightRecord {
                        note: Some(e.to_string()),
                        ..base
                    }
                }
            };
            let outliers: Vec<Point3> = fit
                .outlier_indices
                .iter()
                .map(|&i| cloud.points[i])
                .collect();
            let heights = point_plane_heights(&outliers, &fit.plane);
            match plot_height(&heights, method) {
                Ok(h) => PlotHeightRecord {
                    height_m: Some(h),
                    // Negative estimates mean the outliers sit below the
                    // fitted ground; keep the value but flag the plot.
                    degenerate: h < 0.0,
                    note: (h < 0.0).then(|| "estimate below ground plane".to_string()),
                    plane: Some(fit.plane),
                    ..base
                },
                Err(e) => PlotHeightRecord {
                    note: Some(e.to_string()),
                    plane: Some(fit.plane),
                    ..base
                },
            }
        })
        .collect();

    Ok(HeightReport {
        method: method.tag(),
        plots,
    })
}
