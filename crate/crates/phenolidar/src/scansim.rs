//! Simulated spinning LiDAR flown over a generated farm.
//!
//! Rays fan out from the sensor in a cone: per channel a fixed elevation off
//! nadir (within the vertical field of view), per step an azimuth about the
//! sensor's down axis. Each plant canopy is a small composite of ellipsoid
//! lobes around a stem; a beam crossing a canopy surface passes through with
//! the plant's porosity (foliage gaps) and otherwise returns, so canopies
//! yield volume returns and partially expose the ground beneath, like real
//! crops. Terrain triangles are opaque. Hits are range-gated, range noise is
//! Gaussian, and points come back in the sensor frame. Everything is
//! seed-deterministic; per-scan streams are `seed xor pose index`, so
//! flights can be simulated in parallel.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{Point2, Point3, PointCloud, Quat, RigidPose};
use crate::error::{Error, Result};
use crate::farmgen::{PlantInstance, TerrainMesh};

/// Spinning-LiDAR model. `vertical_fov` is the half-angle of the cone about
/// nadir that the channels span.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SensorModel {
    pub channels: usize,
    pub vertical_fov: f64,
    pub azimuth_step: f64,
    pub max_range: f64,
    pub range_noise_sigma: f64,
    pub seed: u64,
}

impl Default for SensorModel {
    fn default() -> Self {
        SensorModel {
            channels: 16,
            vertical_fov: 15f64.to_radians(),
            azimuth_step: 0.5f64.to_radians(),
            max_range: 100.0,
            range_noise_sigma: 0.03,
            seed: 0,
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::InvalidParam(
                "sensor needs at least 1 channel".into(),
            ));
        }
        if !(self.azimuth_step > 0.0) {
            return Err(Error::InvalidParam("azimuth_step must be positive".into()));
        }
        if !(self.max_range > 0.0) {
            return Err(Error::InvalidParam("max_range must be positive".into()));
        }
        if self.range_noise_sigma < 0.0 {
            return Err(Error::InvalidParam("range noise sigma must be >= 0".into()));
        }
        if self.vertical_fov < 0.0 {
            return Err(Error::InvalidParam("vertical_fov must be >= 0".into()));
        }
        Ok(())
    }

    /// Channel elevations off nadir, evenly spread across the field of view.
    pub fn elevations(&self) -> Vec<f64> {
        if self.channels == 1 {
            return vec![0.0];
        }
        let step = 2.0 * self.vertical_fov / (self.channels - 1) as f64;
        (0..self.channels)
            .map(|i| -self.vertical_fov + i as f64 * step)
            .collect()
    }

    pub fn azimuth_count(&self) -> usize {
        ((TAU / self.azimuth_step).round() as usize).max(1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub pose: RigidPose,
}

/// Timestamped flight path; timestamps strictly increase.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScanTrajectory {
    pub samples: Vec<TrajectorySample>,
}

impl ScanTrajectory {
    pub fn validate(&self) -> Result<()> {
        for w in self.samples.windows(2) {
            if w[1].t <= w[0].t {
                return Err(Error::InvalidParam(format!(
                    "trajectory timestamps must strictly increase ({} then {})",
                    w[0].t, w[1].t
                )));
            }
        }
        for s in &self.samples {
            s.pose.validate()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Boustrophedon coverage of the square `[0, farm_size]^2` at constant
/// altitude: lines along x spaced `line_spacing` apart in y, poses every
/// `sample_spacing` along each line, heading aligned with travel.
pub fn lawnmower_trajectory(
    farm_size: f64,
    altitude: f64,
    line_spacing: f64,
    sample_spacing: f64,
) -> Result<ScanTrajectory> {
    for (name, v) in [
        ("farm_size", farm_size),
        ("altitude", altitude),
        ("line_spacing", line_spacing),
        ("sample_spacing", sample_spacing),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidParam(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    let ticks = |len: f64, step: f64| -> Vec<f64> {
        let n = (len / step).ceil() as usize;
        let mut out: Vec<f64> = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let v = (i as f64 * step).min(len);
            if out.last().is_none_or(|&prev| v - prev > 1e-9) {
                out.push(v);
            }
        }
        out
    };

    let mut samples = Vec::new();
    let mut t = 0.0;
    let xs = ticks(farm_size, sample_spacing);
    for (li, &y) in ticks(farm_size, line_spacing).iter().enumerate() {
        let reverse = li % 2 == 1;
        let yaw = if reverse { std::f64::consts::PI } else { 0.0 };
        let line: Box<dyn Iterator<Item = &f64>> = if reverse {
            Box::new(xs.iter().rev())
        } else {
            Box::new(xs.iter())
        };
        for &x in line {
            samples.push(TrajectorySample {
                t,
                pose: RigidPose::new(Point3::new(x, y, altitude), Quat::from_yaw(yaw)),
            });
            t += 1.0;
        }
    }
    Ok(ScanTrajectory { samples })
}

/// Add zero-mean Gaussian noise to every pose translation (per axis), for
/// studying how imperfect positioning degrades the open-loop map.
pub fn perturb_trajectory(traj: &ScanTrajectory, sigma: f64, seed: u64) -> ScanTrajectory {
    if sigma <= 0.0 {
        return traj.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma > 0");
    ScanTrajectory {
        samples: traj
            .samples
            .iter()
            .map(|s| TrajectorySample {
                t: s.t,
                pose: RigidPose::new(
                    s.pose.translation
                        + Point3::new(
                            normal.sample(&mut rng),
                            normal.sample(&mut rng),
                            normal.sample(&mut rng),
                        ),
                    s.pose.rotation,
                ),
            })
            .collect(),
    }
}

#[derive(Clone, Copy, Debug)]
struct BBox2 {
    min: Point2,
    max: Point2,
}

/// Uniform 2D grid over xy used to cull ray-intersection candidates.
#[derive(Clone, Debug)]
struct XyGrid {
    min: Point2,
    cell: f64,
    nx: usize,
    ny: usize,
    bins: Vec<Vec<u32>>,
}

impl XyGrid {
    fn build(bounds: BBox2, cell: f64, items: &[BBox2]) -> XyGrid {
        let span_x = (bounds.max.x - bounds.min.x).max(cell);
        let span_y = (bounds.max.y - bounds.min.y).max(cell);
        let nx = ((span_x / cell).ceil() as usize + 1).min(4096);
        let ny = ((span_y / cell).ceil() as usize + 1).min(4096);
        let mut grid = XyGrid {
            min: bounds.min,
            cell,
            nx,
            ny,
            bins: vec![Vec::new(); nx * ny],
        };
        for (id, b) in items.iter().enumerate() {
            let (ix0, iy0) = grid.cell_of(b.min);
            let (ix1, iy1) = grid.cell_of(b.max);
            for iy in iy0..=iy1 {
                for ix in ix0..=ix1 {
                    grid.bins[iy * grid.nx + ix].push(id as u32);
                }
            }
        }
        grid
    }

    fn cell_of(&self, p: Point2) -> (usize, usize) {
        let ix = ((p.x - self.min.x) / self.cell).floor();
        let iy = ((p.y - self.min.y) / self.cell).floor();
        (
            (ix.max(0.0) as usize).min(self.nx - 1),
            (iy.max(0.0) as usize).min(self.ny - 1),
        )
    }

    fn size(&self) -> Point2 {
        Point2::new(self.nx as f64 * self.cell, self.ny as f64 * self.cell)
    }

    /// Walk the cells under the 2D ray `origin + s * dir` (`dir` unit, `s`
    /// in meters) up to the limit returned by the visitor. The visitor gets
    /// each bin with the entry parameter and returns the new limit (shrink
    /// it as better hits appear).
    fn visit_ray<F: FnMut(&[u32], f64) -> f64>(
        &self,
        origin: Point2,
        dir: Point2,
        mut s_lim: f64,
        mut visit: F,
    ) {
        // Clip to the grid rectangle (slab method).
        let size = self.size();
        let mut s0 = 0.0f64;
        let mut s1 = s_lim;
        for (o, d, lo, hi) in [
            (origin.x, dir.x, self.min.x, self.min.x + size.x),
            (origin.y, dir.y, self.min.y, self.min.y + size.y),
        ] {
            if d.abs() < 1e-15 {
                if o < lo || o > hi {
                    return;
                }
            } else {
                let (a, b) = ((lo - o) / d, (hi - o) / d);
                let (a, b) = if a <= b { (a, b) } else { (b, a) };
                s0 = s0.max(a);
                s1 = s1.min(b);
            }
        }
        if s0 > s1 {
            return;
        }

        let start = origin + dir * (s0 + 1e-12);
        let (mut ix, mut iy) = self.cell_of(start);
        let step_x: isize = if dir.x > 0.0 { 1 } else { -1 };
        let step_y: isize = if dir.y > 0.0 { 1 } else { -1 };
        let next_boundary = |i: usize, step: isize, min: f64| -> f64 {
            if step > 0 {
                min + (i as f64 + 1.0) * self.cell
            } else {
                min + i as f64 * self.cell
            }
        };
        let mut t_max_x = if dir.x.abs() < 1e-15 {
            f64::INFINITY
        } else {
            (next_boundary(ix, step_x, self.min.x) - origin.x) / dir.x
        };
        let mut t_max_y = if dir.y.abs() < 1e-15 {
            f64::INFINITY
        } else {
            (next_boundary(iy, step_y, self.min.y) - origin.y) / dir.y
        };
        let t_delta_x = if dir.x.abs() < 1e-15 {
            f64::INFINITY
        } else {
            self.cell / dir.x.abs()
        };
        let t_delta_y = if dir.y.abs() < 1e-15 {
            f64::INFINITY
        } else {
            self.cell / dir.y.abs()
        };

        let mut entry = s0;
        loop {
            if entry > s_lim.min(s1) {
                return;
            }
            s_lim = visit(&self.bins[iy * self.nx + ix], entry);
            if t_max_x < t_max_y {
                entry = t_max_x;
                t_max_x += t_delta_x;
                let nx = ix as isize + step_x;
                if nx < 0 || nx >= self.nx as isize {
                    return;
                }
                ix = nx as usize;
            } else {
                entry = t_max_y;
                t_max_y += t_delta_y;
                let ny = iy as isize + step_y;
                if ny < 0 || ny >= self.ny as isize {
                    return;
                }
                iy = ny as usize;
            }
        }
    }
}

/// One ellipsoid lobe of a plant canopy (axis-aligned vertical semi-axes).
#[derive(Clone, Copy, Debug)]
pub struct CanopyBlob {
    pub center: Point3,
    pub semi_xy: f64,
    pub semi_z: f64,
}

/// The canopy of a plant as a fixed composite of ellipsoid lobes scaled by
/// the instance's radius/height and rotated by its yaw: a wide, flat-topped
/// crown whose apex is the plant's true height, two rings of foliage lobes,
/// and a thin stem. Horizontal extent never exceeds `canopy_radius`.
pub fn canopy_blobs(plant: &PlantInstance) -> Vec<CanopyBlob> {
    let r = plant.canopy_radius;
    let h = plant.canopy_height;
    let b = plant.base;
    let at = |dx: f64, dy: f64, z: f64| Point3::new(b.x + dx, b.y + dy, b.z + z);
    let mut blobs = Vec::with_capacity(10);
    blobs.push(CanopyBlob {
        center: at(0.0, 0.0, 0.94 * h),
        semi_xy: 0.55 * r,
        semi_z: 0.06 * h,
    });
    for i in 0..4 {
        let a = plant.yaw + (i as f64 + 0.5) * std::f64::consts::FRAC_PI_2;
        blobs.push(CanopyBlob {
            center: at(0.45 * r * a.cos(), 0.45 * r * a.sin(), 0.64 * h),
            semi_xy: 0.45 * r,
            semi_z: 0.15 * h,
        });
    }
    for i in 0..4 {
        let a = plant.yaw + i as f64 * std::f64::consts::FRAC_PI_2;
        blobs.push(CanopyBlob {
            center: at(0.50 * r * a.cos(), 0.50 * r * a.sin(), 0.38 * h),
            semi_xy: 0.50 * r,
            semi_z: 0.17 * h,
        });
    }
    blobs.push(CanopyBlob {
        center: at(0.0, 0.0, 0.40 * h),
        semi_xy: 0.08 * r,
        semi_z: 0.40 * h,
    });
    blobs
}

/// Whether a point lies on some canopy surface of the plant, within `tol`
/// meters (approximately, via the normalized ellipsoid equation).
pub fn on_canopy_surface(plant: &PlantInstance, p: Point3, tol: f64) -> bool {
    canopy_blobs(plant).iter().any(|blob| {
        let d = p - blob.center;
        let f = (d.x / blob.semi_xy).powi(2)
            + (d.y / blob.semi_xy).powi(2)
            + (d.z / blob.semi_z).powi(2);
        (f.sqrt() - 1.0).abs() * blob.semi_xy.min(blob.semi_z) <= tol
    })
}

/// The simulated world: terrain mesh plus plant canopies, with prebuilt
/// culling indices.
#[derive(Clone, Debug)]
pub struct Scene {
    pub terrain: TerrainMesh,
    pub plants: Vec<PlantInstance>,
    blobs: Vec<CanopyBlob>,
    /// Parallel to `blobs`: owning plant index.
    blob_plant: Vec<u32>,
    tri_grid: XyGrid,
    blob_grid: XyGrid,
}

const GRID_CELL: f64 = 1.0;

impl Scene {
    pub fn new(terrain: TerrainMesh, plants: Vec<PlantInstance>) -> Scene {
        let mut blobs = Vec::with_capacity(plants.len() * 10);
        let mut blob_plant = Vec::with_capacity(plants.len() * 10);
        for (pi, plant) in plants.iter().enumerate() {
            for blob in canopy_blobs(plant) {
                blobs.push(blob);
                blob_plant.push(pi as u32);
            }
        }

        let mut bounds = BBox2 {
            min: Point2::new(f64::INFINITY, f64::INFINITY),
            max: Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        };
        let mut widen = |p: Point2| {
            bounds.min.x = bounds.min.x.min(p.x);
            bounds.min.y = bounds.min.y.min(p.y);
            bounds.max.x = bounds.max.x.max(p.x);
            bounds.max.y = bounds.max.y.max(p.y);
        };
        for v in &terrain.vertices {
            widen(v.xy());
        }
        for b in &blobs {
            widen(Point2::new(b.center.x - b.semi_xy, b.center.y - b.semi_xy));
            widen(Point2::new(b.center.x + b.semi_xy, b.center.y + b.semi_xy));
        }
        if !bounds.min.x.is_finite() {
            bounds = BBox2 {
                min: Point2::new(0.0, 0.0),
                max: Point2::new(1.0, 1.0),
            };
        }

        let tri_boxes: Vec<BBox2> = terrain
            .triangles
            .iter()
            .map(|t| {
                let (a, b, c) = (
                    terrain.vertices[t[0]],
                    terrain.vertices[t[1]],
                    terrain.vertices[t[2]],
                );
                BBox2 {
                    min: Point2::new(a.x.min(b.x).min(c.x), a.y.min(b.y).min(c.y)),
                    max: Point2::new(a.x.max(b.x).max(c.x), a.y.max(b.y).max(c.y)),
                }
            })
            .collect();
        let blob_boxes: Vec<BBox2> = blobs
            .iter()
            .map(|b| BBox2 {
                min: Point2::new(b.center.x - b.semi_xy, b.center.y - b.semi_xy),
                max: Point2::new(b.center.x + b.semi_xy, b.center.y + b.semi_xy),
            })
            .collect();
        let tri_grid = XyGrid::build(bounds, GRID_CELL, &tri_boxes);
        let blob_grid = XyGrid::build(bounds, GRID_CELL, &blob_boxes);
        Scene {
            terrain,
            plants,
            blobs,
            blob_plant,
            tri_grid,
            blob_grid,
        }
    }

    fn nearest_terrain(&self, origin: Point3, dir: Point3, max_range: f64, hlen: f64) -> f64 {
        let mut best = f64::INFINITY;
        let test_bin = |bin: &[u32], best: &mut f64| {
            for &ti in bin {
                let t = self.terrain.triangles[ti as usize];
                if let Some(s) = ray_triangle(
                    origin,
                    dir,
                    self.terrain.vertices[t[0]],
                    self.terrain.vertices[t[1]],
                    self.terrain.vertices[t[2]],
                ) {
                    if s < *best {
                        *best = s;
                    }
                }
            }
        };
        if hlen < 1e-12 {
            let cell = self.tri_grid.cell_of(origin.xy());
            let bin = &self.tri_grid.bins[cell.1 * self.tri_grid.nx + cell.0];
            test_bin(bin, &mut best);
        } else {
            let o2 = origin.xy();
            let d2 = Point2::new(dir.x / hlen, dir.y / hlen);
            self.tri_grid.visit_ray(o2, d2, max_range * hlen, |bin, _| {
                test_bin(bin, &mut best);
                best.min(max_range) * hlen
            });
        }
        best
    }

    /// Range of the nearest return along the ray, if any. Terrain is
    /// opaque; canopy surfaces pass the beam with the plant's porosity
    /// (one draw per surface crossed, front to back).
    fn cast(
        &self,
        origin: Point3,
        dir: Point3,
        max_range: f64,
        rng: &mut ChaCha8Rng,
        hits: &mut Vec<(f64, u32)>,
    ) -> Option<f64> {
        let hlen = (dir.x * dir.x + dir.y * dir.y).sqrt();
        let t_terrain = self.nearest_terrain(origin, dir, max_range, hlen);
        let bound = t_terrain.min(max_range);

        hits.clear();
        let test_bin = |bin: &[u32], hits: &mut Vec<(f64, u32)>| {
            for &bi in bin {
                if let Some(s) = ray_ellipsoid(origin, dir, &self.blobs[bi as usize]) {
                    if s <= bound {
                        hits.push((s, bi));
                    }
                }
            }
        };
        if hlen < 1e-12 {
            let cell = self.blob_grid.cell_of(origin.xy());
            let bin = self.blob_grid.bins[cell.1 * self.blob_grid.nx + cell.0].as_slice();
            test_bin(bin, hits);
        } else {
            let o2 = origin.xy();
            let d2 = Point2::new(dir.x / hlen, dir.y / hlen);
            self.blob_grid.visit_ray(o2, d2, bound * hlen, |bin, _| {
                test_bin(bin, hits);
                bound * hlen
            });
        }
        // Blobs spanning several grid cells get tested more than once.
        hits.sort_by(|a, b| a.partial_cmp(b).unwrap());
        hits.dedup_by_key(|h| h.1);

        for &(t, bi) in hits.iter() {
            let porosity = self.plants[self.blob_plant[bi as usize] as usize].porosity;
            if porosity <= 0.0 || rng.random::<f64>() >= porosity {
                return Some(t);
            }
        }
        (t_terrain <= max_range).then_some(t_terrain)
    }
}

/// Moeller-Trumbore ray-triangle intersection; returns the ray parameter.
fn ray_triangle(origin: Point3, dir: Point3, a: Point3, b: Point3, c: Point3) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let p = dir.cross(e2);
    let det = e1.dot(p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv_det = 1.0 / det;
    let s = origin - a;
    let u = s.dot(p) * inv_det;
    // Slightly inclusive bounds so rays through shared edges cannot slip
    // between adjacent triangles.
    let eps = 1e-9;
    if !(-eps..=1.0 + eps).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = dir.dot(q) * inv_det;
    if v < -eps || u + v > 1.0 + eps {
        return None;
    }
    let t = e2.dot(q) * inv_det;
    (t > 1e-9).then_some(t)
}

/// Ray against one canopy ellipsoid; returns the entry parameter.
fn ray_ellipsoid(origin: Point3, dir: Point3, blob: &CanopyBlob) -> Option<f64> {
    let inv = Point3::new(1.0 / blob.semi_xy, 1.0 / blob.semi_xy, 1.0 / blob.semi_z);
    let o = origin - blob.center;
    let os = Point3::new(o.x * inv.x, o.y * inv.y, o.z * inv.z);
    let ds = Point3::new(dir.x * inv.x, dir.y * inv.y, dir.z * inv.z);
    let a = ds.dot(ds);
    let b = 2.0 * os.dot(ds);
    let c = os.dot(os) - 1.0;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t0 = (-b - sq) / (2.0 * a);
    if t0 > 1e-9 {
        return Some(t0);
    }
    let t1 = (-b + sq) / (2.0 * a);
    (t1 > 1e-9).then_some(t1)
}

/// Simulate one scan from a pose, returning hit points in the sensor frame.
///
/// Ray order is fixed: channel-major, azimuth within channel. Porosity
/// pass-through draws and Gaussian range noise (z-score clamped to +-5)
/// come from one per-scan stream seeded by the sensor seed.
pub fn simulate_scan(pose: &RigidPose, sensor: &SensorModel, scene: &Scene) -> Result<PointCloud> {
    sensor.validate()?;
    pose.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sensor.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let origin = pose.translation;
    let n_az = sensor.azimuth_count();
    let mut points = Vec::new();
    let mut hits: Vec<(f64, u32)> = Vec::new();
    for e in sensor.elevations() {
        let (se, ce) = e.sin_cos();
        for ai in 0..n_az {
            let a = ai as f64 * sensor.azimuth_step;
            let (sa, ca) = a.sin_cos();
            let dir_s = Point3::new(se * ca, se * sa, -ce);
            let dir_w = pose.rotation.rotate(dir_s);
            if let Some(range) = scene.cast(origin, dir_w, sensor.max_range, &mut rng, &mut hits) {
                let noisy = if sensor.range_noise_sigma > 0.0 {
                    let z: f64 = normal.sample(&mut rng);
                    range + sensor.range_noise_sigma * z.clamp(-5.0, 5.0)
                } else {
                    range
                };
                points.push(dir_s * noisy);
            }
        }
    }
    Ok(PointCloud::from_points(points))
}

/// One scan per trajectory pose. Per-scan seed is `sensor.seed xor index`,
/// so the result is identical however the scans are scheduled.
pub fn simulate_flight(
    trajectory: &ScanTrajectory,
    sensor: &SensorModel,
    scene: &Scene,
) -> Result<Vec<(PointCloud, RigidPose)>> {
    trajectory.validate()?;
    sensor.validate()?;
    trajectory
        .samples
        .par_iter()
        .enumerate()
        .map(|(idx, sample)| {
            let per_scan = SensorModel {
                seed: sensor.seed ^ idx as u64,
                ..*sensor
            };
            simulate_scan(&sample.pose, &per_scan, scene).map(|cloud| (cloud, sample.pose))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::transform_cloud;
    use crate::farmgen::{gen_plots, gen_terrain, FarmSpec};
    use approx::assert_abs_diff_eq;

    fn flat_square(size: f64) -> TerrainMesh {
        TerrainMesh {
            vertices: vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(size, 0.0, 0.0),
                Point3::new(size, size, 0.0),
                Point3::new(0.0, size, 0.0),
            ],
            triangles: vec![[0, 1, 2], [0, 2, 3]],
        }
    }

    fn nadir_sensor() -> SensorModel {
        SensorModel {
            channels: 1,
            vertical_fov: 0.0,
            azimuth_step: TAU,
            range_noise_sigma: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn nadir_ray_over_flat_ground() {
        let scene = Scene::new(flat_square(40.0), Vec::new());
        let pose = RigidPose::new(Point3::new(20.0, 20.0, 10.0), Quat::IDENTITY);
        let scan = simulate_scan(&pose, &nadir_sensor(), &scene).unwrap();
        assert_eq!(scan.len(), 1);
        let p = scan.points[0];
        assert_abs_diff_eq!(p.x, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.y, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.z, -10.0, epsilon = 1e-9);
    }

    #[test]
    fn range_gate_drops_far_hits() {
        let scene = Scene::new(flat_square(40.0), Vec::new());
        let pose = RigidPose::new(Point3::new(20.0, 20.0, 10.0), Quat::IDENTITY);
        let sensor = SensorModel {
            max_range: 5.0,
            ..nadir_sensor()
        };
        let scan = simulate_scan(&pose, &sensor, &scene).unwrap();
        assert!(scan.is_empty());
    }

    #[test]
    fn slanted_ray_range_matches_trigonometry() {
        let scene = Scene::new(flat_square(40.0), Vec::new());
        let pose = RigidPose::new(Point3::new(20.0, 20.0, 10.0), Quat::IDENTITY);
        let sensor = SensorModel {
            channels: 2,
            vertical_fov: 45f64.to_radians(),
            azimuth_step: TAU,
            range_noise_sigma: 0.0,
            ..Default::default()
        };
        let scan = simulate_scan(&pose, &sensor, &scene).unwrap();
        assert_eq!(scan.len(), 2);
        for p in scan.iter() {
            assert_abs_diff_eq!(p.norm(), 10.0 * 2f64.sqrt(), epsilon = 1e-6);
        }
    }

    fn opaque_plant(x: f64, y: f64) -> PlantInstance {
        PlantInstance {
            base: Point3::new(x, y, 0.0),
            scale: 1.0,
            yaw: 0.0,
            canopy_radius: 0.3,
            canopy_height: 0.8,
            porosity: 0.0,
            true_height: 0.8,
        }
    }

    #[test]
    fn plant_occludes_ground_beneath_sensor() {
        let scene = Scene::new(flat_square(40.0), vec![opaque_plant(20.0, 20.0)]);
        let pose = RigidPose::new(Point3::new(20.0, 20.0, 10.0), Quat::IDENTITY);
        let scan = simulate_scan(&pose, &nadir_sensor(), &scene).unwrap();
        assert_eq!(scan.len(), 1);
        // The crown apex is the plant's true height: range 9.2, not the
        // ground's 10.0.
        assert_abs_diff_eq!(scan.points[0].z, -9.2, epsilon = 1e-9);
    }

    #[test]
    fn porous_plant_sometimes_exposes_the_ground() {
        let mut porous = opaque_plant(20.0, 20.0);
        porous.porosity = 0.5;
        let scene = Scene::new(flat_square(40.0), vec![porous]);
        // Dense scan straight down over the plant.
        let sensor = SensorModel {
            channels: 4,
            vertical_fov: 0.5f64.to_radians(),
            azimuth_step: 1f64.to_radians(),
            range_noise_sigma: 0.0,
            seed: 9,
            ..Default::default()
        };
        let pose = RigidPose::new(Point3::new(20.0, 20.0, 10.0), Quat::IDENTITY);
        let scan = simulate_scan(&pose, &sensor, &scene).unwrap();
        let ground_hits = scan.iter().filter(|p| p.z < -9.99).count();
        let canopy_hits = scan.iter().filter(|p| p.z >= -9.99).count();
        assert!(ground_hits > 0, "no beam passed the porous canopy");
        assert!(canopy_hits > 0, "no beam returned from the porous canopy");
    }

    #[test]
    fn pose_noise_perturbs_translations_only() {
        let traj = lawnmower_trajectory(10.0, 15.0, 5.0, 5.0).unwrap();
        let noisy = perturb_trajectory(&traj, 0.05, 3);
        assert_eq!(perturb_trajectory(&traj, 0.05, 3), noisy);
        assert_eq!(noisy.len(), traj.len());
        let mut moved = 0;
        for (a, b) in traj.samples.iter().zip(noisy.samples.iter()) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.pose.rotation, b.pose.rotation);
            let d = (a.pose.translation - b.pose.translation).norm();
            assert!(d < 0.05 * 6.0);
            if d > 0.0 {
                moved += 1;
            }
        }
        assert_eq!(moved, traj.len());
        assert_eq!(perturb_trajectory(&traj, 0.0, 3), traj);
    }

    #[test]
    fn noiseless_points_lie_on_scene_surfaces() {
        let spec = FarmSpec {
            farm_size: 20.0,
            n_vertices: 10,
            height_range: 0.5,
            rows: 2,
            plots_per_row: 2,
            plants_per_plot: 15,
            seed: 9,
            ..Default::default()
        };
        let mesh = gen_terrain(&spec).unwrap();
        let (plants, _) = gen_plots(&spec, &mesh).unwrap();
        let scene = Scene::new(mesh.clone(), plants.clone());
        let pose = RigidPose::new(Point3::new(10.0, 10.0, 12.0), Quat::from_yaw(0.4));
        let sensor = SensorModel {
            range_noise_sigma: 0.0,
            azimuth_step: 2f64.to_radians(),
            ..Default::default()
        };
        let scan = simulate_scan(&pose, &sensor, &scene).unwrap();
        assert!(scan.len() > 500, "scan too sparse: {}", scan.len());
        let world = transform_cloud(&scan, &pose).unwrap();
        for &p in world.iter() {
            let on_terrain = mesh
                .height_at(p.xy())
                .map(|h| (p.z - h).abs() <= 1e-6)
                .unwrap_or(false);
            let on_plant = plants.iter().any(|pl| on_canopy_surface(pl, p, 1e-6));
            assert!(on_terrain || on_plant, "stray point {p:?}");
        }
    }

    #[test]
    fn range_noise_statistics_match_sigma() {
        let scene = Scene::new(flat_square(60.0), Vec::new());
        let pose = RigidPose::new(Point3::new(30.0, 30.0, 15.0), Quat::IDENTITY);
        let sensor = SensorModel {
            seed: 33,
            ..Default::default()
        };
        let scan = simulate_scan(&pose, &sensor, &scene).unwrap();
        assert!(scan.len() >= 10_000);
        // True range for elevation e off nadir over flat ground: alt / cos(e).
        let errors: Vec<f64> = {
            let mut out = Vec::with_capacity(scan.len());
            let elevations = sensor.elevations();
            let n_az = sensor.azimuth_count();
            let mut i = 0;
            for e in &elevations {
                let truth = 15.0 / e.cos();
                for _ in 0..n_az {
                    // every ray hits on this scene
                    out.push(scan.points[i].norm() - truth);
                    i += 1;
                }
            }
            assert_eq!(i, scan.len());
            out
        };
        let mean = errors.iter().sum::<f64>() / errors.len() as f64;
        let var =
            errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (errors.len() - 1) as f64;
        let sd = var.sqrt();
        assert!((sd - 0.03).abs() <= 0.003, "sd {sd} not within 10% of 0.03");
        // Hard bound from the clamped z-score.
        for p in scan.iter() {
            assert!(p.norm() <= sensor.max_range + 5.0 * sensor.range_noise_sigma);
        }
    }

    #[test]
    fn lawnmower_line_and_sample_counts() {
        let traj = lawnmower_trajectory(10.0, 15.0, 5.0, 100.0).unwrap();
        // 3 lines at y = 0, 5, 10 with 2 endpoint poses each.
        assert_eq!(traj.len(), 6);
        let ys: Vec<f64> = traj.samples.iter().map(|s| s.pose.translation.y).collect();
        assert_eq!(ys, vec![0.0, 0.0, 5.0, 5.0, 10.0, 10.0]);
        assert!(traj.samples.iter().all(|s| s.pose.translation.z == 15.0));
        traj.validate().unwrap();
        // Boustrophedon: second line runs backwards.
        assert_eq!(traj.samples[2].pose.translation.x, 10.0);
        assert_eq!(traj.samples[3].pose.translation.x, 0.0);
    }

    #[test]
    fn flight_matches_single_scans_and_is_deterministic() {
        let scene = Scene::new(flat_square(20.0), Vec::new());
        let sensor = SensorModel {
            azimuth_step: 10f64.to_radians(),
            seed: 5,
            ..Default::default()
        };
        let traj = lawnmower_trajectory(20.0, 12.0, 10.0, 10.0).unwrap();
        let flight = simulate_flight(&traj, &sensor, &scene).unwrap();
        assert_eq!(flight.len(), traj.len());
        // Scan 0 stream is seed xor 0 = seed.
        let first = simulate_scan(&traj.samples[0].pose, &sensor, &scene).unwrap();
        assert_eq!(flight[0].0, first);
        let again = simulate_flight(&traj, &sensor, &scene).unwrap();
        for (a, b) in flight.iter().zip(again.iter()) {
            assert_eq!(a.0, b.0);
        }
    }

    #[test]
    fn empty_trajectory_empty_flight() {
        let scene = Scene::new(flat_square(5.0), Vec::new());
        let flight =
            simulate_flight(&ScanTrajectory::default(), &SensorModel::default(), &scene).unwrap();
        assert!(flight.is_empty());
    }

    #[test]
    fn merged_flight_spans_terrain_and_plants() {
        let spec = FarmSpec {
            farm_size: 20.0,
            n_vertices: 8,
            height_range: 1.0,
            rows: 1,
            plots_per_row: 2,
            plants_per_plot: 30,
            seed: 3,
            ..Default::default()
        };
        let mesh = gen_terrain(&spec).unwrap();
        let (plants, truth) = gen_plots(&spec, &mesh).unwrap();
        let scene = Scene::new(mesh.clone(), plants);
        let sensor = SensorModel {
            range_noise_sigma: 0.0,
            azimuth_step: 1f64.to_radians(),
            seed: 1,
            ..Default::default()
        };
        let traj = lawnmower_trajectory(20.0, 12.0, 5.0, 2.0).unwrap();
        let flight = simulate_flight(&traj, &sensor, &scene).unwrap();
        let map = crate::cloud::merge_map(&flight).unwrap();
        let bounds = map.bounds().unwrap();
        let terrain_lo = mesh
            .vertices
            .iter()
            .map(|v| v.z)
            .fold(f64::INFINITY, f64::min);
        let terrain_hi = mesh
            .vertices
            .iter()
            .map(|v| v.z)
            .fold(f64::NEG_INFINITY, f64::max);
        let top = truth
            .plots
            .iter()
            .map(|p| p.true_height)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(bounds.min.z >= terrain_lo - 1e-6);
        assert!(bounds.max.z <= terrain_hi + top + 1e-6);
        // Some returns above ground prove the plants were seen.
        assert!(bounds.max.z > 0.3);
    }
}
