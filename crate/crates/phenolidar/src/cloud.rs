//! Point and pose primitives plus the map-building filters: scan
//! transformation, open-loop merging, voxel down-sampling, crop box and
//! z-threshold filtering.
//!
//! All filters are pure functions that preserve the relative order of the
//! points they keep. World frame is z-up, units are meters.

use std::collections::HashMap;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on |norm - 1| for a pose quaternion to count as unit.
pub const UNIT_QUAT_TOL: f64 = 1e-9;

/// A 3D point (or vector) in meters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ZERO: Point3 = Point3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dot(&self, other: Point3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(&self, other: Point3) -> Point3 {
        Point3 {
            x: self.y * other.z - self.z * other.y,
            y: self.z * other.x - self.x * other.z,
            z: self.x * other.y - self.y * other.x,
        }
    }

    pub fn norm_squared(&self) -> f64 {
        self.dot(*self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn normalized(&self) -> Point3 {
        let n = self.norm();
        Point3 {
            x: self.x / n,
            y: self.y / n,
            z: self.z / n,
        }
    }

    pub fn xy(&self) -> Point2 {
        Point2 {
            x: self.x,
            y: self.y,
        }
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

/// A 2D point in the horizontal (xy) plane, meters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dot(&self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(&self) -> f64 {
        self.dot(*self).sqrt()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

/// An ordered, possibly empty collection of points.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
}

impl PointCloud {
    pub fn new() -> Self {
        PointCloud { points: Vec::new() }
    }

    pub fn from_points(points: Vec<Point3>) -> Self {
        PointCloud { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    /// Axis-aligned bounds of the cloud, `None` when empty.
    pub fn bounds(&self) -> Option<Aabb> {
        let first = *self.points.first()?;
        let mut min = first;
        let mut max = first;
        for p in &self.points[1..] {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            min.z = min.z.min(p.z);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
            max.z = max.z.max(p.z);
        }
        Some(Aabb { min, max })
    }
}

impl FromIterator<Point3> for PointCloud {
    fn from_iter<T: IntoIterator<Item = Point3>>(iter: T) -> Self {
        PointCloud {
            points: iter.into_iter().collect(),
        }
    }
}

/// Unit quaternion (w, x, y, z) representing a rotation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat { w, x, y, z }
    }

    /// Rotation of `angle` radians about the world z axis.
    pub fn from_yaw(angle: f64) -> Self {
        let half = angle * 0.5;
        Quat {
            w: half.cos(),
            x: 0.0,
            y: 0.0,
            z: half.sin(),
        }
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Deviation of the norm from one.
    pub fn unit_deviation(&self) -> f64 {
        (self.norm() - 1.0).abs()
    }

    pub fn conjugate(&self) -> Quat {
        Quat {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Rotate a point: q p q*. Assumes a unit quaternion.
    pub fn rotate(&self, p: Point3) -> Point3 {
        // v' = v + 2 u x (u x v + w v), u = (x, y, z)
        let u = Point3::new(self.x, self.y, self.z);
        let t = u.cross(p) * 2.0;
        p + t * self.w + u.cross(t)
    }
}

/// World-frame placement of a scan: rotation followed by translation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidPose {
    pub translation: Point3,
    pub rotation: Quat,
}

impl RigidPose {
    pub const IDENTITY: RigidPose = RigidPose {
        translation: Point3::ZERO,
        rotation: Quat::IDENTITY,
    };

    pub fn new(translation: Point3, rotation: Quat) -> Self {
        RigidPose {
            translation,
            rotation,
        }
    }

    /// Errors unless the rotation is a unit quaternion within [`UNIT_QUAT_TOL`].
    pub fn validate(&self) -> Result<()> {
        let dev = self.rotation.unit_deviation();
        if dev > UNIT_QUAT_TOL {
            return Err(Error::InvalidPose(dev));
        }
        Ok(())
    }

    pub fn apply(&self, p: Point3) -> Point3 {
        self.rotation.rotate(p) + self.translation
    }

    pub fn inverse(&self) -> RigidPose {
        let inv_rot = self.rotation.conjugate();
        RigidPose {
            translation: -inv_rot.rotate(self.translation),
            rotation: inv_rot,
        }
    }
}

/// Closed axis-aligned box, `min <= max` componentwise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn new(min: Point3, max: Point3) -> Result<Self> {
        if min.x > max.x || min.y > max.y || min.z > max.z {
            return Err(Error::InvalidParam(format!(
                "crop box min {:?} exceeds max {:?}",
                min, max
            )));
        }
        Ok(Aabb { min, max })
    }

    /// Closed-boundary containment: points exactly on a face are inside.
    pub fn contains(&self, p: Point3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }
}

/// Cubic voxel grid parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoxelParams {
    /// Edge length of the cubic cell in meters.
    pub leaf: f64,
}

impl VoxelParams {
    pub fn new(leaf: f64) -> Result<Self> {
        if !(leaf > 0.0) || !leaf.is_finite() {
            return Err(Error::InvalidParam(format!(
                "voxel leaf must be positive, got {leaf}"
            )));
        }
        Ok(VoxelParams { leaf })
    }
}

/// Transform every point into the world frame: `p' = R p + t`.
///
/// Output order matches input order. Errors when the pose rotation is not a
/// unit quaternion.
pub fn transform_cloud(cloud: &PointCloud, pose: &RigidPose) -> Result<PointCloud> {
    pose.validate()?;
    Ok(cloud.iter().map(|&p| pose.apply(p)).collect())
}

/// Build the open-loop map: transform each scan by its pose and concatenate
/// in input order. No scan registration is performed.
pub fn merge_map(scans: &[(PointCloud, RigidPose)]) -> Result<PointCloud> {
    let total: usize = scans.iter().map(|(c, _)| c.len()).sum();
    let mut out = Vec::with_capacity(total);
    for (cloud, pose) in scans {
        pose.validate()?;
        out.extend(cloud.iter().map(|&p| pose.apply(p)));
    }
    Ok(PointCloud::from_points(out))
}

fn voxel_key(p: Point3, leaf: f64) -> (i64, i64, i64) {
    (
        (p.x / leaf).floor() as i64,
        (p.y / leaf).floor() as i64,
        (p.z / leaf).floor() as i64,
    )
}

/// Down-sample by averaging points within each cubic grid cell.
///
/// Cells are anchored at the world origin (cell index = floor(coord / leaf)
/// per axis). The output holds one point per occupied cell — the centroid of
/// that cell's points — ordered by the first occurrence of each cell in the
/// input.
pub fn voxel_downsample(cloud: &PointCloud, params: VoxelParams) -> Result<PointCloud> {
    let leaf = VoxelParams::new(params.leaf)?.leaf;
    let mut slot: HashMap<(i64, i64, i64), usize> = HashMap::new();
    let mut acc: Vec<(Point3, usize)> = Vec::new();
    for &p in cloud.iter() {
        let key = voxel_key(p, leaf);
        match slot.get(&key) {
            Some(&i) => {
                acc[i].0 = acc[i].0 + p;
                acc[i].1 += 1;
            }
            None => {
                slot.insert(key, acc.len());
                acc.push((p, 1));
            }
        }
    }
    Ok(acc
        .into_iter()
        .map(|(sum, n)| sum * (1.0 / n as f64))
        .collect())
}

/// Keep exactly the points inside the closed box, input order preserved.
pub fn crop_box(cloud: &PointCloud, bounds: &Aabb) -> PointCloud {
    cloud
        .iter()
        .filter(|p| bounds.contains(**p))
        .copied()
        .collect()
}

/// Keep points with `z >= z_min`, input order preserved.
pub fn z_filter(cloud: &PointCloud, z_min: f64) -> PointCloud {
    cloud.iter().filter(|p| p.z >= z_min).copied().collect()
}
