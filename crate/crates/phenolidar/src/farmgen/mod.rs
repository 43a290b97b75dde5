//! Procedural phenotyping-farm generation: a random triangulated terrain
//! plus gridded plots of randomized plant instances, with exact ground
//! truth for evaluating the estimation pipeline.

pub mod delaunay;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::{Point2, Point3};
use crate::error::{Error, Result};
use crate::plotdetect::{OrientedBox, PlotGrid};

/// Everything that defines a generated farm. Rows run along x (a row holds
/// `plots_per_row` plots side by side); plots span `plot_width` along x and
/// `plot_length` along y. The grid is centered in the square farm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FarmSpec {
    /// Side of the square farm in meters.
    pub farm_size: f64,
    /// Random terrain vertices scattered in the square (the 4 corners are
    /// always added on top of these).
    pub n_vertices: usize,
    /// Vertex heights are drawn uniformly from [-height_range, +height_range].
    pub height_range: f64,
    pub plot_width: f64,
    pub plot_length: f64,
    /// Gap between neighboring plots along x / y.
    pub gap_x: f64,
    pub gap_y: f64,
    pub plants_per_plot: usize,
    pub scale_min: f64,
    pub scale_max: f64,
    pub rows: usize,
    pub plots_per_row: usize,
    /// Per-row start offset along x; empty means no offsets.
    pub row_offsets: Vec<f64>,
    /// Canopy proxy: base radius and nominal height of an unscaled plant.
    pub canopy_radius: f64,
    pub canopy_height: f64,
    /// Probability that a beam passes through a canopy surface instead of
    /// returning (foliage gaps). 0 makes canopies opaque.
    pub canopy_porosity: f64,
    pub seed: u64,
}

impl Default for FarmSpec {
    fn default() -> Self {
        FarmSpec {
            farm_size: 40.0,
            n_vertices: 12,
            height_range: 0.0,
            plot_width: 1.5,
            plot_length: 3.0,
            gap_x: 0.75,
            gap_y: 1.5,
            plants_per_plot: 90,
            scale_min: 0.8,
            scale_max: 1.2,
            rows: 3,
            plots_per_row: 10,
            row_offsets: Vec::new(),
            canopy_radius: 0.1,
            canopy_height: 0.8,
            canopy_porosity: 0.35,
            seed: 42,
        }
    }
}

impl FarmSpec {
    pub fn pitch_x(&self) -> f64 {
        self.plot_width + self.gap_x
    }

    pub fn pitch_y(&self) -> f64 {
        self.plot_length + self.gap_y
    }

    fn offsets(&self) -> Vec<f64> {
        if self.row_offsets.is_empty() {
            vec![0.0; self.rows]
        } else {
            self.row_offsets.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if !(self.farm_size > 0.0) {
            return bad(format!(
                "farm_size must be positive, got {}",
                self.farm_size
            ));
        }
        if self.n_vertices < 3 {
            return bad(format!(
                "n_vertices must be at least 3, got {}",
                self.n_vertices
            ));
        }
        if self.height_range < 0.0 {
            return bad("height_range must be non-negative".into());
        }
        if !(self.plot_width > 0.0 && self.plot_length > 0.0) {
            return bad("plot dimensions must be positive".into());
        }
        if self.gap_x < 0.0 || self.gap_y < 0.0 {
            return bad("negative gaps make plots overlap".into());
        }
        if self.plants_per_plot == 0 {
            return bad("plants_per_plot must be at least 1".into());
        }
        if !(self.scale_min > 0.0 && self.scale_min <= self.scale_max) {
            return bad(format!(
                "need 0 < scale_min <= scale_max, got {} and {}",
                self.scale_min, self.scale_max
            ));
        }
        if self.rows == 0 || self.plots_per_row == 0 {
            return bad("rows and plots_per_row must be at least 1".into());
        }
        if !self.row_offsets.is_empty() && self.row_offsets.len() != self.rows {
            return bad(format!(
                "row_offsets has {} entries for {} rows",
                self.row_offsets.len(),
                self.rows
            ));
        }
        if !(self.canopy_radius > 0.0 && self.canopy_height > 0.0) {
            return bad("canopy dimensions must be positive".into());
        }
        if !(0.0..1.0).contains(&self.canopy_porosity) {
            return bad(format!(
                "canopy_porosity must be in [0, 1), got {}",
                self.canopy_porosity
            ));
        }
        self.layout()?;
        Ok(())
    }

    /// Lower-left corner of plot (row, col)'s rectangle, grid centered in
    /// the farm square. Errors when the layout does not fit.
    pub fn layout(&self) -> Result<PlotLayout> {
        let offsets = self.offsets();
        let min_off = offsets.iter().copied().fold(f64::INFINITY, f64::min);
        let max_off = offsets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span_x = (self.plots_per_row - 1) as f64 * self.pitch_x() + self.plot_width;
        let span_y = (self.rows - 1) as f64 * self.pitch_y() + self.plot_length;
        let base_x = (self.farm_size - span_x - max_off - min_off) * 0.5;
        let base_y = (self.farm_size - span_y) * 0.5;
        let lo_x = base_x + min_off;
        let hi_x = base_x + max_off + span_x;
        if lo_x < 0.0 || hi_x > self.farm_size || base_y < 0.0 || base_y + span_y > self.farm_size {
            return Err(Error::InvalidSpec(format!(
                "{} x {} plot grid does not fit inside the {} m farm",
                self.plots_per_row, self.rows, self.farm_size
            )));
        }
        Ok(PlotLayout {
            base_x,
            base_y,
            offsets,
        })
    }
}

/// Resolved plot placement.
#[derive(Clone, Debug)]
pub struct PlotLayout {
    base_x: f64,
    base_y: f64,
    offsets: Vec<f64>,
}

impl PlotLayout {
    /// Lower-left corner of plot (row, col).
    pub fn plot_origin(&self, spec: &FarmSpec, row: usize, col: usize) -> Point2 {
        Point2::new(
            self.base_x + self.offsets[row] + col as f64 * spec.pitch_x(),
            self.base_y + row as f64 * spec.pitch_y(),
        )
    }

    pub fn plot_center(&self, spec: &FarmSpec, row: usize, col: usize) -> Point2 {
        let o = self.plot_origin(spec, row, col);
        Point2::new(o.x + spec.plot_width * 0.5, o.y + spec.plot_length * 0.5)
    }
}

/// Triangulated terrain; vertex heights come from the farm spec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerrainMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[usize; 3]>,
}

impl TerrainMesh {
    /// Barycentric height interpolation inside the containing triangle.
    pub fn height_at(&self, xy: Point2) -> Result<f64> {
        for t in &self.triangles {
            let a = self.vertices[t[0]];
            let b = self.vertices[t[1]];
            let c = self.vertices[t[2]];
            let det = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
            if det.abs() < 1e-30 {
                continue;
            }
            let w1 = ((xy.x - a.x) * (c.y - a.y) - (xy.y - a.y) * (c.x - a.x)) / det;
            let w2 = ((b.x - a.x) * (xy.y - a.y) - (b.y - a.y) * (xy.x - a.x)) / det;
            let w0 = 1.0 - w1 - w2;
            let eps = -1e-12;
            if w0 >= eps && w1 >= eps && w2 >= eps {
                return Ok(w0 * a.z + w1 * b.z + w2 * c.z);
            }
        }
        Err(Error::OutOfTerrain { x: xy.x, y: xy.y })
    }
}

/// One placed plant: a composite-ellipsoid canopy standing on the terrain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantInstance {
    /// Point on the terrain where the plant touches the ground.
    pub base: Point3,
    pub scale: f64,
    pub yaw: f64,
    /// Scaled canopy dimensions: horizontal extent radius and full height.
    pub canopy_radius: f64,
    pub canopy_height: f64,
    /// Beam pass-through probability per canopy surface.
    pub porosity: f64,
    /// Height of the canopy top over the local ground.
    pub true_height: f64,
}

/// Per-plot ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotTruth {
    pub row: usize,
    pub col: usize,
    /// Horizontal extent of the plot's canopies.
    pub bounds: OrientedBox,
    pub plant_heights: Vec<f64>,
    /// Max plant height in the plot.
    pub true_height: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FarmGroundTruth {
    pub plots: Vec<PlotTruth>,
    /// The as-planted grid (anchor at plot (0,0) center, yaw 0).
    pub grid: PlotGrid,
}

/// Generate the terrain: `n_vertices` random positions plus the 4 square
/// corners, Delaunay triangulated, with uniformly random vertex heights.
/// Pure function of the farm spec (RNG stream 0 of the seed).
pub fn gen_terrain(spec: &FarmSpec) -> Result<TerrainMesh> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(0);
    let s = spec.farm_size;
    let mut xy = vec![
        Point2::new(0.0, 0.0),
        Point2::new(s, 0.0),
        Point2::new(s, s),
        Point2::new(0.0, s),
    ];
    for _ in 0..spec.n_vertices {
        let x = rng.random::<f64>() * s;
        let y = rng.random::<f64>() * s;
        xy.push(Point2::new(x, y));
    }
    let triangles = delaunay::triangulate(&xy)?;
    let vertices = xy
        .into_iter()
        .map(|p| {
            let z = if spec.height_range == 0.0 {
                0.0
            } else {
                (rng.random::<f64>() * 2.0 - 1.0) * spec.height_range
            };
            Point3::new(p.x, p.y, z)
        })
        .collect();
    Ok(TerrainMesh {
        vertices,
        triangles,
    })
}

/// Height of the terrain surface at an xy position.
pub fn terrain_height_at(mesh: &TerrainMesh, xy: Point2) -> Result<f64> {
    mesh.height_at(xy)
}

/// Populate the plots with randomized plant instances snapped to the
/// terrain, and record the exact ground truth. Pure function of
/// (spec, mesh); uses RNG stream 1 of the seed.
pub fn gen_plots(
    spec: &FarmSpec,
    mesh: &TerrainMesh,
) -> Result<(Vec<PlantInstance>, FarmGroundTruth)> {
    spec.validate()?;
    let layout = spec.layout()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);

    let mut plants = Vec::with_capacity(spec.rows * spec.plots_per_row * spec.plants_per_plot);
    let mut truths = Vec::with_capacity(spec.rows * spec.plots_per_row);
    for row in 0..spec.rows {
        for col in 0..spec.plots_per_row {
            let origin = layout.plot_origin(spec, row, col);
            let mut plant_heights = Vec::with_capacity(spec.plants_per_plot);
            let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
            let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for _ in 0..spec.plants_per_plot {
                let x = origin.x + rng.random::<f64>() * spec.plot_width;
                let y = origin.y + rng.random::<f64>() * spec.plot_length;
                let scale = if spec.scale_min == spec.scale_max {
                    spec.scale_min
                } else {
                    spec.scale_min + rng.random::<f64>() * (spec.scale_max - spec.scale_min)
                };
                let yaw = rng.random::<f64>() * std::f64::consts::TAU;
                let z = mesh.height_at(Point2::new(x, y))?;
                let radius = spec.canopy_radius * scale;
                let height = spec.canopy_height * scale;
                plants.push(PlantInstance {
                    base: Point3::new(x, y, z),
                    scale,
                    yaw,
                    canopy_radius: radius,
                    canopy_height: height,
                    porosity: spec.canopy_porosity,
                    true_height: height,
                });
                plant_heights.push(height);
                min_x = min_x.min(x - radius);
                max_x = max_x.max(x + radius);
                min_y = min_y.min(y - radius);
                max_y = max_y.max(y + radius);
            }
            let center = Point2::new((min_x + max_x) * 0.5, (min_y + max_y) * 0.5);
            let bounds =
                OrientedBox::from_center_extents(center, max_x - min_x, max_y - min_y, 0.0);
            let true_height = plant_heights
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            truths.push(PlotTruth {
                row,
                col,
                bounds,
                plant_heights,
                true_height,
            });
        }
    }

    let grid = PlotGrid {
        anchor: layout.plot_center(spec, 0, 0),
        yaw: 0.0,
        plot_width: spec.plot_width,
        plot_length: spec.plot_length,
        pitch_x: spec.pitch_x(),
        pitch_y: spec.pitch_y(),
        rows: spec.rows,
        cols: spec.plots_per_row,
    };
    Ok((
        plants,
        FarmGroundTruth {
            plots: truths,
            grid,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_spec() -> FarmSpec {
        FarmSpec {
            farm_size: 20.0,
            n_vertices: 8,
            plants_per_plot: 12,
            rows: 2,
            plots_per_row: 3,
            seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn flat_terrain_is_all_zero() {
        let spec = FarmSpec {
            height_range: 0.0,
            ..small_spec()
        };
        let mesh = gen_terrain(&spec).unwrap();
        assert!(mesh.vertices.iter().all(|v| v.z == 0.0));
        assert_eq!(mesh.vertices.len(), spec.n_vertices + 4);
    }

    #[test]
    fn rough_terrain_respects_height_range() {
        let spec = FarmSpec {
            farm_size: 30.0,
            n_vertices: 150,
            height_range: 1.0,
            ..small_spec()
        };
        let mesh = gen_terrain(&spec).unwrap();
        assert!(mesh.vertices.iter().all(|v| v.z.abs() <= 1.0));
        assert!(mesh.vertices.iter().any(|v| v.z.abs() > 0.1));
    }

    #[test]
    fn terrain_covers_the_whole_square() {
        let spec = FarmSpec {
            height_range: 0.5,
            ..small_spec()
        };
        let mesh = gen_terrain(&spec).unwrap();
        for i in 0..=20 {
            for j in 0..=20 {
                let p = Point2::new(
                    spec.farm_size * i as f64 / 20.0,
                    spec.farm_size * j as f64 / 20.0,
                );
                mesh.height_at(p).unwrap();
            }
        }
        assert!(mesh
            .height_at(Point2::new(-1.0, spec.farm_size * 0.5))
            .is_err());
    }

    #[test]
    fn height_at_vertices_and_edge_midpoints() {
        let mesh = TerrainMesh {
            vertices: vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(2.0, 0.0, 1.0),
                Point3::new(0.0, 2.0, 0.0),
            ],
            triangles: vec![[0, 1, 2]],
        };
        assert_abs_diff_eq!(mesh.height_at(Point2::new(2.0, 0.0)).unwrap(), 1.0);
        assert_abs_diff_eq!(mesh.height_at(Point2::new(1.0, 0.0)).unwrap(), 0.5);
    }

    #[test]
    fn shared_edges_interpolate_continuously() {
        let spec = FarmSpec {
            height_range: 1.0,
            n_vertices: 40,
            ..small_spec()
        };
        let mesh = gen_terrain(&spec).unwrap();
        // Collect edges shared by two triangles and compare both
        // interpolations at points along the edge.
        use std::collections::HashMap;
        let mut owners: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (ti, t) in mesh.triangles.iter().enumerate() {
            for &(a, b) in &[(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                owners.entry((a.min(b), a.max(b))).or_default().push(ti);
            }
        }
        let interp = |ti: usize, p: Point2| -> f64 {
            let t = mesh.triangles[ti];
            let a = mesh.vertices[t[0]];
            let b = mesh.vertices[t[1]];
            let c = mesh.vertices[t[2]];
            let det = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
            let w1 = ((p.x - a.x) * (c.y - a.y) - (p.y - a.y) * (c.x - a.x)) / det;
            let w2 = ((b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)) / det;
            (1.0 - w1 - w2) * a.z + w1 * b.z + w2 * c.z
        };
        let mut shared = 0;
        for ((a, b), tris) in owners {
            if tris.len() != 2 {
                continue;
            }
            shared += 1;
            let va = mesh.vertices[a];
            let vb = mesh.vertices[b];
            for f in [0.25, 0.5, 0.75] {
                let p = Point2::new(va.x + (vb.x - va.x) * f, va.y + (vb.y - va.y) * f);
                let h0 = interp(tris[0], p);
                let h1 = interp(tris[1], p);
                assert_abs_diff_eq!(h0, h1, epsilon = 1e-9);
            }
        }
        assert!(shared > 10);
    }

    #[test]
    fn plots_layout_and_counts() {
        let spec = FarmSpec::default();
        let mesh = gen_terrain(&spec).unwrap();
        let (plants, truth) = gen_plots(&spec, &mesh).unwrap();
        assert_eq!(plants.len(), 3 * 10 * 90);
        assert_eq!(truth.plots.len(), 30);
        assert_eq!(truth.grid.n_plots(), 30);
    }

    #[test]
    fn unit_scale_means_nominal_heights() {
        let spec = FarmSpec {
            scale_min: 1.0,
            scale_max: 1.0,
            ..small_spec()
        };
        let mesh = gen_terrain(&spec).unwrap();
        let (plants, truth) = gen_plots(&spec, &mesh).unwrap();
        assert!(plants.iter().all(|p| p.true_height == spec.canopy_height));
        assert!(truth
            .plots
            .iter()
            .all(|p| p.true_height == spec.canopy_height));
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = FarmSpec {
            height_range: 0.7,
            ..small_spec()
        };
        let mesh_a = gen_terrain(&spec).unwrap();
        let mesh_b = gen_terrain(&spec).unwrap();
        assert_eq!(mesh_a, mesh_b);
        let (plants_a, truth_a) = gen_plots(&spec, &mesh_a).unwrap();
        let (plants_b, truth_b) = gen_plots(&spec, &mesh_b).unwrap();
        assert_eq!(plants_a, plants_b);
        assert_eq!(truth_a, truth_b);
    }

    #[test]
    fn plants_stay_inside_their_plots_on_the_terrain() {
        let spec = FarmSpec {
            height_range: 0.6,
            ..small_spec()
        };
        let mesh = gen_terrain(&spec).unwrap();
        let (plants, truth) = gen_plots(&spec, &mesh).unwrap();
        let layout = spec.layout().unwrap();
        let per_plot = spec.plants_per_plot;
        for (pi, plant) in plants.iter().enumerate() {
            let plot = &truth.plots[pi / per_plot];
            let origin = layout.plot_origin(&spec, plot.row, plot.col);
            assert!(plant.base.x >= origin.x && plant.base.x <= origin.x + spec.plot_width);
            assert!(plant.base.y >= origin.y && plant.base.y <= origin.y + spec.plot_length);
            let ground = mesh.height_at(plant.base.xy()).unwrap();
            assert_abs_diff_eq!(plant.base.z, ground, epsilon = 1e-12);
            assert!(plant.scale >= spec.scale_min && plant.scale <= spec.scale_max);
            // The truth box covers the whole canopy (allow float slack on
            // the extreme points that define the box).
            let grown = crate::plotdetect::OrientedBox {
                width: plot.bounds.width + 2e-9,
                length: plot.bounds.length + 2e-9,
                ..plot.bounds
            };
            assert!(grown.contains_xy(Point2::new(
                plant.base.x + plant.canopy_radius,
                plant.base.y
            )));
            assert!(grown.contains_xy(Point2::new(
                plant.base.x,
                plant.base.y - plant.canopy_radius
            )));
        }
        for plot in &truth.plots {
            let max = plot
                .plant_heights
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(plot.true_height, max);
        }
    }

    #[test]
    fn oversized_layout_is_rejected() {
        let spec = FarmSpec {
            farm_size: 5.0,
            ..FarmSpec::default()
        };
        assert!(matches!(gen_terrain(&spec), Err(Error::InvalidSpec(_))));
    }
}
