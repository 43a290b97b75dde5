//! Plot detection: k-means clustering of the vegetation points, minimum-area
//! oriented bounding boxes per cluster, the dimension/orientation voting
//! scheme, and grid fitting/extraction.
//!
//! Clustering runs on the xy-projection of the cloud (plots separate
//! horizontally; canopy height would only distort cluster shapes).

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::{Point2, PointCloud};
use crate::error::{Error, Result};

/// One k-means cluster: indices into the clustered cloud plus the xy mean.
#[derive(Clone, Debug)]
pub struct Cluster {
    pub member_indices: Vec<usize>,
    pub centroid: Point2,
}

/// A rectangle with arbitrary rotation in the xy plane.
///
/// Canonical form: `width <= length`, the width extent spans the axis at
/// angle `yaw` and the length extent the axis at `yaw + 90 deg`. `yaw` lies
/// in `[0, pi)`; for squares it is reduced to `[0, pi/2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Point2,
    pub width: f64,
    pub length: f64,
    pub yaw: f64,
}

impl OrientedBox {
    /// Build the canonical box from raw extents: `extent_u` spans the axis at
    /// `axis_angle`, `extent_v` the perpendicular axis.
    pub fn from_center_extents(
        center: Point2,
        extent_u: f64,
        extent_v: f64,
        axis_angle: f64,
    ) -> OrientedBox {
        let (width, length, raw_yaw) = if extent_u <= extent_v {
            (extent_u, extent_v, axis_angle)
        } else {
            (extent_v, extent_u, axis_angle + FRAC_PI_2)
        };
        let mut yaw = raw_yaw.rem_euclid(PI);
        if length - width <= 1e-12 {
            yaw = yaw.rem_euclid(FRAC_PI_2);
        }
        OrientedBox {
            center,
            width,
            length,
            yaw,
        }
    }

    /// Unit axes: `.0` spans the width, `.1` the length.
    pub fn axes(&self) -> (Point2, Point2) {
        let (s, c) = self.yaw.sin_cos();
        (Point2::new(c, s), Point2::new(-s, c))
    }

    pub fn area(&self) -> f64 {
        self.width * self.length
    }

    /// Yaw reduced to the rectangle-symmetry period `[0, pi/2)`.
    pub fn yaw_mod_quarter(&self) -> f64 {
        self.yaw.rem_euclid(FRAC_PI_2)
    }

    /// Closed-boundary containment in the xy plane.
    pub fn contains_xy(&self, p: Point2) -> bool {
        let (u, v) = self.axes();
        let d = p - self.center;
        d.dot(u).abs() <= self.width * 0.5 && d.dot(v).abs() <= self.length * 0.5
    }

    pub fn corners(&self) -> [Point2; 4] {
        let (u, v) = self.axes();
        let hw = u * (self.width * 0.5);
        let hl = v * (self.length * 0.5);
        [
            self.center + hw + hl,
            self.center - hw + hl,
            self.center - hw - hl,
            self.center + hw - hl,
        ]
    }

    /// Same box with the length grown by `extension` on both ends.
    pub fn extended(&self, extension: f64) -> OrientedBox {
        OrientedBox {
            length: self.length + 2.0 * extension,
            ..*self
        }
    }
}

/// Outcome of the per-quantity voting over cluster boxes.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct VoteResult {
    pub yaw: f64,
    pub width: f64,
    pub length: f64,
    pub yaw_votes: usize,
    pub width_votes: usize,
    pub length_votes: usize,
    pub yaw_bin: f64,
    pub dim_bin: f64,
}

/// The fitted plot grid. Cell (r, c) is centered at
/// `anchor + R(yaw) * (c * pitch_x, r * pitch_y)`; each cell spans
/// `plot_width` along the grid x axis and `plot_length` along the grid y
/// axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotGrid {
    pub anchor: Point2,
    pub yaw: f64,
    pub plot_width: f64,
    pub plot_length: f64,
    pub pitch_x: f64,
    pub pitch_y: f64,
    pub rows: usize,
    pub cols: usize,
}

impl PlotGrid {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidGrid(
                "rows and cols must be at least 1".into(),
            ));
        }
        if !(self.pitch_x > 0.0) || !(self.pitch_y > 0.0) {
            return Err(Error::InvalidGrid("pitches must be positive".into()));
        }
        if self.plot_width < 0.0 || self.plot_length < 0.0 {
            return Err(Error::InvalidGrid(
                "plot dimensions must be non-negative".into(),
            ));
        }
        if self.pitch_x < self.plot_width || self.pitch_y < self.plot_length {
            return Err(Error::InvalidGrid(format!(
                "pitch ({}, {}) smaller than plot dimensions ({}, {})",
                self.pitch_x, self.pitch_y, self.plot_width, self.plot_length
            )));
        }
        Ok(())
    }

    pub fn n_plots(&self) -> usize {
        self.rows * self.cols
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Point2 {
        let (s, c) = self.yaw.sin_cos();
        let gx = col as f64 * self.pitch_x;
        let gy = row as f64 * self.pitch_y;
        self.anchor + Point2::new(c * gx - s * gy, s * gx + c * gy)
    }

    pub fn cell_box(&self, row: usize, col: usize) -> OrientedBox {
        OrientedBox::from_center_extents(
            self.cell_center(row, col),
            self.plot_width,
            self.plot_length,
            self.yaw,
        )
    }

    /// Row-major (row, col) traversal order used everywhere plots are listed.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let cols = self.cols;
        (0..self.rows).flat_map(move |r| (0..cols).map(move |c| (r, c)))
    }
}

/// k-means parameters; `k` is the expected number of plots.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub max_iters: usize,
    /// Centroid-motion convergence threshold in meters.
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams {
            k: 1,
            max_iters: 200,
            tol: 0.0,
            seed: 0,
        }
    }
}

fn dist2(a: Point2, b: Point2) -> f64 {
    let d = a - b;
    d.dot(d)
}

fn kmeanspp_init(xy: &[Point2], k: usize, rng: &mut ChaCha8Rng) -> Vec<Point2> {
    let n = xy.len();
    let mut centroids = Vec::with_capacity(k);
    let first = rng.random_range(0..n);
    centroids.push(xy[first]);
    let mut d2: Vec<f64> = xy.iter().map(|&p| dist2(p, xy[first])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut cum = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                cum += w;
                if cum >= target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(xy[idx]);
        for (i, &p) in xy.iter().enumerate() {
            let d = dist2(p, xy[idx]);
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centroids
}

fn nearest_centroid(p: Point2, centroids: &[Point2]) -> usize {
    let mut best = 0;
    let mut best_d = dist2(p, centroids[0]);
    for (i, &c) in centroids.iter().enumerate().skip(1) {
        let d = dist2(p, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Restarts per call; the best run by inertia wins. Each restart derives
/// its RNG stream from the caller's seed, so the result is still a pure
/// function of (cloud, params).
const KMEANS_RESTARTS: u64 = 8;

/// Seeded k-means over the xy-projection of the cloud.
///
/// k-means++ initialization with [`KMEANS_RESTARTS`] restarts (lowest final
/// inertia wins), Lloyd iterations until the assignment is stable, the
/// centroid motion drops to `tol`, or `max_iters` is reached. Clusters that
/// run empty are re-seeded to the point currently farthest from its owning
/// centroid, so exactly `k` non-empty clusters come back.
pub fn kmeans_xy(cloud: &PointCloud, params: &KMeansParams) -> Result<Vec<Cluster>> {
    let n = cloud.len();
    let k = params.k;
    if k == 0 {
        return Err(Error::InvalidParam("k must be at least 1".into()));
    }
    if n < k {
        return Err(Error::InsufficientPoints { needed: k, got: n });
    }
    let xy: Vec<Point2> = cloud.iter().map(|p| p.xy()).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for restart in 0..KMEANS_RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(restart);
        let (inertia, assign) = lloyd_run(&xy, params, &mut rng);
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, assign));
        }
    }
    let assign = best.expect("at least one restart").1;

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &a) in assign.iter().enumerate() {
        members[a].push(i);
    }
    Ok(members
        .into_iter()
        .map(|idx| {
            let mut sum = Point2::default();
            for &i in &idx {
                sum = sum + xy[i];
            }
            let centroid = sum * (1.0 / idx.len() as f64);
            Cluster {
                member_indices: idx,
                centroid,
            }
        })
        .collect())
}

/// One seeded k-means++ / Lloyd run; returns (inertia, assignment).
fn lloyd_run(xy: &[Point2], params: &KMeansParams, rng: &mut ChaCha8Rng) -> (f64, Vec<usize>) {
    let n = xy.len();
    let k = params.k;
    let mut centroids = kmeanspp_init(xy, k, rng);
    let mut assign: Vec<usize> = vec![usize::MAX; n];

    for _ in 0..params.max_iters.max(1) {
        let mut changed = false;
        for (i, &p) in xy.iter().enumerate() {
            let a = nearest_centroid(p, &centroids);
            if a != assign[i] {
                assign[i] = a;
                changed = true;
            }
        }

        let mut counts = vec![0usize; k];
        for &a in &assign {
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            // Re-seed at the point farthest from its owning centroid, never
            // stealing the last member of another cluster.
            let mut far = None;
            let mut far_d = -1.0;
            for (i, &p) in xy.iter().enumerate() {
                if counts[assign[i]] < 2 {
                    continue;
                }
                let d = dist2(p, centroids[assign[i]]);
                if d > far_d {
                    far_d = d;
                    far = Some(i);
                }
            }
            let far = far.expect("n >= k guarantees a donor cluster");
            counts[assign[far]] -= 1;
            assign[far] = c;
            counts[c] = 1;
            centroids[c] = xy[far];
            changed = true;
        }

        let mut sums = vec![Point2::default(); k];
        for (i, &p) in xy.iter().enumerate() {
            sums[assign[i]] = sums[assign[i]] + p;
        }
        let mut movement: f64 = 0.0;
        for c in 0..k {
            let mean = sums[c] * (1.0 / counts[c] as f64);
            movement = movement.max((mean - centroids[c]).norm());
            centroids[c] = mean;
        }

        if !changed || movement <= params.tol {
            break;
        }
    }

    let inertia = xy
        .iter()
        .enumerate()
        .map(|(i, &p)| dist2(p, centroids[assign[i]]))
        .sum();
    (inertia, assign)
}

/// Convex hull (counter-clockwise, collinear points dropped) via the
/// monotone chain. Returns 1 or 2 points for degenerate inputs.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap());
    pts.dedup_by(|a, b| a.x == b.x && a.y == b.y);
    let n = pts.len();
    if n <= 2 {
        return pts;
    }
    let cross = |o: Point2, a: Point2, b: Point2| -> f64 {
        (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
    };
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * n);
    for &p in pts.iter() {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev() {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    if hull.len() < 3 {
        // All input points collinear.
        return vec![pts[0], pts[n - 1]];
    }
    hull
}

/// Minimum-area oriented bounding box of a planar point set.
///
/// The minimum rectangle has a side collinear with a convex-hull edge, so the
/// search sweeps hull edges only. Degenerate inputs (single point, collinear
/// points) yield boxes with zero width and/or length.
pub fn min_area_obb(points: &[Point2]) -> Result<OrientedBox> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    let hull = convex_hull(points);
    if hull.len() == 1 {
        return Ok(OrientedBox::from_center_extents(hull[0], 0.0, 0.0, 0.0));
    }
    if hull.len() == 2 {
        let d = hull[1] - hull[0];
        let angle = d.y.atan2(d.x);
        let center = Point2::new((hull[0].x + hull[1].x) * 0.5, (hull[0].y + hull[1].y) * 0.5);
        return Ok(OrientedBox::from_center_extents(
            center,
            d.norm(),
            0.0,
            angle,
        ));
    }

    let mut best: Option<(f64, OrientedBox)> = None;
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let e = b - a;
        let angle = e.y.atan2(e.x);
        let (s, c) = angle.sin_cos();
        let u = Point2::new(c, s);
        let v = Point2::new(-s, c);
        let (mut umin, mut umax) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for &p in &hull {
            let pu = p.dot(u);
            let pv = p.dot(v);
            umin = umin.min(pu);
            umax = umax.max(pu);
            vmin = vmin.min(pv);
            vmax = vmax.max(pv);
        }
        let extent_u = umax - umin;
        let extent_v = vmax - vmin;
        let area = extent_u * extent_v;
        if best.as_ref().is_none_or(|(ba, _)| area < *ba) {
            let cu = (umin + umax) * 0.5;
            let cv = (vmin + vmax) * 0.5;
            let center = u * cu + v * cv;
            best = Some((
                area,
                OrientedBox::from_center_extents(center, extent_u, extent_v, angle),
            ));
        }
    }
    Ok(best.expect("hull has at least one edge").1)
}

fn winning_bin_linear(values: &[f64], bin: f64) -> (f64, usize) {
    let mut bins: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for &v in values {
        bins.entry((v / bin).floor() as i64).or_default().push(v);
    }
    // Ties break toward the lower bin index; BTreeMap iterates keys ascending.
    let mut win: Option<(&i64, &Vec<f64>)> = None;
    for (k, members) in &bins {
        if win.as_ref().is_none_or(|(_, w)| members.len() > w.len()) {
            win = Some((k, members));
        }
    }
    let members = win.expect("non-empty input").1;
    let mean = members.iter().sum::<f64>() / members.len() as f64;
    (mean, members.len())
}

fn winning_bin_circular_quarter(values: &[f64], bin: f64) -> (f64, usize) {
    let reduced: Vec<f64> = values.iter().map(|v| v.rem_euclid(FRAC_PI_2)).collect();
    let mut bins: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for &v in &reduced {
        bins.entry((v / bin).floor() as i64).or_default().push(v);
    }
    let mut win: Option<(&i64, &Vec<f64>)> = None;
    for (k, members) in &bins {
        if win.as_ref().is_none_or(|(_, w)| members.len() > w.len()) {
            win = Some((k, members));
        }
    }
    let members = win.expect("non-empty input").1;
    // Circular mean on period pi/2.
    let (mut ss, mut cs) = (0.0, 0.0);
    for &v in members {
        ss += (4.0 * v).sin();
        cs += (4.0 * v).cos();
    }
    let mean = (ss.atan2(cs) / 4.0).rem_euclid(FRAC_PI_2);
    (mean, members.len())
}

/// Histogram the box yaws/widths/lengths independently and average the
/// winning bin of each quantity. Yaw is treated circularly with period 90
/// degrees; dimension bins start at zero; ties break toward the lower bin.
pub fn vote_dimensions(boxes: &[OrientedBox], yaw_bin: f64, dim_bin: f64) -> Result<VoteResult> {
    if boxes.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(yaw_bin > 0.0) || !(dim_bin > 0.0) {
        return Err(Error::InvalidParam(
            "vote bin widths must be positive".into(),
        ));
    }
    let widths: Vec<f64> = boxes.iter().map(|b| b.width).collect();
    let lengths: Vec<f64> = boxes.iter().map(|b| b.length).collect();
    let yaws: Vec<f64> = boxes.iter().map(|b| b.yaw).collect();
    let (width, width_votes) = winning_bin_linear(&widths, dim_bin);
    let (length, length_votes) = winning_bin_linear(&lengths, dim_bin);
    let (yaw, yaw_votes) = winning_bin_circular_quarter(&yaws, yaw_bin);
    Ok(VoteResult {
        yaw,
        width,
        length,
        yaw_votes,
        width_votes,
        length_votes,
        yaw_bin,
        dim_bin,
    })
}

/// Lay out a rows x cols grid of plots with the voted dimensions and
/// orientation. Anchor and pitches are user-supplied (the manual fit).
pub fn fit_grid(
    vote: &VoteResult,
    anchor: Point2,
    pitch_x: f64,
    pitch_y: f64,
    rows: usize,
    cols: usize,
) -> Result<PlotGrid> {
    let grid = PlotGrid {
        anchor,
        yaw: vote.yaw,
        plot_width: vote.width,
        plot_length: vote.length,
        pitch_x,
        pitch_y,
        rows,
        cols,
    };
    grid.validate()?;
    Ok(grid)
}

/// Translate the grid by the mean offset between each cell center and its
/// nearest cluster centroid (one pass). Yaw and pitches are unchanged.
pub fn snap_grid_to_clusters(grid: &PlotGrid, clusters: &[Cluster]) -> Result<PlotGrid> {
    if clusters.is_empty() {
        return Err(Error::EmptyInput);
    }
    grid.validate()?;
    let mut sum = Point2::default();
    let mut n = 0usize;
    for (r, c) in grid.cells() {
        let center = grid.cell_center(r, c);
        let mut best = clusters[0].centroid;
        let mut best_d = dist2(center, best);
        for cl in &clusters[1..] {
            let d = dist2(center, cl.centroid);
            if d < best_d {
                best_d = d;
                best = cl.centroid;
            }
        }
        sum = sum + (best - center);
        n += 1;
    }
    let mean = sum * (1.0 / n as f64);
    Ok(PlotGrid {
        anchor: grid.anchor + mean,
        ..grid.clone()
    })
}

/// Per-cell point extraction over the full z extent.
///
/// Each cell's box is grown by `length_extension` on both ends of the length
/// axis so it reaches the ground between plots; a point may land in several
/// extended boxes. Output is row-major, clouds preserve input order.
pub fn extract_plot_points(
    cloud: &PointCloud,
    grid: &PlotGrid,
    length_extension: f64,
) -> Result<Vec<PointCloud>> {
    if length_extension < 0.0 {
        return Err(Error::InvalidParam(
            "length extension must be non-negative".into(),
        ));
    }
    grid.validate()?;
    let mut out: Vec<PointCloud> = vec![PointCloud::new(); grid.n_plots()];
    let (s, c) = grid.yaw.sin_cos();
    let half_w = grid.plot_width * 0.5;
    let half_l = grid.plot_length * 0.5 + length_extension;
    for &p in cloud.iter() {
        let d = p.xy() - grid.anchor;
        let lx = d.x * c + d.y * s;
        let ly = -d.x * s + d.y * c;
        let c_lo = ((lx - half_w) / grid.pitch_x).ceil().max(0.0) as usize;
        let c_hi = ((lx + half_w) / grid.pitch_x)
            .floor()
            .min((grid.cols - 1) as f64);
        let r_lo = ((ly - half_l) / grid.pitch_y).ceil().max(0.0) as usize;
        let r_hi = ((ly + half_l) / grid.pitch_y)
            .floor()
            .min((grid.rows - 1) as f64);
        if c_hi < 0.0 || r_hi < 0.0 {
            continue;
        }
        for r in r_lo..=r_hi as usize {
            for col in c_lo..=c_hi as usize {
                out[r * grid.cols + col].points.push(p);
            }
        }
    }
    Ok(out)
}
