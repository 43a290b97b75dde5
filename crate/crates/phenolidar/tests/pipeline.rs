//! Library-level end-to-end run on a small simulated farm: generate, fly,
//! map, detect, estimate, compare against the generator's ground truth.

use phenolidar::cloud::{merge_map, voxel_downsample, z_filter, Point2, VoxelParams};
use phenolidar::farmgen::{gen_plots, gen_terrain, FarmSpec};
use phenolidar::groundheight::{estimate_plot_heights, HeightMethod, RansacParams};
use phenolidar::plotdetect::{
    fit_grid, kmeans_xy, min_area_obb, snap_grid_to_clusters, vote_dimensions, KMeansParams,
};
use phenolidar::scansim::{lawnmower_trajectory, simulate_flight, Scene, SensorModel};

#[test]
fn small_farm_end_to_end() {
    let spec = FarmSpec {
        farm_size: 16.0,
        n_vertices: 8,
        height_range: 0.0,
        rows: 2,
        plots_per_row: 3,
        plants_per_plot: 40,
        seed: 19,
        ..Default::default()
    };
    let mesh = gen_terrain(&spec).unwrap();
    let (plants, truth) = gen_plots(&spec, &mesh).unwrap();
    let scene = Scene::new(mesh, plants);

    let sensor = SensorModel {
        azimuth_step: 1f64.to_radians(),
        seed: 4,
        ..Default::default()
    };
    let trajectory = lawnmower_trajectory(spec.farm_size, 15.0, 5.0, 1.5).unwrap();
    let flight = simulate_flight(&trajectory, &sensor, &scene).unwrap();
    let raw = merge_map(&flight).unwrap();
    assert!(raw.len() > 100_000, "map too sparse: {}", raw.len());
    let voxel = voxel_downsample(&raw, VoxelParams { leaf: 0.05 }).unwrap();

    // Detect: vegetation cut, clusters, vote, grid snapped to the clusters
    // from a deliberately offset manual anchor.
    let mut zs: Vec<f64> = voxel.iter().map(|p| p.z).collect();
    zs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let z_cut = zs[(zs.len() as f64 * 0.05) as usize] + 0.3;
    let vegetation = z_filter(&voxel, z_cut);
    let clusters = kmeans_xy(
        &vegetation,
        &KMeansParams {
            k: truth.grid.n_plots(),
            max_iters: 200,
            tol: 0.0,
            seed: 3,
        },
    )
    .unwrap();
    let boxes: Vec<_> = clusters
        .iter()
        .map(|c| {
            let xy: Vec<Point2> = c
                .member_indices
                .iter()
                .map(|&i| vegetation.points[i].xy())
                .collect();
            min_area_obb(&xy).unwrap()
        })
        .collect();
    let vote = vote_dimensions(&boxes, 2f64.to_radians(), 0.10).unwrap();
    let offset_anchor = truth.grid.anchor + Point2::new(0.21, -0.17);
    let grid = fit_grid(
        &vote,
        offset_anchor,
        truth.grid.pitch_x,
        truth.grid.pitch_y,
        truth.grid.rows,
        truth.grid.cols,
    )
    .unwrap();
    let grid = snap_grid_to_clusters(&grid, &clusters).unwrap();

    // Pipeline property: every estimated plot center within half a pitch of
    // the true center.
    let radius = grid.pitch_x.min(grid.pitch_y) / 2.0;
    for plot in &truth.plots {
        let est = grid.cell_center(plot.row, plot.col);
        let tru = truth.grid.cell_center(plot.row, plot.col);
        assert!(
            (est - tru).norm() <= radius,
            "plot ({}, {}) center off by {:.3} m",
            plot.row,
            plot.col,
            (est - tru).norm()
        );
    }
    // Snap recovers most of the injected anchor offset.
    assert!(
        (grid.anchor - truth.grid.anchor).norm() < 0.15,
        "snapped anchor still {:.3} m off",
        (grid.anchor - truth.grid.anchor).norm()
    );

    let report = estimate_plot_heights(
        &voxel,
        &raw,
        &grid,
        &RansacParams {
            min_inliers: 25,
            seed: 8,
            ..Default::default()
        },
        0.75,
        HeightMethod::Percentile(99.0),
    )
    .unwrap();
    assert_eq!(report.plots.len(), truth.plots.len());
    for (record, plot) in report.plots.iter().zip(truth.plots.iter()) {
        assert!(!record.degenerate, "plot ({}, {})", record.row, record.col);
        let err = record.height_m.unwrap() - plot.true_height;
        assert!(
            err.abs() < 0.10,
            "plot ({}, {}) height error {:.3} m",
            record.row,
            record.col,
            err
        );
    }
}
