//! Command-line driver for the UAV-LiDAR crop phenotyping pipeline.
//!
//! Stage order: `gen-farm` -> `sim-scan` -> `build-map` -> `detect-plots`
//! -> `estimate-heights` -> `evaluate`. Every command is a pure function of
//! its input files and configuration; re-running with the same inputs and
//! seeds reproduces the output files byte for byte.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use phenolidar::cloud::{crop_box, merge_map, voxel_downsample, z_filter, Point2, PointCloud};
use phenolidar::config::PipelineConfig;
use phenolidar::evaluate::{evaluate, histogram_svg, report_csv};
use phenolidar::farmgen::{gen_plots, gen_terrain};
use phenolidar::groundheight::{estimate_plot_heights, plot_height, HeightMethod};
use phenolidar::io::{
    manifest_truth, read_field_truth_csv, read_grid, read_heights_csv, read_manifest, read_ply,
    read_trajectory, write_grid, write_heights_csv, write_manifest, write_ply, write_trajectory,
    FarmManifest,
};
use phenolidar::plotdetect::{
    fit_grid, kmeans_xy, min_area_obb, snap_grid_to_clusters, vote_dimensions, OrientedBox,
};
use phenolidar::scansim::{lawnmower_trajectory, perturb_trajectory, simulate_flight, Scene};

#[derive(Parser)]
#[command(
    name = "phenolidar",
    version,
    about = "UAV-LiDAR crop phenotyping: simulated farms, map building, plot detection, and per-plot height estimation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a virtual farm (terrain, plants, ground truth) into a manifest JSON.
    GenFarm(GenFarmArgs),
    /// Fly a simulated LiDAR over a farm manifest, writing one PLY per scan plus a trajectory JSON.
    SimScan(SimScanArgs),
    /// Merge posed scans into a map: transform, concatenate, optional crop, voxel down-sample.
    BuildMap(BuildMapArgs),
    /// Detect the plot grid on a map: z filter, k-means, box vote, grid fit.
    DetectPlots(DetectPlotsArgs),
    /// Estimate per-plot plant heights against locally fitted ground planes.
    EstimateHeights(EstimateHeightsArgs),
    /// Compare estimated heights with ground truth (manifest JSON or field CSV).
    Evaluate(EvaluateArgs),
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().cmd {
        Cmd::GenFarm(a) => cmd_gen_farm(a),
        Cmd::SimScan(a) => cmd_sim_scan(a),
        Cmd::BuildMap(a) => cmd_build_map(a),
        Cmd::DetectPlots(a) => cmd_detect_plots(a),
        Cmd::EstimateHeights(a) => cmd_estimate_heights(a),
        Cmd::Evaluate(a) => cmd_evaluate(a),
    }
}

fn load_config(path: &Option<PathBuf>) -> anyhow::Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading config {p:?}")),
        None => Ok(PipelineConfig::default()),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

// ---------------------------------------------------------------- gen-farm

#[derive(Args)]
struct GenFarmArgs {
    /// Pipeline config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output farm manifest JSON.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    farm_size: Option<f64>,
    #[arg(long)]
    n_vertices: Option<usize>,
    #[arg(long)]
    height_range: Option<f64>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    plots_per_row: Option<usize>,
    #[arg(long)]
    plants_per_plot: Option<usize>,
    #[arg(long)]
    plot_width: Option<f64>,
    #[arg(long)]
    plot_length: Option<f64>,
    #[arg(long)]
    gap_x: Option<f64>,
    #[arg(long)]
    gap_y: Option<f64>,
    #[arg(long)]
    scale_min: Option<f64>,
    #[arg(long)]
    scale_max: Option<f64>,
    #[arg(long)]
    canopy_radius: Option<f64>,
    #[arg(long)]
    canopy_height: Option<f64>,
    #[arg(long)]
    canopy_porosity: Option<f64>,
}

fn cmd_gen_farm(args: GenFarmArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(&args.config)?;
    let farm = &mut cfg.farm;
    set(&mut farm.seed, args.seed);
    set(&mut farm.farm_size, args.farm_size);
    set(&mut farm.n_vertices, args.n_vertices);
    set(&mut farm.height_range, args.height_range);
    set(&mut farm.rows, args.rows);
    set(&mut farm.plots_per_row, args.plots_per_row);
    set(&mut farm.plants_per_plot, args.plants_per_plot);
    set(&mut farm.plot_width, args.plot_width);
    set(&mut farm.plot_length, args.plot_length);
    set(&mut farm.gap_x, args.gap_x);
    set(&mut farm.gap_y, args.gap_y);
    set(&mut farm.scale_min, args.scale_min);
    set(&mut farm.scale_max, args.scale_max);
    set(&mut farm.canopy_radius, args.canopy_radius);
    set(&mut farm.canopy_height, args.canopy_height);
    set(&mut farm.canopy_porosity, args.canopy_porosity);
    farm.validate()?;

    let terrain = gen_terrain(&cfg.farm)?;
    let (plants, ground_truth) = gen_plots(&cfg.farm, &terrain)?;
    let grid = ground_truth.grid.clone();
    let manifest = FarmManifest {
        spec: cfg.farm.clone(),
        terrain,
        plants,
        ground_truth,
    };
    write_manifest(&args.out, &manifest)?;
    println!(
        "farm: {} plots ({} x {}), {} plants, {} terrain vertices -> {}",
        grid.n_plots(),
        grid.rows,
        grid.cols,
        manifest.plants.len(),
        manifest.terrain.vertices.len(),
        args.out.display()
    );
    println!(
        "true grid: anchor ({:.3}, {:.3}), pitch ({:.3}, {:.3}), yaw {:.1} deg",
        grid.anchor.x,
        grid.anchor.y,
        grid.pitch_x,
        grid.pitch_y,
        grid.yaw.to_degrees()
    );
    Ok(())
}

// ---------------------------------------------------------------- sim-scan

#[derive(Args)]
struct SimScanArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for scan_NNNNN.ply files and trajectory.json.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    altitude: Option<f64>,
    #[arg(long)]
    line_spacing: Option<f64>,
    #[arg(long)]
    sample_spacing: Option<f64>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    azimuth_step_deg: Option<f64>,
    #[arg(long)]
    max_range: Option<f64>,
    #[arg(long)]
    range_noise_sigma: Option<f64>,
    #[arg(long)]
    sensor_seed: Option<u64>,
    #[arg(long)]
    pose_noise_sigma: Option<f64>,
}

fn scan_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("scan_{index:05}.ply"))
}

fn cmd_sim_scan(args: SimScanArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(&args.config)?;
    set(&mut cfg.flight.altitude, args.altitude);
    set(&mut cfg.flight.line_spacing, args.line_spacing);
    set(&mut cfg.flight.sample_spacing, args.sample_spacing);
    set(&mut cfg.flight.pose_noise_sigma, args.pose_noise_sigma);
    set(&mut cfg.sensor.channels, args.channels);
    set(&mut cfg.sensor.azimuth_step_deg, args.azimuth_step_deg);
    set(&mut cfg.sensor.max_range, args.max_range);
    set(&mut cfg.sensor.range_noise_sigma, args.range_noise_sigma);
    set(&mut cfg.sensor.seed, args.sensor_seed);

    let manifest = read_manifest(&args.manifest)?;
    let flown = lawnmower_trajectory(
        manifest.spec.farm_size,
        cfg.flight.altitude,
        cfg.flight.line_spacing,
        cfg.flight.sample_spacing,
    )?;
    let scene = Scene::new(manifest.terrain, manifest.plants);
    let flight = simulate_flight(&flown, &cfg.sensor.to_model(), &scene)?;

    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {:?}", args.out_dir))?;
    let mut total = 0usize;
    for (i, (scan, _)) in flight.iter().enumerate() {
        total += scan.len();
        write_ply(&scan_path(&args.out_dir, i), scan)?;
    }
    // Scans are taken from the true poses; the reported trajectory carries
    // the (optional) positioning noise, like a GPS-fused estimate would.
    let reported = if cfg.flight.pose_noise_sigma > 0.0 {
        perturb_trajectory(
            &flown,
            cfg.flight.pose_noise_sigma,
            cfg.flight.pose_noise_seed,
        )
    } else {
        flown
    };
    write_trajectory(&args.out_dir.join("trajectory.json"), &reported)?;
    println!(
        "simulated {} scans, {} points -> {}",
        flight.len(),
        total,
        args.out_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- build-map

#[derive(Args)]
struct BuildMapArgs {
    #[arg(long)]
    scan_dir: PathBuf,
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output voxel-down-sampled map PLY.
    #[arg(long)]
    out: PathBuf,
    /// Also write the merged, uncropped, full-resolution map.
    #[arg(long)]
    raw_out: Option<PathBuf>,
    #[arg(long)]
    voxel_leaf: Option<f64>,
    /// Crop box as six comma-separated numbers: x0,y0,z0,x1,y1,z1.
    #[arg(long, allow_hyphen_values = true)]
    crop: Option<String>,
}

fn cmd_build_map(args: BuildMapArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(&args.config)?;
    set(&mut cfg.map.voxel_leaf, args.voxel_leaf);
    if let Some(spec) = &args.crop {
        let v: Vec<f64> = spec
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("parsing --crop {spec:?}"))?;
        if v.len() != 6 {
            bail!("--crop needs 6 numbers, got {}", v.len());
        }
        cfg.map.crop_min = Some([v[0], v[1], v[2]]);
        cfg.map.crop_max = Some([v[3], v[4], v[5]]);
    }

    let traj = read_trajectory(&args.trajectory)?;
    let mut scans = Vec::with_capacity(traj.len());
    for (i, sample) in traj.samples.iter().enumerate() {
        let path = scan_path(&args.scan_dir, i);
        let cloud = read_ply(&path).with_context(|| format!("scan {i}"))?;
        scans.push((cloud, sample.pose));
    }
    let merged = merge_map(&scans)?;
    if let Some(raw_out) = &args.raw_out {
        write_ply(raw_out, &merged)?;
    }
    let cropped = match cfg.map.crop()? {
        Some(bounds) => crop_box(&merged, &bounds),
        None => merged.clone(),
    };
    let voxel = voxel_downsample(&cropped, cfg.map.voxel_params()?)?;
    write_ply(&args.out, &voxel)?;
    println!(
        "map: {} scans, {} raw points, {} after crop, {} voxels (leaf {}) -> {}",
        scans.len(),
        merged.len(),
        cropped.len(),
        voxel.len(),
        cfg.map.voxel_leaf,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- detect-plots

#[derive(Args)]
struct DetectPlotsArgs {
    /// Voxel map PLY to detect plots on.
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output plot grid JSON.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    z_threshold: Option<f64>,
    #[arg(long)]
    z_percentile: Option<f64>,
    #[arg(long)]
    z_offset: Option<f64>,
    #[arg(long)]
    yaw_bin_deg: Option<f64>,
    #[arg(long)]
    dim_bin: Option<f64>,
    /// Manual grid anchor "x,y" (center of plot row 0, col 0).
    #[arg(long, allow_hyphen_values = true)]
    anchor: Option<String>,
    /// Approximate grid-x heading; resolves the voted orientation's 90-degree
    /// ambiguity.
    #[arg(long, allow_hyphen_values = true)]
    grid_yaw_hint_deg: Option<f64>,
    #[arg(long)]
    pitch_x: Option<f64>,
    #[arg(long)]
    pitch_y: Option<f64>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    kmeans_seed: Option<u64>,
    /// Refine the anchor by snapping to the cluster centroids.
    #[arg(long)]
    snap: bool,
}

fn cmd_detect_plots(args: DetectPlotsArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(&args.config)?;
    let d = &mut cfg.detect;
    set(&mut d.k, args.k);
    if args.z_threshold.is_some() {
        d.z_threshold = args.z_threshold;
    }
    set(&mut d.z_percentile, args.z_percentile);
    set(&mut d.z_offset, args.z_offset);
    set(&mut d.yaw_bin_deg, args.yaw_bin_deg);
    set(&mut d.dim_bin, args.dim_bin);
    set(&mut d.grid_yaw_hint_deg, args.grid_yaw_hint_deg);
    set(&mut d.pitch_x, args.pitch_x);
    set(&mut d.pitch_y, args.pitch_y);
    set(&mut d.rows, args.rows);
    set(&mut d.cols, args.cols);
    set(&mut d.kmeans_seed, args.kmeans_seed);
    if let Some(spec) = &args.anchor {
        let v: Vec<f64> = spec
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("parsing --anchor {spec:?}"))?;
        if v.len() != 2 {
            bail!("--anchor needs 2 numbers, got {}", v.len());
        }
        d.anchor = Some([v[0], v[1]]);
    }

    let map = read_ply(&args.map)?;
    let z_min = match cfg.detect.z_threshold {
        Some(z) => z,
        None => {
            let zs: Vec<f64> = map.iter().map(|p| p.z).collect();
            plot_height(&zs, HeightMethod::Percentile(cfg.detect.z_percentile))?
                + cfg.detect.z_offset
        }
    };
    let vegetation = z_filter(&map, z_min);
    let clusters = kmeans_xy(&vegetation, &cfg.detect.kmeans_params())?;
    let boxes: Vec<OrientedBox> = clusters
        .iter()
        .map(|c| {
            let xy: Vec<Point2> = c
                .member_indices
                .iter()
                .map(|&i| vegetation.points[i].xy())
                .collect();
            min_area_obb(&xy)
        })
        .collect::<Result<_, _>>()?;
    let mut vote = vote_dimensions(&boxes, cfg.detect.yaw_bin(), cfg.detect.dim_bin)?;
    // The voted orientation is an axes cross (defined modulo 90 degrees);
    // pick the representative nearest the configured grid heading.
    let hint = cfg.detect.grid_yaw_hint_deg.to_radians();
    let wrapped = (vote.yaw - hint).rem_euclid(std::f64::consts::FRAC_PI_2);
    vote.yaw = hint
        + if wrapped > std::f64::consts::FRAC_PI_4 {
            wrapped - std::f64::consts::FRAC_PI_2
        } else {
            wrapped
        };

    let anchor = match cfg.detect.anchor_point() {
        Some(a) => a,
        None => {
            // No manual anchor: center the grid on the cluster centroids.
            let mut mean = Point2::new(0.0, 0.0);
            for c in &clusters {
                mean = mean + c.centroid;
            }
            let mean = mean * (1.0 / clusters.len() as f64);
            let (s, c) = vote.yaw.sin_cos();
            let gx = (cfg.detect.cols - 1) as f64 * cfg.detect.pitch_x * 0.5;
            let gy = (cfg.detect.rows - 1) as f64 * cfg.detect.pitch_y * 0.5;
            Point2::new(mean.x - (c * gx - s * gy), mean.y - (s * gx + c * gy))
        }
    };
    let mut grid = fit_grid(
        &vote,
        anchor,
        cfg.detect.pitch_x,
        cfg.detect.pitch_y,
        cfg.detect.rows,
        cfg.detect.cols,
    )?;
    if args.snap {
        grid = snap_grid_to_clusters(&grid, &clusters)?;
    }
    write_grid(&args.out, &grid)?;
    println!(
        "detect: z >= {:.3} kept {} of {} points; {} clusters",
        z_min,
        vegetation.len(),
        map.len(),
        clusters.len()
    );
    println!(
        "vote: yaw {:.2} deg ({} votes), width {:.3} m ({} votes), length {:.3} m ({} votes)",
        vote.yaw.to_degrees(),
        vote.yaw_votes,
        vote.width,
        vote.width_votes,
        vote.length,
        vote.length_votes
    );
    println!(
        "grid: anchor ({:.3}, {:.3}), {} x {} plots -> {}",
        grid.anchor.x,
        grid.anchor.y,
        grid.rows,
        grid.cols,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- estimate-heights

#[derive(Args)]
struct EstimateHeightsArgs {
    /// Voxel map PLY.
    #[arg(long)]
    voxel: PathBuf,
    /// Raw (full-resolution) map PLY to concatenate with the voxel data.
    #[arg(long)]
    raw: Option<PathBuf>,
    /// Plot grid JSON from detect-plots.
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output heights CSV.
    #[arg(long)]
    out: PathBuf,
    /// "max" or "percentile".
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    percentile: Option<f64>,
    #[arg(long)]
    extension: Option<f64>,
    #[arg(long)]
    ransac_threshold: Option<f64>,
    #[arg(long)]
    ransac_iters: Option<usize>,
    #[arg(long)]
    ransac_min_inliers: Option<usize>,
    #[arg(long)]
    ransac_seed: Option<u64>,
}

fn cmd_estimate_heights(args: EstimateHeightsArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(&args.config)?;
    set(&mut cfg.heights.method, args.method);
    set(&mut cfg.heights.percentile, args.percentile);
    set(&mut cfg.heights.extension, args.extension);
    set(
        &mut cfg.heights.ransac_dist_threshold,
        args.ransac_threshold,
    );
    set(&mut cfg.heights.ransac_max_iters, args.ransac_iters);
    set(&mut cfg.heights.ransac_min_inliers, args.ransac_min_inliers);
    set(&mut cfg.heights.ransac_seed, args.ransac_seed);

    let voxel = read_ply(&args.voxel)?;
    let raw = match &args.raw {
        Some(p) => read_ply(p)?,
        None => PointCloud::new(),
    };
    let grid = read_grid(&args.grid)?;
    let method = cfg.heights.height_method()?;
    let report = estimate_plot_heights(
        &voxel,
        &raw,
        &grid,
        &cfg.heights.ransac_params(),
        cfg.heights.extension,
        method,
    )?;
    write_heights_csv(&args.out, &report)?;
    let degenerate = report.plots.iter().filter(|p| p.degenerate).count();
    println!(
        "heights ({}): {} plots, {} degenerate -> {}",
        report.method,
        report.plots.len(),
        degenerate,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- evaluate

#[derive(Args)]
struct EvaluateArgs {
    /// Heights CSV from estimate-heights.
    #[arg(long)]
    estimates: PathBuf,
    /// Ground truth: farm manifest JSON or field CSV (plot_row,plot_col,height_m).
    #[arg(long)]
    truth: PathBuf,
    /// Output prefix; writes <prefix>.json, <prefix>.csv, <prefix>.svg.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    let estimates = read_heights_csv(&args.estimates)?;
    let truth = if args.truth.extension().is_some_and(|e| e == "json") {
        manifest_truth(&read_manifest(&args.truth)?)
    } else {
        read_field_truth_csv(&args.truth)?
    };
    let report = evaluate(&estimates, &truth)?;

    let with_ext = |ext: &str| args.out.with_extension(ext);
    phenolidar::io::write_json(&with_ext("json"), &report)?;
    std::fs::write(with_ext("csv"), report_csv(&report))
        .with_context(|| format!("writing {:?}", with_ext("csv")))?;
    std::fs::write(with_ext("svg"), histogram_svg(&report))
        .with_context(|| format!("writing {:?}", with_ext("svg")))?;

    println!(
        "evaluated {} plots ({} degenerate excluded)",
        report.n_evaluated, report.n_degenerate
    );
    println!(
        "RMSE {:.4} m ({:.2} cm), mean |%err| {:.2}%, mean signed %err {:+.2}%",
        report.rmse_m,
        report.rmse_m * 100.0,
        report.mean_abs_percent_error,
        report.mean_signed_percent_error
    );
    Ok(())
}
