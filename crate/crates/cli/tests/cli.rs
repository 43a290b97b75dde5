//! CLI behavior checks that the acceptance suite does not exercise: the
//! automatic grid placement, field-CSV ground truth, and error exits.

use std::path::Path;
use std::process::Command;

use phenolidar::config::PipelineConfig;
use phenolidar::io::{read_grid, read_manifest};

fn phenolidar(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_phenolidar"))
        .args(args)
        .output()
        .expect("spawn phenolidar")
}

fn ok(args: &[&str]) {
    let out = phenolidar(args);
    assert!(
        out.status.success(),
        "phenolidar {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn auto_anchor_snap_and_field_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let p = |n: &str| root.join(n).to_str().unwrap().to_string();

    let mut cfg = PipelineConfig::default();
    cfg.farm.farm_size = 16.0;
    cfg.farm.n_vertices = 8;
    cfg.farm.height_range = 0.0;
    cfg.farm.rows = 2;
    cfg.farm.plots_per_row = 3;
    cfg.farm.plants_per_plot = 30;
    cfg.sensor.azimuth_step_deg = 1.0;
    cfg.flight.sample_spacing = 1.5;
    cfg.detect.k = 6;
    cfg.detect.rows = 2;
    cfg.detect.cols = 3;
    cfg.heights.ransac_min_inliers = 25;
    cfg.save(&root.join("config.json")).unwrap();
    let cfg_arg = p("config.json");

    ok(&["gen-farm", "--config", &cfg_arg, "--out", &p("farm.json")]);
    ok(&[
        "sim-scan",
        "--config",
        &cfg_arg,
        "--manifest",
        &p("farm.json"),
        "--out-dir",
        &p("scans"),
    ]);
    ok(&[
        "build-map",
        "--config",
        &cfg_arg,
        "--scan-dir",
        &p("scans"),
        "--trajectory",
        &p("scans/trajectory.json"),
        "--out",
        &p("voxel.ply"),
        "--raw-out",
        &p("raw.ply"),
    ]);
    // No --anchor: the grid centers itself on the clusters, then snaps.
    ok(&[
        "detect-plots",
        "--config",
        &cfg_arg,
        "--map",
        &p("voxel.ply"),
        "--out",
        &p("grid.json"),
        "--snap",
    ]);
    let grid = read_grid(&root.join("grid.json")).unwrap();
    let truth = read_manifest(&root.join("farm.json")).unwrap().ground_truth;
    let off = (grid.anchor - truth.grid.anchor).norm();
    assert!(off < 0.3, "auto-placed anchor {off:.3} m from truth");

    ok(&[
        "estimate-heights",
        "--config",
        &cfg_arg,
        "--voxel",
        &p("voxel.ply"),
        "--raw",
        &p("raw.ply"),
        "--grid",
        &p("grid.json"),
        "--out",
        &p("heights.csv"),
    ]);

    // Field ground truth via CSV instead of the manifest.
    let mut csv = String::from("plot_row,plot_col,height_m\n");
    for plot in &truth.plots {
        csv.push_str(&format!("{},{},{}\n", plot.row, plot.col, plot.true_height));
    }
    std::fs::write(root.join("field.csv"), csv).unwrap();
    ok(&[
        "evaluate",
        "--estimates",
        &p("heights.csv"),
        "--truth",
        &p("field.csv"),
        "--out",
        &p("eval"),
    ]);
    for ext in ["json", "csv", "svg"] {
        assert!(
            Path::new(&p(&format!("eval.{ext}"))).exists(),
            "missing eval.{ext}"
        );
    }
}

#[test]
fn missing_inputs_exit_nonzero() {
    let out = phenolidar(&[
        "detect-plots",
        "--map",
        "/nonexistent/map.ply",
        "--out",
        "/tmp/never.json",
    ]);
    assert!(!out.status.success());

    let out = phenolidar(&[
        "evaluate",
        "--estimates",
        "/nope.csv",
        "--truth",
        "/nope.json",
        "--out",
        "/tmp/x",
    ]);
    assert!(!out.status.success());
}

#[test]
fn config_with_unknown_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("config.json");
    std::fs::write(&cfg, r#"{"detect": {"kk": 30}}"#).unwrap();
    let out = phenolidar(&[
        "gen-farm",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().join("farm.json").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("kk") || err.contains("unknown"),
        "stderr: {err}"
    );
}

#[test]
fn checked_in_configs_parse_and_match_defaults() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let default = PipelineConfig::load(&configs.join("default.json")).unwrap();
    assert_eq!(
        default,
        PipelineConfig::default(),
        "configs/default.json drifted from the built-in defaults"
    );
    let kentland = PipelineConfig::load(&configs.join("kentland.json")).unwrap();
    assert_eq!(kentland.detect.k, 112);
    assert_eq!(kentland.detect.rows * kentland.detect.cols, 112);
}

#[test]
fn pairing_mismatch_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    std::fs::write(
        root.join("heights.csv"),
        "plot_row,plot_col,center_x,center_y,n_points,est_height_m,method,degenerate_flag\n\
         0,0,1.0,1.0,100,0.9,max,0\n\
         4,7,2.0,2.0,100,0.8,max,0\n",
    )
    .unwrap();
    std::fs::write(
        root.join("field.csv"),
        "plot_row,plot_col,height_m\n0,0,0.95\n1,1,0.85\n",
    )
    .unwrap();
    let out = phenolidar(&[
        "evaluate",
        "--estimates",
        root.join("heights.csv").to_str().unwrap(),
        "--truth",
        root.join("field.csv").to_str().unwrap(),
        "--out",
        root.join("eval").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("(4, 7)") && err.contains("(1, 1)"),
        "stderr: {err}"
    );
}
