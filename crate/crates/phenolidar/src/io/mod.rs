//! File I/O: PLY clouds and the JSON/CSV pipeline formats.

pub mod formats;
pub mod ply;

pub use formats::{
    heights_csv_to_string, manifest_truth, parse_heights_csv, read_field_truth_csv, read_grid,
    read_heights_csv, read_json, read_manifest, read_trajectory, write_grid, write_heights_csv,
    write_json, write_manifest, write_trajectory, FarmManifest, HeightsCsvRow, TrajectoryRecord,
};
pub use ply::{parse_ply, ply_to_string, read_ply, write_ply};
