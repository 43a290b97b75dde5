//! ASCII PLY point-cloud reader/writer.
//!
//! The canonical layout is `element vertex N` with float properties x, y, z.
//! Coordinates are written in fixed decimal notation rounded to 6
//! significant digits with trailing zeros trimmed; parsing back and
//! rewriting reproduces the bytes exactly. Non-finite coordinates are
//! rejected at ingestion.

use std::fs;
use std::path::Path;

use crate::cloud::{Point3, PointCloud};
use crate::error::{Error, Result};

/// Fixed-notation rendering with 6 significant digits, trailing zeros
/// trimmed. `-0.0` renders as `0`.
pub fn fmt_coord(v: f32) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let exp = (v.abs() as f64).log10().floor() as i32;
    let decimals = (5 - exp).max(0) as usize;
    let s = format!("{:.*}", decimals, v);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn ply_to_string(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(64 + cloud.len() * 24);
    out.push_str("ply\nformat ascii 1.0\n");
    out.push_str(&format!("element vertex {}\n", cloud.len()));
    out.push_str("property float x\nproperty float y\nproperty float z\nend_header\n");
    for p in cloud.iter() {
        out.push_str(&fmt_coord(p.x as f32));
        out.push(' ');
        out.push_str(&fmt_coord(p.y as f32));
        out.push(' ');
        out.push_str(&fmt_coord(p.z as f32));
        out.push('\n');
    }
    out
}

pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    fs::write(path, ply_to_string(cloud)).map_err(|e| Error::io(path, e))
}

pub fn parse_ply(text: &str, path: &Path) -> Result<PointCloud> {
    let err = |line: usize, msg: &str| Error::PlyParse {
        path: path.to_path_buf(),
        line,
        msg: msg.to_string(),
    };

    let mut lines = text.lines().enumerate();
    let mut next_content = |skip_comments: bool| -> Option<(usize, &str)> {
        for (i, raw) in lines.by_ref() {
            let t = raw.trim();
            if t.is_empty() {
                continue;
            }
            if skip_comments && (t.starts_with("comment") || t.starts_with("obj_info")) {
                continue;
            }
            return Some((i + 1, t));
        }
        None
    };

    match next_content(true) {
        Some((_, "ply")) => {}
        Some((n, _)) => return Err(err(n, "expected magic line \"ply\"")),
        None => return Err(err(1, "empty file")),
    }
    match next_content(true) {
        Some((_, "format ascii 1.0")) => {}
        Some((n, t)) => {
            return Err(err(
                n,
                &format!("unsupported format line {t:?} (only ascii 1.0)"),
            ))
        }
        None => return Err(err(2, "missing format line")),
    }

    let mut n_vertices: Option<usize> = None;
    let mut properties: Vec<String> = Vec::new();
    loop {
        let (n, t) = match next_content(true) {
            Some(v) => v,
            None => return Err(err(0, "missing end_header")),
        };
        if t == "end_header" {
            break;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        match fields.as_slice() {
            ["element", "vertex", count] => {
                let count: usize = count.parse().map_err(|_| err(n, "bad vertex count"))?;
                if n_vertices.replace(count).is_some() {
                    return Err(err(n, "duplicate vertex element"));
                }
            }
            ["element", other, ..] => {
                return Err(err(n, &format!("unsupported element {other:?}")))
            }
            ["property", ty, name] => {
                if *ty != "float" && *ty != "float32" {
                    return Err(err(n, &format!("unsupported property type {ty:?}")));
                }
                properties.push((*name).to_string());
            }
            _ => return Err(err(n, &format!("unrecognized header line {t:?}"))),
        }
    }
    let n_vertices = n_vertices.ok_or_else(|| err(0, "missing element vertex line"))?;
    if properties != ["x", "y", "z"] {
        return Err(err(
            0,
            &format!("expected float properties x, y, z; got {properties:?}"),
        ));
    }

    let mut points = Vec::with_capacity(n_vertices);
    while points.len() < n_vertices {
        let (n, t) = match next_content(false) {
            Some(v) => v,
            None => {
                return Err(err(
                    0,
                    &format!(
                        "expected {n_vertices} vertices, file ends after {}",
                        points.len()
                    ),
                ))
            }
        };
        let mut it = t.split_whitespace();
        let mut coord = [0.0f64; 3];
        for c in coord.iter_mut() {
            let tok = it.next().ok_or_else(|| err(n, "vertex line too short"))?;
            let v: f32 = tok
                .parse()
                .map_err(|_| err(n, &format!("bad float {tok:?}")))?;
            if !v.is_finite() {
                return Err(err(n, &format!("non-finite coordinate {tok:?}")));
            }
            *c = v as f64;
        }
        if it.next().is_some() {
            return Err(err(n, "vertex line has extra fields"));
        }
        points.push(Point3::new(coord[0], coord[1], coord[2]));
    }
    if let Some((n, _)) = next_content(false) {
        return Err(err(n, "trailing data after last vertex"));
    }
    Ok(PointCloud::from_points(points))
}

pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::path::PathBuf;

    fn path() -> PathBuf {
        PathBuf::from("test.ply")
    }

    #[test]
    fn fmt_coord_cases() {
        assert_eq!(fmt_coord(0.0), "0");
        assert_eq!(fmt_coord(-0.0), "0");
        assert_eq!(fmt_coord(1.5), "1.5");
        assert_eq!(fmt_coord(2.0), "2");
        assert_eq!(fmt_coord(-12.25), "-12.25");
        assert_eq!(fmt_coord(0.123_456_79), "0.123457");
        assert_eq!(fmt_coord(123.456_79), "123.457");
        assert_eq!(fmt_coord(100000.0), "100000");
        assert_eq!(fmt_coord(0.000123456), "0.000123456");
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let cloud: PointCloud = (0..2000)
            .map(|_| {
                Point3::new(
                    (rng.random::<f64>() - 0.5) * 200.0,
                    (rng.random::<f64>() - 0.5) * 200.0,
                    (rng.random::<f64>() - 0.5) * 30.0,
                )
            })
            .collect();
        let first = ply_to_string(&cloud);
        let parsed = parse_ply(&first, &path()).unwrap();
        let second = ply_to_string(&parsed);
        assert_eq!(first, second);
        assert_eq!(parsed.len(), cloud.len());
    }

    #[test]
    fn round_trip_extreme_values() {
        let cloud = PointCloud::from_points(vec![
            Point3::new(0.0, -0.0, 1e-30),
            Point3::new(1e-9, -1e-9, 9.999999e5),
            Point3::new(1234567.0, -0.001234, 99.99999),
        ]);
        let first = ply_to_string(&cloud);
        let second = ply_to_string(&parse_ply(&first, &path()).unwrap());
        assert_eq!(first, second);
    }

    #[test]
    fn rejects_non_finite() {
        let text = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n1.0 nan 0.0\n";
        match parse_ply(text, &path()) {
            Err(Error::PlyParse { msg, .. }) => assert!(msg.contains("non-finite")),
            other => panic!("expected parse error, got {other:?}"),
        }
        let text = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\ninf 0 0\n";
        assert!(parse_ply(text, &path()).is_err());
    }

    #[test]
    fn rejects_malformed_headers() {
        assert!(parse_ply("", &path()).is_err());
        assert!(parse_ply("ply\nformat binary_little_endian 1.0\n", &path()).is_err());
        let missing_prop =
            "ply\nformat ascii 1.0\nelement vertex 0\nproperty float x\nend_header\n";
        assert!(parse_ply(missing_prop, &path()).is_err());
        let face = "ply\nformat ascii 1.0\nelement vertex 0\nproperty float x\nproperty float y\nproperty float z\nelement face 2\nend_header\n";
        assert!(parse_ply(face, &path()).is_err());
    }

    #[test]
    fn rejects_count_mismatch() {
        let short = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n";
        assert!(parse_ply(short, &path()).is_err());
        let long = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 1 1\n";
        assert!(parse_ply(long, &path()).is_err());
    }

    #[test]
    fn accepts_comments_and_blank_lines() {
        let text = "ply\ncomment made by hand\nformat ascii 1.0\ncomment n=1\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n\n0.5 1 -2\n";
        let cloud = parse_ply(text, &path()).unwrap();
        assert_eq!(cloud.len(), 1);
        assert_eq!(cloud.points[0], Point3::new(0.5, 1.0, -2.0));
    }

    #[test]
    fn empty_cloud_round_trips() {
        let s = ply_to_string(&PointCloud::new());
        let parsed = parse_ply(&s, &path()).unwrap();
        assert!(parsed.is_empty());
        assert_eq!(ply_to_string(&parsed), s);
    }
}
