//! Incremental Delaunay triangulation (Bowyer-Watson) over 2D point sets.

use std::collections::HashSet;

use crate::cloud::Point2;
use crate::error::{Error, Result};

fn signed_area2(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Strict in-circumcircle test for a counter-clockwise triangle (a, b, c).
fn in_circumcircle(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let ax = a.x - d.x;
    let ay = a.y - d.y;
    let bx = b.x - d.x;
    let by = b.y - d.y;
    let cx = c.x - d.x;
    let cy = c.y - d.y;
    let aq = ax * ax + ay * ay;
    let bq = bx * bx + by * by;
    let cq = cx * cx + cy * cy;
    ax * (by * cq - bq * cy) - ay * (bx * cq - bq * cx) + aq * (bx * cy - by * cx) > 0.0
}

/// Triangulate the points, returning CCW index triples.
///
/// Bowyer-Watson insertion inside a large enclosing triangle whose vertices
/// are dropped at the end. Inputs are expected in general position (random
/// point sets); exact duplicates are rejected.
pub fn triangulate(points: &[Point2]) -> Result<Vec<[usize; 3]>> {
    let n = points.len();
    if n < 3 {
        return Err(Error::InsufficientPoints { needed: 3, got: n });
    }
    {
        let mut seen: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.y)).collect();
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::DegenerateInput(
                "duplicate vertices in triangulation input".into(),
            ));
        }
    }

    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        min_x = min_x.min(p.x);
        min_y = min_y.min(p.y);
        max_x = max_x.max(p.x);
        max_y = max_y.max(p.y);
    }
    let cx = (min_x + max_x) * 0.5;
    let cy = (min_y + max_y) * 0.5;
    let d = (max_x - min_x).max(max_y - min_y).max(1.0);

    let mut verts: Vec<Point2> = points.to_vec();
    verts.push(Point2::new(cx - 20.0 * d, cy - 10.0 * d));
    verts.push(Point2::new(cx + 20.0 * d, cy - 10.0 * d));
    verts.push(Point2::new(cx, cy + 20.0 * d));

    let ccw = |t: [usize; 3], verts: &[Point2]| -> [usize; 3] {
        if signed_area2(verts[t[0]], verts[t[1]], verts[t[2]]) < 0.0 {
            [t[0], t[2], t[1]]
        } else {
            t
        }
    };

    let mut tris: Vec<[usize; 3]> = vec![ccw([n, n + 1, n + 2], &verts)];
    for pi in 0..n {
        let p = verts[pi];
        let mut bad: Vec<[usize; 3]> = Vec::new();
        tris.retain(|t| {
            if in_circumcircle(verts[t[0]], verts[t[1]], verts[t[2]], p) {
                bad.push(*t);
                false
            } else {
                true
            }
        });
        // Cavity boundary: directed edges of bad triangles whose reverse is
        // not itself a bad-triangle edge. Orientation keeps the fans CCW.
        let mut directed: HashSet<(usize, usize)> = HashSet::new();
        for t in &bad {
            directed.insert((t[0], t[1]));
            directed.insert((t[1], t[2]));
            directed.insert((t[2], t[0]));
        }
        for t in &bad {
            for &(a, b) in &[(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                if !directed.contains(&(b, a)) {
                    tris.push([a, b, pi]);
                }
            }
        }
    }

    tris.retain(|t| t.iter().all(|&i| i < n));
    Ok(tris)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn square_corners_give_two_triangles() {
        let pts = [
            Point2::new(0.0, 0.0),
            Point2::new(10.0, 0.0),
            Point2::new(10.0, 10.0),
            Point2::new(0.0, 10.0),
        ];
        let tris = triangulate(&pts).unwrap();
        assert_eq!(tris.len(), 2);
        // Coverage of the square regardless of which diagonal was chosen.
        let area: f64 = tris
            .iter()
            .map(|t| signed_area2(pts[t[0]], pts[t[1]], pts[t[2]]).abs() * 0.5)
            .sum();
        assert!((area - 100.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(triangulate(&[Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)]).is_err());
        assert!(triangulate(&[
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 0.0),
        ])
        .is_err());
    }

    #[test]
    fn empty_circumcircle_property_holds() {
        for seed in 0..6 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(10..200);
            let mut pts = vec![
                Point2::new(0.0, 0.0),
                Point2::new(30.0, 0.0),
                Point2::new(30.0, 30.0),
                Point2::new(0.0, 30.0),
            ];
            for _ in 0..n {
                pts.push(Point2::new(
                    rng.random::<f64>() * 30.0,
                    rng.random::<f64>() * 30.0,
                ));
            }
            let tris = triangulate(&pts).unwrap();
            for t in &tris {
                for (vi, v) in pts.iter().enumerate() {
                    if t.contains(&vi) {
                        continue;
                    }
                    assert!(
                        !in_circumcircle(pts[t[0]], pts[t[1]], pts[t[2]], *v),
                        "seed {seed}: vertex {vi} inside circumcircle of {t:?}"
                    );
                }
            }
        }
    }
}
