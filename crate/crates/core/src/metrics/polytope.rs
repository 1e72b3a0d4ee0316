//! Convex polytopes as face lists: half-space clipping, brute-force convex
//! hulls of small point sets, and volumes by tetrahedral decomposition.

use nalgebra::{Point3, Vector3};

/// Points within this distance of a clipping plane count as inside.
pub const CLIP_TOLERANCE: f64 = 1e-9;

/// A closed convex polytope stored as its faces. Face winding is not
/// tracked; volume only needs each face to be a convex polygon.
#[derive(Debug, Clone, Default)]
pub struct Polytope {
    faces: Vec<Vec<Point3<f64>>>,
}

/// Half-space `normal · x ≤ offset`.
#[derive(Debug, Clone, Copy)]
pub struct HalfSpace {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl HalfSpace {
    fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        self.normal.dot(&p.coords) - self.offset
    }
}

/// Corner indices of the six faces of a box in `CORNER_SIGNS` order.
const BOX_FACES: [[usize; 4]; 6] = [
    [0, 2, 6, 4],
    [1, 3, 7, 5],
    [0, 1, 5, 4],
    [2, 3, 7, 6],
    [0, 1, 3, 2],
    [4, 5, 7, 6],
];

impl Polytope {
    pub fn from_box_corners(c: &[Point3<f64>; 8]) -> Self {
        Self {
            faces: BOX_FACES
                .iter()
                .map(|f| f.iter().map(|&i| c[i]).collect())
                .collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn faces(&self) -> &[Vec<Point3<f64>>] {
        &self.faces
    }

    /// Keeps the part of the polytope with `normal · x ≤ offset`.
    pub fn clip(&self, plane: &HalfSpace) -> Polytope {
        let mut any_outside = false;
        let mut any_inside = false;
        for p in self.faces.iter().flatten() {
            if plane.signed_distance(p) > CLIP_TOLERANCE {
                any_outside = true;
            } else {
                any_inside = true;
            }
        }
        if !any_outside {
            return self.clone();
        }
        if !any_inside {
            return Polytope::default();
        }

        let mut faces = Vec::with_capacity(self.faces.len() + 1);
        let mut on_plane: Vec<Point3<f64>> = Vec::new();
        for face in &self.faces {
            let clipped = clip_polygon(face, plane);
            for p in &clipped {
                if plane.signed_distance(p).abs() <= CLIP_TOLERANCE {
                    push_unique(&mut on_plane, *p);
                }
            }
            if distinct_count(&clipped) >= 3 {
                faces.push(clipped);
            }
        }
        if on_plane.len() >= 3 {
            faces.push(order_coplanar(on_plane, &plane.normal));
        }
        Polytope { faces }
    }

    pub fn volume(&self) -> f64 {
        let (sum, count) = self
            .faces
            .iter()
            .flatten()
            .fold((Vector3::zeros(), 0usize), |(s, n), p| {
                (s + p.coords, n + 1)
            });
        if count == 0 {
            return 0.0;
        }
        let reference = Point3::from(sum / count as f64);
        let mut volume = 0.0;
        for face in &self.faces {
            let a = face[0] - reference;
            for w in face[1..].windows(2) {
                let b = w[0] - reference;
                let c = w[1] - reference;
                volume += a.dot(&b.cross(&c)).abs();
            }
        }
        volume / 6.0
    }
}

fn clip_polygon(face: &[Point3<f64>], plane: &HalfSpace) -> Vec<Point3<f64>> {
    let mut out = Vec::with_capacity(face.len() + 2);
    let n = face.len();
    for i in 0..n {
        let a = face[i];
        let b = face[(i + 1) % n];
        let sa = plane.signed_distance(&a);
        let sb = plane.signed_distance(&b);
        let a_in = sa <= CLIP_TOLERANCE;
        let b_in = sb <= CLIP_TOLERANCE;
        if a_in {
            out.push(a);
        }
        // Only edges that cross the plane strictly get a new vertex; a vertex
        // lying on the plane is already emitted as itself.
        if (a_in && !b_in && sa < -CLIP_TOLERANCE) || (!a_in && b_in && sb < -CLIP_TOLERANCE) {
            let t = sa / (sa - sb);
            out.push(a + (b - a) * t);
        }
    }
    out
}

fn same_point(a: &Point3<f64>, b: &Point3<f64>) -> bool {
    (a - b).norm() <= CLIP_TOLERANCE
}

fn push_unique(points: &mut Vec<Point3<f64>>, p: Point3<f64>) {
    if !points.iter().any(|q| same_point(q, &p)) {
        points.push(p);
    }
}

fn distinct_count(points: &[Point3<f64>]) -> usize {
    let mut seen: Vec<Point3<f64>> = Vec::with_capacity(points.len());
    for p in points {
        push_unique(&mut seen, *p);
    }
    seen.len()
}

/// Monotone stand-in for `atan2` with range `[0, 4)`; avoids libm so
/// results are identical across platforms.
fn pseudo_angle(x: f64, y: f64) -> f64 {
    let denom = x.abs() + y.abs();
    if denom == 0.0 {
        return 0.0;
    }
    let p = x / denom;
    if y >= 0.0 {
        1.0 - p
    } else {
        3.0 + p
    }
}

/// Orders points lying in a common plane counter-clockwise about `normal`.
fn order_coplanar(points: Vec<Point3<f64>>, normal: &Vector3<f64>) -> Vec<Point3<f64>> {
    let n = normal.normalize();
    let helper = if n.x.abs() < 0.6 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let e1 = n.cross(&helper).normalize();
    let e2 = n.cross(&e1);
    let centroid = points.iter().fold(Vector3::zeros(), |s, p| s + p.coords) / points.len() as f64;
    let mut keyed: Vec<(f64, Point3<f64>)> = points
        .into_iter()
        .map(|p| {
            let d = p.coords - centroid;
            (pseudo_angle(d.dot(&e1), d.dot(&e2)), p)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    keyed.into_iter().map(|(_, p)| p).collect()
}

/// Convex hull of a small point set by testing every point triple as a
/// candidate supporting plane. O(n⁴); intended for the 16 corners of a box
/// pair.
pub fn convex_hull(points: &[Point3<f64>]) -> Polytope {
    let mut pts: Vec<Point3<f64>> = Vec::with_capacity(points.len());
    for p in points {
        push_unique(&mut pts, *p);
    }
    assert!(pts.len() <= 64, "brute-force hull is limited to 64 points");
    let n = pts.len();
    if n < 4 {
        return Polytope::default();
    }
    let extent = pts.iter().map(|p| p.coords.amax()).fold(1.0f64, f64::max);
    let tol = CLIP_TOLERANCE * extent;

    let mut seen_masks: Vec<u64> = Vec::new();
    let mut faces = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let normal = (pts[j] - pts[i]).cross(&(pts[k] - pts[i]));
                let len = normal.norm();
                if len <= tol * extent {
                    continue;
                }
                let normal = normal / len;
                let offset = normal.dot(&pts[i].coords);
                let mut above = false;
                let mut below = false;
                let mut mask = 0u64;
                for (m, p) in pts.iter().enumerate() {
                    let s = normal.dot(&p.coords) - offset;
                    if s > tol {
                        above = true;
                    } else if s < -tol {
                        below = true;
                    } else {
                        mask |= 1 << m;
                    }
                }
                if above && below {
                    continue;
                }
                if seen_masks.contains(&mask) {
                    continue;
                }
                seen_masks.push(mask);
                let on_plane: Vec<Point3<f64>> = (0..n)
                    .filter(|m| mask & (1 << m) != 0)
                    .map(|m| pts[m])
                    .collect();
                faces.push(order_coplanar(on_plane, &normal));
            }
        }
    }
    Polytope { faces }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cuboid(min: [f64; 3], max: [f64; 3]) -> [Point3<f64>; 8] {
        std::array::from_fn(|i| {
            Point3::new(
                if i & 1 == 0 { min[0] } else { max[0] },
                if i & 2 == 0 { min[1] } else { max[1] },
                if i & 4 == 0 { min[2] } else { max[2] },
            )
        })
    }

    #[test]
    fn box_volume() {
        let p = Polytope::from_box_corners(&cuboid([0.0, 0.0, 0.0], [2.0, 3.0, 4.0]));
        assert!((p.volume() - 24.0).abs() < 1e-12);
    }

    #[test]
    fn clip_halves_a_cube() {
        let p = Polytope::from_box_corners(&cuboid([0.0; 3], [1.0; 3]));
        let half = p.clip(&HalfSpace {
            normal: Vector3::x(),
            offset: 0.5,
        });
        assert!((half.volume() - 0.5).abs() < 1e-12);
        let corner = p.clip(&HalfSpace {
            normal: Vector3::new(1.0, 1.0, 1.0).normalize(),
            offset: 1.0 / 3f64.sqrt(),
        });
        // Plane x + y + z = 1 cuts off the unit tetrahedron at the origin.
        assert!((corner.volume() - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn clip_touching_plane_gives_zero_volume() {
        let p = Polytope::from_box_corners(&cuboid([0.0; 3], [1.0; 3]));
        let sliver = p.clip(&HalfSpace {
            normal: -Vector3::x(),
            offset: -1.0,
        });
        assert_eq!(sliver.volume(), 0.0);
        let gone = p.clip(&HalfSpace {
            normal: -Vector3::x(),
            offset: -1.5,
        });
        assert!(gone.is_empty());
        assert_eq!(gone.volume(), 0.0);
    }

    #[test]
    fn hull_of_two_separated_cubes_is_slab() {
        let mut pts = cuboid([0.0; 3], [1.0; 3]).to_vec();
        pts.extend(cuboid([2.0, 0.0, 0.0], [3.0, 1.0, 1.0]));
        assert!((convex_hull(&pts).volume() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn hull_of_nested_cubes_is_outer() {
        let mut pts = cuboid([0.0; 3], [1.0; 3]).to_vec();
        pts.extend(cuboid([0.25; 3], [0.75; 3]));
        assert!((convex_hull(&pts).volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hull_of_tetrahedron_and_planar_points() {
        let tet = [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        assert!((convex_hull(&tet).volume() - 1.0 / 6.0).abs() < 1e-15);
        let flat = [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(1.0, 1.0, 0.0),
        ];
        assert_eq!(convex_hull(&flat).volume(), 0.0);
    }

    #[test]
    fn pseudo_angle_is_monotone() {
        let mut prev = -1.0;
        for i in 0..64 {
            let t = i as f64 / 64.0 * std::f64::consts::TAU;
            let a = pseudo_angle(t.cos(), t.sin());
            assert!(a > prev && a < 4.0);
            prev = a;
        }
    }
}
