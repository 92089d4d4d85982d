//! Exact integer convex hull and convex polygon rasterization.

use super::contour::Point;
use crate::image::BinaryMask;

/// Polygon with vertices in counterclockwise order (positive cross products,
/// with `x` as column and `y` as row).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polygon {
    pub vertices: Vec<Point>,
}

/// Cross product of `(a - o)` and `(b - o)`.
pub fn cross(o: Point, a: Point, b: Point) -> i64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Monotone chain hull. Collinear points on edges are dropped.
pub fn convex_hull(points: &[Point]) -> Polygon {
    let mut pts = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() <= 2 {
        return Polygon { vertices: pts };
    }

    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    // all collinear: the chain collapses to the two extremes
    if hull.len() == 2 && hull[0] == hull[1] {
        hull.pop();
    }
    Polygon { vertices: hull }
}

fn contains(poly: &Polygon, p: Point) -> bool {
    let v = &poly.vertices;
    match v.len() {
        0 => false,
        1 => v[0] == p,
        2 => {
            cross(v[0], v[1], p) == 0
                && p.x >= v[0].x.min(v[1].x)
                && p.x <= v[0].x.max(v[1].x)
                && p.y >= v[0].y.min(v[1].y)
                && p.y <= v[0].y.max(v[1].y)
        }
        n => (0..n).all(|i| cross(v[i], v[(i + 1) % n], p) >= 0),
    }
}

/// Every pixel inside or on the polygon, clipped to the image.
pub fn fill_convex_polygon(poly: &Polygon, width: usize, height: usize) -> BinaryMask {
    let mut mask = BinaryMask::empty(width, height);
    if poly.vertices.is_empty() || width == 0 || height == 0 {
        return mask;
    }
    let x0 = poly.vertices.iter().map(|p| p.x).min().unwrap().max(0);
    let x1 = poly.vertices.iter().map(|p| p.x).max().unwrap().min(width as i64 - 1);
    let y0 = poly.vertices.iter().map(|p| p.y).min().unwrap().max(0);
    let y1 = poly.vertices.iter().map(|p| p.y).max().unwrap().min(height as i64 - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            if contains(poly, Point::new(x, y)) {
                mask.set(x as usize, y as usize, true);
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(x: i64, y: i64) -> Point {
        Point::new(x, y)
    }

    #[test]
    fn square_with_centre() {
        let h = convex_hull(&[p(0, 0), p(4, 0), p(4, 4), p(0, 4), p(2, 2)]);
        assert_eq!(h.vertices, vec![p(0, 0), p(4, 0), p(4, 4), p(0, 4)]);
    }

    #[test]
    fn collinear_points() {
        let h = convex_hull(&[p(3, 3), p(1, 1), p(2, 2), p(0, 0)]);
        assert_eq!(h.vertices, vec![p(0, 0), p(3, 3)]);
        let h = convex_hull(&[p(5, 5), p(5, 5)]);
        assert_eq!(h.vertices, vec![p(5, 5)]);
    }

    #[test]
    fn edge_midpoints_are_dropped() {
        let h = convex_hull(&[p(0, 0), p(2, 0), p(4, 0), p(4, 2), p(0, 2)]);
        assert_eq!(h.vertices, vec![p(0, 0), p(4, 0), p(4, 2), p(0, 2)]);
    }

    #[test]
    fn fills() {
        let m = fill_convex_polygon(&Polygon { vertices: vec![p(2, 3)] }, 5, 5);
        assert_eq!(m.count(), 1);
        assert!(m.get(2, 3));

        let rect = convex_hull(&[p(1, 1), p(3, 1), p(3, 2), p(1, 2)]);
        let m = fill_convex_polygon(&rect, 6, 5);
        assert_eq!(m, BinaryMask::from_fn(6, 5, |c, r| (1..=3).contains(&c) && (1..=2).contains(&r)));

        let seg = Polygon { vertices: vec![p(0, 0), p(4, 2)] };
        let m = fill_convex_polygon(&seg, 5, 5);
        assert_eq!(m.count(), 3); // (0,0), (2,1), (4,2)
    }

    proptest! {
        #[test]
        fn hull_is_ccw_and_covers(pts in proptest::collection::vec((0i64..32, 0i64..32), 1..40)) {
            let pts: Vec<Point> = pts.into_iter().map(|(x, y)| p(x, y)).collect();
            let h = convex_hull(&pts);
            let n = h.vertices.len();
            if n >= 3 {
                for i in 0..n {
                    prop_assert!(cross(h.vertices[i], h.vertices[(i + 1) % n], h.vertices[(i + 2) % n]) > 0);
                }
            }
            let m = fill_convex_polygon(&h, 32, 32);
            for q in &pts {
                prop_assert!(m.get(q.x as usize, q.y as usize));
            }
        }
    }
}
