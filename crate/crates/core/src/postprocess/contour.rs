//! Outer-border following and scanline filling.

use crate::error::{Error, Result};
use crate::image::BinaryMask;

/// Integer pixel position; `x` is the column, `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point {
    pub x: i64,
    pub y: i64,
}

impl Point {
    pub const fn new(x: i64, y: i64) -> Self {
        Point { x, y }
    }
}

/// Closed 8-connected outer border of one foreground component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contour {
    pub points: Vec<Point>,
}

// Neighbour offsets in clockwise order on screen (rows grow downward), starting east.
const DIRS: [(i64, i64); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

fn dir_index(from: Point, to: Point) -> usize {
    let d = (to.x - from.x, to.y - from.y);
    DIRS.iter().position(|&o| o == d).expect("points are 8-adjacent")
}

fn step(p: Point, d: usize) -> Point {
    Point::new(p.x + DIRS[d].0, p.y + DIRS[d].1)
}

/// Follow the outer border starting at `start`, whose west neighbour is background.
fn trace_outer(mask: &BinaryMask, start: Point) -> Contour {
    let fg = |p: Point| mask.get_signed(p.x, p.y);

    // clockwise search from the west neighbour
    let west = 4;
    let Some(first) = (0..8).map(|k| (west + k) % 8).find(|&d| fg(step(start, d))) else {
        return Contour { points: vec![start] };
    };
    let p1 = step(start, first);

    let mut points = Vec::new();
    let mut prev = p1;
    let mut cur = start;
    loop {
        // counter-clockwise search around `cur`, starting just after `prev`
        let back = dir_index(cur, prev);
        let next = (1..=8)
            .map(|k| (back + 8 - k) % 8)
            .map(|d| step(cur, d))
            .find(|&p| fg(p))
            .expect("component has at least two pixels");
        points.push(cur);
        if next == start && cur == p1 {
            break;
        }
        prev = cur;
        cur = next;
    }
    Contour { points }
}

/// Outer borders of every 8-connected foreground component, ordered by each
/// component's first pixel in raster order. Hole borders are not reported.
pub fn find_contours(mask: &BinaryMask) -> Vec<Contour> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if !mask.bits()[i] || seen[i] {
                continue;
            }
            out.push(trace_outer(mask, Point::new(c as i64, r as i64)));
            seen[i] = true;
            queue.push(i);
            while let Some(k) = queue.pop() {
                let (kc, kr) = ((k % w) as i64, (k / w) as i64);
                for (dx, dy) in DIRS {
                    let (nc, nr) = (kc + dx, kr + dy);
                    if mask.get_signed(nc, nr) {
                        let ni = nr as usize * w + nc as usize;
                        if !seen[ni] {
                            seen[ni] = true;
                            queue.push(ni);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Pixels on or inside the contour, by even-odd crossings of the border
/// polygon through pixel centres.
pub fn fill_contour(contour: &Contour, width: usize, height: usize) -> Result<BinaryMask> {
    if contour.points.is_empty() {
        return Err(Error::invalid("empty contour"));
    }
    if let Some(p) = contour
        .points
        .iter()
        .find(|p| p.x < 0 || p.y < 0 || p.x as usize >= width || p.y as usize >= height)
    {
        return Err(Error::invalid(format!(
            "contour point ({}, {}) outside {}x{}",
            p.x, p.y, width, height
        )));
    }
    let mut mask = BinaryMask::empty(width, height);
    for p in &contour.points {
        mask.set(p.x as usize, p.y as usize, true);
    }
    let n = contour.points.len();
    if n < 2 {
        return Ok(mask);
    }

    // Half-open rule: an edge between rows y and y+1 crosses row y at its upper endpoint.
    let mut crossings: Vec<Vec<i64>> = vec![Vec::new(); height];
    for k in 0..n {
        let a = contour.points[k];
        let b = contour.points[(k + 1) % n];
        if a.y == b.y {
            continue;
        }
        let upper = if a.y < b.y { a } else { b };
        crossings[upper.y as usize].push(upper.x);
    }
    for (r, xs) in crossings.iter_mut().enumerate() {
        if xs.len() < 2 {
            continue;
        }
        xs.sort_unstable();
        let mut left_of = 0usize;
        for c in 0..width as i64 {
            while left_of < xs.len() && xs[left_of] <= c {
                left_of += 1;
            }
            if (xs.len() - left_of) % 2 == 1 {
                mask.set(c as usize, r, true);
            }
        }
    }
    Ok(mask)
}
