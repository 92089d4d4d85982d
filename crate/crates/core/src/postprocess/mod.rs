//! Geometric cleanup of a predicted mask.
//!
//! Keep the connected region that best overlaps the previous slice's
//! foreground (this drops stray blobs and fills holes), then replace it with
//! its convex hull to close notches along the border.

mod contour;
mod hull;

pub use contour::{fill_contour, find_contours, Contour, Point};
pub use hull::{convex_hull, cross, fill_convex_polygon, Polygon};

use crate::error::{Error, Result};
use crate::image::BinaryMask;

/// Contour whose filled area overlaps `prev` the most. Ties go to the larger
/// filled area, then to the earlier contour. `None` when nothing overlaps.
pub fn select_max_overlap<'a>(contours: &'a [Contour], prev: &BinaryMask) -> Option<&'a Contour> {
    let mut best: Option<(usize, usize, &Contour)> = None;
    for c in contours {
        let Ok(fill) = fill_contour(c, prev.width(), prev.height()) else {
            continue;
        };
        let overlap = fill.intersection_count(prev);
        if overlap == 0 {
            continue;
        }
        let area = fill.count();
        if best.is_none_or(|(bo, ba, _)| overlap > bo || (overlap == bo && area > ba)) {
            best = Some((overlap, area, c));
        }
    }
    best.map(|(_, _, c)| c)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cleaned {
    pub mask: BinaryMask,
    /// Nothing overlapped the previous foreground; `mask` is a copy of it.
    pub used_fallback: bool,
}

pub fn post_process(raw: &BinaryMask, prev: &BinaryMask) -> Result<Cleaned> {
    if !raw.same_shape(prev) {
        return Err(Error::invalid(format!(
            "raw mask {}x{} vs previous {}x{}",
            raw.width(),
            raw.height(),
            prev.width(),
            prev.height()
        )));
    }
    let contours = find_contours(raw);
    let Some(best) = select_max_overlap(&contours, prev) else {
        return Ok(Cleaned {
            mask: prev.clone(),
            used_fallback: true,
        });
    };
    let region = fill_contour(best, raw.width(), raw.height())?;
    let pixels: Vec<Point> = region
        .foreground()
        .map(|(c, r)| Point::new(c as i64, r as i64))
        .collect();
    let hull = convex_hull(&pixels);
    let mask = fill_convex_polygon(&hull, raw.width(), raw.height());
    debug_assert!(region.is_subset_of(&mask));
    Ok(Cleaned {
        mask,
        used_fallback: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(w: usize, h: usize, cx: f64, cy: f64, r: f64) -> BinaryMask {
        BinaryMask::from_fn(w, h, |c, rr| {
            let dx = c as f64 - cx;
            let dy = rr as f64 - cy;
            dx * dx + dy * dy <= r * r
        })
    }

    #[test]
    fn rectangle_passes_through() {
        let rect = BinaryMask::from_fn(20, 20, |c, r| (4..12).contains(&c) && (6..15).contains(&r));
        let prev = BinaryMask::from_fn(20, 20, |c, r| (5..10).contains(&c) && (5..10).contains(&r));
        let out = post_process(&rect, &prev).unwrap();
        assert!(!out.used_fallback);
        assert_eq!(out.mask, rect);
    }

    #[test]
    fn blobs_holes_and_notch() {
        let (w, h) = (64, 64);
        let truth = disk(w, h, 30.0, 30.0, 14.0);
        let mut raw = truth.clone();
        // holes
        for (c, r) in [(28, 28), (29, 28), (33, 31), (25, 35)] {
            raw.set(c, r, false);
        }
        // notch into the right edge that leaves every hull vertex in place
        for r in 27..=28 {
            for c in 40..=43 {
                raw.set(c, r, false);
            }
        }
        // isolated blobs
        for (c, r) in [(3, 3), (4, 3), (3, 4), (58, 55), (59, 55), (59, 56), (60, 56)] {
            raw.set(c, r, true);
        }
        let prev = disk(w, h, 31.0, 29.0, 13.0);
        let out = post_process(&raw, &prev).unwrap();
        assert!(!out.used_fallback);
        assert_eq!(out.mask, truth);
    }

    #[test]
    fn fallback_when_nothing_overlaps() {
        let raw = disk(32, 32, 5.0, 5.0, 3.0);
        let prev = disk(32, 32, 25.0, 25.0, 4.0);
        let out = post_process(&raw, &prev).unwrap();
        assert!(out.used_fallback);
        assert_eq!(out.mask, prev);
        let out = post_process(&BinaryMask::empty(32, 32), &prev).unwrap();
        assert!(out.used_fallback);
    }

    #[test]
    fn selection_prefers_overlap_then_area() {
        let m = BinaryMask::from_fn(16, 16, |c, r| {
            ((1..4).contains(&c) && (1..4).contains(&r)) || ((8..14).contains(&c) && (8..14).contains(&r))
        });
        let cs = find_contours(&m);
        assert_eq!(cs.len(), 2);
        let prev = BinaryMask::from_fn(16, 16, |c, r| c == 2 && r == 2);
        assert_eq!(select_max_overlap(&cs, &prev), Some(&cs[0]));
        let prev = BinaryMask::from_fn(16, 16, |c, r| (c == 2 && r == 2) || (c == 9 && r == 9));
        assert_eq!(select_max_overlap(&cs, &prev), Some(&cs[1]));
        assert_eq!(select_max_overlap(&cs, &BinaryMask::empty(16, 16)), None);
        assert_eq!(select_max_overlap(&[], &prev), None);
    }

    #[test]
    fn shape_mismatch() {
        assert!(post_process(&BinaryMask::empty(4, 4), &BinaryMask::empty(4, 5)).is_err());
    }
}
