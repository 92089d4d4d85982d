//! Seeded synthetic stacks with exact ground truth.
//!
//! Each slice holds a bright disk (the target) inside a dark ring, on a
//! textured mid-gray background with a handful of distractor blobs. From slice
//! to slice the disk shrinks by a fixed amount and its centre takes a small
//! random step; the blobs wander by the same amount. Some blobs are as bright
//! as the target so that blob removal during cleanup has something to do.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::{BinaryMask, CineStack, ImageSlice};

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomParams {
    pub size: usize,
    pub n_slices: usize,
    /// Target radius on the first slice, in pixels.
    pub r0: f64,
    /// Radius lost per slice.
    pub shrink: f64,
    /// Longest centre step between consecutive slices.
    pub drift: f64,
    pub lv_intensity: f64,
    /// Width of the dark ring around the target.
    pub wall_width: f64,
    pub wall_intensity: f64,
    pub tissue_intensity: f64,
    /// Amplitude of the smooth background texture.
    pub tissue_texture: f64,
    pub n_blobs: usize,
    pub blob_radius: (f64, f64),
    pub blob_intensity: (f64, f64),
    /// Chance that a blob is drawn at target brightness instead.
    pub bright_blob_prob: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        PhantomParams {
            size: 128,
            n_slices: 10,
            r0: 22.0,
            shrink: 1.2,
            drift: 2.0,
            lv_intensity: 200.0,
            wall_width: 6.0,
            wall_intensity: 60.0,
            tissue_intensity: 110.0,
            tissue_texture: 20.0,
            n_blobs: 6,
            blob_radius: (3.0, 7.0),
            blob_intensity: (30.0, 150.0),
            bright_blob_prob: 0.35,
            noise_sd: 30.0,
            seed: 42,
        }
    }
}

impl PhantomParams {
    pub fn with_seed(seed: u64) -> Self {
        PhantomParams { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_slices < 2 {
            return Err(Error::invalid("a phantom needs at least 2 slices"));
        }
        let last_r = self.r0 - self.shrink * (self.n_slices - 1) as f64;
        if last_r < 4.0 {
            return Err(Error::invalid(format!(
                "target radius falls to {last_r:.2} px on the last slice; must stay >= 4"
            )));
        }
        if self.shrink < 0.0 {
            return Err(Error::invalid("shrink must be nonnegative"));
        }
        if !(0.0..=3.0).contains(&self.drift) {
            return Err(Error::invalid("drift must lie in [0, 3] px"));
        }
        let reach = self.r0 + self.wall_width + 2.0;
        if (self.size as f64) < 2.0 * reach + 8.0 {
            return Err(Error::invalid(format!(
                "size {} too small for radius {} plus wall",
                self.size, self.r0
            )));
        }
        if self.noise_sd < 0.0 || self.blob_radius.0 <= 0.0 || self.blob_radius.1 < self.blob_radius.0 {
            return Err(Error::invalid("bad noise or blob radius settings"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub stack: CineStack,
    pub truth: Vec<BinaryMask>,
}

#[derive(Debug, Clone, Copy)]
struct Blob {
    cx: f64,
    cy: f64,
    r: f64,
    intensity: f64,
}

pub fn generate_phantom(params: &PhantomParams) -> Result<Phantom> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let size = params.size as f64;
    let reach = params.r0 + params.wall_width + 2.0;
    let (lo, hi) = (reach, size - 1.0 - reach);

    let mut cx = (size / 2.0 + rng.random_range(-4.0..=4.0)).clamp(lo, hi);
    let mut cy = (size / 2.0 + rng.random_range(-4.0..=4.0)).clamp(lo, hi);

    // texture phases
    let phase: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..std::f64::consts::TAU));
    let freq: [f64; 2] = std::array::from_fn(|_| rng.random_range(1.5..3.5));

    // both the target and the blobs random-walk; the target is drawn on top if they meet
    let keep_out = params.r0 + params.wall_width + 2.0 * params.drift * (params.n_slices as f64).sqrt() + 4.0;
    let mut blobs = Vec::with_capacity(params.n_blobs);
    let mut attempts = 0;
    while blobs.len() < params.n_blobs && attempts < 10_000 {
        attempts += 1;
        let r = rng.random_range(params.blob_radius.0..=params.blob_radius.1);
        let bx = rng.random_range(r..size - 1.0 - r);
        let by = rng.random_range(r..size - 1.0 - r);
        if ((bx - cx).powi(2) + (by - cy).powi(2)).sqrt() < keep_out + r {
            continue;
        }
        let intensity = if rng.random_bool(params.bright_blob_prob.clamp(0.0, 1.0)) {
            params.lv_intensity + rng.random_range(-15.0..=15.0)
        } else {
            rng.random_range(params.blob_intensity.0..=params.blob_intensity.1)
        };
        blobs.push(Blob { cx: bx, cy: by, r, intensity });
    }

    let noise = Normal::new(0.0, params.noise_sd.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::invalid(e.to_string()))?;
    let mut slices = Vec::with_capacity(params.n_slices);
    let mut truth = Vec::with_capacity(params.n_slices);
    for k in 0..params.n_slices {
        if k > 0 {
            let (dx, dy) = random_step(&mut rng, params.drift);
            cx = (cx + dx).clamp(lo, hi);
            cy = (cy + dy).clamp(lo, hi);
            for b in &mut blobs {
                let (dx, dy) = random_step(&mut rng, params.drift);
                b.cx = (b.cx + dx).clamp(b.r, size - 1.0 - b.r);
                b.cy = (b.cy + dy).clamp(b.r, size - 1.0 - b.r);
            }
        }
        let radius = params.r0 - params.shrink * k as f64;
        let n = params.size;
        let mut px = Vec::with_capacity(n * n);
        let mut bits = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                let (x, y) = (c as f64, r as f64);
                let d2 = (x - cx).powi(2) + (y - cy).powi(2);
                let inside = d2 <= radius * radius;
                let wall = (radius + params.wall_width).powi(2);
                let mut v = if inside {
                    params.lv_intensity
                } else if d2 <= wall {
                    params.wall_intensity
                } else {
                    let u = x / size * freq[0] * std::f64::consts::TAU + phase[0];
                    let w = y / size * freq[1] * std::f64::consts::TAU + phase[1];
                    let mut t = params.tissue_intensity
                        + params.tissue_texture * (0.6 * u.sin() * w.cos() + 0.4 * (u + w + phase[2]).sin());
                    for b in &blobs {
                        if (x - b.cx).powi(2) + (y - b.cy).powi(2) <= b.r * b.r {
                            t = b.intensity;
                        }
                    }
                    t
                };
                if params.noise_sd > 0.0 {
                    v += noise.sample(&mut rng);
                }
                px.push(v.round().clamp(0.0, 255.0) as u16);
                bits.push(inside);
            }
        }
        slices.push(ImageSlice::new(n, n, 8, px)?);
        truth.push(BinaryMask::new(n, n, bits)?);
    }
    Ok(Phantom {
        stack: CineStack::new(slices)?,
        truth,
    })
}

fn random_step(rng: &mut ChaCha8Rng, max: f64) -> (f64, f64) {
    if max <= 0.0 {
        return (0.0, 0.0);
    }
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let len = rng.random_range(0.0..=max);
    (len * angle.cos(), len * angle.sin())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::dice;
    use crate::postprocess::{convex_hull, fill_convex_polygon, find_contours, Point};

    #[test]
    fn static_phantom_repeats_itself() {
        let p = PhantomParams {
            noise_sd: 0.0,
            drift: 0.0,
            shrink: 0.0,
            ..PhantomParams::default()
        };
        let ph = generate_phantom(&p).unwrap();
        let s = ph.stack.slices();
        assert!(s.iter().all(|x| x == &s[0]));
        assert!(ph.truth.iter().all(|m| m == &ph.truth[0]));
    }

    #[test]
    fn areas_shrink() {
        let ph = generate_phantom(&PhantomParams::with_seed(42)).unwrap();
        assert_eq!(ph.stack.len(), 10);
        assert_eq!(ph.stack.width(), 128);
        let areas: Vec<usize> = ph.truth.iter().map(BinaryMask::count).collect();
        assert!(areas.windows(2).all(|w| w[1] < w[0]), "{areas:?}");
    }

    #[test]
    fn truth_is_convex_connected_and_similar() {
        for seed in [1, 42, 77] {
            let ph = generate_phantom(&PhantomParams::with_seed(seed)).unwrap();
            for m in &ph.truth {
                let pts: Vec<Point> = m.foreground().map(|(c, r)| Point::new(c as i64, r as i64)).collect();
                assert_eq!(&fill_convex_polygon(&convex_hull(&pts), 128, 128), m);
                assert_eq!(find_contours(m).len(), 1);
            }
            for w in ph.truth.windows(2) {
                assert!(dice(&w[0], &w[1]).unwrap() >= 0.85);
            }
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_phantom(&PhantomParams::with_seed(5)).unwrap();
        let b = generate_phantom(&PhantomParams::with_seed(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_vanishing_target() {
        let p = PhantomParams { shrink: 3.0, ..PhantomParams::default() };
        assert!(generate_phantom(&p).is_err());
        let p = PhantomParams { drift: 4.0, ..PhantomParams::default() };
        assert!(generate_phantom(&p).is_err());
    }
}
