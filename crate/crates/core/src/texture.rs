//! Seeded synthetic test imagery with natural-image statistics.
//!
//! The generator draws occluding disks whose radii follow an inverse-cube
//! power law, which produces piecewise-constant regions separated by sharp
//! edges and an approximately scale-invariant power spectrum. That broadband
//! content is what makes blur parameters identifiable; smooth analytic test
//! patterns concentrate their energy in a few modes and leave the risk
//! surface nearly flat.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::scalar::Scalar;
use crate::spectral::ImageGrid;

/// Smallest disk radius in pixels; sets the finest texture scale.
const R_MIN: f64 = 3.0;

/// Disk intensity range. The mean sits well above the contrast span, the way
/// it does in ordinary photographs: absolute noise level scales with mean
/// brightness, so a midtone-heavy image keeps the risk-optimal regularization
/// weight in the range where blind estimation is well conditioned.
const V_LO: f64 = 0.30;
const V_HI: f64 = 1.0;

/// Occluding-disk image in `[0, 1]`, deterministic in the seed. Disk count
/// scales with the image so coverage stays complete at any size.
pub fn dead_leaves<T: Scalar>(rows: usize, cols: usize, seed: u64) -> Result<ImageGrid<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut canvas = vec![0.5 * (V_LO + V_HI); rows * cols];
    let r_max = (rows.min(cols) as f64 / 2.0).max(R_MIN + 1.0);
    let n_disks = 8 * rows.max(cols);
    for _ in 0..n_disks {
        // Inverse-cube radius law: r = r_min / sqrt(u) has p(r) ~ r^-3.
        let u: f64 = rng.random::<f64>().max(1e-12);
        let r = (R_MIN / u.sqrt()).min(r_max);
        let cy = rng.random_range(0.0..rows as f64);
        let cx = rng.random_range(0.0..cols as f64);
        let value = rng.random_range(V_LO..V_HI);
        let r2 = r * r;
        let y_lo = (cy - r).floor().max(0.0) as usize;
        let y_hi = ((cy + r).ceil() as usize).min(rows - 1);
        let x_lo = (cx - r).floor().max(0.0) as usize;
        let x_hi = ((cx + r).ceil() as usize).min(cols - 1);
        for y in y_lo..=y_hi {
            let dy = y as f64 - cy;
            for x in x_lo..=x_hi {
                let dx = x as f64 - cx;
                if dy * dy + dx * dx <= r2 {
                    canvas[y * cols + x] = value;
                }
            }
        }
    }
    ImageGrid::from_fn(rows, cols, |y, x| T::cast(canvas[y * cols + x]))
}

/// Seed of the bundled reference image used by the documented example runs.
pub const REFERENCE_SEED: u64 = 1904;

/// The bundled 256-square reference image.
pub fn reference_texture<T: Scalar>() -> ImageGrid<T> {
    dead_leaves(256, 256, REFERENCE_SEED).expect("fixed-size generation cannot fail")
}
