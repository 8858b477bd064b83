//! Overlapping-patch estimation and stitched deconvolution for images whose
//! blur varies across the field of view.
//!
//! The blur model elsewhere in this crate is a single transfer function for
//! the whole frame. Real optics and motion violate that globally but hold
//! well over small regions, so this module splits the frame into overlapping
//! uniform patches, estimates the blur and regularization weight on each
//! patch independently, reports per-parameter statistics across patches, and
//! stitches the per-patch restorations back together with a raised-cosine
//! blend whose weights form a partition of unity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DeconvError, Result};
use crate::estimator::{estimate, lambda_solve, OptimizerConfig};
use crate::psf::PsfModel;
use crate::regularizer::RegularizerSpec;
use crate::spectral::ImageGrid;
use crate::sure::SureContext;

/// Smallest image side the tiler accepts.
pub const MIN_IMAGE_SIDE: usize = 16;

/// Default square patch side.
pub const DEFAULT_PATCH: usize = 256;

/// Default fraction of a patch shared with each neighbor.
pub const DEFAULT_OVERLAP: f64 = 0.25;

/// Default per-patch iteration budget. Tiling adds wrap-seam model error on
/// top of noise, so patches are given the same generous budget the
/// simulation harness uses rather than the bare nominal one.
pub const DEFAULT_TILE_BUDGET: usize = 1000;

/// One patch rectangle, in image coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileRect {
    pub y0: usize,
    pub x0: usize,
    pub rows: usize,
    pub cols: usize,
}

/// Deterministic overlapping-patch layout covering an image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileLayout {
    pub image_rows: usize,
    pub image_cols: usize,
    /// Grid shape as (vertical count, horizontal count).
    pub grid: (usize, usize),
    /// Row-major rectangles; all share the same dimensions.
    pub rects: Vec<TileRect>,
    /// Patch start offsets along y and x.
    row_starts: Vec<usize>,
    col_starts: Vec<usize>,
}

/// Start offsets along one axis: patches of length `patch` stepped by
/// `patch * (1 - overlap)`, with the final patch shifted inward so every
/// patch fits and the axis is fully covered at uniform size.
fn axis_starts(dim: usize, patch: usize, overlap: f64) -> Vec<usize> {
    if dim <= patch {
        return vec![0];
    }
    let stride = ((patch as f64) * (1.0 - overlap)).round().max(1.0) as usize;
    let span = dim - patch;
    // Fewest patches whose even spacing stays at or below the nominal
    // stride-derived count while still covering the axis. Keeping the
    // realized step at or above half a patch means a pixel is never shared
    // by more than two patches along an axis, which is what makes the
    // two-ramp blend an exact partition of unity.
    let mut count = span / stride + 1;
    while span as f64 / count.max(2).saturating_sub(1) as f64 > patch as f64 {
        count += 1;
    }
    let count = count.max(2);
    let step = span as f64 / (count - 1) as f64;
    (0..count)
        .map(|i| ((i as f64 * step).round() as usize).min(span))
        .collect()
}

/// Plans a uniform overlapping tiling. Patch dimensions must be even and at
/// least [`MIN_IMAGE_SIDE`]; `overlap` is the fraction of a patch shared
/// with each neighbor, in `[0, 0.5]`. Images smaller than the patch in a
/// dimension get a single full-span patch along it.
pub fn plan_tiles(
    image_rows: usize,
    image_cols: usize,
    patch_rows: usize,
    patch_cols: usize,
    overlap: f64,
) -> Result<TileLayout> {
    if image_rows < MIN_IMAGE_SIDE || image_cols < MIN_IMAGE_SIDE {
        return Err(DeconvError::InvalidArgument(format!(
            "image {image_rows}x{image_cols} is below the {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE} minimum"
        )));
    }
    if patch_rows < MIN_IMAGE_SIDE || patch_cols < MIN_IMAGE_SIDE {
        return Err(DeconvError::InvalidArgument(format!(
            "patch {patch_rows}x{patch_cols} is below the {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE} minimum"
        )));
    }
    if patch_rows % 2 != 0 || patch_cols % 2 != 0 {
        return Err(DeconvError::InvalidArgument(format!(
            "patch dimensions must be even, got {patch_rows}x{patch_cols}"
        )));
    }
    if !(0.0..=0.5).contains(&overlap) {
        return Err(DeconvError::InvalidArgument(format!(
            "overlap fraction must lie in [0, 0.5], got {overlap}"
        )));
    }
    let eff_rows = patch_rows.min(image_rows);
    let eff_cols = patch_cols.min(image_cols);
    let row_starts = axis_starts(image_rows, eff_rows, overlap);
    let col_starts = axis_starts(image_cols, eff_cols, overlap);
    let mut rects = Vec::with_capacity(row_starts.len() * col_starts.len());
    for &y0 in &row_starts {
        for &x0 in &col_starts {
            rects.push(TileRect {
                y0,
                x0,
                rows: eff_rows,
                cols: eff_cols,
            });
        }
    }
    Ok(TileLayout {
        image_rows,
        image_cols,
        grid: (row_starts.len(), col_starts.len()),
        rects,
        row_starts,
        col_starts,
    })
}

impl TileLayout {
    pub fn patch_rows(&self) -> usize {
        self.rects[0].rows
    }

    pub fn patch_cols(&self) -> usize {
        self.rects[0].cols
    }

    /// 1-D blend profile for the patch starting at `starts[i]`: raised-cosine
    /// ramps across the regions shared with the previous and next patch,
    /// flat elsewhere. Image-edge sides stay flat so borders keep full
    /// weight. For two-way overlaps the profiles of the two sharers sum to
    /// one exactly; any deeper overlap is handled by the weight-sum
    /// normalization in the stitcher.
    fn axis_profile(starts: &[usize], i: usize, patch: usize) -> Vec<f64> {
        let a = starts[i];
        let mut w = vec![1.0f64; patch];
        if i > 0 {
            let prev_end = starts[i - 1] + patch;
            if prev_end > a {
                let span = (prev_end - a).min(patch);
                for (t, wt) in w.iter_mut().enumerate().take(span) {
                    let s = (t as f64 + 0.5) / span as f64;
                    let r = (std::f64::consts::FRAC_PI_2 * s).sin();
                    *wt *= r * r;
                }
            }
        }
        if i + 1 < starts.len() {
            let next = starts[i + 1];
            if a + patch > next {
                let span = (a + patch - next).min(patch);
                for t in 0..span {
                    let idx = patch - span + t;
                    let s = (t as f64 + 0.5) / span as f64;
                    let r = (std::f64::consts::FRAC_PI_2 * s).cos();
                    w[idx] *= r * r;
                }
            }
        }
        w
    }

    fn patch_profiles(&self, gy: usize, gx: usize) -> (Vec<f64>, Vec<f64>) {
        (
            Self::axis_profile(&self.row_starts, gy, self.patch_rows()),
            Self::axis_profile(&self.col_starts, gx, self.patch_cols()),
        )
    }
}

/// Accumulated raw blend weight at every pixel, before normalization. With
/// overlaps of at most half a patch this is 1 everywhere up to rounding; it
/// is exposed so that property can be tested directly.
pub fn blend_weight_sum(layout: &TileLayout) -> Result<ImageGrid<f64>> {
    let mut acc = ImageGrid::zeros(layout.image_rows, layout.image_cols)?;
    let (_, nx) = layout.grid;
    for (idx, rect) in layout.rects.iter().enumerate() {
        let (wy, wx) = layout.patch_profiles(idx / nx, idx % nx);
        for (ty, wyv) in wy.iter().enumerate() {
            for (tx, wxv) in wx.iter().enumerate() {
                let y = rect.y0 + ty;
                let x = rect.x0 + tx;
                acc.set(y, x, acc.get(y, x) + wyv * wxv);
            }
        }
    }
    Ok(acc)
}

fn crop(img: &ImageGrid<f64>, rect: &TileRect) -> Result<ImageGrid<f64>> {
    ImageGrid::from_fn(rect.rows, rect.cols, |y, x| {
        img.get(rect.y0 + y, rect.x0 + x)
    })
}

/// Noise-level estimate from the finest diagonal differences: the median
/// absolute deviation of half the difference between each pixel and its
/// lower-right diagonal neighbor, rescaled to a Gaussian standard deviation.
/// Diagonal pairing makes the statistic insensitive to smooth image content
/// and to blur, which varies slowly in both directions.
pub fn mad_sigma(img: &ImageGrid<f64>) -> f64 {
    let rows = img.rows();
    let cols = img.cols();
    let mut details = Vec::with_capacity((rows - 1) * (cols - 1));
    for y in 0..rows - 1 {
        for x in 0..cols - 1 {
            details.push(0.5 * (img.get(y, x) - img.get(y + 1, x + 1)).abs());
        }
    }
    details.sort_by(|a, b| a.partial_cmp(b).expect("finite detail coefficients"));
    let mid = details.len() / 2;
    let mad = if details.len() % 2 == 1 {
        details[mid]
    } else {
        0.5 * (details[mid - 1] + details[mid])
    };
    // d = (b1 - b2) / 2 has standard deviation sigma / sqrt(2) for
    // independent noise; 0.6745 converts a Gaussian MAD to a deviation.
    (mad / 0.6745) * std::f64::consts::SQRT_2
}

/// Settings for per-patch estimation.
#[derive(Clone, Debug)]
pub struct TileConfig {
    pub patch_rows: usize,
    pub patch_cols: usize,
    pub overlap: f64,
    /// Known noise standard deviation; `None` estimates it per patch via
    /// [`mad_sigma`].
    pub sigma: Option<f64>,
    /// Initial regularization weight; `None` warm-starts each patch at the
    /// weight fixed point of the initial blur.
    pub lambda0: Option<f64>,
    /// Difference-penalty order for the pragmatic regularizer.
    pub reg_order: f64,
    /// Starting blur model for every patch.
    pub init: PsfModel<f64>,
    /// Overrides the default iteration budget when set.
    pub max_iters: Option<usize>,
    /// Worker threads for patch-parallel stages (1 = sequential).
    pub parallelism: usize,
}

impl Default for TileConfig {
    fn default() -> Self {
        TileConfig {
            patch_rows: DEFAULT_PATCH,
            patch_cols: DEFAULT_PATCH,
            overlap: DEFAULT_OVERLAP,
            sigma: None,
            lambda0: None,
            reg_order: 1.0,
            init: PsfModel::Gaussian(crate::psf::GaussianParams {
                omega_x: 2.0,
                omega_y: 2.0,
                theta: 0.0,
            }),
            max_iters: None,
            parallelism: 1,
        }
    }
}

/// Outcome of one patch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchRecord {
    /// (vertical index, horizontal index) in the tile grid.
    pub grid_pos: (usize, usize),
    pub rect: TileRect,
    /// Noise deviation used for this patch.
    pub sigma: f64,
    pub converged: bool,
    pub iterations: Option<usize>,
    /// Estimated parameters in model order (angles in radians).
    pub params: Vec<f64>,
    pub lambda: f64,
    pub sure: Option<f64>,
}

/// Per-parameter statistics over the converged patches, plus every record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchStats {
    pub param_names: Vec<String>,
    pub layout: TileLayout,
    pub records: Vec<PatchRecord>,
    pub converged_count: usize,
    /// Mean over converged patches; angle entries use the wrapped
    /// (-90 deg, 90 deg] representation, in radians.
    pub mean: Vec<f64>,
    /// Standard deviation over converged patches (population form).
    pub std: Vec<f64>,
}

/// Wraps an angle in radians to the half-open interval (-pi/2, pi/2]. A
/// centrosymmetric blur is invariant under a half-turn, so orientations that
/// differ by pi describe the same kernel and must aggregate identically.
pub fn wrap_half_turn(theta: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let mut t = theta % pi;
    if t > pi / 2.0 {
        t -= pi;
    } else if t <= -pi / 2.0 {
        t += pi;
    }
    t
}

fn with_pool<R: Send>(parallelism: usize, job: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| DeconvError::InvalidArgument(format!("worker pool: {e}")))?;
    Ok(pool.install(job))
}

/// Estimates the blur independently on every patch of `img` and aggregates
/// per-parameter statistics over the converged patches.
pub fn estimate_tiled(img: &ImageGrid<f64>, cfg: &TileConfig) -> Result<PatchStats> {
    let layout = plan_tiles(
        img.rows(),
        img.cols(),
        cfg.patch_rows,
        cfg.patch_cols,
        cfg.overlap,
    )?;
    let reg = RegularizerSpec::new(cfg.reg_order)?;
    let (_, nx) = layout.grid;
    let jobs: Vec<(usize, TileRect)> = layout
        .rects
        .iter()
        .copied()
        .enumerate()
        .collect();
    let run_patch = |&(idx, rect): &(usize, TileRect)| -> Result<PatchRecord> {
        let patch = crop(img, &rect)?;
        let sigma = match cfg.sigma {
            Some(s) => s,
            None => mad_sigma(&patch).max(1e-12),
        };
        let ctx = SureContext::from_image(&patch, sigma, &reg)?;
        let h0 = cfg.init.spectrum(rect.rows, rect.cols)?;
        let lambda0 = match cfg.lambda0 {
            Some(l0) => l0,
            None => lambda_solve(&ctx, &h0, 1e-2)?.lambda,
        };
        let mut opt = OptimizerConfig::for_model(&cfg.init);
        opt.max_iters = cfg.max_iters.unwrap_or(DEFAULT_TILE_BUDGET);
        let (model, lambda, trace) = estimate(&ctx, &cfg.init, lambda0, &opt)?;
        let iterations = match trace.status {
            crate::estimator::Status::Converged { iters } => Some(iters),
            _ => None,
        };
        let last_sure = trace.rows.last().and_then(|r| r.sure);
        Ok(PatchRecord {
            grid_pos: (idx / nx, idx % nx),
            rect,
            sigma,
            converged: iterations.is_some(),
            iterations,
            params: model.params(),
            lambda,
            sure: last_sure,
        })
    };
    let records: Result<Vec<PatchRecord>> = with_pool(cfg.parallelism, || {
        jobs.par_iter().map(run_patch).collect()
    })?;
    let records = records?;

    let roles = cfg.init.param_roles();
    let n_par = cfg.init.param_count();
    let converged: Vec<&PatchRecord> = records.iter().filter(|r| r.converged).collect();
    if converged.is_empty() {
        return Err(DeconvError::DegenerateData {
            context: "tiled estimation",
            detail: "no patch reached convergence; statistics are undefined".into(),
        });
    }
    let mut mean = vec![0.0f64; n_par];
    let mut std = vec![0.0f64; n_par];
    for i in 0..n_par {
        let value = |r: &PatchRecord| {
            if roles[i] == crate::psf::ParamRole::Angle {
                wrap_half_turn(r.params[i])
            } else {
                r.params[i]
            }
        };
        let m = converged.iter().map(|r| value(r)).sum::<f64>() / converged.len() as f64;
        let v = converged
            .iter()
            .map(|r| {
                let d = value(r) - m;
                d * d
            })
            .sum::<f64>()
            / converged.len() as f64;
        mean[i] = m;
        std[i] = v.sqrt();
    }
    let converged_count = converged.len();
    Ok(PatchStats {
        param_names: cfg.init.param_names(),
        layout,
        records,
        converged_count,
        mean,
        std,
    })
}

impl PatchStats {
    /// Model and weight for every patch, with non-converged patches
    /// inheriting from the nearest converged patch (Euclidean distance
    /// between grid positions, first match in scan order on ties).
    pub fn resolved_models(&self, template: &PsfModel<f64>) -> Result<Vec<(PsfModel<f64>, f64)>> {
        let converged: Vec<&PatchRecord> = self.records.iter().filter(|r| r.converged).collect();
        if converged.is_empty() {
            return Err(DeconvError::DegenerateData {
                context: "tiled model resolution",
                detail: "no converged patch to inherit a model from".into(),
            });
        }
        self.records
            .iter()
            .map(|rec| {
                let source = if rec.converged {
                    rec
                } else {
                    converged
                        .iter()
                        .min_by_key(|c| {
                            let dy = c.grid_pos.0 as i64 - rec.grid_pos.0 as i64;
                            let dx = c.grid_pos.1 as i64 - rec.grid_pos.1 as i64;
                            dy * dy + dx * dx
                        })
                        .expect("nonempty converged set")
                };
                Ok((template.with_params(&source.params)?, source.lambda))
            })
            .collect()
    }

    /// Plot-ready one-row-per-patch table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# schema=1\n");
        out.push_str("grid_y,grid_x,y0,x0,rows,cols,sigma,converged,iterations");
        for name in &self.param_names {
            out.push_str(&format!(",{name}"));
        }
        out.push_str(",lambda,sure\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}",
                r.grid_pos.0,
                r.grid_pos.1,
                r.rect.y0,
                r.rect.x0,
                r.rect.rows,
                r.rect.cols,
                r.sigma,
                r.converged,
                r.iterations.map(|i| i.to_string()).unwrap_or_default()
            ));
            for v in &r.params {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(&format!(",{}", r.lambda));
            match r.sure {
                Some(s) => out.push_str(&format!(",{s}\n")),
                None => out.push('\n'),
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| DeconvError::InvalidArgument(format!("stats serialization: {e}")))
    }
}

/// Per-patch Tikhonov restoration of `img` stitched with the raised-cosine
/// blend. `models` supplies one transfer function and weight per patch in
/// layout order (see [`PatchStats::resolved_models`]).
pub fn deconvolve_tiled(
    img: &ImageGrid<f64>,
    layout: &TileLayout,
    models: &[(PsfModel<f64>, f64)],
    reg_order: f64,
) -> Result<ImageGrid<f64>> {
    if models.len() != layout.rects.len() {
        return Err(DeconvError::DimensionMismatch(format!(
            "{} models supplied for {} patches",
            models.len(),
            layout.rects.len()
        )));
    }
    if img.rows() != layout.image_rows || img.cols() != layout.image_cols {
        return Err(DeconvError::DimensionMismatch(format!(
            "layout built for {}x{}, image is {}x{}",
            layout.image_rows,
            layout.image_cols,
            img.rows(),
            img.cols()
        )));
    }
    let reg = RegularizerSpec::new(reg_order)?;
    let (_, nx) = layout.grid;
    let mut num = ImageGrid::<f64>::zeros(layout.image_rows, layout.image_cols)?;
    let mut den = ImageGrid::<f64>::zeros(layout.image_rows, layout.image_cols)?;
    for (idx, (rect, (model, lambda))) in layout.rects.iter().zip(models).enumerate() {
        let patch = crop(img, rect)?;
        // The restoration divides by the blur spectrum structure, so the
        // noise scale never enters; any positive placeholder works.
        let ctx = SureContext::from_image(&patch, 1.0, &reg)?;
        let h = model.spectrum(rect.rows, rect.cols)?;
        let restored = crate::spectral::inverse_dft(&ctx.wiener_solve(&h, *lambda)?)?;
        let (wy, wx) = layout.patch_profiles(idx / nx, idx % nx);
        for (ty, wyv) in wy.iter().enumerate() {
            for (tx, wxv) in wx.iter().enumerate() {
                let y = rect.y0 + ty;
                let x = rect.x0 + tx;
                let w = wyv * wxv;
                num.set(y, x, num.get(y, x) + w * restored.get(ty, tx));
                den.set(y, x, den.get(y, x) + w);
            }
        }
    }
    ImageGrid::from_fn(layout.image_rows, layout.image_cols, |y, x| {
        num.get(y, x) / den.get(y, x)
    })
}

/// Rec. 601 luminosity of three equally sized color planes.
pub fn luminosity(
    r: &ImageGrid<f64>,
    g: &ImageGrid<f64>,
    b: &ImageGrid<f64>,
) -> Result<ImageGrid<f64>> {
    if r.rows() != g.rows()
        || r.rows() != b.rows()
        || r.cols() != g.cols()
        || r.cols() != b.cols()
    {
        return Err(DeconvError::DimensionMismatch(format!(
            "color planes differ: {}x{}, {}x{}, {}x{}",
            r.rows(),
            r.cols(),
            g.rows(),
            g.cols(),
            b.rows(),
            b.cols()
        )));
    }
    ImageGrid::from_fn(r.rows(), r.cols(), |y, x| {
        0.299 * r.get(y, x) + 0.587 * g.get(y, x) + 0.114 * b.get(y, x)
    })
}

/// Peak signal-to-noise ratio of `test` against `truth` in decibels, with
/// the given peak signal value.
pub fn psnr(test: &ImageGrid<f64>, truth: &ImageGrid<f64>, peak: f64) -> Result<f64> {
    if test.rows() != truth.rows() || test.cols() != truth.cols() {
        return Err(DeconvError::DimensionMismatch(format!(
            "psnr inputs differ: {}x{} vs {}x{}",
            test.rows(),
            test.cols(),
            truth.rows(),
            truth.cols()
        )));
    }
    let n = (test.rows() * test.cols()) as f64;
    let mse = test
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}
