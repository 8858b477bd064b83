//! Real image grids, operator spectra, and the DFT bridge between them.
//!
//! Every linear operator in this toolkit is circulant (periodic boundary
//! conditions), so it is diagonalized by the 2-D DFT and can be stored as its
//! eigenvalue grid, a [`Spectrum`]. Operator algebra then reduces to pointwise
//! products and sums over frequencies: composition is a Hadamard product,
//! transposition is conjugation, traces and quadratic forms are dot products.
//!
//! Conventions, fixed here and relied on everywhere else:
//!
//! * [`forward_dft`] is the plain unnormalized DFT and [`inverse_dft`] carries
//!   the whole `1/N` factor, `N = rows * cols`. A delta image maps to the
//!   all-ones spectrum, so the spectrum of a unit-sum blur kernel is exactly 1
//!   at DC.
//! * Frequencies follow the standard FFT layout: index `j` stands for the
//!   signed integer frequency `j` when `j <= (dim - 1) / 2` and `j - dim`
//!   otherwise. The normalized coordinate is that integer over `dim` and lies
//!   in `[-1/2, 1/2)`. Odd dimensions are supported by the same rule.
//! * Parseval under this scaling: `sum |u_hat|^2 = N * sum u^2`. Quantities
//!   accumulated in the Fourier domain are `N` times their pixel-domain
//!   counterparts, and consumers divide by `N` explicitly where the formula
//!   calls for it.

use num_complex::Complex;
use rustfft::{FftDirection, FftPlanner};

use crate::error::{DeconvError, Result};
use crate::scalar::Scalar;

/// Signed integer frequency for index `j` on an axis of length `dim`.
pub fn signed_frequency(j: usize, dim: usize) -> i64 {
    debug_assert!(j < dim);
    if j <= (dim - 1) / 2 {
        j as i64
    } else {
        j as i64 - dim as i64
    }
}

/// Normalized frequency `signed_frequency(j, dim) / dim`, in `[-1/2, 1/2)`.
pub fn normalized_frequency<T: Scalar>(j: usize, dim: usize) -> T {
    T::cast(signed_frequency(j, dim) as f64) / T::cast(dim as f64)
}

/// Dense real-valued image on a `rows x cols` periodic grid, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGrid<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> ImageGrid<T> {
    /// Builds a grid from row-major samples. Both dimensions must be at
    /// least 2 and every sample finite.
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        check_dims(rows, cols)?;
        if data.len() != rows * cols {
            return Err(DeconvError::DimensionMismatch(format!(
                "expected {} samples for a {}x{} grid, got {}",
                rows * cols,
                rows,
                cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(DeconvError::NonFinite("image samples".into()));
        }
        Ok(ImageGrid { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        check_dims(rows, cols)?;
        Ok(ImageGrid {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        })
    }

    /// Builds a grid by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        check_dims(rows, cols)?;
        let mut data = Vec::with_capacity(rows * cols);
        for y in 0..rows {
            for x in 0..cols {
                data.push(f(y, x));
            }
        }
        ImageGrid::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Total pixel count `rows * cols`.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, y: usize, x: usize) -> T {
        self.data[y * self.cols + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: T) {
        self.data[y * self.cols + x] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn mean(&self) -> T {
        let sum: T = self.data.iter().copied().sum();
        sum / T::cast(self.len() as f64)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        ImageGrid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

fn check_dims(rows: usize, cols: usize) -> Result<()> {
    if rows < 2 || cols < 2 {
        return Err(DeconvError::InvalidArgument(format!(
            "grid dimensions must be at least 2x2, got {rows}x{cols}"
        )));
    }
    Ok(())
}

/// Eigenvalue grid of a circulant operator, in FFT index layout.
///
/// Entry `(jy, jx)` is the eigenvalue at integer frequency
/// `(signed_frequency(jy, rows), signed_frequency(jx, cols))`, equal to the
/// unnormalized DFT of the operator's generating kernel at that frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Scalar> Spectrum<T> {
    pub fn from_values(rows: usize, cols: usize, data: Vec<Complex<T>>) -> Result<Self> {
        check_dims(rows, cols)?;
        if data.len() != rows * cols {
            return Err(DeconvError::DimensionMismatch(format!(
                "expected {} eigenvalues for a {}x{} spectrum, got {}",
                rows * cols,
                rows,
                cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(DeconvError::NonFinite("spectrum values".into()));
        }
        Ok(Spectrum { rows, cols, data })
    }

    /// Builds a spectrum by evaluating `f(jy, jx)` at every frequency index.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> Complex<T>,
    ) -> Result<Self> {
        check_dims(rows, cols)?;
        let mut data = Vec::with_capacity(rows * cols);
        for jy in 0..rows {
            for jx in 0..cols {
                data.push(f(jy, jx));
            }
        }
        Spectrum::from_values(rows, cols, data)
    }

    pub fn constant(rows: usize, cols: usize, value: Complex<T>) -> Result<Self> {
        check_dims(rows, cols)?;
        Ok(Spectrum {
            rows,
            cols,
            data: vec![value; rows * cols],
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn at(&self, jy: usize, jx: usize) -> Complex<T> {
        self.data[jy * self.cols + jx]
    }

    /// Eigenvalue at frequency (0, 0). For a unit-sum kernel this is 1.
    pub fn dc(&self) -> Complex<T> {
        self.data[0]
    }

    pub fn values(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    /// Spectrum of the transposed operator: pointwise conjugate.
    pub fn conjugate(&self) -> Self {
        Spectrum {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v.conj()).collect(),
        }
    }

    /// Pointwise product, the spectrum of the composed operator.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.check_same_dims(other)?;
        Ok(Spectrum {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| *a * *b)
                .collect(),
        })
    }

    pub fn scaled(&self, factor: T) -> Self {
        Spectrum {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v.scale(factor)).collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .map(|v| v.norm_sqr())
            .fold(T::zero(), T::max)
            .sqrt()
    }

    /// Projects onto the conjugate-symmetric subspace by averaging each
    /// value with the conjugate of its mirror.
    ///
    /// Closed-form spectra of rotated kernels need this on even grids: the
    /// Nyquist index stands for both frequencies +1/2 and -1/2, and a
    /// non-separable closed form evaluated at -1/2 differs from its +1/2
    /// alias. A real kernel's DFT carries the average of the two, which is
    /// exactly this projection.
    pub fn symmetrize(&mut self) {
        let half = T::cast(0.5);
        for jy in 0..self.rows {
            let ny = (self.rows - jy) % self.rows;
            for jx in 0..self.cols {
                let nx = (self.cols - jx) % self.cols;
                let i = jy * self.cols + jx;
                let m = ny * self.cols + nx;
                if m < i {
                    continue;
                }
                let avg = (self.data[i] + self.data[m].conj()).scale(half);
                self.data[i] = avg;
                self.data[m] = avg.conj();
            }
        }
    }

    /// Max over frequencies of `|v(-k) - conj(v(k))|`. Zero for the spectrum
    /// of any real-valued kernel.
    pub fn conjugate_symmetry_residual(&self) -> T {
        let mut worst = T::zero();
        for jy in 0..self.rows {
            let ny = (self.rows - jy) % self.rows;
            for jx in 0..self.cols {
                let nx = (self.cols - jx) % self.cols;
                let diff = self.at(ny, nx) - self.at(jy, jx).conj();
                worst = worst.max(diff.norm_sqr());
            }
        }
        worst.sqrt()
    }

    pub fn check_same_dims(&self, other: &Self) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(DeconvError::DimensionMismatch(format!(
                "spectra have different shapes {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }
}

fn fft_2d<T: Scalar>(rows: usize, cols: usize, data: &mut [Complex<T>], direction: FftDirection) {
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft(cols, direction);
    for r in 0..rows {
        row_fft.process(&mut data[r * cols..(r + 1) * cols]);
    }
    let col_fft = planner.plan_fft(rows, direction);
    let mut column = vec![Complex::new(T::zero(), T::zero()); rows];
    for c in 0..cols {
        for r in 0..rows {
            column[r] = data[r * cols + c];
        }
        col_fft.process(&mut column);
        for r in 0..rows {
            data[r * cols + c] = column[r];
        }
    }
}

/// Unnormalized 2-D DFT of a real grid.
pub fn forward_dft<T: Scalar>(img: &ImageGrid<T>) -> Spectrum<T> {
    let mut data: Vec<Complex<T>> = img
        .as_slice()
        .iter()
        .map(|&v| Complex::new(v, T::zero()))
        .collect();
    fft_2d(img.rows(), img.cols(), &mut data, FftDirection::Forward);
    Spectrum {
        rows: img.rows(),
        cols: img.cols(),
        data,
    }
}

/// Inverse 2-D DFT with the full `1/N` normalization, returning the real
/// part. Errors if the spectrum is not conjugate-symmetric, i.e. if the
/// inverse transform has an imaginary residual beyond tolerance.
pub fn inverse_dft<T: Scalar>(spec: &Spectrum<T>) -> Result<ImageGrid<T>> {
    let mut data = spec.data.clone();
    fft_2d(spec.rows, spec.cols, &mut data, FftDirection::Inverse);
    let scale = T::one() / T::cast(spec.len() as f64);
    let mut max_im = T::zero();
    let mut max_re = T::zero();
    for v in data.iter_mut() {
        *v = v.scale(scale);
        max_im = max_im.max(v.im.abs());
        max_re = max_re.max(v.re.abs());
    }
    // 1e-8 absolute-or-relative for f64; scaled up for narrower floats.
    let tolerance = T::cast(1e-8).max(T::epsilon() * T::cast(100.0));
    if max_im > tolerance * (T::one() + max_re) {
        return Err(DeconvError::NotConjugateSymmetric {
            residual: max_im.as_f64(),
            tolerance: (tolerance * (T::one() + max_re)).as_f64(),
        });
    }
    ImageGrid::new(
        spec.rows,
        spec.cols,
        data.into_iter().map(|v| v.re).collect(),
    )
}

/// Trace of the composed circulant operator `A B`: the plain, non-conjugated
/// dot product of the two eigenvalue grids.
pub fn trace_product<T: Scalar>(a: &Spectrum<T>, b: &Spectrum<T>) -> Result<Complex<T>> {
    a.check_same_dims(b)?;
    let mut acc = Complex::new(T::zero(), T::zero());
    for (x, y) in a.data.iter().zip(&b.data) {
        acc = acc + *x * *y;
    }
    Ok(acc)
}

/// Trace of the real part of a circulant operator: sum of eigenvalue real
/// parts. Zero for operators with purely imaginary spectra.
pub fn trace_re<T: Scalar>(a: &Spectrum<T>) -> T {
    a.data.iter().map(|v| v.re).sum()
}

/// Fourier-domain quadratic form `sum_k (prod_i ops[i](k)) conj(u(k)) v(k)`.
///
/// With no operators this is the plain inner product of the spectra. Under
/// the unnormalized-DFT convention the value is `N` times the pixel-domain
/// quadratic form `u^T (prod A_i) v`; callers divide by `N` where their
/// formula requires the pixel-domain value.
pub fn quadratic_form<T: Scalar>(
    u: &Spectrum<T>,
    ops: &[&Spectrum<T>],
    v: &Spectrum<T>,
) -> Result<Complex<T>> {
    u.check_same_dims(v)?;
    for op in ops {
        u.check_same_dims(op)?;
    }
    let mut acc = Complex::new(T::zero(), T::zero());
    for k in 0..u.data.len() {
        let mut factor = u.data[k].conj() * v.data[k];
        for op in ops {
            factor = factor * op.data[k];
        }
        acc = acc + factor;
    }
    Ok(acc)
}
