//! Shared helpers for integration tests: deterministic data generation and
//! dense-matrix counterparts of the spectral operators. The dense path goes
//! through explicit circulant matrices and LU inversion, sharing no code
//! with the spectral implementation beyond the DFT used to realize kernels.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use suredeconv::spectral::{inverse_dft, ImageGrid, Spectrum};

/// Small deterministic generator (xorshift64*) so test data needs no seeds
/// from the library under test.
pub struct DetRng(u64);

impl DetRng {
    pub fn new(seed: u64) -> Self {
        DetRng(seed.wrapping_mul(0x9E3779B97F4A7C15) | 1)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        self.0.wrapping_mul(0x2545F4914F6CDD1D)
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = (1.0 - self.uniform()).max(1e-16);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

pub fn random_image(rows: usize, cols: usize, rng: &mut DetRng) -> ImageGrid<f64> {
    ImageGrid::from_fn(rows, cols, |_, _| rng.uniform()).unwrap()
}

/// Direct `O(N^2)` DFT, the definition itself, for validating the FFT path.
pub fn naive_dft(img: &ImageGrid<f64>) -> Vec<Complex<f64>> {
    let (rows, cols) = (img.rows(), img.cols());
    let mut out = Vec::with_capacity(rows * cols);
    for ky in 0..rows {
        for kx in 0..cols {
            let mut acc = Complex::new(0.0, 0.0);
            for y in 0..rows {
                for x in 0..cols {
                    let phase = -2.0
                        * std::f64::consts::PI
                        * (ky as f64 * y as f64 / rows as f64
                            + kx as f64 * x as f64 / cols as f64);
                    acc += Complex::from_polar(img.get(y, x), phase);
                }
            }
            out.push(acc);
        }
    }
    out
}

/// Dense circulant matrix realizing the operator whose spectrum is given:
/// row `i = y*cols + x` applies the kernel shifted to pixel `(y, x)` with
/// periodic wraparound. Requires a conjugate-symmetric spectrum (real
/// kernel), which `inverse_dft` enforces.
pub fn circulant(spec: &Spectrum<f64>) -> DMatrix<f64> {
    let kernel = inverse_dft(spec).expect("oracle spectra must be conjugate-symmetric");
    let (rows, cols) = (kernel.rows(), kernel.cols());
    let n = rows * cols;
    DMatrix::from_fn(n, n, |i, j| {
        let (yi, xi) = (i / cols, i % cols);
        let (yj, xj) = (j / cols, j % cols);
        kernel.get((yi + rows - yj) % rows, (xi + cols - xj) % cols)
    })
}

/// Symmetric part `(C + C^T) / 2`; for a real circulant this realizes the
/// pointwise real part of its eigenvalue field.
pub fn sym(c: &DMatrix<f64>) -> DMatrix<f64> {
    (c + c.transpose()) * 0.5
}

pub fn inverse(c: &DMatrix<f64>) -> DMatrix<f64> {
    c.clone()
        .try_inverse()
        .expect("oracle normal-equation matrix must be invertible")
}

pub fn to_vector(img: &ImageGrid<f64>) -> DVector<f64> {
    DVector::from_iterator(img.rows() * img.cols(), img.as_slice().iter().copied())
}

/// `x^T Q y` as a scalar.
pub fn bilinear(x: &DVector<f64>, q: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    x.dot(&(q * y))
}

pub fn rel_close(a: f64, b: f64, tol: f64, what: &str) {
    let scale = a.abs().max(b.abs()).max(1e-12);
    assert!(
        (a - b).abs() <= tol * scale,
        "{what}: {a:.12e} vs {b:.12e} (rel {:.3e})",
        (a - b).abs() / scale
    );
}
