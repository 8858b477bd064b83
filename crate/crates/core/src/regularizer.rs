//! Regularization operator `T^T T` as a spectrum of real, possibly
//! fractional, order.
//!
//! The penalty is a separable sum of 1-D periodic difference operators. A
//! first difference along one axis has `|eigenvalue|^2 = 4 sin^2(pi k)` at
//! normalized frequency `k`; raising that to a real power `r` defines the
//! order-`r` penalty for that axis, and the two axes add:
//!
//! ```text
//! D(kx, ky) = (4 sin^2(pi kx))^r + (4 sin^2(pi ky))^r
//! ```
//!
//! The `4^r` factor is the honest spectrum of the iterated difference
//! operator (dense-matrix constructions reproduce it exactly); dropping it
//! would only rescale the regularization weight. `D` is real, nonnegative,
//! exactly zero only at DC, and increases with frequency magnitude along
//! each axis.

use num_complex::Complex;

use crate::error::{DeconvError, Result};
use crate::scalar::Scalar;
use crate::spectral::{normalized_frequency, Spectrum};

/// Maximum supported order. Higher orders are numerically pointless: the
/// spectrum saturates and the weight absorbs the scale.
pub const MAX_ORDER: f64 = 4.0;

/// Difference-penalty description: a real order `r` in `(0, 4]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegularizerSpec<T> {
    order: T,
}

impl<T: Scalar> RegularizerSpec<T> {
    pub fn new(order: T) -> Result<Self> {
        if !order.is_finite() || order <= T::zero() || order > T::cast(MAX_ORDER) {
            return Err(DeconvError::InvalidArgument(format!(
                "regularizer order must lie in (0, {MAX_ORDER}], got {order}"
            )));
        }
        Ok(RegularizerSpec { order })
    }

    pub fn order(&self) -> T {
        self.order
    }

    /// Eigenvalues of `T^T T` on a `rows x cols` grid.
    pub fn spectrum(&self, rows: usize, cols: usize) -> Result<Spectrum<T>> {
        let r = self.order;
        let axis_x = axis_powers(cols, r);
        let axis_y = axis_powers(rows, r);
        Spectrum::from_fn(rows, cols, |jy, jx| {
            Complex::new(axis_y[jy] + axis_x[jx], T::zero())
        })
    }

    /// Entrywise derivative of the spectrum with respect to the order:
    /// `d/dr a^r = ln(a) a^r` per axis term, extended by continuity to 0 at
    /// the frequencies where the term itself vanishes.
    pub fn order_derivative(&self, rows: usize, cols: usize) -> Result<Spectrum<T>> {
        let r = self.order;
        let axis_x = axis_log_powers(cols, r);
        let axis_y = axis_log_powers(rows, r);
        Spectrum::from_fn(rows, cols, |jy, jx| {
            Complex::new(axis_y[jy] + axis_x[jx], T::zero())
        })
    }
}

/// `(4 sin^2(pi k_j))^r` for every index on one axis.
fn axis_powers<T: Scalar>(dim: usize, r: T) -> Vec<T> {
    (0..dim)
        .map(|j| {
            if j == 0 {
                T::zero()
            } else {
                axis_base::<T>(j, dim).powf(r)
            }
        })
        .collect()
}

fn axis_log_powers<T: Scalar>(dim: usize, r: T) -> Vec<T> {
    (0..dim)
        .map(|j| {
            if j == 0 {
                T::zero()
            } else {
                let base = axis_base::<T>(j, dim);
                base.ln() * base.powf(r)
            }
        })
        .collect()
}

fn axis_base<T: Scalar>(j: usize, dim: usize) -> T {
    let k: T = normalized_frequency(j, dim);
    let s = (T::PI() * k).sin();
    T::cast(4.0) * s * s
}
