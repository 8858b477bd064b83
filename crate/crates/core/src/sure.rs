//! The unbiased risk estimate for blurred-domain mean squared error and its
//! closed-form derivatives.
//!
//! For data `b = h0 * u0 + noise` and the Tikhonov restoration
//! `u = M H^T b`, `M = (H^T H + lambda T^T T)^{-1}`, the estimate
//!
//! ```text
//! SURE = -N sigma^2 + ||H u - b||^2 + 2 sigma^2 trace(H M H^T)
//! ```
//!
//! is an unbiased estimate of `E ||H0 u0 - H u||^2` regardless of the true
//! blur, which makes it a usable objective for estimating both the PSF
//! parameters and `lambda`. Every operator here is circulant, so each
//! quantity reduces to one pass over the frequency grid with the per-mode
//! values
//!
//! ```text
//! s = |h|^2,  w = lambda * d  (or sigma^2 * v),  m = 1 / (s + w),
//! a = s m - 1 = -w m
//! ```
//!
//! where `d` is the regularizer spectrum and `v` the inverse signal power of
//! an oracle regularizer. Sums over `|b_hat|^2` carry an explicit `1/N` so
//! values are in pixel-domain units.
//!
//! Derivative quantities follow the same pattern. With `h_g` the derivative
//! spectrum of the blur along a parameter, the risk gradient is
//!
//! ```text
//! dSURE/dgamma = 4 sigma^2 sum(m^2 w Re(conj(h) h_g))
//!              - (4/N) sum(a^2 Re(h m conj(h_g)) |b_hat|^2)
//! ```
//!
//! whose two halves also form the multiplicative fixed-point ratio used by
//! the estimator, and the regularization weight has the closed fixed point
//! `lambda' = sigma^2 sum(s m^2 d) / ((1/N) sum(s m^3 d^2 |b_hat|^2))`.

use num_complex::Complex;

use crate::error::{DeconvError, Result};
use crate::regularizer::RegularizerSpec;
use crate::scalar::Scalar;
use crate::spectral::{forward_dft, ImageGrid, Spectrum};

/// Observed data and fixed problem structure shared by all evaluations:
/// the data spectrum, the noise variance, and the regularizer spectrum.
#[derive(Clone, Debug)]
pub struct SureContext<T> {
    b_hat: Spectrum<T>,
    b2: Vec<T>,
    sigma2: T,
    reg: Spectrum<T>,
}

/// Oracle regularizer built from a known ground-truth image: per-frequency
/// penalty equal to the inverse periodogram, so that `sigma^2 v(k)` is the
/// noise-to-signal power ratio of that mode. Simulation-only; it turns the
/// restoration into the classical Wiener filter.
#[derive(Clone, Debug)]
pub struct IdealRegularizer<T> {
    v: Vec<T>,
    rows: usize,
    cols: usize,
}

impl<T: Scalar> IdealRegularizer<T> {
    /// Floor applied to `|u0_hat|^2` relative to its maximum, keeping the
    /// penalty finite where the ground truth has empty frequencies.
    pub const POWER_FLOOR: f64 = 1e-12;

    pub fn from_ground_truth(u0: &ImageGrid<T>) -> Result<Self> {
        let u0_hat = forward_dft(u0);
        let power: Vec<T> = u0_hat.values().iter().map(|v| v.norm_sqr()).collect();
        let max = power.iter().copied().fold(T::zero(), T::max);
        if !(max > T::zero()) {
            return Err(DeconvError::DegenerateData {
                context: "ideal regularizer",
                detail: "ground-truth image has no spectral content".into(),
            });
        }
        let floor = T::cast(Self::POWER_FLOOR) * max;
        // Inverse periodogram N / |u0_hat|^2: under the unnormalized forward
        // DFT, per-pixel noise of variance sigma^2 carries power N sigma^2
        // per mode, so this scale makes sigma^2 v the per-mode noise-to-
        // signal ratio of the classical Wiener filter.
        let n = T::cast((u0.rows() * u0.cols()) as f64);
        Ok(IdealRegularizer {
            v: power.into_iter().map(|p| n / p.max(floor)).collect(),
            rows: u0.rows(),
            cols: u0.cols(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Inverse-power penalty values, frequency-layout order.
    pub fn penalty(&self) -> &[T] {
        &self.v
    }
}

/// Underflow guard for fixed-point ratio denominators, scaled to the float
/// type (about 1e-292 for f64).
fn ratio_floor<T: Scalar>() -> T {
    T::min_positive_value() / T::epsilon()
}

impl<T: Scalar> SureContext<T> {
    pub fn new(b_hat: Spectrum<T>, sigma2: T, reg: Spectrum<T>) -> Result<Self> {
        if !(sigma2 > T::zero()) || !sigma2.is_finite() {
            return Err(DeconvError::InvalidArgument(format!(
                "noise variance must be positive and finite, got {sigma2}"
            )));
        }
        b_hat.check_same_dims(&reg)?;
        let sym_tol = T::cast(1e-8) * (T::one() + b_hat.max_abs());
        let residual = b_hat.conjugate_symmetry_residual();
        if residual > sym_tol {
            return Err(DeconvError::NotConjugateSymmetric {
                residual: residual.as_f64(),
                tolerance: sym_tol.as_f64(),
            });
        }
        for (k, v) in reg.values().iter().enumerate() {
            if v.im.abs() > T::cast(1e-12) || v.re < T::zero() {
                return Err(DeconvError::InvalidArgument(format!(
                    "regularizer spectrum must be real nonnegative, entry {k} is {v}"
                )));
            }
        }
        if reg.dc().re != T::zero() {
            return Err(DeconvError::InvalidArgument(format!(
                "regularizer spectrum must vanish at DC, got {}",
                reg.dc().re
            )));
        }
        let b2 = b_hat.values().iter().map(|v| v.norm_sqr()).collect();
        Ok(SureContext {
            b_hat,
            b2,
            sigma2,
            reg,
        })
    }

    /// Convenience constructor: transform the observed image and build the
    /// regularizer spectrum at matching size.
    pub fn from_image(b: &ImageGrid<T>, sigma: T, reg_spec: &RegularizerSpec<T>) -> Result<Self> {
        let reg = reg_spec.spectrum(b.rows(), b.cols())?;
        SureContext::new(forward_dft(b), sigma * sigma, reg)
    }

    pub fn rows(&self) -> usize {
        self.b_hat.rows()
    }

    pub fn cols(&self) -> usize {
        self.b_hat.cols()
    }

    pub fn pixel_count(&self) -> usize {
        self.b_hat.len()
    }

    pub fn b_hat(&self) -> &Spectrum<T> {
        &self.b_hat
    }

    pub fn sigma2(&self) -> T {
        self.sigma2
    }

    pub fn reg(&self) -> &Spectrum<T> {
        &self.reg
    }

    fn check_h(&self, h: &Spectrum<T>) -> Result<()> {
        self.b_hat.check_same_dims(h)
    }

    fn check_lambda(&self, lambda: T) -> Result<()> {
        if !(lambda > T::zero()) || !lambda.is_finite() {
            return Err(DeconvError::InvalidArgument(format!(
                "regularization weight must be positive and finite, got {lambda}"
            )));
        }
        Ok(())
    }

    fn check_ideal(&self, ideal: &IdealRegularizer<T>) -> Result<()> {
        if ideal.rows != self.rows() || ideal.cols != self.cols() {
            return Err(DeconvError::DimensionMismatch(format!(
                "ideal regularizer is {}x{}, data is {}x{}",
                ideal.rows,
                ideal.cols,
                self.rows(),
                self.cols()
            )));
        }
        Ok(())
    }

    // Penalty fields for the two regularization modes. Everything downstream
    // is written against `w(k)` so the Tikhonov and oracle paths share code.
    fn tikhonov_w(&self, lambda: T) -> impl Fn(usize) -> T + '_ {
        let reg = self.reg.values();
        move |k| lambda * reg[k].re
    }

    fn ideal_w<'a>(&self, ideal: &'a IdealRegularizer<T>) -> impl Fn(usize) -> T + 'a {
        let sigma2 = self.sigma2;
        move |k| sigma2 * ideal.v[k]
    }

    fn wiener_solve_w(&self, h: &Spectrum<T>, w: impl Fn(usize) -> T) -> Result<Spectrum<T>> {
        self.check_h(h)?;
        let mut out = Vec::with_capacity(h.len());
        for (k, (hk, bk)) in h.values().iter().zip(self.b_hat.values()).enumerate() {
            let den = hk.norm_sqr() + w(k);
            if !(den > T::zero()) || !den.is_finite() {
                return Err(DeconvError::VanishingDenominator {
                    context: "restoration filter",
                });
            }
            out.push(hk.conj() * *bk / Complex::new(den, T::zero()));
        }
        Spectrum::from_values(self.rows(), self.cols(), out)
    }

    /// Tikhonov-restored image spectrum `conj(h) b_hat / (|h|^2 + lambda d)`.
    pub fn wiener_solve(&self, h: &Spectrum<T>, lambda: T) -> Result<Spectrum<T>> {
        self.check_lambda(lambda)?;
        self.wiener_solve_w(h, self.tikhonov_w(lambda))
    }

    /// Oracle-regularized restoration `conj(h) b_hat / (|h|^2 + sigma^2 v)`.
    pub fn wiener_solve_ideal(
        &self,
        h: &Spectrum<T>,
        ideal: &IdealRegularizer<T>,
    ) -> Result<Spectrum<T>> {
        self.check_ideal(ideal)?;
        self.wiener_solve_w(h, self.ideal_w(ideal))
    }

    fn sure_value_w(&self, h: &Spectrum<T>, w: impl Fn(usize) -> T) -> Result<T> {
        self.check_h(h)?;
        let n = T::cast(self.pixel_count() as f64);
        let mut fit = T::zero();
        let mut trace = T::zero();
        for (k, hk) in h.values().iter().enumerate() {
            let s = hk.norm_sqr();
            let den = s + w(k);
            if !(den > T::zero()) || !den.is_finite() {
                return Err(DeconvError::VanishingDenominator {
                    context: "risk evaluation",
                });
            }
            let m = den.recip();
            let a = s * m - T::one();
            fit += a * a * self.b2[k];
            trace += s * m;
        }
        let value = -n * self.sigma2 + fit / n + T::cast(2.0) * self.sigma2 * trace;
        if !value.is_finite() {
            return Err(DeconvError::NonFinite("risk evaluation".into()));
        }
        Ok(value)
    }

    /// The risk estimate in pixel-domain units.
    pub fn sure_value(&self, h: &Spectrum<T>, lambda: T) -> Result<T> {
        self.check_lambda(lambda)?;
        self.sure_value_w(h, self.tikhonov_w(lambda))
    }

    pub fn sure_value_ideal(&self, h: &Spectrum<T>, ideal: &IdealRegularizer<T>) -> Result<T> {
        self.check_ideal(ideal)?;
        self.sure_value_w(h, self.ideal_w(ideal))
    }

    /// Shared reduction for the gradient and the fixed-point ratio:
    /// `t1 = sum(m^2 w Re(conj(h) h_g))` and the signed data term
    /// `den = -(1/N) sum(a^2 Re(h m conj(h_g)) |b_hat|^2)`.
    fn gamma_terms_w(
        &self,
        h: &Spectrum<T>,
        h_gamma: &Spectrum<T>,
        w: impl Fn(usize) -> T,
    ) -> Result<(T, T)> {
        self.check_h(h)?;
        self.check_h(h_gamma)?;
        let n = T::cast(self.pixel_count() as f64);
        let mut t1 = T::zero();
        let mut den = T::zero();
        for (k, (hk, hg)) in h.values().iter().zip(h_gamma.values()).enumerate() {
            let s = hk.norm_sqr();
            let dk = s + w(k);
            if !(dk > T::zero()) || !dk.is_finite() {
                return Err(DeconvError::VanishingDenominator {
                    context: "risk gradient",
                });
            }
            let m = dk.recip();
            let a = s * m - T::one();
            t1 += m * m * w(k) * (hk.conj() * *hg).re;
            den += a * a * (*hk * hg.conj()).re * m * self.b2[k];
        }
        Ok((t1, -den / n))
    }

    /// `dSURE/dgamma` for the blur-parameter direction with derivative
    /// spectrum `h_gamma`.
    pub fn sure_gamma_gradient(
        &self,
        h: &Spectrum<T>,
        h_gamma: &Spectrum<T>,
        lambda: T,
    ) -> Result<T> {
        self.check_lambda(lambda)?;
        let (t1, den) = self.gamma_terms_w(h, h_gamma, self.tikhonov_w(lambda))?;
        Ok(T::cast(4.0) * (self.sigma2 * t1 + den))
    }

    pub fn sure_gamma_gradient_ideal(
        &self,
        h: &Spectrum<T>,
        h_gamma: &Spectrum<T>,
        ideal: &IdealRegularizer<T>,
    ) -> Result<T> {
        self.check_ideal(ideal)?;
        let (t1, den) = self.gamma_terms_w(h, h_gamma, self.ideal_w(ideal))?;
        Ok(T::cast(4.0) * (self.sigma2 * t1 + den))
    }

    fn ratio_from_terms(&self, t1: T, den: T, param: &str) -> Result<T> {
        if den.abs() <= ratio_floor::<T>() || !den.is_finite() {
            return Err(DeconvError::DegenerateRatio {
                param: param.into(),
                denominator: den.as_f64(),
            });
        }
        Ok(-self.sigma2 * t1 / den)
    }

    /// Multiplicative fixed-point ratio `R`; the estimator forms
    /// `gamma' = gamma * R^p`. Signed: the gradient satisfies
    /// `dSURE/dgamma = 4 den (1 - R)`, so `R = 1` is exactly stationarity.
    /// A nonpositive `R` is returned as-is and the caller falls back to a
    /// gradient step.
    pub fn gamma_fixed_point_ratio(
        &self,
        h: &Spectrum<T>,
        h_gamma: &Spectrum<T>,
        lambda: T,
    ) -> Result<T> {
        self.check_lambda(lambda)?;
        let (t1, den) = self.gamma_terms_w(h, h_gamma, self.tikhonov_w(lambda))?;
        self.ratio_from_terms(t1, den, "gamma")
    }

    pub fn gamma_fixed_point_ratio_ideal(
        &self,
        h: &Spectrum<T>,
        h_gamma: &Spectrum<T>,
        ideal: &IdealRegularizer<T>,
    ) -> Result<T> {
        self.check_ideal(ideal)?;
        let (t1, den) = self.gamma_terms_w(h, h_gamma, self.ideal_w(ideal))?;
        self.ratio_from_terms(t1, den, "gamma")
    }

    /// One step of the closed-form fixed point for the regularization
    /// weight, evaluated at the current weight.
    pub fn lambda_update(&self, h: &Spectrum<T>, lambda: T) -> Result<T> {
        self.check_lambda(lambda)?;
        self.check_h(h)?;
        let n = T::cast(self.pixel_count() as f64);
        let mut num = T::zero();
        let mut den = T::zero();
        for (k, hk) in h.values().iter().enumerate() {
            let s = hk.norm_sqr();
            let d = self.reg.values()[k].re;
            let dk = s + lambda * d;
            if !(dk > T::zero()) || !dk.is_finite() {
                return Err(DeconvError::VanishingDenominator {
                    context: "weight update",
                });
            }
            let m = dk.recip();
            num += s * m * m * d;
            den += s * m * m * m * d * d * self.b2[k];
        }
        den = den / n;
        if !(den > T::zero()) || !den.is_finite() {
            return Err(DeconvError::DegenerateData {
                context: "weight update",
                detail: format!("data term {den}; data has no off-DC spectral content"),
            });
        }
        let next = self.sigma2 * num / den;
        if !next.is_finite() || !(next > T::zero()) {
            return Err(DeconvError::NonFinite("weight update".into()));
        }
        Ok(next)
    }

    /// Mixed second partial of the risk along two blur-parameter directions,
    /// given both first-derivative spectra and the mixed second-derivative
    /// spectrum. Symmetric in the two directions.
    pub fn sure_hessian_entry(
        &self,
        h: &Spectrum<T>,
        h_rho: &Spectrum<T>,
        h_gamma: &Spectrum<T>,
        h_rho_gamma: &Spectrum<T>,
        lambda: T,
    ) -> Result<T> {
        self.check_lambda(lambda)?;
        self.check_h(h)?;
        self.check_h(h_rho)?;
        self.check_h(h_gamma)?;
        self.check_h(h_rho_gamma)?;
        let n = T::cast(self.pixel_count() as f64);
        let four = T::cast(4.0);
        let mut trace_part = T::zero();
        let mut quad_outer = T::zero();
        let mut quad_inner = T::zero();
        for (k, hk) in h.values().iter().enumerate() {
            let hr = h_rho.values()[k];
            let hg = h_gamma.values()[k];
            let hrg = h_rho_gamma.values()[k];
            let s = hk.norm_sqr();
            let d = self.reg.values()[k].re;
            let dk = s + lambda * d;
            if !(dk > T::zero()) || !dk.is_finite() {
                return Err(DeconvError::VanishingDenominator {
                    context: "risk curvature",
                });
            }
            let m = dk.recip();
            let a = s * m - T::one();
            let rho_gamma = (hr.conj() * hg).re;
            // trace(M^2 T^T T (-4 M H^T H H_rho^T H_gamma + H_rho^T H_gamma
            //                   + H^T H_rho_gamma))
            trace_part +=
                m * m * d * (-four * m * s * rho_gamma + rho_gamma + (hk.conj() * hrg).re);
            // b^T A^T (H M H_rho^T)(H M H_gamma^T) A b
            quad_outer += a * a * m * m * (*hk * *hk * hr.conj() * hg.conj()).re * self.b2[k];
            // b^T A^T (H_rho M H_gamma^T - 2 H M H^T H_rho M H_gamma^T
            //          + H M H_rho_gamma^T) A b
            let b_eig = (hr * hg.conj()).re * m * (T::one() - T::cast(2.0) * s * m)
                + (*hk * hrg.conj()).re * m;
            quad_inner += a * a * b_eig * self.b2[k];
        }
        let value = four * self.sigma2 * lambda * trace_part
            + T::cast(16.0) * quad_outer / n
            - four * quad_inner / n;
        if !value.is_finite() {
            return Err(DeconvError::NonFinite("risk curvature".into()));
        }
        Ok(value)
    }

    /// Derivative of the risk with respect to the regularizer order, a
    /// diagnostic for choosing the penalty family. The context's regularizer
    /// spectrum must have been built from `reg_spec`.
    pub fn sure_reg_order_gradient(
        &self,
        h: &Spectrum<T>,
        lambda: T,
        reg_spec: &RegularizerSpec<T>,
    ) -> Result<T> {
        self.check_lambda(lambda)?;
        self.check_h(h)?;
        let d_r = reg_spec.order_derivative(self.rows(), self.cols())?;
        let n = T::cast(self.pixel_count() as f64);
        let mut trace_part = T::zero();
        let mut data_part = T::zero();
        for (k, hk) in h.values().iter().enumerate() {
            let s = hk.norm_sqr();
            let d = self.reg.values()[k].re;
            let dk = s + lambda * d;
            if !(dk > T::zero()) || !dk.is_finite() {
                return Err(DeconvError::VanishingDenominator {
                    context: "order derivative",
                });
            }
            let m = dk.recip();
            let a = s * m - T::one();
            let dr = d_r.values()[k].re;
            trace_part += m * m * dr * s;
            data_part += a * s * m * m * dr * self.b2[k];
        }
        let two_lambda = T::cast(2.0) * lambda;
        Ok(-two_lambda * self.sigma2 * trace_part - two_lambda * data_part / n)
    }
}
