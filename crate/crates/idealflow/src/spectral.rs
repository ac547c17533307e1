//! Dual grid/spectral representation of real scalar fields on the unit-period
//! circle.
//!
//! A field is stored by its retained Fourier half-spectrum `a_n`, `0 ≤ n ≤
//! n_modes`, with `a_{-n} = conj(a_n)` implied by realness.  The nominal grid
//! has `N = 2(n_modes + 1)` samples at `s_j = j/N`; nonlinear products are
//! evaluated on a grid oversampled by a factor 4 and truncated back, which is
//! alias-free for products of up to degree 5 of factors occupying the lower
//! quarter of the band.

use num_complex::Complex;

use crate::scalar::Scalar;
use crate::{Error, Result};

/// Oversampling factor for pointwise (nonlinear) operations.
pub const OVERSAMPLE: usize = 4;

/// Energy fraction in the top decile of modes above which a field counts as
/// spectrally under-resolved.
pub const RESOLUTION_WARN_FRACTION: f64 = 1e-8;

/// Real scalar function on ℝ/ℤ, represented by its retained Fourier modes.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicField<T> {
    /// Coefficients `a_0 .. a_{n_modes}`; `a_{-n} = conj(a_n)`.
    spectrum: Vec<Complex<T>>,
}

impl<T: Scalar> PeriodicField<T> {
    /// Zero field with `n_modes` retained modes per side.
    pub fn zero(n_modes: usize) -> Self {
        Self {
            spectrum: vec![Complex::new(T::zero(), T::zero()); n_modes + 1],
        }
    }

    /// Constant field.
    pub fn constant(value: T, n_modes: usize) -> Self {
        let mut f = Self::zero(n_modes);
        f.spectrum[0] = Complex::new(value, T::zero());
        f
    }

    /// `amp · cos(2πns)`.
    pub fn cosine(n: usize, amp: T, n_modes: usize) -> Self {
        let mut f = Self::zero(n_modes);
        if n == 0 {
            f.spectrum[0] = Complex::new(amp, T::zero());
        } else {
            assert!(n <= n_modes, "mode {n} outside retained band {n_modes}");
            f.spectrum[n] = Complex::new(amp / T::of(2.0), T::zero());
        }
        f
    }

    /// `amp · sin(2πns)`, `n ≥ 1`.
    pub fn sine(n: usize, amp: T, n_modes: usize) -> Self {
        assert!(n >= 1 && n <= n_modes, "mode {n} outside retained band");
        let mut f = Self::zero(n_modes);
        f.spectrum[n] = Complex::new(T::zero(), -amp / T::of(2.0));
        f
    }

    /// Build a field from its half-spectrum `a_0 .. a_{n_modes}`.
    ///
    /// The imaginary part of `a_0` is discarded (a real field has real mean).
    pub fn from_spectrum(mut spectrum: Vec<Complex<T>>) -> Self {
        assert!(!spectrum.is_empty());
        spectrum[0].im = T::zero();
        Self { spectrum }
    }

    /// Build a field from `N` equispaced samples; retains `N/2 − 1` modes.
    pub fn from_samples(values: &[T]) -> Self {
        let n = values.len();
        assert!(n >= 4 && n % 2 == 0, "need an even number (≥ 4) of samples");
        let n_modes = n / 2 - 1;
        let mut buf: Vec<Complex<T>> = values
            .iter()
            .map(|&v| Complex::new(v, T::zero()))
            .collect();
        T::plan(n, false).process(&mut buf);
        let scale = T::of(1.0 / n as f64);
        let mut spectrum: Vec<Complex<T>> =
            buf[..=n_modes].iter().map(|c| c.scale(scale)).collect();
        spectrum[0].im = T::zero();
        Self { spectrum }
    }

    pub fn n_modes(&self) -> usize {
        self.spectrum.len() - 1
    }

    /// Nominal grid size `2(n_modes + 1)`.
    pub fn grid_len(&self) -> usize {
        2 * self.spectrum.len()
    }

    /// Signed-index coefficient; `a_{-n} = conj(a_n)`, zero outside the band.
    pub fn coefficient(&self, n: i64) -> Complex<T> {
        let idx = n.unsigned_abs() as usize;
        if idx > self.n_modes() {
            return Complex::new(T::zero(), T::zero());
        }
        if n >= 0 {
            self.spectrum[idx]
        } else {
            self.spectrum[idx].conj()
        }
    }

    pub fn set_coefficient(&mut self, n: usize, value: Complex<T>) {
        assert!(n <= self.n_modes());
        self.spectrum[n] = value;
        if n == 0 {
            self.spectrum[0].im = T::zero();
        }
    }

    /// Samples at `s_j = j/len` for any even `len ≥ 2(n_modes + 1)`.
    pub fn values_on(&self, len: usize) -> Vec<T> {
        assert!(len >= self.grid_len() && len % 2 == 0);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); len];
        buf[0] = self.spectrum[0];
        for n in 1..self.spectrum.len() {
            buf[n] = self.spectrum[n];
            buf[len - n] = self.spectrum[n].conj();
        }
        T::plan(len, true).process(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Samples on the nominal grid.
    pub fn values(&self) -> Vec<T> {
        self.values_on(self.grid_len())
    }

    /// Samples on the 4× oversampled grid used for nonlinear operations.
    pub fn values_oversampled(&self) -> Vec<T> {
        self.values_on(OVERSAMPLE * self.grid_len())
    }

    /// Truncate or zero-pad the retained band.
    pub fn resample(&self, n_modes: usize) -> Self {
        let mut spectrum = vec![Complex::new(T::zero(), T::zero()); n_modes + 1];
        let keep = n_modes.min(self.n_modes());
        spectrum[..=keep].copy_from_slice(&self.spectrum[..=keep]);
        Self { spectrum }
    }

    /// Spectral derivative of the given order; order 0 is the identity.
    pub fn derivative(&self, order: usize) -> Self {
        if order == 0 {
            return self.clone();
        }
        let mut spectrum = self.spectrum.clone();
        spectrum[0] = Complex::new(T::zero(), T::zero());
        // i^order
        let rot = match order % 4 {
            0 => Complex::new(T::one(), T::zero()),
            1 => Complex::new(T::zero(), T::one()),
            2 => Complex::new(-T::one(), T::zero()),
            _ => Complex::new(T::zero(), -T::one()),
        };
        for (n, a) in spectrum.iter_mut().enumerate().skip(1) {
            let w = T::two_pi() * T::of(n as f64);
            *a = *a * rot.scale(w.powi(order as i32));
        }
        Self { spectrum }
    }

    /// The unique mean-zero primitive; defined only on mean-zero fields.
    pub fn mean_zero_primitive(&self) -> Result<Self> {
        let mean = self.mean();
        let tol = T::of(1e-12) * (T::one() + self.max_abs());
        if mean.abs() > tol {
            return Err(Error::MeanNotZero {
                mean: mean.as_f64(),
                tol: tol.as_f64(),
            });
        }
        let mut spectrum = self.spectrum.clone();
        spectrum[0] = Complex::new(T::zero(), T::zero());
        for (n, a) in spectrum.iter_mut().enumerate().skip(1) {
            let w = T::two_pi() * T::of(n as f64);
            // a / (2πin) = -i a / (2πn)
            *a = Complex::new(a.im / w, -a.re / w);
        }
        Ok(Self { spectrum })
    }

    /// Dealiased pointwise product, truncated back to the retained band.
    pub fn product(&self, other: &Self) -> Self {
        assert_eq!(
            self.n_modes(),
            other.n_modes(),
            "incompatible retained bands"
        );
        let len = OVERSAMPLE * self.grid_len();
        let a = self.values_on(len);
        let b = other.values_on(len);
        let prod: Vec<T> = a.iter().zip(&b).map(|(&x, &y)| x * y).collect();
        Self::from_samples(&prod).resample(self.n_modes())
    }

    /// Apply a pointwise map on the oversampled grid and truncate back.
    pub fn map_pointwise(&self, f: impl Fn(T) -> T) -> Self {
        let len = OVERSAMPLE * self.grid_len();
        let vals: Vec<T> = self.values_on(len).into_iter().map(f).collect();
        Self::from_samples(&vals).resample(self.n_modes())
    }

    /// ∫₀¹ f ds = a_0 (unit period).
    pub fn integrate(&self) -> T {
        self.spectrum[0].re
    }

    pub fn mean(&self) -> T {
        self.spectrum[0].re
    }

    /// ∫ (Dᵖf)² ds = Σ_n (2πn)^{2p} |a_n|² by Parseval.
    pub fn sobolev_seminorm_sq(&self, p: usize) -> T {
        let two = T::of(2.0);
        let mut total = if p == 0 {
            self.spectrum[0].re * self.spectrum[0].re
        } else {
            T::zero()
        };
        for (n, a) in self.spectrum.iter().enumerate().skip(1) {
            let w = T::two_pi() * T::of(n as f64);
            total = total + two * w.powi(2 * p as i32) * a.norm_sqr();
        }
        total
    }

    /// ∫ f² ds.
    pub fn l2_norm_sq(&self) -> T {
        self.sobolev_seminorm_sq(0)
    }

    /// ∫ (f − mean)² ds.
    pub fn fluctuation_norm_sq(&self) -> T {
        let two = T::of(2.0);
        self.spectrum
            .iter()
            .skip(1)
            .fold(T::zero(), |acc, a| acc + two * a.norm_sqr())
    }

    pub fn max_abs(&self) -> T {
        self.values()
            .into_iter()
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Fraction of the fluctuation energy carried by the top decile of modes.
    pub fn top_decile_energy_fraction(&self) -> T {
        let cutoff = (9 * self.n_modes()) / 10;
        let mut total = T::zero();
        let mut top = T::zero();
        for (n, a) in self.spectrum.iter().enumerate().skip(1) {
            let e = a.norm_sqr();
            total = total + e;
            if n > cutoff {
                top = top + e;
            }
        }
        if total == T::zero() {
            T::zero()
        } else {
            top / total
        }
    }

    /// Err(UnderResolved) when the top decile carries more than 1e−8 of the
    /// fluctuation energy; surrogate for the continuation criterion.
    pub fn check_resolved(&self) -> Result<()> {
        let fraction = self.top_decile_energy_fraction();
        if fraction.as_f64() > RESOLUTION_WARN_FRACTION {
            Err(Error::UnderResolved {
                fraction: fraction.as_f64(),
            })
        } else {
            Ok(())
        }
    }

    pub fn scale(&self, factor: T) -> Self {
        Self {
            spectrum: self.spectrum.iter().map(|a| a.scale(factor)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n_modes(), other.n_modes());
        Self {
            spectrum: self
                .spectrum
                .iter()
                .zip(&other.spectrum)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.n_modes(), other.n_modes());
        Self {
            spectrum: self
                .spectrum
                .iter()
                .zip(&other.spectrum)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn add_scaled(&self, other: &Self, factor: T) -> Self {
        self.add(&other.scale(factor))
    }

    /// Shift the mean by `c`.
    pub fn add_constant(&self, c: T) -> Self {
        let mut out = self.clone();
        out.spectrum[0].re = out.spectrum[0].re + c;
        out
    }

    /// Remove the mean.
    pub fn without_mean(&self) -> Self {
        let mut out = self.clone();
        out.spectrum[0] = Complex::new(T::zero(), T::zero());
        out
    }

    pub fn spectrum(&self) -> &[Complex<T>] {
        &self.spectrum
    }
}
