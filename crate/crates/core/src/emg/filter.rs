//! Second-order IIR sections and Butterworth design by the bilinear transform.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("cutoff {fc} Hz must lie strictly between 0 and Nyquist ({nyquist} Hz)")]
    InvalidCutoff { fc: f64, nyquist: f64 },
    #[error("quality factor must be positive (got {0})")]
    InvalidQ(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    #[serde(alias = "lp")]
    Lowpass,
    #[serde(alias = "hp")]
    Highpass,
}

/// Coefficients of `y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiquadCoeffs {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl BiquadCoeffs {
    pub const IDENTITY: Self = Self { b0: 1.0, b1: 0.0, b2: 0.0, a1: 0.0, a2: 0.0 };

    /// Largest pole modulus of the section.
    pub fn max_pole_modulus(&self) -> f64 {
        // Roots of z² + a1 z + a2.
        let disc = self.a1 * self.a1 - 4.0 * self.a2;
        if disc >= 0.0 {
            let s = disc.sqrt();
            ((-self.a1 + s) / 2.0).abs().max(((-self.a1 - s) / 2.0).abs())
        } else {
            // Complex pair with |z|² = a2.
            self.a2.sqrt()
        }
    }

    pub fn is_stable(&self) -> bool {
        self.max_pole_modulus() < 1.0 - 1e-6
    }

    /// |H(e^{jω})| at frequency `f` for sample rate `fs`.
    pub fn magnitude(&self, f: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * f / fs;
        let (s1, c1) = w.sin_cos();
        let (s2, c2) = (2.0 * w).sin_cos();
        let num = (self.b0 + self.b1 * c1 + self.b2 * c2, -(self.b1 * s1 + self.b2 * s2));
        let den = (1.0 + self.a1 * c1 + self.a2 * c2, -(self.a1 * s1 + self.a2 * s2));
        num.0.hypot(num.1) / den.0.hypot(den.1)
    }

    /// Gain at DC.
    pub fn dc_gain(&self) -> f64 {
        (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2)
    }
}

/// Second-order Butterworth section (Q = 1/√2) with the cutoff pre-warped
/// so that |H(fc)| = 1/√2 exactly.
pub fn design_butterworth(kind: FilterKind, fc: f64, fs: f64) -> Result<BiquadCoeffs, FilterError> {
    design_second_order(kind, fc, fs, FRAC_1_SQRT_2)
}

/// General second-order low/high-pass section; cascading sections with the
/// Butterworth pole Qs gives higher-order Butterworth responses.
pub fn design_second_order(
    kind: FilterKind,
    fc: f64,
    fs: f64,
    q: f64,
) -> Result<BiquadCoeffs, FilterError> {
    let nyquist = fs / 2.0;
    if !(fc > 0.0 && fc < nyquist) {
        return Err(FilterError::InvalidCutoff { fc, nyquist });
    }
    if !(q > 0.0 && q.is_finite()) {
        return Err(FilterError::InvalidQ(q));
    }
    let k = (PI * fc / fs).tan();
    let k2 = k * k;
    let norm = 1.0 / (1.0 + k / q + k2);
    let a1 = 2.0 * (k2 - 1.0) * norm;
    let a2 = (1.0 - k / q + k2) * norm;
    let coeffs = match kind {
        FilterKind::Lowpass => {
            let b0 = k2 * norm;
            BiquadCoeffs { b0, b1: 2.0 * b0, b2: b0, a1, a2 }
        }
        FilterKind::Highpass => BiquadCoeffs { b0: norm, b1: -2.0 * norm, b2: norm, a1, a2 },
    };
    Ok(coeffs)
}

/// Pole quality factors of an even-order Butterworth filter, one per section.
pub fn butterworth_section_qs(order: usize) -> Vec<f64> {
    assert!(order >= 2 && order % 2 == 0, "order must be even and at least 2");
    (0..order / 2)
        .map(|k| 1.0 / (2.0 * (PI * (2 * k + 1) as f64 / (2 * order) as f64).sin()))
        .collect()
}

/// Streaming biquad in transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    coeffs: BiquadCoeffs,
    s1: f64,
    s2: f64,
}

impl Biquad {
    pub fn new(coeffs: BiquadCoeffs) -> Self {
        Self { coeffs, s1: 0.0, s2: 0.0 }
    }

    pub fn coeffs(&self) -> &BiquadCoeffs {
        &self.coeffs
    }

    pub fn reset(&mut self) {
        self.s1 = 0.0;
        self.s2 = 0.0;
    }

    /// Sets the state to the steady state for a constant input `x`.
    pub fn prime(&mut self, x: f64) {
        let c = &self.coeffs;
        let y = c.dc_gain() * x;
        self.s2 = c.b2 * x - c.a2 * y;
        self.s1 = c.b1 * x - c.a1 * y + self.s2;
    }

    #[inline]
    pub fn step(&mut self, x: f64) -> f64 {
        let c = &self.coeffs;
        let y = c.b0 * x + self.s1;
        self.s1 = c.b1 * x - c.a1 * y + self.s2;
        self.s2 = c.b2 * x - c.a2 * y;
        y
    }
}

/// A chain of biquads applied in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Cascade {
    sections: Vec<Biquad>,
}

impl Cascade {
    pub fn new(coeffs: impl IntoIterator<Item = BiquadCoeffs>) -> Self {
        Self { sections: coeffs.into_iter().map(Biquad::new).collect() }
    }

    pub fn reset(&mut self) {
        self.sections.iter_mut().for_each(Biquad::reset);
    }

    #[inline]
    pub fn step(&mut self, x: f64) -> f64 {
        self.sections.iter_mut().fold(x, |acc, s| s.step(acc))
    }

    pub fn magnitude(&self, f: f64, fs: f64) -> f64 {
        self.sections.iter().map(|s| s.coeffs.magnitude(f, fs)).product()
    }
}
