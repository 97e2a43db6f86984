//! Second-order Butterworth low-pass, bilinear transform with cutoff prewarping,
//! transposed direct form II.

use crate::math::{sqrt, tan};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ButterworthCoefficients {
    pub b: [f64; 3],
    /// `a[0]` is normalised to 1 and omitted.
    pub a: [f64; 2],
}

impl ButterworthCoefficients {
    pub fn low_pass(cutoff: f64, sample_rate: f64) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::InvalidParameter { name: "sample_rate", reason: "must be positive" });
        }
        if !(cutoff > 0.0 && cutoff < 0.5 * sample_rate) {
            return Err(Error::InvalidParameter { name: "cutoff", reason: "must lie in (0, Nyquist)" });
        }
        let k = tan(core::f64::consts::PI * cutoff / sample_rate);
        let k2 = k * k;
        let q = sqrt(2.0);
        let norm = 1.0 / (1.0 + q * k + k2);
        let b0 = k2 * norm;
        Ok(Self {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k2 - 1.0) * norm, (1.0 - q * k + k2) * norm],
        })
    }
}

/// `N` independent channels sharing one set of coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Butterworth2<const N: usize> {
    coeffs: ButterworthCoefficients,
    s1: [f64; N],
    s2: [f64; N],
}

impl<const N: usize> Butterworth2<N> {
    pub fn new(coeffs: ButterworthCoefficients) -> Self {
        Self { coeffs, s1: [0.0; N], s2: [0.0; N] }
    }

    pub fn coefficients(&self) -> &ButterworthCoefficients {
        &self.coeffs
    }

    /// Sets the state so a constant input `x` passes through unchanged.
    pub fn reset(&mut self, x: [f64; N]) {
        let ButterworthCoefficients { b, a } = self.coeffs;
        for (c, &xc) in x.iter().enumerate() {
            self.s2[c] = (b[2] - a[1]) * xc;
            self.s1[c] = (b[1] - a[0]) * xc + self.s2[c];
        }
    }

    pub fn apply(&mut self, x: [f64; N]) -> [f64; N] {
        let ButterworthCoefficients { b, a } = self.coeffs;
        let mut y = [0.0; N];
        for c in 0..N {
            y[c] = b[0] * x[c] + self.s1[c];
            self.s1[c] = b[1] * x[c] - a[0] * y[c] + self.s2[c];
            self.s2[c] = b[2] * x[c] - a[1] * y[c];
        }
        y
    }
}
