use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::ops::{Div, Mul};

/// A complex number `mant * exp(log_scale)` with an unbounded real exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaled {
    pub mant: Complex64,
    pub log_scale: f64,
}

impl Scaled {
    pub const ZERO: Scaled = Scaled { mant: Complex64::new(0.0, 0.0), log_scale: 0.0 };

    pub fn new(mant: Complex64, log_scale: f64) -> Self {
        Scaled { mant, log_scale }.normalized()
    }

    pub fn from_complex(z: Complex64) -> Self {
        Scaled::new(z, 0.0)
    }

    /// `exp(z)` without overflow.
    pub fn exp(z: Complex64) -> Self {
        Scaled { mant: Complex64::from_polar(1.0, z.im), log_scale: z.re }
    }

    /// Moves the magnitude of the mantissa into the exponent.
    pub fn normalized(self) -> Self {
        let m = self.mant.norm();
        if m == 0.0 || !m.is_finite() {
            return Scaled { mant: self.mant, log_scale: if m == 0.0 { 0.0 } else { self.log_scale } };
        }
        Scaled { mant: self.mant / m, log_scale: self.log_scale + m.ln() }
    }

    pub fn is_zero(&self) -> bool {
        self.mant == Complex64::new(0.0, 0.0)
    }

    /// ln|z|; `-inf` for zero.
    pub fn ln_abs(&self) -> f64 {
        self.mant.norm().ln() + self.log_scale
    }

    pub fn arg(&self) -> f64 {
        self.mant.arg()
    }

    /// The plain complex value; may overflow to infinity or underflow to zero.
    pub fn to_complex(&self) -> Complex64 {
        self.mant * self.log_scale.exp()
    }

    pub fn scale(self, factor: Complex64) -> Self {
        Scaled::new(self.mant * factor, self.log_scale)
    }

    /// Sum of two scaled numbers.
    pub fn add(self, other: Scaled) -> Scaled {
        if self.is_zero() {
            return other;
        }
        if other.is_zero() {
            return self;
        }
        let top = self.log_scale.max(other.log_scale);
        let s = self.mant * (self.log_scale - top).exp() + other.mant * (other.log_scale - top).exp();
        Scaled::new(s, top)
    }

    pub fn sub(self, other: Scaled) -> Scaled {
        self.add(other.scale(Complex64::new(-1.0, 0.0)))
    }
}

impl Mul for Scaled {
    type Output = Scaled;
    fn mul(self, rhs: Scaled) -> Scaled {
        Scaled::new(self.mant * rhs.mant, self.log_scale + rhs.log_scale)
    }
}

impl Div for Scaled {
    type Output = Scaled;
    fn div(self, rhs: Scaled) -> Scaled {
        Scaled::new(self.mant / rhs.mant, self.log_scale - rhs.log_scale)
    }
}
