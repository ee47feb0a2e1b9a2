//! Scalar abstraction over real and complex tensor entries.

use num_complex::Complex64;

/// Entry type of a tensor train: `f64` for trainable models, `Complex64`
/// after a measurement-basis rotation.
pub trait Scalar:
    ndarray::LinalgScalar + std::ops::Neg<Output = Self> + std::fmt::Debug + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self;
    fn conj(self) -> Self;
    /// Squared modulus |z|².
    fn norm_sqr(self) -> f64;
    /// Modulus |z|.
    fn modulus(self) -> f64;
    fn re(self) -> f64;
    fn scale_by(self, k: f64) -> Self;
    fn is_finite_scalar(self) -> bool;
    fn to_complex(self) -> Complex64;
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn conj(self) -> Self {
        self
    }
    fn norm_sqr(self) -> f64 {
        self * self
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn re(self) -> f64 {
        self
    }
    fn scale_by(self, k: f64) -> Self {
        self * k
    }
    fn is_finite_scalar(self) -> bool {
        self.is_finite()
    }
    fn to_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
}

impl Scalar for Complex64 {
    fn from_f64(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
    fn modulus(self) -> f64 {
        Complex64::norm(self)
    }
    fn re(self) -> f64 {
        self.re
    }
    fn scale_by(self, k: f64) -> Self {
        self * k
    }
    fn is_finite_scalar(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
    fn to_complex(self) -> Complex64 {
        self
    }
}

/// A scalar held as `phase · exp(ln_mag)`, where `phase` has unit modulus
/// (or is zero for an exactly-zero value). Contractions on long chains
/// overflow `f64` otherwise.
#[derive(Clone, Copy, Debug)]
pub struct LogScalar<T: Scalar> {
    pub ln_mag: f64,
    pub phase: T,
}

impl<T: Scalar> LogScalar<T> {
    pub fn zero() -> Self {
        Self {
            ln_mag: f64::NEG_INFINITY,
            phase: T::zero(),
        }
    }

    pub fn one() -> Self {
        Self {
            ln_mag: 0.0,
            phase: T::one(),
        }
    }

    pub fn from_value(v: T) -> Self {
        let m = v.modulus();
        if m == 0.0 {
            Self::zero()
        } else {
            Self {
                ln_mag: m.ln(),
                phase: v.scale_by(1.0 / m),
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.ln_mag == f64::NEG_INFINITY
    }

    /// Direct value; valid when `|ln_mag|` is moderate (< ~300).
    pub fn value(&self) -> T {
        if self.is_zero() {
            T::zero()
        } else {
            self.phase.scale_by(self.ln_mag.exp())
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        Self {
            ln_mag: self.ln_mag + other.ln_mag,
            phase: self.phase * other.phase,
        }
    }

    pub fn scaled(&self, ln_factor: f64) -> Self {
        if self.is_zero() {
            return *self;
        }
        Self {
            ln_mag: self.ln_mag + ln_factor,
            phase: self.phase,
        }
    }

    /// |self|² as a log-scaled real.
    pub fn abs_sqr(&self) -> LogScalar<f64> {
        LogScalar {
            ln_mag: 2.0 * self.ln_mag,
            phase: if self.is_zero() { 0.0 } else { 1.0 },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_value() {
        let x = LogScalar::from_value(-3.5f64);
        assert!((x.value() + 3.5).abs() < 1e-15);
        assert_eq!(x.phase, -1.0);

        let z = LogScalar::from_value(Complex64::new(0.0, 2.0));
        let v = z.value();
        assert!((v.re).abs() < 1e-15 && (v.im - 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_handling() {
        let z = LogScalar::from_value(0.0f64);
        assert!(z.is_zero());
        assert_eq!(z.value(), 0.0);
        let p = z.mul(&LogScalar::from_value(2.0));
        assert!(p.is_zero());
    }

    #[test]
    fn product_of_large_values_stays_finite() {
        let mut acc = LogScalar::<f64>::one();
        let f = LogScalar::from_value(1e280f64);
        for _ in 0..10 {
            acc = acc.mul(&f);
        }
        assert!((acc.ln_mag - 10.0 * 280.0 * std::f64::consts::LN_10).abs() < 1e-6);
    }
}
