//! Powers and integrals of large exponents carried as mantissa plus a base-e
//! exponent, so `u^p` never overflows or flushes to zero wholesale.

use crate::real::Real;

/// A positive quantity `mantissa * exp(log_scale)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaled<T> {
    pub mantissa: T,
    pub log_scale: T,
}

impl<T: Real> Scaled<T> {
    pub fn new(mantissa: T, log_scale: T) -> Self {
        Self {
            mantissa,
            log_scale,
        }
    }

    pub fn from_value(x: T) -> Self {
        Self::new(x, T::zero())
    }

    /// Natural logarithm of the represented value.
    pub fn ln(&self) -> T {
        self.mantissa.ln() + self.log_scale
    }

    /// Plain value; may overflow to infinity or underflow to zero.
    pub fn value(&self) -> T {
        self.mantissa * self.log_scale.exp()
    }

    /// `self^e` for a real exponent.
    pub fn powf(&self, e: T) -> Self {
        Self::new(T::one(), self.ln() * e)
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self::new(self.mantissa * other.mantissa, self.log_scale + other.log_scale)
    }

    pub fn div(&self, other: &Self) -> Self {
        Self::new(self.mantissa / other.mantissa, self.log_scale - other.log_scale)
    }
}

/// Largest value of a slice (`-inf` if empty).
pub fn max_of<T: Real>(values: &[T]) -> T {
    values.iter().fold(T::neg_infinity(), |a, b| a.max(*b))
}

/// Returns `(r, ln_gamma)` with `r_i = (max(u_i,0)/gamma)^e` and `gamma = max u`,
/// so that `u_i^e = r_i * exp(e * ln_gamma)`.
pub fn scaled_power<T: Real>(u: &[T], e: T) -> (Vec<T>, T) {
    let gamma = max_of(u);
    if !(gamma > T::zero()) {
        return (vec![T::zero(); u.len()], T::zero());
    }
    let lg = gamma.ln();
    let r = u
        .iter()
        .map(|x| {
            if *x > T::zero() {
                (e * (*x / gamma).ln()).exp()
            } else {
                T::zero()
            }
        })
        .collect();
    (r, lg)
}

/// `sum_i w_i u_i^e` as a [`Scaled`] quantity.
pub fn weighted_power_sum<T: Real>(u: &[T], weights: &[T], e: T) -> Scaled<T> {
    let (r, lg) = scaled_power(u, e);
    let m: T = r.iter().zip(weights).map(|(a, w)| *a * *w).sum();
    Scaled::new(m, e * lg)
}
