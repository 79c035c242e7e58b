//! Log-gamma and digamma for positive real arguments.
//!
//! Both functions shift the argument upward with the unit recurrence until it
//! reaches [`ASYMPTOTIC_THRESHOLD`], then evaluate the Stirling / de Moivre
//! asymptotic series. Because `x` and `x + 1` share the same shifted tail for
//! `x < 6`, the recurrences `lnΓ(x+1) - lnΓ(x) = ln x` and `ψ(x+1) - ψ(x) = 1/x`
//! hold to rounding error.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Arguments below this value are shifted upward before the asymptotic series is used.
pub const ASYMPTOTIC_THRESHOLD: f64 = 6.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

fn check_domain<T: Scalar>(x: T, name: &str) -> Result<()> {
    if x.is_nan() || x <= T::zero() {
        return Err(Error::Domain(format!("{name} requires x > 0, got {x}")));
    }
    Ok(())
}

/// Natural log of the gamma function, `x > 0`.
pub fn log_gamma<T: Scalar>(x: T) -> Result<T> {
    check_domain(x, "log_gamma")?;
    if x.is_infinite() {
        return Ok(x);
    }
    let threshold = T::lit(ASYMPTOTIC_THRESHOLD);
    let mut z = x;
    let mut shift = T::one();
    while z < threshold {
        shift *= z;
        z += T::one();
    }
    Ok(stirling_log_gamma(z) - shift.ln())
}

fn stirling_log_gamma<T: Scalar>(z: T) -> T {
    let r = (z * z).recip();
    let series = T::lit(1.0 / 12.0)
        - r * (T::lit(1.0 / 360.0)
            - r * (T::lit(1.0 / 1260.0)
                - r * (T::lit(1.0 / 1680.0)
                    - r * (T::lit(1.0 / 1188.0)
                        - r * (T::lit(691.0 / 360_360.0)
                            - r * (T::lit(1.0 / 156.0) - r * T::lit(3617.0 / 122_400.0)))))));
    (z - T::lit(0.5)) * z.ln() - z + T::lit(HALF_LN_2PI) + series / z
}

/// Digamma function `ψ(x) = d/dx lnΓ(x)`, `x > 0`.
pub fn digamma<T: Scalar>(x: T) -> Result<T> {
    check_domain(x, "digamma")?;
    if x.is_infinite() {
        return Ok(x);
    }
    let threshold = T::lit(ASYMPTOTIC_THRESHOLD);
    let mut z = x;
    let mut acc = T::zero();
    while z < threshold {
        acc -= z.recip();
        z += T::one();
    }
    let r = (z * z).recip();
    let series = r
        * (T::lit(1.0 / 12.0)
            - r * (T::lit(1.0 / 120.0)
                - r * (T::lit(1.0 / 252.0)
                    - r * (T::lit(1.0 / 240.0)
                        - r * (T::lit(1.0 / 132.0) - r * (T::lit(691.0 / 32_760.0) - r * T::lit(1.0 / 12.0)))))));
    Ok(acc + z.ln() - T::lit(0.5) / z - series)
}

/// `ln B(a, b) = lnΓ(a) + lnΓ(b) - lnΓ(a + b)`.
pub fn log_beta_fn<T: Scalar>(a: T, b: T) -> Result<T> {
    Ok(log_gamma(a)? + log_gamma(b)? - log_gamma(a + b)?)
}
