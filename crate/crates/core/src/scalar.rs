//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};

use num_complex::Complex;
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real floating-point scalar the solvers are generic over (`f32` or `f64`).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn two() -> Self {
        Self::one() + Self::one()
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Complex number over a [`Scalar`].
pub type Cx<T> = Complex<T>;

/// Powers of the phase-rotation constant `ω = e^{-i2π/3}`, indexed by the
/// phase difference modulo 3. `ω³ = 1` holds exactly because the table only
/// ever contains these three constants.
#[inline]
pub fn omega_pow<T: Scalar>(diff: i32) -> Cx<T> {
    let half = T::of(0.5);
    let s = T::of(3f64.sqrt() * 0.5);
    match diff.rem_euclid(3) {
        0 => Cx::new(T::one(), T::zero()),
        1 => Cx::new(-half, -s),
        _ => Cx::new(-half, s),
    }
}

/// Euclidean norm of a slice.
pub fn norm2<T: Scalar>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
}

/// Maximum absolute entry of a slice (zero for an empty slice).
pub fn norm_inf<T: Scalar>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()))
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn omega_cubes_to_one() {
        let w: Cx<f64> = omega_pow(1);
        let w3 = w * w * w;
        assert!((w3.re - 1.0).abs() < 1e-15 && w3.im.abs() < 1e-15);
        let expected = Cx::from_polar(1.0, -2.0 * std::f64::consts::PI / 3.0);
        assert!((w - expected).norm() < 1e-15);
        assert_eq!(omega_pow::<f64>(-1), omega_pow::<f64>(2));
        assert_eq!(omega_pow::<f64>(3), Cx::new(1.0, 0.0));
    }
}
