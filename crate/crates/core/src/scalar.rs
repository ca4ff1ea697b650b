//! Scalar abstraction: every numeric routine in this crate is generic over a
//! real floating-point type, with `Complex<T>` entries built on top of it.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};

pub use nalgebra::Complex;

/// Real scalar type (`f32` or `f64`) underlying all operators and distributions.
pub trait Real:
    RealField + FromPrimitive + ToPrimitive + Copy + Default + Serialize + DeserializeOwned
{
    /// Conversion from an `f64` literal (tolerances, constants).
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal not representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex unit `0 + 1i`.
pub fn im<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::one())
}

/// Real scalar promoted to a complex one.
pub fn re<T: Real>(x: T) -> Complex<T> {
    Complex::new(x, T::zero())
}

/// `true` iff the value is neither NaN nor infinite.
pub fn is_finite<T: Real>(x: T) -> bool {
    x.as_f64().is_finite()
}

/// Numeric tolerances shared by all modules.
///
/// The defaults are calibrated for `f64`; callers running in `f32` should
/// widen them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct Tolerances<T> {
    /// Slack allowed below zero for eigenvalues of nominally PSD operators.
    pub tol_psd: T,
    /// Equality tolerance for reconstruction identities (2-norm).
    pub tol_recon: T,
    /// Smallest eigenvalue accepted by positive-definite-only routines.
    pub eps_pd: T,
    /// Relative singular-value cutoff for numerical rank decisions.
    pub rank_tol: T,
    /// Relative cutoff for pseudo-inverses of reduced states.
    pub pinv_tol: T,
    /// Relative objective-decrease threshold declaring a fit converged.
    pub fit_tol: T,
}

impl<T: Real> Default for Tolerances<T> {
    fn default() -> Self {
        Self {
            tol_psd: T::lit(1e-9),
            tol_recon: T::lit(1e-8),
            eps_pd: T::lit(1e-10),
            rank_tol: T::lit(1e-10),
            pinv_tol: T::lit(1e-8),
            fit_tol: T::lit(1e-10),
        }
    }
}
