//! Scalar abstraction shared by every numerical module.
//!
//! The physics, sample-average accumulation and the interior-point solver are
//! written once over [`Real`]; `f64` is the production type and `f32` is
//! supported for the closed-form parts (the solver tolerances adapt to the
//! machine epsilon of the chosen type).

use nalgebra::{DMatrix, DVector, RealField};
use num_complex::Complex;

/// Real floating-point scalar: `f32` or `f64`.
pub trait Real: RealField + Copy + Default + Send + Sync + std::fmt::LowerExp + 'static {
    fn of(value: f64) -> Self;

    fn as_f64(self) -> f64;

    /// Absolute tolerance for closed-form identities (the Rate-WMMSE check).
    fn identity_tol() -> Self {
        Self::of((1e3 * Self::default_epsilon().as_f64()).max(1e-9))
    }

    /// Default stopping tolerance for the interior-point solver on its
    /// normalized problem.
    fn solver_tol() -> Self {
        Self::of((50.0 * Self::default_epsilon().as_f64()).max(1e-11))
    }
}

impl Real for f64 {
    #[inline]
    fn of(value: f64) -> Self {
        value
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

impl Real for f32 {
    #[inline]
    fn of(value: f64) -> Self {
        value as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

pub type Cx<T> = Complex<T>;
pub type CVector<T> = DVector<Complex<T>>;
pub type CMatrix<T> = DMatrix<Complex<T>>;

#[inline]
pub fn cx<T: Real>(re: T, im: T) -> Cx<T> {
    Complex::new(re, im)
}

#[inline]
pub fn czero<T: Real>() -> Cx<T> {
    Complex::new(T::zero(), T::zero())
}

/// `aᴴ b` for two complex vectors given as iterators of equal length.
#[inline]
pub fn inner<'a, T: Real>(
    a: impl IntoIterator<Item = &'a Cx<T>>,
    b: impl IntoIterator<Item = &'a Cx<T>>,
) -> Cx<T> {
    a.into_iter()
        .zip(b)
        .fold(czero(), |acc, (x, y)| acc + x.conj() * y)
}

/// Squared Euclidean norm of a complex slice.
#[inline]
pub fn norm_sqr<'a, T: Real>(a: impl IntoIterator<Item = &'a Cx<T>>) -> T {
    a.into_iter().fold(T::zero(), |acc, x| acc + x.norm_sqr())
}

/// `xᴴ A x` for Hermitian `A` (imaginary round-off dropped).
pub fn hermitian_form<T: Real>(a: &CMatrix<T>, x: &[Cx<T>]) -> T {
    let n = x.len();
    let mut acc = T::zero();
    for j in 0..n {
        let mut col: Cx<T> = czero();
        for i in 0..n {
            col += x[i].conj() * a[(i, j)];
        }
        let term: Cx<T> = col * x[j];
        acc += term.re;
    }
    acc
}

/// Converts a complex matrix between scalar types.
pub fn cast_cmatrix<S: Real, T: Real>(m: &CMatrix<S>) -> CMatrix<T> {
    m.map(|z| cx(T::of(z.re.as_f64()), T::of(z.im.as_f64())))
}

pub fn cast_cvector<S: Real, T: Real>(v: &CVector<S>) -> CVector<T> {
    v.map(|z| cx(T::of(z.re.as_f64()), T::of(z.im.as_f64())))
}
