use crate::error::{Error, Result};
use crate::scalar::{czero, norm_sqr, CMatrix, CVector, Cx, Real};

/// Transmission strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Rate-splitting: one common stream on top of the `K` private streams.
    Rs,
    /// Conventional private-only precoding (`p_c = 0`).
    NoRs,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Rs => "RS",
            Mode::NoRs => "NoRS",
        }
    }
}

/// Precoding matrix `P = [p_c, p_1, …, p_K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder<T: Real> {
    pub common: CVector<T>,
    pub private: CMatrix<T>,
    pub mode: Mode,
}

impl<T: Real> Precoder<T> {
    pub fn new(common: CVector<T>, private: CMatrix<T>, mode: Mode) -> Result<Self> {
        if common.len() != private.nrows() {
            return Err(Error::Dimension(format!(
                "common precoder has {} entries but private precoders have {} rows",
                common.len(),
                private.nrows()
            )));
        }
        if mode == Mode::NoRs && norm_sqr(common.iter()) > T::zero() {
            return Err(Error::InvalidConfig(
                "NoRS precoder must have a zero common stream".into(),
            ));
        }
        Ok(Self {
            common,
            private,
            mode,
        })
    }

    pub fn zeros(nt: usize, k: usize, mode: Mode) -> Self {
        Self {
            common: CVector::from_element(nt, czero()),
            private: CMatrix::from_element(nt, k, czero()),
            mode,
        }
    }

    pub fn nt(&self) -> usize {
        self.private.nrows()
    }

    pub fn k(&self) -> usize {
        self.private.ncols()
    }

    pub fn common_power(&self) -> T {
        norm_sqr(self.common.iter())
    }

    pub fn private_power(&self, k: usize) -> T {
        norm_sqr(self.private.column(k).iter())
    }

    /// `tr(P Pᴴ)`.
    pub fn power(&self) -> T {
        self.common_power() + norm_sqr(self.private.iter())
    }

    /// Power constraint check at relative tolerance `1e-9`.
    pub fn is_feasible(&self, pt: T) -> bool {
        self.power() <= pt * (T::one() + T::of(1e-9))
    }

    /// Uniformly shrinks the precoder so that `tr(P Pᴴ) ≤ fraction·Pt`.
    pub fn scaled_into_ball(&self, pt: T, fraction: T) -> Self {
        let power = self.power();
        let limit = pt * fraction;
        if power <= limit {
            return self.clone();
        }
        let s = (limit / power).sqrt();
        self.scaled(s)
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            common: self.common.map(|z| z * s),
            private: self.private.map(|z| z * s),
            mode: self.mode,
        }
    }

    /// Drops the common stream and rescales the private streams to use the
    /// whole budget (equal-power MRC-free fallback when they are all zero).
    pub fn to_nors(&self, pt: T) -> Self {
        let mut private = self.private.clone();
        let p = norm_sqr(private.iter());
        if p > T::zero() {
            let s = (pt / p).sqrt();
            private.iter_mut().for_each(|z| *z *= s);
        }
        Self {
            common: CVector::from_element(self.nt(), czero()),
            private,
            mode: Mode::NoRs,
        }
    }

    /// Stream `i` with `0` the common stream and `1..=K` the private ones.
    pub fn stream(&self, i: usize) -> Vec<Cx<T>> {
        if i == 0 {
            self.common.iter().copied().collect()
        } else {
            self.private.column(i - 1).iter().copied().collect()
        }
    }

    pub fn cast<S: Real>(&self) -> Precoder<S> {
        Precoder {
            common: crate::scalar::cast_cvector(&self.common),
            private: crate::scalar::cast_cmatrix(&self.private),
            mode: self.mode,
        }
    }
}
