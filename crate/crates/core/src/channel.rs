//! Channel estimates, conditional error samples and true channel draws.
//!
//! Entries of the normalized estimate and of every normalized error matrix are
//! i.i.d. CN(0, 1). For a CSIT error variance `σ_e²` the estimate is
//! `Ĥ = √(1 − σ_e²)·Ĥ_n` and the m-th conditional realization is
//! `H⁽ᵐ⁾ = Ĥ + √σ_e²·H̃_n⁽ᵐ⁾`, so every entry of `H⁽ᵐ⁾` keeps unit variance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::{cx, CMatrix, Real};

/// Scenario parameters. Powers are linear, not dB.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub k: usize,
    pub nt: usize,
    pub pt: f64,
    pub sigma_n2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub m: usize,
    pub eps_r: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            k: 2,
            nt: 2,
            pt: 100.0,
            sigma_n2: 1.0,
            alpha: 0.6,
            beta: 1.0,
            m: 100,
            eps_r: 1e-4,
            max_iters: 200,
            seed: 1,
        }
    }
}

impl SystemConfig {
    /// CSIT error variance per entry, `β·Pt^(−α)`.
    pub fn sigma_e2(&self) -> f64 {
        self.beta * self.pt.powf(-self.alpha)
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * (self.pt / self.sigma_n2).log10()
    }

    /// Same scenario at another SNR; `Pt = σ_n²·10^(snr/10)`.
    pub fn at_snr_db(&self, snr_db: f64) -> Self {
        Self {
            pt: self.sigma_n2 * 10f64.powf(snr_db / 10.0),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.nt < self.k {
            return bad(format!("nt ({}) must be >= k ({})", self.nt, self.k));
        }
        if !(self.pt.is_finite() && self.pt > 0.0) {
            return bad(format!("pt must be positive, got {}", self.pt));
        }
        if !(self.sigma_n2.is_finite() && self.sigma_n2 > 0.0) {
            return bad(format!("sigma_n2 must be positive, got {}", self.sigma_n2));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return bad(format!("beta must be non-negative, got {}", self.beta));
        }
        if self.m == 0 {
            return bad("m must be at least 1".into());
        }
        if !(self.eps_r.is_finite() && self.eps_r > 0.0) {
            return bad(format!("eps_r must be positive, got {}", self.eps_r));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        let se2 = self.sigma_e2();
        if !(0.0..1.0).contains(&se2) {
            return bad(format!(
                "sigma_e2 = beta * pt^-alpha = {se2} must lie in [0, 1)"
            ));
        }
        Ok(())
    }
}

/// Channel estimate `Ĥ` (column k is `ĥ_k`) with isotropic error variance.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate<T: Real> {
    pub h_hat: CMatrix<T>,
    pub sigma_e2: T,
}

impl<T: Real> ChannelEstimate<T> {
    /// Builds `Ĥ = √(1 − σ_e²)·Ĥ_n` from a normalized estimate.
    pub fn from_normalized(normalized: &CMatrix<T>, sigma_e2: T) -> Result<Self> {
        check_error_variance(sigma_e2)?;
        let scale = (T::one() - sigma_e2).sqrt();
        Ok(Self {
            h_hat: normalized.map(|z| z * scale),
            sigma_e2,
        })
    }

    /// Perfect-CSIT estimate: the channel itself with zero error variance.
    pub fn exact(h: CMatrix<T>) -> Self {
        Self {
            h_hat: h,
            sigma_e2: T::zero(),
        }
    }

    pub fn nt(&self) -> usize {
        self.h_hat.nrows()
    }

    pub fn k(&self) -> usize {
        self.h_hat.ncols()
    }

    /// Adds `√σ_e²·H̃_n` to the estimate.
    pub fn perturb(&self, normalized_error: &CMatrix<T>) -> CMatrix<T> {
        let s = self.sigma_e2.sqrt();
        self.h_hat.zip_map(normalized_error, |h, e| h + e * s)
    }
}

/// `M` conditional channel realizations for one estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalSample<T: Real> {
    pub realizations: Vec<CMatrix<T>>,
}

impl<T: Real> ConditionalSample<T> {
    /// Mixes a pool of normalized errors into the estimate.
    pub fn from_normalized_errors(est: &ChannelEstimate<T>, errors: &[CMatrix<T>]) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::InvalidConfig("sample size must be at least 1".into()));
        }
        for e in errors {
            if e.shape() != est.h_hat.shape() {
                return Err(Error::Dimension(format!(
                    "error matrix {:?} does not match estimate {:?}",
                    e.shape(),
                    est.h_hat.shape()
                )));
            }
        }
        Ok(Self {
            realizations: errors.iter().map(|e| est.perturb(e)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.realizations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.realizations.is_empty()
    }

    pub fn nt(&self) -> usize {
        self.realizations[0].nrows()
    }

    pub fn k(&self) -> usize {
        self.realizations[0].ncols()
    }
}

fn check_error_variance<T: Real>(sigma_e2: T) -> Result<()> {
    let v = sigma_e2.as_f64();
    if !(0.0..1.0).contains(&v) {
        return Err(Error::InvalidConfig(format!(
            "error variance {v} must lie in [0, 1)"
        )));
    }
    Ok(())
}

/// Draws an `nt × k` matrix of i.i.d. CN(0, 1) entries (real and imaginary
/// parts each N(0, ½)). Samples are drawn in `f64` so that every scalar type
/// sees the same stream.
pub fn standard_complex_gaussian<T: Real, R: Rng + ?Sized>(
    nt: usize,
    k: usize,
    rng: &mut R,
) -> CMatrix<T> {
    let half = std::f64::consts::FRAC_1_SQRT_2;
    // column-major fill order is part of the determinism contract
    CMatrix::from_fn(nt, k, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        cx(T::of(re * half), T::of(im * half))
    })
}

/// Draws a channel estimate and one true channel `H = Ĥ + H̃`.
pub fn generate_scenario<T: Real, R: Rng + ?Sized>(
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<(ChannelEstimate<T>, CMatrix<T>)> {
    cfg.validate()?;
    let normalized = standard_complex_gaussian::<T, _>(cfg.nt, cfg.k, rng);
    let est = ChannelEstimate::from_normalized(&normalized, T::of(cfg.sigma_e2()))?;
    let error = standard_complex_gaussian::<T, _>(cfg.nt, cfg.k, rng);
    let truth = est.perturb(&error);
    Ok((est, truth))
}

/// Draws `m` conditional realizations around `est`.
pub fn sample_conditional<T: Real, R: Rng + ?Sized>(
    est: &ChannelEstimate<T>,
    m: usize,
    rng: &mut R,
) -> Result<ConditionalSample<T>> {
    if m == 0 {
        return Err(Error::InvalidConfig("sample size must be at least 1".into()));
    }
    let errors: Vec<CMatrix<T>> = (0..m)
        .map(|_| standard_complex_gaussian(est.nt(), est.k(), rng))
        .collect();
    ConditionalSample::from_normalized_errors(est, &errors)
}

/// Independent random streams derived from one experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Estimate,
    Truth,
    Errors,
    Validation,
    Restart,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Estimate => 0x45_5354,
            Stream::Truth => 0x54_5255,
            Stream::Errors => 0x45_5252,
            Stream::Validation => 0x56_414c,
            Stream::Restart => 0x52_5354,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic sub-seed for `(seed, stream, index)`.
pub fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ stream.tag()) ^ index)
}

pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(derive_seed(seed, stream, index))
}

/// Normalized draws for a Monte-Carlo campaign. Estimates are indexed by
/// channel; the error pool is shared by every channel and SNR point.
#[derive(Debug, Clone)]
pub struct NormalizedPool<T: Real> {
    pub estimates: Vec<CMatrix<T>>,
    pub truth_errors: Vec<CMatrix<T>>,
    pub errors: Vec<CMatrix<T>>,
}

impl<T: Real> NormalizedPool<T> {
    pub fn generate(seed: u64, nt: usize, k: usize, n_channels: usize, m: usize) -> Self {
        let estimates = (0..n_channels)
            .map(|c| standard_complex_gaussian(nt, k, &mut stream_rng(seed, Stream::Estimate, c as u64)))
            .collect();
        let truth_errors = (0..n_channels)
            .map(|c| standard_complex_gaussian(nt, k, &mut stream_rng(seed, Stream::Truth, c as u64)))
            .collect();
        let mut rng = stream_rng(seed, Stream::Errors, 0);
        let errors = (0..m).map(|_| standard_complex_gaussian(nt, k, &mut rng)).collect();
        Self {
            estimates,
            truth_errors,
            errors,
        }
    }

    /// Estimate, training sample (first `m` pooled errors) and true channel
    /// for channel `index` at error variance `sigma_e2`.
    pub fn scenario(
        &self,
        index: usize,
        sigma_e2: T,
        m: usize,
    ) -> Result<(ChannelEstimate<T>, ConditionalSample<T>, CMatrix<T>)> {
        if m > self.errors.len() {
            return Err(Error::InvalidConfig(format!(
                "requested {m} realizations from a pool of {}",
                self.errors.len()
            )));
        }
        let est = ChannelEstimate::from_normalized(&self.estimates[index], sigma_e2)?;
        let sample = ConditionalSample::from_normalized_errors(&est, &self.errors[..m])?;
        let truth = est.perturb(&self.truth_errors[index]);
        Ok((est, sample, truth))
    }
}
