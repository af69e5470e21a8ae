//! Per-realization receive powers, SINRs, rates, MMSE equalizers and weights.
//!
//! All rates are in bits per channel use (base-2 logarithms). The augmented
//! weighted MSE used throughout the crate is
//!
//! ```text
//! ξ(u, g) = 1 + (u·ε(g) − 1 − ln u) / ln 2
//! ```
//!
//! which is jointly minimized at `g = g_MMSE`, `u = 1/ε_MMSE` with minimum
//! value `1 + log2 ε_MMSE = 1 − R`. For a fixed `(u, g)` it upper-bounds
//! `1 − R(P)` as a function of the precoder, with equality at the point the
//! equalizer and weight were computed from.

use nalgebra::DVectorView;

use crate::error::{Error, Result};
use crate::precoder::Precoder;
use crate::scalar::{czero, CMatrix, Cx, Real};

/// Receive power decomposition at one user for one channel state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkPowers<T: Real> {
    /// `|hᴴ p_c|²`
    pub s_c: T,
    /// `|hᴴ p_k|²`
    pub s: T,
    /// `Σ_{i≠k} |hᴴ p_i|² + σ_n²`
    pub i: T,
    /// Interference-plus-noise of the common stream, equal to `t`.
    pub i_c: T,
    /// `s + i`
    pub t: T,
    /// `s_c + t`
    pub t_c: T,
}

impl<T: Real> LinkPowers<T> {
    /// From the projections `hᴴ p_c` and `hᴴ p_i` (all `i`).
    pub fn from_projections(common: Cx<T>, private: &[Cx<T>], k: usize, sigma_n2: T) -> Self {
        let s_c = common.norm_sqr();
        let s = private[k].norm_sqr();
        let interference = private
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != k)
            .fold(T::zero(), |acc, (_, z)| acc + z.norm_sqr());
        let i = interference + sigma_n2;
        let t = s + i;
        Self {
            s_c,
            s,
            i,
            i_c: t,
            t,
            t_c: s_c + t,
        }
    }
}

/// SINRs and rates of the common and private streams at one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamRates<T: Real> {
    pub gamma_c: T,
    pub gamma: T,
    pub r_c: T,
    pub r: T,
}

/// Equalizers and weights of one user for one channel state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EqualizerWeightPair<T: Real> {
    pub g_c: Cx<T>,
    pub g: Cx<T>,
    pub u_c: T,
    pub u: T,
}

/// Everything the MMSE step produces for one user and one realization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmsePoint<T: Real> {
    pub pair: EqualizerWeightPair<T>,
    pub eps_c: T,
    pub eps: T,
    pub powers: LinkPowers<T>,
}

/// Projections `hᴴ p_c` and `hᴴ p_i` for every private stream.
pub fn projections<T: Real>(h: DVectorView<'_, Cx<T>>, p: &Precoder<T>) -> Result<(Cx<T>, Vec<Cx<T>>)> {
    if h.len() != p.nt() {
        return Err(Error::Dimension(format!(
            "channel has {} antennas, precoder has {}",
            h.len(),
            p.nt()
        )));
    }
    let common = h.dotc(&p.common);
    let private = (0..p.k()).map(|i| h.dotc(&p.private.column(i))).collect();
    Ok((common, private))
}

pub fn link_powers<T: Real>(
    h: DVectorView<'_, Cx<T>>,
    p: &Precoder<T>,
    k: usize,
    sigma_n2: T,
) -> Result<LinkPowers<T>> {
    check_user(p, k)?;
    let (c, priv_) = projections(h, p)?;
    Ok(LinkPowers::from_projections(c, &priv_, k, sigma_n2))
}

pub fn sinr_and_rate<T: Real>(lp: &LinkPowers<T>) -> StreamRates<T> {
    let gamma_c = lp.s_c / lp.i_c;
    let gamma = lp.s / lp.i;
    StreamRates {
        gamma_c,
        gamma,
        r_c: (T::one() + gamma_c).log2(),
        r: (T::one() + gamma).log2(),
    }
}

/// MMSE equalizers `g_c = p_cᴴh / T_c`, `g = p_kᴴh / T`.
pub fn mmse_equalizers<T: Real>(
    h: DVectorView<'_, Cx<T>>,
    p: &Precoder<T>,
    k: usize,
    sigma_n2: T,
) -> Result<(Cx<T>, Cx<T>)> {
    check_user(p, k)?;
    let (c, priv_) = projections(h, p)?;
    let lp = LinkPowers::from_projections(c, &priv_, k, sigma_n2);
    Ok((c.conj() / lp.t_c, priv_[k].conj() / lp.t))
}

/// MSE `|g|²T − 2Re{g·hᴴp} + 1` of a scalar equalizer.
#[inline]
pub fn mse<T: Real>(g: Cx<T>, total_power: T, projection: Cx<T>) -> T {
    let two = T::one() + T::one();
    g.norm_sqr() * total_power - two * (g * projection).re + T::one()
}

/// Augmented weighted MSE `1 + (u·ε − 1 − ln u)/ln 2`.
#[inline]
pub fn augmented_wmse<T: Real>(u: T, eps: T) -> T {
    T::one() + (u * eps - T::one() - u.ln()) / T::ln_2()
}

/// MMSE equalizers, weights and MMSEs from the projections of one user.
pub fn mmse_point_from_projections<T: Real>(
    common: Cx<T>,
    private: &[Cx<T>],
    k: usize,
    sigma_n2: T,
) -> MmsePoint<T> {
    let powers = LinkPowers::from_projections(common, private, k, sigma_n2);
    let eps_c = powers.i_c / powers.t_c;
    let eps = powers.i / powers.t;
    MmsePoint {
        pair: EqualizerWeightPair {
            g_c: common.conj() / powers.t_c,
            g: private[k].conj() / powers.t,
            u_c: T::one() / eps_c,
            u: T::one() / eps,
        },
        eps_c,
        eps,
        powers,
    }
}

pub fn mmse_point<T: Real>(
    h: DVectorView<'_, Cx<T>>,
    p: &Precoder<T>,
    k: usize,
    sigma_n2: T,
) -> Result<MmsePoint<T>> {
    check_user(p, k)?;
    let (c, priv_) = projections(h, p)?;
    Ok(mmse_point_from_projections(c, &priv_, k, sigma_n2))
}

/// Minimum augmented WMSEs `(ξ_c, ξ)` of one user via the closed forms,
/// checked against `1 − R_c` and `1 − R`.
pub fn rate_wmmse_identity_check<T: Real>(
    h: DVectorView<'_, Cx<T>>,
    p: &Precoder<T>,
    k: usize,
    sigma_n2: T,
) -> Result<(T, T)> {
    check_user(p, k)?;
    let (c, priv_) = projections(h, p)?;
    let point = mmse_point_from_projections(c, &priv_, k, sigma_n2);
    let rates = sinr_and_rate(&point.powers);
    let eps_c = mse(point.pair.g_c, point.powers.t_c, c);
    let eps = mse(point.pair.g, point.powers.t, priv_[k]);
    let xi_c = augmented_wmse(point.pair.u_c, eps_c);
    let xi = augmented_wmse(point.pair.u, eps);
    let tol = T::identity_tol();
    let dev_c = (xi_c - (T::one() - rates.r_c)).abs();
    if !(dev_c <= tol) {
        return Err(Error::IdentityViolation {
            stream: "common",
            deviation: dev_c.as_f64(),
        });
    }
    let dev = (xi - (T::one() - rates.r)).abs();
    if !(dev <= tol) {
        return Err(Error::IdentityViolation {
            stream: "private",
            deviation: dev.as_f64(),
        });
    }
    Ok((xi_c, xi))
}

/// Rates of every user on one channel matrix (column `k` is `h_k`).
pub fn user_rates<T: Real>(h: &CMatrix<T>, p: &Precoder<T>, sigma_n2: T) -> Result<Vec<StreamRates<T>>> {
    if h.ncols() != p.k() {
        return Err(Error::Dimension(format!(
            "channel has {} users, precoder has {}",
            h.ncols(),
            p.k()
        )));
    }
    (0..p.k())
        .map(|k| {
            let (c, priv_) = projections(h.column(k), p)?;
            Ok(sinr_and_rate(&LinkPowers::from_projections(c, &priv_, k, sigma_n2)))
        })
        .collect()
}

/// Sum rate of one channel state with the common rate limited by the
/// weakest user: `min_j R_c,j + Σ_k R_k`.
pub fn instantaneous_sum_rate<T: Real>(h: &CMatrix<T>, p: &Precoder<T>, sigma_n2: T) -> Result<T> {
    let rates = user_rates(h, p, sigma_n2)?;
    let private = rates.iter().fold(T::zero(), |a, r| a + r.r);
    let common = if p.common.iter().all(|z| *z == czero()) {
        T::zero()
    } else {
        rates.iter().map(|r| r.r_c).fold(T::max_value().unwrap(), |a, b| a.min(b))
    };
    Ok(common + private)
}

fn check_user<T: Real>(p: &Precoder<T>, k: usize) -> Result<()> {
    if k >= p.k() {
        return Err(Error::Dimension(format!("user {k} out of range for K = {}", p.k())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{standard_complex_gaussian, stream_rng, Stream};
    use crate::precoder::Mode;
    use crate::scalar::{cx, CVector};
    use rand::Rng;

    fn e1(n: usize) -> CVector<f64> {
        CVector::from_fn(n, |i, _| if i == 0 { cx(1.0, 0.0) } else { czero() })
    }

    fn random_instance(seed: u64, nt: usize, k: usize) -> (CMatrix<f64>, Precoder<f64>) {
        let mut rng = stream_rng(seed, Stream::Restart, 0);
        let h = standard_complex_gaussian(nt, k, &mut rng);
        let pc: CMatrix<f64> = standard_complex_gaussian(nt, 1, &mut rng);
        let pp = standard_complex_gaussian(nt, k, &mut rng);
        let scale: f64 = rng.random_range(0.1..30.0);
        let p = Precoder::new(pc.column(0).into_owned(), pp, Mode::Rs).unwrap();
        (h, p.scaled(scale.sqrt()))
    }

    #[test]
    fn zero_precoder_powers() {
        let p = Precoder::<f64>::zeros(3, 2, Mode::Rs);
        let h = e1(3);
        let lp = link_powers(h.column(0), &p, 1, 0.5).unwrap();
        assert_eq!((lp.s_c, lp.s), (0.0, 0.0));
        assert_eq!((lp.i, lp.t, lp.t_c), (0.5, 0.5, 0.5));
        let (gc, g) = mmse_equalizers(h.column(0), &p, 1, 0.5).unwrap();
        assert_eq!((gc, g), (czero(), czero()));
        let (xi_c, xi) = rate_wmmse_identity_check(h.column(0), &p, 1, 0.5).unwrap();
        assert!((xi_c - 1.0).abs() < 1e-15 && (xi - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_user_aligned() {
        let pt: f64 = 7.0;
        let mut p = Precoder::<f64>::zeros(2, 1, Mode::NoRs);
        p.private[(0, 0)] = cx(pt.sqrt(), 0.0);
        let lp = link_powers(e1(2).column(0), &p, 0, 0.25).unwrap();
        assert!((lp.s - pt).abs() < 1e-12);
        assert_eq!(lp.i, 0.25);
    }

    #[test]
    fn rate_values() {
        let mk = |s: f64, i: f64| LinkPowers::from_projections(czero(), &[cx(s.sqrt(), 0.0)], 0, i);
        assert!((sinr_and_rate(&mk(1.0, 1.0)).r - 1.0).abs() < 1e-15);
        assert!((sinr_and_rate(&mk(3.0, 1.0)).r - 2.0).abs() < 1e-15);
        assert!((sinr_and_rate(&mk(100.0, 1.0)).r - 101f64.log2()).abs() < 1e-13);
    }

    #[test]
    fn worked_mmse_instance() {
        let mut p = Precoder::<f64>::zeros(2, 1, Mode::NoRs);
        p.private[(0, 0)] = cx(1.0, 0.0);
        let h = e1(2);
        let point = mmse_point(h.column(0), &p, 0, 1.0).unwrap();
        assert_eq!(point.powers.t, 2.0);
        assert!((point.pair.g - cx(0.5, 0.0)).norm() < 1e-15);
        assert!((point.eps - 0.5).abs() < 1e-15);
        let (_, xi) = rate_wmmse_identity_check(h.column(0), &p, 0, 1.0).unwrap();
        assert!(xi.abs() < 1e-15);
    }

    #[test]
    fn receive_power_by_direct_expansion() {
        for seed in 0..20 {
            let (h, p) = random_instance(seed, 3, 2);
            for k in 0..2 {
                let lp = link_powers(h.column(k), &p, k, 0.7).unwrap();
                // E|y|² = Σ over streams |Σ_n conj(h_n) p_n|² + σ²
                let mut direct = 0.7;
                for s in 0..=2 {
                    let col = p.stream(s);
                    let mut acc = czero::<f64>();
                    for n in 0..3 {
                        acc += h[(n, k)].conj() * col[n];
                    }
                    direct += acc.norm_sqr();
                }
                assert!((lp.t_c - direct).abs() <= 1e-12 * direct);
                assert!((lp.t - (lp.s + lp.i)).abs() == 0.0);
                assert!(lp.i_c == lp.t);
            }
        }
    }

    #[test]
    fn mmse_minimizes_mse_by_scan() {
        // 1-D golden-section scans over the real and imaginary parts
        let (h, p) = random_instance(42, 3, 2);
        let k = 1;
        let (_, priv_) = projections(h.column(k), &p).unwrap();
        let lp = link_powers(h.column(k), &p, k, 1.0).unwrap();
        let f = |re: f64, im: f64| mse(cx(re, im), lp.t, priv_[k]);
        let golden = |g: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64| {
            let r = (5f64.sqrt() - 1.0) / 2.0;
            for _ in 0..200 {
                let c = b - r * (b - a);
                let d = a + r * (b - a);
                if g(c) < g(d) {
                    b = d;
                } else {
                    a = c;
                }
            }
            0.5 * (a + b)
        };
        let mut re = 0.0;
        let mut im = 0.0;
        for _ in 0..20 {
            re = golden(&|x| f(x, im), -10.0, 10.0);
            im = golden(&|y| f(re, y), -10.0, 10.0);
        }
        let (_, g) = mmse_equalizers(h.column(k), &p, k, 1.0).unwrap();
        let best = mse(g, lp.t, priv_[k]);
        assert!((f(re, im) - best).abs() < 1e-8);
        assert!(best <= f(re, im) + 1e-14);
        assert!((best - lp.i / lp.t).abs() < 1e-12);
    }

    #[test]
    fn identity_sweep() {
        let mut worst: f64 = 0.0;
        for seed in 0..100 {
            let (h, p) = random_instance(seed, 4, 3);
            for k in 0..3 {
                let (xi_c, xi) = rate_wmmse_identity_check(h.column(k), &p, k, 1.0).unwrap();
                let r = sinr_and_rate(&link_powers(h.column(k), &p, k, 1.0).unwrap());
                worst = worst.max((xi_c - (1.0 - r.r_c)).abs()).max((xi - (1.0 - r.r)).abs());
            }
        }
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn closed_forms_are_a_local_minimum() {
        let (h, p) = random_instance(7, 3, 2);
        let k = 0;
        let (c, priv_) = projections(h.column(k), &p).unwrap();
        let point = mmse_point_from_projections(c, &priv_, k, 1.0);
        let xi = |u: f64, g: Cx<f64>| augmented_wmse(u, mse(g, point.powers.t, priv_[k]));
        let base = xi(point.pair.u, point.pair.g);
        for delta in [1e-3, 1e-2, 1e-1] {
            for (du, dg) in [
                (delta, czero()),
                (-delta, czero()),
                (0.0, cx(delta, 0.0)),
                (0.0, cx(0.0, -delta)),
                (delta, cx(-delta, delta)),
            ] {
                assert!(xi(point.pair.u * (1.0 + du), point.pair.g + dg) >= base - 1e-14);
            }
        }
    }

    #[test]
    fn scale_invariance() {
        let (h, p) = random_instance(3, 3, 2);
        let a = user_rates(&h, &p, 1.0).unwrap();
        let b = user_rates(&h, &p.scaled(10f64.sqrt()), 10.0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.r - y.r).abs() < 1e-12 && (x.r_c - y.r_c).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let p = Precoder::<f64>::zeros(3, 2, Mode::Rs);
        let h = e1(2);
        assert!(matches!(link_powers(h.column(0), &p, 0, 1.0), Err(Error::Dimension(_))));
        assert!(matches!(link_powers(e1(3).column(0), &p, 2, 1.0), Err(Error::Dimension(_))));
    }

    #[test]
    fn works_in_single_precision() {
        let (h, p) = random_instance(5, 3, 2);
        let h32 = crate::scalar::cast_cmatrix::<f64, f32>(&h);
        let p32 = p.cast::<f32>();
        for k in 0..2 {
            rate_wmmse_identity_check(h32.column(k), &p32, k, 1.0f32).unwrap();
        }
    }
}
