//! Sample-average machinery: per-realization MMSE equalizers and weights and
//! the sample-average functions (SAFs) that parameterize the precoder update.

use crate::channel::ConditionalSample;
use crate::error::{Error, Result};
use crate::precoder::{Mode, Precoder};
use crate::rate::{
    augmented_wmse, mmse_point_from_projections, mse, projections, sinr_and_rate,
    EqualizerWeightPair, LinkPowers,
};
use crate::scalar::{czero, CMatrix, CVector, Cx, Real};

/// Equalizers and weights for every user (outer) and realization (inner).
#[derive(Debug, Clone, PartialEq)]
pub struct SampledEqualizers<T: Real> {
    pub per_user: Vec<Vec<EqualizerWeightPair<T>>>,
}

impl<T: Real> SampledEqualizers<T> {
    pub fn k(&self) -> usize {
        self.per_user.len()
    }

    pub fn m(&self) -> usize {
        self.per_user.first().map_or(0, Vec::len)
    }
}

/// Sample averages of one user's quadratic-form data.
#[derive(Debug, Clone, PartialEq)]
pub struct UserSafs<T: Real> {
    pub psi_c: CMatrix<T>,
    pub psi: CMatrix<T>,
    pub f_c: CVector<T>,
    pub f: CVector<T>,
    pub t_c: T,
    pub t: T,
    pub u_c: T,
    pub u: T,
    /// mean of `log2 u_c`
    pub ups_c: T,
    /// mean of `log2 u`
    pub ups: T,
}

impl<T: Real> UserSafs<T> {
    pub fn zeros(nt: usize) -> Self {
        Self {
            psi_c: CMatrix::from_element(nt, nt, czero()),
            psi: CMatrix::from_element(nt, nt, czero()),
            f_c: CVector::from_element(nt, czero()),
            f: CVector::from_element(nt, czero()),
            t_c: T::zero(),
            t: T::zero(),
            u_c: T::zero(),
            u: T::zero(),
            ups_c: T::zero(),
            ups: T::zero(),
        }
    }

    pub fn nt(&self) -> usize {
        self.f.len()
    }

    /// Adds one realization's contribution.
    fn push(&mut self, h: &[Cx<T>], pair: &EqualizerWeightPair<T>) {
        let t_c = pair.u_c * pair.g_c.norm_sqr();
        let t = pair.u * pair.g.norm_sqr();
        let n = h.len();
        for j in 0..n {
            for i in 0..n {
                let outer = h[i] * h[j].conj();
                self.psi_c[(i, j)] += outer * t_c;
                self.psi[(i, j)] += outer * t;
            }
            self.f_c[j] += h[j] * pair.g_c.conj() * pair.u_c;
            self.f[j] += h[j] * pair.g.conj() * pair.u;
        }
        self.t_c += t_c;
        self.t += t;
        self.u_c += pair.u_c;
        self.u += pair.u;
        self.ups_c += pair.u_c.log2();
        self.ups += pair.u.log2();
    }

    fn merge(mut self, other: &Self) -> Self {
        self.psi_c += &other.psi_c;
        self.psi += &other.psi;
        self.f_c += &other.f_c;
        self.f += &other.f;
        self.t_c += other.t_c;
        self.t += other.t;
        self.u_c += other.u_c;
        self.u += other.u;
        self.ups_c += other.ups_c;
        self.ups += other.ups;
        self
    }

    fn scale(mut self, s: T) -> Self {
        self.psi_c *= Cx::new(s, T::zero());
        self.psi *= Cx::new(s, T::zero());
        self.f_c *= Cx::new(s, T::zero());
        self.f *= Cx::new(s, T::zero());
        self.t_c *= s;
        self.t *= s;
        self.u_c *= s;
        self.u *= s;
        self.ups_c *= s;
        self.ups *= s;
        self
    }
}

/// Per-user SAFs feeding one precoder update.
#[derive(Debug, Clone, PartialEq)]
pub struct SafBundle<T: Real> {
    pub users: Vec<UserSafs<T>>,
}

impl<T: Real> SafBundle<T> {
    pub fn k(&self) -> usize {
        self.users.len()
    }

    pub fn nt(&self) -> usize {
        self.users.first().map_or(0, UserSafs::nt)
    }
}

/// MMSE equalizers and weights on every realization for the precoder `p`.
pub fn update_equalizers_weights<T: Real>(
    sample: &ConditionalSample<T>,
    p: &Precoder<T>,
    sigma_n2: T,
) -> Result<SampledEqualizers<T>> {
    check_dims(sample, p)?;
    let k_users = p.k();
    let mut per_user = vec![Vec::with_capacity(sample.len()); k_users];
    for h in &sample.realizations {
        for (k, slot) in per_user.iter_mut().enumerate() {
            let (c, priv_) = projections(h.column(k), p)?;
            slot.push(mmse_point_from_projections(c, &priv_, k, sigma_n2).pair);
        }
    }
    Ok(SampledEqualizers { per_user })
}

const LEAF: usize = 32;

/// Means over the sample of `t = u|g|²`, `Ψ = t·h hᴴ`, `f = u·h·g*`,
/// `υ = log2 u` and `u`. The sum is a pairwise tree over the realization
/// index so the result does not depend on how work is scheduled.
pub fn accumulate_safs<T: Real>(
    sample: &ConditionalSample<T>,
    eq: &SampledEqualizers<T>,
) -> Result<SafBundle<T>> {
    if eq.k() != sample.k() || eq.m() != sample.len() {
        return Err(Error::Dimension(format!(
            "equalizers are {}x{} but sample is {}x{}",
            eq.k(),
            eq.m(),
            sample.k(),
            sample.len()
        )));
    }
    let nt = sample.nt();
    let inv_m = T::one() / T::of(sample.len() as f64);
    let users = (0..sample.k())
        .map(|k| {
            let columns: Vec<Vec<Cx<T>>> = sample
                .realizations
                .iter()
                .map(|h| h.column(k).iter().copied().collect())
                .collect();
            tree_sum(&columns, &eq.per_user[k], nt).scale(inv_m)
        })
        .collect();
    Ok(SafBundle { users })
}

fn tree_sum<T: Real>(h: &[Vec<Cx<T>>], pairs: &[EqualizerWeightPair<T>], nt: usize) -> UserSafs<T> {
    if h.len() <= LEAF {
        let mut acc = UserSafs::zeros(nt);
        for (hm, pair) in h.iter().zip(pairs) {
            acc.push(hm, pair);
        }
        return acc;
    }
    let mid = h.len() / 2;
    let left = tree_sum(&h[..mid], &pairs[..mid], nt);
    let right = tree_sum(&h[mid..], &pairs[mid..], nt);
    left.merge(&right)
}

/// Sample-average rates of every user together with their standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledRates<T: Real> {
    pub common: Vec<T>,
    pub private: Vec<T>,
    pub common_stderr: Vec<T>,
    pub private_stderr: Vec<T>,
}

impl<T: Real> SampledRates<T> {
    /// `min_j R̄_c,j`
    pub fn common_rate(&self) -> T {
        self.common
            .iter()
            .copied()
            .fold(T::max_value().unwrap(), |a, b| a.min(b))
    }

    pub fn private_sum(&self) -> T {
        self.private.iter().fold(T::zero(), |a, &b| a + b)
    }

    /// Equivalent sampled ASR `min_j R̄_c,j + Σ_k R̄_k` (RS) or `Σ_k R̄_k`.
    pub fn asr(&self, mode: Mode) -> T {
        match mode {
            Mode::Rs => self.common_rate() + self.private_sum(),
            Mode::NoRs => self.private_sum(),
        }
    }
}

/// Sample-average common and private rates of the precoder `p`.
pub fn sampled_rates<T: Real>(
    sample: &ConditionalSample<T>,
    p: &Precoder<T>,
    sigma_n2: T,
) -> Result<SampledRates<T>> {
    check_dims(sample, p)?;
    let k_users = p.k();
    let m = T::of(sample.len() as f64);
    let mut sum_c = vec![T::zero(); k_users];
    let mut sum_p = vec![T::zero(); k_users];
    let mut sq_c = vec![T::zero(); k_users];
    let mut sq_p = vec![T::zero(); k_users];
    for h in &sample.realizations {
        for k in 0..k_users {
            let (c, priv_) = projections(h.column(k), p)?;
            let r = sinr_and_rate(&LinkPowers::from_projections(c, &priv_, k, sigma_n2));
            sum_c[k] += r.r_c;
            sum_p[k] += r.r;
            sq_c[k] += r.r_c * r.r_c;
            sq_p[k] += r.r * r.r;
        }
    }
    let stderr = |sum: T, sq: T| {
        if sample.len() < 2 {
            return T::zero();
        }
        let mean = sum / m;
        let var = ((sq - m * mean * mean) / (m - T::one())).max(T::zero());
        (var / m).sqrt()
    };
    Ok(SampledRates {
        common: sum_c.iter().map(|&s| s / m).collect(),
        private: sum_p.iter().map(|&s| s / m).collect(),
        common_stderr: (0..k_users).map(|k| stderr(sum_c[k], sq_c[k])).collect(),
        private_stderr: (0..k_users).map(|k| stderr(sum_p[k], sq_p[k])).collect(),
    })
}

/// Sample-average augmented WMSEs `(ξ̄_c,k, ξ̄_k)` of the precoder `p` with
/// the equalizers and weights held fixed, evaluated realization by
/// realization.
pub fn sampled_awmse<T: Real>(
    sample: &ConditionalSample<T>,
    eq: &SampledEqualizers<T>,
    p: &Precoder<T>,
    sigma_n2: T,
) -> Result<(Vec<T>, Vec<T>)> {
    check_dims(sample, p)?;
    let m = T::of(sample.len() as f64);
    let mut xi_c = vec![T::zero(); p.k()];
    let mut xi = vec![T::zero(); p.k()];
    for (idx, h) in sample.realizations.iter().enumerate() {
        for k in 0..p.k() {
            let (c, priv_) = projections(h.column(k), p)?;
            let lp = LinkPowers::from_projections(c, &priv_, k, sigma_n2);
            let pair = &eq.per_user[k][idx];
            xi_c[k] += augmented_wmse(pair.u_c, mse(pair.g_c, lp.t_c, c));
            xi[k] += augmented_wmse(pair.u, mse(pair.g, lp.t, priv_[k]));
        }
    }
    Ok((
        xi_c.into_iter().map(|v| v / m).collect(),
        xi.into_iter().map(|v| v / m).collect(),
    ))
}

fn check_dims<T: Real>(sample: &ConditionalSample<T>, p: &Precoder<T>) -> Result<()> {
    if sample.is_empty() {
        return Err(Error::InvalidConfig("empty conditional sample".into()));
    }
    if sample.nt() != p.nt() || sample.k() != p.k() {
        return Err(Error::Dimension(format!(
            "sample is {}x{} but precoder is {}x{}",
            sample.nt(),
            sample.k(),
            p.nt(),
            p.k()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_conditional, standard_complex_gaussian, stream_rng, ChannelEstimate, Stream};
    use crate::rate::mmse_equalizers;
    use crate::scalar::cx;

    fn setup(seed: u64, m: usize) -> (ConditionalSample<f64>, Precoder<f64>) {
        let mut rng = stream_rng(seed, Stream::Estimate, 0);
        let est = ChannelEstimate::from_normalized(&standard_complex_gaussian(3, 2, &mut rng), 0.2).unwrap();
        let sample = sample_conditional(&est, m, &mut rng).unwrap();
        let pc: CMatrix<f64> = standard_complex_gaussian(3, 1, &mut rng);
        let p = Precoder::new(
            pc.column(0).into_owned() * cx(2.0, 0.0),
            standard_complex_gaussian(3, 2, &mut rng) * cx(1.5, 0.0),
            Mode::Rs,
        )
        .unwrap();
        (sample, p)
    }

    #[test]
    fn zero_precoder_gives_trivial_safs() {
        let (sample, p) = setup(1, 9);
        let zero = Precoder::zeros(3, 2, Mode::Rs);
        let eq = update_equalizers_weights(&sample, &zero, 1.0).unwrap();
        assert!(eq.per_user.iter().flatten().all(|q| q.g == czero() && q.g_c == czero() && q.u == 1.0 && q.u_c == 1.0));
        let safs = accumulate_safs(&sample, &eq).unwrap();
        for u in &safs.users {
            assert_eq!((u.t, u.t_c, u.ups, u.ups_c, u.u, u.u_c), (0.0, 0.0, 0.0, 0.0, 1.0, 1.0));
            assert!(u.psi.iter().chain(u.f.iter()).all(|z| *z == czero()));
        }
        let _ = p;
    }

    #[test]
    fn single_realization_reduces_to_closed_form() {
        let (sample, p) = setup(2, 1);
        let eq = update_equalizers_weights(&sample, &p, 1.0).unwrap();
        for k in 0..2 {
            let (gc, g) = mmse_equalizers(sample.realizations[0].column(k), &p, k, 1.0).unwrap();
            assert_eq!(eq.per_user[k][0].g_c, gc);
            assert_eq!(eq.per_user[k][0].g, g);
        }
        let safs = accumulate_safs(&sample, &eq).unwrap();
        let h = sample.realizations[0].column(1);
        let pair = eq.per_user[1][0];
        let t = pair.u * pair.g.norm_sqr();
        assert!((safs.users[1].t - t).abs() < 1e-14);
        assert!((safs.users[1].psi[(0, 1)] - h[0] * h[1].conj() * t).norm() < 1e-13);
        assert!((safs.users[1].ups - pair.u.log2()).abs() < 1e-14);
    }

    #[test]
    fn identity_holds_on_each_realization() {
        let (sample, p) = setup(3, 40);
        let eq = update_equalizers_weights(&sample, &p, 1.0).unwrap();
        let (xi_c, xi) = sampled_awmse(&sample, &eq, &p, 1.0).unwrap();
        let rates = sampled_rates(&sample, &p, 1.0).unwrap();
        for k in 0..2 {
            assert!((xi_c[k] - (1.0 - rates.common[k])).abs() < 1e-9);
            assert!((xi[k] - (1.0 - rates.private[k])).abs() < 1e-9);
        }
    }

    #[test]
    fn hand_computed_two_realization_means() {
        // h⁽¹⁾ = e1, h⁽²⁾ = e2 for the single user, scalars set by hand
        let e = |i: usize| CMatrix::from_fn(2, 1, |r, _| if r == i { cx(1.0, 0.0) } else { czero() });
        let sample = ConditionalSample {
            realizations: vec![e(0), e(1)],
        };
        let eq = SampledEqualizers {
            per_user: vec![vec![
                EqualizerWeightPair::<f64> { g_c: cx(0.0, 1.0), g: cx(0.5, 0.0), u_c: 2.0, u: 4.0 },
                EqualizerWeightPair { g_c: cx(1.0, 0.0), g: cx(0.0, 0.5), u_c: 8.0, u: 2.0 },
            ]],
        };
        let s = accumulate_safs(&sample, &eq).unwrap();
        let u = &s.users[0];
        // t_c: (2·1 + 8·1)/2 = 5; t: (4·¼ + 2·¼)/2 = 0.75
        assert!((u.t_c - 5.0).abs() < 1e-15);
        assert!((u.t - 0.75).abs() < 1e-15);
        assert!((u.psi_c[(0, 0)] - cx(1.0, 0.0)).norm() < 1e-15);
        assert!((u.psi_c[(1, 1)] - cx(4.0, 0.0)).norm() < 1e-15);
        assert!((u.psi[(0, 0)] - cx(0.5, 0.0)).norm() < 1e-15);
        assert!((u.psi[(1, 1)] - cx(0.25, 0.0)).norm() < 1e-15);
        assert_eq!(u.psi[(0, 1)], czero());
        // f_c = mean(u_c h conj(g_c)) = ((2·(−i)), 8)/2
        assert!((u.f_c[0] - cx(0.0, -1.0)).norm() < 1e-15);
        assert!((u.f_c[1] - cx(4.0, 0.0)).norm() < 1e-15);
        assert!((u.f[0] - cx(1.0, 0.0)).norm() < 1e-15);
        assert!((u.f[1] - cx(0.0, -0.5)).norm() < 1e-15);
        assert!((u.u_c - 5.0).abs() < 1e-15 && (u.u - 3.0).abs() < 1e-15);
        assert!((u.ups_c - 2.0).abs() < 1e-15 && (u.ups - 1.5).abs() < 1e-15);
    }

    #[test]
    fn psi_is_hermitian_psd() {
        for seed in 0..10 {
            let (sample, p) = setup(seed, 25);
            let eq = update_equalizers_weights(&sample, &p, 1.0).unwrap();
            let safs = accumulate_safs(&sample, &eq).unwrap();
            for u in &safs.users {
                for psi in [&u.psi, &u.psi_c] {
                    assert!((psi - psi.adjoint()).norm() < 1e-12);
                    let eig = psi.clone().symmetric_eigenvalues();
                    assert!(eig.iter().all(|&l| l >= -1e-12), "{eig}");
                }
            }
        }
    }

    #[test]
    fn tree_sum_is_order_stable() {
        let (sample, p) = setup(4, 200);
        let eq = update_equalizers_weights(&sample, &p, 1.0).unwrap();
        let a = accumulate_safs(&sample, &eq).unwrap();
        let b = accumulate_safs(&sample, &eq).unwrap();
        assert_eq!(a, b);
    }
}
