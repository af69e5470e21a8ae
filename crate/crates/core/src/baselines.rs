//! AO initializations and the closed-form baseline schemes.
//!
//! Every initialization splits the budget as `q_c = Pt − Pt^α` for the
//! common stream and `q_k = Pt^α / K` per private stream. Below unit power
//! (`Pt^α > Pt`) the common share is clamped to zero.

use std::fmt;
use std::str::FromStr;

use crate::channel::{ChannelEstimate, SystemConfig};
use crate::error::{Error, Result};
use crate::precoder::{Mode, Precoder};
use crate::scalar::{cx, czero, norm_sqr, CMatrix, CVector, Cx, Real};

/// Singular-value ratio below which `Ĥ` is treated as rank deficient.
const RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitScheme {
    /// ZF private streams, common stream on `e₁`.
    ZfE,
    /// ZF private streams, common stream on the dominant left singular
    /// vector of `Ĥ`.
    ZfSvd,
    /// Matched-filter private streams, common stream on `e₁`.
    MrcE,
    /// Matched-filter private streams, dominant singular direction.
    MrcSvd,
}

impl InitScheme {
    pub const ALL: [InitScheme; 4] = [InitScheme::ZfE, InitScheme::ZfSvd, InitScheme::MrcE, InitScheme::MrcSvd];

    pub fn label(self) -> &'static str {
        match self {
            InitScheme::ZfE => "ZF-e",
            InitScheme::ZfSvd => "ZF-SVD",
            InitScheme::MrcE => "MRC-e",
            InitScheme::MrcSvd => "MRC-SVD",
        }
    }

    fn zero_forcing(self) -> bool {
        matches!(self, InitScheme::ZfE | InitScheme::ZfSvd)
    }

    fn svd_common(self) -> bool {
        matches!(self, InitScheme::ZfSvd | InitScheme::MrcSvd)
    }
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['_', '-'], "");
        match key.as_str() {
            "zfe" => Ok(InitScheme::ZfE),
            "zfsvd" => Ok(InitScheme::ZfSvd),
            "mrce" => Ok(InitScheme::MrcE),
            "mrcsvd" => Ok(InitScheme::MrcSvd),
            _ => Err(Error::InvalidConfig(format!("unknown initialization '{s}'"))),
        }
    }
}

/// An initial precoder; `fallback` is set when a ZF scheme had to use MRC
/// directions because `Ĥ` is rank deficient.
#[derive(Debug, Clone, PartialEq)]
pub struct Initialization<T: Real> {
    pub precoder: Precoder<T>,
    pub fallback: bool,
}

/// `(q_c, q_k)` of the initial power split.
pub fn power_split(pt: f64, alpha: f64, k: usize) -> (f64, f64) {
    let q_c = (pt - pt.powf(alpha)).max(0.0);
    (q_c, (pt - q_c) / k as f64)
}

pub fn init_precoder<T: Real>(
    est: &ChannelEstimate<T>,
    cfg: &SystemConfig,
    scheme: InitScheme,
) -> Result<Initialization<T>> {
    check_shape(est, cfg)?;
    let k = est.k();
    let (q_c, q_k) = power_split(cfg.pt, cfg.alpha, k);
    let common_dir = if scheme.svd_common() {
        dominant_direction(&est.h_hat)
    } else {
        unit_vector(est.nt(), 0)
    };
    let (dirs, fallback) = if scheme.zero_forcing() {
        match zf_directions(&est.h_hat) {
            Ok(d) => (d, false),
            Err(Error::RankDeficient { .. }) => (mrc_directions(&est.h_hat), true),
            Err(e) => return Err(e),
        }
    } else {
        (mrc_directions(&est.h_hat), false)
    };
    let precoder = assemble(&common_dir, T::of(q_c), &dirs, &vec![T::of(q_k); k], Mode::Rs);
    Ok(Initialization {
        precoder: normalize_total(precoder, T::of(cfg.pt)),
        fallback,
    })
}

/// ZF directions with water-filling over the full budget, treating `Ĥ` as
/// the true channel. Returns the precoder and the sum rate it predicts on
/// `Ĥ`.
pub fn nors_zf_wf<T: Real>(est: &ChannelEstimate<T>, cfg: &SystemConfig) -> Result<(Precoder<T>, T)> {
    check_shape(est, cfg)?;
    let (powers, dirs, rate) = zf_water_filling(est, T::of(cfg.sigma_n2), T::of(cfg.pt))?;
    let p = assemble(&CVector::from_element(est.nt(), czero()), T::zero(), &dirs, &powers, Mode::NoRs);
    Ok((p, rate))
}

/// Common stream on the dominant singular direction with `q_c = Pt − Pt^α`;
/// private ZF streams water-filled over the remaining `Pt^α`.
pub fn rs_zf_svd_baseline<T: Real>(est: &ChannelEstimate<T>, cfg: &SystemConfig) -> Result<Precoder<T>> {
    check_shape(est, cfg)?;
    let (q_c, _) = power_split(cfg.pt, cfg.alpha, est.k());
    let private_budget = T::of(cfg.pt - q_c);
    let (powers, dirs, _) = zf_water_filling(est, T::of(cfg.sigma_n2), private_budget)?;
    let p = assemble(&dominant_direction(&est.h_hat), T::of(q_c), &dirs, &powers, Mode::Rs);
    Ok(normalize_total(p, T::of(cfg.pt)))
}

fn zf_water_filling<T: Real>(
    est: &ChannelEstimate<T>,
    sigma_n2: T,
    budget: T,
) -> Result<(Vec<T>, CMatrix<T>, T)> {
    let dirs = zf_directions(&est.h_hat)?;
    let gains: Vec<T> = (0..est.k())
        .map(|k| est.h_hat.column(k).dotc(&dirs.column(k)).norm_sqr() / sigma_n2)
        .collect();
    let powers = water_filling(&gains, budget);
    let rate = gains
        .iter()
        .zip(&powers)
        .fold(T::zero(), |a, (g, q)| a + (T::one() + *g * *q).log2());
    Ok((powers, dirs, rate))
}

/// Exact water-filling `q_k = (μ − 1/g_k)⁺` with `Σ q_k = budget`.
/// Channels with zero gain get no power.
pub fn water_filling<T: Real>(gains: &[T], budget: T) -> Vec<T> {
    let mut order: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > T::zero()).collect();
    order.sort_by(|&a, &b| gains[b].partial_cmp(&gains[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut out = vec![T::zero(); gains.len()];
    if order.is_empty() || !(budget > T::zero()) {
        return out;
    }
    // largest active set whose water level clears every inverse gain
    let mut level = T::zero();
    let mut inv_sum = T::zero();
    let mut active = 0;
    for (n, &i) in order.iter().enumerate() {
        let inv = T::one() / gains[i];
        let candidate = (budget + inv_sum + inv) / T::of((n + 1) as f64);
        if candidate > inv {
            inv_sum += inv;
            level = candidate;
            active = n + 1;
        } else {
            break;
        }
    }
    for &i in &order[..active] {
        out[i] = (level - T::one() / gains[i]).max(T::zero());
    }
    out
}

/// Unit-norm columns of `Ĥ(ĤᴴĤ)⁻¹`.
pub fn zf_directions<T: Real>(h: &CMatrix<T>) -> Result<CMatrix<T>> {
    let sv = h.clone().svd(false, false).singular_values;
    let max = sv.iter().fold(T::zero(), |a, s| a.max(*s));
    let min = sv.iter().fold(T::max_value().unwrap(), |a, s| a.min(*s));
    if h.ncols() > h.nrows() || !(max > T::zero()) || min / max < T::of(RANK_TOL) {
        let condition = if min > T::zero() { (max / min).as_f64() } else { f64::INFINITY };
        return Err(Error::RankDeficient { condition });
    }
    let gram = h.adjoint() * h;
    let inv = gram.try_inverse().ok_or(Error::RankDeficient {
        condition: f64::INFINITY,
    })?;
    let mut w = h * inv;
    for mut col in w.column_iter_mut() {
        let n = norm_sqr(col.iter()).sqrt();
        col.iter_mut().for_each(|z| *z /= n);
    }
    Ok(w)
}

/// `ĥ_k / ‖ĥ_k‖` (a zero column stays zero).
pub fn mrc_directions<T: Real>(h: &CMatrix<T>) -> CMatrix<T> {
    let mut w = h.clone();
    for mut col in w.column_iter_mut() {
        let n = norm_sqr(col.iter()).sqrt();
        if n > T::zero() {
            col.iter_mut().for_each(|z| *z /= n);
        }
    }
    w
}

/// Dominant left singular vector of `Ĥ` with its largest entry made real
/// and positive (removes the phase ambiguity of the SVD).
pub fn dominant_direction<T: Real>(h: &CMatrix<T>) -> CVector<T> {
    let svd = h.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut best = 0;
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s > svd.singular_values[best] {
            best = i;
        }
    }
    let mut v: CVector<T> = u.column(best).into_owned();
    let mut pivot = 0;
    for i in 0..v.len() {
        if v[i].norm_sqr() > v[pivot].norm_sqr() {
            pivot = i;
        }
    }
    let a = v[pivot];
    let mag = a.norm_sqr().sqrt();
    if mag > T::zero() {
        let phase = a.conj() / mag;
        v.iter_mut().for_each(|z| *z *= phase);
    }
    let n = norm_sqr(v.iter()).sqrt();
    v.map(|z| z / n)
}

fn unit_vector<T: Real>(n: usize, i: usize) -> CVector<T> {
    let mut v = CVector::from_element(n, czero());
    v[i] = cx(T::one(), T::zero());
    v
}

fn assemble<T: Real>(common: &CVector<T>, q_c: T, dirs: &CMatrix<T>, q: &[T], mode: Mode) -> Precoder<T> {
    let sc: Cx<T> = cx(q_c.max(T::zero()).sqrt(), T::zero());
    let mut private = dirs.clone();
    for (k, mut col) in private.column_iter_mut().enumerate() {
        let s = cx(q[k].max(T::zero()).sqrt(), T::zero());
        col.iter_mut().for_each(|z| *z *= s);
    }
    Precoder {
        common: if mode == Mode::Rs { common * sc } else { CVector::from_element(common.len(), czero()) },
        private,
        mode,
    }
}

/// Rescales so that `tr(PPᴴ) = Pt` up to rounding.
fn normalize_total<T: Real>(p: Precoder<T>, pt: T) -> Precoder<T> {
    let power = p.power();
    if power > T::zero() {
        p.scaled((pt / power).sqrt())
    } else {
        p
    }
}

fn check_shape<T: Real>(est: &ChannelEstimate<T>, cfg: &SystemConfig) -> Result<()> {
    if est.k() != cfg.k || est.nt() != cfg.nt {
        return Err(Error::Dimension(format!(
            "estimate is {}×{} but the configuration has nt = {}, k = {}",
            est.nt(),
            est.k(),
            cfg.nt,
            cfg.k
        )));
    }
    if !(cfg.pt > 0.0) {
        return Err(Error::InvalidConfig(format!("pt must be positive, got {}", cfg.pt)));
    }
    Ok(())
}
