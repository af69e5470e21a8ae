//! Monte-Carlo evaluation: ESR sweeps, DoF slopes, sample-size sensitivity
//! and the two-user rate region.
//!
//! Normalized estimates and the normalized error pool are drawn once per
//! campaign and reused at every SNR point, so curves differ only through the
//! SNR-dependent scaling. Work is spread over a thread pool; every job is a
//! pure function of its index and results are reduced in index order, which
//! keeps outputs independent of the number of threads.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::baselines::{init_precoder, nors_zf_wf, rs_zf_svd_baseline, InitScheme};
use crate::channel::{
    stream_rng, standard_complex_gaussian, ChannelEstimate, ConditionalSample, NormalizedPool, Stream, SystemConfig,
};
use crate::error::{Error, Result};
use crate::optimizer::{
    ao_solve_sample, best_of, conservative_solve, weighted_solve_sample, AoStatus, AsrResult,
};
use crate::precoder::{Mode, Precoder};
use crate::report::fmt_sig;
use crate::saa::sampled_rates;
use crate::scalar::CMatrix;

/// Schemes compared in the ESR sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    RsOpt,
    NoRsOpt,
    NoRsZf,
    RsZfSvd,
    ConservativeRs,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::RsOpt,
        Scheme::NoRsOpt,
        Scheme::NoRsZf,
        Scheme::RsZfSvd,
        Scheme::ConservativeRs,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::RsOpt => "RS-Opt",
            Scheme::NoRsOpt => "NoRS-Opt",
            Scheme::NoRsZf => "NoRS-ZF",
            Scheme::RsZfSvd => "RS-ZF-SVD",
            Scheme::ConservativeRs => "Conservative-RS",
        }
    }

    pub fn mode(self) -> Mode {
        match self {
            Scheme::NoRsOpt | Scheme::NoRsZf => Mode::NoRs,
            _ => Mode::Rs,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['_', '-'], "");
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.label().to_ascii_lowercase().replace('-', "") == key)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scheme '{s}'")))
    }
}

/// Campaign settings on top of the per-scenario [`SystemConfig`] (whose
/// `pt` is replaced by each SNR point).
#[derive(Debug, Clone, PartialEq)]
pub struct HarnessConfig {
    pub system: SystemConfig,
    pub n_channels: usize,
    /// Validation sample size for the sample-size study.
    pub m_val: usize,
    pub init: InitScheme,
    /// Also start RS-Opt from the NoRS-Opt and RS-ZF-SVD precoders and
    /// NoRS-Opt from NoRS-ZF, keeping the best run.
    pub multi_start: bool,
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig::default(),
            n_channels: 20,
            m_val: 10_000,
            init: InitScheme::MrcSvd,
            multi_start: true,
            jobs: 0,
        }
    }
}

impl HarnessConfig {
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.n_channels == 0 {
            return Err(Error::InvalidConfig("n_channels must be at least 1".into()));
        }
        if self.m_val == 0 {
            return Err(Error::InvalidConfig("m_val must be at least 1".into()));
        }
        Ok(())
    }

    fn at_snr(&self, snr_db: f64) -> Result<SystemConfig> {
        let cfg = self.system.at_snr_db(snr_db);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Mean and standard error of the mean.
fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// One scheme at one SNR, averaged over channel estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct EsrPoint {
    pub scheme: Scheme,
    pub snr_db: f64,
    pub esr: f64,
    pub std_err: f64,
    /// Mean private rate of each user.
    pub private_rates: Vec<f64>,
    /// Mean common rate.
    pub common_rate: f64,
    /// Channels contributing to the mean.
    pub n_channels: usize,
    /// Channels whose solve failed (excluded) or ended on a solver failure
    /// (included with their best iterate).
    pub failures: usize,
}

/// Rates of one precoder on one channel estimate.
#[derive(Debug, Clone, PartialEq)]
struct ChannelRates {
    asr: f64,
    private: Vec<f64>,
    common: f64,
    solver_failure: bool,
}

impl ChannelRates {
    fn from_result(r: &AsrResult<f64>) -> Self {
        Self {
            asr: r.asr,
            private: r.private_rates.clone(),
            common: r.common_rate,
            solver_failure: r.status == AoStatus::SolverFailure,
        }
    }
}

/// ASR of a fixed precoder on a sample, with the common rate limited by the
/// weakest user.
pub fn sample_asr(sample: &ConditionalSample<f64>, p: &Precoder<f64>, sigma_n2: f64) -> Result<(f64, Vec<f64>, f64)> {
    let r = sampled_rates(sample, p, sigma_n2)?;
    let common = match p.mode {
        Mode::Rs => r.common_rate().max(0.0),
        Mode::NoRs => 0.0,
    };
    Ok((common + r.private_sum(), r.private, common))
}

fn evaluated(sample: &ConditionalSample<f64>, p: &Precoder<f64>, sigma_n2: f64) -> Result<ChannelRates> {
    let (asr, private, common) = sample_asr(sample, p, sigma_n2)?;
    Ok(ChannelRates {
        asr,
        private,
        common,
        solver_failure: false,
    })
}

fn lifted(p: &Precoder<f64>) -> Precoder<f64> {
    Precoder {
        mode: Mode::Rs,
        ..p.clone()
    }
}

/// NoRS-Opt on one training sample: AO from `init` (its common stream
/// dropped) and, with `multi_start`, also from the NoRS-ZF baseline. The
/// best result is kept; AO never loses the objective of its start, so the
/// result is at least as good as the baseline.
pub fn nors_opt(
    est: &ChannelEstimate<f64>,
    sample: &ConditionalSample<f64>,
    cfg: &SystemConfig,
    init: &Precoder<f64>,
    multi_start: bool,
) -> Result<AsrResult<f64>> {
    let mut starts = vec![init.to_nors(cfg.pt)];
    if multi_start {
        // a rank-deficient estimate has no ZF start; the others still run
        if let Ok((zf, _)) = nors_zf_wf(est, cfg) {
            starts.push(zf);
        }
    }
    best_of(starts, |p| ao_solve_sample(sample, cfg, p, Mode::NoRs))
}

/// RS-Opt on one training sample: AO from `init` and, with `multi_start`,
/// also from the lifted NoRS-Opt precoder (when given) and the RS-ZF-SVD
/// baseline.
pub fn rs_opt(
    est: &ChannelEstimate<f64>,
    sample: &ConditionalSample<f64>,
    cfg: &SystemConfig,
    init: &Precoder<f64>,
    nors: Option<&AsrResult<f64>>,
    multi_start: bool,
) -> Result<AsrResult<f64>> {
    let mut starts = vec![init.clone()];
    if multi_start {
        starts.extend(nors.map(|n| lifted(&n.precoder)));
        if let Ok(p) = rs_zf_svd_baseline(est, cfg) {
            starts.push(p);
        }
    }
    best_of(starts, |p| ao_solve_sample(sample, cfg, p, Mode::Rs))
}

/// Every requested scheme on one channel estimate.
fn evaluate_channel(
    h: &HarnessConfig,
    cfg: &SystemConfig,
    est: &ChannelEstimate<f64>,
    sample: &ConditionalSample<f64>,
    schemes: &[Scheme],
) -> Vec<Result<ChannelRates>> {
    let sn2 = cfg.sigma_n2;
    let init = init_precoder(est, cfg, h.init).map(|i| i.precoder);
    let want = |s: Scheme| schemes.contains(&s);
    let multi = h.multi_start;

    let nors = (want(Scheme::NoRsOpt) || (multi && want(Scheme::RsOpt))).then(|| {
        let init = init.as_ref().map_err(clone_err)?;
        nors_opt(est, sample, cfg, init, multi)
    });

    schemes
        .iter()
        .map(|&scheme| match scheme {
            Scheme::NoRsZf => evaluated(sample, &nors_zf_wf(est, cfg)?.0, sn2),
            Scheme::RsZfSvd => evaluated(sample, &rs_zf_svd_baseline(est, cfg)?, sn2),
            Scheme::NoRsOpt => nors
                .as_ref()
                .unwrap()
                .as_ref()
                .map(ChannelRates::from_result)
                .map_err(clone_err),
            Scheme::RsOpt => {
                let init = init.as_ref().map_err(clone_err)?;
                let n = nors.as_ref().and_then(|r| r.as_ref().ok());
                Ok(ChannelRates::from_result(&rs_opt(est, sample, cfg, init, n, multi)?))
            }
            Scheme::ConservativeRs => {
                let init = init.as_ref().map_err(clone_err)?;
                let r = conservative_solve(est, cfg, init)?;
                let mut rates = evaluated(sample, &r.precoder, sn2)?;
                rates.solver_failure = r.status == AoStatus::SolverFailure;
                Ok(rates)
            }
        })
        .collect()
}

/// `Error` is not `Clone` (it can wrap I/O errors); shared intermediate
/// results are re-reported through their message.
fn clone_err(e: &Error) -> Error {
    match e {
        Error::RankDeficient { condition } => Error::RankDeficient { condition: *condition },
        Error::InvalidConfig(m) => Error::InvalidConfig(m.clone()),
        other => Error::Infeasible(other.to_string()),
    }
}

/// Runs `f` over `0..n` on a pool of `jobs` threads and returns the results
/// in index order.
pub fn par_map<R: Send>(jobs: usize, n: usize, f: impl Fn(usize) -> R + Sync + Send) -> Result<Vec<R>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start {jobs} worker threads: {e}")))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(f).collect()))
}

fn aggregate(scheme: Scheme, snr_db: f64, k: usize, per_channel: &[&Result<ChannelRates>]) -> EsrPoint {
    let ok: Vec<&ChannelRates> = per_channel.iter().filter_map(|r| r.as_ref().ok()).collect();
    let failures = per_channel.len() - ok.len() + ok.iter().filter(|r| r.solver_failure).count();
    let asr: Vec<f64> = ok.iter().map(|r| r.asr).collect();
    let (esr, std_err) = mean_stderr(&asr);
    let n = ok.len().max(1) as f64;
    let private_rates = (0..k)
        .map(|j| ok.iter().map(|r| r.private[j]).sum::<f64>() / n)
        .collect();
    let common_rate = ok.iter().map(|r| r.common).sum::<f64>() / n;
    EsrPoint {
        scheme,
        snr_db,
        esr,
        std_err,
        private_rates,
        common_rate,
        n_channels: ok.len(),
        failures,
    }
}

/// ESR of every scheme at every SNR (dB). Points are ordered by scheme
/// (in the order given), then SNR.
pub fn esr_sweep(h: &HarnessConfig, snr_grid: &[f64], schemes: &[Scheme]) -> Result<Vec<EsrPoint>> {
    h.validate()?;
    if snr_grid.is_empty() || schemes.is_empty() {
        return Err(Error::InvalidConfig("empty SNR grid or scheme list".into()));
    }
    let cfgs: Vec<SystemConfig> = snr_grid.iter().map(|&s| h.at_snr(s)).collect::<Result<_>>()?;
    let sys = &h.system;
    let pool = NormalizedPool::<f64>::generate(sys.seed, sys.nt, sys.k, h.n_channels, sys.m);
    let n_ch = h.n_channels;
    let results = par_map(h.jobs, cfgs.len() * n_ch, |job| {
        let (s, c) = (job / n_ch, job % n_ch);
        let cfg = &cfgs[s];
        match pool.scenario(c, cfg.sigma_e2(), cfg.m) {
            Ok((est, sample, _)) => evaluate_channel(h, cfg, &est, &sample, schemes),
            Err(e) => schemes.iter().map(|_| Err(clone_err(&e))).collect(),
        }
    })?;
    let mut points = Vec::with_capacity(schemes.len() * snr_grid.len());
    for (i, &scheme) in schemes.iter().enumerate() {
        for (s, &snr) in snr_grid.iter().enumerate() {
            let per: Vec<&Result<ChannelRates>> = (0..n_ch).map(|c| &results[s * n_ch + c][i]).collect();
            points.push(aggregate(scheme, snr, sys.k, &per));
        }
    }
    Ok(points)
}

/// Least-squares slope of ESR against `log2 Pt` over the points of one
/// scheme whose SNR lies in `window` (dB, inclusive).
pub fn dof_slope(points: &[EsrPoint], window: (f64, f64)) -> Result<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.snr_db >= window.0 - 1e-9 && p.snr_db <= window.1 + 1e-9 && p.esr.is_finite())
        .map(|p| (p.snr_db / 10.0 * 10f64.log2(), p.esr))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientPoints {
            needed: 3,
            found: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// The top `width` dB of the SNRs present in `points`.
pub fn top_window(points: &[EsrPoint], width: f64) -> (f64, f64) {
    let hi = points.iter().map(|p| p.snr_db).fold(f64::NEG_INFINITY, f64::max);
    (hi - width, hi)
}

/// Slope of every scheme of a sweep over the top `width` dB.
pub fn dof_slopes(points: &[EsrPoint], width: f64) -> Vec<(Scheme, Result<f64>)> {
    let mut schemes: Vec<Scheme> = Vec::new();
    for p in points {
        if !schemes.contains(&p.scheme) {
            schemes.push(p.scheme);
        }
    }
    schemes
        .into_iter()
        .map(|s| {
            let pts: Vec<EsrPoint> = points.iter().filter(|p| p.scheme == s).cloned().collect();
            (s, dof_slope(&pts, top_window(&pts, width)))
        })
        .collect()
}

/// Horizontal gap (dB) between two ESR curves at the level `curve_a`
/// reaches at `snr_db`: how much more SNR `curve_b` needs to match it,
/// by linear interpolation in dB. `None` when `curve_b` never reaches it.
pub fn snr_gap(curve_a: &[EsrPoint], curve_b: &[EsrPoint], snr_db: f64) -> Option<f64> {
    let target = curve_a.iter().find(|p| (p.snr_db - snr_db).abs() < 1e-9)?.esr;
    let mut b: Vec<(f64, f64)> = curve_b.iter().map(|p| (p.snr_db, p.esr)).collect();
    b.sort_by(|x, y| x.0.total_cmp(&y.0));
    for w in b.windows(2) {
        let ((s0, e0), (s1, e1)) = (w[0], w[1]);
        if (e0 - target) * (e1 - target) <= 0.0 && e1 != e0 {
            return Some(s0 + (target - e0) / (e1 - e0) * (s1 - s0) - snr_db);
        }
    }
    // extrapolate linearly beyond the last point
    let n = b.len();
    if n >= 2 {
        let ((s0, e0), (s1, e1)) = (b[n - 2], b[n - 1]);
        if e1 > e0 && target > e1 {
            return Some(s1 + (target - e1) / (e1 - e0) * (s1 - s0) - snr_db);
        }
    }
    None
}

/// Sample-size study: optimization on `M` pooled realizations, evaluation
/// on an independent validation sample.
#[derive(Debug, Clone, PartialEq)]
pub struct MPoint {
    pub scheme: Scheme,
    pub m: usize,
    pub snr_db: f64,
    /// Validated ESR with the common rate limited by the weakest user's
    /// validated common rate.
    pub validated: EsrPoint,
    /// ESR on the training samples.
    pub training_esr: f64,
    pub training_std_err: f64,
}

pub fn m_sensitivity(h: &HarnessConfig, snr_db: f64, m_list: &[usize], schemes: &[Scheme]) -> Result<Vec<MPoint>> {
    h.validate()?;
    if m_list.is_empty() || m_list.contains(&0) {
        return Err(Error::InvalidConfig("m_list must be nonempty with positive entries".into()));
    }
    if let Some(s) = schemes.iter().find(|s| !matches!(s, Scheme::RsOpt | Scheme::NoRsOpt)) {
        return Err(Error::InvalidConfig(format!("the sample-size study supports RS-Opt and NoRS-Opt, not {s}")));
    }
    let base = h.at_snr(snr_db)?;
    let sys = &h.system;
    let m_max = *m_list.iter().max().unwrap();
    let pool = NormalizedPool::<f64>::generate(sys.seed, sys.nt, sys.k, h.n_channels, m_max);
    let mut val_rng = stream_rng(sys.seed, Stream::Validation, 0);
    let val_errors: Vec<CMatrix<f64>> =
        (0..h.m_val).map(|_| standard_complex_gaussian(sys.nt, sys.k, &mut val_rng)).collect();
    let n_ch = h.n_channels;
    let sub = HarnessConfig {
        multi_start: false,
        ..h.clone()
    };
    // per job: (training, validated) rates per scheme
    let results = par_map(h.jobs, m_list.len() * n_ch, |job| {
        let (mi, c) = (job / n_ch, job % n_ch);
        let cfg = SystemConfig {
            m: m_list[mi],
            ..base.clone()
        };
        let run = || -> Result<Vec<(ChannelRates, ChannelRates)>> {
            let (est, sample, _) = pool.scenario(c, cfg.sigma_e2(), cfg.m)?;
            let validation = ConditionalSample::from_normalized_errors(&est, &val_errors)?;
            let init = init_precoder(&est, &cfg, sub.init)?.precoder;
            schemes
                .iter()
                .map(|&s| {
                    let r = match s {
                        Scheme::RsOpt => ao_solve_sample(&sample, &cfg, &init, Mode::Rs)?,
                        _ => ao_solve_sample(&sample, &cfg, &init.to_nors(cfg.pt), Mode::NoRs)?,
                    };
                    let mut val = evaluated(&validation, &r.precoder, cfg.sigma_n2)?;
                    val.solver_failure = r.status == AoStatus::SolverFailure;
                    Ok((ChannelRates::from_result(&r), val))
                })
                .collect()
        };
        run()
    })?;
    let mut out = Vec::new();
    for (i, &scheme) in schemes.iter().enumerate() {
        for (mi, &m) in m_list.iter().enumerate() {
            let rows: Vec<Result<ChannelRates>> = (0..n_ch)
                .map(|c| match &results[mi * n_ch + c] {
                    Ok(v) => Ok(v[i].1.clone()),
                    Err(e) => Err(clone_err(e)),
                })
                .collect();
            let refs: Vec<&Result<ChannelRates>> = rows.iter().collect();
            let training: Vec<f64> = (0..n_ch)
                .filter_map(|c| results[mi * n_ch + c].as_ref().ok().map(|v| v[i].0.asr))
                .collect();
            let (training_esr, training_std_err) = mean_stderr(&training);
            out.push(MPoint {
                scheme,
                m,
                snr_db,
                validated: aggregate(scheme, snr_db, sys.k, &refs),
                training_esr,
                training_std_err,
            });
        }
    }
    Ok(out)
}

/// The weight grid of the region study: `w₁ = 1` and
/// `w₂ ∈ {10⁻³, 10⁻¹, 10⁻⁰·⁹⁵, …, 10⁰·⁹⁵, 10, 10³}`.
pub fn default_weight_pairs() -> Vec<(f64, f64)> {
    let mut w2 = vec![1e-3];
    w2.extend((-20..=20).map(|i| 10f64.powf(i as f64 * 0.05)));
    w2.push(1e3);
    w2.into_iter().map(|w| (1.0, w)).collect()
}

/// Mean per-user ergodic rates of one scheme for one weight pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionPoint {
    pub scheme: Scheme,
    pub weights: (f64, f64),
    /// Mean of `R̄_1 + C̄_1`.
    pub er1: f64,
    pub er2: f64,
    /// Mean weighted objective `Σ w_k (R̄_k + C̄_k)`.
    pub objective: f64,
    pub n_channels: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionReport {
    /// RS points followed by NoRS points, each in weight-pair order.
    pub points: Vec<RegionPoint>,
    pub rs_hull: Vec<(f64, f64)>,
    pub nors_hull: Vec<(f64, f64)>,
    /// Per weight pair and channel: RS objective minus NoRS objective.
    pub min_objective_margin: f64,
}

pub fn rate_region(h: &HarnessConfig, snr_db: f64, weight_pairs: &[(f64, f64)]) -> Result<RegionReport> {
    h.validate()?;
    if h.system.k != 2 {
        return Err(Error::InvalidConfig(format!(
            "the rate region needs k = 2, got {}",
            h.system.k
        )));
    }
    if weight_pairs.is_empty() || weight_pairs.iter().any(|(a, b)| !(*a > 0.0 && *b > 0.0)) {
        return Err(Error::InvalidConfig("weights must be positive".into()));
    }
    let cfg = h.at_snr(snr_db)?;
    let sys = &h.system;
    let pool = NormalizedPool::<f64>::generate(sys.seed, sys.nt, sys.k, h.n_channels, sys.m);
    let n_ch = h.n_channels;
    let results = par_map(h.jobs, weight_pairs.len() * n_ch, |job| {
        let (wi, c) = (job / n_ch, job % n_ch);
        let w = [weight_pairs[wi].0, weight_pairs[wi].1];
        let run = || -> Result<(AsrResult<f64>, AsrResult<f64>)> {
            let (est, sample, _) = pool.scenario(c, cfg.sigma_e2(), cfg.m)?;
            let init = init_precoder(&est, &cfg, h.init)?.precoder;
            let nors = weighted_solve_sample(&sample, &cfg, &init.to_nors(cfg.pt), &w, Mode::NoRs)?;
            let rs = weighted_solve_sample(&sample, &cfg, &init, &w, Mode::Rs)?;
            // restarting from the lifted NoRS solution makes RS at least as
            // good as NoRS for every weight pair
            let rs = if h.multi_start {
                let alt = weighted_solve_sample(&sample, &cfg, &lifted(&nors.precoder), &w, Mode::Rs)?;
                if alt.weighted_objective > rs.weighted_objective {
                    alt
                } else {
                    rs
                }
            } else {
                rs
            };
            Ok((rs, nors))
        };
        run()
    })?;

    let mut points = Vec::new();
    let mut margin = f64::INFINITY;
    for (scheme, pick) in [(Scheme::RsOpt, 0usize), (Scheme::NoRsOpt, 1)] {
        for (wi, &weights) in weight_pairs.iter().enumerate() {
            let mut er = [Vec::new(), Vec::new()];
            let mut obj = Vec::new();
            let mut failures = 0;
            for c in 0..n_ch {
                match &results[wi * n_ch + c] {
                    Ok((rs, nors)) => {
                        let r = if pick == 0 { rs } else { nors };
                        let totals = r.user_totals();
                        er[0].push(totals[0]);
                        er[1].push(totals[1]);
                        obj.push(r.weighted_objective);
                        failures += usize::from(r.status == AoStatus::SolverFailure);
                        if pick == 0 {
                            margin = margin.min(rs.weighted_objective - nors.weighted_objective);
                        }
                    }
                    Err(_) => failures += 1,
                }
            }
            points.push(RegionPoint {
                scheme,
                weights,
                er1: mean_stderr(&er[0]).0,
                er2: mean_stderr(&er[1]).0,
                objective: mean_stderr(&obj).0,
                n_channels: obj.len(),
                failures,
            });
        }
    }
    let hull_of = |s: Scheme| {
        let pts: Vec<(f64, f64)> = points
            .iter()
            .filter(|p| p.scheme == s && p.er1.is_finite() && p.er2.is_finite())
            .map(|p| (p.er1, p.er2))
            .collect();
        region_hull(&pts)
    };
    Ok(RegionReport {
        rs_hull: hull_of(Scheme::RsOpt),
        nors_hull: hull_of(Scheme::NoRsOpt),
        points,
        min_objective_margin: margin,
    })
}

/// Ergodic rate user `user` would get alone: mean single-user sampled ASR
/// over the campaign's channels.
pub fn single_user_er(h: &HarnessConfig, snr_db: f64, user: usize) -> Result<f64> {
    let cfg = h.at_snr(snr_db)?;
    let sys = &h.system;
    let pool = NormalizedPool::<f64>::generate(sys.seed, sys.nt, sys.k, h.n_channels, sys.m);
    let single = SystemConfig {
        k: 1,
        ..cfg.clone()
    };
    let rates = par_map(h.jobs, h.n_channels, |c| -> Result<f64> {
        let (est, sample, _) = pool.scenario(c, cfg.sigma_e2(), cfg.m)?;
        let pick = |m: &CMatrix<f64>| m.columns(user, 1).into_owned();
        let est1 = ChannelEstimate {
            h_hat: pick(&est.h_hat),
            sigma_e2: est.sigma_e2,
        };
        let sample1 = ConditionalSample {
            realizations: sample.realizations.iter().map(pick).collect(),
        };
        let init = init_precoder(&est1, &single, InitScheme::MrcSvd)?.precoder.to_nors(single.pt);
        Ok(ao_solve_sample(&sample1, &single, &init, Mode::NoRs)?.asr)
    })?;
    let ok: Vec<f64> = rates.into_iter().collect::<Result<_>>()?;
    Ok(mean_stderr(&ok).0)
}

/// Convex hull (counter-clockwise, starting at the lowest-leftmost point)
/// by the monotone chain.
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Hull of an achievable region: the points together with the origin and
/// their projections onto both axes (rates can always be lowered).
pub fn region_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    if points.is_empty() {
        return Vec::new();
    }
    let x_max = points.iter().map(|p| p.0).fold(0.0, f64::max);
    let y_max = points.iter().map(|p| p.1).fold(0.0, f64::max);
    let mut all = points.to_vec();
    all.extend([(0.0, 0.0), (x_max, 0.0), (0.0, y_max)]);
    convex_hull(&all)
}

/// Whether `p` lies in the counter-clockwise convex polygon `hull`, allowing
/// an outward distance of `tol`.
pub fn hull_contains(hull: &[(f64, f64)], p: (f64, f64), tol: f64) -> bool {
    if hull.len() < 3 {
        return false;
    }
    (0..hull.len()).all(|i| {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        cross >= -tol * len
    })
}

pub fn write_esr_csv<W: Write>(points: &[EsrPoint], mut w: W) -> std::io::Result<()> {
    writeln!(w, "scheme,snr_db,esr,stderr,n")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{}",
            p.scheme,
            fmt_sig(p.snr_db),
            fmt_sig(p.esr),
            fmt_sig(p.std_err),
            p.n_channels
        )?;
    }
    Ok(())
}

pub fn write_region_csv<W: Write>(points: &[RegionPoint], mut w: W) -> std::io::Result<()> {
    writeln!(w, "scheme,w1,w2,er1,er2")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{}",
            p.scheme,
            fmt_sig(p.weights.0),
            fmt_sig(p.weights.1),
            fmt_sig(p.er1),
            fmt_sig(p.er2)
        )?;
    }
    Ok(())
}

pub fn write_hull_csv<W: Write>(report: &RegionReport, mut w: W) -> std::io::Result<()> {
    writeln!(w, "scheme,vertex,er1,er2")?;
    for (scheme, hull) in [(Scheme::RsOpt, &report.rs_hull), (Scheme::NoRsOpt, &report.nors_hull)] {
        for (i, (x, y)) in hull.iter().enumerate() {
            writeln!(w, "{},{},{},{}", scheme, i, fmt_sig(*x), fmt_sig(*y))?;
        }
    }
    Ok(())
}

pub fn write_slopes_csv<W: Write>(rows: &[(Scheme, f64, usize, f64)], mut w: W) -> std::io::Result<()> {
    writeln!(w, "scheme,alpha,K,slope")?;
    for (scheme, alpha, k, slope) in rows {
        writeln!(w, "{},{},{},{}", scheme, fmt_sig(*alpha), k, fmt_sig(*slope))?;
    }
    Ok(())
}

pub fn write_m_sweep_csv<W: Write>(points: &[MPoint], mut w: W) -> std::io::Result<()> {
    writeln!(w, "scheme,m,snr_db,esr,stderr,n,training_esr,training_stderr")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            p.scheme,
            p.m,
            fmt_sig(p.snr_db),
            fmt_sig(p.validated.esr),
            fmt_sig(p.validated.std_err),
            p.validated.n_channels,
            fmt_sig(p.training_esr),
            fmt_sig(p.training_std_err)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
