//! Alternating-optimization drivers.
//!
//! Every iteration freezes the MMSE equalizers and weights of the current
//! precoder, builds the convex surrogate of the augmented WSMSE and solves it
//! for a new precoder. The objective reported per iteration is the
//! surrogate re-linearized at the accepted precoder,
//!
//! ```text
//! A[n] = ξ_c + Σ_k w_k ξ_k      (ξ_c ≡ 1 without a common stream)
//! ```
//!
//! which equals `Σ_k w_k + 1 − R̄_s` and never increases: a surrogate
//! solution that is not strictly better than the current precoder is
//! rejected, so the only source of an increase would be a bug.
//!
//! Two surrogates are available: the sampled one (conditional channel
//! realizations) and the conservative one, which averages the quadratic
//! forms over the isotropic CSIT error in closed form.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::Rng;

use crate::channel::{sample_conditional, stream_rng, ChannelEstimate, ConditionalSample, Stream, SystemConfig};
use crate::error::{Error, Result};
use crate::precoder::{Mode, Precoder};
use crate::qcqp::ipm::IpmSettings;
use crate::qcqp::{QcqpProblem, SolveStatus};
use crate::report::fmt_sig;
use crate::saa::{accumulate_safs, sampled_rates, update_equalizers_weights, SafBundle, UserSafs};
use crate::scalar::{czero, norm_sqr, Cx, Real};

/// Stopping rule and solver settings of one AO run.
#[derive(Debug, Clone)]
pub struct AoSettings<T: Real> {
    /// Stop once `|A[n] − A[n−1]|` falls below this (scaled by the largest
    /// weight when it exceeds one).
    pub eps_r: f64,
    pub max_iters: usize,
    pub ipm: IpmSettings<T>,
}

impl<T: Real> AoSettings<T> {
    pub fn from_config(cfg: &SystemConfig) -> Self {
        Self {
            eps_r: cfg.eps_r,
            max_iters: cfg.max_iters,
            ipm: IpmSettings::default(),
        }
    }
}

/// How an AO run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AoStatus {
    Converged,
    MaxIterations,
    /// The precoder update failed; the result holds the last accepted
    /// iterate.
    SolverFailure,
}

impl AoStatus {
    pub fn label(self) -> &'static str {
        match self {
            AoStatus::Converged => "converged",
            AoStatus::MaxIterations => "max_iterations",
            AoStatus::SolverFailure => "solver_failure",
        }
    }
}

/// One row of the AO trace. Row 0 describes the initial precoder.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub asr: f64,
    /// Status of the update that produced this iterate (`None` for row 0).
    pub solver: Option<SolveStatus>,
    /// Whether the update was accepted (a rejected update repeats the
    /// previous precoder).
    pub accepted: bool,
    pub wall: Duration,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AoTrace {
    pub rows: Vec<TraceRow>,
}

impl AoTrace {
    pub fn objectives(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.objective).collect()
    }

    /// Largest increase between consecutive objectives (≤ 0 for a monotone
    /// run).
    pub fn max_increase(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|w| w[1].objective - w[0].objective)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn iterations(&self) -> usize {
        self.rows.len().saturating_sub(1)
    }

    /// CSV with header `iteration,objective,asr,solver_status`. Wall times
    /// are left out so that traces are reproducible byte for byte.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,objective,asr,solver_status")?;
        for r in &self.rows {
            let status = match (r.solver, r.accepted) {
                (None, _) => "init",
                (Some(s), true) => s.label(),
                (Some(_), false) => "rejected",
            };
            writeln!(
                w,
                "{},{},{},{}",
                r.iteration,
                fmt_sig(r.objective),
                fmt_sig(r.asr),
                status
            )?;
        }
        Ok(())
    }
}

/// Outcome of one AO run. Rates are sample averages over the training
/// sample (or the conservative closed forms).
#[derive(Debug, Clone, PartialEq)]
pub struct AsrResult<T: Real> {
    pub precoder: Precoder<T>,
    /// Per-user common rates `R̄_c,k` (zero without a common stream).
    pub common_rates: Vec<T>,
    pub private_rates: Vec<T>,
    /// `min_k R̄_c,k`
    pub common_rate: T,
    /// `R̄_c + Σ_k R̄_k`
    pub asr: T,
    /// Common-rate shares `C̄_k` (zero unless the split structure is used).
    pub split: Vec<T>,
    pub weights: Vec<T>,
    /// `Σ_k w_k (R̄_k + C̄_k)`, plus `R̄_c` when there is no split.
    pub weighted_objective: T,
    pub trace: AoTrace,
    pub status: AoStatus,
}

impl<T: Real> AsrResult<T> {
    /// `R̄_k + C̄_k` per user.
    pub fn user_totals(&self) -> Vec<T> {
        self.private_rates
            .iter()
            .zip(&self.split)
            .map(|(r, c)| *r + *c)
            .collect()
    }
}

/// The structure of the precoder update.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective<T: Real> {
    pub mode: Mode,
    pub weights: Vec<T>,
    pub split: bool,
}

impl<T: Real> Objective<T> {
    pub fn sum_rate(mode: Mode, k: usize) -> Self {
        Self {
            mode,
            weights: vec![T::one(); k],
            split: false,
        }
    }

    /// Weighted sum with per-user common-rate shares (RS) or plain
    /// weighted private rates (NoRS).
    pub fn weighted(mode: Mode, weights: Vec<T>) -> Self {
        Self {
            mode,
            weights,
            split: mode == Mode::Rs,
        }
    }

    fn weight_sum(&self) -> T {
        self.weights.iter().fold(T::zero(), |a, w| a + *w)
    }

    fn top(&self) -> usize {
        let mut best = 0;
        for (i, w) in self.weights.iter().enumerate() {
            if *w > self.weights[best] {
                best = i;
            }
        }
        best
    }

    /// Weighted rate the objective rewards, with the common rate placed
    /// optimally.
    fn value(&self, common: &[T], private: &[T]) -> T {
        let weighted = self
            .weights
            .iter()
            .zip(private)
            .fold(T::zero(), |a, (w, r)| a + *w * *r);
        match (self.mode, self.split) {
            (Mode::NoRs, _) => weighted,
            (Mode::Rs, false) => weighted + min_of(common),
            (Mode::Rs, true) => weighted + self.weights[self.top()] * min_of(common).max(T::zero()),
        }
    }

    /// `A + value` at the MMSE point.
    fn constant(&self) -> T {
        if self.split {
            self.weight_sum()
        } else {
            self.weight_sum() + T::one()
        }
    }
}

fn min_of<T: Real>(v: &[T]) -> T {
    v.iter().copied().fold(T::max_value().unwrap(), |a, b| a.min(b))
}

/// Source of the convex surrogate around a precoder.
#[derive(Debug, Clone, Copy)]
pub enum Surrogate<'a, T: Real> {
    Sampled(&'a ConditionalSample<T>),
    Conservative(&'a ChannelEstimate<T>),
}

/// Surrogate data at one precoder together with the rates it certifies.
#[derive(Debug, Clone)]
pub struct Linearization<T: Real> {
    pub safs: SafBundle<T>,
    pub common_rates: Vec<T>,
    pub private_rates: Vec<T>,
}

impl<T: Real> Surrogate<'_, T> {
    pub fn linearize(&self, p: &Precoder<T>, sigma_n2: T) -> Result<Linearization<T>> {
        match self {
            Surrogate::Sampled(sample) => {
                let eq = update_equalizers_weights(sample, p, sigma_n2)?;
                let safs = accumulate_safs(sample, &eq)?;
                let rates = sampled_rates(sample, p, sigma_n2)?;
                Ok(Linearization {
                    safs,
                    common_rates: rates.common,
                    private_rates: rates.private,
                })
            }
            Surrogate::Conservative(est) => conservative_linearization(est, p, sigma_n2),
        }
    }
}

/// Closed-form averages over `h = ĥ + e`, `e ~ CN(0, σ_e² I)`:
/// `T̄ = Σ_i (|ĥᴴp_i|² + σ_e²‖p_i‖²) + σ_n²`, relaxed equalizers
/// `ĝ = pᴴĥ / T̄`, weights `1/ε̂` and rates `−log2 ε̂`.
pub fn conservative_linearization<T: Real>(
    est: &ChannelEstimate<T>,
    p: &Precoder<T>,
    sigma_n2: T,
) -> Result<Linearization<T>> {
    if est.nt() != p.nt() || est.k() != p.k() {
        return Err(Error::Dimension(format!(
            "estimate is {}×{} but precoder is {}×{}",
            est.nt(),
            est.k(),
            p.nt(),
            p.k()
        )));
    }
    let nt = p.nt();
    let k_users = p.k();
    let se2 = est.sigma_e2;
    let stream_power: Vec<T> = (0..k_users).map(|i| p.private_power(i)).collect();
    let common_power = p.common_power();
    let mut users = Vec::with_capacity(k_users);
    let mut common_rates = Vec::with_capacity(k_users);
    let mut private_rates = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let h = est.h_hat.column(k);
        let c = h.dotc(&p.common);
        let proj: Vec<Cx<T>> = (0..k_users).map(|i| h.dotc(&p.private.column(i))).collect();
        let t = proj
            .iter()
            .zip(&stream_power)
            .fold(sigma_n2, |a, (z, q)| a + z.norm_sqr() + se2 * *q);
        let t_c = t + c.norm_sqr() + se2 * common_power;
        let g_c = c.conj() / t_c;
        let g = proj[k].conj() / t;
        let eps_c = T::one() - c.norm_sqr() / t_c;
        let eps = T::one() - proj[k].norm_sqr() / t;
        let (u_c, u) = (T::one() / eps_c, T::one() / eps);
        common_rates.push(-eps_c.log2());
        private_rates.push(-eps.log2());

        let tc_w = u_c * g_c.norm_sqr();
        let t_w = u * g.norm_sqr();
        let mut s = UserSafs::zeros(nt);
        for j in 0..nt {
            for i in 0..nt {
                let mut outer = h[i] * h[j].conj();
                if i == j {
                    outer += Cx::new(se2, T::zero());
                }
                s.psi_c[(i, j)] = outer * tc_w;
                s.psi[(i, j)] = outer * t_w;
            }
            s.f_c[j] = h[j] * g_c.conj() * u_c;
            s.f[j] = h[j] * g.conj() * u;
        }
        s.t_c = tc_w;
        s.t = t_w;
        s.u_c = u_c;
        s.u = u;
        s.ups_c = u_c.log2();
        s.ups = u.log2();
        users.push(s);
    }
    Ok(Linearization {
        safs: SafBundle { users },
        common_rates,
        private_rates,
    })
}

/// Runs the AO loop from `init`.
///
/// In private-only mode a nonzero common stream of `init` is dropped and the
/// private streams are rescaled to the full budget.
pub fn run_ao<T: Real>(
    surrogate: Surrogate<'_, T>,
    sigma_n2: T,
    pt: T,
    init: &Precoder<T>,
    objective: &Objective<T>,
    settings: &AoSettings<T>,
) -> Result<AsrResult<T>> {
    let k_users = init.k();
    if objective.weights.len() != k_users {
        return Err(Error::Dimension(format!(
            "{} weights for {k_users} users",
            objective.weights.len()
        )));
    }
    if !init.is_feasible(pt) {
        return Err(Error::InvalidConfig(format!(
            "initial precoder uses {:e} > Pt = {:e}",
            init.power(),
            pt
        )));
    }
    let mut p = match objective.mode {
        Mode::NoRs if norm_sqr(init.common.iter()) > T::zero() => init.to_nors(pt),
        mode => Precoder {
            mode,
            ..init.clone()
        },
    };
    let max_w = objective.weights.iter().fold(T::one(), |a, w| a.max(*w)).as_f64();
    let eps_r = settings.eps_r * max_w;
    let eps = T::default_epsilon().as_f64();

    let clock = Instant::now();
    let mut lin = surrogate.linearize(&p, sigma_n2)?;
    let mut prob = build_problem(&lin, sigma_n2, pt, objective)?;
    let mut a_prev = trace_objective(&prob, &p);
    check_bookkeeping(objective, &lin, a_prev, 0)?;
    let mut trace = AoTrace::default();
    trace.rows.push(TraceRow {
        iteration: 0,
        objective: a_prev,
        asr: objective.value(&lin.common_rates, &lin.private_rates).as_f64(),
        solver: None,
        accepted: true,
        wall: clock.elapsed(),
    });
    let mut split = prob.evaluate(&p).split;
    let mut status = AoStatus::MaxIterations;

    for n in 1..=settings.max_iters {
        let started = Instant::now();
        let sol = match prob.solve_with(Some(&p), &settings.ipm) {
            Ok(sol) => sol,
            Err(_) => {
                status = AoStatus::SolverFailure;
                break;
            }
        };
        let current = prob.evaluate(&p).objective;
        let accepted = sol.objective.is_finite() && sol.objective < current && sol.precoder.is_feasible(pt);
        if accepted {
            p = sol.precoder;
            split = sol.split;
            lin = surrogate.linearize(&p, sigma_n2)?;
            prob = build_problem(&lin, sigma_n2, pt, objective)?;
        }
        let a = trace_objective(&prob, &p);
        let slack = 1e-8f64.max(1e3 * eps * (1.0 + a.abs()));
        if !(a <= a_prev + slack) {
            return Err(Error::NonMonotonic {
                iteration: n,
                previous: a_prev,
                current: a,
            });
        }
        check_bookkeeping(objective, &lin, a, n)?;
        trace.rows.push(TraceRow {
            iteration: n,
            objective: a,
            asr: objective.value(&lin.common_rates, &lin.private_rates).as_f64(),
            solver: Some(sol.status),
            accepted,
            wall: started.elapsed(),
        });
        let done = (a - a_prev).abs() < eps_r;
        a_prev = a;
        if done {
            status = AoStatus::Converged;
            break;
        }
    }
    Ok(finish(p, lin, split, objective, trace, status))
}

fn build_problem<T: Real>(
    lin: &Linearization<T>,
    sigma_n2: T,
    pt: T,
    objective: &Objective<T>,
) -> Result<QcqpProblem<T>> {
    QcqpProblem::new(
        lin.safs.clone(),
        sigma_n2,
        pt,
        objective.weights.clone(),
        objective.mode,
        objective.split,
    )
}

fn trace_objective<T: Real>(prob: &QcqpProblem<T>, p: &Precoder<T>) -> f64 {
    let value = prob.evaluate(p).objective.as_f64();
    match prob.mode {
        Mode::NoRs => value + 1.0,
        Mode::Rs => value,
    }
}

/// `A[n] + R̄_s(P[n])` must equal `Σ w + 1` (or `Σ w` with shares).
fn check_bookkeeping<T: Real>(objective: &Objective<T>, lin: &Linearization<T>, a: f64, iteration: usize) -> Result<()> {
    let value = objective.value(&lin.common_rates, &lin.private_rates).as_f64();
    let expected = objective.constant().as_f64() - value;
    let tol = 1e-7f64.max(1e3 * T::default_epsilon().as_f64()) * (1.0 + a.abs());
    let deviation = (a - expected).abs();
    if !(deviation <= tol) {
        return Err(Error::Bookkeeping {
            iteration,
            objective: a,
            deviation,
        });
    }
    Ok(())
}

fn finish<T: Real>(
    p: Precoder<T>,
    lin: Linearization<T>,
    split: Vec<T>,
    objective: &Objective<T>,
    trace: AoTrace,
    status: AoStatus,
) -> AsrResult<T> {
    let k_users = p.k();
    let has_common = objective.mode == Mode::Rs;
    let common_rates = if has_common {
        lin.common_rates.clone()
    } else {
        vec![T::zero(); k_users]
    };
    let common_rate = if has_common {
        min_of(&common_rates).max(T::zero())
    } else {
        T::zero()
    };
    let private_sum = lin.private_rates.iter().fold(T::zero(), |a, r| a + *r);
    let split = if objective.split {
        complete_split(split, common_rate, objective.top())
    } else {
        vec![T::zero(); k_users]
    };
    let weighted_private = objective
        .weights
        .iter()
        .zip(&lin.private_rates)
        .fold(T::zero(), |a, (w, r)| a + *w * *r);
    let weighted_objective = if objective.split {
        objective
            .weights
            .iter()
            .zip(&split)
            .fold(weighted_private, |a, (w, c)| a + *w * *c)
    } else {
        weighted_private + common_rate
    };
    AsrResult {
        precoder: p,
        common_rates,
        private_rates: lin.private_rates,
        common_rate,
        asr: common_rate + private_sum,
        split,
        weights: objective.weights.clone(),
        weighted_objective,
        trace,
        status,
    }
}

/// Clamps the shares of the last update to the final common rate and hands
/// any leftover to the highest-weight user.
fn complete_split<T: Real>(mut split: Vec<T>, common_rate: T, top: usize) -> Vec<T> {
    split.iter_mut().for_each(|c| *c = c.max(T::zero()));
    let total = split.iter().fold(T::zero(), |a, c| a + *c);
    if total > common_rate {
        let s = if total > T::zero() { common_rate / total } else { T::zero() };
        split.iter_mut().for_each(|c| *c *= s);
    } else {
        split[top] += common_rate - total;
    }
    split
}

/// The training sample of `ao_solve`: `cfg.m` realizations from the error
/// stream of `cfg.seed`.
pub fn training_sample<T: Real>(est: &ChannelEstimate<T>, cfg: &SystemConfig) -> Result<ConditionalSample<T>> {
    sample_conditional(est, cfg.m, &mut stream_rng(cfg.seed, Stream::Errors, 0))
}

/// Sum-rate AO on a fresh training sample.
pub fn ao_solve<T: Real>(
    est: &ChannelEstimate<T>,
    cfg: &SystemConfig,
    init: &Precoder<T>,
    mode: Mode,
) -> Result<AsrResult<T>> {
    cfg.validate()?;
    let sample = training_sample(est, cfg)?;
    ao_solve_sample(&sample, cfg, init, mode)
}

/// Sum-rate AO on a given training sample.
pub fn ao_solve_sample<T: Real>(
    sample: &ConditionalSample<T>,
    cfg: &SystemConfig,
    init: &Precoder<T>,
    mode: Mode,
) -> Result<AsrResult<T>> {
    run_ao(
        Surrogate::Sampled(sample),
        T::of(cfg.sigma_n2),
        T::of(cfg.pt),
        init,
        &Objective::sum_rate(mode, init.k()),
        &AoSettings::from_config(cfg),
    )
}

/// Conservative RS design: no sampling, closed-form averaged surrogate.
/// The rates of the result are the conservative ones.
pub fn conservative_solve<T: Real>(
    est: &ChannelEstimate<T>,
    cfg: &SystemConfig,
    init: &Precoder<T>,
) -> Result<AsrResult<T>> {
    cfg.validate()?;
    run_ao(
        Surrogate::Conservative(est),
        T::of(cfg.sigma_n2),
        T::of(cfg.pt),
        init,
        &Objective::sum_rate(Mode::Rs, init.k()),
        &AoSettings::from_config(cfg),
    )
}

/// Weighted ASR with per-user common-rate shares on a fresh training
/// sample.
pub fn weighted_asr_solve<T: Real>(
    est: &ChannelEstimate<T>,
    cfg: &SystemConfig,
    init: &Precoder<T>,
    weights: &[T],
) -> Result<AsrResult<T>> {
    cfg.validate()?;
    let sample = training_sample(est, cfg)?;
    weighted_solve_sample(&sample, cfg, init, weights, Mode::Rs)
}

/// Weighted AO on a given sample: shares for RS, plain weighted private
/// rates for NoRS.
pub fn weighted_solve_sample<T: Real>(
    sample: &ConditionalSample<T>,
    cfg: &SystemConfig,
    init: &Precoder<T>,
    weights: &[T],
    mode: Mode,
) -> Result<AsrResult<T>> {
    if weights.iter().any(|w| !(*w > T::zero())) {
        return Err(Error::InvalidConfig("weights must be positive".into()));
    }
    run_ao(
        Surrogate::Sampled(sample),
        T::of(cfg.sigma_n2),
        T::of(cfg.pt),
        init,
        &Objective::weighted(mode, weights.to_vec()),
        &AoSettings::from_config(cfg),
    )
}

/// Runs several initializations and keeps the best weighted objective
/// (ties go to the earliest start).
pub fn best_of<T: Real, I>(starts: I, mut solve: impl FnMut(&Precoder<T>) -> Result<AsrResult<T>>) -> Result<AsrResult<T>>
where
    I: IntoIterator<Item = Precoder<T>>,
{
    let mut best: Option<AsrResult<T>> = None;
    let mut last_err = None;
    for p in starts {
        match solve(&p) {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.weighted_objective > b.weighted_objective) {
                    best = Some(r);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::InvalidConfig("no initializations given".into())))
}

/// Random feasible precoder at full power, used for restarts.
pub fn random_precoder<T: Real, R: Rng + ?Sized>(nt: usize, k: usize, pt: T, mode: Mode, rng: &mut R) -> Precoder<T> {
    let g = crate::channel::standard_complex_gaussian::<T, _>(nt, k + 1, rng);
    let mut p = Precoder {
        common: g.column(0).into_owned(),
        private: g.columns(1, k).into_owned(),
        mode,
    };
    if mode == Mode::NoRs {
        p.common.iter_mut().for_each(|z| *z = czero());
    }
    p.scaled((pt / p.power()).sqrt())
}
