//! The convex precoder update of one AO iteration.
//!
//! With the equalizers and weights frozen, every augmented WMSE is a convex
//! quadratic in the precoder:
//!
//! ```text
//! ξ_k  = κ[Σ_i p_iᴴΨ_k p_i + σ²t_k − 2Re{f_kᴴp_k} + u_k] − υ_k + 1 − κ
//! ξ_ck = κ[p_cᴴΨ_ck p_c + Σ_i p_iᴴΨ_ck p_i + σ²t_ck − 2Re{f_ckᴴp_c} + u_ck] − υ_ck + 1 − κ
//! ```
//!
//! with `κ = 1/ln 2`. Three problem structures are supported:
//!
//! * rate-splitting: `min ξ_c + Σ w_k ξ_k` s.t. `ξ_ck ≤ ξ_c`, `‖P‖² ≤ Pt`;
//! * private-only: `p_c = 0`, `min Σ w_k ξ_k` s.t. `‖P‖² ≤ Pt`;
//! * common-rate split: `min Σ w_k (ξ_k − C_k)` s.t. `ξ_ck + Σ_j C_j ≤ 1`,
//!   `C ≥ 0`, `‖P‖² ≤ Pt`.
//!
//! Problems are embedded in real space and handed to the dense
//! interior-point method in [`ipm`]; [`check_kkt`] re-derives the optimality
//! conditions in the complex domain.

mod cone;
pub mod dump;
pub mod ipm;
mod kkt;

pub use kkt::{check_kkt, KktReport};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::precoder::{Mode, Precoder};
use crate::saa::{SafBundle, UserSafs};
use crate::scalar::{cx, czero, hermitian_form, inner, CMatrix, CVector, Cx, Real};

use ipm::{ConvexProgram, IpmSettings, IpmStatus, Quadratic};

#[inline]
pub(crate) fn kappa<T: Real>() -> T {
    T::one() / T::ln_2()
}

/// Problem data of one precoder update.
#[derive(Debug, Clone, PartialEq)]
pub struct QcqpProblem<T: Real> {
    pub safs: SafBundle<T>,
    pub sigma_n2: T,
    pub pt: T,
    /// Per-user objective weights (all ones for the sum-rate problem).
    pub weights: Vec<T>,
    pub mode: Mode,
    /// Replace the common epigraph by nonnegative per-user common-rate shares.
    pub common_rate_split: bool,
}

/// Augmented WMSEs of every user at a given precoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Awmse<T: Real> {
    pub common: Vec<T>,
    pub private: Vec<T>,
}

impl<T: Real> Awmse<T> {
    pub fn max_common(&self) -> T {
        self.common.iter().copied().reduce(|a, b| a.max(b)).unwrap_or(T::zero())
    }
}

/// Objective of a precoder with the auxiliary variables at their best values.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<T: Real> {
    pub objective: T,
    /// `max_k ξ_ck` (zero without a common stream).
    pub xi_c: T,
    /// Common-rate shares (empty unless the split structure is used).
    pub split: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Certified,
    /// Interior-point iteration stalled near the optimum; the relaxed
    /// tolerances are met.
    Inaccurate,
    /// Best iterate returned without a certificate.
    MaxIterations,
}

impl SolveStatus {
    pub fn label(self) -> &'static str {
        match self {
            SolveStatus::Certified => "certified",
            SolveStatus::Inaccurate => "inaccurate",
            SolveStatus::MaxIterations => "max-iterations",
        }
    }
}

/// Lagrange multipliers in the units of the original problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Duals<T: Real> {
    /// One per common constraint (`ξ_ck ≤ ξ_c` or `ξ_ck + ΣC ≤ 1`).
    pub common: Vec<T>,
    /// Power constraint `‖P‖² ≤ Pt`.
    pub power: T,
    /// `C_k ≥ 0` (split structure only).
    pub split: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QcqpSolution<T: Real> {
    pub precoder: Precoder<T>,
    pub xi_c: T,
    pub split: Vec<T>,
    pub objective: T,
    pub duals: Duals<T>,
    /// Largest relative residual reported by [`check_kkt`].
    pub kkt_residual: T,
    /// `−Σ λ_i f_i` on the scaled problem.
    pub duality_gap: T,
    pub status: SolveStatus,
    pub iterations: usize,
}

impl<T: Real> QcqpProblem<T> {
    pub fn new(
        safs: SafBundle<T>,
        sigma_n2: T,
        pt: T,
        weights: Vec<T>,
        mode: Mode,
        common_rate_split: bool,
    ) -> Result<Self> {
        let prob = Self {
            safs,
            sigma_n2,
            pt,
            weights,
            mode,
            common_rate_split,
        };
        prob.validate()?;
        Ok(prob)
    }

    /// Unit-weight sum-rate problem.
    pub fn sum_rate(safs: SafBundle<T>, sigma_n2: T, pt: T, mode: Mode) -> Result<Self> {
        let k = safs.k();
        Self::new(safs, sigma_n2, pt, vec![T::one(); k], mode, false)
    }

    pub fn k(&self) -> usize {
        self.safs.k()
    }

    pub fn nt(&self) -> usize {
        self.safs.nt()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        let nt = self.nt();
        if k == 0 || nt == 0 {
            return Err(Error::Dimension("empty problem".into()));
        }
        if self.weights.len() != k {
            return Err(Error::Dimension(format!(
                "{} weights for {k} users",
                self.weights.len()
            )));
        }
        for (i, u) in self.safs.users.iter().enumerate() {
            let shapes_ok = u.psi.shape() == (nt, nt)
                && u.psi_c.shape() == (nt, nt)
                && u.f.len() == nt
                && u.f_c.len() == nt;
            if !shapes_ok {
                return Err(Error::Dimension(format!("user {i} SAFs have inconsistent shapes")));
            }
        }
        if !(self.pt > T::zero()) || !self.pt.is_finite() {
            return Err(Error::Infeasible(format!(
                "power budget must be positive, got {:e}",
                self.pt
            )));
        }
        if self.weights.iter().any(|w| !(*w > T::zero()) || !w.is_finite()) {
            return Err(Error::InvalidConfig("weights must be positive and finite".into()));
        }
        if self.common_rate_split && self.mode == Mode::NoRs {
            return Err(Error::InvalidConfig(
                "common-rate split requires a common stream".into(),
            ));
        }
        Ok(())
    }

    fn private_constant(&self, u: &UserSafs<T>) -> T {
        let k = kappa::<T>();
        k * (self.sigma_n2 * u.t + u.u) - u.ups + T::one() - k
    }

    fn common_constant(&self, u: &UserSafs<T>) -> T {
        let k = kappa::<T>();
        k * (self.sigma_n2 * u.t_c + u.u_c) - u.ups_c + T::one() - k
    }

    /// Exact augmented WMSEs at `p` (the common stream is ignored in
    /// private-only mode).
    pub fn awmse(&self, p: &Precoder<T>) -> Awmse<T> {
        let kp = kappa::<T>();
        let two = T::one() + T::one();
        let k = self.k();
        let streams: Vec<Vec<Cx<T>>> = (1..=k).map(|i| p.stream(i)).collect();
        let common = p.stream(0);
        let mut out = Awmse {
            common: Vec::with_capacity(k),
            private: Vec::with_capacity(k),
        };
        for (j, u) in self.safs.users.iter().enumerate() {
            let spread: T = streams.iter().map(|s| hermitian_form(&u.psi, s)).fold(T::zero(), |a, b| a + b);
            let lin = inner(u.f.iter(), streams[j].iter()).re;
            out.private
                .push(kp * (spread - two * lin) + self.private_constant(u));
            let spread_c: T = streams
                .iter()
                .map(|s| hermitian_form(&u.psi_c, s))
                .fold(T::zero(), |a, b| a + b);
            let (own, lin_c) = if self.mode == Mode::Rs {
                (hermitian_form(&u.psi_c, &common), inner(u.f_c.iter(), common.iter()).re)
            } else {
                (T::zero(), T::zero())
            };
            out.common
                .push(kp * (own + spread_c - two * lin_c) + self.common_constant(u));
        }
        out
    }

    /// Objective at `p`, with `ξ_c` or the common-rate shares chosen
    /// optimally for that precoder. For the split structure the leftover
    /// common budget `1 − max ξ_ck` goes to the highest-weight user; a
    /// negative budget is reported as a zero split with a positive
    /// infeasibility (see [`Self::split_violation`]).
    pub fn evaluate(&self, p: &Precoder<T>) -> Evaluation<T> {
        let a = self.awmse(p);
        let weighted: T = self
            .weights
            .iter()
            .zip(&a.private)
            .fold(T::zero(), |acc, (w, x)| acc + *w * *x);
        match (self.mode, self.common_rate_split) {
            (Mode::NoRs, _) => Evaluation {
                objective: weighted,
                xi_c: T::zero(),
                split: Vec::new(),
            },
            (Mode::Rs, false) => {
                let xi_c = a.max_common();
                Evaluation {
                    objective: xi_c + weighted,
                    xi_c,
                    split: Vec::new(),
                }
            }
            (Mode::Rs, true) => {
                let xi_c = a.max_common();
                let budget = (T::one() - xi_c).max(T::zero());
                let mut split = vec![T::zero(); self.k()];
                let top = argmax(&self.weights);
                split[top] = budget;
                Evaluation {
                    objective: weighted - self.weights[top] * budget,
                    xi_c,
                    split,
                }
            }
        }
    }

    /// Objective for given auxiliary variables (no re-optimization).
    pub fn objective_with(&self, p: &Precoder<T>, xi_c: T, split: &[T]) -> T {
        let a = self.awmse(p);
        let weighted = self
            .weights
            .iter()
            .zip(&a.private)
            .fold(T::zero(), |acc, (w, x)| acc + *w * *x);
        match (self.mode, self.common_rate_split) {
            (Mode::NoRs, _) => weighted,
            (Mode::Rs, false) => xi_c + weighted,
            (Mode::Rs, true) => self
                .weights
                .iter()
                .zip(split)
                .fold(weighted, |acc, (w, c)| acc - *w * *c),
        }
    }

    fn layout(&self) -> Layout {
        Layout {
            nt: self.nt(),
            k: self.k(),
            common: self.mode == Mode::Rs,
            extras: match (self.mode, self.common_rate_split) {
                (Mode::NoRs, _) => 0,
                (Mode::Rs, false) => 1,
                (Mode::Rs, true) => self.k(),
            },
        }
    }

    /// Real-space program over `z = [y_streams…, extras…]` with `x = √Pt·y`.
    fn real_program(&self, lay: &Layout) -> ScaledProgram<T> {
        let n = lay.dim();
        let kp = kappa::<T>();
        let two = T::one() + T::one();
        let pt = self.pt;
        let sq = pt.sqrt();
        let quad = two * kp * pt;
        let lin = -two * kp * sq;

        let mut obj_h = DMatrix::zeros(n, n);
        let mut obj_g = DVector::zeros(n);
        let mut obj_c = T::zero();
        let mut psi_sum = CMatrix::from_element(lay.nt, lay.nt, czero());
        for (w, u) in self.weights.iter().zip(&self.safs.users) {
            psi_sum += u.psi.map(|z| z * *w);
        }
        for i in 0..lay.k {
            add_hermitian(&mut obj_h, &psi_sum, lay.private(i), quad);
            let u = &self.safs.users[i];
            add_linear(&mut obj_g, &u.f, lay.private(i), lin * self.weights[i]);
            obj_c += self.weights[i] * self.private_constant(u);
        }

        let mut constraints = Vec::new();
        match (self.mode, self.common_rate_split) {
            (Mode::NoRs, _) => {}
            (Mode::Rs, false) => {
                obj_g[lay.extra(0)] = T::one();
                for u in &self.safs.users {
                    let mut c = self.common_real(lay, u, quad, lin);
                    c.grad[lay.extra(0)] = -T::one();
                    constraints.push(c);
                }
            }
            (Mode::Rs, true) => {
                for j in 0..lay.k {
                    obj_g[lay.extra(j)] = -self.weights[j];
                }
                for u in &self.safs.users {
                    let mut c = self.common_real(lay, u, quad, lin);
                    for j in 0..lay.k {
                        c.grad[lay.extra(j)] = T::one();
                    }
                    c.constant -= T::one();
                    constraints.push(c);
                }
                for j in 0..lay.k {
                    let mut g = DVector::zeros(n);
                    g[lay.extra(j)] = -T::one();
                    constraints.push(Quadratic::linear(g, T::zero()));
                }
            }
        }
        let mut ball = DMatrix::zeros(n, n);
        for i in 0..lay.precoder_dim() {
            ball[(i, i)] = two;
        }
        constraints.push(Quadratic {
            hess: Some(ball),
            grad: DVector::zeros(n),
            constant: -T::one(),
        });

        let mut objective = Quadratic {
            hess: Some(obj_h),
            grad: obj_g,
            constant: obj_c,
        };
        let obj_scale = T::one() / T::one().max(objective.magnitude());
        objective.scale(obj_scale);
        let mut scales = Vec::with_capacity(constraints.len());
        for c in constraints.iter_mut() {
            let a = T::one() / T::one().max(c.magnitude());
            c.scale(a);
            scales.push(a);
        }
        ScaledProgram {
            program: ConvexProgram {
                objective,
                constraints,
            },
            obj_scale,
            scales,
        }
    }

    fn common_real(&self, lay: &Layout, u: &UserSafs<T>, quad: T, lin: T) -> Quadratic<T> {
        let n = lay.dim();
        let mut h = DMatrix::zeros(n, n);
        let mut g = DVector::zeros(n);
        add_hermitian(&mut h, &u.psi_c, lay.common_block(), quad);
        for i in 0..lay.k {
            add_hermitian(&mut h, &u.psi_c, lay.private(i), quad);
        }
        add_linear(&mut g, &u.f_c, lay.common_block(), lin);
        Quadratic {
            hess: Some(h),
            grad: g,
            constant: self.common_constant(u),
        }
    }

    /// Solves the update, warm-started from `warm_start` when given (scaled
    /// into the power ball first).
    pub fn solve(&self, warm_start: Option<&Precoder<T>>) -> Result<QcqpSolution<T>> {
        self.solve_with(warm_start, &IpmSettings::default())
    }

    pub fn solve_with(
        &self,
        warm_start: Option<&Precoder<T>>,
        settings: &IpmSettings<T>,
    ) -> Result<QcqpSolution<T>> {
        self.validate()?;
        let lay = self.layout();
        let scaled = self.real_program(&lay);
        let nt = lay.nt;
        let k = lay.k;

        let start = match warm_start {
            Some(p) if p.nt() == nt && p.k() == k => p.scaled_into_ball(self.pt, T::of(0.9)),
            Some(p) => {
                return Err(Error::Dimension(format!(
                    "warm start is {}×{} but the problem is {nt}×{k}",
                    p.nt(),
                    p.k()
                )))
            }
            None => Precoder::zeros(nt, k, self.mode),
        };
        let mut z0 = DVector::zeros(lay.dim());
        let inv_sq = T::one() / self.pt.sqrt();
        if lay.common {
            put_block(&mut z0, lay.common_block(), &start.common, inv_sq);
        }
        for i in 0..k {
            put_block(&mut z0, lay.private(i), &start.private.column(i).into_owned(), inv_sq);
        }
        if lay.extras > 0 {
            let start = Precoder {
                mode: self.mode,
                ..start.clone()
            };
            let worst = self.awmse(&start).max_common();
            if self.common_rate_split {
                // an interior split when the start leaves common budget
                let share = (T::one() - worst).max(T::zero()) / T::of(2.0 * k as f64);
                for j in 0..k {
                    z0[lay.extra(j)] = share;
                }
            } else {
                z0[lay.extra(0)] = worst + T::one();
            }
        }

        let out = ipm::solve(&scaled.program, &z0, settings);

        let sq = self.pt.sqrt();
        let common = if lay.common {
            get_block(&out.z, lay.common_block(), nt, sq)
        } else {
            CVector::from_element(nt, czero())
        };
        let mut private = CMatrix::from_element(nt, k, czero());
        for i in 0..k {
            private.set_column(i, &get_block(&out.z, lay.private(i), nt, sq));
        }
        let mut precoder = Precoder {
            common,
            private,
            mode: self.mode,
        };
        if precoder.power() > self.pt {
            precoder = precoder.scaled((self.pt / precoder.power()).sqrt());
        }

        let unscale = |i: usize| out.lambda[i] * scaled.scales[i] / scaled.obj_scale;
        let n_common = if lay.common { k } else { 0 };
        let mut duals = Duals {
            common: (0..n_common).map(unscale).collect(),
            power: unscale(scaled.scales.len() - 1) / self.pt,
            split: Vec::new(),
        };
        let a = self.awmse(&precoder);
        let xi_c = if lay.common { a.max_common() } else { T::zero() };
        let mut split = Vec::new();
        if self.common_rate_split {
            duals.split = (0..k).map(|j| unscale(k + j)).collect();
            split = (0..k).map(|j| out.z[lay.extra(j)].max(T::zero())).collect();
            // remove any residual overshoot of the shared budget, largest
            // shares first
            let mut excess = xi_c + split.iter().fold(T::zero(), |s, c| s + *c) - T::one();
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&x, &y| split[y].partial_cmp(&split[x]).unwrap_or(std::cmp::Ordering::Equal));
            for j in order {
                if excess <= T::zero() {
                    break;
                }
                let cut = excess.min(split[j]);
                split[j] -= cut;
                excess -= cut;
            }
        }
        let objective = self.objective_with(&precoder, xi_c, &split);
        let status = match out.status {
            IpmStatus::Converged => SolveStatus::Certified,
            IpmStatus::ConvergedInaccurate => SolveStatus::Inaccurate,
            IpmStatus::MaxIterations => SolveStatus::MaxIterations,
        };
        let mut sol = QcqpSolution {
            precoder,
            xi_c,
            split,
            objective,
            duals,
            kkt_residual: T::zero(),
            duality_gap: out.gap,
            status,
            iterations: out.iterations,
        };
        sol.kkt_residual = check_kkt(self, &sol).max();
        Ok(sol)
    }

    /// Converts every SAF to another scalar type.
    pub fn cast<S: Real>(&self) -> QcqpProblem<S> {
        let c = |x: T| S::of(x.as_f64());
        QcqpProblem {
            safs: SafBundle {
                users: self
                    .safs
                    .users
                    .iter()
                    .map(|u| UserSafs {
                        psi_c: crate::scalar::cast_cmatrix(&u.psi_c),
                        psi: crate::scalar::cast_cmatrix(&u.psi),
                        f_c: crate::scalar::cast_cvector(&u.f_c),
                        f: crate::scalar::cast_cvector(&u.f),
                        t_c: c(u.t_c),
                        t: c(u.t),
                        u_c: c(u.u_c),
                        u: c(u.u),
                        ups_c: c(u.ups_c),
                        ups: c(u.ups),
                    })
                    .collect(),
            },
            sigma_n2: c(self.sigma_n2),
            pt: c(self.pt),
            weights: self.weights.iter().map(|w| c(*w)).collect(),
            mode: self.mode,
            common_rate_split: self.common_rate_split,
        }
    }
}

fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

struct ScaledProgram<T: Real> {
    program: ConvexProgram<T>,
    obj_scale: T,
    scales: Vec<T>,
}

/// Index map of the real variable vector: stream blocks of `2Nt` entries
/// (`[Re; Im]`) followed by the scalar auxiliaries.
struct Layout {
    nt: usize,
    k: usize,
    common: bool,
    extras: usize,
}

impl Layout {
    fn streams(&self) -> usize {
        self.k + usize::from(self.common)
    }

    fn precoder_dim(&self) -> usize {
        2 * self.nt * self.streams()
    }

    fn dim(&self) -> usize {
        self.precoder_dim() + self.extras
    }

    fn common_block(&self) -> usize {
        debug_assert!(self.common);
        0
    }

    fn private(&self, i: usize) -> usize {
        2 * self.nt * (i + usize::from(self.common))
    }

    fn extra(&self, j: usize) -> usize {
        self.precoder_dim() + j
    }
}

/// Adds `scale·[[Re Ψ, −Im Ψ], [Im Ψ, Re Ψ]]` at block offset `b`.
fn add_hermitian<T: Real>(h: &mut DMatrix<T>, psi: &CMatrix<T>, b: usize, scale: T) {
    let n = psi.nrows();
    for i in 0..n {
        for j in 0..n {
            let z = psi[(i, j)];
            h[(b + i, b + j)] += scale * z.re;
            h[(b + i, b + n + j)] -= scale * z.im;
            h[(b + n + i, b + j)] += scale * z.im;
            h[(b + n + i, b + n + j)] += scale * z.re;
        }
    }
}

/// Adds `scale·[Re f; Im f]` at block offset `b` (so that `gᵀz = scale·Re{fᴴp}`).
fn add_linear<T: Real>(g: &mut DVector<T>, f: &CVector<T>, b: usize, scale: T) {
    let n = f.len();
    for i in 0..n {
        g[b + i] += scale * f[i].re;
        g[b + n + i] += scale * f[i].im;
    }
}

fn put_block<T: Real>(z: &mut DVector<T>, b: usize, p: &CVector<T>, scale: T) {
    let n = p.len();
    for i in 0..n {
        z[b + i] = p[i].re * scale;
        z[b + n + i] = p[i].im * scale;
    }
}

fn get_block<T: Real>(z: &DVector<T>, b: usize, n: usize, scale: T) -> CVector<T> {
    CVector::from_fn(n, |i, _| cx(z[b + i] * scale, z[b + n + i] * scale))
}

#[cfg(test)]
mod tests;
