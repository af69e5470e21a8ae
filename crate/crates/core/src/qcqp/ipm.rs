//! Dense primal-dual interior-point method for small convex programs with a
//! quadratic objective and convex quadratic inequality constraints.
//!
//! ```text
//! minimize    ½ zᵀH₀z + g₀ᵀz + c₀
//! subject to  ½ zᵀHᵢz + gᵢᵀz + cᵢ ≤ 0,   Hᵢ ⪰ 0
//! ```
//!
//! Every quadratic constraint is rewritten as a second-order cone: with
//! `Hᵢ = LLᵀ` and `w = −2(gᵢᵀz + cᵢ)`,
//!
//! ```text
//! ‖Lᵀz‖² ≤ w   ⇔   ‖(Lᵀz, (w − 1)/2)‖ ≤ (w + 1)/2,
//! ```
//!
//! and linear constraints become nonnegative-orthant rows. The resulting cone
//! QP `min ½xᵀPx + qᵀx  s.t.  Gx + s = h, s ⪰ 0` is solved with
//! Nesterov–Todd scaling and Mehrotra predictor-corrector steps from an
//! infeasible start.

use nalgebra::{DMatrix, DVector};

use crate::scalar::Real;

use super::cone::{Cones, Scaling};

/// `½ zᵀHz + gᵀz + c`; `hess = None` means a linear function.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic<T: Real> {
    pub hess: Option<DMatrix<T>>,
    pub grad: DVector<T>,
    pub constant: T,
}

impl<T: Real> Quadratic<T> {
    pub fn linear(grad: DVector<T>, constant: T) -> Self {
        Self {
            hess: None,
            grad,
            constant,
        }
    }

    pub fn value(&self, z: &DVector<T>) -> T {
        let half = T::of(0.5);
        let quad = self
            .hess
            .as_ref()
            .map_or(T::zero(), |h| half * z.dot(&(h * z)));
        quad + self.grad.dot(z) + self.constant
    }

    pub fn gradient(&self, z: &DVector<T>) -> DVector<T> {
        match &self.hess {
            Some(h) => h * z + &self.grad,
            None => self.grad.clone(),
        }
    }

    /// Multiplies every coefficient by `s`.
    pub fn scale(&mut self, s: T) {
        if let Some(h) = self.hess.as_mut() {
            *h *= s;
        }
        self.grad *= s;
        self.constant *= s;
    }

    /// Largest absolute Hessian or gradient coefficient.
    pub fn magnitude(&self) -> T {
        let g = self.grad.amax();
        self.hess.as_ref().map_or(g, |h| h.amax().max(g))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexProgram<T: Real> {
    pub objective: Quadratic<T>,
    pub constraints: Vec<Quadratic<T>>,
}

impl<T: Real> ConvexProgram<T> {
    pub fn dim(&self) -> usize {
        self.objective.grad.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpmSettings<T: Real> {
    pub tol_feas: T,
    pub tol_gap: T,
    pub max_iters: usize,
}

impl<T: Real> Default for IpmSettings<T> {
    fn default() -> Self {
        Self {
            tol_feas: T::solver_tol(),
            tol_gap: T::solver_tol(),
            max_iters: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpmStatus {
    Converged,
    /// Progress stalled at a point that meets the relaxed tolerances.
    ConvergedInaccurate,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpmOutcome<T: Real> {
    pub z: DVector<T>,
    pub lambda: DVector<T>,
    /// `−fᵢ(z)` per constraint
    pub slack: DVector<T>,
    pub iterations: usize,
    pub status: IpmStatus,
    /// `‖∇f₀ + Σ λᵢ∇fᵢ‖∞`
    pub dual_residual: T,
    /// `‖max(f, 0)‖∞`
    pub primal_residual: T,
    /// Conic duality gap `sᵀz`.
    pub gap: T,
}

/// Where each original constraint lives in the cone vector.
#[derive(Debug, Clone, Copy)]
enum Row {
    Linear(usize),
    Soc { start: usize, dim: usize },
}

struct ConeQp<T: Real> {
    p: DMatrix<T>,
    q: DVector<T>,
    g: DMatrix<T>,
    h: DVector<T>,
    cones: Cones,
    rows: Vec<Row>,
}

/// `L` with `H = LLᵀ` from the eigen-decomposition, dropping directions of
/// negligible curvature.
fn factor<T: Real>(h: &DMatrix<T>) -> DMatrix<T> {
    let n = h.nrows();
    let sym = (h + h.transpose()) * T::of(0.5);
    let eig = sym.symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(T::zero(), |a, v| a.max(*v));
    let cut = top * T::default_epsilon() * T::of(n as f64 * 10.0);
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > cut).collect();
    DMatrix::from_fn(n, keep.len(), |r, c| {
        let i = keep[c];
        eig.eigenvectors[(r, i)] * eig.eigenvalues[i].sqrt()
    })
}

fn to_cone_qp<T: Real>(prog: &ConvexProgram<T>) -> ConeQp<T> {
    let n = prog.dim();
    let half = T::of(0.5);
    let linear: Vec<usize> = (0..prog.constraints.len())
        .filter(|&i| prog.constraints[i].hess.is_none())
        .collect();
    let factors: Vec<Option<DMatrix<T>>> = prog
        .constraints
        .iter()
        .map(|c| c.hess.as_ref().map(factor))
        .collect();
    let l = linear.len();
    let soc_dims: Vec<usize> = factors.iter().flatten().map(|f| f.ncols() + 2).collect();
    let m = l + soc_dims.iter().sum::<usize>();
    let mut g = DMatrix::zeros(m, n);
    let mut h = DVector::zeros(m);
    let mut rows = vec![Row::Linear(0); prog.constraints.len()];
    for (row, &i) in linear.iter().enumerate() {
        let c = &prog.constraints[i];
        g.row_mut(row).copy_from(&c.grad.transpose());
        h[row] = -c.constant;
        rows[i] = Row::Linear(row);
    }
    let mut start = l;
    for (i, c) in prog.constraints.iter().enumerate() {
        let Some(lf) = &factors[i] else { continue };
        let dim = lf.ncols() + 2;
        // s₀ = ½ − c − gᵀz,  s_y = Lᵀz,  s_last = −½ − c − gᵀz
        g.row_mut(start).copy_from(&c.grad.transpose());
        h[start] = half - c.constant;
        for r in 0..lf.ncols() {
            g.row_mut(start + 1 + r).copy_from(&(-lf.column(r)).transpose());
        }
        g.row_mut(start + dim - 1).copy_from(&c.grad.transpose());
        h[start + dim - 1] = -half - c.constant;
        rows[i] = Row::Soc { start, dim };
        start += dim;
    }
    ConeQp {
        p: prog.objective.hess.clone().unwrap_or_else(|| DMatrix::zeros(n, n)),
        q: prog.objective.grad.clone(),
        g,
        h,
        cones: Cones { l, socs: soc_dims },
        rows,
    }
}

/// Solves `prog` from the primal point `z0` (which need not be feasible).
pub fn solve<T: Real>(prog: &ConvexProgram<T>, z0: &DVector<T>, settings: &IpmSettings<T>) -> IpmOutcome<T> {
    let qp = to_cone_qp(prog);
    let cones = &qp.cones;
    let n = prog.dim();
    let one = T::one();
    let zero = T::zero();
    let deg = T::of(cones.degree().max(1) as f64);
    let relaxed = settings.tol_feas.sqrt().min(T::of(1e-6)).max(settings.tol_feas);

    let mut x = z0.clone();
    let mut s = &qp.h - &qp.g * &x;
    let shift = -cones.min_eig(&s);
    if shift >= zero {
        s += cones.identity::<T>() * (one + shift);
    }
    let mut z = cones.identity::<T>();

    let mut p_reg = qp.p.clone();
    // tiny curvature keeps the reduced system definite in directions no
    // function touches
    let reg = T::default_epsilon().sqrt() * T::of(1e-3);
    for i in 0..n {
        p_reg[(i, i)] += reg;
    }

    let outcome = |x: &DVector<T>, s: &DVector<T>, z: &DVector<T>, iter: usize, status: IpmStatus| {
        let mut lambda = DVector::zeros(prog.constraints.len());
        let mut r_d = prog.objective.gradient(x);
        let mut slack = DVector::zeros(prog.constraints.len());
        let mut primal = zero;
        for (i, c) in prog.constraints.iter().enumerate() {
            lambda[i] = match qp.rows[i] {
                Row::Linear(r) => z[r],
                Row::Soc { start, dim } => z[start] + z[start + dim - 1],
            };
            r_d.axpy(lambda[i], &c.gradient(x), one);
            let v = c.value(x);
            slack[i] = -v;
            primal = primal.max(v);
        }
        IpmOutcome {
            z: x.clone(),
            lambda,
            slack,
            iterations: iter,
            status,
            dual_residual: r_d.amax(),
            primal_residual: primal,
            gap: s.dot(z),
        }
    };

    let mut best: Option<(T, DVector<T>, DVector<T>, DVector<T>, usize)> = None;
    for iter in 0..=settings.max_iters {
        let r_x = &qp.p * &x + &qp.q + qp.g.transpose() * &z;
        let r_z = &s + &qp.g * &x - &qp.h;
        let gap = s.dot(&z);
        let mu = gap / deg;
        let (rx_n, rz_n) = (r_x.amax(), r_z.amax());
        let merit = rx_n.max(rz_n).max(mu);
        if best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, x.clone(), s.clone(), z.clone(), iter));
        }
        if rx_n <= settings.tol_feas && rz_n <= settings.tol_feas && mu <= settings.tol_gap {
            return polish(prog, outcome(&x, &s, &z, iter, IpmStatus::Converged));
        }
        if iter == settings.max_iters {
            break;
        }

        let Some(w) = Scaling::new(cones, &s, &z) else { break };
        let lam = w.lambda();
        let g_t = w.apply_inv(&qp.g);
        let kkt = &p_reg + g_t.transpose() * &g_t;
        let Some(chol) = kkt.cholesky() else { break };
        let winv_rz = w.apply_inv_vec(&r_z);

        // returns (Δx, Δs, Δz, Δs̃, Δz̃) for the complementarity rhs r_λ
        let newton = |r_lam: &DVector<T>| {
            let t = cones.inv_prod(&lam, r_lam);
            let rhs = -(&r_x + g_t.transpose() * (&winv_rz + &t));
            let dx = chol.solve(&rhs);
            let dz_t = &g_t * &dx + &winv_rz + &t;
            let ds_t = &t - &dz_t;
            let dz = w.apply_inv_vec(&dz_t);
            let ds = w.apply_vec(&ds_t);
            (dx, ds, dz, ds_t, dz_t)
        };

        let ll = cones.prod(&lam, &lam);
        let (_, ds_a, dz_a, ds_ta, dz_ta) = newton(&-&ll);
        let a_aff = cones.max_step(&s, &ds_a).min(cones.max_step(&z, &dz_a)).min(one);
        let mu_aff = (&s + &ds_a * a_aff).dot(&(&z + &dz_a * a_aff)) / deg;
        let ratio = (mu_aff / mu).max(zero).min(one);
        let sigma = ratio * ratio * ratio;
        let target = (sigma * mu).max(T::of(0.1) * settings.tol_gap);
        let corr = cones.prod(&ds_ta, &dz_ta);
        let r_lam = cones.identity::<T>() * target - &ll - corr;
        let (dx, ds, dz, _, _) = newton(&r_lam);
        let alpha = (T::of(0.99) * cones.max_step(&s, &ds).min(cones.max_step(&z, &dz))).min(one);
        if alpha <= T::of(1e-12) {
            break;
        }
        x.axpy(alpha, &dx, one);
        s.axpy(alpha, &ds, one);
        z.axpy(alpha, &dz, one);
    }

    let (_, bx, bs, bz, iter) = best.expect("at least one iterate");
    let mut out = outcome(&bx, &bs, &bz, iter, IpmStatus::MaxIterations);
    let r_z = (&bs + &qp.g * &bx - &qp.h).amax();
    let mu = out.gap / deg;
    if out.dual_residual <= relaxed && r_z <= relaxed && mu <= relaxed {
        out.status = IpmStatus::ConvergedInaccurate;
        out = polish(prog, out);
    }
    out
}

/// `max(‖∇L‖∞, max fᵢ⁺, max |λᵢ fᵢ|, max λᵢ⁻)`
fn kkt_error<T: Real>(prog: &ConvexProgram<T>, z: &DVector<T>, lambda: &DVector<T>) -> T {
    let mut r_d = prog.objective.gradient(z);
    let mut err = T::zero();
    for (i, c) in prog.constraints.iter().enumerate() {
        r_d.axpy(lambda[i], &c.gradient(z), T::one());
        let v = c.value(z);
        err = err.max(v).max((lambda[i] * v).abs()).max(-lambda[i]);
    }
    err.max(r_d.amax())
}

/// Newton refinement of an interior-point solution on the equality system
/// of its active set. Cone solutions are accurate to about the square root
/// of the gap along the cone boundaries; a few Newton steps on the original
/// quadratic constraints restore full precision. The refinement is kept
/// only if it reduces the KKT error without breaking feasibility or sign
/// conditions.
fn polish<T: Real>(prog: &ConvexProgram<T>, out: IpmOutcome<T>) -> IpmOutcome<T> {
    let start_err = kkt_error(prog, &out.z, &out.lambda);
    let mut best_err = start_err;
    let mut best = None;
    // Near-degenerate constraints (λ and slack both tiny) are ambiguous, so
    // try a few thresholds for the active-set guess and keep the best.
    let mut tried: Vec<Vec<usize>> = Vec::new();
    for ratio in [1.0, 1e-2, 1e-4] {
        let ratio = T::from_f64(ratio).unwrap();
        let active: Vec<usize> = (0..prog.constraints.len())
            .filter(|&i| out.lambda[i] > out.slack[i] * ratio)
            .collect();
        if tried.contains(&active) {
            continue;
        }
        if let Some((err, z, lambda)) = newton_on_active(prog, &out, &active) {
            if err < best_err {
                best_err = err;
                best = Some((z, lambda));
            }
        }
        tried.push(active);
    }
    match best {
        Some((z, lambda)) => {
            let slack = DVector::from_fn(prog.constraints.len(), |i, _| -prog.constraints[i].value(&z));
            let mut r_d = prog.objective.gradient(&z);
            for (i, c) in prog.constraints.iter().enumerate() {
                r_d.axpy(lambda[i], &c.gradient(&z), T::one());
            }
            IpmOutcome {
                gap: slack.dot(&lambda),
                primal_residual: slack.iter().fold(T::zero(), |a, v| a.max(-*v)),
                dual_residual: r_d.amax(),
                z,
                lambda,
                slack,
                ..out
            }
        }
        None => out,
    }
}

/// Newton iterations on the equality KKT system of a guessed active set.
/// Returns the best iterate with its KKT error.
fn newton_on_active<T: Real>(
    prog: &ConvexProgram<T>,
    out: &IpmOutcome<T>,
    active: &[usize],
) -> Option<(T, DVector<T>, DVector<T>)> {
    let n = prog.dim();
    let active = independent_subset(prog, &out.z, active);
    let na = active.len();
    let mut z = out.z.clone();
    let mut lambda = DVector::zeros(prog.constraints.len());
    for &i in &active {
        lambda[i] = out.lambda[i];
    }
    let mut best: Option<(T, DVector<T>, DVector<T>)> = None;
    for _ in 0..6 {
        let mut kkt = DMatrix::zeros(n + na, n + na);
        let mut rhs = DVector::zeros(n + na);
        let mut h = prog.objective.hess.clone().unwrap_or_else(|| DMatrix::zeros(n, n));
        let mut r_d = prog.objective.gradient(&z);
        for (i, c) in prog.constraints.iter().enumerate() {
            if lambda[i] != T::zero() {
                r_d.axpy(lambda[i], &c.gradient(&z), T::one());
                if let Some(hi) = &c.hess {
                    h += hi * lambda[i];
                }
            }
        }
        kkt.view_mut((0, 0), (n, n)).copy_from(&h);
        rhs.rows_mut(0, n).copy_from(&-r_d);
        for (a, &i) in active.iter().enumerate() {
            let c = &prog.constraints[i];
            let g = c.gradient(&z);
            kkt.view_mut((0, n + a), (n, 1)).copy_from(&g);
            kkt.view_mut((n + a, 0), (1, n)).copy_from(&g.transpose());
            rhs[n + a] = -c.value(&z);
        }
        let Some(step) = kkt.lu().solve(&rhs) else { break };
        z += step.rows(0, n);
        for (a, &i) in active.iter().enumerate() {
            lambda[i] += step[n + a];
        }
        let err = kkt_error(prog, &z, &lambda);
        if !err.is_finite() {
            break;
        }
        if best.as_ref().is_none_or(|b| err < b.0) {
            best = Some((err, z.clone(), lambda.clone()));
        }
    }
    best
}

/// Drops constraints whose gradients at `z` are linear combinations of
/// earlier ones (e.g. identical common-stream constraints once the common
/// precoder has collapsed), which would make the Newton system singular.
fn independent_subset<T: Real>(prog: &ConvexProgram<T>, z: &DVector<T>, active: &[usize]) -> Vec<usize> {
    let tol = T::from_f64(1e-9).unwrap();
    let mut basis: Vec<DVector<T>> = Vec::new();
    let mut kept = Vec::new();
    for &i in active {
        let g = prog.constraints[i].gradient(z);
        let norm = g.norm();
        let mut r = g;
        for b in &basis {
            let c = b.dot(&r);
            r.axpy(-c, b, T::one());
        }
        let rn = r.norm();
        if rn > tol * norm && rn > T::zero() {
            basis.push(r / rn);
            kept.push(i);
        }
    }
    kept
}
