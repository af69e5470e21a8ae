//! Independent optimality check of a precoder-update solution, evaluated
//! directly on the complex-valued problem.

use crate::precoder::Mode;
use crate::scalar::{czero, CMatrix, CVector, Real};

use super::{kappa, QcqpProblem, QcqpSolution};

/// Relative KKT residuals; every field is dimensionless.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport<T: Real> {
    pub stationarity: T,
    pub primal_feasibility: T,
    pub dual_feasibility: T,
    pub complementarity: T,
}

impl<T: Real> KktReport<T> {
    pub fn max(&self) -> T {
        self.stationarity
            .max(self.primal_feasibility)
            .max(self.dual_feasibility)
            .max(self.complementarity)
    }
}

fn mat_vec<T: Real>(a: &CMatrix<T>, x: &CVector<T>, s: T) -> CVector<T> {
    (a * x).map(|z| z * s)
}

fn amax<T: Real>(v: &CVector<T>) -> T {
    v.iter().fold(T::zero(), |a, z| a.max(z.norm_sqr().sqrt()))
}

/// Recomputes stationarity, feasibility and complementary slackness of
/// `sol` for `prob` from the problem data.
///
/// Stationarity is measured on the Wirtinger gradient `∂L/∂p*` of every
/// stream, relative to the sum of the magnitudes of its individual terms.
pub fn check_kkt<T: Real>(prob: &QcqpProblem<T>, sol: &QcqpSolution<T>) -> KktReport<T> {
    let kp = kappa::<T>();
    let zero = T::zero();
    let one = T::one();
    let k = prob.k();
    let p = &sol.precoder;
    let users = &prob.safs.users;
    let w = &prob.weights;
    let rs = prob.mode == Mode::Rs;
    let lam: Vec<T> = if rs { sol.duals.common.clone() } else { Vec::new() };
    let nu = sol.duals.power;

    let mut stat = zero;
    let mut track = |terms: &[CVector<T>]| {
        let total = terms
            .iter()
            .skip(1)
            .fold(terms[0].clone(), |acc, t| acc + t);
        let scale = terms.iter().fold(zero, |a, t| a + amax(t));
        stat = stat.max(amax(&total) / (one + scale));
    };

    // private streams
    for i in 0..k {
        let pi: CVector<T> = p.private.column(i).into_owned();
        let mut terms = Vec::new();
        for j in 0..k {
            terms.push(mat_vec(&users[j].psi, &pi, kp * w[j]));
        }
        terms.push(users[i].f.map(|z| -z * (kp * w[i])));
        for (j, l) in lam.iter().enumerate() {
            terms.push(mat_vec(&users[j].psi_c, &pi, kp * *l));
        }
        terms.push(pi.map(|z| z * nu));
        track(&terms);
    }
    // common stream
    if rs {
        let pc = &p.common;
        let mut terms = Vec::new();
        for (j, l) in lam.iter().enumerate() {
            terms.push(mat_vec(&users[j].psi_c, pc, kp * *l));
            terms.push(users[j].f_c.map(|z| -z * (kp * *l)));
        }
        terms.push(pc.map(|z| z * nu));
        if terms.is_empty() {
            terms.push(CVector::from_element(pc.len(), czero::<T>()));
        }
        track(&terms);
    }

    let a = prob.awmse(p);
    let lam_sum = lam.iter().fold(zero, |s, l| s + *l);

    let mut primal = (p.power() / prob.pt - one).max(zero);
    let mut dual = nu.max(zero) - nu;
    for l in &lam {
        dual = dual.max(-*l);
    }
    // each product is taken relative to the natural scale of its constraint
    let mut comp = (nu * (prob.pt - p.power())).abs() / (one + nu.abs() * prob.pt);
    if !rs && p.common_power() > zero {
        primal = primal.max(p.common_power() / prob.pt);
    }

    if rs && !prob.common_rate_split {
        stat = stat.max((one - lam_sum).abs() / (one + lam_sum));
        for (j, l) in lam.iter().enumerate() {
            let slack = sol.xi_c - a.common[j];
            primal = primal.max((-slack).max(zero) / (one + sol.xi_c.abs()));
            comp = comp.max((*l * slack).abs() / (one + l.abs() * (one + sol.xi_c.abs())));
        }
    } else if prob.common_rate_split {
        let split_sum = sol.split.iter().fold(zero, |s, c| s + *c);
        let mu = &sol.duals.split;
        for j in 0..k {
            let g = -w[j] + lam_sum - mu[j];
            stat = stat.max(g.abs() / (w[j] + lam_sum + mu[j].abs()));
            primal = primal.max((-sol.split[j]).max(zero));
            dual = dual.max(-mu[j]);
            comp = comp.max((mu[j] * sol.split[j]).abs() / (one + mu[j].abs()));
            let slack = one - split_sum - a.common[j];
            primal = primal.max((-slack).max(zero));
            comp = comp.max((lam[j] * slack).abs() / (one + lam[j].abs()));
        }
    }

    KktReport {
        stationarity: stat,
        primal_feasibility: primal,
        dual_feasibility: dual,
        complementarity: comp,
    }
}

