use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::channel::{sample_conditional, standard_complex_gaussian, ChannelEstimate};
use crate::saa::{accumulate_safs, update_equalizers_weights};

fn random_precoder(nt: usize, k: usize, pt: f64, mode: Mode, rng: &mut ChaCha8Rng) -> Precoder<f64> {
    let common = if mode == Mode::Rs {
        standard_complex_gaussian::<f64, _>(nt, 1, rng).column(0).into_owned()
    } else {
        CVector::from_element(nt, czero())
    };
    let private = standard_complex_gaussian::<f64, _>(nt, k, rng);
    let p = Precoder { common, private, mode };
    let s = (pt / p.power()).sqrt();
    p.scaled(s)
}

pub(super) fn random_problem(
    seed: u64,
    nt: usize,
    k: usize,
    pt: f64,
    mode: Mode,
    split: bool,
) -> (QcqpProblem<f64>, Precoder<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = standard_complex_gaussian::<f64, _>(nt, k, &mut rng);
    let sigma_e2 = rng.random_range(0.01..0.3);
    let est = ChannelEstimate::from_normalized(&h, sigma_e2).unwrap();
    let sample = sample_conditional(&est, 20, &mut rng).unwrap();
    let p = random_precoder(nt, k, pt, mode, &mut rng);
    let eq = update_equalizers_weights(&sample, &p, 1.0).unwrap();
    let safs = accumulate_safs(&sample, &eq).unwrap();
    let weights = if split {
        (0..k).map(|_| rng.random_range(0.2..3.0)).collect()
    } else {
        vec![1.0; k]
    };
    (QcqpProblem::new(safs, 1.0, pt, weights, mode, split).unwrap(), p)
}

fn cases() -> Vec<(Mode, bool)> {
    vec![(Mode::Rs, false), (Mode::NoRs, false), (Mode::Rs, true)]
}

#[test]
fn zero_linear_terms_give_zero_precoder() {
    let (mut prob, _) = random_problem(1, 3, 2, 50.0, Mode::Rs, false);
    for u in prob.safs.users.iter_mut() {
        u.f.fill(czero());
        u.f_c.fill(czero());
    }
    let sol = prob.solve(None).unwrap();
    assert_eq!(sol.status, SolveStatus::Certified);
    assert!(sol.precoder.power() < 1e-12, "{}", sol.precoder.power());
    let kp = kappa::<f64>();
    let c = |t: f64, u: f64, ups: f64| kp * (t + u) - ups + 1.0 - kp;
    let xi_c = prob
        .safs
        .users
        .iter()
        .map(|u| c(u.t_c, u.u_c, u.ups_c))
        .fold(f64::MIN, f64::max);
    let private: f64 = prob.safs.users.iter().map(|u| c(u.t, u.u, u.ups)).sum();
    assert!((sol.objective - (xi_c + private)).abs() < 1e-9);

    // the exact zero precoder with the natural multipliers is optimal
    let mut at_zero = sol.clone();
    at_zero.precoder = Precoder::zeros(3, 2, Mode::Rs);
    at_zero.xi_c = xi_c;
    at_zero.duals.power = 0.0;
    let top = prob
        .safs
        .users
        .iter()
        .map(|u| c(u.t_c, u.u_c, u.ups_c))
        .position(|v| v == xi_c)
        .unwrap();
    at_zero.duals.common = (0..2).map(|j| if j == top { 1.0 } else { 0.0 }).collect();
    assert!(check_kkt(&prob, &at_zero).max() <= 1e-10);
}

#[test]
fn single_user_interior_minimizer() {
    // ξ = κ(‖p‖² − 2Re{c·p₁}) + const  →  p = c·e₁
    let nt = 3;
    let c = 1.5;
    let mut user = UserSafs::<f64>::zeros(nt);
    user.psi = CMatrix::identity(nt, nt);
    user.f[0] = cx(c, 0.0);
    user.u = 1.0;
    user.u_c = 1.0;
    let prob = QcqpProblem::new(SafBundle { users: vec![user] }, 1.0, 10.0, vec![1.0], Mode::NoRs, false).unwrap();
    let sol = prob.solve(None).unwrap();
    assert_eq!(sol.status, SolveStatus::Certified);
    assert!((sol.precoder.private[(0, 0)] - cx(c, 0.0)).norm() < 1e-9);
    assert!(sol.duals.power.abs() < 1e-9);
}

#[test]
fn random_instances_are_certified() {
    for seed in 0..24u64 {
        let (mode, split) = cases()[seed as usize % 3];
        let nt = 2 + (seed as usize % 3);
        let k = 1 + (seed as usize / 3) % nt;
        let pt = [1.0, 30.0, 1000.0][(seed as usize / 2) % 3];
        let (prob, p0) = random_problem(seed, nt, k, pt, mode, split);
        let sol = prob.solve(Some(&p0)).unwrap();
        assert_eq!(sol.status, SolveStatus::Certified, "seed {seed}");
        assert!(sol.kkt_residual <= 1e-7, "seed {seed}: {:?}", check_kkt(&prob, &sol));
        assert!(sol.precoder.power() <= pt * (1.0 + 1e-8));
        let at_start = prob.evaluate(&p0).objective;
        assert!(sol.objective <= at_start + 1e-9, "seed {seed}");
    }
}

#[test]
fn perturbation_does_not_improve() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for seed in 0..6u64 {
        let (mode, split) = cases()[seed as usize % 3];
        let (prob, p0) = random_problem(100 + seed, 3, 2, 100.0, mode, split);
        let sol = prob.solve(Some(&p0)).unwrap();
        let base = check_kkt(&prob, &sol).max();
        let dir = random_precoder(3, 2, 1.0, mode, &mut rng);
        let moved = Precoder {
            common: &sol.precoder.common + &dir.common * cx(1e-3, 0.0),
            private: &sol.precoder.private + &dir.private * cx(1e-3, 0.0),
            mode,
        }
        .scaled_into_ball(100.0, 1.0);
        let ev = prob.evaluate(&moved);
        assert!(ev.objective >= sol.objective - 1e-10, "seed {seed}");
        let mut probe = sol.clone();
        probe.precoder = moved;
        probe.xi_c = ev.xi_c;
        if split {
            probe.split = sol.split.clone();
        }
        assert!(check_kkt(&prob, &probe).max() > base);
    }
}

#[test]
fn objective_is_convex_along_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (prob, _) = random_problem(7, 3, 3, 20.0, Mode::Rs, false);
    for _ in 0..50 {
        let a = random_precoder(3, 3, 20.0 * rng.random::<f64>(), Mode::Rs, &mut rng);
        let b = random_precoder(3, 3, 20.0 * rng.random::<f64>(), Mode::Rs, &mut rng);
        let th: f64 = rng.random();
        let mix = Precoder {
            common: &a.common * cx(th, 0.0) + &b.common * cx(1.0 - th, 0.0),
            private: &a.private * cx(th, 0.0) + &b.private * cx(1.0 - th, 0.0),
            mode: Mode::Rs,
        };
        let lhs = prob.evaluate(&mix).objective;
        let rhs = th * prob.evaluate(&a).objective + (1.0 - th) * prob.evaluate(&b).objective;
        assert!(lhs <= rhs + 1e-9);
    }
}

#[test]
fn unitary_rotation_invariance() {
    let (prob, p0) = random_problem(11, 3, 2, 40.0, Mode::Rs, false);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let g = standard_complex_gaussian::<f64, _>(3, 3, &mut rng);
    let u = g.qr().q();
    let uh = u.adjoint();
    let mut rot = prob.clone();
    for s in rot.safs.users.iter_mut() {
        s.psi = &u * &s.psi * &uh;
        s.psi_c = &u * &s.psi_c * &uh;
        s.f = &u * &s.f;
        s.f_c = &u * &s.f_c;
    }
    let a = prob.solve(Some(&p0)).unwrap();
    let b = rot.solve(None).unwrap();
    assert!((a.objective - b.objective).abs() < 1e-7);
    // the optimum is unique here, so it rotates exactly
    let back = &uh * &b.precoder.private;
    assert!((back - &a.precoder.private).camax() < 1e-5);
}

/// `p_i(μ) = (Σ_k w_kΨ_k + μI)⁻¹ w_i f_i`, with `μ ≥ 0` found by bisection
/// on the power budget.
fn nors_closed_form(prob: &QcqpProblem<f64>) -> CMatrix<f64> {
    let nt = prob.nt();
    let k = prob.k();
    let mut a = CMatrix::from_element(nt, nt, czero());
    for (w, u) in prob.weights.iter().zip(&prob.safs.users) {
        a += u.psi.map(|z| z * *w);
    }
    let build = |mu: f64| {
        let m = &a + CMatrix::identity(nt, nt).map(|z| z * mu);
        let inv = m.try_inverse().unwrap();
        let mut p = CMatrix::from_element(nt, k, czero());
        for i in 0..k {
            let rhs = prob.safs.users[i].f.map(|z| z * prob.weights[i]);
            p.set_column(i, &(&inv * rhs));
        }
        p
    };
    let power = |p: &CMatrix<f64>| p.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let p0 = build(1e-300);
    if power(&p0) <= prob.pt {
        return p0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while power(&build(hi)) > prob.pt {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if power(&build(mid)) > prob.pt {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    build(hi)
}

#[test]
fn private_only_matches_closed_form() {
    for seed in 0..8u64 {
        let pt = [0.5, 10.0, 300.0, 5000.0][seed as usize % 4];
        let (prob, p0) = random_problem(200 + seed, 3, 3, pt, Mode::NoRs, false);
        let sol = prob.solve(Some(&p0)).unwrap();
        let closed = nors_closed_form(&prob);
        let scale = 1.0 + closed.camax();
        assert!(
            (&sol.precoder.private - &closed).camax() / scale < 1e-7,
            "seed {seed}"
        );
    }
}

#[test]
fn dump_round_trip() {
    for (mode, split) in cases() {
        let (prob, _) = random_problem(300, 2, 2, 10.0, mode, split);
        let mut buf = Vec::new();
        dump::write_dump(&prob, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let back: QcqpProblem<f64> = dump::read_dump(&text).unwrap();
        assert_eq!(back, prob);
    }
    assert!(dump::read_dump::<f64>("ratesplit-qcqp 1\nnt x\n").is_err());
    assert!(dump::read_dump::<f64>("hello").is_err());
}

#[test]
fn rejects_malformed_input() {
    let (prob, p0) = random_problem(400, 2, 2, 10.0, Mode::Rs, false);
    let mut bad = prob.clone();
    bad.pt = 0.0;
    assert!(matches!(bad.solve(None), Err(Error::Infeasible(_))));
    let mut bad = prob.clone();
    bad.weights = vec![1.0];
    assert!(bad.solve(None).is_err());
    let mut bad = prob.clone();
    bad.mode = Mode::NoRs;
    bad.common_rate_split = true;
    assert!(bad.solve(None).is_err());
    let wrong = Precoder::<f64>::zeros(3, 2, Mode::Rs);
    assert!(prob.solve(Some(&wrong)).is_err());
    assert!(prob.solve(Some(&p0)).is_ok());
}

#[test]
fn single_precision_agrees() {
    let (prob, p0) = random_problem(500, 2, 2, 10.0, Mode::Rs, false);
    let a = prob.solve(Some(&p0)).unwrap();
    let b = prob.cast::<f32>().solve(Some(&p0.cast())).unwrap();
    assert_ne!(b.status, SolveStatus::MaxIterations);
    assert!((a.objective - b.objective as f64).abs() < 1e-3 * (1.0 + a.objective.abs()));
}

#[test]
fn real_embedding_preserves_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = standard_complex_gaussian::<f64, _>(3, 3, &mut rng);
    let psi = &g * g.adjoint();
    let x = standard_complex_gaussian::<f64, _>(3, 1, &mut rng).column(0).into_owned();
    let mut h = DMatrix::zeros(6, 6);
    add_hermitian(&mut h, &psi, 0, 1.0);
    let mut z = nalgebra::DVector::zeros(6);
    put_block(&mut z, 0, &x, 1.0);
    let real = z.dot(&(&h * &z));
    let complex = hermitian_form(&psi, x.as_slice());
    assert!((real - complex).abs() < 1e-12);
    assert!((&h - h.transpose()).amax() < 1e-15);
}

#[test]
fn stress_over_power_and_weight_extremes() {
    let mut worst = 0.0f64;
    for seed in 0..600u64 {
        let (mode, split) = cases()[seed as usize % 3];
        let nt = 2 + (seed as usize % 3);
        let k = 1 + (seed as usize / 3) % nt;
        let pt = [1.0, 30.0, 1000.0, 1e4][(seed as usize / 2) % 4];
        let (mut prob, p0) = random_problem(seed + 1000, nt, k, pt, mode, split);
        if split && seed % 2 == 0 {
            prob.weights[0] = 1e3;
        }
        if split && seed % 5 == 0 {
            prob.weights[0] = 1e-3;
        }
        let sol = prob.solve(Some(&p0)).unwrap();
        assert_eq!(sol.status, SolveStatus::Certified, "seed {seed}");
        assert!(sol.kkt_residual <= 1e-7, "seed {seed}: {:?}", check_kkt(&prob, &sol));
        worst = worst.max(sol.kkt_residual);
    }
    assert!(worst.is_finite());
}

#[test]
fn collapsed_common_stream_is_certified() {
    // with no common-stream data every common constraint is the same
    // constant, so the active constraints are linearly dependent
    for seed in 0..6u64 {
        let (mut prob, p0) = random_problem(700 + seed, 3, 2, 1000.0, Mode::Rs, seed % 2 == 1);
        for u in &mut prob.safs.users {
            u.psi_c.fill(czero());
            u.f_c.fill(czero());
            u.t_c = 0.0;
            u.u_c = 1.0;
            u.ups_c = 0.0;
        }
        let sol = prob.solve(Some(&p0)).unwrap();
        assert_eq!(sol.status, SolveStatus::Certified, "seed {seed}");
        assert!(sol.kkt_residual <= 1e-7, "seed {seed}: {:?}", check_kkt(&prob, &sol));
    }
}
