use super::*;

fn point(scheme: Scheme, snr_db: f64, esr: f64) -> EsrPoint {
    EsrPoint {
        scheme,
        snr_db,
        esr,
        std_err: 0.0,
        private_rates: vec![],
        common_rate: 0.0,
        n_channels: 1,
        failures: 0,
    }
}

fn small() -> HarnessConfig {
    HarnessConfig {
        system: SystemConfig {
            k: 2,
            nt: 2,
            m: 20,
            seed: 3,
            ..SystemConfig::default()
        },
        n_channels: 4,
        ..HarnessConfig::default()
    }
}

#[test]
fn slope_of_linear_fixture_is_exact() {
    let pts: Vec<EsrPoint> = (0..5)
        .map(|i| {
            let snr = 20.0 + 5.0 * i as f64;
            let log2_pt = snr / 10.0 * 10f64.log2();
            point(Scheme::RsOpt, snr, 2.0 * log2_pt + 0.3)
        })
        .collect();
    let s = dof_slope(&pts, (20.0, 40.0)).unwrap();
    assert!((s - 2.0).abs() < 1e-12);
    assert!(matches!(
        dof_slope(&pts, (35.0, 40.0)),
        Err(Error::InsufficientPoints { needed: 3, found: 2 })
    ));
    assert_eq!(top_window(&pts, 15.0), (25.0, 40.0));
}

#[test]
fn snr_gap_interpolates() {
    let a: Vec<EsrPoint> = [10.0, 20.0, 30.0].iter().map(|&s| point(Scheme::RsOpt, s, s / 5.0)).collect();
    let b: Vec<EsrPoint> = [10.0, 20.0, 30.0].iter().map(|&s| point(Scheme::NoRsOpt, s, s / 10.0)).collect();
    // a reaches 4 at 20 dB; b reaches 4 only at 40 dB (extrapolated)
    assert!((snr_gap(&a, &b, 20.0).unwrap() - 20.0).abs() < 1e-12);
    // b reaches a's 10 dB level (2) at 20 dB
    assert!((snr_gap(&a, &b, 10.0).unwrap() - 10.0).abs() < 1e-12);
}

#[test]
fn weight_grid_has_43_pairs() {
    let w = default_weight_pairs();
    assert_eq!(w.len(), 43);
    assert!(w.iter().all(|p| p.0 == 1.0));
    assert_eq!(w[0].1, 1e-3);
    assert!((w[1].1 - 0.1).abs() < 1e-15);
    assert!((w[21].1 - 1.0).abs() < 1e-15);
    assert_eq!(w[42].1, 1e3);
}

#[test]
fn hull_of_square_and_containment() {
    let pts = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.5)];
    let h = convex_hull(&pts);
    assert_eq!(h.len(), 4);
    assert!(hull_contains(&h, (0.5, 0.5), 0.0));
    assert!(hull_contains(&h, (1.0, 1.0), 1e-12));
    assert!(!hull_contains(&h, (1.1, 0.5), 1e-3));
    let region = region_hull(&[(2.0, 1.0), (1.0, 2.0)]);
    assert!(hull_contains(&region, (0.0, 2.0), 1e-12));
    assert!(hull_contains(&region, (1.5, 1.5), 1e-12));
    assert!(!hull_contains(&region, (1.6, 1.6), 1e-9));
}

#[test]
fn schemes_parse_from_labels() {
    for s in Scheme::ALL {
        assert_eq!(s.label().parse::<Scheme>().unwrap(), s);
    }
    assert_eq!("rs_opt".parse::<Scheme>().unwrap(), Scheme::RsOpt);
    assert!("RS-Best".parse::<Scheme>().is_err());
}

#[test]
fn sweep_is_independent_of_thread_count() {
    let snrs = [10.0, 20.0];
    let one = esr_sweep(&HarnessConfig { jobs: 1, ..small() }, &snrs, &Scheme::ALL).unwrap();
    let four = esr_sweep(&HarnessConfig { jobs: 4, ..small() }, &snrs, &Scheme::ALL).unwrap();
    assert_eq!(one, four);
    assert_eq!(one.len(), 10);
    let mut a = Vec::new();
    let mut b = Vec::new();
    write_esr_csv(&one, &mut a).unwrap();
    write_esr_csv(&four, &mut b).unwrap();
    assert_eq!(a, b);
}

#[test]
fn optimized_schemes_dominate_their_baselines() {
    let pts = esr_sweep(&small(), &[15.0, 25.0], &Scheme::ALL).unwrap();
    let get = |s: Scheme, snr: f64| pts.iter().find(|p| p.scheme == s && p.snr_db == snr).unwrap().esr;
    for snr in [15.0, 25.0] {
        assert!(get(Scheme::RsOpt, snr) >= get(Scheme::NoRsOpt, snr) - 1e-4);
        assert!(get(Scheme::RsOpt, snr) >= get(Scheme::RsZfSvd, snr) - 1e-4);
        assert!(get(Scheme::NoRsOpt, snr) >= get(Scheme::NoRsZf, snr) - 1e-4);
    }
    assert!(pts.iter().all(|p| p.failures == 0 && p.n_channels == 4));
}

#[test]
fn region_requires_two_users() {
    let h = HarnessConfig {
        system: SystemConfig {
            k: 3,
            nt: 3,
            ..small().system
        },
        ..small()
    };
    assert!(matches!(rate_region(&h, 20.0, &[(1.0, 1.0)]), Err(Error::InvalidConfig(_))));
}

#[test]
fn mean_and_standard_error() {
    let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(m, 2.5);
    // sample variance 5/3, divided by n = 4
    assert!((s - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
}
