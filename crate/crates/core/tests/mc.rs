use num_complex::Complex64;
use zerocurrent::ensemble::EnsembleSpec;
use zerocurrent::expr::ExprProgram;
use zerocurrent::holomap::{Certificates, Envelope, FamilyKind, HoloMap, PerturbationFamily, Rect, Window};
use zerocurrent::mc::*;
use zerocurrent::theory::{expectation_pairing, TestFunction};

fn kac_experiment(n: usize, trials: u64, seed: u64) -> Experiment {
    Experiment::new(
        EnsembleSpec::kac(n, seed),
        Rect::square(2.0),
        trials,
        TestFunction::builtin_set(),
    )
}

#[test]
fn kac_mean_matches_exact_expectation() {
    let exp = kac_experiment(20, 2000, 11);
    let em = run(&exp).unwrap();
    assert_eq!(em.trials_ok, 2000);
    let quad = Window::new(Rect::square(2.0), 401, 401).unwrap();
    for rho in &exp.rho_set {
        let s = em.summary(&rho.id).unwrap();
        let e = expectation_pairing(&exp.spec, rho, &quad).unwrap().value;
        assert!((s.mean - e).abs() <= 3.0 * s.se, "{}: {} +- {} vs {e}", rho.id, s.mean, s.se);
    }
}

#[test]
fn aggregates_do_not_depend_on_thread_count() {
    let exp = kac_experiment(30, 60, 5);
    let pool = |k| rayon::ThreadPoolBuilder::new().num_threads(k).build().unwrap();
    let one = pool(1).install(|| run(&exp)).unwrap();
    let three = pool(3).install(|| run(&exp)).unwrap();
    assert_eq!(one.to_json(), three.to_json());
    assert_eq!(one.pairings, three.pairings);
    assert_eq!(one.zeros_csv().unwrap(), three.zeros_csv().unwrap());
    assert_eq!(run(&exp).unwrap().to_json(), one.to_json());
}

#[test]
fn standard_error_scales_with_trials() {
    let small = run(&kac_experiment(15, 400, 21)).unwrap();
    let large = run(&kac_experiment(15, 800, 21)).unwrap();
    for id in small.per_rho.keys() {
        let (a, b) = (&small.per_rho[id], &large.per_rho[id]);
        assert!((a.se - a.sd / 20.0).abs() < 1e-15);
        let ratio = a.se / b.se;
        assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.2, "{id}: {ratio}");
    }
}

#[test]
fn trials_are_uncorrelated() {
    let em = run(&kac_experiment(15, 600, 3)).unwrap();
    for k in 0..3 {
        let r = lag1_autocorrelation(&em.series(k));
        assert!(r.abs() < 0.1, "{k}: {r}");
    }
}

#[test]
fn retention_controls_zero_exports() {
    let exp = kac_experiment(10, 5, 1).with_retention(false);
    let em = run(&exp).unwrap();
    assert!(matches!(em.zeros_csv(), Err(McError::NoZeroData)));
    assert!(matches!(
        radial_profile(&em, &exp.window, Complex64::new(0.0, 0.0), 8),
        Err(McError::NoZeroData)
    ));
    let em = run(&exp.with_retention(true)).unwrap();
    let csv = em.zeros_csv().unwrap();
    assert!(csv.starts_with("trial,re,im,multiplicity,residual\n"));
    let prof = radial_profile(&em, &Rect::square(2.0), Complex64::new(0.0, 0.0), 8).unwrap();
    assert_eq!(prof.total as usize, csv.lines().count() - 1);
}

#[test]
fn json_has_the_documented_keys() {
    let em = run(&kac_experiment(8, 4, 2)).unwrap();
    let v: serde_json::Value = serde_json::from_str(&em.to_json()).unwrap();
    for key in ["spec_digest", "trials_ok", "trials_failed", "audit_overridden", "per_rho"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["per_rho"]["annulus"]["n_trials"], 4);
    assert_eq!(em.spec_digest.len(), 64);
    assert_ne!(em.spec_digest, run(&kac_experiment(8, 4, 3)).unwrap().spec_digest);
}

#[test]
fn non_polynomial_family_uses_subdivision() {
    let spec = EnsembleSpec::new(
        HoloMap::parse(&["z"]).unwrap(),
        PerturbationFamily::builtin("exp_tilt").unwrap(),
        6,
        zerocurrent::ensemble::Representation::SymmetricMultinomial,
        9,
    )
    .unwrap();
    let exp = Experiment::new(spec, Rect::square(2.0), 4, TestFunction::builtin_set());
    assert!(matches!(
        run(&exp.clone().with_method(Method::Aberth)),
        Err(McError::TooManyFailures { .. })
    ));
    let em = run(&exp).unwrap();
    assert_eq!(em.trials_ok, 4);
    assert!(!em.audit_overridden);
}

#[test]
fn failed_audit_blocks_unless_overridden() {
    // g_j = j + 1 with every certificate declared zero
    let fam = PerturbationFamily::new(
        FamilyKind::ScalarSeq(ExprProgram::parse("j + 1").unwrap()),
        Certificates::zero(),
        Envelope::Const(1.0),
        Envelope::Const(1.0),
    )
    .unwrap();
    let spec = EnsembleSpec::new(
        HoloMap::parse(&["z"]).unwrap(),
        fam,
        10,
        zerocurrent::ensemble::Representation::SymmetricMultinomial,
        0,
    )
    .unwrap();
    let mut exp = Experiment::new(spec, Rect::square(2.0), 4, TestFunction::builtin_set());
    assert!(matches!(run(&exp), Err(McError::AuditFailed(_))));
    exp.audit_override = true;
    assert!(run(&exp).unwrap().audit_overridden);
}

#[test]
fn sweep_gap_shrinks_for_kac() {
    let mut base = kac_experiment(0, 200, 4);
    base.rho_set = vec![TestFunction::builtin("annulus").unwrap()];
    let quad = Window::new(Rect::square(2.0), 201, 201).unwrap();
    assert!(matches!(
        convergence_sweep(&base, &[20, 10], &quad, false),
        Err(McError::BadSweep)
    ));
    let rows = convergence_sweep(&base, &[10, 20, 40], &quad, true).unwrap();
    assert_eq!(rows.len(), 3);
    for w in rows.windows(2) {
        assert!(w[1].gap < w[0].gap);
    }
    for r in &rows {
        assert!(r.gap <= r.rate_bound, "{r:?}");
        assert_eq!(r.mc_agrees(3.0), Some(true), "{r:?}");
        assert_eq!(r.csv_row().split(',').count(), SWEEP_CSV_HEADER.split(',').count());
    }
}

#[test]
fn rho_inside_the_disk_sees_no_limit_mass() {
    let mut base = kac_experiment(0, 50, 4);
    base.rho_set = vec![TestFunction::radial_bump("inner", Complex64::new(0.0, 0.0), 0.2, 0.5).unwrap()];
    let quad = Window::new(Rect::square(1.0), 101, 101).unwrap();
    let rows = convergence_sweep(&base, &[10, 100], &quad, true).unwrap();
    for r in &rows {
        assert_eq!(r.limit, 0.0);
    }
    assert!(rows[1].expectation.abs() < rows[0].expectation.abs());
    assert!(rows[1].mc_mean.unwrap().abs() < 0.01);
}
