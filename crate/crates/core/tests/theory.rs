use std::f64::consts::PI;

use num_complex::Complex64;
use zerocurrent::ensemble::EnsembleSpec;
use zerocurrent::holomap::{HoloMap, Rect, Window};
use zerocurrent::theory::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn kac_map() -> HoloMap {
    HoloMap::parse(&["z"]).unwrap()
}

fn window(half: f64, nodes: usize) -> Window {
    Window::new(Rect::square(half), nodes, nodes).unwrap()
}

#[test]
fn unit_circle_length_and_projection() {
    let curve = extract_curve(&kac_map(), &window(2.0, 401)).unwrap();
    assert_eq!(curve.chains.len(), 1);
    assert!(curve.chains[0].closed);
    assert!((curve.total_length() - 2.0 * PI).abs() < 1e-4, "{}", curve.total_length());
    assert_eq!(curve.degenerate_count(), 0);
}

#[test]
fn curve_orientation_keeps_inside_on_the_left() {
    let maps = [kac_map(), HoloMap::parse(&["z/2", "0.5"]).unwrap(), HoloMap::parse(&["z^2 - 0.25"]).unwrap()];
    for map in maps {
        let curve = extract_curve(&map, &window(2.5, 201)).unwrap();
        for chain in &curve.chains {
            for (a, b) in chain.segments() {
                let mid = (a.z + b.z) * 0.5;
                let left = mid + (b.z - a.z) * c(0.0, 1.0) * 0.1;
                let right = mid - (b.z - a.z) * c(0.0, 1.0) * 0.1;
                assert!(
                    map.norm_sq(left).unwrap() < 1.0 && map.norm_sq(right).unwrap() > 1.0,
                    "{} at {mid}: {} {}",
                    map.components()[0],
                    map.norm_sq(left).unwrap(),
                    map.norm_sq(right).unwrap()
                );
            }
        }
    }
}

#[test]
fn kac_limit_has_unit_mass_near_the_circle() {
    let w = window(2.0, 401);
    let rho = TestFunction::builtin("annulus").unwrap();
    let r = limit_pairing(&kac_map(), &rho, &w).unwrap();
    assert_eq!(r.ac, 0.0);
    assert!((r.curve - 1.0).abs() < 1e-4, "{r:?}");
    assert!((r.potential_form - 1.0).abs() < 1e-6, "{r:?}");
}

#[test]
fn half_plane_bump_carries_half_the_mass() {
    let w = window(2.0, 401);
    let rho = TestFunction::builtin("half_plane").unwrap();
    let r = limit_pairing(&kac_map(), &rho, &w).unwrap();
    assert!((r.total - 0.5).abs() < 5e-3, "{r:?}");
}

#[test]
fn limit_forms_agree_for_builtins() {
    let maps = [
        kac_map(),
        HoloMap::parse(&["z", "1"]).unwrap(),
        HoloMap::parse(&["z", "0.5*z^2"]).unwrap(),
        HoloMap::parse(&["0.8*z + 0.3", "0.4*i*z"]).unwrap(),
    ];
    let w = window(2.0, 401);
    for map in &maps {
        for rho in TestFunction::builtin_set() {
            let r = limit_pairing(map, &rho, &w).unwrap();
            assert!(r.diff < 1e-3, "{} / {}: {r:?}", map.components()[0], rho.id);
        }
    }
}

#[test]
fn fubini_study_limit_is_the_density_integral() {
    let map = HoloMap::parse(&["z", "1"]).unwrap();
    let rho = TestFunction::tensor_bump("big", Rect::square(2.0), 0.5).unwrap();
    let w = window(2.6, 401);
    let r = limit_pairing(&map, &rho, &w).unwrap();
    assert_eq!(r.curve, 0.0);
    let direct = simpson_richardson::<(), _>(&w, |z| Ok(rho.value(z) / (PI * (1.0 + z.norm_sqr()).powi(2))))
        .unwrap()
        .value;
    assert!((r.total - direct).abs() < 1e-3, "{r:?} vs {direct}");
}

#[test]
fn rho_inside_the_disk_pairs_to_zero() {
    let rho = TestFunction::radial_bump("inner", c(0.1, -0.1), 0.2, 0.5).unwrap();
    let w = window(1.0, 201);
    let r = limit_pairing(&kac_map(), &rho, &w).unwrap();
    assert_eq!(r.total, 0.0);
    assert!(r.potential_form.abs() < 1e-12);
    // log h_n is bounded by log(n+1) on the support, so the expectation is O(log n / n)
    let mut prev = f64::INFINITY;
    for n in [10, 40, 160, 640] {
        let e = expectation_pairing(&EnsembleSpec::kac(n, 0), &rho, &w).unwrap().value.abs();
        let bound = ((n + 1) as f64).ln() / (4.0 * PI * n as f64) * abs_laplacian_integral(&rho, &w).unwrap();
        assert!(e <= bound && e < prev, "n={n}: {e} vs {bound}");
        prev = e;
    }
}

#[test]
fn expectation_is_grid_converged() {
    let spec = EnsembleSpec::kac(20, 0);
    for rho in TestFunction::builtin_set() {
        let coarse = expectation_pairing(&spec, &rho, &window(2.0, 401)).unwrap();
        let fine = expectation_pairing(&spec, &rho, &window(2.0, 801)).unwrap();
        assert!((coarse.value - fine.value).abs() < 1e-6, "{}: {coarse:?} {fine:?}", rho.id);
        assert!(coarse.error < 1e-6);
    }
}

#[test]
fn fubini_study_density_matches_laplacian_of_potential() {
    let map = HoloMap::parse(&["z", "1"]).unwrap();
    // (1/2 pi) log |f| = (1/4 pi) log(1 + |z|^2)
    let potential = |z: Complex64| (1.0 + z.norm_sqr()).ln() / (4.0 * PI);
    for ix in 0..21 {
        for iy in 0..21 {
            let z = c(-2.0 + 0.2 * ix as f64, -2.0 + 0.2 * iy as f64);
            if z.norm() < 1e-9 {
                // |f| = 1 only at the origin
                assert!(matches!(ac_density(&map, z), Err(TheoryError::OnCurve { .. })));
                continue;
            }
            let fd = five_point_laplacian(potential, z, 1e-3);
            let d = ac_density(&map, z).unwrap();
            assert!((d - fd).abs() < 1e-5, "{z}: {d} vs {fd}");
        }
    }
}

#[test]
fn single_component_density_vanishes() {
    let maps = [kac_map(), HoloMap::parse(&["z^3 - 0.5*z + 0.2"]).unwrap(), HoloMap::parse(&["exp(z)"]).unwrap()];
    for map in &maps {
        for ix in 0..40 {
            for iy in 0..40 {
                let z = c(-2.0 + 0.1013 * ix as f64, -2.0 + 0.1007 * iy as f64);
                match ac_density(map, z) {
                    Ok(d) => assert!(d.abs() < 1e-12, "{z}: {d}"),
                    Err(TheoryError::OnCurve { .. }) => {}
                    Err(e) => panic!("{e}"),
                }
            }
        }
    }
}

#[test]
fn unnormalized_curve_form_breaks_unit_mass() {
    let rho = TestFunction::builtin("annulus").unwrap();
    let r = limit_pairing_with(&kac_map(), &rho, &window(2.0, 201), CurveNormalization::Unnormalized).unwrap();
    assert!((r.curve - 2.0 * PI).abs() < 1e-3);
    assert!(r.diff > 1.0);
}

#[test]
fn theory_measure_exports() {
    let m = TheoryMeasure::compute(&HoloMap::parse(&["z", "1"]).unwrap(), &window(1.0, 11)).unwrap();
    let csv = m.density_csv();
    assert!(csv.starts_with("x,y,d\n"));
    assert_eq!(csv.lines().count(), 122);
    assert!(m.curve.is_empty());
    for (z, d) in m.window.nodes().iter().zip(&m.ac_density) {
        assert_eq!(*d > 0.0, z.norm() > 1e-9);
    }
}
