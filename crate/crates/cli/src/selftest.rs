//! Invariant suite behind `zerocurrent selftest`.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use serde::Serialize;
use zerocurrent::ensemble::{
    complex_gaussian, gamma_n, kernel_closed_form, kernel_direct, log_modulus_mean_quadrature,
    mean_log_abs_projection, phi, trial_rng, EnsembleSpec, RandomFunction, Representation,
};
use zerocurrent::holomap::{HoloMap, PerturbationFamily, Rect, Window};
use zerocurrent::theory::{ac_density, five_point_laplacian, limit_pairing, TestFunction, TheoryError};
use zerocurrent::zerofind::{count_zeros_argument, expand_poly, roots_aberth};

use crate::output::OutputDir;
use crate::CliError;

const SEED: u64 = 20261018;

#[derive(Debug, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

type Outcome = Result<(bool, String), String>;
type Suite = [(&'static str, fn() -> Outcome); 6];

fn map(parts: &[&str]) -> HoloMap {
    HoloMap::parse(parts).expect("static map")
}

fn gamma_bound() -> Outcome {
    let maps = [map(&["z"]), map(&["z", "1"]), map(&["z^2 - 0.5", "0.3*z"])];
    let w = Window::new(Rect::square(2.0), 200, 200).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for m in &maps {
        for n in [10usize, 100, 1000] {
            let bound = ((n + 1) as f64).ln() / n as f64;
            for z in w.nodes() {
                let d = gamma_n(m, n, z).map_err(|e| e.to_string())? - phi(m, z).map_err(|e| e.to_string())?;
                worst = worst.max(d.abs() / bound);
            }
        }
    }
    Ok((worst <= 1.0, format!("max |gamma_n - log+|f|^2| / (log(n+1)/n) = {worst:.6}")))
}

fn unitary_invariance() -> Outcome {
    let target = log_modulus_mean_quadrature();
    let mut rng = trial_rng(SEED, 1);
    let dim = 5;
    let est: Vec<(f64, f64)> = (0..16)
        .map(|k| {
            let raw: Vec<Complex64> = (0..dim).map(|_| complex_gaussian(&mut rng)).collect();
            let norm = raw.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            let u: Vec<Complex64> = raw.iter().map(|a| a / norm).collect();
            mean_log_abs_projection(&u, 20_000, SEED + 100 + k)
        })
        .collect();
    let mut ok = est.iter().all(|(m, se)| (m - target).abs() <= 3.0 * se);
    for (i, a) in est.iter().enumerate() {
        for b in &est[i + 1..] {
            ok &= (a.0 - b.0).abs() <= 3.0 * (a.1 * a.1 + b.1 * b.1).sqrt();
        }
    }
    let spread = est.iter().map(|e| (e.0 - target).abs() / e.1).fold(0.0, f64::max);
    Ok((ok, format!("target {target:.6}; worst deviation {spread:.2} se")))
}

fn representation_equivalence() -> Outcome {
    let m = map(&["z", "0.5*z - 0.3*i"]);
    let fam = PerturbationFamily::builtin("exp_tilt").expect("builtin");
    let mut rng = trial_rng(SEED, 2);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let z = complex_gaussian(&mut rng) * 0.6;
        let w = complex_gaussian(&mut rng) * 0.6;
        let closed = kernel_closed_form(&m, &fam, 6, z, w).map_err(|e| e.to_string())?;
        for repr in [Representation::FullTensor, Representation::SymmetricMultinomial] {
            let spec = EnsembleSpec::new(m.clone(), fam.clone(), 6, repr, SEED).map_err(|e| e.to_string())?;
            let direct = kernel_direct(&spec, z, w).map_err(|e| e.to_string())?;
            worst = worst.max((direct - closed).norm() / closed.norm());
        }
    }
    Ok((worst <= 1e-10, format!("max relative kernel error {worst:e}")))
}

fn curve_mass() -> Outcome {
    let w = Window::new(Rect::square(2.0), 401, 401).map_err(|e| e.to_string())?;
    let kac = map(&["z"]);
    let pair = |name| {
        let rho = TestFunction::builtin(name).expect("builtin");
        limit_pairing(&kac, &rho, &w).map(|r| r.total).map_err(|e| e.to_string())
    };
    let full = pair("annulus")?;
    let half = pair("half_plane")?;
    Ok((
        (full - 1.0).abs() <= 1e-3 && (half - 0.5).abs() <= 5e-3,
        format!("annulus {full:.6}, half plane {half:.6}"),
    ))
}

fn density_vs_laplacian() -> Outcome {
    let m = map(&["z", "1"]);
    let potential = |z: Complex64| (1.0 + z.norm_sqr()).ln() / (4.0 * PI);
    let mut worst: f64 = 0.0;
    for ix in 0..21 {
        for iy in 0..21 {
            let z = Complex64::new(-2.0 + 0.2 * ix as f64, -2.0 + 0.2 * iy as f64);
            match ac_density(&m, z) {
                Ok(d) => worst = worst.max((d - five_point_laplacian(potential, z, 1e-3)).abs()),
                Err(TheoryError::OnCurve { .. }) => {}
                Err(e) => return Err(e.to_string()),
            }
        }
    }
    let single = map(&["z^3 - 0.5*z + 0.2"]);
    let mut single_worst: f64 = 0.0;
    for ix in 0..40 {
        for iy in 0..40 {
            let z = Complex64::new(-2.0 + 0.1013 * ix as f64, -2.0 + 0.1007 * iy as f64);
            if let Ok(d) = ac_density(&single, z) {
                single_worst = single_worst.max(d.abs());
            }
        }
    }
    Ok((
        worst <= 1e-5 && single_worst <= 1e-12,
        format!("two-component error {worst:e}; one-component max {single_worst:e}"),
    ))
}

fn winding_conservation() -> Outcome {
    let spec = EnsembleSpec::kac(50, SEED);
    let rect = Rect::square(1.5);
    let mut mismatches = 0;
    for t in 0..20 {
        let rf = RandomFunction::sample(&spec, t);
        let winding = count_zeros_argument(&rf, &rect).map_err(|e| e.to_string())?;
        let poly = expand_poly(&rf).map_err(|e| e.to_string())?;
        let roots = roots_aberth(&poly, 1e-10).map_err(|e| e.to_string())?;
        if winding != roots.restrict(&rect).total_multiplicity() as i64 {
            mismatches += 1;
        }
    }
    Ok((mismatches == 0, format!("{mismatches} of 20 draws disagree")))
}

pub fn checks() -> Vec<CheckResult> {
    let suite: Suite = [
        ("gamma_bound", gamma_bound),
        ("unitary_invariance", unitary_invariance),
        ("representation_equivalence", representation_equivalence),
        ("curve_mass", curve_mass),
        ("density_vs_fd_laplacian", density_vs_laplacian),
        ("winding_conservation", winding_conservation),
    ];
    suite
        .iter()
        .map(|(name, f)| {
            let start = Instant::now();
            let (pass, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
            CheckResult {
                name,
                pass,
                detail,
                seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

#[derive(Serialize)]
struct Report<'a> {
    passed: bool,
    checks: &'a [CheckResult],
}

pub fn run(output_dir: Option<&Path>) -> Result<(), CliError> {
    let results = checks();
    for c in &results {
        println!("{} {} ({:.1}s): {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.seconds, c.detail);
    }
    let passed = results.iter().all(|c| c.pass);
    if let Some(dir) = output_dir {
        OutputDir::create(dir, "selftest")?.json(
            "selftest.json",
            &Report {
                passed,
                checks: &results,
            },
        )?;
    }
    if passed {
        Ok(())
    } else {
        Err(CliError::Failed("selftest failed".into()))
    }
}
