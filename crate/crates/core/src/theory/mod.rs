//! The deterministic side: the exact finite-`n` expectation of the zero divisor,
//! the limit measure, and pairings of both with smooth test functions.
//!
//! The expectation is paired through `<E Z(G_n), rho> = (1/4 pi n) int log h_n Delta rho`.
//! The limit measure has an absolutely continuous part on `{|f| > 1}` with Lebesgue
//! density `(1/pi)(|f|^2 |f'|^2 - |<f', f>|^2)/|f|^4` and a part carried by the curve
//! `C = {|f| = 1}` given by `(1/2 pi) Im(sum conj(f_j) f_j' dz)`. Both together equal
//! `(1/4 pi) Delta log+ |f|^2`, which is used as an independent cross-check.

mod curve;
mod quad;
mod testfn;

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::{gamma_from_norm_sq, log_h_n, phi_from_norm_sq, EnsembleSpec};
use crate::expr::{ExprError, ExprProgram};
use crate::holomap::{audit_hypotheses, HoloError, HoloMap, PerturbationFamily, Rect, Window};

pub use curve::{
    curve_measure_pairing, curve_measure_pairing_with, extract_curve, Chain, CurveC, CurveNormalization,
    CurvePairing, CurvePoint, DEGENERATE_DERIV, ON_CURVE_TOL,
};
pub use quad::{adaptive_cubature, gauss_cubature, simpson_richardson, CubatureOptions, Estimate};
pub use testfn::{smooth_step, LapJet, TestFunction, TestFunctionKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("support of `{rho}` ({support:?}) is not inside the quadrature window ({window:?})")]
    SupportEscape { rho: String, support: Rect, window: Rect },
    #[error("point {z} lies on the curve |f| = 1")]
    OnCurve { z: Complex64 },
    #[error("curve 1-form is negative ({value:e}) near {at}; orientation is inconsistent")]
    NegativeMass { at: Complex64, value: f64 },
    #[error("invalid test function: {0}")]
    InvalidTestFunction(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Holo(#[from] HoloError),
}

/// `0` below 1, `1` at 1, `2/x` above 1.
pub fn xi(x: f64) -> f64 {
    if x > 1.0 {
        2.0 / x
    } else if x == 1.0 {
        1.0
    } else {
        0.0
    }
}

/// `|f|^2 - 1`: finite-`n` potentials have a layer of width about `1/n` along its zero
/// set, the limit potential a kink and the AC density a jump.
fn level(map: &HoloMap, z: Complex64) -> Result<f64, TheoryError> {
    Ok(map.norm_sq(z)? - 1.0)
}

fn check_support(rho: &TestFunction, w: &Window) -> Result<(), TheoryError> {
    let support = rho.support();
    if w.rect.contains_rect(&support) {
        Ok(())
    } else {
        Err(TheoryError::SupportEscape {
            rho: rho.id.clone(),
            support,
            window: w.rect,
        })
    }
}

/// `<E Z(G_n), rho>` for an arbitrary map and family; pairings are normalised by
/// `max(n, 1)` so that `n = 0` gives the (zero) expectation of an empty divisor.
pub fn expectation_pairing_for(
    map: &HoloMap,
    fam: &PerturbationFamily,
    n: usize,
    rho: &TestFunction,
    quad: &Window,
) -> Result<Estimate, TheoryError> {
    check_support(rho, quad)?;
    let scale = 1.0 / (4.0 * PI * n.max(1) as f64);
    adaptive_cubature(
        quad,
        |z| {
            let lap = rho.laplacian(z);
            if lap == 0.0 {
                return Ok(0.0);
            }
            Ok(scale * log_h_n(map, fam, n, z)? * lap)
        },
        |z| level(map, z),
        CubatureOptions::default(),
    )
}

/// `(1/4 pi n) int log h_n(z) Delta rho(z) dlambda(z)`: the exact expectation of
/// `(1/n) sum_{G_n(z) = 0} rho(z)`.
pub fn expectation_pairing(spec: &EnsembleSpec, rho: &TestFunction, quad: &Window) -> Result<Estimate, TheoryError> {
    expectation_pairing_for(spec.map(), spec.family(), spec.n(), rho, quad)
}

/// `(1/4 pi) int log+ |f|^2 Delta rho`.
pub fn potential_pairing(map: &HoloMap, rho: &TestFunction, quad: &Window) -> Result<Estimate, TheoryError> {
    check_support(rho, quad)?;
    adaptive_cubature(
        quad,
        |z| {
            let lap = rho.laplacian(z);
            if lap == 0.0 {
                return Ok(0.0);
            }
            Ok(phi_from_norm_sq(map.norm_sq(z)?) * lap / (4.0 * PI))
        },
        |z| level(map, z),
        CubatureOptions::default(),
    )
}

/// `(1/4 pi n) int gamma_n-style potential`: the Unit-family expectation written through
/// `gamma_n`, used to check the `log(n+1)/n` rate.
pub fn gamma_pairing(map: &HoloMap, n: usize, rho: &TestFunction, quad: &Window) -> Result<Estimate, TheoryError> {
    check_support(rho, quad)?;
    adaptive_cubature(
        quad,
        |z| {
            let lap = rho.laplacian(z);
            if lap == 0.0 {
                return Ok(0.0);
            }
            Ok(gamma_from_norm_sq(map.norm_sq(z)?, n.max(1)) * lap / (4.0 * PI))
        },
        |z| level(map, z),
        CubatureOptions::default(),
    )
}

/// `int |Delta rho| dlambda`.
pub fn abs_laplacian_integral(rho: &TestFunction, quad: &Window) -> Result<f64, TheoryError> {
    check_support(rho, quad)?;
    gauss_cubature(quad, |z| Ok(rho.laplacian(z).abs()))
}

/// Lebesgue density of the absolutely continuous part of the limit measure.
/// Zero on `{|f| < 1}`; `OnCurve` within `1e-10` of `{|f| = 1}`.
pub fn ac_density(map: &HoloMap, z: Complex64) -> Result<f64, TheoryError> {
    let p = map.point(z)?;
    let modulus = p.norm_sq.sqrt();
    if (modulus - 1.0).abs() < ON_CURVE_TOL {
        return Err(TheoryError::OnCurve { z });
    }
    if modulus < 1.0 {
        return Ok(0.0);
    }
    Ok(p.wedge_sq / (PI * p.norm_sq * p.norm_sq))
}

fn ac_density_or_zero(map: &HoloMap, z: Complex64) -> Result<f64, TheoryError> {
    match ac_density(map, z) {
        Err(TheoryError::OnCurve { .. }) => Ok(0.0),
        other => other,
    }
}

/// `int rho * ac_density dlambda`; the density jumps across `C`, which the adaptive
/// cubature resolves.
pub fn ac_pairing(map: &HoloMap, rho: &TestFunction, w: &Window) -> Result<f64, TheoryError> {
    check_support(rho, w)?;
    let est = adaptive_cubature(
        w,
        |z| {
            let r = rho.value(z);
            if r == 0.0 {
                return Ok(0.0);
            }
            Ok(r * ac_density_or_zero(map, z)?)
        },
        |z| level(map, z),
        CubatureOptions::default(),
    )?;
    Ok(est.value)
}

/// Both forms of the limit pairing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub ac: f64,
    pub curve: f64,
    pub total: f64,
    pub potential_form: f64,
    pub diff: f64,
    pub excluded_length: f64,
}

/// `int rho d mu` for the limit measure `mu`, as AC part plus curve part, with the
/// potential form `(1/4 pi) int log+ |f|^2 Delta rho` alongside.
pub fn limit_pairing(map: &HoloMap, rho: &TestFunction, w: &Window) -> Result<LimitReport, TheoryError> {
    limit_pairing_with(map, rho, w, CurveNormalization::Canonical)
}

pub fn limit_pairing_with(
    map: &HoloMap,
    rho: &TestFunction,
    w: &Window,
    norm: CurveNormalization,
) -> Result<LimitReport, TheoryError> {
    check_support(rho, w)?;
    let ac = if map.ell() == 1 { 0.0 } else { ac_pairing(map, rho, w)? };
    let curve = extract_curve(map, w)?;
    let cp = curve_measure_pairing_with(&curve, rho, norm)?;
    let potential = potential_pairing(map, rho, w)?.value;
    let total = ac + cp.value;
    Ok(LimitReport {
        ac,
        curve: cp.value,
        total,
        potential_form: potential,
        diff: (total - potential).abs(),
        excluded_length: cp.excluded_length,
    })
}

/// `f(z) = (z/sqrt(ell), ..., z/sqrt(ell))`: the complex line through the diagonal,
/// on which `|f(z)| = |z|`.
pub fn diagonal_map(ell: usize) -> HoloMap {
    let c = 1.0 / (ell as f64).sqrt();
    let comps: Vec<String> = (0..ell).map(|_| format!("{c:?}*z")).collect();
    HoloMap::parse(&comps).expect("generated expression")
}

/// The expectation pairing for the diagonal map with `g = 1`.
pub fn diagonal_pairing(ell: usize, n: usize, rho: &TestFunction, w: &Window) -> Result<Estimate, TheoryError> {
    assert!(ell >= 1, "ell must be at least 1");
    expectation_pairing_for(&diagonal_map(ell), &PerturbationFamily::unit(), n, rho, w)
}

/// Constant `C_fam` in `|(1/n) log h_n - log+ |f|^2| <= (log(n+1) + C_fam)/n` on the
/// support of `rho`.
///
/// Upper side: `|g_k| <= B^kappa_n (1+|f|)^lambda_n`. Lower side: `h_n >= |g_0|^2`
/// where `|f| <= 1`, and `h_n >= |g_n|^2 |f|^{2n}` with
/// `|g_n| >= c_min A^{-xi_n} (1+|f|)^{-eta_n}` otherwise, `c_min` from the audit.
pub fn rate_constant(
    map: &HoloMap,
    fam: &PerturbationFamily,
    n: usize,
    support: &Rect,
) -> Result<f64, TheoryError> {
    if fam.is_unit() {
        return Ok(0.0);
    }
    let jmax = n.max(1) as u64;
    let grid = Window::new(*support, 41, 41)?;
    let report = audit_hypotheses(map, fam, &grid, jmax)?;
    let certs = fam.certificates();
    let top = |c: &crate::holomap::Certificate| -> Result<f64, ExprError> {
        Ok(c.running_max(jmax)?.last().copied().unwrap_or(0.0))
    };
    let (kappa, lambda, xi_n, eta) = (top(&certs.kappa)?, top(&certs.lambda)?, top(&certs.xi)?, top(&certs.eta)?);
    let log_c_min = report.c_min.ln();
    let mut worst = f64::NEG_INFINITY;
    for z in grid.nodes() {
        let log_1f = (1.0 + map.norm(z)?).ln();
        let log_a = fam.a_envelope().value(z)?.max(1.0).ln();
        let log_b = fam.b_envelope().value(z)?.max(1.0).ln();
        let up = 2.0 * kappa * log_b + 2.0 * lambda * log_1f;
        let low_inside = -2.0 * fam.g(0, z)?.norm().ln();
        let low_outside = -2.0 * log_c_min + 2.0 * xi_n * log_a + 2.0 * eta * log_1f;
        worst = worst.max(up).max(low_inside).max(low_outside);
    }
    Ok(worst.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBound {
    pub c_fam: f64,
    pub abs_laplacian: f64,
    /// `(log(n+1) + C_fam)/(4 pi n) int |Delta rho|`
    pub bound: f64,
}

pub fn rate_bound(
    map: &HoloMap,
    fam: &PerturbationFamily,
    n: usize,
    rho: &TestFunction,
    quad: &Window,
) -> Result<RateBound, TheoryError> {
    let c_fam = rate_constant(map, fam, n, &rho.support())?;
    let abs_laplacian = abs_laplacian_integral(rho, quad)?;
    let nn = n.max(1) as f64;
    Ok(RateBound {
        c_fam,
        abs_laplacian,
        bound: ((nn + 1.0).ln() + c_fam) / (4.0 * PI * nn) * abs_laplacian,
    })
}

/// `(1/4 pi n) int |log(h_n^{fam1}/h_n^{fam2})| |Delta rho|`: a bound on the gap between
/// expectation pairings under two families.
pub fn family_gap_bound(
    map: &HoloMap,
    fam1: &PerturbationFamily,
    fam2: &PerturbationFamily,
    n: usize,
    rho: &TestFunction,
    quad: &Window,
) -> Result<f64, TheoryError> {
    check_support(rho, quad)?;
    let scale = 1.0 / (4.0 * PI * n.max(1) as f64);
    Ok(adaptive_cubature(
        quad,
        |z| {
            let lap = rho.laplacian(z);
            if lap == 0.0 {
                return Ok::<f64, TheoryError>(0.0);
            }
            let d = log_h_n(map, fam1, n, z)? - log_h_n(map, fam2, n, z)?;
            Ok(scale * d.abs() * lap.abs())
        },
        |z| level(map, z),
        CubatureOptions::default(),
    )?
    .value)
}

/// The limit measure sampled on a grid plus its curve part.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryMeasure {
    pub window: Window,
    /// Row-major (`y` then `x`) density values, 0 on the curve itself.
    pub ac_density: Vec<f64>,
    pub curve: CurveC,
}

impl TheoryMeasure {
    pub fn compute(map: &HoloMap, w: &Window) -> Result<Self, TheoryError> {
        let nodes = w.nodes();
        let density: Vec<Result<f64, TheoryError>> = nodes.par_iter().map(|z| ac_density_or_zero(map, *z)).collect();
        Ok(TheoryMeasure {
            window: *w,
            ac_density: density.into_iter().collect::<Result<_, _>>()?,
            curve: extract_curve(map, w)?,
        })
    }

    /// CSV with columns `x,y,d`.
    pub fn density_csv(&self) -> String {
        let mut out = String::from("x,y,d\n");
        for (z, d) in self.window.nodes().iter().zip(&self.ac_density) {
            out.push_str(&format!("{:e},{:e},{:e}\n", z.re, z.im, d));
        }
        out
    }
}

/// One row of the pairing report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingReport {
    pub rho_id: String,
    pub n: usize,
    pub expectation: f64,
    pub limit_ac: f64,
    pub limit_curve: f64,
    pub limit_total: f64,
    pub potential_form: f64,
    pub diff: f64,
}

impl PairingReport {
    pub fn new(rho_id: &str, n: usize, expectation: f64, limit: &LimitReport) -> Self {
        PairingReport {
            rho_id: rho_id.to_string(),
            n,
            expectation,
            limit_ac: limit.ac,
            limit_curve: limit.curve,
            limit_total: limit.total,
            potential_form: limit.potential_form,
            diff: limit.diff,
        }
    }
}

/// A closed-form expression of `z` used as an independent potential in tests and
/// the self-test: the Laplacian of `(1/4 pi) log(1 + |z|^2)` by the five-point stencil.
pub fn five_point_laplacian(f: impl Fn(Complex64) -> f64, z: Complex64, h: f64) -> f64 {
    let e = |dx: f64, dy: f64| f(z + Complex64::new(dx, dy));
    (e(h, 0.0) + e(-h, 0.0) + e(0.0, h) + e(0.0, -h) - 4.0 * e(0.0, 0.0)) / (h * h)
}

/// Parses a map from component texts; convenience for callers holding strings.
pub fn map_from(components: &[&str]) -> Result<HoloMap, HoloError> {
    HoloMap::new(
        components
            .iter()
            .map(|c| ExprProgram::parse(c))
            .collect::<Result<Vec<_>, _>>()?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn xi_values() {
        assert_eq!(xi(0.5), 0.0);
        assert_eq!(xi(1.0), 1.0);
        assert_eq!(xi(4.0), 0.5);
        for k in 1..50 {
            let x = 1.0 + k as f64 * 0.37;
            assert!((x * xi(x) - 2.0).abs() < 1e-15);
            assert!(xi(x + 0.1) <= xi(x));
        }
    }

    #[test]
    fn ac_density_cases() {
        let kac = map_from(&["z"]).unwrap();
        assert_eq!(ac_density(&kac, c(1.5, 0.3)).unwrap(), 0.0);
        assert_eq!(ac_density(&kac, c(0.5, 0.3)).unwrap(), 0.0);
        assert!(matches!(ac_density(&kac, c(1.0, 0.0)), Err(TheoryError::OnCurve { .. })));
        let fs = map_from(&["z", "1"]).unwrap();
        for z in [c(0.3, 0.1), c(-2.0, 1.0)] {
            let expect = 1.0 / (PI * (1.0 + z.norm_sqr()).powi(2));
            assert!((ac_density(&fs, z).unwrap() - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn unit_circle_curve() {
        let kac = map_from(&["z"]).unwrap();
        let w = Window::new(Rect::square(2.0), 201, 201).unwrap();
        let curve = extract_curve(&kac, &w).unwrap();
        assert_eq!(curve.chains.len(), 1);
        assert!(curve.chains[0].closed);
        assert!((curve.total_length() - 2.0 * PI).abs() < 1e-3);
        for p in &curve.chains[0].points {
            assert!(p.residual < ON_CURVE_TOL);
            assert!(!p.degenerate);
        }
        let csv = curve.to_csv();
        assert!(csv.starts_with("chain_id,x,y,weight_per_unit_length\n"));
    }

    #[test]
    fn shifted_circle_and_empty_curve() {
        let m = map_from(&["z/2", "0.5"]).unwrap();
        let w = Window::new(Rect::square(2.5), 151, 151).unwrap();
        let curve = extract_curve(&m, &w).unwrap();
        assert_eq!(curve.chains.len(), 1);
        for p in &curve.chains[0].points {
            assert!((p.z.norm() - 3f64.sqrt()).abs() < 1e-9);
        }
        let far = map_from(&["z", "2"]).unwrap();
        assert!(extract_curve(&far, &w).unwrap().is_empty());
    }

    #[test]
    fn support_escape() {
        let kac = EnsembleSpec::kac(10, 0);
        let rho = TestFunction::radial_bump("disk", c(0.0, 0.0), 0.5, 1.0).unwrap();
        let w = Window::new(Rect::square(0.9), 41, 41).unwrap();
        assert!(matches!(
            expectation_pairing(&kac, &rho, &w),
            Err(TheoryError::SupportEscape { .. })
        ));
    }

    #[test]
    fn diagonal_map_is_ell_invariant() {
        let rho = TestFunction::annulus("ring", c(0.0, 0.0), 0.25, 0.5, 1.5, 1.75).unwrap();
        let w = Window::new(Rect::square(1.8), 121, 121).unwrap();
        let a = diagonal_pairing(1, 30, &rho, &w).unwrap().value;
        let b = diagonal_pairing(3, 30, &rho, &w).unwrap().value;
        assert!((a - b).abs() < 1e-12);
        let kac = expectation_pairing(&EnsembleSpec::kac(30, 0), &rho, &w).unwrap().value;
        assert!((a - kac).abs() < 1e-12);
    }
}
