//! Zeros of a sampled `G_n` inside a window.
//!
//! Globally polynomial draws are expanded in the monomial basis and handed to
//! Aberth–Ehrlich iteration. Everything else goes through argument-principle
//! counting with recursive subdivision.

mod aberth;
mod argument;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::{RandomFunction, Representation};
use crate::expr::{poly_add, poly_mul, ExprError, ExprProgram, Jet1};
use crate::holomap::{FamilyKind, Rect};

pub use aberth::{companion_roots, roots_aberth};
pub use argument::{count_zeros_argument, zeros_subdivide, SubdivideOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZeroError {
    #[error("not a polynomial: {0}")]
    NotPolynomial(String),
    #[error("root iteration did not converge; worst relative residual {worst:e}")]
    ConvergenceFailure { worst: f64, residuals: Vec<f64> },
    #[error("zero on or near the boundary at {z} after {retries} retries")]
    BoundaryZero { z: Complex64, retries: u32 },
    #[error("winding-number quadrature needed more than {nodes} nodes")]
    QuadratureStall { nodes: usize },
    #[error("{} cells still hold more than one zero at the depth limit", cells.len())]
    DepthExceeded { cells: Vec<(Rect, i64)> },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Eval(#[from] ExprError),
}

/// A holomorphic function that reports its value, derivative and a magnitude
/// scale used to make residuals relative.
pub trait Holomorphic: Sync {
    fn eval_scaled(&self, z: Complex64) -> Result<(Jet1, f64), ExprError>;

    fn jet(&self, z: Complex64) -> Result<Jet1, ExprError> {
        Ok(self.eval_scaled(z)?.0)
    }

    /// `|F(z)| / scale(z)`.
    fn relative_residual(&self, z: Complex64) -> Result<f64, ExprError> {
        let (j, s) = self.eval_scaled(z)?;
        Ok(if s > 0.0 { j.value.norm() / s } else { j.value.norm() })
    }
}

impl Holomorphic for RandomFunction<'_> {
    fn eval_scaled(&self, z: Complex64) -> Result<(Jet1, f64), ExprError> {
        self.eval_with_scale(z)
    }
}

/// Residuals of plain expressions are absolute.
impl Holomorphic for ExprProgram {
    fn eval_scaled(&self, z: Complex64) -> Result<(Jet1, f64), ExprError> {
        Ok((self.eval_jet(z, 0)?, 1.0))
    }
}

/// Wraps a closure returning `(jet, scale)`.
pub struct FnHolo<F>(pub F);

impl<F> Holomorphic for FnHolo<F>
where
    F: Fn(Complex64) -> Result<(Jet1, f64), ExprError> + Sync,
{
    fn eval_scaled(&self, z: Complex64) -> Result<(Jet1, f64), ExprError> {
        (self.0)(z)
    }
}

/// Polynomial `c_0 + c_1 z + ... + c_D z^D`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyCoeffs {
    coeffs: Vec<Complex64>,
}

impl PolyCoeffs {
    /// Trims exactly-zero top coefficients.
    pub fn new(mut coeffs: Vec<Complex64>) -> Self {
        while coeffs.len() > 1 && coeffs.last().is_some_and(|c| *c == Complex64::new(0.0, 0.0)) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(Complex64::new(0.0, 0.0));
        }
        PolyCoeffs { coeffs }
    }

    /// Monic polynomial with the given roots.
    pub fn from_roots(roots: &[Complex64]) -> Self {
        let mut c = vec![Complex64::new(1.0, 0.0)];
        for r in roots {
            c = poly_mul(&c, &[-r, Complex64::new(1.0, 0.0)]);
        }
        PolyCoeffs::new(c)
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == Complex64::new(0.0, 0.0))
    }

    pub fn derivative(&self) -> PolyCoeffs {
        if self.coeffs.len() == 1 {
            return PolyCoeffs::new(vec![Complex64::new(0.0, 0.0)]);
        }
        PolyCoeffs::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c * k as f64)
                .collect(),
        )
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
    }

    /// `|p(z)| / sum |c_k| |z|^k`, evaluated in reversed form for `|z| > 1`.
    pub fn relative_residual(&self, z: Complex64) -> f64 {
        aberth::newton_ratio(&self.coeffs, z).1
    }
}

impl Holomorphic for PolyCoeffs {
    fn eval_scaled(&self, z: Complex64) -> Result<(Jet1, f64), ExprError> {
        let mut p = Complex64::new(0.0, 0.0);
        let mut dp = Complex64::new(0.0, 0.0);
        let mut s = 0.0;
        let az = z.norm();
        for c in self.coeffs.iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
            s = s * az + c.norm();
        }
        Ok((Jet1::new(p, dp), s))
    }
}

/// One located zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Zero {
    pub z: Complex64,
    pub multiplicity: u32,
    /// Scale-relative `|G_n(z)|`.
    pub residual: f64,
}

/// Zeros with multiplicity. `window` is `None` for a full root set of a polynomial.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ZeroList {
    pub zeros: Vec<Zero>,
    pub window: Option<Rect>,
}

impl ZeroList {
    pub fn total_multiplicity(&self) -> u64 {
        self.zeros.iter().map(|z| z.multiplicity as u64).sum()
    }

    pub fn max_residual(&self) -> f64 {
        self.zeros.iter().map(|z| z.residual).fold(0.0, f64::max)
    }

    /// Zeros lying in the closed rectangle.
    pub fn restrict(&self, rect: &Rect) -> ZeroList {
        ZeroList {
            zeros: self.zeros.iter().filter(|z| rect.contains(z.z)).copied().collect(),
            window: Some(*rect),
        }
    }

    /// Sorts by `(re, im)` so that lists are comparable across runs.
    pub fn sort(&mut self) {
        self.zeros
            .sort_by(|a, b| a.z.re.total_cmp(&b.z.re).then(a.z.im.total_cmp(&b.z.im)));
    }

    /// Locations repeated by multiplicity.
    pub fn points(&self) -> Vec<Complex64> {
        self.zeros
            .iter()
            .flat_map(|z| std::iter::repeat_n(z.z, z.multiplicity as usize))
            .collect()
    }

    pub const CSV_HEADER: &'static str = "trial,re,im,multiplicity,residual";

    pub fn csv_rows(&self, trial: u64) -> Vec<String> {
        self.zeros
            .iter()
            .map(|z| format!("{trial},{:e},{:e},{},{:e}", z.z.re, z.z.im, z.multiplicity, z.residual))
            .collect()
    }
}

fn not_poly(e: ExprError) -> ZeroError {
    match e {
        ExprError::NotPolynomial { reason } => ZeroError::NotPolynomial(reason),
        other => ZeroError::Eval(other),
    }
}

/// Monomial expansion of a sampled `G_n` whose map and weights are polynomials.
pub fn expand_poly(rf: &RandomFunction<'_>) -> Result<PolyCoeffs, ZeroError> {
    let spec = rf.spec();
    let n = spec.n();
    let zero = Complex64::new(0.0, 0.0);
    let f: Vec<Vec<Complex64>> = spec
        .map()
        .components()
        .iter()
        .map(|c| c.to_poly(0).map_err(not_poly))
        .collect::<Result<_, _>>()?;
    let g: Vec<Vec<Complex64>> = match spec.family().kind() {
        FamilyKind::Unit => vec![vec![Complex64::new(1.0, 0.0)]; n + 1],
        FamilyKind::ScalarSeq(p) => (0..=n)
            .map(|k| Ok(vec![p.eval(zero, k as i64)?]))
            .collect::<Result<_, ExprError>>()?,
        FamilyKind::ExprFamily(p) => (0..=n)
            .map(|k| p.to_poly(k as i64).map_err(not_poly))
            .collect::<Result<_, _>>()?,
    };
    let a = rf.scaled_coeffs();
    let ell = f.len();

    // powers[j][e] = f_j^e
    let powers: Vec<Vec<Vec<Complex64>>> = f
        .iter()
        .map(|fj| {
            let mut row = vec![vec![Complex64::new(1.0, 0.0)]];
            for e in 1..=n {
                row.push(poly_mul(&row[e - 1], fj));
            }
            row
        })
        .collect();

    let mut total = vec![zero];
    let mut start = 0;
    for k in 0..=n {
        let len = spec.layout().block_sizes()[k];
        let block = &a[start..start + len];
        start += len;
        let pk = if ell == 1 {
            powers[0][k].iter().map(|c| c * block[0]).collect()
        } else {
            match spec.representation() {
                Representation::SymmetricMultinomial => {
                    let mut acc = vec![zero];
                    for (coef, alpha) in block.iter().zip(spec.layout().sym_exponents(k)) {
                        let mut m = vec![*coef];
                        for (j, &e) in alpha.iter().enumerate() {
                            if e > 0 {
                                m = poly_mul(&m, &powers[j][e as usize]);
                            }
                        }
                        acc = poly_add(&acc, &m, 1.0);
                    }
                    acc
                }
                Representation::FullTensor => {
                    let mut cur: Vec<Vec<Complex64>> = block.iter().map(|c| vec![*c]).collect();
                    for _ in 0..k {
                        cur = cur
                            .chunks(ell)
                            .map(|chunk| {
                                chunk
                                    .iter()
                                    .zip(&f)
                                    .fold(vec![zero], |acc, (c, fj)| poly_add(&acc, &poly_mul(c, fj), 1.0))
                            })
                            .collect();
                    }
                    cur.pop().unwrap_or_else(|| vec![zero])
                }
            }
        };
        total = poly_add(&total, &poly_mul(&g[k], &pk), 1.0);
    }
    Ok(PolyCoeffs::new(total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::EnsembleSpec;
    use crate::holomap::{HoloMap, PerturbationFamily};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn kac_expansion_is_the_draw() {
        let spec = EnsembleSpec::kac(12, 3);
        let rf = RandomFunction::sample(&spec, 1);
        let p = expand_poly(&rf).unwrap();
        assert_eq!(p.coeffs(), rf.draw().coeffs.as_slice());
    }

    #[test]
    fn even_map_gives_even_polynomial() {
        let map = HoloMap::parse(&["z^2"]).unwrap();
        let spec = EnsembleSpec::new(map, PerturbationFamily::unit(), 2, Representation::SymmetricMultinomial, 5)
            .unwrap();
        let p = expand_poly(&RandomFunction::sample(&spec, 0)).unwrap();
        assert_eq!(p.degree(), 4);
        assert_eq!(p.coeffs()[1], c(0.0, 0.0));
        assert_eq!(p.coeffs()[3], c(0.0, 0.0));
    }

    #[test]
    fn exp_is_not_polynomial() {
        let map = HoloMap::parse(&["exp(z)"]).unwrap();
        let spec = EnsembleSpec::new(map, PerturbationFamily::unit(), 2, Representation::SymmetricMultinomial, 5)
            .unwrap();
        assert!(matches!(
            expand_poly(&RandomFunction::sample(&spec, 0)),
            Err(ZeroError::NotPolynomial(_))
        ));
    }

    #[test]
    fn poly_helpers() {
        let p = PolyCoeffs::new(vec![c(1.0, 0.0), c(2.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(p.degree(), 1);
        let q = PolyCoeffs::from_roots(&[c(1.0, 0.0), c(-1.0, 0.0)]);
        assert_eq!(q.coeffs(), &[c(-1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert_eq!(q.derivative().coeffs(), &[c(0.0, 0.0), c(2.0, 0.0)]);
        assert_eq!(q.eval(c(3.0, 0.0)), c(8.0, 0.0));
        assert!(q.relative_residual(c(1.0, 0.0)) == 0.0);
    }

    #[test]
    fn zero_list_csv() {
        let mut zl = ZeroList {
            zeros: vec![
                Zero { z: c(0.5, 0.0), multiplicity: 1, residual: 1e-16 },
                Zero { z: c(-0.5, 0.1), multiplicity: 2, residual: 0.0 },
            ],
            window: None,
        };
        zl.sort();
        assert_eq!(zl.zeros[0].z, c(-0.5, 0.1));
        assert_eq!(zl.total_multiplicity(), 3);
        assert_eq!(zl.points().len(), 3);
        let rows = zl.csv_rows(7);
        assert!(rows[0].starts_with("7,"));
        assert_eq!(rows[0].split(',').count(), ZeroList::CSV_HEADER.split(',').count());
    }
}
