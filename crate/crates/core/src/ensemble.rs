//! The random function `G_n(z) = sum_k g_k(z) sum_{|nu| = k} a_nu f_nu1(z) ... f_nuk(z)`.
//!
//! Two coefficient layouts are supported. `FullTensor` keeps one Gaussian per ordered
//! index tuple, `1 + ell + ... + ell^n` in total. `SymmetricMultinomial` keeps one per
//! multi-index `alpha` with `|alpha| = k` and weight `sqrt(k!/alpha!)`; it has the same
//! covariance kernel, hence the same law, with far fewer coefficients.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{powu_complex, ExprError, Jet1};
use crate::holomap::{HoloMap, PerturbationFamily};

/// Largest admissible FullTensor coefficient count.
pub const FULL_TENSOR_LIMIT: u64 = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error("coefficient count for ell = {ell}, n = {n} exceeds {limit}")]
    TooManyCoefficients { ell: usize, n: usize, limit: u64 },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    FullTensor,
    SymmetricMultinomial,
}

fn binomial(n: u64, k: u64) -> Option<u64> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// Number of Gaussian coefficients of `G_n`.
pub fn coeff_count(ell: usize, n: usize, repr: Representation) -> Result<u64, EnsembleError> {
    let too_many = || EnsembleError::TooManyCoefficients {
        ell,
        n,
        limit: FULL_TENSOR_LIMIT,
    };
    let ell64 = ell as u64;
    match repr {
        Representation::FullTensor => {
            let mut total: u64 = 0;
            let mut block: u64 = 1;
            for k in 0..=n {
                if k > 0 {
                    block = block.checked_mul(ell64).ok_or_else(too_many)?;
                }
                total = total.checked_add(block).ok_or_else(too_many)?;
                if total > FULL_TENSOR_LIMIT {
                    return Err(too_many());
                }
            }
            Ok(total)
        }
        Representation::SymmetricMultinomial => {
            let mut total: u64 = 0;
            for k in 0..=n as u64 {
                let b = binomial(k + ell64 - 1, ell64 - 1).ok_or_else(too_many)?;
                total = total.checked_add(b).ok_or_else(too_many)?;
            }
            Ok(total)
        }
    }
}

/// Multi-indices `alpha in N^ell` with `|alpha| = k`, in reverse-lexicographic order.
fn multi_indices(ell: usize, k: u32) -> Vec<Vec<u32>> {
    fn rec(ell: usize, remaining: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() + 1 == ell {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=remaining).rev() {
            prefix.push(first);
            rec(ell, remaining - first, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(ell, k, &mut Vec::with_capacity(ell), &mut out);
    out
}

#[derive(Debug, Clone, PartialEq)]
struct SymBlock {
    exponents: Vec<Vec<u32>>,
    /// `sqrt(k!/alpha!)`
    weights: Vec<f64>,
}

/// Per-degree coefficient blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    representation: Representation,
    ell: usize,
    n: usize,
    block_sizes: Vec<usize>,
    sym: Vec<SymBlock>,
}

impl Layout {
    fn new(ell: usize, n: usize, representation: Representation) -> Result<Self, EnsembleError> {
        coeff_count(ell, n, representation)?;
        let mut block_sizes = Vec::with_capacity(n + 1);
        let mut sym = Vec::new();
        match representation {
            Representation::FullTensor => {
                for k in 0..=n {
                    block_sizes.push(ell.pow(k as u32));
                }
            }
            Representation::SymmetricMultinomial => {
                let mut ln_fact = vec![0.0f64; n + 1];
                for m in 1..=n {
                    ln_fact[m] = ln_fact[m - 1] + (m as f64).ln();
                }
                for k in 0..=n {
                    let exponents = multi_indices(ell, k as u32);
                    let weights = exponents
                        .iter()
                        .map(|a| {
                            let ln_w = ln_fact[k] - a.iter().map(|&e| ln_fact[e as usize]).sum::<f64>();
                            (0.5 * ln_w).exp()
                        })
                        .collect();
                    block_sizes.push(exponents.len());
                    sym.push(SymBlock { exponents, weights });
                }
            }
        }
        Ok(Layout {
            representation,
            ell,
            n,
            block_sizes,
            sym,
        })
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    pub fn total(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    /// Multi-indices of degree `k` (SymmetricMultinomial only).
    pub(crate) fn sym_exponents(&self, k: usize) -> &[Vec<u32>] {
        &self.sym[k].exponents
    }

    pub fn descriptor(&self) -> LayoutDescriptor {
        LayoutDescriptor {
            representation: self.representation,
            ell: self.ell,
            n: self.n,
            block_sizes: self.block_sizes.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutDescriptor {
    pub representation: Representation,
    pub ell: usize,
    pub n: usize,
    pub block_sizes: Vec<usize>,
}

/// Everything that determines the law of `G_n` plus the master seed.
#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    map: HoloMap,
    fam: PerturbationFamily,
    n: usize,
    seed: u64,
    layout: Layout,
}

impl EnsembleSpec {
    pub fn new(
        map: HoloMap,
        fam: PerturbationFamily,
        n: usize,
        representation: Representation,
        seed: u64,
    ) -> Result<Self, EnsembleError> {
        let layout = Layout::new(map.ell(), n, representation)?;
        Ok(EnsembleSpec {
            map,
            fam,
            n,
            seed,
            layout,
        })
    }

    /// Kac ensemble: `ell = 1`, `f = z`, `g = 1`.
    pub fn kac(n: usize, seed: u64) -> Self {
        let map = HoloMap::parse(&["z"]).expect("static expression");
        EnsembleSpec::new(
            map,
            PerturbationFamily::unit(),
            n,
            Representation::SymmetricMultinomial,
            seed,
        )
        .expect("ell = 1 layouts are small")
    }

    pub fn map(&self) -> &HoloMap {
        &self.map
    }

    pub fn family(&self) -> &PerturbationFamily {
        &self.fam
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn representation(&self) -> Representation {
        self.layout.representation
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        EnsembleSpec {
            seed,
            ..self.clone()
        }
    }

    pub fn with_n(&self, n: usize) -> Result<Self, EnsembleError> {
        EnsembleSpec::new(self.map.clone(), self.fam.clone(), n, self.representation(), self.seed)
    }

    pub fn describe(&self) -> String {
        let comps: Vec<&str> = self.map.components().iter().map(|p| p.source()).collect();
        format!(
            "map=[{}];family={};n={};repr={:?};seed={}",
            comps.join(","),
            self.fam.describe(),
            self.n,
            self.representation(),
            self.seed
        )
    }

    /// `v(z)` in layout order: `G_n(z) = <a, v(z)>` without conjugation.
    pub fn feature_vector(&self, z: Complex64) -> Result<Vec<Complex64>, ExprError> {
        let f: Vec<Complex64> = self
            .map
            .components()
            .iter()
            .map(|c| c.eval(z, 0))
            .collect::<Result<_, _>>()?;
        let mut out = Vec::with_capacity(self.layout.total());
        match self.layout.representation {
            Representation::FullTensor => {
                let mut prev = vec![Complex64::new(1.0, 0.0)];
                for k in 0..=self.n {
                    if k > 0 {
                        let mut next = Vec::with_capacity(prev.len() * f.len());
                        for p in &prev {
                            for fv in &f {
                                next.push(p * fv);
                            }
                        }
                        prev = next;
                    }
                    let g = self.fam.g(k as u64, z)?;
                    out.extend(prev.iter().map(|p| g * p));
                }
            }
            Representation::SymmetricMultinomial => {
                for (k, block) in self.layout.sym.iter().enumerate() {
                    let g = self.fam.g(k as u64, z)?;
                    for (alpha, w) in block.exponents.iter().zip(&block.weights) {
                        let mut m = Complex64::new(*w, 0.0);
                        for (fv, &e) in f.iter().zip(alpha) {
                            m *= powu_complex(*fv, e);
                        }
                        out.push(g * m);
                    }
                }
            }
        }
        Ok(out)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for one trial: a pure function of `(seed, trial)`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ splitmix64(trial))
}

/// One standard complex Gaussian, density `(1/pi) e^{-|a|^2}`.
pub fn complex_gaussian<R: rand::Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

/// The sampled coefficient vector of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientDraw {
    pub trial: u64,
    pub layout: LayoutDescriptor,
    pub coeffs: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct DrawRecord {
    trial: u64,
    layout: LayoutDescriptor,
    coeffs: Vec<[f64; 2]>,
}

impl CoefficientDraw {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(&DrawRecord {
            trial: self.trial,
            layout: self.layout.clone(),
            coeffs: self.coeffs.iter().map(|c| [c.re, c.im]).collect(),
        })
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        let r: DrawRecord = serde_json::from_str(s)?;
        Ok(CoefficientDraw {
            trial: r.trial,
            layout: r.layout,
            coeffs: r.coeffs.into_iter().map(|[re, im]| Complex64::new(re, im)).collect(),
        })
    }
}

pub fn sample(spec: &EnsembleSpec, trial: u64) -> CoefficientDraw {
    let mut rng = trial_rng(spec.seed, trial);
    let coeffs = (0..spec.layout.total())
        .map(|_| complex_gaussian(&mut rng))
        .collect();
    CoefficientDraw {
        trial,
        layout: spec.layout.descriptor(),
        coeffs,
    }
}

/// A sampled `G_n`: the ensemble plus one coefficient draw.
#[derive(Debug, Clone)]
pub struct RandomFunction<'a> {
    spec: &'a EnsembleSpec,
    draw: CoefficientDraw,
    /// Coefficients multiplied by their layout weight.
    scaled: Vec<Complex64>,
}

impl<'a> RandomFunction<'a> {
    pub fn new(spec: &'a EnsembleSpec, draw: CoefficientDraw) -> Self {
        assert_eq!(
            draw.coeffs.len(),
            spec.layout.total(),
            "draw does not match the ensemble layout"
        );
        let scaled = match spec.layout.representation {
            Representation::FullTensor => draw.coeffs.clone(),
            Representation::SymmetricMultinomial => {
                let weights = spec.layout.sym.iter().flat_map(|b| b.weights.iter());
                draw.coeffs.iter().zip(weights).map(|(a, w)| a * w).collect()
            }
        };
        RandomFunction { spec, draw, scaled }
    }

    pub fn sample(spec: &'a EnsembleSpec, trial: u64) -> Self {
        RandomFunction::new(spec, sample(spec, trial))
    }

    pub fn spec(&self) -> &EnsembleSpec {
        self.spec
    }

    pub fn draw(&self) -> &CoefficientDraw {
        &self.draw
    }

    /// Coefficients with the layout weights folded in.
    pub(crate) fn scaled_coeffs(&self) -> &[Complex64] {
        &self.scaled
    }

    /// Per-degree block sums `P_k(z)` as jets, with `sum |a_i| |v_i|`-style
    /// absolute companions (without the `g_k` factor).
    pub(crate) fn block_sums(&self, z: Complex64) -> Result<Vec<(Jet1, f64)>, ExprError> {
        let f = self.spec.map.jets(z)?;
        let ell = f.len();
        let n = self.spec.n;
        let mut out = Vec::with_capacity(n + 1);
        if ell == 1 {
            let mut pw = Jet1::ONE;
            let mut pw_abs = 1.0;
            let f_abs = f[0].value.norm();
            for k in 0..=n {
                if k > 0 {
                    pw = pw * f[0];
                    pw_abs *= f_abs;
                }
                let a = self.scaled[k];
                out.push((pw.scale(a), a.norm() * pw_abs));
            }
            return Ok(out);
        }
        let f_abs: Vec<f64> = f.iter().map(|j| j.value.norm()).collect();
        match self.spec.layout.representation {
            Representation::FullTensor => {
                let mut start = 0;
                for k in 0..=n {
                    let len = self.spec.layout.block_sizes[k];
                    let block = &self.scaled[start..start + len];
                    start += len;
                    let mut cur: Vec<Jet1> = block.iter().map(|a| Jet1::constant(*a)).collect();
                    let mut cur_abs: Vec<f64> = block.iter().map(|a| a.norm()).collect();
                    for _ in 0..k {
                        let m = cur.len() / ell;
                        let mut next = Vec::with_capacity(m);
                        let mut next_abs = Vec::with_capacity(m);
                        for p in 0..m {
                            let mut acc = Jet1::ZERO;
                            let mut acc_abs = 0.0;
                            for nu in 0..ell {
                                acc = acc + cur[p * ell + nu] * f[nu];
                                acc_abs += cur_abs[p * ell + nu] * f_abs[nu];
                            }
                            next.push(acc);
                            next_abs.push(acc_abs);
                        }
                        cur = next;
                        cur_abs = next_abs;
                    }
                    out.push((cur[0], cur_abs[0]));
                }
            }
            Representation::SymmetricMultinomial => {
                // powers[j][e] = f_j^e
                let powers: Vec<Vec<(Jet1, f64)>> = f
                    .iter()
                    .zip(&f_abs)
                    .map(|(fj, fa)| {
                        let mut row = Vec::with_capacity(n + 1);
                        let mut p = Jet1::ONE;
                        let mut pa = 1.0;
                        for e in 0..=n {
                            if e > 0 {
                                p = p * *fj;
                                pa *= fa;
                            }
                            row.push((p, pa));
                        }
                        row
                    })
                    .collect();
                let mut start = 0;
                for block in &self.spec.layout.sym {
                    let mut acc = Jet1::ZERO;
                    let mut acc_abs = 0.0;
                    for (i, alpha) in block.exponents.iter().enumerate() {
                        let mut m = Jet1::ONE;
                        let mut ma = 1.0;
                        for (j, &e) in alpha.iter().enumerate() {
                            if e > 0 {
                                let (p, pa) = powers[j][e as usize];
                                m = m * p;
                                ma *= pa;
                            }
                        }
                        let a = self.scaled[start + i];
                        acc = acc + m.scale(a);
                        acc_abs += a.norm() * ma;
                    }
                    start += block.exponents.len();
                    out.push((acc, acc_abs));
                }
            }
        }
        Ok(out)
    }

    /// `G_n(z)` and `G_n'(z)` together with the absolute scale `sum_i |a_i v_i(z)|`.
    pub fn eval_with_scale(&self, z: Complex64) -> Result<(Jet1, f64), ExprError> {
        let blocks = self.block_sums(z)?;
        let mut total = Jet1::ZERO;
        let mut scale = 0.0;
        let unit = self.spec.fam.is_unit();
        for (k, (p, pa)) in blocks.into_iter().enumerate() {
            if unit {
                total = total + p;
                scale += pa;
            } else {
                let g = self.spec.fam.g_jet(k as u64, z)?;
                total = total + g * p;
                scale += g.value.norm() * pa;
            }
        }
        Ok((total, scale))
    }

    pub fn eval_jet(&self, z: Complex64) -> Result<Jet1, ExprError> {
        Ok(self.eval_with_scale(z)?.0)
    }
}

/// Evaluates `G_n` and its derivative at `z`.
pub fn eval_g(rf: &RandomFunction<'_>, z: Complex64) -> Result<Jet1, ExprError> {
    rf.eval_jet(z)
}

/// `E[G_n(z) conj(G_n(w))] = <v(z), v(w)>` by direct summation over the layout.
pub fn kernel_direct(spec: &EnsembleSpec, z: Complex64, w: Complex64) -> Result<Complex64, ExprError> {
    let vz = spec.feature_vector(z)?;
    let vw = spec.feature_vector(w)?;
    Ok(vz.iter().zip(&vw).map(|(a, b)| a * b.conj()).sum())
}

/// `sum_k g_k(z) conj(g_k(w)) (sum_j f_j(z) conj(f_j(w)))^k`.
pub fn kernel_closed_form(
    map: &HoloMap,
    fam: &PerturbationFamily,
    n: usize,
    z: Complex64,
    w: Complex64,
) -> Result<Complex64, ExprError> {
    let mut s = Complex64::new(0.0, 0.0);
    for c in map.components() {
        s += c.eval(z, 0)? * c.eval(w, 0)?.conj();
    }
    let mut total = Complex64::new(0.0, 0.0);
    let mut pw = Complex64::new(1.0, 0.0);
    for k in 0..=n {
        if k > 0 {
            pw *= s;
        }
        total += fam.g(k as u64, z)? * fam.g(k as u64, w)?.conj() * pw;
    }
    Ok(total)
}

/// `log sum_{k=0}^n t^k` for `t >= 0`, summing terms that are all at most one.
pub fn log_geometric_sum(t: f64, n: usize) -> f64 {
    if t <= 1.0 {
        let mut s = 0.0;
        let mut p = 1.0;
        for k in 0..=n {
            if k > 0 {
                p *= t;
                if p == 0.0 {
                    break;
                }
            }
            s += p;
        }
        s.ln()
    } else {
        n as f64 * t.ln() + log_geometric_sum(1.0 / t, n)
    }
}

/// `(1/n) log(1 + t + ... + t^n)` with `t = |f|^2`.
pub fn gamma_from_norm_sq(t: f64, n: usize) -> f64 {
    if t <= 1.0 {
        log_geometric_sum(t, n) / n as f64
    } else {
        // log t + (1/n) log sum t^{-k}: exact bracketing against log+ t
        t.ln() + log_geometric_sum(1.0 / t, n) / n as f64
    }
}

/// `log+ t = max(0, log t)`.
pub fn phi_from_norm_sq(t: f64) -> f64 {
    if t > 1.0 {
        t.ln()
    } else {
        0.0
    }
}

/// `gamma_n(z) = (1/n) log sum_{k=0}^n |f(z)|^{2k}`.
pub fn gamma_n(map: &HoloMap, n: usize, z: Complex64) -> Result<f64, ExprError> {
    assert!(n >= 1, "gamma_n needs n >= 1");
    Ok(gamma_from_norm_sq(map.norm_sq(z)?, n))
}

/// `phi(z) = log+ |f(z)|^2`.
pub fn phi(map: &HoloMap, z: Complex64) -> Result<f64, ExprError> {
    Ok(phi_from_norm_sq(map.norm_sq(z)?))
}

/// `log sum_k exp(terms[k])` with the maximum factored out.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// `log h_n(z)` from precomputed `log |g_k|^2` and `t = |f|^2`.
pub fn log_h_from_parts(log_g_sq: &[f64], t: f64) -> f64 {
    let log_t = t.ln();
    let terms: Vec<f64> = log_g_sq
        .iter()
        .enumerate()
        .map(|(k, lg)| if k == 0 { *lg } else { lg + k as f64 * log_t })
        .collect();
    log_sum_exp(&terms)
}

/// `log h_n(z) = log sum_{k=0}^n |g_k(z)|^2 |f(z)|^{2k}`, in the log domain.
pub fn log_h_n(map: &HoloMap, fam: &PerturbationFamily, n: usize, z: Complex64) -> Result<f64, ExprError> {
    let t = map.norm_sq(z)?;
    if fam.is_unit() {
        return Ok(log_geometric_sum(t, n));
    }
    Ok(log_h_from_parts(&fam.log_abs_sq_series(z, n)?, t))
}

/// `h_n(z) = E|G_n(z)|^2`; overflows to infinity where `log_h_n` does not.
pub fn h_n(spec: &EnsembleSpec, z: Complex64) -> Result<f64, ExprError> {
    Ok(log_h_n(&spec.map, &spec.fam, spec.n, z)?.exp())
}

/// Monte Carlo estimate of `E log |<a, u>|` for a fixed unit vector `u`, returning
/// `(mean, standard error)`.
pub fn mean_log_abs_projection(u: &[Complex64], samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = trial_rng(seed, 0);
    let mut stats = crate::stats::RunningStats::default();
    for _ in 0..samples {
        let mut dot = Complex64::new(0.0, 0.0);
        for ui in u {
            dot += complex_gaussian(&mut rng) * ui.conj();
        }
        stats.push(dot.norm().ln());
    }
    (stats.mean(), stats.standard_error())
}

/// `int log|a| (1/pi) e^{-|a|^2} dA(a)` by one-dimensional quadrature.
///
/// In polar coordinates with `s = r^2 = e^x` the integral becomes
/// `(1/2) int x e^{x - e^x} dx`, which decays doubly exponentially on both sides.
pub fn log_modulus_mean_quadrature() -> f64 {
    let (lo, hi, steps) = (-60.0f64, 6.0f64, 200_000usize);
    let h = (hi - lo) / steps as f64;
    let mut s = 0.0;
    for i in 0..=steps {
        let x = lo + i as f64 * h;
        let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
        s += w * x * (x - x.exp()).exp();
    }
    0.5 * s * h
}
