//! Monte Carlo driver: sample `G_n`, find its zeros in a window, pair the normalized
//! counting measure with test functions and aggregate over trials.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::ensemble::{EnsembleError, EnsembleSpec, RandomFunction};
use crate::holomap::{audit_hypotheses, AuditReport, HoloError, Rect, Window};
use crate::provenance::digest_hex;
use crate::stats::RunningStats;
use crate::theory::{
    expectation_pairing, limit_pairing_with, rate_bound, CurveNormalization, TestFunction, TheoryError,
};
use crate::zerofind::{expand_poly, roots_aberth, zeros_subdivide, SubdivideOptions, ZeroError, ZeroList};

/// Zero lists are kept by default only up to this degree.
pub const RETAIN_ZEROS_MAX_N: usize = 300;
/// Largest tolerated fraction of failed trials.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;
/// Relative residual target handed to the polynomial root finder.
pub const ABERTH_TOL: f64 = 1e-10;
/// Grid used to audit the growth hypotheses over the experiment window.
const AUDIT_NODES: usize = 41;

#[derive(Debug, Error)]
pub enum McError {
    #[error("at least 2 trials are needed, got {0}")]
    TooFewTrials(u64),
    #[error("{failed} of {total} trials failed (more than 1%); first failure: {first}")]
    TooManyFailures { failed: u64, total: u64, first: String },
    #[error("zero lists were not retained")]
    NoZeroData,
    #[error("growth hypotheses fail on the window: {0}")]
    AuditFailed(String),
    #[error("test function `{0}` is not supported inside the window")]
    SupportOutsideWindow(String),
    #[error("n list must be increasing")]
    BadSweep,
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Holo(#[from] HoloError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Zero(#[from] ZeroError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Aberth,
    Subdivide,
    /// Aberth when the draw expands to a polynomial, subdivision otherwise.
    #[default]
    Auto,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub spec: EnsembleSpec,
    pub window: Rect,
    pub trials: u64,
    pub rho_set: Vec<TestFunction>,
    pub method: Method,
    /// `None` keeps zero lists iff `n <= RETAIN_ZEROS_MAX_N`.
    pub retain_zeros: Option<bool>,
    /// Run even if the audit of the growth hypotheses fails; recorded in the output.
    pub audit_override: bool,
}

impl Experiment {
    pub fn new(spec: EnsembleSpec, window: Rect, trials: u64, rho_set: Vec<TestFunction>) -> Self {
        Experiment {
            spec,
            window,
            trials,
            rho_set,
            method: Method::Auto,
            retain_zeros: None,
            audit_override: false,
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_retention(mut self, retain: bool) -> Self {
        self.retain_zeros = Some(retain);
        self
    }

    fn retains(&self) -> bool {
        self.retain_zeros.unwrap_or(self.spec.n() <= RETAIN_ZEROS_MAX_N)
    }

    /// Canonical text of everything that determines the output.
    pub fn canonical(&self) -> String {
        let rhos: Vec<String> = self
            .rho_set
            .iter()
            .map(|r| serde_json::to_string(r).expect("test functions serialize"))
            .collect();
        format!(
            "{}|window={:?}|trials={}|method={:?}|rho=[{}]",
            self.spec.describe(),
            [self.window.x0, self.window.x1, self.window.y0, self.window.y1],
            self.trials,
            self.method,
            rhos.join(",")
        )
    }

    pub fn digest(&self) -> String {
        digest_hex(self.canonical().as_bytes())
    }

    fn validate(&self) -> Result<Option<AuditReport>, McError> {
        if self.trials < 2 {
            return Err(McError::TooFewTrials(self.trials));
        }
        for rho in &self.rho_set {
            if !self.window.contains_rect(&rho.support()) {
                return Err(McError::SupportOutsideWindow(rho.id.clone()));
            }
        }
        if self.spec.family().is_unit() {
            return Ok(None);
        }
        let grid = Window::new(self.window, AUDIT_NODES, AUDIT_NODES)?;
        let report = audit_hypotheses(self.spec.map(), self.spec.family(), &grid, self.spec.n().max(1) as u64)?;
        if !report.passed() && !self.audit_override {
            let failed: Vec<String> = report
                .checks
                .iter()
                .filter(|c| !c.pass)
                .map(|c| c.hypothesis.clone())
                .collect();
            return Err(McError::AuditFailed(failed.join(", ")));
        }
        Ok(Some(report))
    }
}

/// Zeros of one draw inside `window`.
pub fn trial_zeros(rf: &RandomFunction<'_>, window: &Rect, method: Method) -> Result<ZeroList, ZeroError> {
    if rf.spec().n() == 0 && rf.spec().family().is_constant_in_z() {
        return Ok(ZeroList {
            zeros: Vec::new(),
            window: Some(*window),
        });
    }
    let aberth = |p| -> Result<ZeroList, ZeroError> {
        let mut zl = roots_aberth(&p, ABERTH_TOL)?.restrict(window);
        zl.window = Some(*window);
        Ok(zl)
    };
    match method {
        Method::Aberth => aberth(expand_poly(rf)?),
        Method::Subdivide => zeros_subdivide(rf, window, &SubdivideOptions::default()),
        Method::Auto => match expand_poly(rf) {
            Ok(p) => aberth(p),
            Err(ZeroError::NotPolynomial(_)) => zeros_subdivide(rf, window, &SubdivideOptions::default()),
            Err(e) => Err(e),
        },
    }
}

/// `(1/n) sum_{zeros in window} m_z rho(z)`, with `n` replaced by 1 when `n = 0`.
pub fn pair_zeros(zeros: &ZeroList, rho: &TestFunction, n: usize) -> f64 {
    let s: f64 = zeros
        .zeros
        .iter()
        .map(|z| f64::from(z.multiplicity) * rho.value(z.z))
        .sum();
    s / n.max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoSummary {
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
    pub n_trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub spec_digest: String,
    pub n: usize,
    pub trials_ok: u64,
    pub trials_failed: u64,
    pub audit_overridden: bool,
    pub per_rho: BTreeMap<String, RhoSummary>,
    pub failures: Vec<TrialFailure>,
    /// Per-trial pairings in `rho_set` order, successful trials only, in trial order.
    #[serde(skip)]
    pub pairings: Vec<(u64, Vec<f64>)>,
    #[serde(skip)]
    pub zeros: Option<Vec<(u64, ZeroList)>>,
}

impl EmpiricalMeasure {
    pub fn summary(&self, rho_id: &str) -> Option<&RhoSummary> {
        self.per_rho.get(rho_id)
    }

    /// Per-trial pairing values of the `k`-th test function.
    pub fn series(&self, k: usize) -> Vec<f64> {
        self.pairings.iter().map(|(_, v)| v[k]).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    /// CSV with header `trial,re,im,multiplicity,residual`.
    pub fn zeros_csv(&self) -> Result<String, McError> {
        let zeros = self.zeros.as_ref().ok_or(McError::NoZeroData)?;
        let mut out = String::from(crate::zerofind::ZeroList::CSV_HEADER);
        out.push('\n');
        for (trial, zl) in zeros {
            for row in zl.csv_rows(*trial) {
                out.push_str(&row);
                out.push('\n');
            }
        }
        Ok(out)
    }
}

type TrialOutcome = Result<(Vec<f64>, Option<ZeroList>), ZeroError>;

/// Runs every trial, in parallel, and folds the results in trial order so the
/// aggregate does not depend on the schedule.
pub fn run(exp: &Experiment) -> Result<EmpiricalMeasure, McError> {
    let audit = exp.validate()?;
    let retain = exp.retains();
    let n = exp.spec.n();
    let outcomes: Vec<(u64, TrialOutcome)> = (0..exp.trials)
        .into_par_iter()
        .map(|t| {
            let rf = RandomFunction::sample(&exp.spec, t);
            let res = trial_zeros(&rf, &exp.window, exp.method).map(|zl| {
                let vals = exp.rho_set.iter().map(|rho| pair_zeros(&zl, rho, n)).collect();
                (vals, retain.then_some(zl))
            });
            (t, res)
        })
        .collect();

    let mut stats = vec![RunningStats::default(); exp.rho_set.len()];
    let mut pairings = Vec::with_capacity(outcomes.len());
    let mut zeros = retain.then(Vec::new);
    let mut failures = Vec::new();
    for (t, res) in outcomes {
        match res {
            Ok((vals, zl)) => {
                for (s, v) in stats.iter_mut().zip(&vals) {
                    s.push(*v);
                }
                pairings.push((t, vals));
                if let (Some(all), Some(zl)) = (zeros.as_mut(), zl) {
                    all.push((t, zl));
                }
            }
            Err(e) => failures.push(TrialFailure {
                trial: t,
                error: e.to_string(),
            }),
        }
    }
    let failed = failures.len() as u64;
    if failed as f64 > MAX_FAILURE_FRACTION * exp.trials as f64 {
        return Err(McError::TooManyFailures {
            failed,
            total: exp.trials,
            first: failures[0].error.clone(),
        });
    }
    let per_rho = exp
        .rho_set
        .iter()
        .zip(&stats)
        .map(|(rho, s)| {
            (
                rho.id.clone(),
                RhoSummary {
                    mean: s.mean(),
                    sd: s.std_dev(),
                    se: s.standard_error(),
                    n_trials: s.count(),
                },
            )
        })
        .collect();
    Ok(EmpiricalMeasure {
        spec_digest: exp.digest(),
        n,
        trials_ok: exp.trials - failed,
        trials_failed: failed,
        audit_overridden: audit.is_some_and(|a| !a.passed()),
        per_rho,
        failures,
        pairings,
        zeros,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub center: [f64; 2],
    /// Bin edges in `|z - center|`, `bins + 1` values from 0 to `r_max`.
    pub radial_edges: Vec<f64>,
    /// Fraction of zeros per radial bin.
    pub radial_mass: Vec<f64>,
    /// Zero counts per angular bin over `[-pi, pi)`.
    pub angular_counts: Vec<u64>,
    pub chi_square: f64,
    pub p_value: f64,
    pub total: u64,
    radii: Vec<f64>,
}

impl RadialProfile {
    /// Fraction of zeros with `lo <= |z - center| <= hi`.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        let inside = self.radii.iter().filter(|&&r| lo <= r && r <= hi).count();
        inside as f64 / self.total.max(1) as f64
    }

    /// CSV with header `kind,lo,hi,value`: radial masses then angular counts.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,lo,hi,value\n");
        for (k, m) in self.radial_mass.iter().enumerate() {
            out.push_str(&format!("radial,{:e},{:e},{:e}\n", self.radial_edges[k], self.radial_edges[k + 1], m));
        }
        let bins = self.angular_counts.len();
        for (k, c) in self.angular_counts.iter().enumerate() {
            let lo = -PI + 2.0 * PI * k as f64 / bins as f64;
            let hi = -PI + 2.0 * PI * (k + 1) as f64 / bins as f64;
            out.push_str(&format!("angular,{lo:e},{hi:e},{c}\n"));
        }
        out
    }
}

/// Radial and angular histograms of zero locations around `center`, with a
/// chi-square test of angular uniformity (`bins - 1` degrees of freedom).
pub fn radial_profile_of(points: &[Complex64], center: Complex64, bins: usize, r_max: f64) -> RadialProfile {
    assert!(bins >= 2, "need at least two bins");
    let mut radial = vec![0u64; bins];
    let mut angular = vec![0u64; bins];
    let mut radii = Vec::with_capacity(points.len());
    for z in points {
        let d = z - center;
        let r = d.norm();
        radii.push(r);
        let rb = ((r / r_max) * bins as f64).floor() as usize;
        radial[rb.min(bins - 1)] += 1;
        let ab = ((d.arg() + PI) / (2.0 * PI) * bins as f64).floor() as usize;
        angular[ab.min(bins - 1)] += 1;
    }
    let total = points.len() as u64;
    let expected = total as f64 / bins as f64;
    let chi_square: f64 = angular
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected.max(f64::MIN_POSITIVE))
        .sum();
    let p_value = ChiSquared::new((bins - 1) as f64)
        .expect("positive degrees of freedom")
        .sf(chi_square);
    RadialProfile {
        center: [center.re, center.im],
        radial_edges: (0..=bins).map(|k| r_max * k as f64 / bins as f64).collect(),
        radial_mass: radial.iter().map(|&c| c as f64 / total.max(1) as f64).collect(),
        angular_counts: angular,
        chi_square,
        p_value,
        total,
        radii,
    }
}

/// [`radial_profile_of`] over all retained zeros, counted with multiplicity, out to
/// the farthest window corner.
pub fn radial_profile(em: &EmpiricalMeasure, window: &Rect, center: Complex64, bins: usize) -> Result<RadialProfile, McError> {
    let zeros = em.zeros.as_ref().ok_or(McError::NoZeroData)?;
    let points: Vec<Complex64> = zeros
        .iter()
        .flat_map(|(_, zl)| zl.zeros.iter().flat_map(|z| std::iter::repeat_n(z.z, z.multiplicity as usize)))
        .collect();
    let r_max = window
        .corners()
        .iter()
        .map(|c| (c - center).norm())
        .fold(0.0, f64::max);
    Ok(radial_profile_of(&points, center, bins, r_max))
}

/// Sample lag-1 autocorrelation.
pub fn lag1_autocorrelation(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 3 {
        return f64::NAN;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    if var == 0.0 {
        return 0.0;
    }
    let cov: f64 = xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    cov / var
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rho_id: String,
    pub n: usize,
    pub expectation: f64,
    pub expectation_error: f64,
    pub mc_mean: Option<f64>,
    pub mc_se: Option<f64>,
    pub limit: f64,
    pub gap: f64,
    /// `(log(n+1) + C_fam)/(4 pi n) int |Delta rho|`
    pub rate_bound: f64,
    /// `gap n / log(n+1)`
    pub rate_ratio: f64,
}

pub const SWEEP_CSV_HEADER: &str =
    "rho_id,n,expectation,expectation_error,mc_mean,mc_se,limit,gap,rate_bound,rate_ratio";

impl SweepRow {
    pub fn csv_row(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
        format!(
            "{},{},{:e},{:e},{},{},{:e},{:e},{:e},{:e}",
            self.rho_id,
            self.n,
            self.expectation,
            self.expectation_error,
            opt(self.mc_mean),
            opt(self.mc_se),
            self.limit,
            self.gap,
            self.rate_bound,
            self.rate_ratio
        )
    }

    /// Whether the Monte Carlo mean is within `k` standard errors of the expectation.
    pub fn mc_agrees(&self, k: f64) -> Option<bool> {
        Some((self.mc_mean? - self.expectation).abs() <= k * self.mc_se?)
    }
}

/// For every `n` and test function: the exact expectation, optionally the Monte
/// Carlo mean, the limit pairing and the gap with its rate bound. Theory quantities
/// use the quadrature grid `quad`, which must contain every support.
pub fn convergence_sweep(
    base: &Experiment,
    n_list: &[usize],
    quad: &Window,
    with_mc: bool,
) -> Result<Vec<SweepRow>, McError> {
    convergence_sweep_with(base, n_list, quad, with_mc, CurveNormalization::Canonical, &BTreeMap::new())
}

/// [`convergence_sweep`] with a chosen curve normalization for the limit column and
/// precomputed Monte Carlo results keyed by `n`, used instead of fresh runs.
pub fn convergence_sweep_with(
    base: &Experiment,
    n_list: &[usize],
    quad: &Window,
    with_mc: bool,
    norm: CurveNormalization,
    precomputed: &BTreeMap<usize, EmpiricalMeasure>,
) -> Result<Vec<SweepRow>, McError> {
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(McError::BadSweep);
    }
    let map = base.spec.map();
    let fam = base.spec.family();
    let limits = base
        .rho_set
        .iter()
        .map(|rho| limit_pairing_with(map, rho, quad, norm))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for &n in n_list {
        let spec = base.spec.with_n(n)?;
        let em = if let Some(m) = precomputed.get(&n) {
            Some(m.clone())
        } else if with_mc {
            let exp = Experiment {
                spec: spec.clone(),
                ..base.clone()
            };
            Some(run(&exp)?)
        } else {
            None
        };
        for (rho, lim) in base.rho_set.iter().zip(&limits) {
            let e = expectation_pairing(&spec, rho, quad)?;
            let rb = rate_bound(map, fam, n, rho, quad)?;
            let summary = em.as_ref().and_then(|m| m.summary(&rho.id));
            let gap = (e.value - lim.total).abs();
            let nn = n.max(1) as f64;
            rows.push(SweepRow {
                rho_id: rho.id.clone(),
                n,
                expectation: e.value,
                expectation_error: e.error,
                mc_mean: summary.map(|s| s.mean),
                mc_se: summary.map(|s| s.se),
                limit: lim.total,
                gap,
                rate_bound: rb.bound,
                rate_ratio: gap * nn / (nn + 1.0).ln(),
            });
        }
    }
    Ok(rows)
}
