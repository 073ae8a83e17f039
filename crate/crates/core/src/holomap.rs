//! The holomorphic map `f = (f_1, ..., f_ell)`, the perturbation family `{g_j}` with
//! its growth certificates, and a grid audit of the growth hypotheses.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{ExprError, ExprProgram, Jet1};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HoloError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("a map needs at least one component")]
    EmptyMap,
    #[error("map component `{0}` uses the weight index j")]
    IndexInMap(String),
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("invalid perturbation family: {0}")]
    InvalidFamily(String),
    #[error("jmax must be at least 1")]
    InvalidJmax,
}

/// Closed axis-aligned rectangle `[x0, x1] x [y0, y1]` in the complex plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }

    pub fn square(half_width: f64) -> Self {
        Rect::new(-half_width, half_width, -half_width, half_width)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn diam(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> Complex64 {
        Complex64::new(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    pub fn contains(&self, z: Complex64) -> bool {
        z.re >= self.x0 && z.re <= self.x1 && z.im >= self.y0 && z.im <= self.y1
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x0 >= self.x0 && other.x1 <= self.x1 && other.y0 >= self.y0 && other.y1 <= self.y1
    }

    /// Grows every side by `delta`.
    pub fn inflate(&self, delta: f64) -> Rect {
        Rect::new(self.x0 - delta, self.x1 + delta, self.y0 - delta, self.y1 + delta)
    }

    /// Corners in counter-clockwise order starting at the lower left.
    pub fn corners(&self) -> [Complex64; 4] {
        [
            Complex64::new(self.x0, self.y0),
            Complex64::new(self.x1, self.y0),
            Complex64::new(self.x1, self.y1),
            Complex64::new(self.x0, self.y1),
        ]
    }
}

/// A rectangle together with a sampling grid of `nx x ny` nodes (endpoints included).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub rect: Rect,
    pub nx: usize,
    pub ny: usize,
}

impl Window {
    pub fn new(rect: Rect, nx: usize, ny: usize) -> Result<Self, HoloError> {
        if !(rect.x0 < rect.x1 && rect.y0 < rect.y1) {
            return Err(HoloError::InvalidWindow(format!(
                "need x0 < x1 and y0 < y1, got {rect:?}"
            )));
        }
        if nx < 2 || ny < 2 {
            return Err(HoloError::InvalidWindow(format!(
                "need at least 2 nodes per axis, got {nx} x {ny}"
            )));
        }
        Ok(Window { rect, nx, ny })
    }

    pub fn dx(&self) -> f64 {
        self.rect.width() / (self.nx - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        self.rect.height() / (self.ny - 1) as f64
    }

    pub fn node(&self, ix: usize, iy: usize) -> Complex64 {
        // endpoints are hit exactly
        let x = if ix + 1 == self.nx {
            self.rect.x1
        } else {
            self.rect.x0 + ix as f64 * self.dx()
        };
        let y = if iy + 1 == self.ny {
            self.rect.y1
        } else {
            self.rect.y0 + iy as f64 * self.dy()
        };
        Complex64::new(x, y)
    }

    /// All grid nodes, row-major in `y` then `x`.
    pub fn nodes(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.nx * self.ny);
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                out.push(self.node(ix, iy));
            }
        }
        out
    }
}

/// Local data of `f` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapPoint {
    /// `|f|^2 = sum |f_j|^2`
    pub norm_sq: f64,
    /// `sum |f_j'|^2`
    pub deriv_norm_sq: f64,
    /// `sum conj(f_j) f_j'`
    pub inner: Complex64,
    /// `sum_{i<k} |f_i f_k' - f_k f_i'|^2 = |f|^2 |f'|^2 - |inner|^2` (Lagrange identity)
    pub wedge_sq: f64,
}

impl MapPoint {
    /// Gradient of `|f|^2` in the plane, packed as `d/dx + i d/dy`.
    pub fn grad_norm_sq(&self) -> Complex64 {
        self.inner.conj() * 2.0
    }
}

/// `f = (f_1, ..., f_ell)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HoloMap {
    components: Vec<ExprProgram>,
}

impl HoloMap {
    pub fn new(components: Vec<ExprProgram>) -> Result<Self, HoloError> {
        if components.is_empty() {
            return Err(HoloError::EmptyMap);
        }
        if let Some(c) = components.iter().find(|c| c.depends_on_j()) {
            return Err(HoloError::IndexInMap(c.source().to_string()));
        }
        Ok(HoloMap { components })
    }

    pub fn parse<S: AsRef<str>>(texts: &[S]) -> Result<Self, HoloError> {
        let comps = texts
            .iter()
            .map(|t| ExprProgram::parse(t.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        HoloMap::new(comps)
    }

    pub fn ell(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[ExprProgram] {
        &self.components
    }

    pub fn jets(&self, z: Complex64) -> Result<Vec<Jet1>, ExprError> {
        self.components.iter().map(|c| c.eval_jet(z, 0)).collect()
    }

    pub fn norm_sq(&self, z: Complex64) -> Result<f64, ExprError> {
        let mut s = 0.0;
        for c in &self.components {
            s += c.eval(z, 0)?.norm_sqr();
        }
        Ok(s)
    }

    /// `|f(z)| = (sum |f_j(z)|^2)^(1/2)`.
    pub fn norm(&self, z: Complex64) -> Result<f64, ExprError> {
        Ok(self.norm_sq(z)?.sqrt())
    }

    pub fn point(&self, z: Complex64) -> Result<MapPoint, ExprError> {
        let jets = self.jets(z)?;
        Ok(map_point(&jets))
    }
}

pub(crate) fn map_point(jets: &[Jet1]) -> MapPoint {
    let mut norm_sq = 0.0;
    let mut deriv_norm_sq = 0.0;
    let mut inner = Complex64::new(0.0, 0.0);
    for j in jets {
        norm_sq += j.value.norm_sqr();
        deriv_norm_sq += j.deriv.norm_sqr();
        inner += j.value.conj() * j.deriv;
    }
    let mut wedge_sq = 0.0;
    for a in 0..jets.len() {
        for b in (a + 1)..jets.len() {
            wedge_sq += (jets[a].value * jets[b].deriv - jets[b].value * jets[a].deriv).norm_sqr();
        }
    }
    MapPoint {
        norm_sq,
        deriv_norm_sq,
        inner,
        wedge_sq,
    }
}

/// A growth-exponent sequence `j -> kappa_j` (and likewise lambda, xi, eta).
#[derive(Debug, Clone, PartialEq)]
pub enum Certificate {
    Zero,
    Const(u32),
    /// `ceil(log2(j + 1))`
    CeilLog2,
    /// A closed form in `j` (must not mention `z`).
    Formula(ExprProgram),
}

impl Certificate {
    pub fn value(&self, j: u64) -> Result<f64, ExprError> {
        Ok(match self {
            Certificate::Zero => 0.0,
            Certificate::Const(c) => *c as f64,
            Certificate::CeilLog2 => ceil_log2(j + 1) as f64,
            Certificate::Formula(p) => p.eval(Complex64::new(0.0, 0.0), j as i64)?.re,
        })
    }

    /// `kappa_j / j -> 0`: by construction for the built-ins, by the value at
    /// `j = 10^6` for formulas.
    pub fn is_sublinear(&self) -> Result<bool, ExprError> {
        Ok(match self {
            Certificate::Zero | Certificate::Const(_) | Certificate::CeilLog2 => true,
            Certificate::Formula(_) => {
                let j = 1_000_000u64;
                self.value(j)? / (j as f64) < 1e-3
            }
        })
    }

    pub fn describe(&self) -> String {
        match self {
            Certificate::Zero => "0".to_string(),
            Certificate::Const(c) => c.to_string(),
            Certificate::CeilLog2 => "ceil_log2".to_string(),
            Certificate::Formula(p) => p.source().to_string(),
        }
    }

    /// Running maxima `max(kappa_0, ..., kappa_j)` for `j = 0..=jmax`.
    pub fn running_max(&self, jmax: u64) -> Result<Vec<f64>, ExprError> {
        let mut out = Vec::with_capacity(jmax as usize + 1);
        let mut m = f64::NEG_INFINITY;
        for j in 0..=jmax {
            m = m.max(self.value(j)?);
            out.push(m);
        }
        Ok(out)
    }
}

fn ceil_log2(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

/// A positive envelope function `A_z` or `B_z`.
#[derive(Debug, Clone, PartialEq)]
pub enum Envelope {
    Const(f64),
    /// `e^{|z|}`
    ExpModulus,
    /// `|p(z)|` for a user expression.
    Expr(ExprProgram),
}

impl Envelope {
    pub fn value(&self, z: Complex64) -> Result<f64, ExprError> {
        Ok(match self {
            Envelope::Const(c) => *c,
            Envelope::ExpModulus => z.norm().exp(),
            Envelope::Expr(p) => p.eval(z, 0)?.norm(),
        })
    }

    pub fn describe(&self) -> String {
        match self {
            Envelope::Const(c) => format!("{c}"),
            Envelope::ExpModulus => "exp_modulus".to_string(),
            Envelope::Expr(p) => p.source().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FamilyKind {
    /// `g_j = 1`
    Unit,
    /// `g_j = c_j`, an expression in `j` only.
    ScalarSeq(ExprProgram),
    /// `g_j(z)`, an expression in `z` and `j`.
    ExprFamily(ExprProgram),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificates {
    pub kappa: Certificate,
    pub lambda: Certificate,
    pub xi: Certificate,
    pub eta: Certificate,
}

impl Certificates {
    pub fn zero() -> Self {
        Certificates {
            kappa: Certificate::Zero,
            lambda: Certificate::Zero,
            xi: Certificate::Zero,
            eta: Certificate::Zero,
        }
    }
}

/// The perturbation weights `g_j` with their declared growth certificates.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationFamily {
    kind: FamilyKind,
    certs: Certificates,
    a_env: Envelope,
    b_env: Envelope,
}

impl PerturbationFamily {
    pub fn new(
        kind: FamilyKind,
        certs: Certificates,
        a_env: Envelope,
        b_env: Envelope,
    ) -> Result<Self, HoloError> {
        if let FamilyKind::ScalarSeq(p) = &kind {
            if p.depends_on_z() {
                return Err(HoloError::InvalidFamily(format!(
                    "scalar sequence `{}` mentions z",
                    p.source()
                )));
            }
        }
        for (name, c) in [
            ("kappa", &certs.kappa),
            ("lambda", &certs.lambda),
            ("xi", &certs.xi),
            ("eta", &certs.eta),
        ] {
            if let Certificate::Formula(p) = c {
                if p.depends_on_z() {
                    return Err(HoloError::InvalidFamily(format!("{name} formula mentions z")));
                }
            }
            if !c.is_sublinear()? {
                return Err(HoloError::InvalidFamily(format!(
                    "{name} = {} does not grow sublinearly",
                    c.describe()
                )));
            }
        }
        for (name, e) in [("A", &a_env), ("B", &b_env)] {
            if let Envelope::Const(c) = e {
                if !(*c > 0.0 && c.is_finite()) {
                    return Err(HoloError::InvalidFamily(format!("{name} must be positive")));
                }
            }
        }
        Ok(PerturbationFamily {
            kind,
            certs,
            a_env,
            b_env,
        })
    }

    pub fn unit() -> Self {
        PerturbationFamily {
            kind: FamilyKind::Unit,
            certs: Certificates::zero(),
            a_env: Envelope::Const(1.0),
            b_env: Envelope::Const(1.0),
        }
    }

    /// Names accepted by [`PerturbationFamily::builtin`].
    pub const BUILTIN_NAMES: [&'static str; 4] = ["unit", "poly_growth", "poly_decay", "exp_tilt"];

    /// Ready-made families with their certificates:
    ///
    /// * `unit`: `g_j = 1`
    /// * `poly_growth`: `g_j = j + 1`, `kappa_j = ceil(log2(j + 1))`, `B = 2`
    /// * `poly_decay`: `g_j = 1/(j + 1)`, `xi_j = ceil(log2(j + 1))`, `A = 2`
    /// * `exp_tilt`: `g_j = exp(((-1)^j/(j + 1)) z)`, `kappa = xi = 1`, `A = B = e^{|z|}`
    pub fn builtin(name: &str) -> Option<Self> {
        let parse = |s: &str| ExprProgram::parse(s).expect("static expression");
        let fam = match name {
            "unit" => return Some(PerturbationFamily::unit()),
            "poly_growth" => PerturbationFamily::new(
                FamilyKind::ScalarSeq(parse("j + 1")),
                Certificates {
                    kappa: Certificate::CeilLog2,
                    ..Certificates::zero()
                },
                Envelope::Const(1.0),
                Envelope::Const(2.0),
            ),
            "poly_decay" => PerturbationFamily::new(
                FamilyKind::ScalarSeq(parse("1/(j + 1)")),
                Certificates {
                    xi: Certificate::CeilLog2,
                    ..Certificates::zero()
                },
                Envelope::Const(2.0),
                Envelope::Const(1.0),
            ),
            "exp_tilt" => PerturbationFamily::new(
                FamilyKind::ExprFamily(parse("exp(((-1)^j/(j + 1))*z)")),
                Certificates {
                    kappa: Certificate::Const(1),
                    xi: Certificate::Const(1),
                    ..Certificates::zero()
                },
                Envelope::ExpModulus,
                Envelope::ExpModulus,
            ),
            _ => return None,
        };
        Some(fam.expect("built-in certificates are sublinear"))
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    pub fn certificates(&self) -> &Certificates {
        &self.certs
    }

    pub fn a_envelope(&self) -> &Envelope {
        &self.a_env
    }

    pub fn b_envelope(&self) -> &Envelope {
        &self.b_env
    }

    pub fn is_unit(&self) -> bool {
        matches!(self.kind, FamilyKind::Unit)
    }

    /// True when `g_j` does not depend on `z`.
    pub fn is_constant_in_z(&self) -> bool {
        !matches!(self.kind, FamilyKind::ExprFamily(_))
    }

    pub fn describe(&self) -> String {
        let kind = match &self.kind {
            FamilyKind::Unit => "unit".to_string(),
            FamilyKind::ScalarSeq(p) => format!("scalar:{}", p.source()),
            FamilyKind::ExprFamily(p) => format!("expr:{}", p.source()),
        };
        format!(
            "{kind};kappa={};lambda={};xi={};eta={};A={};B={}",
            self.certs.kappa.describe(),
            self.certs.lambda.describe(),
            self.certs.xi.describe(),
            self.certs.eta.describe(),
            self.a_env.describe(),
            self.b_env.describe()
        )
    }

    pub fn g_jet(&self, j: u64, z: Complex64) -> Result<Jet1, ExprError> {
        match &self.kind {
            FamilyKind::Unit => Ok(Jet1::ONE),
            FamilyKind::ScalarSeq(p) => Ok(Jet1::constant(p.eval(Complex64::new(0.0, 0.0), j as i64)?)),
            FamilyKind::ExprFamily(p) => p.eval_jet(z, j as i64),
        }
    }

    pub fn g(&self, j: u64, z: Complex64) -> Result<Complex64, ExprError> {
        match &self.kind {
            FamilyKind::Unit => Ok(Complex64::new(1.0, 0.0)),
            FamilyKind::ScalarSeq(p) => p.eval(Complex64::new(0.0, 0.0), j as i64),
            FamilyKind::ExprFamily(p) => p.eval(z, j as i64),
        }
    }

    /// `log |g_k(z)|^2` for `k = 0..=n`.
    pub fn log_abs_sq_series(&self, z: Complex64, n: usize) -> Result<Vec<f64>, ExprError> {
        match &self.kind {
            FamilyKind::Unit => Ok(vec![0.0; n + 1]),
            FamilyKind::ScalarSeq(p) | FamilyKind::ExprFamily(p) => {
                (0..=n as i64).map(|k| p.log_abs_sq(z, k)).collect()
            }
        }
    }
}

/// Result of one hypothesis check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub hypothesis: String,
    pub pass: bool,
    pub witness: Witness,
}

/// The tightest (or violating) instance found for a hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub z: [f64; 2],
    pub j: Option<u64>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub window: Window,
    pub jmax: u64,
    /// First index of the tail used to estimate the liminf in (iii).
    pub tail_start: u64,
    pub checks: Vec<HypothesisCheck>,
    /// Smallest tail value of `A^xi (1+|f|)^eta |g_j|` and where it occurs.
    pub c_min: f64,
    pub c_min_at: [f64; 2],
    /// Witness for the compact-set constant: max of sup B, sup kappa_j/j, sup lambda_j/j.
    pub compact_constant: f64,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, hypothesis: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.hypothesis == hypothesis)
    }
}

/// Smallest admissible `|g_0|` on the grid.
pub const G0_FLOOR: f64 = 1e-12;

struct PointAudit {
    z: Complex64,
    g0_abs: f64,
    // worst (largest) log-ratio for (ii) and its index
    ii_excess: f64,
    ii_j: u64,
    ii_lhs: f64,
    ii_rhs: f64,
    // smallest tail log value for (iii)
    iii_log_min: f64,
    iii_j: u64,
    b_value: f64,
}

/// Audits hypotheses (i)-(iii) and the compact-set bound on the grid of `w` for
/// `0 <= j <= jmax`. Certificates are replaced by their running maxima and the
/// envelopes by `max(1, A)`, `max(1, B)`. Violations are reported, not raised;
/// evaluation errors (poles) are returned as errors.
pub fn audit_hypotheses(
    map: &HoloMap,
    fam: &PerturbationFamily,
    w: &Window,
    jmax: u64,
) -> Result<AuditReport, HoloError> {
    if jmax < 1 {
        return Err(HoloError::InvalidJmax);
    }
    let certs = fam.certificates();
    let kappa = certs.kappa.running_max(jmax)?;
    let lambda = certs.lambda.running_max(jmax)?;
    let xi = certs.xi.running_max(jmax)?;
    let eta = certs.eta.running_max(jmax)?;
    let tail_start = jmax.div_ceil(2);

    let points: Vec<PointAudit> = w
        .nodes()
        .into_par_iter()
        .map(|z| -> Result<PointAudit, ExprError> {
            let fnorm = map.norm(z)?;
            let log_1f = (1.0 + fnorm).ln();
            let b = fam.b_envelope().value(z)?.max(1.0);
            let log_a = fam.a_envelope().value(z)?.max(1.0).ln();
            let log_b = b.ln();
            let mut g0_abs = 0.0;
            let mut ii_excess = f64::NEG_INFINITY;
            let (mut ii_j, mut ii_lhs, mut ii_rhs) = (0, 0.0, 0.0);
            let mut iii_log_min = f64::INFINITY;
            let mut iii_j = tail_start;
            for j in 0..=jmax {
                let g_abs = fam.g(j, z)?.norm();
                if j == 0 {
                    g0_abs = g_abs;
                }
                let ju = j as usize;
                let log_g = g_abs.ln();
                let log_rhs = kappa[ju] * log_b + lambda[ju] * log_1f;
                let excess = log_g - log_rhs;
                if excess > ii_excess {
                    ii_excess = excess;
                    ii_j = j;
                    ii_lhs = g_abs;
                    ii_rhs = log_rhs.exp();
                }
                if j >= tail_start {
                    let v = xi[ju] * log_a + eta[ju] * log_1f + log_g;
                    if v < iii_log_min {
                        iii_log_min = v;
                        iii_j = j;
                    }
                }
            }
            Ok(PointAudit {
                z,
                g0_abs,
                ii_excess,
                ii_j,
                ii_lhs,
                ii_rhs,
                iii_log_min,
                iii_j,
                b_value: b,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    // Ordered reductions; ties keep the first grid point.
    let first_min = |key: &dyn Fn(&PointAudit) -> f64| {
        let mut best = &points[0];
        for p in &points[1..] {
            if key(p) < key(best) {
                best = p;
            }
        }
        best
    };
    let zz = |z: Complex64| [z.re, z.im];

    let p_i = first_min(&|p| p.g0_abs);
    let check_i = HypothesisCheck {
        hypothesis: "i".to_string(),
        pass: p_i.g0_abs > G0_FLOOR,
        witness: Witness {
            z: zz(p_i.z),
            j: Some(0),
            lhs: p_i.g0_abs,
            rhs: G0_FLOOR,
        },
    };

    let p_ii = first_min(&|p| -p.ii_excess);
    let check_ii = HypothesisCheck {
        hypothesis: "ii".to_string(),
        // relative slack for rounding in the log comparison
        pass: p_ii.ii_excess <= 1e-12 * (1.0 + p_ii.ii_rhs.ln().abs()),
        witness: Witness {
            z: zz(p_ii.z),
            j: Some(p_ii.ii_j),
            lhs: p_ii.ii_lhs,
            rhs: p_ii.ii_rhs,
        },
    };

    let p_iii = first_min(&|p| p.iii_log_min);
    let c_min = p_iii.iii_log_min.exp();
    let check_iii = HypothesisCheck {
        hypothesis: "iii".to_string(),
        pass: c_min > G0_FLOOR,
        witness: Witness {
            z: zz(p_iii.z),
            j: Some(p_iii.iii_j),
            lhs: c_min,
            rhs: G0_FLOOR,
        },
    };

    let p_b = first_min(&|p| -p.b_value);
    let mut ratio_max = 0.0f64;
    let mut ratio_j = 1;
    for j in 1..=jmax {
        let r = kappa[j as usize].max(lambda[j as usize]) / j as f64;
        if r > ratio_max {
            ratio_max = r;
            ratio_j = j;
        }
    }
    let compact_constant = p_b.b_value.max(ratio_max);
    let check_compact = HypothesisCheck {
        hypothesis: "compact_bound".to_string(),
        pass: compact_constant.is_finite(),
        witness: Witness {
            z: zz(p_b.z),
            j: Some(ratio_j),
            lhs: compact_constant,
            rhs: f64::MAX,
        },
    };

    Ok(AuditReport {
        window: *w,
        jmax,
        tail_start,
        checks: vec![check_i, check_ii, check_iii, check_compact],
        c_min,
        c_min_at: zz(p_iii.z),
        compact_constant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn map_rejects_empty_and_indexed_components() {
        assert!(matches!(HoloMap::parse::<&str>(&[]), Err(HoloError::EmptyMap)));
        assert!(matches!(HoloMap::parse(&["z", "z + j"]), Err(HoloError::IndexInMap(s)) if s == "z + j"));
        assert_eq!(HoloMap::parse(&["z", "exp(z)"]).unwrap().ell(), 2);
    }

    fn square_window(h: f64, n: usize) -> Window {
        Window::new(Rect::square(h), n, n).unwrap()
    }

    #[test]
    fn norm_examples() {
        let f = HoloMap::parse(&["z"]).unwrap();
        assert_eq!(f.norm(c(3.0, 4.0)).unwrap(), 5.0);
        let g = HoloMap::parse(&["z", "1"]).unwrap();
        assert_eq!(g.norm(c(0.0, 0.0)).unwrap(), 1.0);
        let h = HoloMap::parse(&["z", "z^2"]).unwrap();
        assert!((h.norm(c(1.0, 0.0)).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn norm_matches_component_sum() {
        let map = HoloMap::parse(&["z^2 - 1", "exp(z)/3", "(0.5+2i)*z"]).unwrap();
        for k in 0..20 {
            let z = c(0.1 * k as f64 - 1.0, 0.07 * k as f64);
            let direct: f64 = map
                .components()
                .iter()
                .map(|p| p.eval(z, 0).unwrap().norm_sqr())
                .sum();
            assert!((map.norm(z).unwrap().powi(2) - direct).abs() <= 1e-14 * direct);
        }
    }

    #[test]
    fn lagrange_identity_matches_direct_form() {
        let map = HoloMap::parse(&["z", "1", "z^2/2"]).unwrap();
        let p = map.point(c(0.3, -0.8)).unwrap();
        let direct = p.norm_sq * p.deriv_norm_sq - p.inner.norm_sqr();
        assert!((p.wedge_sq - direct).abs() < 1e-13);
        let single = HoloMap::parse(&["z^3"]).unwrap().point(c(1.2, 0.4)).unwrap();
        assert_eq!(single.wedge_sq, 0.0);
    }

    #[test]
    fn window_validation() {
        assert!(Window::new(Rect::new(1.0, 0.0, 0.0, 1.0), 4, 4).is_err());
        assert!(Window::new(Rect::square(1.0), 1, 4).is_err());
        let w = square_window(1.0, 3);
        assert_eq!(w.node(2, 2), c(1.0, 1.0));
        assert_eq!(w.node(1, 0), c(0.0, -1.0));
        assert_eq!(w.nodes().len(), 9);
    }

    #[test]
    fn ceil_log2_values() {
        let got: Vec<u32> = (1..=9).map(ceil_log2).collect();
        assert_eq!(got, vec![0, 1, 2, 2, 3, 3, 3, 3, 4]);
    }

    #[test]
    fn certificates_must_be_sublinear() {
        let linear = Certificate::Formula(ExprProgram::parse("j").unwrap());
        assert!(!linear.is_sublinear().unwrap());
        let slow = Certificate::Formula(ExprProgram::parse("3").unwrap());
        assert!(slow.is_sublinear().unwrap());
        let certs = Certificates {
            kappa: linear,
            ..Certificates::zero()
        };
        let fam = PerturbationFamily::new(
            FamilyKind::Unit,
            certs,
            Envelope::Const(1.0),
            Envelope::Const(1.0),
        );
        assert!(matches!(fam, Err(HoloError::InvalidFamily(_))));
    }

    #[test]
    fn builtin_families_pass_audit() {
        let map = HoloMap::parse(&["z"]).unwrap();
        for name in PerturbationFamily::BUILTIN_NAMES {
            let fam = PerturbationFamily::builtin(name).unwrap();
            let rep = audit_hypotheses(&map, &fam, &square_window(2.0, 17), 64).unwrap();
            assert!(rep.passed(), "{name}: {rep:?}");
        }
        assert!(PerturbationFamily::builtin("nope").is_none());
    }

    #[test]
    fn unit_family_passes() {
        let map = HoloMap::parse(&["z"]).unwrap();
        let rep = audit_hypotheses(&map, &PerturbationFamily::unit(), &square_window(2.0, 9), 20).unwrap();
        assert!(rep.passed());
        assert_eq!(rep.c_min, 1.0);
    }

    #[test]
    fn exp_tilt_family_passes() {
        let map = HoloMap::parse(&["z"]).unwrap();
        let fam = PerturbationFamily::new(
            FamilyKind::ExprFamily(ExprProgram::parse("exp(((-1)^j/(j+1))*z)").unwrap()),
            Certificates {
                kappa: Certificate::Const(1),
                lambda: Certificate::Zero,
                xi: Certificate::Const(1),
                eta: Certificate::Zero,
            },
            Envelope::ExpModulus,
            Envelope::ExpModulus,
        )
        .unwrap();
        let w = square_window(2.0, 21);
        let rep = audit_hypotheses(&map, &fam, &w, 40).unwrap();
        assert!(rep.passed(), "{rep:?}");
        // direct grid evaluation: min over nodes and tail indices
        let mut direct = f64::INFINITY;
        for z in w.nodes() {
            for j in rep.tail_start..=40 {
                let g = fam.g(j, z).unwrap().norm();
                direct = direct.min(z.norm().exp() * g);
            }
        }
        assert!((rep.c_min - direct).abs() <= 1e-12 * direct);
        assert!(rep.c_min >= (-2.0 * 2f64.sqrt()).exp());
    }

    #[test]
    fn undeclared_growth_fails_ii_at_j1() {
        let map = HoloMap::parse(&["z"]).unwrap();
        let fam = PerturbationFamily::new(
            FamilyKind::ScalarSeq(ExprProgram::parse("j+1").unwrap()),
            Certificates::zero(),
            Envelope::Const(1.0),
            Envelope::Const(1.0),
        )
        .unwrap();
        let rep = audit_hypotheses(&map, &fam, &square_window(1.0, 5), 1).unwrap();
        let ii = rep.check("ii").unwrap();
        assert!(!ii.pass);
        assert_eq!(ii.witness.j, Some(1));
        assert_eq!(ii.witness.lhs, 2.0);
        assert_eq!(ii.witness.rhs, 1.0);
    }

    #[test]
    fn vanishing_g0_fails_i() {
        let map = HoloMap::parse(&["z"]).unwrap();
        let fam = PerturbationFamily::new(
            FamilyKind::ExprFamily(ExprProgram::parse("z + j").unwrap()),
            Certificates {
                kappa: Certificate::CeilLog2,
                lambda: Certificate::Const(1),
                xi: Certificate::Zero,
                eta: Certificate::Zero,
            },
            Envelope::Const(2.0),
            Envelope::Const(2.0),
        )
        .unwrap();
        let rep = audit_hypotheses(&map, &fam, &square_window(1.0, 5), 4).unwrap();
        assert!(!rep.check("i").unwrap().pass);
        assert_eq!(rep.check("i").unwrap().witness.z, [0.0, 0.0]);
    }

    #[test]
    fn audit_report_json_shape() {
        let map = HoloMap::parse(&["z"]).unwrap();
        let rep = audit_hypotheses(&map, &PerturbationFamily::unit(), &square_window(1.0, 3), 2).unwrap();
        let v = serde_json::to_value(&rep.checks[1]).unwrap();
        assert_eq!(v["hypothesis"], "ii");
        assert_eq!(v["pass"], true);
        assert!(v["witness"]["z"].is_array());
        assert!(v["witness"]["lhs"].is_number());
    }
}
