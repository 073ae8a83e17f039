use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::TheoryError;
use crate::holomap::Rect;

/// A real function with its gradient and Laplacian at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LapJet {
    pub v: f64,
    pub gx: f64,
    pub gy: f64,
    pub lap: f64,
}

impl LapJet {
    pub fn constant(v: f64) -> Self {
        LapJet { v, gx: 0.0, gy: 0.0, lap: 0.0 }
    }

    pub fn x(z: Complex64) -> Self {
        LapJet { v: z.re, gx: 1.0, gy: 0.0, lap: 0.0 }
    }

    pub fn y(z: Complex64) -> Self {
        LapJet { v: z.im, gx: 0.0, gy: 1.0, lap: 0.0 }
    }

    /// `|z - c|^2`; smooth everywhere, unlike the radius itself.
    pub fn radial_sq(z: Complex64, c: Complex64) -> Self {
        let d = z - c;
        LapJet {
            v: d.norm_sqr(),
            gx: 2.0 * d.re,
            gy: 2.0 * d.im,
            lap: 4.0,
        }
    }

    /// `a u + b`
    pub fn affine(self, a: f64, b: f64) -> Self {
        LapJet {
            v: a * self.v + b,
            gx: a * self.gx,
            gy: a * self.gy,
            lap: a * self.lap,
        }
    }

    /// `phi(u)` given `(phi, phi', phi'')` at `u`.
    pub fn compose(self, (p0, p1, p2): (f64, f64, f64)) -> Self {
        LapJet {
            v: p0,
            gx: p1 * self.gx,
            gy: p1 * self.gy,
            lap: p2 * (self.gx * self.gx + self.gy * self.gy) + p1 * self.lap,
        }
    }

    pub fn times(self, o: LapJet) -> Self {
        LapJet {
            v: self.v * o.v,
            gx: self.v * o.gx + o.v * self.gx,
            gy: self.v * o.gy + o.v * self.gy,
            lap: self.v * o.lap + o.v * self.lap + 2.0 * (self.gx * o.gx + self.gy * o.gy),
        }
    }
}

/// Order of the step at its end points: `S` is `C^STEP_ORDER` on the real line.
const STEP_ORDER: i32 = 6;

/// Polynomial step: 0 for `t <= 0`, 1 for `t >= 1`, with `S(t) + S(1 - t) = 1`.
/// Returns `(S, S', S'')`.
///
/// `S` is the regularized incomplete beta function `I_t(7, 7)`, so
/// `S' = t^6 (1 - t)^6 / B(7, 7)`. Its derivatives stay of moderate size, which keeps
/// grid quadratures of `Delta rho` accurate at modest resolutions.
pub fn smooth_step(t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let m = STEP_ORDER;
    let top = 2 * m + 1;
    let s1 = 1.0 - t;
    // binomial tail sum_{j > m} C(2m+1, j) t^j (1-t)^(2m+1-j)
    let mut binom = 1.0;
    let mut s = 0.0;
    for j in 0..=top {
        if j > m {
            s += binom * t.powi(j) * s1.powi(top - j);
        }
        binom = binom * f64::from(top - j) / f64::from(j + 1);
    }
    // 1/B(m+1, m+1) = (2m+1)! / (m!)^2
    let mut inv_beta = f64::from(top);
    for k in 1..=m {
        inv_beta *= f64::from(m + k) / f64::from(k);
    }
    let base = (t * s1).powi(m - 1);
    let d1 = inv_beta * base * t * s1;
    let d2 = inv_beta * f64::from(m) * base * (1.0 - 2.0 * t);
    (s, d1, d2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunctionKind {
    /// 1 on `|z - c| <= r_inner`, 0 outside `r_outer`.
    RadialBump {
        center: [f64; 2],
        r_inner: f64,
        r_outer: f64,
    },
    /// 1 on `r_core_in <= |z - c| <= r_core_out`, supported in
    /// `r_support_in <= |z - c| <= r_support_out`.
    Annulus {
        center: [f64; 2],
        r_support_in: f64,
        r_core_in: f64,
        r_core_out: f64,
        r_support_out: f64,
    },
    /// Product of one-dimensional plateaus: 1 on `core`, 0 outside `core` inflated by `margin`.
    TensorBump { core: Rect, margin: f64 },
    /// A radial bump times a smooth step in `x` that rises across
    /// `center.x - width/2 .. center.x + width/2` and is antisymmetric about `center.x`.
    HalfPlaneBump {
        center: [f64; 2],
        r_inner: f64,
        r_outer: f64,
        width: f64,
    },
}

/// Smooth compactly supported test function with closed-form Laplacian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub id: String,
    #[serde(flatten)]
    pub kind: TestFunctionKind,
}

fn c2(p: [f64; 2]) -> Complex64 {
    Complex64::new(p[0], p[1])
}

/// Smooth plateau in one variable: 1 on `[lo, hi]`, 0 outside `[lo - m, hi + m]`.
fn plateau(u: LapJet, lo: f64, hi: f64, m: f64) -> LapJet {
    rise(u, lo - m, lo).times(rise(u, hi, hi + m).affine(-1.0, 1.0))
}

/// `S((s - a)/(b - a))` as a jet in `s`.
fn rise(s: LapJet, a: f64, b: f64) -> LapJet {
    let k = 1.0 / (b - a);
    s.affine(k, -a * k).compose(smooth_step((s.v - a) * k))
}

impl TestFunction {
    pub fn new(id: impl Into<String>, kind: TestFunctionKind) -> Result<Self, TheoryError> {
        let bad = |m: &str| Err(TheoryError::InvalidTestFunction(m.to_string()));
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match &kind {
            TestFunctionKind::RadialBump { center, r_inner, r_outer } => {
                if !finite(&[center[0], center[1], *r_inner, *r_outer]) || !(0.0 <= *r_inner && r_inner < r_outer) {
                    return bad("radial bump needs 0 <= r_inner < r_outer");
                }
            }
            TestFunctionKind::Annulus {
                center,
                r_support_in,
                r_core_in,
                r_core_out,
                r_support_out,
            } => {
                if !finite(&[center[0], center[1], *r_support_in, *r_support_out])
                    || !(0.0 <= *r_support_in
                        && r_support_in < r_core_in
                        && r_core_in <= r_core_out
                        && r_core_out < r_support_out)
                {
                    return bad("annulus needs 0 <= r_support_in < r_core_in <= r_core_out < r_support_out");
                }
            }
            TestFunctionKind::TensorBump { core, margin } => {
                if !(core.x0 <= core.x1 && core.y0 <= core.y1 && *margin > 0.0 && margin.is_finite()) {
                    return bad("tensor bump needs an ordered core and a positive margin");
                }
            }
            TestFunctionKind::HalfPlaneBump {
                center,
                r_inner,
                r_outer,
                width,
            } => {
                if !finite(&[center[0], center[1], *r_inner, *r_outer])
                    || !(0.0 <= *r_inner && r_inner < r_outer && *width > 0.0)
                {
                    return bad("half-plane bump needs 0 <= r_inner < r_outer and width > 0");
                }
            }
        }
        Ok(TestFunction { id: id.into(), kind })
    }

    pub fn radial_bump(id: &str, center: Complex64, r_inner: f64, r_outer: f64) -> Result<Self, TheoryError> {
        TestFunction::new(
            id,
            TestFunctionKind::RadialBump {
                center: [center.re, center.im],
                r_inner,
                r_outer,
            },
        )
    }

    pub fn annulus(
        id: &str,
        center: Complex64,
        r_support_in: f64,
        r_core_in: f64,
        r_core_out: f64,
        r_support_out: f64,
    ) -> Result<Self, TheoryError> {
        TestFunction::new(
            id,
            TestFunctionKind::Annulus {
                center: [center.re, center.im],
                r_support_in,
                r_core_in,
                r_core_out,
                r_support_out,
            },
        )
    }

    pub fn tensor_bump(id: &str, core: Rect, margin: f64) -> Result<Self, TheoryError> {
        TestFunction::new(id, TestFunctionKind::TensorBump { core, margin })
    }

    pub fn half_plane_bump(
        id: &str,
        center: Complex64,
        r_inner: f64,
        r_outer: f64,
        width: f64,
    ) -> Result<Self, TheoryError> {
        TestFunction::new(
            id,
            TestFunctionKind::HalfPlaneBump {
                center: [center.re, center.im],
                r_inner,
                r_outer,
                width,
            },
        )
    }

    /// Ids accepted by [`TestFunction::builtin`].
    pub const BUILTIN_NAMES: [&'static str; 4] = ["annulus", "disk", "box", "half_plane"];

    /// The default test functions: an annulus around the unit circle, an off-centre
    /// disk straddling it, a rectangle cutting it, and the right half of a large disk.
    pub fn builtin(name: &str) -> Option<Self> {
        let c = Complex64::new;
        let rho = match name {
            "annulus" => TestFunction::annulus("annulus", c(0.0, 0.0), 0.25, 0.5, 1.5, 1.75),
            "disk" => TestFunction::radial_bump("disk", c(0.6, 0.3), 0.3, 0.7),
            "box" => TestFunction::tensor_bump("box", Rect::new(-0.5, 0.4, -1.2, -0.3), 0.3),
            "half_plane" => TestFunction::half_plane_bump("half_plane", c(0.0, 0.0), 1.3, 1.8, 0.6),
            _ => return None,
        };
        Some(rho.expect("built-in parameters are valid"))
    }

    /// The three built-ins used for pairing tables; `half_plane` is kept for the
    /// symmetry check.
    pub fn builtin_set() -> Vec<Self> {
        ["annulus", "disk", "box"]
            .iter()
            .map(|n| TestFunction::builtin(n).expect("known name"))
            .collect()
    }

    /// `rho`, its gradient and its Laplacian at `z`.
    pub fn jet(&self, z: Complex64) -> LapJet {
        match &self.kind {
            TestFunctionKind::RadialBump { center, r_inner, r_outer } => {
                let s = LapJet::radial_sq(z, c2(*center));
                let (a, b) = (r_outer * r_outer, r_inner * r_inner);
                if s.v >= a {
                    return LapJet::constant(0.0);
                }
                // 1 - S((s - b)/(a - b))
                rise(s, b, a).affine(-1.0, 1.0)
            }
            TestFunctionKind::Annulus {
                center,
                r_support_in,
                r_core_in,
                r_core_out,
                r_support_out,
            } => {
                let s = LapJet::radial_sq(z, c2(*center));
                let (a, b, c, d) = (
                    r_support_in * r_support_in,
                    r_core_in * r_core_in,
                    r_core_out * r_core_out,
                    r_support_out * r_support_out,
                );
                if s.v <= a || s.v >= d {
                    return LapJet::constant(0.0);
                }
                rise(s, a, b).times(rise(s, c, d).affine(-1.0, 1.0))
            }
            TestFunctionKind::TensorBump { core, margin } => {
                let px = plateau(LapJet::x(z), core.x0, core.x1, *margin);
                let py = plateau(LapJet::y(z), core.y0, core.y1, *margin);
                px.times(py)
            }
            TestFunctionKind::HalfPlaneBump {
                center,
                r_inner,
                r_outer,
                width,
            } => {
                let s = LapJet::radial_sq(z, c2(*center));
                let (a, b) = (r_outer * r_outer, r_inner * r_inner);
                if s.v >= a {
                    return LapJet::constant(0.0);
                }
                let radial = rise(s, b, a).affine(-1.0, 1.0);
                let x = LapJet::x(z);
                let step = rise(x, center[0] - 0.5 * width, center[0] + 0.5 * width);
                radial.times(step)
            }
        }
    }

    pub fn value(&self, z: Complex64) -> f64 {
        self.jet(z).v
    }

    pub fn laplacian(&self, z: Complex64) -> f64 {
        self.jet(z).lap
    }

    /// Closed rectangle containing the support.
    pub fn support(&self) -> Rect {
        match &self.kind {
            TestFunctionKind::RadialBump { center, r_outer, .. }
            | TestFunctionKind::HalfPlaneBump { center, r_outer, .. } => Rect::new(
                center[0] - r_outer,
                center[0] + r_outer,
                center[1] - r_outer,
                center[1] + r_outer,
            ),
            TestFunctionKind::Annulus {
                center, r_support_out, ..
            } => Rect::new(
                center[0] - r_support_out,
                center[0] + r_support_out,
                center[1] - r_support_out,
                center[1] + r_support_out,
            ),
            TestFunctionKind::TensorBump { core, margin } => core.inflate(*margin),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn five_point(rho: &TestFunction, z: Complex64, h: f64) -> f64 {
        let f = |dz: Complex64| rho.value(z + dz);
        (f(Complex64::new(h, 0.0)) + f(Complex64::new(-h, 0.0)) + f(Complex64::new(0.0, h)) + f(Complex64::new(0.0, -h))
            - 4.0 * f(Complex64::new(0.0, 0.0)))
            / (h * h)
    }

    fn all_kinds() -> Vec<TestFunction> {
        vec![
            TestFunction::radial_bump("disk", Complex64::new(0.6, 0.3), 0.3, 0.7).unwrap(),
            TestFunction::annulus("ring", Complex64::new(0.0, 0.0), 0.25, 0.5, 1.5, 1.75).unwrap(),
            TestFunction::tensor_bump("box", Rect::new(-0.5, 0.4, -0.2, 0.6), 0.3).unwrap(),
            TestFunction::half_plane_bump("half", Complex64::new(0.0, 0.0), 1.3, 1.8, 0.6).unwrap(),
        ]
    }

    #[test]
    fn smooth_step_shape() {
        assert_eq!(smooth_step(-1.0), (0.0, 0.0, 0.0));
        assert_eq!(smooth_step(1.5), (1.0, 0.0, 0.0));
        let (s, d1, d2) = smooth_step(0.5);
        assert!((s - 0.5).abs() < 1e-15);
        assert!(d1 > 0.0);
        assert!(d2.abs() < 1e-12);
        for k in 1..100 {
            let t = k as f64 / 100.0;
            assert!((smooth_step(t).0 + smooth_step(1.0 - t).0 - 1.0).abs() < 1e-14);
            let h = 1e-6;
            let fd = (smooth_step(t + h).0 - smooth_step(t - h).0) / (2.0 * h);
            assert!((fd - smooth_step(t).1).abs() < 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn laplacian_matches_five_point_stencil() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for rho in all_kinds() {
            let sup = rho.support();
            for _ in 0..400 {
                let z = Complex64::new(rng.random_range(sup.x0..sup.x1), rng.random_range(sup.y0..sup.y1));
                let lap = rho.laplacian(z);
                // Richardson on the stencil cancels the O(h^2) term
                let fd = (4.0 * five_point(&rho, z, 5e-5) - five_point(&rho, z, 1e-4)) / 3.0;
                assert!((lap - fd).abs() < 1e-5 * (1.0 + lap.abs()), "{} at {z}: {lap} vs {fd}", rho.id);
            }
        }
    }

    #[test]
    fn plateaus_and_support() {
        for rho in all_kinds() {
            let sup = rho.support();
            for z in sup.inflate(0.01).corners() {
                assert_eq!(rho.value(z), 0.0);
            }
        }
        let ring = &all_kinds()[1];
        assert_eq!(ring.value(Complex64::new(1.0, 0.0)), 1.0);
        assert_eq!(ring.value(Complex64::new(0.1, 0.0)), 0.0);
        let half = &all_kinds()[3];
        assert!((half.value(Complex64::new(0.0, 1.0)) - 0.5).abs() < 1e-15);
        assert_eq!(half.value(Complex64::new(0.5, 0.0)), 1.0);
        assert_eq!(half.value(Complex64::new(-0.5, 0.0)), 0.0);
    }

    #[test]
    fn values_stay_in_unit_interval() {
        for rho in all_kinds() {
            let sup = rho.support();
            for i in 0..60 {
                for j in 0..60 {
                    let z = Complex64::new(
                        sup.x0 + sup.width() * i as f64 / 59.0,
                        sup.y0 + sup.height() * j as f64 / 59.0,
                    );
                    let v = rho.value(z);
                    assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(TestFunction::radial_bump("x", Complex64::new(0.0, 0.0), 1.0, 0.5).is_err());
        assert!(TestFunction::annulus("x", Complex64::new(0.0, 0.0), 0.5, 0.4, 1.0, 2.0).is_err());
        assert!(TestFunction::tensor_bump("x", Rect::square(1.0), 0.0).is_err());
    }
}
